#include "uc2i/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uc2i/error.hpp"
#include "uc2i/rng.hpp"

namespace uc2i {

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

// Exponential weights normalized per row; a random subset of cells is zeroed
// (never a whole row) so sparse supports get exercised too.
Matrix random_stochastic(Rng& rng, std::size_t rows, std::size_t cols, bool as_joint) {
  Matrix m(rows, cols);
  const double sparsity = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, 0.6);
  for (std::size_t r = 0; r < rows; ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      double w = -std::log(1.0 - rng.uniform());
      if (rng.uniform() < sparsity) w = 0.0;
      m(r, c) = w;
      row_sum += w;
    }
    if (row_sum == 0.0) m(r, rng.index(cols)) = 1.0;
  }
  if (as_joint) {
    m /= m.sum();
  } else {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).sum();
  }
  return m;
}

}  // namespace

double joint_mutual_information(const Matrix& joint) {
  const Vector row = joint.rowwise().sum();
  const Vector col = joint.colwise().sum().transpose();
  double mi = 0.0;
  for (Eigen::Index r = 0; r < joint.rows(); ++r) {
    for (Eigen::Index c = 0; c < joint.cols(); ++c) {
      const double p = joint(r, c);
      if (p > 0.0) mi += p * std::log(p / (row(r) * col(c)));
    }
  }
  return mi;
}

Matrix cluster_joint(const Matrix& joint, const Matrix& user_conditional,
                     const Matrix& item_conditional) {
  if (user_conditional.rows() != joint.rows() || item_conditional.rows() != joint.cols()) {
    throw ShapeError("cluster_joint: conditionals do not match the joint");
  }
  return user_conditional.transpose() * joint * item_conditional;
}

TheoremTrial evaluate_trial(Matrix joint, Matrix user_conditional, Matrix item_conditional) {
  TheoremTrial t;
  t.mi_pairs = joint_mutual_information(joint);
  t.mi_clusters = joint_mutual_information(cluster_joint(joint, user_conditional, item_conditional));
  t.joint = std::move(joint);
  t.user_conditional = std::move(user_conditional);
  t.item_conditional = std::move(item_conditional);
  return t;
}

nlohmann::json TheoremReport::to_json() const {
  nlohmann::json j = {{"trials", trials},
                      {"violations", violations},
                      {"min_slack", min_slack},
                      {"max_slack", max_slack},
                      {"identity_slack", identity_slack},
                      {"uniform_cluster_mi", uniform_cluster_mi},
                      {"passed", passed()}};
  j["counterexamples"] = nlohmann::json::array();
  for (const auto& t : counterexamples) {
    j["counterexamples"].push_back({{"joint", matrix_json(t.joint)},
                                    {"user_conditional", matrix_json(t.user_conditional)},
                                    {"item_conditional", matrix_json(t.item_conditional)},
                                    {"mi_pairs", t.mi_pairs},
                                    {"mi_clusters", t.mi_clusters}});
  }
  return j;
}

TheoremReport verify_theorem(std::size_t trials, std::size_t max_users, std::size_t max_items,
                             std::size_t max_clusters, std::uint64_t seed) {
  if (max_users < 2 || max_items < 2 || max_clusters < 2) {
    throw ConfigError("verify_theorem: sizes must be >= 2");
  }
  Rng rng(seed);
  TheoremReport report;
  report.trials = trials;
  report.min_slack = std::numeric_limits<double>::infinity();
  report.max_slack = -std::numeric_limits<double>::infinity();

  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t users = 2 + rng.index(max_users - 1);
    const std::size_t items = 2 + rng.index(max_items - 1);
    const std::size_t ck = 2 + rng.index(max_clusters - 1);
    const std::size_t cl = 2 + rng.index(max_clusters - 1);
    Matrix joint = random_stochastic(rng, users, items, true);
    Matrix pu = random_stochastic(rng, users, ck, false);
    Matrix pi = random_stochastic(rng, items, cl, false);
    auto trial = evaluate_trial(std::move(joint), std::move(pu), std::move(pi));
    const double slack = trial.slack();
    report.min_slack = std::min(report.min_slack, slack);
    report.max_slack = std::max(report.max_slack, slack);
    if (!(slack >= -kTheoremTolerance)) {
      ++report.violations;
      if (report.counterexamples.size() < 5) report.counterexamples.push_back(std::move(trial));
    }
  }
  if (trials == 0) report.min_slack = report.max_slack = 0.0;

  // Lossless clustering: one cluster per user and per item.
  {
    const std::size_t users = std::max<std::size_t>(2, std::min<std::size_t>(max_users, 5));
    const std::size_t items = std::max<std::size_t>(2, std::min<std::size_t>(max_items, 5));
    Matrix joint = random_stochastic(rng, users, items, true);
    const auto trial = evaluate_trial(joint, Matrix::Identity(users, users), Matrix::Identity(items, items));
    report.identity_slack = std::abs(trial.slack());
    const auto uniform = evaluate_trial(joint, Matrix::Constant(users, 3, 1.0 / 3.0),
                                        Matrix::Constant(items, 2, 0.5));
    report.uniform_cluster_mi = uniform.mi_clusters;
  }
  return report;
}

}  // namespace uc2i
