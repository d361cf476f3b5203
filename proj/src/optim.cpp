#include "uc2i/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uc2i/error.hpp"

namespace uc2i {

AdamState::AdamState(std::size_t rows, std::size_t dim)
    : m(Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim))),
      v(Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim))),
      steps(rows, 0) {}

void adam_step(AdamState& state, EmbeddingTable& emb, const GradBuffer& grads,
               const AdamOptions& options) {
  if (!(options.lr > 0)) throw ConfigError("adam: lr must be > 0");
  if (!(options.beta1 >= 0 && options.beta1 < 1) || !(options.beta2 >= 0 && options.beta2 < 1)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (grads.capacity() != emb.rows() || grads.dim() != emb.dim() ||
      state.m.rows() != emb.weights.rows() || state.m.cols() != emb.weights.cols()) {
    throw ShapeError("adam: gradient, state and embedding shapes differ");
  }
  const auto rows = grads.rows();
  for (std::size_t r : rows) {
    if (!grads.row(r).allFinite()) {
      throw NumericError("adam: non-finite gradient in row " + std::to_string(r));
    }
  }
  for (std::size_t r : rows) {
    const auto i = static_cast<Eigen::Index>(r);
    const auto t = static_cast<double>(++state.steps[r]);
    const auto g = grads.row(r);
    state.m.row(i) = options.beta1 * state.m.row(i) + (1.0 - options.beta1) * g;
    state.v.row(i) = options.beta2 * state.v.row(i) + (1.0 - options.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(options.beta1, t);
    const double c2 = 1.0 - std::pow(options.beta2, t);
    for (Eigen::Index j = 0; j < emb.weights.cols(); ++j) {
      const double m_hat = state.m(i, j) / c1;
      const double v_hat = state.v(i, j) / c2;
      emb.weights(i, j) -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

double finite_diff_check(const LossFn& loss, const EmbeddingTable& emb, const GradBuffer& analytic,
                         double h, const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> check = rows;
  if (check.empty()) {
    check.resize(emb.rows());
    std::iota(check.begin(), check.end(), 0);
  }
  EmbeddingTable probe = emb;
  double worst = 0.0;
  for (std::size_t r : check) {
    const auto i = static_cast<Eigen::Index>(r);
    for (Eigen::Index j = 0; j < probe.weights.cols(); ++j) {
      const double x = emb.weights(i, j);
      probe.weights(i, j) = x + h;
      const double up = loss(probe);
      probe.weights(i, j) = x - h;
      const double down = loss(probe);
      probe.weights(i, j) = x;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.contains(r) ? analytic.row(r)(j) : 0.0;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace uc2i
