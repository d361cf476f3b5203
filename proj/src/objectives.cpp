#include "uc2i/objectives.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "uc2i/error.hpp"

namespace uc2i {

namespace {

constexpr double kProbFloor = 1e-12;

std::size_t row_of(Side side, std::size_t num_users, Index member) {
  return side == Side::kUser ? member : num_users + member;
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Row-wise log-sum-exp; replaces logits by softmax probabilities.
Vector log_softmax_inplace(Matrix& logits) {
  Vector lse(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    const double s = row.sum();
    row /= s;
    lse(r) = mx + std::log(s);
  }
  return lse;
}

// Gathers rows, normalizes them and records the norms.
void unit_rows(const Matrix& src, const std::vector<std::size_t>& rows, Matrix& unit,
               Vector& norms) {
  unit.resize(static_cast<Eigen::Index>(rows.size()), src.cols());
  norms.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const auto v = src.row(static_cast<Eigen::Index>(rows[k]));
    norms(r) = v.norm();
    if (norms(r) > 0) {
      unit.row(r) = v / norms(r);
    } else {
      unit.row(r).setZero();
    }
  }
}

// d/dx of x/|x| applied to an upstream gradient.
RowVector unit_backward(const RowVector& unit, double norm, const RowVector& upstream) {
  if (norm <= 0) return RowVector::Zero(unit.size());
  return (upstream - unit * unit.dot(upstream)) / norm;
}

}  // namespace

std::vector<Edge> Batch::positive_pairs() const {
  std::vector<Edge> pairs;
  pairs.reserve(triples.size());
  for (const auto& t : triples) pairs.emplace_back(t.user, t.pos);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

Batch make_batch(std::vector<Triple> triples) {
  Batch batch;
  batch.triples = std::move(triples);
  for (const auto& t : batch.triples) {
    batch.users.push_back(t.user);
    batch.items.push_back(t.pos);
    batch.items.push_back(t.neg);
  }
  for (auto* v : {&batch.users, &batch.items}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return batch;
}

GradBuffer::GradBuffer(std::size_t rows, std::size_t dim)
    : values_(Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim))),
      present_(rows, 0) {}

void GradBuffer::add_row(std::size_t row, const RowVector& grad) {
  if (row >= capacity()) throw BoundsError("GradBuffer row " + std::to_string(row) + " out of range");
  if (static_cast<std::size_t>(grad.size()) != dim()) throw ShapeError("GradBuffer row width mismatch");
  values_.row(static_cast<Eigen::Index>(row)) += grad;
  if (!present_[row]) {
    present_[row] = 1;
    ++count_;
  }
}

void GradBuffer::add_dense(const Matrix& grad) {
  if (grad.rows() != values_.rows() || grad.cols() != values_.cols()) {
    throw ShapeError("GradBuffer dense gradient shape mismatch");
  }
  for (Eigen::Index r = 0; r < grad.rows(); ++r) {
    if ((grad.row(r).array() != 0.0).any()) add_row(static_cast<std::size_t>(r), grad.row(r));
  }
}

std::vector<std::size_t> GradBuffer::rows() const {
  std::vector<std::size_t> out;
  out.reserve(count_);
  for (std::size_t r = 0; r < present_.size(); ++r) {
    if (present_[r]) out.push_back(r);
  }
  return out;
}

double bpr_loss(const ForwardTrace& trace, const Batch& batch, LayerGrads* grads, double weight) {
  const Matrix& z = trace.readout;
  const auto items = trace.num_items();
  double loss = 0.0;
  for (const auto& t : batch.triples) {
    if (t.user >= trace.num_users || t.pos >= items || t.neg >= items) {
      throw BoundsError("bpr_loss: triple index out of range");
    }
    const auto ru = static_cast<Eigen::Index>(t.user);
    const auto ri = static_cast<Eigen::Index>(trace.num_users + t.pos);
    const auto rj = static_cast<Eigen::Index>(trace.num_users + t.neg);
    const double x = z.row(ru).dot(z.row(ri)) - z.row(ru).dot(z.row(rj));
    loss += softplus(-x);
    if (grads) {
      const double dx = -weight * sigmoid(-x);
      Matrix& g = grads->readout;
      g.row(ru) += dx * (z.row(ri) - z.row(rj));
      g.row(ri) += dx * z.row(ru);
      g.row(rj) -= dx * z.row(ru);
    }
  }
  return loss;
}

double ucl_loss(const EmbeddingTable& base, const std::vector<Index>& members,
                const std::vector<std::size_t>& labels, const Assignment& assignment,
                const TargetSet& targets, double tau, Side side, Matrix* base_grad,
                double weight) {
  if (!(tau > 0)) throw ConfigError("ucl_loss: tau must be > 0");
  if (members.empty()) return 0.0;
  const auto d = static_cast<Eigen::Index>(base.dim());
  if (targets.targets.cols() != d) throw ShapeError("ucl_loss: target dimension mismatch");

  const auto b = static_cast<Eigen::Index>(members.size());
  Matrix z(b, d);
  std::vector<std::size_t> assigned(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    const Index m = members[k];
    if (m >= labels.size()) throw BoundsError("ucl_loss: member without a cluster label");
    const std::size_t cluster = labels[m];
    if (cluster >= assignment.perm.size()) throw BoundsError("ucl_loss: label without a target");
    assigned[k] = assignment.perm[cluster];
    z.row(static_cast<Eigen::Index>(k)) =
        base.weights.row(static_cast<Eigen::Index>(row_of(side, base.num_users, m)));
  }

  Matrix probs = z * targets.targets.transpose() / tau;
  Vector picked(b);
  for (Eigen::Index k = 0; k < b; ++k) picked(k) = probs(k, static_cast<Eigen::Index>(assigned[k]));
  const Vector lse = log_softmax_inplace(probs);
  const double loss = (lse - picked).sum();

  if (base_grad) {
    for (Eigen::Index k = 0; k < b; ++k) probs(k, static_cast<Eigen::Index>(assigned[k])) -= 1.0;
    const Matrix dz = (weight / tau) * (probs * targets.targets);
    for (std::size_t k = 0; k < members.size(); ++k) {
      base_grad->row(static_cast<Eigen::Index>(row_of(side, base.num_users, members[k]))) +=
          dz.row(static_cast<Eigen::Index>(k));
    }
  }
  return loss;
}

CoClusterDistribution cocluster_distribution(const EmbeddingTable& base,
                                             const Centroids& user_centroids,
                                             const Centroids& item_centroids,
                                             const std::vector<Edge>& positive_pairs) {
  if (user_centroids.centers.cols() != static_cast<Eigen::Index>(base.dim()) ||
      item_centroids.centers.cols() != static_cast<Eigen::Index>(base.dim())) {
    throw ShapeError("cocluster_distribution: centroid dimension mismatch");
  }
  CoClusterDistribution dist;
  dist.num_users_total = base.num_users;

  std::vector<std::size_t> user_local(base.num_users, SIZE_MAX), item_local(base.num_items, SIZE_MAX);
  for (const auto& [u, i] : positive_pairs) {
    if (u >= base.num_users || i >= base.num_items) {
      throw BoundsError("cocluster_distribution: pair index out of range");
    }
    if (user_local[u] == SIZE_MAX) {
      user_local[u] = dist.users.size();
      dist.users.push_back(u);
    }
    if (item_local[i] == SIZE_MAX) {
      item_local[i] = dist.items.size();
      dist.items.push_back(i);
    }
    dist.pairs.emplace_back(user_local[u], item_local[i]);
  }

  std::vector<std::size_t> user_rows(dist.users.begin(), dist.users.end());
  std::vector<std::size_t> item_rows;
  for (Index i : dist.items) item_rows.push_back(base.num_users + i);
  unit_rows(base.weights, user_rows, dist.user_unit, dist.user_norm);
  unit_rows(base.weights, item_rows, dist.item_unit, dist.item_norm);

  auto unit_centers = [](const Matrix& c) {
    Matrix out = c;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double n = out.row(r).norm();
      if (n > 0) {
        out.row(r) /= n;
      } else {
        out.row(r).setZero();
      }
    }
    return out;
  };
  dist.user_centers = unit_centers(user_centroids.centers);
  dist.item_centers = unit_centers(item_centroids.centers);

  dist.user_raw = dist.user_unit * dist.user_centers.transpose();
  dist.item_raw = dist.item_unit * dist.item_centers.transpose();
  dist.user_member = dist.user_raw.cwiseMax(0.0);
  dist.item_member = dist.item_raw.cwiseMax(0.0);

  const auto np = static_cast<Eigen::Index>(dist.pairs.size());
  dist.pair_raw.resize(np);
  dist.pair_weight.resize(np);
  dist.weighted_items = Matrix::Zero(static_cast<Eigen::Index>(dist.users.size()),
                                     dist.item_member.cols());
  for (Eigen::Index p = 0; p < np; ++p) {
    const auto [lu, li] = dist.pairs[static_cast<std::size_t>(p)];
    const auto ru = static_cast<Eigen::Index>(lu);
    const auto ri = static_cast<Eigen::Index>(li);
    dist.pair_raw(p) = dist.user_unit.row(ru).dot(dist.item_unit.row(ri));
    dist.pair_weight(p) = std::max(0.0, dist.pair_raw(p));
    dist.weighted_items.row(ru) += dist.pair_weight(p) * dist.item_member.row(ri);
  }

  const Matrix unnormalized = dist.user_member.transpose() * dist.weighted_items;
  dist.mass = unnormalized.sum();
  const auto ck = user_centroids.centers.rows();
  const auto cl = item_centroids.centers.rows();
  if (dist.mass > 0) {
    dist.joint = unnormalized / dist.mass;
  } else {
    dist.degenerate = true;
    dist.joint = Matrix::Constant(ck, cl, 1.0 / static_cast<double>(ck * cl));
  }
  dist.user_marginal = dist.joint.rowwise().sum();
  dist.item_marginal = dist.joint.colwise().sum().transpose();
  return dist;
}

namespace {

// Zeroes entries below the floor and returns the marginals of what remains.
Matrix floored(const Matrix& joint, Vector& pk, Vector& pl) {
  Matrix p = (joint.array() < kProbFloor).select(0.0, joint);
  pk = p.rowwise().sum();
  pl = p.colwise().sum().transpose();
  return p;
}

}  // namespace

double mutual_information(const Matrix& joint) {
  Vector pk, pl;
  const Matrix p = floored(joint, pk, pl);
  double mi = 0.0;
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    for (Eigen::Index l = 0; l < p.cols(); ++l) {
      const double v = p(k, l);
      if (v > 0) mi += v * std::log(v / (pk(k) * pl(l)));
    }
  }
  return mi;
}

double mi_loss(const CoClusterDistribution& dist, Matrix* base_grad, double weight) {
  if (dist.degenerate) {
    spdlog::warn("mi_loss: co-cluster distribution is degenerate; MI set to 0");
    return 0.0;
  }
  Vector pk, pl;
  const Matrix p = floored(dist.joint, pk, pl);
  double mi = 0.0;
  Matrix g = Matrix::Zero(p.rows(), p.cols());  // dMI/dp on the active entries
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    for (Eigen::Index l = 0; l < p.cols(); ++l) {
      const double v = p(k, l);
      if (v <= 0) continue;
      const double log_ratio = std::log(v / (pk(k) * pl(l)));
      mi += v * log_ratio;
      g(k, l) = log_ratio - 1.0;
    }
  }
  if (!base_grad) return -mi;

  // loss = -MI; joint = J / sum(J).
  const double inner = (dist.joint.array() * g.array()).sum();
  const Matrix d_joint_raw = -(g.array() - inner).matrix() / dist.mass;

  const Matrix& m = dist.weighted_items;
  const Matrix d_user_member = m * d_joint_raw.transpose();
  const Matrix a = dist.user_member * d_joint_raw;
  Matrix d_item_member = Matrix::Zero(dist.item_member.rows(), dist.item_member.cols());
  Matrix d_user_unit = (d_user_member.array() * (dist.user_raw.array() > 0).cast<double>()).matrix() *
                       dist.user_centers;
  Matrix d_item_unit = Matrix::Zero(dist.item_unit.rows(), dist.item_unit.cols());

  for (std::size_t p_idx = 0; p_idx < dist.pairs.size(); ++p_idx) {
    const auto [lu, li] = dist.pairs[p_idx];
    const auto ru = static_cast<Eigen::Index>(lu);
    const auto ri = static_cast<Eigen::Index>(li);
    const auto pe = static_cast<Eigen::Index>(p_idx);
    d_item_member.row(ri) += dist.pair_weight(pe) * a.row(ru);
    if (dist.pair_raw(pe) > 0) {
      const double dw = a.row(ru).dot(dist.item_member.row(ri));
      d_user_unit.row(ru) += dw * dist.item_unit.row(ri);
      d_item_unit.row(ri) += dw * dist.user_unit.row(ru);
    }
  }
  d_item_unit += (d_item_member.array() * (dist.item_raw.array() > 0).cast<double>()).matrix() *
                 dist.item_centers;

  for (std::size_t k = 0; k < dist.users.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    base_grad->row(static_cast<Eigen::Index>(dist.users[k])) +=
        weight * unit_backward(dist.user_unit.row(r), dist.user_norm(r), d_user_unit.row(r));
  }
  for (std::size_t k = 0; k < dist.items.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    base_grad->row(static_cast<Eigen::Index>(dist.num_users_total + dist.items[k])) +=
        weight * unit_backward(dist.item_unit.row(r), dist.item_norm(r), d_item_unit.row(r));
  }
  return -mi;
}

double ins_loss(const ForwardTrace& trace, const std::vector<Index>& members,
                std::size_t contrast_layer, double tau, Side side, LayerGrads* grads,
                double weight) {
  if (contrast_layer < 1 || contrast_layer > trace.num_layers()) {
    throw ConfigError("ins_loss: contrast layer must lie in [1, L]");
  }
  if (!(tau > 0)) throw ConfigError("ins_loss: tau must be > 0");
  if (members.size() <= 1) {
    if (!members.empty()) spdlog::warn("ins_loss: single-member batch; loss set to 0");
    return 0.0;
  }
  std::vector<std::size_t> rows;
  rows.reserve(members.size());
  for (Index m : members) rows.push_back(row_of(side, trace.num_users, m));

  Matrix anchor, positive;
  Vector anchor_norm, positive_norm;
  unit_rows(trace.layers[contrast_layer], rows, anchor, anchor_norm);
  unit_rows(trace.layers[0], rows, positive, positive_norm);

  Matrix probs = anchor * positive.transpose() / tau;
  const Vector diag = probs.diagonal();
  const Vector lse = log_softmax_inplace(probs);
  const double loss = (lse - diag).sum();

  if (grads) {
    probs.diagonal().array() -= 1.0;
    const Matrix d_anchor = (probs * positive) / tau;
    const Matrix d_positive = (probs.transpose() * anchor) / tau;
    Matrix& g_k = grads->at_layer(contrast_layer);
    Matrix& g_0 = grads->at_layer(0);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      const auto node = static_cast<Eigen::Index>(rows[k]);
      g_k.row(node) += weight * unit_backward(anchor.row(r), anchor_norm(r), d_anchor.row(r));
      g_0.row(node) += weight * unit_backward(positive.row(r), positive_norm(r), d_positive.row(r));
    }
  }
  return loss;
}

double reg_loss(const EmbeddingTable& base, const Batch& batch, double lambda_reg,
                Matrix* base_grad) {
  double sq = 0.0;
  auto visit = [&](std::size_t row) {
    const auto r = static_cast<Eigen::Index>(row);
    sq += base.weights.row(r).squaredNorm();
    if (base_grad) base_grad->row(r) += 2.0 * lambda_reg * base.weights.row(r);
  };
  for (Index u : batch.users) visit(u);
  for (Index i : batch.items) visit(base.num_users + i);
  return lambda_reg * sq;
}

LossBreakdown total_loss(LossBreakdown parts, const Hyperparameters& hp, bool warmup) {
  const double l_ucl = warmup ? 0.0 : hp.lambda_ucl;
  const double l_mi = warmup ? 0.0 : hp.lambda_mi;
  parts.total = parts.rec + l_ucl * (parts.ucl_user + hp.alpha * parts.ucl_item) + l_mi * parts.mi +
                hp.lambda_ins * (parts.ins_user + hp.alpha * parts.ins_item) + parts.reg;
  return parts;
}

GradBuffer to_grad_buffer(const ForwardTrace& trace, const NormalizedAdjacency& adj,
                          const LayerGrads& grads) {
  const Matrix g = pullback(trace, adj, grads);
  GradBuffer buffer(static_cast<std::size_t>(g.rows()), static_cast<std::size_t>(g.cols()));
  buffer.add_dense(g);
  return buffer;
}

ObjectiveResult compute_objective(const EmbeddingTable& base, const ForwardTrace& trace,
                                  const NormalizedAdjacency& adj, const Batch& batch,
                                  const Hyperparameters& hp, bool warmup,
                                  const SideIntents* user_intents,
                                  const SideIntents* item_intents) {
  if (batch.triples.empty()) throw EmptyError("compute_objective: empty batch");
  LayerGrads grads(base.rows(), base.dim(), trace.num_layers());
  Matrix& base_grad = grads.at_layer(0);
  LossBreakdown parts;

  parts.rec = bpr_loss(trace, batch, &grads);

  const double l_ucl = warmup ? 0.0 : hp.lambda_ucl;
  const double l_mi = warmup ? 0.0 : hp.lambda_mi;
  if (l_ucl > 0 || l_mi > 0) {
    if (!user_intents || !item_intents) {
      throw ConfigError("compute_objective: intent losses are active but no clusters were given");
    }
  }
  if (l_ucl > 0) {
    if (!user_intents->targets || !item_intents->targets) {
      throw ConfigError("compute_objective: intent targets missing");
    }
    parts.ucl_user = ucl_loss(base, batch.users, user_intents->centroids.labels,
                              user_intents->assignment, *user_intents->targets, hp.tau,
                              Side::kUser, &base_grad, l_ucl);
    parts.ucl_item = ucl_loss(base, batch.items, item_intents->centroids.labels,
                              item_intents->assignment, *item_intents->targets, hp.tau,
                              Side::kItem, &base_grad, l_ucl * hp.alpha);
  }
  if (l_mi > 0) {
    const auto dist = cocluster_distribution(base, user_intents->centroids,
                                             item_intents->centroids, batch.positive_pairs());
    parts.mi = mi_loss(dist, &base_grad, l_mi);
  }
  if (hp.lambda_ins > 0) {
    parts.ins_user = ins_loss(trace, batch.users, hp.contrast_layer, hp.tau, Side::kUser, &grads,
                              hp.lambda_ins);
    parts.ins_item = ins_loss(trace, batch.items, hp.contrast_layer, hp.tau, Side::kItem, &grads,
                              hp.lambda_ins * hp.alpha);
  }
  if (hp.lambda_reg > 0) parts.reg = reg_loss(base, batch, hp.lambda_reg, &base_grad);

  ObjectiveResult result;
  result.losses = total_loss(parts, hp, warmup);
  result.grad = to_grad_buffer(trace, adj, grads);
  return result;
}

}  // namespace uc2i
