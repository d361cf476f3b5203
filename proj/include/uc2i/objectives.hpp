#pragma once

#include <optional>
#include <vector>

#include "uc2i/backbone.hpp"
#include "uc2i/graph.hpp"
#include "uc2i/intents.hpp"
#include "uc2i/types.hpp"

namespace uc2i {

enum class Side { kUser, kItem };

struct Triple {
  Index user;
  Index pos;
  Index neg;
};

struct Batch {
  std::vector<Triple> triples;
  std::vector<Index> users;  // unique, ascending
  std::vector<Index> items;  // unique positives and negatives, ascending

  // Unique (user, positive) pairs, ascending.
  std::vector<Edge> positive_pairs() const;
  const std::vector<Index>& members(Side side) const { return side == Side::kUser ? users : items; }
};

Batch make_batch(std::vector<Triple> triples);

// Row-indexed gradient accumulator over the embedding table. Rows never
// written to are absent.
class GradBuffer {
 public:
  GradBuffer() = default;
  GradBuffer(std::size_t rows, std::size_t dim);

  std::size_t capacity() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values_.cols()); }

  void add_row(std::size_t row, const RowVector& grad);
  // Adds every row of a full-table gradient whose entries are not all zero.
  void add_dense(const Matrix& grad);

  bool contains(std::size_t row) const { return present_.at(row) != 0; }
  std::vector<std::size_t> rows() const;  // ascending
  std::size_t size() const { return count_; }
  auto row(std::size_t r) const { return values_.row(static_cast<Eigen::Index>(r)); }
  const Matrix& dense() const { return values_; }

 private:
  Matrix values_;
  std::vector<char> present_;
  std::size_t count_ = 0;
};

struct LossBreakdown {
  double rec = 0.0;
  double ucl_user = 0.0;
  double ucl_item = 0.0;
  double mi = 0.0;
  double ins_user = 0.0;
  double ins_item = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

// Per-side state refreshed once per epoch: clusters of the base embeddings
// and the cluster -> target matching.
struct SideIntents {
  Centroids centroids;
  Assignment assignment;
  const TargetSet* targets = nullptr;
};

// Each loss below returns its unweighted value. When grads is non-null,
// weight * d(loss) is added to it: readout/layer gradients for losses on the
// propagated representations, layer-0 gradients for losses on the base table.

// Sum over triples of -log sigmoid(y_ui - y_uj).
double bpr_loss(const ForwardTrace& trace, const Batch& batch, LayerGrads* grads,
                double weight = 1.0);

// Sum over members of -log softmax over all targets, at the target assigned
// to the member's cluster. Targets are constants.
double ucl_loss(const EmbeddingTable& base, const std::vector<Index>& members,
                const std::vector<std::size_t>& labels, const Assignment& assignment,
                const TargetSet& targets, double tau, Side side, Matrix* base_grad,
                double weight = 1.0);

struct CoClusterDistribution {
  Matrix joint;              // C_K x C_L, sums to 1
  Vector user_marginal;      // p(k)
  Vector item_marginal;      // p(l)
  double mass = 0.0;         // sum of the unnormalized joint
  bool degenerate = false;   // mass was zero; joint set to uniform

  // Retained for the backward pass.
  std::vector<Index> users, items;   // unique members touched by the pairs
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // local (user, item)
  Matrix user_unit, item_unit;       // L2-normalized base rows
  Vector user_norm, item_norm;
  Matrix user_centers, item_centers; // L2-normalized centroids
  Matrix user_raw, item_raw;         // unclamped cosine memberships
  Matrix user_member, item_member;   // clamped memberships p(k|u), p(l|i)
  Vector pair_raw, pair_weight;      // unclamped / clamped pair cosines
  Matrix weighted_items;             // per user: sum_i w(u,i) p(.|i)
  std::size_t num_users_total = 0;
};

// p(k,l) proportional to sum over pairs of p(k|u) p(l|i) w(u,i) with clamped
// cosine memberships and pair weights.
CoClusterDistribution cocluster_distribution(const EmbeddingTable& base,
                                             const Centroids& user_centroids,
                                             const Centroids& item_centroids,
                                             const std::vector<Edge>& positive_pairs);

// Mutual information in nats; entries below 1e-12 count as zero.
double mutual_information(const Matrix& joint);

// Returns -MI(K;L) and adds weight * gradient to base rows.
double mi_loss(const CoClusterDistribution& dist, Matrix* base_grad, double weight = 1.0);

// Cross-layer InfoNCE between normalized layer-k and layer-0 rows, with the
// other batch members of the same side (and the member itself) in the
// denominator.
double ins_loss(const ForwardTrace& trace, const std::vector<Index>& members,
                std::size_t contrast_layer, double tau, Side side, LayerGrads* grads,
                double weight = 1.0);

// lambda_reg * sum of squared norms of the base rows touched by the batch.
double reg_loss(const EmbeddingTable& base, const Batch& batch, double lambda_reg,
                Matrix* base_grad);

// Fills parts.total from the weighted parts. In warm-up the intent terms are
// dropped.
LossBreakdown total_loss(LossBreakdown parts, const Hyperparameters& hp, bool warmup);

struct ObjectiveResult {
  LossBreakdown losses;
  GradBuffer grad;
};

// Full objective on one batch. Terms with zero weight (or disabled by
// warm-up) are not evaluated and report 0. Intent states are required when
// their terms are active.
ObjectiveResult compute_objective(const EmbeddingTable& base, const ForwardTrace& trace,
                                  const NormalizedAdjacency& adj, const Batch& batch,
                                  const Hyperparameters& hp, bool warmup,
                                  const SideIntents* user_intents,
                                  const SideIntents* item_intents);

// Pulls layer gradients back to the base table and packs them.
GradBuffer to_grad_buffer(const ForwardTrace& trace, const NormalizedAdjacency& adj,
                          const LayerGrads& grads);

}  // namespace uc2i
