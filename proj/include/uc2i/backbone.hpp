#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "uc2i/dataset.hpp"
#include "uc2i/graph.hpp"
#include "uc2i/rng.hpp"
#include "uc2i/types.hpp"

namespace uc2i {

struct Hyperparameters {
  std::size_t dim = 64;
  std::size_t layers = 3;
  double noise_rate = 2e-3;
  double tau = 0.1;
  double alpha = 1.0;
  double lambda_ucl = 1e-2;
  double lambda_mi = 1e-3;
  double lambda_ins = 1e-1;
  double lambda_reg = 1e-4;
  std::size_t user_clusters = 1000;
  std::size_t item_clusters = 1000;
  std::size_t contrast_layer = 1;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 2048;
  std::size_t epochs = 100;
  std::size_t warmup_epochs = 5;
  std::uint64_t seed = 42;

  // Throws ConfigError on the first violated constraint.
  void validate() const;
};

// Layer-0 embeddings: users in rows 0..U-1, items in rows U..U+I-1.
struct EmbeddingTable {
  Matrix weights;
  std::size_t num_users = 0;
  std::size_t num_items = 0;

  std::size_t rows() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t item_row(Index i) const { return num_users + i; }
};

// Xavier-uniform on [-sqrt(6/(2d)), sqrt(6/(2d))].
EmbeddingTable init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t dim,
                               std::uint64_t seed);

struct ForwardTrace {
  std::vector<Matrix> layers;  // Z^(0..L)
  std::vector<Matrix> noise;   // Delta^(0..L-1), zero when disabled
  Matrix readout;              // mean of layers
  std::size_t num_users = 0;
  double noise_rate = 0.0;

  std::size_t num_layers() const { return layers.empty() ? 0 : layers.size() - 1; }
  std::size_t num_items() const { return static_cast<std::size_t>(readout.rows()) - num_users; }
};

// Z^(l+1) = A (Z^(l) + Delta^(l)), Delta^(l) = rate * X (.) sign(Z^(l)) with
// X ~ U(0,1)^d per node and layer. One draw from rng seeds all noise of the
// call when noise is on; per-node streams are keyed so results do not depend
// on the thread count.
ForwardTrace forward(const EmbeddingTable& emb, const NormalizedAdjacency& adj, bool noise,
                     double noise_rate, std::size_t layers, Rng& rng);

// Noise-free forward; consumes no randomness.
ForwardTrace forward_clean(const EmbeddingTable& emb, const NormalizedAdjacency& adj,
                           std::size_t layers);

std::vector<double> score_pairs(const ForwardTrace& trace, const std::vector<Edge>& pairs);

// One row per requested user, one column per item.
Matrix score_all(const ForwardTrace& trace, const std::vector<Index>& users);

// Gradients of a scalar loss with respect to individual layers and/or the
// readout. Empty matrices stand for zero.
struct LayerGrads {
  std::vector<Matrix> layer;
  Matrix readout;

  LayerGrads() = default;
  LayerGrads(std::size_t rows, std::size_t dim, std::size_t num_layers);

  Matrix& at_layer(std::size_t l) { return layer.at(l); }
};

// Maps layer/readout gradients back to the base embeddings:
// sum_l A^l (g_l + g_readout / (L+1)). Noise is treated as a constant.
Matrix pullback(const ForwardTrace& trace, const NormalizedAdjacency& adj,
                const LayerGrads& grads);

}  // namespace uc2i
