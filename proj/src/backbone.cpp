#include "uc2i/backbone.hpp"

#include <cmath>
#include <string>

#include "uc2i/error.hpp"
#include "uc2i/parallel.hpp"

namespace uc2i {

void Hyperparameters::validate() const {
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (!(tau > 0)) throw ConfigError("tau must be > 0");
  if (!(noise_rate >= 0)) throw ConfigError("noise_rate must be >= 0");
  if (contrast_layer < 1 || contrast_layer > layers) {
    throw ConfigError("contrast_layer must lie in [1, layers]");
  }
  if (user_clusters < 2 || item_clusters < 2) throw ConfigError("cluster counts must be >= 2");
  for (double l : {lambda_ucl, lambda_mi, lambda_ins, lambda_reg, alpha}) {
    if (!(l >= 0)) throw ConfigError("loss weights must be >= 0");
  }
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

EmbeddingTable init_embeddings(std::size_t num_users, std::size_t num_items, std::size_t dim,
                               std::uint64_t seed) {
  if (num_users < 1 || num_items < 1) throw ConfigError("embedding table needs users and items");
  if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
  EmbeddingTable emb;
  emb.num_users = num_users;
  emb.num_items = num_items;
  emb.weights.resize(static_cast<Eigen::Index>(num_users + num_items),
                     static_cast<Eigen::Index>(dim));
  const double bound = std::sqrt(6.0 / (2.0 * static_cast<double>(dim)));
  Rng rng(seed);
  double* data = emb.weights.data();
  for (Eigen::Index k = 0; k < emb.weights.size(); ++k) data[k] = rng.uniform(-bound, bound);
  return emb;
}

namespace {

double sign(double x) { return (x > 0) - (x < 0); }

void check_finite(const Matrix& z, std::size_t layer) {
  if (!z.allFinite()) {
    throw NumericError("non-finite value in propagation at layer " + std::to_string(layer));
  }
}

ForwardTrace propagate(const EmbeddingTable& emb, const NormalizedAdjacency& adj,
                       std::size_t layers, bool noise, double rate, std::uint64_t stream) {
  if (emb.rows() != adj.size()) {
    throw ShapeError("embedding table has " + std::to_string(emb.rows()) +
                     " rows, adjacency has " + std::to_string(adj.size()) + " nodes");
  }
  ForwardTrace trace;
  trace.num_users = emb.num_users;
  trace.noise_rate = noise ? rate : 0.0;
  trace.layers.reserve(layers + 1);
  trace.noise.reserve(layers);
  trace.layers.push_back(emb.weights);
  check_finite(trace.layers[0], 0);

  const auto n = static_cast<Eigen::Index>(emb.rows());
  const auto d = static_cast<Eigen::Index>(emb.dim());
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& z = trace.layers[l];
    Matrix delta = Matrix::Zero(n, d);
    if (noise && rate > 0) {
      parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
          const std::uint64_t node_stream =
              splitmix64(stream ^ splitmix64(l * static_cast<std::uint64_t>(n) + m + 1));
          for (Eigen::Index j = 0; j < d; ++j) {
            const auto r = static_cast<Eigen::Index>(m);
            delta(r, j) = rate * keyed_uniform(node_stream, static_cast<std::uint64_t>(j)) *
                          sign(z(r, j));
          }
        }
      });
    }
    Matrix next = multiply(adj, z + delta);
    check_finite(next, l + 1);
    trace.noise.push_back(std::move(delta));
    trace.layers.push_back(std::move(next));
  }

  trace.readout = trace.layers[0];
  for (std::size_t l = 1; l <= layers; ++l) trace.readout += trace.layers[l];
  trace.readout /= static_cast<double>(layers + 1);
  return trace;
}

double row_dot(const Matrix& m, Eigen::Index a, Eigen::Index b) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(a, j) * m(b, j);
  return s;
}

}  // namespace

ForwardTrace forward(const EmbeddingTable& emb, const NormalizedAdjacency& adj, bool noise,
                     double noise_rate, std::size_t layers, Rng& rng) {
  const std::uint64_t stream = noise ? rng.next() : 0;
  return propagate(emb, adj, layers, noise, noise_rate, stream);
}

ForwardTrace forward_clean(const EmbeddingTable& emb, const NormalizedAdjacency& adj,
                           std::size_t layers) {
  return propagate(emb, adj, layers, false, 0.0, 0);
}

std::vector<double> score_pairs(const ForwardTrace& trace, const std::vector<Edge>& pairs) {
  const std::size_t items = trace.num_items();
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [u, i] : pairs) {
    if (u >= trace.num_users || i >= items) {
      throw BoundsError("score_pairs: pair (" + std::to_string(u) + ", " + std::to_string(i) +
                        ") out of range");
    }
    out.push_back(row_dot(trace.readout, u, static_cast<Eigen::Index>(trace.num_users + i)));
  }
  return out;
}

Matrix score_all(const ForwardTrace& trace, const std::vector<Index>& users) {
  const std::size_t items = trace.num_items();
  for (Index u : users) {
    if (u >= trace.num_users) throw BoundsError("score_all: user " + std::to_string(u) + " out of range");
  }
  Matrix scores(static_cast<Eigen::Index>(users.size()), static_cast<Eigen::Index>(items));
  parallel_for(users.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t i = 0; i < items; ++i) {
        scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
            row_dot(trace.readout, users[r], static_cast<Eigen::Index>(trace.num_users + i));
      }
    }
  });
  return scores;
}

LayerGrads::LayerGrads(std::size_t rows, std::size_t dim, std::size_t num_layers) {
  const auto r = static_cast<Eigen::Index>(rows);
  const auto d = static_cast<Eigen::Index>(dim);
  layer.assign(num_layers + 1, Matrix::Zero(r, d));
  readout = Matrix::Zero(r, d);
}

Matrix pullback(const ForwardTrace& trace, const NormalizedAdjacency& adj,
                const LayerGrads& grads) {
  const std::size_t L = trace.num_layers();
  const auto& base = trace.layers.at(0);
  auto check = [&](const Matrix& g) {
    if (g.size() != 0 && (g.rows() != base.rows() || g.cols() != base.cols())) {
      throw ShapeError("pullback: gradient shape does not match embeddings");
    }
  };
  if (grads.layer.size() > L + 1) throw ShapeError("pullback: more layer gradients than layers");
  for (const auto& g : grads.layer) check(g);
  check(grads.readout);

  // Horner form: acc = G_L; acc = A acc + G_l for l = L-1..0.
  auto effective = [&](std::size_t l) {
    Matrix g = Matrix::Zero(base.rows(), base.cols());
    if (l < grads.layer.size() && grads.layer[l].size() != 0) g += grads.layer[l];
    if (grads.readout.size() != 0) g += grads.readout / static_cast<double>(L + 1);
    return g;
  };
  Matrix acc = effective(L);
  for (std::size_t l = L; l-- > 0;) acc = multiply(adj, acc) + effective(l);
  return acc;
}

}  // namespace uc2i
