#include "uc2i/graph.hpp"

#include <algorithm>
#include <cmath>

#include "uc2i/error.hpp"
#include "uc2i/parallel.hpp"

namespace uc2i {

NormalizedAdjacency build_adjacency(const InteractionDataset& train) {
  if (train.empty()) throw EmptyError("cannot build adjacency from an empty training set");

  const std::size_t users = train.num_users();
  const std::size_t n = users + train.num_items();
  const auto user_deg = train.user_degrees();
  const auto item_deg = train.item_degrees();

  std::vector<std::vector<Index>> neighbors(n);
  for (std::size_t u = 0; u < users; ++u) {
    for (Index i : train.positives(static_cast<Index>(u))) {
      neighbors[u].push_back(static_cast<Index>(users + i));
      neighbors[users + i].push_back(static_cast<Index>(u));
    }
  }

  NormalizedAdjacency adj;
  adj.num_users_ = users;
  adj.row_offsets_.assign(n + 1, 0);
  adj.columns_.reserve(2 * train.num_edges());
  adj.weights_.reserve(2 * train.num_edges());
  auto degree = [&](std::size_t node) {
    return static_cast<double>(node < users ? user_deg[node] : item_deg[node - users]);
  };
  for (std::size_t r = 0; r < n; ++r) {
    auto& cols = neighbors[r];
    std::sort(cols.begin(), cols.end());
    for (Index c : cols) {
      adj.columns_.push_back(c);
      adj.weights_.push_back(1.0 / std::sqrt(degree(r) * degree(c)));
    }
    adj.row_offsets_[r + 1] = adj.columns_.size();
  }
  return adj;
}

double NormalizedAdjacency::weight(std::size_t r, std::size_t c) const {
  if (r >= size()) throw BoundsError("adjacency row out of range");
  const auto begin = columns_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r]);
  const auto end = columns_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r + 1]);
  const auto it = std::lower_bound(begin, end, static_cast<Index>(c));
  if (it == end || *it != c) return 0.0;
  return weights_[static_cast<std::size_t>(it - columns_.begin())];
}

Matrix multiply(const NormalizedAdjacency& adj, const Matrix& x) {
  if (static_cast<std::size_t>(x.rows()) != adj.size()) {
    throw ShapeError("multiply: matrix has " + std::to_string(x.rows()) + " rows, adjacency has " +
                     std::to_string(adj.size()) + " nodes");
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  const auto& offsets = adj.row_offsets();
  const auto& cols = adj.columns();
  const auto& w = adj.weights();
  parallel_for(adj.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      auto row = out.row(static_cast<Eigen::Index>(r));
      for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
        row.noalias() += w[k] * x.row(cols[k]);
      }
    }
  });
  return out;
}

}  // namespace uc2i
