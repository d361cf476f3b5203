#pragma once

#include <cstddef>
#include <vector>

#include "uc2i/dataset.hpp"
#include "uc2i/types.hpp"

namespace uc2i {

// Symmetric D^-1/2 A D^-1/2 over users (rows 0..U-1) and items (rows U..n-1),
// stored as CSR with both directions of every edge. No self loops.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  std::size_t size() const { return row_offsets_.empty() ? 0 : row_offsets_.size() - 1; }
  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return size() - num_users_; }
  std::size_t nnz() const { return columns_.size(); }

  const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
  const std::vector<Index>& columns() const { return columns_; }
  const std::vector<double>& weights() const { return weights_; }

  // Entry (r, c), or 0 when absent.
  double weight(std::size_t r, std::size_t c) const;

  friend NormalizedAdjacency build_adjacency(const InteractionDataset& train);

 private:
  std::size_t num_users_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<Index> columns_;
  std::vector<double> weights_;
};

NormalizedAdjacency build_adjacency(const InteractionDataset& train);

// Returns adj * x. Rows are independent reductions, so the result is the same
// for any thread count.
Matrix multiply(const NormalizedAdjacency& adj, const Matrix& x);

}  // namespace uc2i
