#pragma once

#include <cstdint>
#include <vector>

#include "uc2i/types.hpp"

namespace uc2i {

struct TargetSet {
  Matrix targets;  // C x d, unit rows
  double temperature = 0.1;
  std::size_t steps = 0;
  double lr = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;

  std::size_t count() const { return static_cast<std::size_t>(targets.rows()); }
};

struct TargetOptions {
  double temperature = 0.1;
  std::size_t steps = 2000;
  double lr = 0.1;
};

// (1/C) sum_i log sum_j exp(t_i . t_j / temperature)
double uniformity_loss(const Matrix& targets, double temperature);

// Spreads C points on the unit sphere in R^d by projected gradient descent on
// the uniformity loss, starting from normalized Gaussian rows.
TargetSet generate_targets(std::size_t count, std::size_t dim, const TargetOptions& options,
                           std::uint64_t seed);

struct Centroids {
  Matrix centers;  // C x d
  std::vector<std::size_t> labels;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per assignment pass
  std::size_t iterations = 0;

  std::size_t count() const { return static_cast<std::size_t>(centers.rows()); }
};

// k-means++ seeding followed by Lloyd iterations until labels are stable or
// max_iters passes have run. Empty clusters are reseeded to the point that is
// farthest from its current centroid.
Centroids kmeans(const Matrix& points, std::size_t clusters, std::size_t max_iters,
                 std::uint64_t seed);

// Maximum-weight perfect matching on a square matrix: perm[row] = column.
std::vector<std::size_t> solve_assignment(const Matrix& similarity);

struct Assignment {
  std::vector<std::size_t> perm;  // cluster -> target
  double mean_similarity = 0.0;
};

// Cosine similarity between centroids and targets, then optimal matching.
Assignment assign_targets(const Centroids& centroids, const TargetSet& targets);

}  // namespace uc2i
