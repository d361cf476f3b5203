#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "uc2i/types.hpp"

namespace uc2i {

// MI of a joint distribution given as a nonnegative matrix summing to 1.
// Zero cells contribute nothing.
double joint_mutual_information(const Matrix& joint);

// p(k,l) = sum_{u,i} p(k|u) p(l|i) p(u,i); conditionals are row-stochastic.
Matrix cluster_joint(const Matrix& joint, const Matrix& user_conditional,
                     const Matrix& item_conditional);

struct TheoremTrial {
  Matrix joint;
  Matrix user_conditional;  // |U| x C_K
  Matrix item_conditional;  // |I| x C_L
  double mi_pairs = 0.0;
  double mi_clusters = 0.0;
  double slack() const { return mi_pairs - mi_clusters; }
};

TheoremTrial evaluate_trial(Matrix joint, Matrix user_conditional, Matrix item_conditional);

struct TheoremReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double min_slack = 0.0;
  double max_slack = 0.0;
  double identity_slack = 0.0;    // |slack| of the lossless-clustering case
  double uniform_cluster_mi = 0.0;  // MI(K;L) with uniform conditionals
  std::vector<TheoremTrial> counterexamples;  // at most 5 kept
  bool passed() const { return violations == 0; }
  nlohmann::json to_json() const;
};

inline constexpr double kTheoremTolerance = 1e-9;

TheoremReport verify_theorem(std::size_t trials, std::size_t max_users, std::size_t max_items,
                             std::size_t max_clusters, std::uint64_t seed);

}  // namespace uc2i
