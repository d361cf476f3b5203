#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace uc2i {

struct GradCheckResult {
  std::string loss;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t instances = 0;
  bool passed() const { return max_rel_error <= tolerance; }
};

struct GradSuiteOptions {
  std::size_t instances = 10;
  double step = 1e-5;
  std::uint64_t seed = 7;
};

// Analytic vs central-difference gradients on small random graphs (at most
// 20 nodes, d <= 8, C <= 4, noise off) for every loss term and the combined
// objective.
std::vector<GradCheckResult> gradient_suite(const GradSuiteOptions& options);

nlohmann::json to_json(const std::vector<GradCheckResult>& results);

}  // namespace uc2i
