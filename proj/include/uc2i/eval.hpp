#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "uc2i/backbone.hpp"
#include "uc2i/dataset.hpp"

namespace uc2i {

struct RankMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
};

struct MetricReport {
  std::map<std::size_t, RankMetrics> at;  // keyed by N
  std::size_t users_evaluated = 0;

  double recall(std::size_t n) const { return at.at(n).recall; }
  double ndcg(std::size_t n) const { return at.at(n).ndcg; }
  // {"recall@10": ..., "ndcg@10": ..., ..., "users": ...}
  nlohmann::json to_json() const;
};

enum class Phase { kValidation, kTest };

// Highest-scoring unmasked items, score-descending, ties to the lower index.
// mask may be empty (nothing masked) or one flag per item.
std::vector<Index> topn(const double* scores, std::size_t num_items, const std::vector<char>& mask,
                        std::size_t n);
std::vector<Index> topn(const std::vector<double>& scores, const std::vector<char>& mask,
                        std::size_t n);

// relevant must be sorted ascending and non-empty.
double recall_at_n(const std::vector<Index>& recommended, const std::vector<Index>& relevant,
                   std::size_t n);
double ndcg_at_n(const std::vector<Index>& recommended, const std::vector<Index>& relevant,
                 std::size_t n);

// Full ranking over all items. Validation masks train items; test masks
// train and validation items. Users without ground truth are skipped.
MetricReport evaluate(const ForwardTrace& trace, const DatasetSplit& split, Phase phase,
                      const std::vector<std::size_t>& ns);

}  // namespace uc2i
