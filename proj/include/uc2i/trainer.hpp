#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uc2i/checkpoint.hpp"
#include "uc2i/config.hpp"
#include "uc2i/dataset.hpp"
#include "uc2i/eval.hpp"
#include "uc2i/objectives.hpp"
#include "uc2i/rng.hpp"

namespace uc2i {

// (u, i+) uniform over train edges, j- uniform over items the user has not
// interacted with (at most 100 draws; the triple is skipped otherwise).
Batch sample_batch(Rng& rng, const InteractionDataset& train, std::size_t size);

enum class EpochMode { kWarmup, kFull };

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  EpochMode mode = EpochMode::kWarmup;
  LossBreakdown mean_loss;
  MetricReport val;
  double seconds = 0.0;
  bool clustered = false;
  std::optional<double> user_similarity;  // mean assignment similarity
  std::optional<double> item_similarity;
  std::size_t batches = 0;

  nlohmann::json to_json(bool with_timing) const;
};

struct IntentTargets {
  TargetSet user, item;
};

// Both target sets for the configured (clamped) cluster counts; the seed is
// derived from hp.seed so gen-targets and train agree.
IntentTargets generate_intent_targets(const TrainConfig& config, std::size_t user_clusters,
                                      std::size_t item_clusters);

// Loads, filters and splits as configured (or reads a prepared split).
DatasetSplit prepare_split(const TrainConfig& config);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> logs;
  MetricReport test;
  DatasetSplit split;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Targets once up front, warm-up epochs, then per-epoch clustering + target
// assignment and joint optimization. Keeps the best validation Recall@20
// model, stops after `patience` epochs without improvement and reports test
// metrics of the best model.
TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace uc2i
