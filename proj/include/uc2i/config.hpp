#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uc2i/backbone.hpp"

namespace uc2i {

struct TrainConfig {
  std::string dataset;            // interaction file, or prepared split directory
  std::string format = "tsv";     // tsv | movielens | split
  double rating_threshold = 0.0;
  std::size_t kcore_min = 0;
  std::uint64_t split_seed = 42;
  std::vector<std::size_t> eval_ns = {10, 20, 50};
  std::size_t patience = 10;
  std::string log_path;
  std::string checkpoint_path;
  std::string targets_path;       // optional precomputed targets (gen-targets output)
  bool log_timing = true;
  int threads = 1;
  std::size_t kmeans_iters = 20;
  std::size_t target_steps = 2000;
  double target_lr = 0.1;
  double target_tau = 0.1;
  Hyperparameters hp;

  void validate() const;
};

// One `key = value` setting: its name, help text and accessors.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

// Applies one setting; unknown keys and unparsable values throw ConfigError.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);

// Reads `key = value` lines; blank lines and `#` comments are skipped.
void apply_config_file(TrainConfig& config, const std::string& path);

// Canonical `key = value` dump of every setting.
std::string dump_config(const TrainConfig& config);

}  // namespace uc2i
