#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "uc2i/checkpoint.hpp"
#include "uc2i/config.hpp"
#include "uc2i/error.hpp"
#include "uc2i/eval.hpp"
#include "uc2i/gradcheck.hpp"
#include "uc2i/graph.hpp"
#include "uc2i/parallel.hpp"
#include "uc2i/theorem.hpp"
#include "uc2i/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uc2i;

namespace {

// Every config key becomes a `--key value` flag; flags override the file.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value config file");
    const TrainConfig defaults;
    for (const auto& key : config_keys()) {
      cmd->add_option("--" + key.name, values[key.name],
                      key.help + " (default: " + readable(key.get(defaults)) + ")");
    }
  }

  // Shortest form of numeric defaults for help text ("0.1", not "0.10000000000000001").
  static std::string readable(const std::string& value) {
    char* end = nullptr;
    const double x = std::strtod(value.c_str(), &end);
    if (value.empty() || *end != '\0') return value;
    std::ostringstream out;
    out << x;
    return out.str();
  }

  // gen-targets needs no dataset, so it only checks the hyperparameters.
  TrainConfig build(CLI::App* cmd, bool need_dataset = true) const {
    TrainConfig config;
    if (!file.empty()) apply_config_file(config, file);
    for (const auto& [name, value] : values) {
      if (cmd->count("--" + name) > 0) apply_setting(config, name, value);
    }
    if (need_dataset) {
      config.validate();
    } else {
      config.hp.validate();
    }
    return config;
  }
};

json dataset_stats(const InteractionDataset& d) {
  return {{"users", d.num_users()},
          {"items", d.num_items()},
          {"interactions", d.num_edges()},
          {"density", d.density()}};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(part);
  return out;
}

int run_sweep(const TrainConfig& base, const std::vector<std::string>& grid, const std::string& out_dir) {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& spec : grid) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("grid axis must be key=v1,v2,...: '" + spec + "'");
    auto values = split_list(spec.substr(eq + 1));
    if (values.empty()) throw ConfigError("grid axis '" + spec + "' has no values");
    axes.emplace_back(spec.substr(0, eq), std::move(values));
  }
  // Reject bad keys/values before the first (long) cell runs.
  for (const auto& [key, values] : axes) {
    for (const auto& v : values) {
      TrainConfig probe = base;
      apply_setting(probe, key, v);
    }
  }
  fs::create_directories(out_dir);
  std::ofstream summary(fs::path(out_dir) / "summary.jsonl", std::ios::trunc);
  if (!summary) throw IoError("cannot write sweep summary in '" + out_dir + "'");

  std::size_t cells = 1;
  for (const auto& axis : axes) cells *= axis.second.size();
  for (std::size_t cell = 0; cell < cells; ++cell) {
    TrainConfig config = base;
    json settings = json::object();
    std::size_t rest = cell;
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      const auto& value = it->second[rest % it->second.size()];
      rest /= it->second.size();
      apply_setting(config, it->first, value);
      settings[it->first] = value;
    }
    config.log_path = (fs::path(out_dir) / ("cell_" + std::to_string(cell) + ".jsonl")).string();
    config.checkpoint_path.clear();
    config.validate();
    spdlog::info("sweep cell {}/{}: {}", cell + 1, cells, settings.dump());
    const auto result = train(config);
    json line = {{"cell", cell},
                 {"settings", settings},
                 {"log", config.log_path},
                 {"best_epoch", result.best.best_epoch},
                 {"val_recall@20", result.best.best_val_recall},
                 {"test", result.test.to_json()}};
    summary << line.dump() << '\n' << std::flush;
    std::cout << line.dump() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("uc2i"));
  CLI::App app{"Graph collaborative filtering with uniformity-targeted intent contrast"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "filter, split and serialize an interaction file");
  std::string input, format = "tsv", out_dir;
  double threshold = 0.0;
  std::size_t kcore = 0;
  std::uint64_t split_seed = 42;
  prepare->add_option("--input", input, "interaction file")->required();
  prepare->add_option("--format", format, "tsv | movielens")->capture_default_str();
  prepare->add_option("--rating_threshold", threshold, "drop ratings below this")->capture_default_str();
  prepare->add_option("--kcore_min", kcore, "k-core filter (0 = off)")->capture_default_str();
  prepare->add_option("--split_seed", split_seed, "per-user split seed")->capture_default_str();
  prepare->add_option("--out", out_dir, "output split directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model and report test metrics");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on a prepared split");
  std::string ckpt_path, split_dir, phase = "test";
  std::vector<std::size_t> eval_ns = {10, 20, 50};
  int eval_threads = 1;
  evaluate_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  evaluate_cmd->add_option("--split", split_dir, "prepared split directory")->required();
  evaluate_cmd->add_option("--phase", phase, "val | test")->capture_default_str();
  evaluate_cmd->add_option("--ns", eval_ns, "ranking cutoffs")->delimiter(',');
  evaluate_cmd->add_option("--threads", eval_threads, "worker threads")->capture_default_str();

  // gen-targets
  auto* targets_cmd = app.add_subcommand("gen-targets", "precompute uniformly spread target sets");
  ConfigFlags target_flags;
  target_flags.attach(targets_cmd);
  std::string targets_out;
  targets_cmd->add_option("--out", targets_out, "output file (checkpoint format, no embeddings)")->required();

  // grad-check
  auto* grad_cmd = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  GradSuiteOptions grad_opts;
  grad_cmd->add_option("--instances", grad_opts.instances, "random instances")->capture_default_str();
  grad_cmd->add_option("--step", grad_opts.step, "central-difference step")->capture_default_str();
  grad_cmd->add_option("--seed", grad_opts.seed, "seed")->capture_default_str();

  // verify-theorem
  auto* theorem_cmd = app.add_subcommand("verify-theorem", "fuzz MI(K;L) <= MI(U;I) on random distributions");
  std::size_t trials = 10000, max_users = 8, max_items = 8, max_clusters = 5;
  std::uint64_t theorem_seed = 1;
  theorem_cmd->add_option("--trials", trials)->capture_default_str();
  theorem_cmd->add_option("--max_users", max_users)->capture_default_str();
  theorem_cmd->add_option("--max_items", max_items)->capture_default_str();
  theorem_cmd->add_option("--max_clusters", max_clusters)->capture_default_str();
  theorem_cmd->add_option("--seed", theorem_seed)->capture_default_str();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over settings, one log per cell");
  ConfigFlags sweep_flags;
  sweep_flags.attach(sweep_cmd);
  std::vector<std::string> grid;
  std::string sweep_dir;
  sweep_cmd->add_option("--grid", grid, "axis as key=v1,v2,... (repeatable)")->required();
  sweep_cmd->add_option("--out_dir", sweep_dir, "directory for cell logs and summary.jsonl")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) {
      auto loaded = load_interactions(input, parse_format(format), threshold);
      json report = {{"loaded", dataset_stats(loaded.dataset)}};
      InteractionDataset data = kcore > 0 ? kcore_filter(loaded.dataset, kcore, loaded.ids)
                                          : std::move(loaded.dataset);
      report["filtered"] = dataset_stats(data);
      const auto split = split_dataset(data, SplitRatios{}, split_seed);
      report["split"] = {{"train", split.train.num_edges()}, {"val", split.val.size()}, {"test", split.test.size()}};
      if (!out_dir.empty()) save_split(split, out_dir);
      std::cout << report.dump(2) << '\n';
    } else if (*train_cmd) {
      const TrainConfig config = train_flags.build(train_cmd);
      const auto result = train(config, [](const EpochLog& e) {
        spdlog::info("epoch {} ({}) loss {:.6f} val recall@20 {:.5f}", e.epoch,
                     e.mode == EpochMode::kWarmup ? "warmup" : "full", e.mean_loss.total, e.val.recall(20));
      });
      json out = {{"best_epoch", result.best.best_epoch},
                  {"val_recall@20", result.best.best_val_recall},
                  {"epochs_run", result.logs.size()},
                  {"test", result.test.to_json()}};
      std::cout << out.dump(2) << '\n';
    } else if (*evaluate_cmd) {
      set_num_threads(eval_threads);
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const DatasetSplit split = load_split(split_dir);
      if (split.train.num_users() != ckpt.embeddings.num_users ||
          split.train.num_items() != ckpt.embeddings.num_items) {
        throw ShapeError("checkpoint dimensions do not match the split");
      }
      const auto adj = build_adjacency(split.train);
      const auto trace = forward_clean(ckpt.embeddings, adj, ckpt.layers);
      Phase ph;
      if (phase == "test") ph = Phase::kTest;
      else if (phase == "val") ph = Phase::kValidation;
      else throw ConfigError("phase must be val or test");
      std::cout << evaluate(trace, split, ph, eval_ns).to_json().dump(2) << '\n';
    } else if (*targets_cmd) {
      const TrainConfig config = target_flags.build(targets_cmd, false);
      const auto targets = generate_intent_targets(config, config.hp.user_clusters, config.hp.item_clusters);
      Checkpoint c;
      c.layers = config.hp.layers;
      c.user_clusters = config.hp.user_clusters;
      c.item_clusters = config.hp.item_clusters;
      c.embeddings.weights = Matrix(0, static_cast<Eigen::Index>(config.hp.dim));
      c.user_targets = targets.user.targets;
      c.item_targets = targets.item.targets;
      c.seed = config.hp.seed;
      save_checkpoint(c, targets_out);
      json out = {{"user", {{"count", targets.user.count()}, {"initial_loss", targets.user.initial_loss}, {"final_loss", targets.user.final_loss}}},
                  {"item", {{"count", targets.item.count()}, {"initial_loss", targets.item.initial_loss}, {"final_loss", targets.item.final_loss}}}};
      std::cout << out.dump(2) << '\n';
    } else if (*grad_cmd) {
      const auto results = gradient_suite(grad_opts);
      std::cout << to_json(results).dump(2) << '\n';
      for (const auto& r : results) {
        if (!r.passed()) return 1;
      }
    } else if (*theorem_cmd) {
      const auto report = verify_theorem(trials, max_users, max_items, max_clusters, theorem_seed);
      std::cout << report.to_json().dump(2) << '\n';
      return report.passed() ? 0 : 1;
    } else if (*sweep_cmd) {
      return run_sweep(sweep_flags.build(sweep_cmd), grid, sweep_dir);
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
