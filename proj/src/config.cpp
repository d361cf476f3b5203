#include "uc2i/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "uc2i/error.hpp"

namespace uc2i {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + text + "' for key '" + key + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + text + "' for key '" + key + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
ConfigKey number_key(std::string name, std::string help, T TrainConfig::*field) {
  return {name, std::move(help),
          [name, field](TrainConfig& c, const std::string& v) { c.*field = parse_value<T>(name, v); },
          [field](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double(c.*field);
            } else {
              return std::to_string(c.*field);
            }
          }};
}

template <typename T>
ConfigKey hp_key(std::string name, std::string help, T Hyperparameters::*field) {
  return {name, std::move(help),
          [name, field](TrainConfig& c, const std::string& v) { c.hp.*field = parse_value<T>(name, v); },
          [field](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double(c.hp.*field);
            } else {
              return std::to_string(c.hp.*field);
            }
          }};
}

ConfigKey string_key(std::string name, std::string help, std::string TrainConfig::*field) {
  return {name, std::move(help), [field](TrainConfig& c, const std::string& v) { c.*field = v; },
          [field](const TrainConfig& c) { return c.*field; }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> keys;
  keys.push_back(string_key("dataset", "interaction file or prepared split directory",
                            &TrainConfig::dataset));
  keys.push_back(string_key("format", "tsv | movielens | split", &TrainConfig::format));
  keys.push_back(number_key("rating_threshold", "drop interactions rated below this",
                            &TrainConfig::rating_threshold));
  keys.push_back(number_key("kcore_min", "k-core minimum degree (0 disables)", &TrainConfig::kcore_min));
  keys.push_back(number_key("split_seed", "seed of the per-user 8:1:1 split", &TrainConfig::split_seed));
  keys.push_back({"eval_ns", "comma-separated ranking cutoffs",
                  [](TrainConfig& c, const std::string& v) {
                    std::vector<std::size_t> ns;
                    std::stringstream ss(v);
                    std::string part;
                    while (std::getline(ss, part, ',')) {
                      ns.push_back(parse_value<std::size_t>("eval_ns", trim(part)));
                    }
                    c.eval_ns = ns;
                  },
                  [](const TrainConfig& c) {
                    std::string out;
                    for (std::size_t k = 0; k < c.eval_ns.size(); ++k) {
                      if (k) out += ",";
                      out += std::to_string(c.eval_ns[k]);
                    }
                    return out;
                  }});
  keys.push_back(number_key("patience", "early-stop after this many non-improving epochs",
                            &TrainConfig::patience));
  keys.push_back(string_key("log_path", "JSON-lines epoch log (empty: none)", &TrainConfig::log_path));
  keys.push_back(string_key("checkpoint_path", "best checkpoint output (empty: none)",
                            &TrainConfig::checkpoint_path));
  keys.push_back(string_key("targets_path", "precomputed targets from gen-targets (empty: generate)",
                            &TrainConfig::targets_path));
  keys.push_back({"log_timing", "record wall-clock seconds in the epoch log",
                  [](TrainConfig& c, const std::string& v) { c.log_timing = parse_bool("log_timing", v); },
                  [](const TrainConfig& c) { return std::string(c.log_timing ? "true" : "false"); }});
  keys.push_back(number_key("threads", "worker threads for propagation and evaluation",
                            &TrainConfig::threads));
  keys.push_back(number_key("kmeans_iters", "Lloyd iterations per clustering", &TrainConfig::kmeans_iters));
  keys.push_back(number_key("target_steps", "gradient steps for target generation",
                            &TrainConfig::target_steps));
  keys.push_back(number_key("target_lr", "step size for target generation", &TrainConfig::target_lr));
  keys.push_back(number_key("target_tau", "temperature for target generation", &TrainConfig::target_tau));

  keys.push_back(hp_key("dim", "embedding dimension", &Hyperparameters::dim));
  keys.push_back(hp_key("layers", "propagation layers L", &Hyperparameters::layers));
  keys.push_back(hp_key("noise_rate", "propagation noise rate", &Hyperparameters::noise_rate));
  keys.push_back(hp_key("tau", "contrastive temperature", &Hyperparameters::tau));
  keys.push_back(hp_key("alpha", "item-side weight in UCL and INS", &Hyperparameters::alpha));
  keys.push_back(hp_key("lambda1", "weight of the uniform intent contrast", &Hyperparameters::lambda_ucl));
  keys.push_back(hp_key("lambda2", "weight of the co-cluster MI term", &Hyperparameters::lambda_mi));
  keys.push_back(hp_key("lambda3", "weight of the instance contrast", &Hyperparameters::lambda_ins));
  keys.push_back(hp_key("lambda_reg", "squared L2 weight on batch rows", &Hyperparameters::lambda_reg));
  keys.push_back(hp_key("user_clusters", "user intents C (clamped to #users)", &Hyperparameters::user_clusters));
  keys.push_back(hp_key("item_clusters", "item intents C' (clamped to #items)", &Hyperparameters::item_clusters));
  keys.push_back(hp_key("contrast_layer", "layer k* of the instance contrast", &Hyperparameters::contrast_layer));
  keys.push_back(hp_key("lr", "Adam learning rate", &Hyperparameters::lr));
  keys.push_back(hp_key("beta1", "Adam beta1", &Hyperparameters::beta1));
  keys.push_back(hp_key("beta2", "Adam beta2", &Hyperparameters::beta2));
  keys.push_back(hp_key("adam_eps", "Adam epsilon", &Hyperparameters::adam_eps));
  keys.push_back(hp_key("batch_size", "triples per batch", &Hyperparameters::batch_size));
  keys.push_back(hp_key("epochs", "maximum epochs", &Hyperparameters::epochs));
  keys.push_back(hp_key("warmup_epochs", "epochs without intent losses", &Hyperparameters::warmup_epochs));
  keys.push_back(hp_key("seed", "training seed", &Hyperparameters::seed));
  return keys;
}

}  // namespace

void TrainConfig::validate() const {
  if (dataset.empty()) throw ConfigError("dataset is required");
  if (format != "tsv" && format != "movielens" && format != "split") {
    throw ConfigError("format must be tsv, movielens or split");
  }
  if (eval_ns.empty()) throw ConfigError("eval_ns must not be empty");
  for (auto n : eval_ns) {
    if (n < 1) throw ConfigError("eval_ns entries must be >= 1");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (target_steps == 0 && hp.lambda_ucl > 0 && targets_path.empty()) {
    throw ConfigError("target_steps must be > 0");
  }
  if (!(target_tau > 0)) throw ConfigError("target_tau must be > 0");
  hp.validate();
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_setting(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(TrainConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
}

std::string dump_config(const TrainConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

}  // namespace uc2i
