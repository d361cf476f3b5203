#include "uc2i/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string_view>
#include <unordered_set>

#include <json.hpp>

#include "uc2i/error.hpp"
#include "uc2i/rng.hpp"

namespace uc2i {

namespace {

std::vector<std::string_view> split_on(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, const char* what) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(std::string("bad ") + what + " '" + std::string(field) + "'", line_no);
  }
  return value;
}

std::uint64_t edge_key(Index u, Index i) {
  return (static_cast<std::uint64_t>(u) << 32) | i;
}

}  // namespace

Index IdMap::intern_user(const std::string& token) {
  auto [it, inserted] = user_ids_.try_emplace(token, static_cast<Index>(user_tokens_.size()));
  if (inserted) user_tokens_.push_back(token);
  return it->second;
}

Index IdMap::intern_item(const std::string& token) {
  auto [it, inserted] = item_ids_.try_emplace(token, static_cast<Index>(item_tokens_.size()));
  if (inserted) item_tokens_.push_back(token);
  return it->second;
}

std::optional<Index> IdMap::user_index(const std::string& token) const {
  auto it = user_ids_.find(token);
  if (it == user_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<Index> IdMap::item_index(const std::string& token) const {
  auto it = item_ids_.find(token);
  if (it == item_ids_.end()) return std::nullopt;
  return it->second;
}

void IdMap::retain(const std::vector<Index>& users, const std::vector<Index>& items) {
  IdMap next;
  for (Index u : users) next.intern_user(user_tokens_.at(u));
  for (Index i : items) next.intern_item(item_tokens_.at(i));
  *this = std::move(next);
}

InteractionDataset::InteractionDataset(std::size_t num_users, std::size_t num_items,
                                       const std::vector<Edge>& edges)
    : num_users_(num_users), num_items_(num_items), positives_(num_users) {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(edges.size() * 2);
  edges_.reserve(edges.size());
  for (const auto& [u, i] : edges) {
    if (u >= num_users || i >= num_items) {
      throw BoundsError("edge (" + std::to_string(u) + ", " + std::to_string(i) +
                        ") outside " + std::to_string(num_users) + " x " +
                        std::to_string(num_items));
    }
    if (!seen.insert(edge_key(u, i)).second) continue;
    edges_.emplace_back(u, i);
    positives_[u].push_back(i);
  }
  for (auto& list : positives_) std::sort(list.begin(), list.end());
}

bool InteractionDataset::contains(Index u, Index i) const {
  if (u >= num_users_) return false;
  const auto& list = positives_[u];
  return std::binary_search(list.begin(), list.end(), i);
}

std::vector<std::size_t> InteractionDataset::user_degrees() const {
  std::vector<std::size_t> deg(num_users_);
  for (std::size_t u = 0; u < num_users_; ++u) deg[u] = positives_[u].size();
  return deg;
}

std::vector<std::size_t> InteractionDataset::item_degrees() const {
  std::vector<std::size_t> deg(num_items_, 0);
  for (const auto& e : edges_) ++deg[e.second];
  return deg;
}

double InteractionDataset::density() const {
  if (num_users_ == 0 || num_items_ == 0) return 0.0;
  return static_cast<double>(edges_.size()) /
         (static_cast<double>(num_users_) * static_cast<double>(num_items_));
}

InputFormat parse_format(const std::string& name) {
  if (name == "tsv") return InputFormat::kTsv;
  if (name == "movielens") return InputFormat::kMovieLens;
  throw ConfigError("unknown dataset format '" + name + "' (expected tsv or movielens)");
}

LoadedInteractions load_interactions(const std::string& path, InputFormat format,
                                     double rating_threshold) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interaction file '" + path + "'");

  LoadedInteractions out;
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;

    const auto fields = format == InputFormat::kTsv ? split_on(line, "\t") : split_on(line, "::");
    RawInteraction raw;
    if (format == InputFormat::kTsv) {
      if (fields.size() < 2 || fields.size() > 4) {
        throw ParseError("expected 2 to 4 tab-separated fields, got " +
                             std::to_string(fields.size()),
                         line_no);
      }
    } else if (fields.size() != 4) {
      throw ParseError("expected user::item::rating::timestamp", line_no);
    }
    if (fields[0].empty() || fields[1].empty()) throw ParseError("empty user or item token", line_no);
    raw.user_token = std::string(fields[0]);
    raw.item_token = std::string(fields[1]);
    if (fields.size() >= 3) raw.rating = parse_number<double>(fields[2], line_no, "rating");
    if (fields.size() >= 4) raw.timestamp = parse_number<std::int64_t>(fields[3], line_no, "timestamp");

    if (raw.rating && *raw.rating < rating_threshold) continue;
    const Index u = out.ids.intern_user(raw.user_token);
    const Index i = out.ids.intern_item(raw.item_token);
    edges.emplace_back(u, i);
    out.raw.push_back(std::move(raw));
  }
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  out.dataset = InteractionDataset(out.ids.num_users(), out.ids.num_items(), edges);
  return out;
}

namespace {

struct CoreResult {
  InteractionDataset dataset;
  std::vector<Index> kept_users, kept_items;
};

CoreResult kcore_impl(const InteractionDataset& dataset, std::size_t min_degree) {
  CoreResult result;
  if (min_degree == 0) {
    result.dataset = dataset;
    for (Index u = 0; u < dataset.num_users(); ++u) result.kept_users.push_back(u);
    for (Index i = 0; i < dataset.num_items(); ++i) result.kept_items.push_back(i);
    return result;
  }

  std::vector<char> edge_alive(dataset.num_edges(), 1);
  auto user_deg = dataset.user_degrees();
  auto item_deg = dataset.item_degrees();
  const auto& edges = dataset.edges();

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (!edge_alive[e]) continue;
      const auto [u, i] = edges[e];
      if (user_deg[u] < min_degree || item_deg[i] < min_degree) {
        edge_alive[e] = 0;
        --user_deg[u];
        --item_deg[i];
        changed = true;
      }
    }
  }

  std::vector<Index> user_remap(dataset.num_users(), UINT32_MAX);
  std::vector<Index> item_remap(dataset.num_items(), UINT32_MAX);
  for (Index u = 0; u < dataset.num_users(); ++u) {
    if (user_deg[u] > 0) {
      user_remap[u] = static_cast<Index>(result.kept_users.size());
      result.kept_users.push_back(u);
    }
  }
  for (Index i = 0; i < dataset.num_items(); ++i) {
    if (item_deg[i] > 0) {
      item_remap[i] = static_cast<Index>(result.kept_items.size());
      result.kept_items.push_back(i);
    }
  }
  std::vector<Edge> kept;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edge_alive[e]) kept.emplace_back(user_remap[edges[e].first], item_remap[edges[e].second]);
  }
  if (kept.empty()) {
    throw EmptyError("dataset empty after filtering with min degree " + std::to_string(min_degree));
  }
  result.dataset = InteractionDataset(result.kept_users.size(), result.kept_items.size(), kept);
  return result;
}

}  // namespace

InteractionDataset kcore_filter(const InteractionDataset& dataset, std::size_t min_degree) {
  return kcore_impl(dataset, min_degree).dataset;
}

InteractionDataset kcore_filter(const InteractionDataset& dataset, std::size_t min_degree,
                                IdMap& ids) {
  auto result = kcore_impl(dataset, min_degree);
  ids.retain(result.kept_users, result.kept_items);
  return std::move(result.dataset);
}

DatasetSplit split_dataset(const InteractionDataset& dataset, SplitRatios ratios,
                           std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
    throw ConfigError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }

  Rng rng(seed);
  DatasetSplit split;
  split.seed = seed;
  std::vector<Edge> train;
  train.reserve(dataset.num_edges());
  for (Index u = 0; u < dataset.num_users(); ++u) {
    std::vector<Index> items = dataset.positives(u);
    const std::size_t deg = items.size();
    if (deg < 3) {
      for (Index i : items) train.emplace_back(u, i);
      continue;
    }
    shuffle(items.begin(), items.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * deg + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * deg + 1e-9));
    for (std::size_t k = 0; k < deg; ++k) {
      if (k < n_val) {
        split.val.emplace_back(u, items[k]);
      } else if (k < n_val + n_test) {
        split.test.emplace_back(u, items[k]);
      } else {
        train.emplace_back(u, items[k]);
      }
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  split.train = InteractionDataset(dataset.num_users(), dataset.num_items(), train);
  return split;
}

namespace {

void write_edges(const std::filesystem::path& path, const std::vector<Edge>& edges) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& [u, i] : edges) out << u << '\t' << i << '\n';
}

std::vector<Edge> read_edges(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_on(line, "\t");
    if (fields.size() != 2) throw ParseError("expected user<TAB>item index pair", line_no);
    edges.emplace_back(parse_number<Index>(fields[0], line_no, "user index"),
                       parse_number<Index>(fields[1], line_no, "item index"));
  }
  return edges;
}

}  // namespace

void save_split(const DatasetSplit& split, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_edges(fs::path(dir) / "train.tsv", split.train.edges());
  write_edges(fs::path(dir) / "val.tsv", split.val);
  write_edges(fs::path(dir) / "test.tsv", split.test);
  nlohmann::json meta = {{"num_users", split.train.num_users()},
                         {"num_items", split.train.num_items()},
                         {"train", split.train.num_edges()},
                         {"val", split.val.size()},
                         {"test", split.test.size()},
                         {"seed", split.seed}};
  std::ofstream out(fs::path(dir) / "meta.json");
  if (!out) throw IoError("cannot write split metadata in '" + dir + "'");
  out << meta.dump(2) << '\n';
}

DatasetSplit load_split(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "meta.json");
  if (!in) throw IoError("no meta.json in split directory '" + dir + "'");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad split metadata: " + std::string(e.what()));
  }
  DatasetSplit split;
  split.seed = meta.at("seed").get<std::uint64_t>();
  const auto users = meta.at("num_users").get<std::size_t>();
  const auto items = meta.at("num_items").get<std::size_t>();
  split.train = InteractionDataset(users, items, read_edges(fs::path(dir) / "train.tsv"));
  split.val = read_edges(fs::path(dir) / "val.tsv");
  split.test = read_edges(fs::path(dir) / "test.tsv");
  for (const auto* part : {&split.val, &split.test}) {
    for (const auto& [u, i] : *part) {
      if (u >= users || i >= items) throw FormatError("split edge index out of range");
    }
  }
  return split;
}

}  // namespace uc2i
