#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace uc2i {

using Index = std::uint32_t;

struct RawInteraction {
  std::string user_token;
  std::string item_token;
  std::optional<double> rating;
  std::optional<std::int64_t> timestamp;
};

// Token <-> contiguous index maps for users and items.
class IdMap {
 public:
  Index intern_user(const std::string& token);
  Index intern_item(const std::string& token);

  std::optional<Index> user_index(const std::string& token) const;
  std::optional<Index> item_index(const std::string& token) const;
  const std::string& user_token(Index u) const { return user_tokens_.at(u); }
  const std::string& item_token(Index i) const { return item_tokens_.at(i); }

  std::size_t num_users() const { return user_tokens_.size(); }
  std::size_t num_items() const { return item_tokens_.size(); }

  // Keeps only the listed old indices (ascending), renumbering them 0..k-1.
  void retain(const std::vector<Index>& users, const std::vector<Index>& items);

 private:
  std::unordered_map<std::string, Index> user_ids_, item_ids_;
  std::vector<std::string> user_tokens_, item_tokens_;
};

using Edge = std::pair<Index, Index>;

// Deduplicated bipartite interaction set with per-user sorted positives.
class InteractionDataset {
 public:
  InteractionDataset() = default;
  // Duplicate edges are collapsed; edge order is preserved otherwise.
  InteractionDataset(std::size_t num_users, std::size_t num_items,
                     const std::vector<Edge>& edges);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_edges() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }

  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Index>& positives(Index u) const { return positives_.at(u); }
  bool contains(Index u, Index i) const;

  std::vector<std::size_t> user_degrees() const;
  std::vector<std::size_t> item_degrees() const;
  double density() const;

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Index>> positives_;
};

struct DatasetSplit {
  InteractionDataset train;
  std::vector<Edge> val;
  std::vector<Edge> test;
  std::uint64_t seed = 0;
};

enum class InputFormat { kTsv, kMovieLens };

InputFormat parse_format(const std::string& name);

struct LoadedInteractions {
  std::vector<RawInteraction> raw;
  IdMap ids;
  InteractionDataset dataset;
};

// Reads a TSV or MovieLens ("::"-separated) file. Interactions rated below
// rating_threshold are dropped; unrated lines are always kept.
LoadedInteractions load_interactions(const std::string& path, InputFormat format,
                                     double rating_threshold = 0.0);

// Iteratively removes users and items with degree < min_degree until every
// survivor has degree >= min_degree, then re-compacts ids (order preserved).
InteractionDataset kcore_filter(const InteractionDataset& dataset, std::size_t min_degree);
InteractionDataset kcore_filter(const InteractionDataset& dataset, std::size_t min_degree,
                                IdMap& ids);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Per-user seeded split: floor(val*deg) edges to validation, floor(test*deg)
// to test, the rest to train. Users with fewer than 3 positives stay in train.
DatasetSplit split_dataset(const InteractionDataset& dataset, SplitRatios ratios,
                           std::uint64_t seed);

// Prepared split directory: train.tsv / val.tsv / test.tsv of index pairs plus
// meta.json with the counts and seed.
void save_split(const DatasetSplit& split, const std::string& dir);
DatasetSplit load_split(const std::string& dir);

}  // namespace uc2i
