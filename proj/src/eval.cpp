#include "uc2i/eval.hpp"

#include <algorithm>
#include <cmath>

#include "uc2i/error.hpp"
#include "uc2i/parallel.hpp"

namespace uc2i {

nlohmann::json MetricReport::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [n, m] : at) {
    out["recall@" + std::to_string(n)] = m.recall;
    out["ndcg@" + std::to_string(n)] = m.ndcg;
  }
  out["users"] = users_evaluated;
  return out;
}

std::vector<Index> topn(const double* scores, std::size_t num_items, const std::vector<char>& mask,
                        std::size_t n) {
  if (n < 1) throw ConfigError("topn: N must be >= 1");
  if (!mask.empty() && mask.size() != num_items) throw ShapeError("topn: mask size mismatch");
  std::vector<Index> candidates;
  candidates.reserve(num_items);
  for (std::size_t i = 0; i < num_items; ++i) {
    if (mask.empty() || !mask[i]) candidates.push_back(static_cast<Index>(i));
  }
  const auto better = [scores](Index a, Index b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  const std::size_t k = std::min(n, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                    candidates.end(), better);
  candidates.resize(k);
  return candidates;
}

std::vector<Index> topn(const std::vector<double>& scores, const std::vector<char>& mask,
                        std::size_t n) {
  return topn(scores.data(), scores.size(), mask, n);
}

namespace {

std::size_t hits_in_prefix(const std::vector<Index>& recommended, const std::vector<Index>& relevant,
                           std::size_t n) {
  std::size_t hits = 0;
  const std::size_t k = std::min(n, recommended.size());
  for (std::size_t r = 0; r < k; ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), recommended[r])) ++hits;
  }
  return hits;
}

}  // namespace

double recall_at_n(const std::vector<Index>& recommended, const std::vector<Index>& relevant,
                   std::size_t n) {
  if (relevant.empty()) throw EmptyError("recall_at_n: empty relevant set");
  return static_cast<double>(hits_in_prefix(recommended, relevant, n)) /
         static_cast<double>(relevant.size());
}

double ndcg_at_n(const std::vector<Index>& recommended, const std::vector<Index>& relevant,
                 std::size_t n) {
  if (relevant.empty()) throw EmptyError("ndcg_at_n: empty relevant set");
  double dcg = 0.0;
  const std::size_t k = std::min(n, recommended.size());
  for (std::size_t r = 0; r < k; ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), recommended[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(n, relevant.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

MetricReport evaluate(const ForwardTrace& trace, const DatasetSplit& split, Phase phase,
                      const std::vector<std::size_t>& ns) {
  if (ns.empty()) throw ConfigError("evaluate: no cutoffs given");
  if (trace.noise_rate != 0.0) throw ConfigError("evaluate: trace must be noise-free");
  const std::size_t users = split.train.num_users();
  const std::size_t items = split.train.num_items();
  if (trace.num_users != users || trace.num_items() != items) {
    throw ShapeError("evaluate: trace and split sizes differ");
  }

  std::vector<std::vector<Index>> truth(users), val_items(users);
  for (const auto& [u, i] : phase == Phase::kTest ? split.test : split.val) truth[u].push_back(i);
  if (phase == Phase::kTest) {
    for (const auto& [u, i] : split.val) val_items[u].push_back(i);
  }
  std::vector<Index> eval_users;
  for (Index u = 0; u < users; ++u) {
    if (!truth[u].empty()) {
      std::sort(truth[u].begin(), truth[u].end());
      eval_users.push_back(u);
    }
  }
  if (eval_users.empty()) throw EmptyError("evaluate: no users with ground truth in this phase");

  const std::size_t max_n = *std::max_element(ns.begin(), ns.end());
  // Per-user metric rows: [recall_n0, ndcg_n0, recall_n1, ...].
  std::vector<std::vector<double>> per_user(eval_users.size());
  parallel_for(eval_users.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<char> mask(items);
    for (std::size_t k = begin; k < end; ++k) {
      const Index u = eval_users[k];
      const Matrix scores = score_all(trace, {u});
      std::fill(mask.begin(), mask.end(), 0);
      for (Index i : split.train.positives(u)) mask[i] = 1;
      for (Index i : val_items[u]) mask[i] = 1;
      const auto ranked = topn(scores.data(), items, mask, max_n);
      auto& row = per_user[k];
      for (std::size_t n : ns) {
        row.push_back(recall_at_n(ranked, truth[u], n));
        row.push_back(ndcg_at_n(ranked, truth[u], n));
      }
    }
  });

  MetricReport report;
  report.users_evaluated = eval_users.size();
  for (std::size_t c = 0; c < ns.size(); ++c) {
    double recall = 0.0, ndcg = 0.0;
    for (const auto& row : per_user) {
      recall += row[2 * c];
      ndcg += row[2 * c + 1];
    }
    const auto count = static_cast<double>(eval_users.size());
    report.at[ns[c]] = {recall / count, ndcg / count};
  }
  return report;
}

}  // namespace uc2i
