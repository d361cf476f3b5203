#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "test_util.hpp"
#include "uc2i/error.hpp"
#include "uc2i/eval.hpp"
#include "uc2i/graph.hpp"

using namespace uc2i;

namespace {

double recall_oracle(const std::vector<Index>& rec, const std::set<Index>& rel, std::size_t n) {
  std::size_t hits = 0;
  for (std::size_t k = 0; k < std::min(n, rec.size()); ++k) hits += rel.count(rec[k]);
  return static_cast<double>(hits) / static_cast<double>(rel.size());
}

double ndcg_oracle(const std::vector<Index>& rec, const std::set<Index>& rel, std::size_t n) {
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t k = 0; k < std::min(n, rec.size()); ++k) {
    if (rel.count(rec[k])) dcg += 1.0 / std::log2(static_cast<double>(k) + 2.0);
  }
  for (std::size_t k = 0; k < std::min(n, rel.size()); ++k) idcg += 1.0 / std::log2(static_cast<double>(k) + 2.0);
  return dcg / idcg;
}

std::vector<Index> sort_oracle(const std::vector<double>& scores, const std::vector<char>& mask) {
  std::vector<Index> order;
  for (Index i = 0; i < scores.size(); ++i) {
    if (mask.empty() || !mask[i]) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

TEST_CASE("topn examples") {
  CHECK(topn(std::vector<double>{0.1, 0.9, 0.5}, {}, 2) == std::vector<Index>{1, 2});
  CHECK(topn(std::vector<double>{0.9, 0.9, 0.1}, {}, 1) == std::vector<Index>{0});
  CHECK(topn(std::vector<double>{0.9, 0.2, 0.1}, {1, 0, 0}, 5) == std::vector<Index>{1, 2});
}

TEST_CASE("topn matches a full sort") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t items = 1 + rng.index(60);
    std::vector<double> scores(items);
    for (auto& s : scores) s = std::round(rng.uniform(0, 8));  // plenty of ties
    std::vector<char> mask(items);
    for (auto& m : mask) m = rng.uniform() < 0.3;
    const std::size_t n = 1 + rng.index(items + 3);
    auto full = sort_oracle(scores, mask);
    if (full.size() > n) full.resize(n);
    CHECK(topn(scores, mask, n) == full);
  }
}

TEST_CASE("metric examples") {
  // a=0, b=1, c=2, others are misses.
  CHECK(recall_at_n({0, 5, 2, 6}, {0, 1, 2}, 10) == doctest::Approx(2.0 / 3.0));
  CHECK(recall_at_n({2, 1, 0}, {0, 1, 2}, 3) == 1.0);
  CHECK(ndcg_at_n({7, 3}, {3}, 2) == doctest::Approx(0.63093).epsilon(1e-5));
  CHECK(ndcg_at_n({1, 2, 9}, {1, 2}, 3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(recall_at_n({1}, {}, 1), EmptyError);
  CHECK_THROWS_AS(ndcg_at_n({1}, {}, 1), EmptyError);
}

TEST_CASE("metrics match direct definitions and grow with N") {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t items = 5 + rng.index(40);
    std::vector<Index> ranking(items);
    std::iota(ranking.begin(), ranking.end(), 0);
    shuffle(ranking.begin(), ranking.end(), rng);
    std::set<Index> rel;
    const std::size_t k = 1 + rng.index(std::min<std::size_t>(8, items));
    while (rel.size() < k) rel.insert(static_cast<Index>(rng.index(items)));
    const std::vector<Index> relevant(rel.begin(), rel.end());
    double prev_recall = 0.0;
    for (std::size_t n : {1, 5, 10, 20}) {
      const double r = recall_at_n(ranking, relevant, n);
      CHECK(std::abs(r - recall_oracle(ranking, rel, n)) <= 1e-12);
      CHECK(std::abs(ndcg_at_n(ranking, relevant, n) - ndcg_oracle(ranking, rel, n)) <= 1e-12);
      CHECK(r >= prev_recall);
      prev_recall = r;
    }
  }
}

TEST_CASE("evaluate matches a per-user loop with masking") {
  const auto ds = testutil::random_dataset(20, 30, 0.3, 12);
  const auto split = split_dataset(ds, SplitRatios{}, 3);
  const auto adj = build_adjacency(split.train);
  const auto trace = forward_clean(init_embeddings(20, 30, 8, 5), adj, 2);
  const std::vector<std::size_t> ns = {5, 10};

  for (Phase phase : {Phase::kValidation, Phase::kTest}) {
    const auto& truth_edges = phase == Phase::kTest ? split.test : split.val;
    std::vector<std::set<Index>> truth(20), masked(20);
    for (const auto& [u, i] : truth_edges) truth[u].insert(i);
    for (const auto& [u, i] : split.train.edges()) masked[u].insert(i);
    if (phase == Phase::kTest) {
      for (const auto& [u, i] : split.val) masked[u].insert(i);
    }
    std::map<std::size_t, std::pair<double, double>> sums;
    std::size_t users = 0;
    for (Index u = 0; u < 20; ++u) {
      if (truth[u].empty()) continue;
      ++users;
      std::vector<double> scores(30);
      for (Index i = 0; i < 30; ++i) scores[i] = score_pairs(trace, {{u, i}})[0];
      std::vector<char> mask(30, 0);
      for (Index i : masked[u]) mask[i] = 1;
      const auto ranking = sort_oracle(scores, mask);
      for (Index i : ranking) REQUIRE(masked[u].count(i) == 0);
      for (std::size_t n : ns) {
        sums[n].first += recall_oracle(ranking, truth[u], n);
        sums[n].second += ndcg_oracle(ranking, truth[u], n);
      }
    }
    REQUIRE(users > 0);
    const auto report = evaluate(trace, split, phase, ns);
    CHECK(report.users_evaluated == users);
    for (std::size_t n : ns) {
      CHECK(std::abs(report.recall(n) - sums[n].first / users) <= 1e-12);
      CHECK(std::abs(report.ndcg(n) - sums[n].second / users) <= 1e-12);
      CHECK(report.recall(n) >= 0.0);
      CHECK(report.recall(n) <= 1.0);
    }
    const auto j = report.to_json();
    CHECK(j.contains("recall@5"));
    CHECK(j.contains("ndcg@10"));
  }
}

TEST_CASE("equal scores fall back to index order") {
  const InteractionDataset train(1, 4, {{0, 3}});
  DatasetSplit split;
  split.train = train;
  split.test = {{0, 1}};
  const auto adj = build_adjacency(train);
  EmbeddingTable zero;
  zero.num_users = 1;
  zero.num_items = 4;
  zero.weights = Matrix::Zero(5, 2);
  const auto report = evaluate(forward_clean(zero, adj, 1), split, Phase::kTest, {1, 2});
  CHECK(report.recall(1) == 0.0);  // item 0 wins the tie
  CHECK(report.recall(2) == 1.0);
  CHECK(report.ndcg(2) == doctest::Approx(0.63093).epsilon(1e-5));
}

TEST_CASE("single relevant item ranked first scores one") {
  const InteractionDataset train(1, 3, {{0, 0}});
  DatasetSplit split;
  split.train = train;
  split.test = {{0, 2}};
  EmbeddingTable e;
  e.num_users = 1;
  e.num_items = 3;
  e.weights = Matrix(4, 1);
  e.weights << 1.0, 5.0, -1.0, 3.0;
  const auto adj = build_adjacency(train);
  const auto report = evaluate(forward_clean(e, adj, 0 + 1), split, Phase::kTest, {10});
  CHECK(report.recall(10) == 1.0);
  CHECK(report.ndcg(10) == 1.0);
}

TEST_CASE("evaluation rejects noisy traces and empty phases") {
  const InteractionDataset train(2, 3, {{0, 0}, {1, 1}});
  DatasetSplit split;
  split.train = train;
  const auto adj = build_adjacency(train);
  const auto emb = init_embeddings(2, 3, 2, 1);
  CHECK_THROWS_AS(evaluate(forward_clean(emb, adj, 1), split, Phase::kTest, {10}), EmptyError);
  split.test = {{0, 2}};
  Rng rng(1);
  const auto noisy = forward(emb, adj, true, 0.1, 1, rng);
  CHECK_THROWS(evaluate(noisy, split, Phase::kTest, {10}));
}

TEST_CASE("relabelling items leaves metrics unchanged") {
  const auto ds = testutil::random_dataset(15, 30, 0.5, 2);
  const auto split = split_dataset(ds, SplitRatios{}, 1);
  const auto emb = init_embeddings(15, 30, 4, 7);
  const auto base = evaluate(forward_clean(emb, build_adjacency(split.train), 2), split, Phase::kTest, {3, 5});

  // Reverse the item order everywhere.
  auto flip = [](const std::vector<Edge>& edges) {
    std::vector<Edge> out;
    for (const auto& [u, i] : edges) out.emplace_back(u, 29 - i);
    return out;
  };
  DatasetSplit other;
  other.train = InteractionDataset(15, 30, flip(split.train.edges()));
  other.val = flip(split.val);
  other.test = flip(split.test);
  auto emb2 = emb;
  for (Index i = 0; i < 30; ++i) emb2.weights.row(15 + (29 - i)) = emb.weights.row(15 + i);
  const auto moved = evaluate(forward_clean(emb2, build_adjacency(other.train), 2), other, Phase::kTest, {3, 5});
  for (std::size_t n : {3, 5}) {
    CHECK(moved.recall(n) == doctest::Approx(base.recall(n)).epsilon(1e-12));
    CHECK(moved.ndcg(n) == doctest::Approx(base.ndcg(n)).epsilon(1e-12));
  }
}
