// Acceptance runner: one PASS/FAIL line per criterion.
//
// Exit status: 0 when every selected gating criterion passes, 1 on any
// failure, 77 when the only failures are missing datasets.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "uc2i/checkpoint.hpp"
#include "uc2i/eval.hpp"
#include "uc2i/gradcheck.hpp"
#include "uc2i/intents.hpp"
#include "uc2i/rng.hpp"
#include "uc2i/theorem.hpp"
#include "uc2i/trainer.hpp"

namespace fs = std::filesystem;
using namespace uc2i;

namespace {

enum class Status { kPass, kFail, kMissingData, kReport };

struct Outcome {
  Status status;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// Settings shared by every MovieLens-100K run. Only the loss weights differ
// between the full model and the LightGCN baseline.
TrainConfig ml100k_config(const std::string& data_dir) {
  TrainConfig c;
  c.dataset = data_dir + "/ml-100k/u.data";
  c.format = "tsv";
  c.kcore_min = 10;
  c.split_seed = 42;
  c.threads = 1;
  c.log_timing = false;
  c.patience = 100;
  c.hp.seed = 42;
  // Chosen by validation Recall@20 with `uc2i sweep`; the baseline shares
  // everything except the three auxiliary weights.
  c.hp.epochs = 40;
  c.hp.lr = 0.01;
  c.hp.tau = 0.2;
  c.hp.lambda_ucl = 0.05;
  c.hp.lambda_mi = 1.0;
  c.hp.lambda_ins = 0.01;
  c.hp.user_clusters = 100;
  c.hp.item_clusters = 100;
  return c;
}

TrainConfig baseline_of(TrainConfig c) {
  c.hp.lambda_ucl = c.hp.lambda_mi = c.hp.lambda_ins = 0.0;
  return c;
}

bool has_ml100k(const std::string& data_dir) { return fs::exists(data_dir + "/ml-100k/u.data"); }

// Expected Recall@n of a uniformly random ranking over each user's unmasked items.
double random_recall(const DatasetSplit& split, std::size_t n) {
  std::vector<std::size_t> truth(split.train.num_users(), 0), masked(split.train.num_users(), 0);
  for (const auto& [u, i] : split.test) ++truth[u];
  for (const auto& [u, i] : split.val) ++masked[u];
  double sum = 0.0;
  std::size_t users = 0;
  for (std::size_t u = 0; u < truth.size(); ++u) {
    if (truth[u] == 0) continue;
    const double candidates =
        static_cast<double>(split.train.num_items() - split.train.positives(u).size() - masked[u]);
    sum += std::min(static_cast<double>(n), candidates) / candidates;
    ++users;
  }
  return sum / static_cast<double>(users);
}

Outcome gradient_criterion() {
  const auto start = std::chrono::steady_clock::now();
  const auto results = gradient_suite(GradSuiteOptions{});
  const double elapsed = seconds_since(start);
  bool ok = elapsed < 30.0;
  std::string detail;
  for (const auto& r : results) {
    ok = ok && r.passed();
    detail += fmt("%s %.2e/%.0e ", r.loss.c_str(), r.max_rel_error, r.tolerance);
  }
  return {ok ? Status::kPass : Status::kFail, detail + fmt("(%.2f s, limit 30 s)", elapsed)};
}

Outcome theorem_criterion() {
  const auto start = std::chrono::steady_clock::now();
  const auto report = verify_theorem(10000, 8, 8, 5, 1);
  const double elapsed = seconds_since(start);
  const bool ok = report.violations == 0 && report.identity_slack <= 1e-9 && elapsed < 60.0;
  return {ok ? Status::kPass : Status::kFail,
          fmt("%zu trials, %zu violations, min slack %.3e, identity slack %.3e (%.2f s, limit 60 s)",
              report.trials, report.violations, report.min_slack, report.identity_slack, elapsed)};
}

Outcome hungarian_criterion() {
  Rng rng(20240601);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = static_cast<Eigen::Index>(1 + rng.index(7));
    Matrix s(c, c);
    for (Eigen::Index r = 0; r < c; ++r)
      for (Eigen::Index k = 0; k < c; ++k) s(r, k) = rng.uniform(-1.0, 1.0);

    std::vector<std::size_t> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    auto total = [&](const std::vector<std::size_t>& p) {
      double t = 0.0;
      for (Eigen::Index r = 0; r < c; ++r) t += s(r, static_cast<Eigen::Index>(p[r]));
      return t;
    };
    double best = -INFINITY;
    do best = std::max(best, total(perm));
    while (std::next_permutation(perm.begin(), perm.end()));

    const auto got = solve_assignment(s);
    std::vector<std::size_t> sorted = got;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> identity(static_cast<std::size_t>(c));
    std::iota(identity.begin(), identity.end(), 0);
    if (sorted != identity || total(got) != best) ++mismatches;
  }
  return {mismatches == 0 ? Status::kPass : Status::kFail,
          fmt("500 matrices, C <= 7, %zu differ from exhaustive search", mismatches)};
}

Outcome targets_criterion() {
  bool ok = true;
  std::string detail;
  for (std::size_t d : {2, 3, 16}) {
    const auto t = generate_targets(2, d, TargetOptions{}, 3).targets;
    const double cosine = t.row(0).dot(t.row(1)) / (t.row(0).norm() * t.row(1).norm());
    ok = ok && std::abs(cosine + 1.0) <= 1e-3;
    detail += fmt("C=2 d=%zu cos %.6f; ", d, cosine);
  }
  const auto t = generate_targets(5, 4, TargetOptions{0.5, 2000, 0.1}, 3).targets;
  double lo = INFINITY, hi = -INFINITY;
  for (Eigen::Index a = 0; a < 5; ++a) {
    for (Eigen::Index b = a + 1; b < 5; ++b) {
      const double dot = t.row(a).dot(t.row(b));
      lo = std::min(lo, dot);
      hi = std::max(hi, dot);
    }
  }
  ok = ok && lo >= -0.27 && hi <= -0.23;
  detail += fmt("C=5 d=4 (temperature 0.5) dots in [%.5f, %.5f] (want -0.25 +- 0.02)", lo, hi);
  return {ok ? Status::kPass : Status::kFail, detail};
}

Outcome metric_criterion() {
  Rng rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t items = 2 + rng.index(60);
    std::vector<Index> order(items);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order.begin(), order.end(), rng);
    const std::size_t list = 1 + rng.index(items);
    const std::vector<Index> ranked(order.begin(), order.begin() + static_cast<long>(list));
    std::set<Index> rel;
    const std::size_t want = 1 + rng.index(items);
    while (rel.size() < want) rel.insert(rng.index(items));
    const std::vector<Index> relevant(rel.begin(), rel.end());
    const std::size_t n = 1 + rng.index(items + 5);

    double hits = 0.0, dcg = 0.0, idcg = 0.0;
    for (std::size_t r = 0; r < std::min(n, ranked.size()); ++r) {
      if (rel.count(ranked[r])) {
        hits += 1.0;
        dcg += 1.0 / std::log2(static_cast<double>(r + 2));
      }
    }
    for (std::size_t r = 0; r < std::min(n, rel.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 2));
    worst = std::max(worst, std::abs(recall_at_n(ranked, relevant, n) - hits / static_cast<double>(rel.size())));
    worst = std::max(worst, std::abs(ndcg_at_n(ranked, relevant, n) - dcg / idcg));
  }
  const double example = ndcg_at_n({0, 1}, {1}, 2);
  const bool ok = worst <= 1e-12 && std::abs(example - 0.63093) <= 1e-5;
  return {ok ? Status::kPass : Status::kFail,
          fmt("1000 instances, max deviation %.2e (limit 1e-12); NDCG([x,a],{a}) = %.6f", worst, example)};
}

Outcome end_to_end_criterion(const std::string& data_dir) {
  if (!has_ml100k(data_dir)) return {Status::kMissingData, "no " + data_dir + "/ml-100k/u.data"};
  const auto start = std::chrono::steady_clock::now();
  const auto full = train(ml100k_config(data_dir));
  const auto base = train(baseline_of(ml100k_config(data_dir)));
  const double elapsed = seconds_since(start);
  const double floor = 20.0 * random_recall(full.split, 10);
  const double rf = full.test.recall(10), rb = base.test.recall(10);
  const bool ok = rf > rb && rf > floor && rb > floor && elapsed <= 900.0;
  return {ok ? Status::kPass : Status::kFail,
          fmt("test Recall@10 full %.5f vs LightGCN %.5f, 20x random %.5f (%.0f s, limit 900 s)", rf, rb,
              floor, elapsed)};
}

Outcome ablation_report(const std::string& data_dir) {
  if (!has_ml100k(data_dir)) return {Status::kMissingData, "no " + data_dir + "/ml-100k/u.data"};
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto full = ml100k_config(data_dir);
    full.hp.seed = seed;
    auto ablated = full;
    ablated.hp.lambda_ucl = 0.0;
    const double rf = train(full).test.recall(10);
    const double ra = train(ablated).test.recall(10);
    if (ra < rf) ++wins;
    detail += fmt("seed %llu full %.5f w/o-UCL %.5f; ", static_cast<unsigned long long>(seed), rf, ra);
  }
  return {Status::kReport, detail + fmt("w/o-UCL lower in %d of 3 seeds (expected >= 2)", wins)};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism_criterion(const std::string& data_dir) {
  const auto dir = fs::temp_directory_path() / ("uc2i_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto make = [&](const std::string& tag) {
    TrainConfig c = ml100k_config(data_dir);
    if (!has_ml100k(data_dir)) {
      // Synthetic fallback so the check still exercises the full pipeline.
      Rng rng(5);
      std::ofstream out(dir / "synthetic.tsv");
      for (int u = 0; u < 200; ++u)
        for (int i = 0; i < 150; ++i)
          if (rng.uniform() < 0.1) out << u << '\t' << i << '\n';
      c.dataset = (dir / "synthetic.tsv").string();
      c.kcore_min = 3;
    }
    c.hp.epochs = 4;
    c.hp.warmup_epochs = 2;
    c.target_steps = 200;
    c.log_path = (dir / (tag + ".jsonl")).string();
    c.checkpoint_path = (dir / (tag + ".ckpt")).string();
    return c;
  };
  const auto a = make("a"), b = make("b");
  train(a);
  train(b);
  const auto log_a = slurp(a.log_path), log_b = slurp(b.log_path);
  const auto ck_a = slurp(a.checkpoint_path), ck_b = slurp(b.checkpoint_path);
  fs::remove_all(dir);
  const bool ok = !log_a.empty() && log_a == log_b && ck_a == ck_b;
  return {ok ? Status::kPass : Status::kFail,
          fmt("logs %s (%zu bytes), checkpoints %s (%zu bytes)", log_a == log_b ? "identical" : "differ",
              log_a.size(), ck_a == ck_b ? "identical" : "differ", ck_a.size())};
}

Outcome statistics_criterion(const std::string& data_dir) {
  const auto path = data_dir + "/ml-1m/ratings.dat";
  if (!fs::exists(path)) return {Status::kMissingData, "no " + path + "; statistics not reproduced"};
  const auto loaded = load_interactions(path, InputFormat::kMovieLens, 3.0);
  const auto& ds = loaded.dataset;
  const bool ok = ds.num_users() == 6040 && ds.num_items() == 3629 && ds.num_edges() == 836478 &&
                  std::abs(ds.density() - 0.03816) <= 1e-5;
  return {ok ? Status::kPass : Status::kFail,
          fmt("%zu users (6040), %zu items (3629), %zu interactions (836478), density %.5f (0.03816)",
              ds.num_users(), ds.num_items(), ds.num_edges(), ds.density())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string data_dir = UC2I_DATA_DIR;
  app.add_option("--criteria", criteria, "criteria to run")->delimiter(',');
  app.add_option("--data", data_dir, "dataset root");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("acceptance"));
  spdlog::set_level(spdlog::level::warn);

  bool failed = false, missing = false;
  for (int id : criteria) {
    Outcome out;
    const char* name = "";
    try {
      switch (id) {
        case 1: name = "gradient suite"; out = gradient_criterion(); break;
        case 2: name = "co-cluster MI bound fuzzing"; out = theorem_criterion(); break;
        case 3: name = "assignment optimality"; out = hungarian_criterion(); break;
        case 4: name = "target geometry"; out = targets_criterion(); break;
        case 5: name = "metric oracles"; out = metric_criterion(); break;
        case 6: name = "MovieLens-100K end to end"; out = end_to_end_criterion(data_dir); break;
        case 7: name = "w/o-UCL ablation (report only)"; out = ablation_report(data_dir); break;
        case 8: name = "determinism"; out = determinism_criterion(data_dir); break;
        case 9: name = "MovieLens-1M statistics"; out = statistics_criterion(data_dir); break;
        default: std::fprintf(stderr, "unknown criterion %d\n", id); return 2;
      }
    } catch (const std::exception& e) {
      out = {Status::kFail, std::string("error: ") + e.what()};
    }
    const char* tag = out.status == Status::kPass ? "PASS" : out.status == Status::kReport ? "INFO" : "FAIL";
    std::printf("[%s] %d %s: %s\n", tag, id, name, out.detail.c_str());
    std::fflush(stdout);
    failed = failed || out.status == Status::kFail;
    missing = missing || out.status == Status::kMissingData;
  }
  if (failed) return 1;
  return missing ? 77 : 0;
}
