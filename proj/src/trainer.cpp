#include "uc2i/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <spdlog/spdlog.h>

#include "uc2i/error.hpp"
#include "uc2i/graph.hpp"
#include "uc2i/intents.hpp"
#include "uc2i/optim.hpp"
#include "uc2i/parallel.hpp"

namespace uc2i {

namespace {

enum SeedTag : std::uint64_t {
  kInitTag = 1,
  kUserTargetTag,
  kItemTargetTag,
  kTrainTag,
  kUserKmeansTag,
  kItemKmeansTag,
};

nlohmann::json losses_json(const LossBreakdown& l) {
  return {{"rec", l.rec},   {"ucl_user", l.ucl_user}, {"ucl_item", l.ucl_item},
          {"mi", l.mi},     {"ins_user", l.ins_user}, {"ins_item", l.ins_item},
          {"reg", l.reg},   {"total", l.total}};
}

void accumulate(LossBreakdown& into, const LossBreakdown& x) {
  into.rec += x.rec;
  into.ucl_user += x.ucl_user;
  into.ucl_item += x.ucl_item;
  into.mi += x.mi;
  into.ins_user += x.ins_user;
  into.ins_item += x.ins_item;
  into.reg += x.reg;
  into.total += x.total;
}

LossBreakdown scaled(LossBreakdown l, double s) {
  for (double* v : {&l.rec, &l.ucl_user, &l.ucl_item, &l.mi, &l.ins_user, &l.ins_item, &l.reg, &l.total}) {
    *v *= s;
  }
  return l;
}

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t count) {
  return m.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
}

}  // namespace

Batch sample_batch(Rng& rng, const InteractionDataset& train, std::size_t size) {
  if (size < 1) throw ConfigError("sample_batch: size must be >= 1");
  if (train.empty()) throw EmptyError("sample_batch: no training edges");
  std::vector<Triple> triples;
  triples.reserve(size);
  const auto& edges = train.edges();
  for (std::size_t k = 0; k < size; ++k) {
    const auto [u, i] = edges[rng.index(edges.size())];
    bool found = false;
    Index j = 0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      j = static_cast<Index>(rng.index(train.num_items()));
      if (!train.contains(u, j)) {
        found = true;
        break;
      }
    }
    if (!found) {
      spdlog::warn("sample_batch: no negative found for user {} after 100 draws; triple skipped", u);
      continue;
    }
    triples.push_back({u, i, j});
  }
  return make_batch(std::move(triples));
}

nlohmann::json EpochLog::to_json(bool with_timing) const {
  nlohmann::json j = {{"epoch", epoch},
                      {"mode", mode == EpochMode::kWarmup ? "warmup" : "full"},
                      {"batches", batches},
                      {"loss", losses_json(mean_loss)},
                      {"val", val.to_json()},
                      {"clustered", clustered}};
  j["user_assignment_similarity"] = user_similarity ? nlohmann::json(*user_similarity) : nlohmann::json();
  j["item_assignment_similarity"] = item_similarity ? nlohmann::json(*item_similarity) : nlohmann::json();
  if (with_timing) j["seconds"] = seconds;
  return j;
}

IntentTargets generate_intent_targets(const TrainConfig& config, std::size_t user_clusters,
                                      std::size_t item_clusters) {
  const TargetOptions opts{config.target_tau, config.target_steps, config.target_lr};
  IntentTargets out;
  out.user = generate_targets(user_clusters, config.hp.dim, opts, derive_seed(config.hp.seed, kUserTargetTag));
  out.item = generate_targets(item_clusters, config.hp.dim, opts, derive_seed(config.hp.seed, kItemTargetTag));
  return out;
}

DatasetSplit prepare_split(const TrainConfig& config) {
  if (config.format == "split") return load_split(config.dataset);
  auto loaded = load_interactions(config.dataset, parse_format(config.format), config.rating_threshold);
  InteractionDataset data = config.kcore_min > 0
                                ? kcore_filter(loaded.dataset, config.kcore_min, loaded.ids)
                                : std::move(loaded.dataset);
  return split_dataset(data, SplitRatios{}, config.split_seed);
}

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  set_num_threads(config.threads);
  const Hyperparameters& hp = config.hp;

  TrainResult result;
  result.split = prepare_split(config);
  const DatasetSplit& split = result.split;
  const auto& train_set = split.train;
  const std::size_t users = train_set.num_users();
  const std::size_t items = train_set.num_items();

  std::vector<std::size_t> ns = config.eval_ns;
  if (std::find(ns.begin(), ns.end(), 20) == ns.end()) ns.push_back(20);

  const NormalizedAdjacency adj = build_adjacency(train_set);
  EmbeddingTable emb = init_embeddings(users, items, hp.dim, derive_seed(hp.seed, kInitTag));
  const std::size_t user_clusters = std::min(hp.user_clusters, users);
  const std::size_t item_clusters = std::min(hp.item_clusters, items);

  const bool use_ucl = hp.lambda_ucl > 0;
  const bool use_clusters = hp.lambda_ucl > 0 || hp.lambda_mi > 0;
  TargetSet user_targets, item_targets;
  if (use_ucl) {
    if (!config.targets_path.empty()) {
      const auto stored = load_checkpoint(config.targets_path);
      if (static_cast<std::size_t>(stored.user_targets.rows()) != user_clusters ||
          static_cast<std::size_t>(stored.item_targets.rows()) != item_clusters ||
          static_cast<std::size_t>(stored.user_targets.cols()) != hp.dim) {
        throw ConfigError("targets in '" + config.targets_path + "' do not match " +
                          std::to_string(user_clusters) + "/" + std::to_string(item_clusters) +
                          " clusters of dimension " + std::to_string(hp.dim));
      }
      user_targets.targets = stored.user_targets;
      item_targets.targets = stored.item_targets;
    } else {
      auto generated = generate_intent_targets(config, user_clusters, item_clusters);
      user_targets = std::move(generated.user);
      item_targets = std::move(generated.item);
    }
  }

  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot write log '" + config.log_path + "'");
  }

  Rng rng(derive_seed(hp.seed, kTrainTag));
  AdamState adam(emb.rows(), emb.dim());
  const AdamOptions adam_opts{hp.lr, hp.beta1, hp.beta2, hp.adam_eps};
  const std::size_t batches = (train_set.num_edges() + hp.batch_size - 1) / hp.batch_size;

  auto make_checkpoint = [&](std::uint64_t epoch, double recall) {
    Checkpoint c;
    c.layers = hp.layers;
    c.user_clusters = user_clusters;
    c.item_clusters = item_clusters;
    c.embeddings = emb;
    c.user_targets = user_targets.targets;
    c.item_targets = item_targets.targets;
    c.best_epoch = epoch;
    c.best_val_recall = recall;
    c.seed = hp.seed;
    return c;
  };
  result.best = make_checkpoint(0, -1.0);
  bool have_best = false;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochLog entry;
    entry.epoch = epoch;
    const bool warmup = epoch <= hp.warmup_epochs;
    entry.mode = warmup ? EpochMode::kWarmup : EpochMode::kFull;

    SideIntents user_side, item_side;
    const bool cluster_now = !warmup && use_clusters;
    try {
      if (cluster_now) {
        user_side.centroids = kmeans(rows_of(emb.weights, 0, users), user_clusters,
                                     config.kmeans_iters, derive_seed(hp.seed, kUserKmeansTag, epoch));
        item_side.centroids = kmeans(rows_of(emb.weights, users, items), item_clusters,
                                     config.kmeans_iters, derive_seed(hp.seed, kItemKmeansTag, epoch));
        entry.clustered = true;
        if (use_ucl) {
          user_side.targets = &user_targets;
          item_side.targets = &item_targets;
          user_side.assignment = assign_targets(user_side.centroids, user_targets);
          item_side.assignment = assign_targets(item_side.centroids, item_targets);
          entry.user_similarity = user_side.assignment.mean_similarity;
          entry.item_similarity = item_side.assignment.mean_similarity;
        }
      }
    } catch (const Error& e) {
      throw Error("epoch " + std::to_string(epoch) + " clustering: " + e.what());
    }

    LossBreakdown sum;
    for (std::size_t b = 0; b < batches; ++b) {
      try {
        const Batch batch = sample_batch(rng, train_set, hp.batch_size);
        if (batch.triples.empty()) continue;
        const ForwardTrace trace = forward(emb, adj, true, hp.noise_rate, hp.layers, rng);
        const auto objective = compute_objective(emb, trace, adj, batch, hp, warmup,
                                                 cluster_now ? &user_side : nullptr,
                                                 cluster_now ? &item_side : nullptr);
        adam_step(adam, emb, objective.grad, adam_opts);
        accumulate(sum, objective.losses);
        ++entry.batches;
      } catch (const Error& e) {
        throw Error("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " + e.what());
      }
    }
    entry.mean_loss = scaled(sum, entry.batches ? 1.0 / static_cast<double>(entry.batches) : 0.0);

    const ForwardTrace clean = forward_clean(emb, adj, hp.layers);
    entry.val = evaluate(clean, split, Phase::kValidation, ns);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    const double recall = entry.val.recall(20);
    if (!have_best || recall > result.best.best_val_recall) {
      result.best = make_checkpoint(epoch, recall);
      have_best = true;
      stale = 0;
    } else {
      ++stale;
    }

    if (log) log << entry.to_json(config.log_timing).dump() << '\n' << std::flush;
    if (on_epoch) on_epoch(entry);
    result.logs.push_back(std::move(entry));
    if (stale >= config.patience) break;
  }

  if (!config.checkpoint_path.empty()) save_checkpoint(result.best, config.checkpoint_path);
  const ForwardTrace best_trace = forward_clean(result.best.embeddings, adj, hp.layers);
  result.test = evaluate(best_trace, split, Phase::kTest, ns);
  return result;
}

}  // namespace uc2i
