#include "uc2i/gradcheck.hpp"

#include <algorithm>

#include "uc2i/backbone.hpp"
#include "uc2i/graph.hpp"
#include "uc2i/intents.hpp"
#include "uc2i/objectives.hpp"
#include "uc2i/optim.hpp"
#include "uc2i/trainer.hpp"

namespace uc2i {

namespace {

struct Instance {
  InteractionDataset train;
  NormalizedAdjacency adj;
  EmbeddingTable emb;
  Batch batch;
  Hyperparameters hp;
  TargetSet user_targets, item_targets;
  SideIntents user_side, item_side;
};

Instance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t users = 3 + rng.index(6);   // 3..8
  const std::size_t items = 4 + rng.index(8);   // 4..11
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < users; ++u) {
    // Every user keeps at least one positive and one non-interacted item.
    const std::size_t degree = 1 + rng.index(items - 2);
    std::vector<Index> pool(items);
    for (std::size_t i = 0; i < items; ++i) pool[i] = static_cast<Index>(i);
    shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < degree; ++k) edges.emplace_back(static_cast<Index>(u), pool[k]);
  }
  Instance inst;
  inst.train = InteractionDataset(users, items, edges);
  inst.adj = build_adjacency(inst.train);

  Hyperparameters& hp = inst.hp;
  hp.dim = 2 + rng.index(7);  // 2..8
  hp.layers = 1 + rng.index(3);
  hp.contrast_layer = 1 + rng.index(hp.layers);
  hp.tau = rng.uniform(0.5, 1.0);
  hp.alpha = rng.uniform(0.5, 1.5);
  hp.lambda_ucl = rng.uniform(0.1, 1.0);
  hp.lambda_mi = rng.uniform(0.1, 1.0);
  hp.lambda_ins = rng.uniform(0.1, 1.0);
  hp.lambda_reg = rng.uniform(1e-3, 1e-1);
  hp.user_clusters = 2 + rng.index(std::min<std::size_t>(3, users - 1));
  hp.item_clusters = 2 + rng.index(3);

  inst.emb = init_embeddings(users, items, hp.dim, rng.next());
  inst.batch = sample_batch(rng, inst.train, 6 + rng.index(10));

  const TargetOptions topts{0.5, 50, 0.1};
  inst.user_targets = generate_targets(hp.user_clusters, hp.dim, topts, rng.next());
  inst.item_targets = generate_targets(hp.item_clusters, hp.dim, topts, rng.next());
  const Matrix user_rows = inst.emb.weights.topRows(static_cast<Eigen::Index>(users));
  const Matrix item_rows = inst.emb.weights.bottomRows(static_cast<Eigen::Index>(items));
  inst.user_side.centroids = kmeans(user_rows, hp.user_clusters, 10, rng.next());
  inst.item_side.centroids = kmeans(item_rows, hp.item_clusters, 10, rng.next());
  inst.user_side.targets = &inst.user_targets;
  inst.item_side.targets = &inst.item_targets;
  inst.user_side.assignment = assign_targets(inst.user_side.centroids, inst.user_targets);
  inst.item_side.assignment = assign_targets(inst.item_side.centroids, inst.item_targets);
  return inst;
}

// The clamps in the co-cluster loss create exactly flat regions (all mass in
// one row or column gives MI = 0 identically); central differences there only
// measure rounding noise, so such draws are replaced.
bool informative(const Instance& inst) {
  const auto dist = cocluster_distribution(inst.emb, inst.user_side.centroids,
                                           inst.item_side.centroids, inst.batch.positive_pairs());
  if (dist.degenerate || mutual_information(dist.joint) <= 1e-3) return false;
  // Stay clear of the clamp kinks at cosine 0.
  const auto near_kink = [](const auto& m) { return (m.array().abs() < 1e-3).any(); };
  return !near_kink(dist.user_raw) && !near_kink(dist.item_raw) && !near_kink(dist.pair_raw);
}

Instance draw_instance(std::uint64_t seed, std::size_t n) {
  for (std::size_t attempt = 0;; ++attempt) {
    Instance inst = random_instance(derive_seed(seed, 0x67726164, n * 1000 + attempt));
    if (informative(inst)) return inst;
  }
}

using TraceLoss = std::function<double(const EmbeddingTable&, const ForwardTrace&, LayerGrads*)>;

// Loss defined on the propagated trace (gradients flow through the pullback).
double check_trace_loss(const Instance& inst, const TraceLoss& fn, double h) {
  const ForwardTrace trace = forward_clean(inst.emb, inst.adj, inst.hp.layers);
  LayerGrads grads(inst.emb.rows(), inst.emb.dim(), inst.hp.layers);
  fn(inst.emb, trace, &grads);
  const GradBuffer analytic = to_grad_buffer(trace, inst.adj, grads);
  const LossFn loss = [&](const EmbeddingTable& e) {
    return fn(e, forward_clean(e, inst.adj, inst.hp.layers), nullptr);
  };
  return finite_diff_check(loss, inst.emb, analytic, h);
}

using BaseLoss = std::function<double(const EmbeddingTable&, Matrix*)>;

double check_base_loss(const Instance& inst, const BaseLoss& fn, double h) {
  Matrix dense = Matrix::Zero(inst.emb.weights.rows(), inst.emb.weights.cols());
  fn(inst.emb, &dense);
  GradBuffer analytic(inst.emb.rows(), inst.emb.dim());
  analytic.add_dense(dense);
  const LossFn loss = [&](const EmbeddingTable& e) { return fn(e, nullptr); };
  return finite_diff_check(loss, inst.emb, analytic, h);
}

}  // namespace

std::vector<GradCheckResult> gradient_suite(const GradSuiteOptions& options) {
  std::vector<GradCheckResult> results = {
      {"rec", 0.0, 1e-5, 0},      {"ucl_user", 0.0, 1e-5, 0}, {"ucl_item", 0.0, 1e-5, 0},
      {"mi", 0.0, 1e-4, 0},       {"ins_user", 0.0, 1e-5, 0}, {"ins_item", 0.0, 1e-5, 0},
      {"combined", 0.0, 1e-4, 0},
  };
  const double h = options.step;
  for (std::size_t n = 0; n < options.instances; ++n) {
    const Instance inst = draw_instance(options.seed, n);
    const Hyperparameters& hp = inst.hp;
    std::vector<double> errors;

    errors.push_back(check_trace_loss(
        inst, [&](const EmbeddingTable&, const ForwardTrace& t, LayerGrads* g) {
          return bpr_loss(t, inst.batch, g);
        }, h));
    for (const Side side : {Side::kUser, Side::kItem}) {
      const SideIntents& si = side == Side::kUser ? inst.user_side : inst.item_side;
      errors.push_back(check_base_loss(inst, [&](const EmbeddingTable& e, Matrix* g) {
        return ucl_loss(e, inst.batch.members(side), si.centroids.labels, si.assignment,
                        *si.targets, hp.tau, side, g);
      }, h));
    }
    errors.push_back(check_base_loss(inst, [&](const EmbeddingTable& e, Matrix* g) {
      const auto dist = cocluster_distribution(e, inst.user_side.centroids,
                                               inst.item_side.centroids,
                                               inst.batch.positive_pairs());
      return mi_loss(dist, g);
    }, h));
    for (const Side side : {Side::kUser, Side::kItem}) {
      errors.push_back(check_trace_loss(
          inst, [&](const EmbeddingTable&, const ForwardTrace& t, LayerGrads* g) {
            return ins_loss(t, inst.batch.members(side), hp.contrast_layer, hp.tau, side, g);
          }, h));
    }
    {
      const ForwardTrace trace = forward_clean(inst.emb, inst.adj, hp.layers);
      const auto objective = compute_objective(inst.emb, trace, inst.adj, inst.batch, hp, false,
                                               &inst.user_side, &inst.item_side);
      const LossFn loss = [&](const EmbeddingTable& e) {
        const ForwardTrace t = forward_clean(e, inst.adj, hp.layers);
        return compute_objective(e, t, inst.adj, inst.batch, hp, false, &inst.user_side,
                                 &inst.item_side)
            .losses.total;
      };
      errors.push_back(finite_diff_check(loss, inst.emb, objective.grad, h));
    }
    for (std::size_t k = 0; k < results.size(); ++k) {
      results[k].max_rel_error = std::max(results[k].max_rel_error, errors[k]);
      ++results[k].instances;
    }
  }
  return results;
}

nlohmann::json to_json(const std::vector<GradCheckResult>& results) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : results) {
    j.push_back({{"loss", r.loss},
                 {"max_rel_error", r.max_rel_error},
                 {"tolerance", r.tolerance},
                 {"instances", r.instances},
                 {"passed", r.passed()}});
  }
  return j;
}

}  // namespace uc2i
