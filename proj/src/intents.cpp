#include "uc2i/intents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "uc2i/error.hpp"
#include "uc2i/rng.hpp"

namespace uc2i {

namespace {

void normalize_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm > 0) m.row(r) /= norm;
  }
}

// Row-wise softmax of logits, in place.
void softmax_rows(Matrix& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
}

double squared_distance(const Matrix& a, Eigen::Index ra, const Matrix& b, Eigen::Index rb) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double diff = a(ra, j) - b(rb, j);
    s += diff * diff;
  }
  return s;
}

}  // namespace

double uniformity_loss(const Matrix& targets, double temperature) {
  const Matrix logits = targets * targets.transpose() / temperature;
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    total += mx + std::log((logits.row(r).array() - mx).exp().sum());
  }
  return total / static_cast<double>(targets.rows());
}

TargetSet generate_targets(std::size_t count, std::size_t dim, const TargetOptions& options,
                           std::uint64_t seed) {
  if (count < 2) throw ConfigError("target count must be >= 2");
  if (count > 1'000'000) throw ConfigError("target count exceeds 10^6");
  if (dim < 2) throw ConfigError("target dimension must be >= 2");
  if (!(options.temperature > 0)) throw ConfigError("target temperature must be > 0");

  const auto c = static_cast<Eigen::Index>(count);
  const auto d = static_cast<Eigen::Index>(dim);
  Rng rng(seed);
  Matrix t(c, d);
  for (Eigen::Index r = 0; r < c; ++r) {
    for (Eigen::Index j = 0; j < d; ++j) t(r, j) = rng.normal();
  }
  normalize_rows(t);

  TargetSet out;
  out.temperature = options.temperature;
  out.steps = options.steps;
  out.lr = options.lr;
  out.initial_loss = uniformity_loss(t, options.temperature);

  const double scale = 1.0 / (options.temperature * static_cast<double>(count));
  for (std::size_t step = 0; step < options.steps; ++step) {
    Matrix p = t * t.transpose() / options.temperature;
    softmax_rows(p);
    const Matrix grad = scale * ((p + p.transpose()) * t);
    t -= options.lr * grad;
    normalize_rows(t);
  }
  out.final_loss = uniformity_loss(t, options.temperature);
  out.targets = std::move(t);
  return out;
}

namespace {

// Nearest center per point (ties to the lower index) with squared distances.
void assign_points(const Matrix& points, const Matrix& centers, std::vector<std::size_t>& labels,
                   std::vector<double>& dist) {
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double dd = squared_distance(points, p, centers, c);
      if (dd < best_d) {
        best_d = dd;
        best = static_cast<std::size_t>(c);
      }
    }
    labels[static_cast<std::size_t>(p)] = best;
    dist[static_cast<std::size_t>(p)] = best_d;
  }
}

Matrix seed_plus_plus(const Matrix& points, std::size_t clusters, Rng& rng) {
  const auto m = static_cast<std::size_t>(points.rows());
  Matrix centers(static_cast<Eigen::Index>(clusters), points.cols());
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(m, 0);

  std::size_t pick = rng.index(m);
  for (std::size_t c = 0; c < clusters; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (std::size_t p = 0; p < m; ++p) total += chosen[p] ? 0.0 : nearest[p];
      if (total > 0) {
        double target = rng.uniform() * total;
        pick = m;
        for (std::size_t p = 0; p < m; ++p) {
          if (chosen[p]) continue;
          target -= nearest[p];
          pick = p;
          if (target < 0) break;
        }
      } else {
        // Remaining points coincide with chosen centers; take any unchosen one.
        std::vector<std::size_t> rest;
        for (std::size_t p = 0; p < m; ++p) {
          if (!chosen[p]) rest.push_back(p);
        }
        pick = rest[rng.index(rest.size())];
      }
    }
    chosen[pick] = 1;
    centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    for (std::size_t p = 0; p < m; ++p) {
      nearest[p] = std::min(nearest[p], squared_distance(points, static_cast<Eigen::Index>(p),
                                                         centers, static_cast<Eigen::Index>(c)));
    }
  }
  return centers;
}

}  // namespace

Centroids kmeans(const Matrix& points, std::size_t clusters, std::size_t max_iters,
                 std::uint64_t seed) {
  const auto m = static_cast<std::size_t>(points.rows());
  if (clusters < 1) throw ConfigError("kmeans needs at least one cluster");
  if (m < clusters) {
    throw ConfigError("kmeans: " + std::to_string(m) + " points cannot form " +
                      std::to_string(clusters) + " clusters");
  }
  Rng rng(seed);
  Centroids out;
  out.centers = seed_plus_plus(points, clusters, rng);
  out.labels.assign(m, 0);
  std::vector<double> dist(m, 0.0);
  assign_points(points, out.centers, out.labels, dist);
  auto inertia = [&] {
    double s = 0.0;
    for (double v : dist) s += v;
    return s;
  };
  out.inertia_history.push_back(inertia());

  std::vector<std::size_t> counts(clusters);
  std::vector<std::size_t> next_labels(m);
  for (std::size_t it = 1; it <= max_iters; ++it) {
    out.centers.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t p = 0; p < m; ++p) {
      out.centers.row(static_cast<Eigen::Index>(out.labels[p])) +=
          points.row(static_cast<Eigen::Index>(p));
      ++counts[out.labels[p]];
    }
    bool reseeded = false;
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] > 0) {
        out.centers.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
        continue;
      }
      const auto far = static_cast<std::size_t>(
          std::max_element(dist.begin(), dist.end()) - dist.begin());
      out.centers.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
      dist[far] = 0.0;
      reseeded = true;
    }

    assign_points(points, out.centers, next_labels, dist);
    out.inertia_history.push_back(inertia());
    out.iterations = it;
    const bool stable = next_labels == out.labels;
    out.labels.swap(next_labels);
    if (stable && !reseeded) break;
  }
  out.inertia = out.inertia_history.back();
  return out;
}

std::vector<std::size_t> solve_assignment(const Matrix& similarity) {
  if (similarity.rows() != similarity.cols()) {
    throw ShapeError("assignment matrix must be square, got " + std::to_string(similarity.rows()) +
                     " x " + std::to_string(similarity.cols()));
  }
  if (!similarity.allFinite()) throw NumericError("assignment matrix has non-finite entries");
  const auto n = static_cast<std::size_t>(similarity.rows());
  if (n == 0) return {};

  // Shortest augmenting path with potentials on cost = -similarity (1-based).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -similarity(static_cast<Eigen::Index>(i0 - 1),
                                       static_cast<Eigen::Index>(j - 1)) -
                           u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 1; j <= n; ++j) perm[match[j] - 1] = j - 1;
  return perm;
}

Assignment assign_targets(const Centroids& centroids, const TargetSet& targets) {
  if (centroids.count() != targets.count()) {
    throw ShapeError("assign_targets: " + std::to_string(centroids.count()) + " centroids vs " +
                     std::to_string(targets.count()) + " targets");
  }
  if (centroids.centers.cols() != targets.targets.cols()) {
    throw ShapeError("assign_targets: centroid and target dimensions differ");
  }
  const auto c = static_cast<Eigen::Index>(centroids.count());
  Matrix sim = Matrix::Zero(c, c);
  for (Eigen::Index i = 0; i < c; ++i) {
    const double cn = centroids.centers.row(i).norm();
    if (cn == 0) {
      spdlog::warn("assign_targets: centroid {} has zero norm; similarity set to 0", i);
      continue;
    }
    for (Eigen::Index j = 0; j < c; ++j) {
      const double tn = targets.targets.row(j).norm();
      if (tn > 0) sim(i, j) = centroids.centers.row(i).dot(targets.targets.row(j)) / (cn * tn);
    }
  }
  Assignment out;
  out.perm = solve_assignment(sim);
  double total = 0.0;
  for (Eigen::Index i = 0; i < c; ++i) total += sim(i, static_cast<Eigen::Index>(out.perm[i]));
  out.mean_similarity = total / static_cast<double>(c);
  return out;
}

}  // namespace uc2i
