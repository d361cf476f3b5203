#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "uc2i/error.hpp"
#include "uc2i/graph.hpp"
#include "uc2i/parallel.hpp"

using namespace uc2i;

namespace {

Matrix dense_oracle(const InteractionDataset& ds) {
  const auto n = static_cast<Eigen::Index>(ds.num_users() + ds.num_items());
  Matrix a = Matrix::Zero(n, n);
  for (const auto& [u, i] : ds.edges()) {
    const auto r = static_cast<Eigen::Index>(u);
    const auto c = static_cast<Eigen::Index>(ds.num_users() + i);
    a(r, c) = a(c, r) = 1.0;
  }
  const Vector deg = a.rowwise().sum();
  Vector inv = Vector::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (deg(k) > 0) inv(k) = 1.0 / std::sqrt(deg(k));
  }
  return inv.asDiagonal() * a * inv.asDiagonal();
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

}  // namespace

TEST_CASE("single edge has unit weight") {
  const auto adj = build_adjacency(InteractionDataset(1, 1, {{0, 0}}));
  CHECK(adj.size() == 2);
  CHECK(adj.nnz() == 2);
  CHECK(adj.weight(0, 1) == 1.0);
  CHECK(adj.weight(1, 0) == 1.0);
  CHECK(adj.weight(0, 0) == 0.0);
}

TEST_CASE("weights follow the degree formula") {
  const auto adj = build_adjacency(InteractionDataset(2, 2, {{0, 0}, {0, 1}, {1, 0}}));
  CHECK(adj.weight(0, 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(adj.weight(0, 3) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(adj.weight(1, 2) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(adj.weight(3, 0) == adj.weight(0, 3));
}

TEST_CASE("empty training set is rejected") {
  CHECK_THROWS_AS(build_adjacency(InteractionDataset(3, 3, {})), EmptyError);
}

TEST_CASE("adjacency matches the dense construction") {
  const auto ds = testutil::random_dataset(30, 30, 0.15, 21);
  const auto adj = build_adjacency(ds);
  const Matrix dense = dense_oracle(ds);
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    for (Eigen::Index c = 0; c < dense.cols(); ++c) {
      CHECK(std::abs(adj.weight(r, c) - dense(r, c)) <= 1e-12);
    }
  }
  for (double w : adj.weights()) CHECK(w > 0.0);
}

TEST_CASE("multiply matches the dense product") {
  const auto ds = testutil::random_dataset(25, 35, 0.1, 4);
  const auto adj = build_adjacency(ds);
  const Matrix x = random_matrix(60, 6, 9);
  const Matrix got = multiply(adj, x);
  CHECK((got - dense_oracle(ds) * x).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(multiply(adj, Matrix::Zero(60, 6)).isZero(0.0));
  CHECK_THROWS_AS(multiply(adj, Matrix::Zero(59, 6)), ShapeError);
}

TEST_CASE("single edge copies the neighbour row") {
  const auto adj = build_adjacency(InteractionDataset(1, 1, {{0, 0}}));
  Matrix x(2, 3);
  x << 0, 0, 0, 1, 2, 3;
  const Matrix y = multiply(adj, x);
  CHECK(y.row(0) == x.row(1));
}

TEST_CASE("multiply is symmetric and linear") {
  const auto ds = testutil::random_dataset(20, 20, 0.2, 8);
  const auto adj = build_adjacency(ds);
  const Matrix x = random_matrix(40, 5, 1), y = random_matrix(40, 5, 2);
  const double lhs = (multiply(adj, x).array() * y.array()).sum();
  const double rhs = (x.array() * multiply(adj, y).array()).sum();
  CHECK(std::abs(lhs - rhs) <= 1e-10);
  const Matrix combo = multiply(adj, 2.5 * x - 0.75 * y);
  CHECK((combo - (2.5 * multiply(adj, x) - 0.75 * multiply(adj, y))).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("spectral radius is at most one") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto ds = testutil::random_dataset(12, 15, 0.3, seed);
    const auto adj = build_adjacency(ds);
    Matrix v = random_matrix(27, 1, seed + 100);
    double lambda = 0.0;
    // Â² is positive semidefinite; its top eigenvalue is the squared radius.
    for (int it = 0; it < 2000; ++it) {
      const Matrix w = multiply(adj, multiply(adj, v));
      lambda = w.norm() / v.norm();
      v = w / w.norm();
    }
    CHECK(std::sqrt(lambda) <= 1.0 + 1e-6);
  }
}

TEST_CASE("threaded multiply is bitwise identical") {
  const auto ds = testutil::random_dataset(200, 150, 0.05, 13);
  const auto adj = build_adjacency(ds);
  const Matrix x = random_matrix(350, 16, 3);
  set_num_threads(1);
  const Matrix one = multiply(adj, x);
  set_num_threads(4);
  const Matrix four = multiply(adj, x);
  set_num_threads(1);
  CHECK(one == four);
}
