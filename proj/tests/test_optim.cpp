#include <doctest.h>

#include <cmath>

#include "uc2i/error.hpp"
#include "uc2i/optim.hpp"

using namespace uc2i;

namespace {

EmbeddingTable table(std::size_t rows, std::size_t dim, double fill) {
  EmbeddingTable e;
  e.num_users = rows;
  e.weights = Matrix::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim), fill);
  return e;
}

}  // namespace

TEST_CASE("zero gradient on a fresh row leaves it unchanged") {
  auto emb = table(3, 2, 0.5);
  AdamState s(3, 2);
  GradBuffer g(3, 2);
  g.add_row(1, RowVector::Zero(2));
  adam_step(s, emb, g, AdamOptions{});
  CHECK(emb.weights == Matrix::Constant(3, 2, 0.5));
  CHECK(s.steps[1] == 1);
  CHECK(s.steps[0] == 0);
}

TEST_CASE("first step moves by about lr whatever the gradient scale") {
  for (double grad : {1e-3, 1.0, 250.0, -7.0}) {
    auto emb = table(1, 1, 0.0);
    AdamState s(1, 1);
    GradBuffer g(1, 1);
    g.add_row(0, RowVector::Constant(1, grad));
    adam_step(s, emb, g, AdamOptions{0.01, 0.9, 0.999, 1e-8});
    CHECK(std::abs(emb.weights(0, 0)) == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(emb.weights(0, 0) * grad < 0);
  }
}

TEST_CASE("ten steps on a quadratic match a hand-rolled trace") {
  // f(x) = 0.5 * a * x^2 per coordinate.
  const double a = 3.0, lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  auto emb = table(1, 2, 0.0);
  emb.weights << 1.0, -2.0;
  AdamState s(1, 2);

  double x[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 10; ++t) {
    GradBuffer g(1, 2);
    g.add_row(0, a * emb.weights.row(0));
    adam_step(s, emb, g, AdamOptions{lr, b1, b2, eps});
    for (int j = 0; j < 2; ++j) {
      const double grad = a * x[j];
      m[j] = b1 * m[j] + (1 - b1) * grad;
      v[j] = b2 * v[j] + (1 - b2) * grad * grad;
      const double mh = m[j] / (1 - std::pow(b1, t));
      const double vh = v[j] / (1 - std::pow(b2, t));
      x[j] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  CHECK(std::abs(emb.weights(0, 0) - x[0]) <= 1e-12);
  CHECK(std::abs(emb.weights(0, 1) - x[1]) <= 1e-12);
}

TEST_CASE("lazy updates touch only present rows and count per row") {
  auto emb = table(4, 3, 1.0);
  AdamState s(4, 3);
  for (int step = 0; step < 3; ++step) {
    GradBuffer g(4, 3);
    g.add_row(0, RowVector::Constant(3, 1.0));
    if (step == 2) g.add_row(2, RowVector::Constant(3, -1.0));
    adam_step(s, emb, g, AdamOptions{});
  }
  CHECK(s.steps == std::vector<std::uint64_t>{3, 0, 1, 0});
  CHECK(emb.weights.row(1) == RowVector::Constant(3, 1.0));
  CHECK(emb.weights.row(3) == RowVector::Constant(3, 1.0));
  CHECK((s.v.array() >= 0).all());
  // Row 2 took a first bias-corrected step.
  CHECK(emb.weights(2, 0) == doctest::Approx(1.0 + 1e-3).epsilon(1e-6));
}

TEST_CASE("no momentum and a huge eps is signed gradient descent") {
  auto emb = table(1, 3, 0.0);
  AdamState s(1, 3);
  GradBuffer g(1, 3);
  RowVector grad(3);
  grad << 2.0, -0.5, 1e-3;
  g.add_row(0, grad);
  adam_step(s, emb, g, AdamOptions{0.1, 0.0, 0.0, 1e6});
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(emb.weights(0, j) * grad(j) < 0);
    CHECK(emb.weights(0, j) == doctest::Approx(-0.1 * grad(j) / 1e6).epsilon(1e-5));
  }
}

TEST_CASE("non-finite gradients are rejected before any update") {
  auto emb = table(3, 1, 0.0);
  AdamState s(3, 1);
  GradBuffer g(3, 1);
  g.add_row(0, RowVector::Constant(1, 1.0));
  g.add_row(2, RowVector::Constant(1, std::nan("")));
  try {
    adam_step(s, emb, g, AdamOptions{});
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
  CHECK(emb.weights.isZero(0.0));
  CHECK(s.steps[0] == 0);
}

TEST_CASE("finite differences of simple losses") {
  auto emb = table(3, 2, 0.0);
  emb.weights << 0.3, -1.2, 2.0, 0.7, -0.4, 0.1;
  const LossFn half_sq = [](const EmbeddingTable& e) { return 0.5 * e.weights.squaredNorm(); };
  GradBuffer g(3, 2);
  g.add_dense(emb.weights);
  CHECK(finite_diff_check(half_sq, emb, g, 1e-5) <= 1e-9);

  const LossFn constant = [](const EmbeddingTable&) { return 4.2; };
  CHECK(finite_diff_check(constant, emb, GradBuffer(3, 2), 1e-5) == 0.0);

  // A wrong gradient is caught, and a row filter restricts the check.
  GradBuffer wrong(3, 2);
  wrong.add_dense(2.0 * emb.weights);
  CHECK(finite_diff_check(half_sq, emb, wrong, 1e-5) > 0.4);
  GradBuffer partial(3, 2);
  partial.add_row(1, emb.weights.row(1));
  CHECK(finite_diff_check(half_sq, emb, partial, 1e-5, {1}) <= 1e-9);
}
