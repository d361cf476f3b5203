#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "uc2i/backbone.hpp"
#include "uc2i/objectives.hpp"

namespace uc2i {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Lazy Adam: moments and step counts advance only for rows that receive a
// gradient.
struct AdamState {
  Matrix m;
  Matrix v;
  std::vector<std::uint64_t> steps;

  AdamState() = default;
  AdamState(std::size_t rows, std::size_t dim);
};

void adam_step(AdamState& state, EmbeddingTable& emb, const GradBuffer& grads,
               const AdamOptions& options);

using LossFn = std::function<double(const EmbeddingTable&)>;

// Largest |a - n| / max(|a|, |n|, 1e-8) over every coordinate of the given
// rows, where n is the central difference with step h. Rows absent from the
// analytic buffer count as zero gradient. An empty row list checks all rows.
double finite_diff_check(const LossFn& loss, const EmbeddingTable& emb, const GradBuffer& analytic,
                         double h, const std::vector<std::size_t>& rows = {});

}  // namespace uc2i
