#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tempodet/numkit/tensor.hpp"

namespace tempodet::numkit {

// A scalar function of some float64 tensors, together with its analytic
// gradient at the current tensor values (one gradient per checked input, in
// the same order as the inputs handed to grad_check).
struct Differentiable {
  std::function<double()> value;
  std::function<std::vector<Tensor<double>>()> gradient;
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every element; otherwise a seeded random subset per tensor.
  std::size_t max_elements_per_tensor = 0;
  std::uint64_t seed = 0;
};

// Max over the checked elements of
//   |analytic - central_difference| / max(1, |analytic|, |numeric|).
// Inputs are perturbed in place and restored. Throws NumericError when any
// value or gradient is non-finite.
double grad_check(const Differentiable& f, std::span<Tensor<double>* const> inputs, const GradCheckOptions& options = {});

}  // namespace tempodet::numkit
