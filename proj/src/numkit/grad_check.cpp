#include "tempodet/numkit/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "tempodet/errors.hpp"

namespace tempodet::numkit {

namespace {

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("grad_check: non-finite ") + what);
  return v;
}

}  // namespace

double grad_check(const Differentiable& f, std::span<Tensor<double>* const> inputs, const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  const std::vector<Tensor<double>> analytic = f.gradient();
  if (analytic.size() != inputs.size()) throw ShapeError("grad_check: gradient count does not match inputs");
  checked(f.value(), "objective");

  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& x = *inputs[k];
    x.require_same_shape(analytic[k], "grad_check");
    if (!analytic[k].all_finite()) throw NumericError("grad_check: non-finite analytic gradient");

    std::vector<std::size_t> indices(x.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_elements_per_tensor > 0 && indices.size() > options.max_elements_per_tensor) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_elements_per_tensor);
    }
    for (std::size_t i : indices) {
      const double saved = x[i];
      x[i] = saved + options.step;
      const double up = checked(f.value(), "objective");
      x[i] = saved - options.step;
      const double down = checked(f.value(), "objective");
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace tempodet::numkit
