#pragma once

#include <random>
#include <vector>

#include "tempodet/numkit/grad_check.hpp"
#include "tempodet/numkit/tensor.hpp"

namespace tempodet::testing {

using numkit::Tensor;

inline Tensor<double> random_tensor(numkit::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<Tensor<double>*> ptrs(std::initializer_list<Tensor<double>*> list) { return list; }

}  // namespace tempodet::testing
