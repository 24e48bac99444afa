#pragma once

#include <cmath>
#include <random>

#include "tempodet/numkit/tensor.hpp"

namespace tempodet::numkit {

// He-style fan-in scaled normal initialization.
template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, std::mt19937_64& rng, double gain = 1.0) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / std::max(1, fan_in)));
  for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> uniform(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace tempodet::numkit
