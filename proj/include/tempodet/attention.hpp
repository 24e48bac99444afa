#pragma once

#include <type_traits>
#include <random>
#include <string>
#include <vector>

#include "tempodet/numkit/ops.hpp"
#include "tempodet/numkit/tensor.hpp"

namespace tempodet::attention {

using numkit::Param;
using numkit::Tensor;

struct CbamConfig {
  int channels = 0;
  int reduction = 16;
  int kernel = 7;  // odd
  numkit::Activation hidden_activation = numkit::Activation::kRelu;
  bool mlp_bias = false;
};

// floor(C / r), clamped to at least 1.
int cbam_hidden_width(int channels, int reduction);

/// Convolutional block attention: channel gate (shared two-layer MLP over the
/// average- and max-pooled descriptors) followed by a spatial gate (k x k
/// convolution over the channel-pooled maps).
template <typename T>
struct CbamParams {
  CbamConfig config;
  Param<T> mlp_w1;          // [hidden, C]
  Param<T> mlp_w2;          // [C, hidden]
  Param<T> mlp_b1;          // [hidden], only with config.mlp_bias
  Param<T> mlp_b2;          // [C], only with config.mlp_bias
  Param<T> spatial_kernel;  // [1, 2, k, k]

  int hidden() const { return mlp_w1.value.dim(0); }
  std::vector<Param<T>*> params();
};

template <typename T>
CbamParams<T> make_cbam_params(const CbamConfig& config, const std::string& prefix, std::mt19937_64& rng);

// Zero-filled parameters with the shapes implied by config.
template <typename T>
CbamParams<T> zero_cbam_params(const CbamConfig& config, const std::string& prefix);

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& features, const CbamParams<T>& p);  // [B,C,1,1]

template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& features, const CbamParams<T>& p);  // [B,1,H,W]

template <typename T>
struct CbamCache {
  Tensor<T> input;
  Tensor<T> pooled[2];   // avg, max descriptors [B,C]
  Tensor<T> hidden_pre[2];
  Tensor<T> hidden[2];
  Tensor<T> channel_gate;  // [B,C,1,1]
  Tensor<T> refined;       // channel-gated features
  Tensor<T> spatial_in;    // [B,2,H,W]
  Tensor<T> spatial_gate;  // [B,1,H,W]
};

template <typename T>
Tensor<T> cbam_forward(const Tensor<T>& features, const CbamParams<T>& p, std::type_identity_t<CbamCache<T>>* cache = nullptr);

template <typename T>
Tensor<T> cbam(const Tensor<T>& features, const CbamParams<T>& p) {
  return cbam_forward(features, p, nullptr);
}

// Accumulates parameter gradients and returns dL/dfeatures.
template <typename T>
Tensor<T> cbam_backward(const CbamCache<T>& cache, CbamParams<T>& p, const Tensor<T>& grad_out);

}  // namespace tempodet::attention
