#pragma once

#include <string_view>
#include <type_traits>
#include <utility>

#include "tempodet/numkit/tensor.hpp"

namespace tempodet::numkit {

// Forward/backward kernels. Every backward ACCUMULATES into parameter
// gradients and returns a fresh input gradient. Explicit instantiations exist
// for float and double.

enum class PoolMode { kMax, kAvg };

enum class Activation { kIdentity, kSigmoid, kTanh, kSilu, kLeakyRelu, kRelu };

inline constexpr double kLeakySlope = 0.1;

/// Throws std::invalid_argument for unknown names.
Activation activation_from_name(std::string_view name);
std::string_view activation_name(Activation kind);

struct Conv2dSpec {
  int stride = 1;
  int padding = 0;
};

/// Output extent of a strided sliding window: floor((n + 2p - k) / s) + 1.
int sliding_extent(int n, int kernel, int stride, int padding);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::type_identity_t<const Tensor<T>*> bias,
                 Conv2dSpec spec);

// Returns dL/dinput (empty tensor when need_input_grad is false).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, Tensor<T>& kernel_grad,
                          std::type_identity_t<Tensor<T>*> bias_grad, Conv2dSpec spec, const Tensor<T>& grad_out,
                          bool need_input_grad = true);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Param<T>& kernel, std::type_identity_t<const Param<T>*> bias,
                 Conv2dSpec spec) {
  return conv2d(input, kernel.value, bias ? &bias->value : nullptr, spec);
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, Param<T>& kernel, std::type_identity_t<Param<T>*> bias, Conv2dSpec spec,
                          const Tensor<T>& grad_out, bool need_input_grad = true) {
  return conv2d_backward(input, kernel.value, kernel.grad, bias ? &bias->grad : nullptr, spec, grad_out,
                         need_input_grad);
}

template <typename T>
Tensor<T> pool2d(const Tensor<T>& input, PoolMode mode, int window, int stride);
template <typename T>
Tensor<T> pool2d_backward(const Tensor<T>& input, PoolMode mode, int window, int stride, const Tensor<T>& grad_out);

// Per-channel reduction over all spatial positions: [B,C,H,W] -> [B,C,1,1].
template <typename T>
Tensor<T> global_pool(const Tensor<T>& input, PoolMode mode);
template <typename T>
Tensor<T> global_pool_backward(const Tensor<T>& input, PoolMode mode, const Tensor<T>& grad_out);

// Reduction across the channel axis: [B,C,H,W] -> [B,1,H,W].
template <typename T>
Tensor<T> channel_reduce(const Tensor<T>& input, PoolMode mode);
template <typename T>
Tensor<T> channel_reduce_backward(const Tensor<T>& input, PoolMode mode, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind);
// Needs both the forward input and output; either may be reused by the formula.
template <typename T>
Tensor<T> activation_backward(const Tensor<T>& input, const Tensor<T>& output, Activation kind,
                              const Tensor<T>& grad_out);

template <typename T>
T sigmoid(T x);

// input [B,Cin], weight [Cout,Cin], bias [Cout].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Param<T>& weight, std::type_identity_t<const Param<T>*> bias);
template <typename T>
Tensor<T> linear_backward(const Tensor<T>& input, Param<T>& weight, std::type_identity_t<Param<T>*> bias,
                          const Tensor<T>& grad_out);

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& input);
template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& grad_out);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
// Splits a gradient of concat_channels(a, b) back into (grad_a, grad_b).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad_out, int channels_a);

// 4-D elementwise ops. The batch axis must agree; channel and spatial axes of
// either operand may be 1 and are broadcast.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> add_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> mul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out);

}  // namespace tempodet::numkit
