#include "tempodet/numkit/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tempodet::numkit {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

std::string dims(const Shape& s) { return shape_string(s); }

struct ConvGeometry {
  int batch, in_channels, height, width;
  int out_channels, kernel_h, kernel_w;
  int out_h, out_w;
  int stride, padding;

  int patch() const { return in_channels * kernel_h * kernel_w; }
  int positions() const { return out_h * out_w; }
  bool is_pointwise() const { return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernel, Conv2dSpec spec) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (spec.stride < 1) throw ShapeError("conv2d: stride must be positive");
  if (spec.padding < 0) throw ShapeError("conv2d: padding must be non-negative");
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.out_channels = kernel.dim(0);
  g.kernel_h = kernel.dim(2);
  g.kernel_w = kernel.dim(3);
  g.stride = spec.stride;
  g.padding = spec.padding;
  if (kernel.dim(1) != g.in_channels) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " input channels but input " +
                     dims(input.shape()) + " has " + std::to_string(g.in_channels));
  }
  if (g.kernel_h > g.height + 2 * g.padding || g.kernel_w > g.width + 2 * g.padding) {
    throw ShapeError("conv2d: kernel " + dims(kernel.shape()) + " larger than padded input " + dims(input.shape()));
  }
  g.out_h = sliding_extent(g.height, g.kernel_h, g.stride, g.padding);
  g.out_w = sliding_extent(g.width, g.kernel_w, g.stride, g.padding);
  return g;
}

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const int positions = g.positions();
  for (int c = 0; c < g.in_channels; ++c) {
    const T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        T* row = col + static_cast<std::size_t>((c * g.kernel_h + ki) * g.kernel_w + kj) * positions;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ki;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kj;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image) {
  const int positions = g.positions();
  for (int c = 0; c < g.in_channels; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        const T* row = col + static_cast<std::size_t>((c * g.kernel_h + ki) * g.kernel_w + kj) * positions;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * g.width;
          const T* src = row + oh * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void require_same_batch_4d(const Shape& a, const Shape& b, const char* what) {
  if (a.size() != 4 || b.size() != 4) throw ShapeError(std::string(what) + ": expected rank-4 operands");
  if (a[0] != b[0]) throw ShapeError(std::string(what) + ": batch mismatch " + dims(a) + " vs " + dims(b));
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* what) {
  require_same_batch_4d(a, b, what);
  Shape out(4);
  out[0] = a[0];
  for (int i = 1; i < 4; ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw ShapeError(std::string(what) + ": cannot broadcast " + dims(a) + " with " + dims(b));
    }
  }
  return out;
}

// Offset of out-index (n,c,h,w) into an operand that may be broadcast.
inline std::size_t bcast_offset(const Shape& s, int n, int c, int h, int w) {
  const int cc = s[1] == 1 ? 0 : c;
  const int hh = s[2] == 1 ? 0 : h;
  const int ww = s[3] == 1 ? 0 : w;
  return ((static_cast<std::size_t>(n) * s[1] + cc) * s[2] + hh) * s[3] + ww;
}

}  // namespace

int sliding_extent(int n, int kernel, int stride, int padding) {
  if (stride < 1) throw ShapeError("stride must be positive");
  const int span = n + 2 * padding - kernel;
  if (span < 0) throw ShapeError("window larger than padded extent");
  return span / stride + 1;
}

Activation activation_from_name(std::string_view name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  if (name == "silu") return Activation::kSilu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::kIdentity: return "identity";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kSilu: return "silu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kRelu: return "relu";
  }
  return "unknown";
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// ---------------------------------------------------------------- conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::type_identity_t<const Tensor<T>*> bias,
                 Conv2dSpec spec) {
  const ConvGeometry g = conv_geometry(input, kernel, spec);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.out_channels)) {
    throw ShapeError("conv2d: bias " + dims(bias->shape()) + " does not match " + std::to_string(g.out_channels) +
                     " output channels");
  }
  Tensor<T> out({g.batch, g.out_channels, g.out_h, g.out_w});
  const int patch = g.patch();
  const int positions = g.positions();
  ConstMatrixMap<T> w(kernel.data(), g.out_channels, patch);
  numkit::AlignedVector<T> col;
  if (!g.is_pointwise()) col.resize(static_cast<std::size_t>(patch) * positions);
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * positions;
  for (int n = 0; n < g.batch; ++n) {
    const T* src = input.data() + n * in_stride;
    const T* col_ptr = src;
    if (!g.is_pointwise()) {
      im2col(src, g, col.data());
      col_ptr = col.data();
    }
    ConstMatrixMap<T> c(col_ptr, patch, positions);
    MatrixMap<T> y(out.data() + n * out_stride, g.out_channels, positions);
    y.noalias() = w * c;
    if (bias) {
      for (int o = 0; o < g.out_channels; ++o) y.row(o).array() += (*bias)[static_cast<std::size_t>(o)];
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, Tensor<T>& kernel_grad,
                          std::type_identity_t<Tensor<T>*> bias_grad, Conv2dSpec spec, const Tensor<T>& grad_out,
                          bool need_input_grad) {
  const ConvGeometry g = conv_geometry(input, kernel, spec);
  const Shape expected{g.batch, g.out_channels, g.out_h, g.out_w};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv2d_backward: grad " + dims(grad_out.shape()) + " expected " + dims(expected));
  }
  kernel.require_same_shape(kernel_grad, "conv2d_backward kernel grad");
  const int patch = g.patch();
  const int positions = g.positions();
  ConstMatrixMap<T> w(kernel.data(), g.out_channels, patch);
  MatrixMap<T> dw(kernel_grad.data(), g.out_channels, patch);
  Tensor<T> grad_in;
  if (need_input_grad) grad_in = Tensor<T>::zeros_like(input);
  numkit::AlignedVector<T> col;
  numkit::AlignedVector<T> dcol;
  if (!g.is_pointwise()) {
    col.resize(static_cast<std::size_t>(patch) * positions);
    if (need_input_grad) dcol.resize(col.size());
  }
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * positions;
  for (int n = 0; n < g.batch; ++n) {
    const T* src = input.data() + n * in_stride;
    const T* col_ptr = src;
    if (!g.is_pointwise()) {
      im2col(src, g, col.data());
      col_ptr = col.data();
    }
    ConstMatrixMap<T> c(col_ptr, patch, positions);
    ConstMatrixMap<T> dy(grad_out.data() + n * out_stride, g.out_channels, positions);
    dw.noalias() += dy * c.transpose();
    if (bias_grad) {
      for (int o = 0; o < g.out_channels; ++o) (*bias_grad)[static_cast<std::size_t>(o)] += dy.row(o).sum();
    }
    if (need_input_grad) {
      if (g.is_pointwise()) {
        MatrixMap<T> dx(grad_in.data() + n * in_stride, patch, positions);
        dx.noalias() = w.transpose() * dy;
      } else {
        MatrixMap<T> dc(dcol.data(), patch, positions);
        dc.noalias() = w.transpose() * dy;
        col2im(dcol.data(), g, grad_in.data() + n * in_stride);
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- pooling

template <typename T>
Tensor<T> pool2d(const Tensor<T>& input, PoolMode mode, int window, int stride) {
  require_rank(input, 4, "pool2d input");
  if (window < 1 || stride < 1) throw ShapeError("pool2d: window and stride must be positive");
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (window > H || window > W) {
    throw ShapeError("pool2d: window " + std::to_string(window) + " exceeds spatial extent of " + dims(input.shape()));
  }
  const int Ho = sliding_extent(H, window, stride, 0);
  const int Wo = sliding_extent(W, window, stride, 0);
  Tensor<T> out({B, C, Ho, Wo});
  const T inv_area = T(1) / static_cast<T>(window * window);
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          T acc = mode == PoolMode::kMax ? input.at(n, c, oh * stride, ow * stride) : T(0);
          for (int i = 0; i < window; ++i)
            for (int j = 0; j < window; ++j) {
              const T v = input.at(n, c, oh * stride + i, ow * stride + j);
              if (mode == PoolMode::kMax) {
                if (v > acc) acc = v;
              } else {
                acc += v;
              }
            }
          out.at(n, c, oh, ow) = mode == PoolMode::kMax ? acc : acc * inv_area;
        }
  return out;
}

template <typename T>
Tensor<T> pool2d_backward(const Tensor<T>& input, PoolMode mode, int window, int stride, const Tensor<T>& grad_out) {
  require_rank(input, 4, "pool2d_backward input");
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (window > H || window > W) throw ShapeError("pool2d_backward: window exceeds spatial extent");
  const int Ho = sliding_extent(H, window, stride, 0);
  const int Wo = sliding_extent(W, window, stride, 0);
  if (grad_out.shape() != Shape{B, C, Ho, Wo}) throw ShapeError("pool2d_backward: gradient shape mismatch");
  Tensor<T> grad_in = Tensor<T>::zeros_like(input);
  const T inv_area = T(1) / static_cast<T>(window * window);
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          const T g = grad_out.at(n, c, oh, ow);
          if (mode == PoolMode::kAvg) {
            for (int i = 0; i < window; ++i)
              for (int j = 0; j < window; ++j) grad_in.at(n, c, oh * stride + i, ow * stride + j) += g * inv_area;
            continue;
          }
          // First occurrence in row-major order wins ties.
          int best_i = 0, best_j = 0;
          T best = input.at(n, c, oh * stride, ow * stride);
          for (int i = 0; i < window; ++i)
            for (int j = 0; j < window; ++j) {
              const T v = input.at(n, c, oh * stride + i, ow * stride + j);
              if (v > best) {
                best = v;
                best_i = i;
                best_j = j;
              }
            }
          grad_in.at(n, c, oh * stride + best_i, ow * stride + best_j) += g;
        }
  return grad_in;
}

template <typename T>
Tensor<T> global_pool(const Tensor<T>& input, PoolMode mode) {
  require_rank(input, 4, "global_pool input");
  const int B = input.dim(0), C = input.dim(1);
  const std::size_t area = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  Tensor<T> out({B, C, 1, 1});
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = input.data() + (static_cast<std::size_t>(n) * C + c) * area;
      T acc = mode == PoolMode::kMax ? p[0] : T(0);
      for (std::size_t i = 0; i < area; ++i) {
        if (mode == PoolMode::kMax) {
          if (p[i] > acc) acc = p[i];
        } else {
          acc += p[i];
        }
      }
      out.at(n, c, 0, 0) = mode == PoolMode::kMax ? acc : acc / static_cast<T>(area);
    }
  return out;
}

template <typename T>
Tensor<T> global_pool_backward(const Tensor<T>& input, PoolMode mode, const Tensor<T>& grad_out) {
  require_rank(input, 4, "global_pool_backward input");
  const int B = input.dim(0), C = input.dim(1);
  if (grad_out.shape() != Shape{B, C, 1, 1}) throw ShapeError("global_pool_backward: gradient shape mismatch");
  const std::size_t area = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  Tensor<T> grad_in = Tensor<T>::zeros_like(input);
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * area;
      const T g = grad_out.at(n, c, 0, 0);
      if (mode == PoolMode::kAvg) {
        const T share = g / static_cast<T>(area);
        for (std::size_t i = 0; i < area; ++i) grad_in[base + i] += share;
      } else {
        std::size_t best = 0;
        for (std::size_t i = 1; i < area; ++i)
          if (input[base + i] > input[base + best]) best = i;
        grad_in[base + best] += g;
      }
    }
  return grad_in;
}

template <typename T>
Tensor<T> channel_reduce(const Tensor<T>& input, PoolMode mode) {
  require_rank(input, 4, "channel_reduce input");
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  Tensor<T> out({B, 1, H, W});
  for (int n = 0; n < B; ++n)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        T acc = input.at(n, 0, h, w);
        for (int c = 1; c < C; ++c) {
          const T v = input.at(n, c, h, w);
          if (mode == PoolMode::kMax) {
            if (v > acc) acc = v;
          } else {
            acc += v;
          }
        }
        out.at(n, 0, h, w) = mode == PoolMode::kMax ? acc : acc / static_cast<T>(C);
      }
  return out;
}

template <typename T>
Tensor<T> channel_reduce_backward(const Tensor<T>& input, PoolMode mode, const Tensor<T>& grad_out) {
  require_rank(input, 4, "channel_reduce_backward input");
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (grad_out.shape() != Shape{B, 1, H, W}) throw ShapeError("channel_reduce_backward: gradient shape mismatch");
  Tensor<T> grad_in = Tensor<T>::zeros_like(input);
  for (int n = 0; n < B; ++n)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        const T g = grad_out.at(n, 0, h, w);
        if (mode == PoolMode::kAvg) {
          for (int c = 0; c < C; ++c) grad_in.at(n, c, h, w) += g / static_cast<T>(C);
        } else {
          int best = 0;
          for (int c = 1; c < C; ++c)
            if (input.at(n, c, h, w) > input.at(n, best, h, w)) best = c;
          grad_in.at(n, best, h, w) += g;
        }
      }
  return grad_in;
}

// ---------------------------------------------------------------- activations

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind) {
  Tensor<T> out = input;
  for (auto& v : out.storage()) {
    switch (kind) {
      case Activation::kIdentity: break;
      case Activation::kSigmoid: v = sigmoid(v); break;
      case Activation::kTanh: v = std::tanh(v); break;
      case Activation::kSilu: v = v * sigmoid(v); break;
      case Activation::kLeakyRelu: v = v > T(0) ? v : T(kLeakySlope) * v; break;
      case Activation::kRelu: v = v > T(0) ? v : T(0); break;
    }
  }
  return out;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& input, const Tensor<T>& output, Activation kind,
                              const Tensor<T>& grad_out) {
  input.require_same_shape(grad_out, "activation_backward");
  Tensor<T> grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const T g = grad_out[i];
    switch (kind) {
      case Activation::kIdentity: grad_in[i] = g; break;
      case Activation::kSigmoid: grad_in[i] = g * output[i] * (T(1) - output[i]); break;
      case Activation::kTanh: grad_in[i] = g * (T(1) - output[i] * output[i]); break;
      case Activation::kSilu: {
        const T s = sigmoid(input[i]);
        grad_in[i] = g * (s + input[i] * s * (T(1) - s));
        break;
      }
      case Activation::kLeakyRelu: grad_in[i] = input[i] > T(0) ? g : T(kLeakySlope) * g; break;
      case Activation::kRelu: grad_in[i] = input[i] > T(0) ? g : T(0); break;
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- linear

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Param<T>& weight, std::type_identity_t<const Param<T>*> bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight.value, 2, "linear weight");
  const int B = input.dim(0), in = input.dim(1), out = weight.value.dim(0);
  if (weight.value.dim(1) != in) {
    throw ShapeError("linear: weight " + dims(weight.value.shape()) + " incompatible with input " + dims(input.shape()));
  }
  if (bias && bias->value.shape() != Shape{out}) throw ShapeError("linear: bias shape mismatch");
  Tensor<T> y({B, out});
  ConstMatrixMap<T> x(input.data(), B, in);
  ConstMatrixMap<T> w(weight.value.data(), out, in);
  MatrixMap<T> ym(y.data(), B, out);
  ym.noalias() = x * w.transpose();
  if (bias) {
    for (int b = 0; b < B; ++b)
      for (int o = 0; o < out; ++o) ym(b, o) += bias->value[static_cast<std::size_t>(o)];
  }
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& input, Param<T>& weight, std::type_identity_t<Param<T>*> bias,
                          const Tensor<T>& grad_out) {
  require_rank(input, 2, "linear_backward input");
  const int B = input.dim(0), in = input.dim(1), out = weight.value.dim(0);
  if (grad_out.shape() != Shape{B, out}) throw ShapeError("linear_backward: gradient shape mismatch");
  ConstMatrixMap<T> x(input.data(), B, in);
  ConstMatrixMap<T> w(weight.value.data(), out, in);
  ConstMatrixMap<T> dy(grad_out.data(), B, out);
  MatrixMap<T> dw(weight.grad.data(), out, in);
  dw.noalias() += dy.transpose() * x;
  if (bias) {
    for (int o = 0; o < out; ++o) bias->grad[static_cast<std::size_t>(o)] += dy.col(o).sum();
  }
  Tensor<T> dx({B, in});
  MatrixMap<T> dxm(dx.data(), B, in);
  dxm.noalias() = dy * w;
  return dx;
}

// ---------------------------------------------------------------- plumbing

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& input) {
  require_rank(input, 4, "upsample input");
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  Tensor<T> out({B, C, 2 * H, 2 * W});
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < 2 * H; ++h)
        for (int w = 0; w < 2 * W; ++w) out.at(n, c, h, w) = input.at(n, c, h / 2, w / 2);
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& grad_out) {
  require_rank(grad_out, 4, "upsample_backward grad");
  const int B = grad_out.dim(0), C = grad_out.dim(1), H2 = grad_out.dim(2), W2 = grad_out.dim(3);
  if (H2 % 2 || W2 % 2) throw ShapeError("upsample_backward: odd spatial extent");
  Tensor<T> grad_in({B, C, H2 / 2, W2 / 2});
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H2; ++h)
        for (int w = 0; w < W2; ++w) grad_in.at(n, c, h / 2, w / 2) += grad_out.at(n, c, h, w);
  return grad_in;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 4, "concat a");
  require_rank(b, 4, "concat b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible " + dims(a.shape()) + " and " + dims(b.shape()));
  }
  const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const std::size_t area = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  Tensor<T> out({B, Ca + Cb, a.dim(2), a.dim(3)});
  for (int n = 0; n < B; ++n) {
    T* dst = out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * area;
    std::copy_n(a.data() + static_cast<std::size_t>(n) * Ca * area, Ca * area, dst);
    std::copy_n(b.data() + static_cast<std::size_t>(n) * Cb * area, Cb * area, dst + Ca * area);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad_out, int channels_a) {
  require_rank(grad_out, 4, "split_channels");
  const int B = grad_out.dim(0), C = grad_out.dim(1), H = grad_out.dim(2), W = grad_out.dim(3);
  if (channels_a <= 0 || channels_a >= C) throw ShapeError("split_channels: split point out of range");
  const int Cb = C - channels_a;
  const std::size_t area = static_cast<std::size_t>(H) * W;
  Tensor<T> ga({B, channels_a, H, W});
  Tensor<T> gb({B, Cb, H, W});
  for (int n = 0; n < B; ++n) {
    const T* src = grad_out.data() + static_cast<std::size_t>(n) * C * area;
    std::copy_n(src, channels_a * area, ga.data() + static_cast<std::size_t>(n) * channels_a * area);
    std::copy_n(src + channels_a * area, Cb * area, gb.data() + static_cast<std::size_t>(n) * Cb * area);
  }
  return {std::move(ga), std::move(gb)};
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape s = broadcast_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(s);
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c)
      for (int h = 0; h < s[2]; ++h)
        for (int w = 0; w < s[3]; ++w)
          out.at(n, c, h, w) = a[bcast_offset(a.shape(), n, c, h, w)] + b[bcast_offset(b.shape(), n, c, h, w)];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape s = broadcast_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(s);
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c)
      for (int h = 0; h < s[2]; ++h)
        for (int w = 0; w < s[3]; ++w)
          out.at(n, c, h, w) = a[bcast_offset(a.shape(), n, c, h, w)] * b[bcast_offset(b.shape(), n, c, h, w)];
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> add_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out) {
  const Shape s = broadcast_shape(a.shape(), b.shape(), "add_backward");
  if (grad_out.shape() != s) throw ShapeError("add_backward: gradient shape mismatch");
  Tensor<T> ga = Tensor<T>::zeros_like(a);
  Tensor<T> gb = Tensor<T>::zeros_like(b);
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c)
      for (int h = 0; h < s[2]; ++h)
        for (int w = 0; w < s[3]; ++w) {
          const T g = grad_out.at(n, c, h, w);
          ga[bcast_offset(a.shape(), n, c, h, w)] += g;
          gb[bcast_offset(b.shape(), n, c, h, w)] += g;
        }
  return {std::move(ga), std::move(gb)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> mul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out) {
  const Shape s = broadcast_shape(a.shape(), b.shape(), "mul_backward");
  if (grad_out.shape() != s) throw ShapeError("mul_backward: gradient shape mismatch");
  Tensor<T> ga = Tensor<T>::zeros_like(a);
  Tensor<T> gb = Tensor<T>::zeros_like(b);
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c)
      for (int h = 0; h < s[2]; ++h)
        for (int w = 0; w < s[3]; ++w) {
          const T g = grad_out.at(n, c, h, w);
          const std::size_t ia = bcast_offset(a.shape(), n, c, h, w);
          const std::size_t ib = bcast_offset(b.shape(), n, c, h, w);
          ga[ia] += g * b[ib];
          gb[ib] += g * a[ia];
        }
  return {std::move(ga), std::move(gb)};
}

#define TEMPODET_INSTANTIATE_OPS(T)                                                                           \
  template T sigmoid<T>(T);                                                                                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, Conv2dSpec);             \
  template Tensor<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>*, Conv2dSpec, \
                                        const Tensor<T>&, bool);                                              \
  template Tensor<T> pool2d<T>(const Tensor<T>&, PoolMode, int, int);                                         \
  template Tensor<T> pool2d_backward<T>(const Tensor<T>&, PoolMode, int, int, const Tensor<T>&);              \
  template Tensor<T> global_pool<T>(const Tensor<T>&, PoolMode);                                              \
  template Tensor<T> global_pool_backward<T>(const Tensor<T>&, PoolMode, const Tensor<T>&);                   \
  template Tensor<T> channel_reduce<T>(const Tensor<T>&, PoolMode);                                           \
  template Tensor<T> channel_reduce_backward<T>(const Tensor<T>&, PoolMode, const Tensor<T>&);                \
  template Tensor<T> activation<T>(const Tensor<T>&, Activation);                                             \
  template Tensor<T> activation_backward<T>(const Tensor<T>&, const Tensor<T>&, Activation, const Tensor<T>&); \
  template Tensor<T> linear<T>(const Tensor<T>&, const Param<T>&, const Param<T>*);                           \
  template Tensor<T> linear_backward<T>(const Tensor<T>&, Param<T>&, Param<T>*, const Tensor<T>&);            \
  template Tensor<T> upsample_nearest2<T>(const Tensor<T>&);                                                  \
  template Tensor<T> upsample_nearest2_backward<T>(const Tensor<T>&);                                         \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template std::pair<Tensor<T>, Tensor<T>> split_channels<T>(const Tensor<T>&, int);                          \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                              \
  template std::pair<Tensor<T>, Tensor<T>> add_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template std::pair<Tensor<T>, Tensor<T>> mul_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

TEMPODET_INSTANTIATE_OPS(float)
TEMPODET_INSTANTIATE_OPS(double)

#undef TEMPODET_INSTANTIATE_OPS

}  // namespace tempodet::numkit
