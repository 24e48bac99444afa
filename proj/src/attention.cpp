#include "tempodet/attention.hpp"

#include <algorithm>

#include "tempodet/errors.hpp"
#include "tempodet/numkit/init.hpp"

namespace tempodet::attention {

using numkit::Activation;
using numkit::PoolMode;
using numkit::Shape;

namespace {

void validate(const CbamConfig& c) {
  if (c.channels < 1) throw ShapeError("cbam: channel count must be positive");
  if (c.reduction < 1) throw ShapeError("cbam: reduction must be positive");
  if (c.kernel < 1 || c.kernel % 2 == 0) throw ShapeError("cbam: spatial kernel must be odd");
}

template <typename T>
void check_input(const Tensor<T>& f, const CbamParams<T>& p) {
  numkit::require_rank(f, 4, "cbam input");
  if (f.dim(1) != p.config.channels) {
    throw ShapeError("cbam: parameters built for " + std::to_string(p.config.channels) + " channels, input is " +
                     numkit::shape_string(f.shape()));
  }
}

template <typename T>
Tensor<T> flatten_pooled(const Tensor<T>& pooled) {
  return pooled.reshaped({pooled.dim(0), pooled.dim(1)});
}

// Shared MLP on one pooled descriptor; fills the hidden caches.
template <typename T>
Tensor<T> mlp_forward(const Tensor<T>& x, const CbamParams<T>& p, Tensor<T>& hidden_pre, Tensor<T>& hidden) {
  const bool bias = p.config.mlp_bias;
  hidden_pre = numkit::linear(x, p.mlp_w1, bias ? &p.mlp_b1 : nullptr);
  hidden = numkit::activation(hidden_pre, p.config.hidden_activation);
  return numkit::linear(hidden, p.mlp_w2, bias ? &p.mlp_b2 : nullptr);
}

template <typename T>
Tensor<T> channel_gate(const Tensor<T>& f, const CbamParams<T>& p, CbamCache<T>& c) {
  c.pooled[0] = flatten_pooled(numkit::global_pool(f, PoolMode::kAvg));
  c.pooled[1] = flatten_pooled(numkit::global_pool(f, PoolMode::kMax));
  Tensor<T> logits = mlp_forward(c.pooled[0], p, c.hidden_pre[0], c.hidden[0]);
  logits += mlp_forward(c.pooled[1], p, c.hidden_pre[1], c.hidden[1]);
  Tensor<T> gate = numkit::activation(logits, Activation::kSigmoid);
  gate.reshape({f.dim(0), f.dim(1), 1, 1});
  return gate;
}

template <typename T>
Tensor<T> spatial_gate(const Tensor<T>& f, const CbamParams<T>& p, Tensor<T>& spatial_in) {
  spatial_in = numkit::concat_channels(numkit::channel_reduce(f, PoolMode::kAvg), numkit::channel_reduce(f, PoolMode::kMax));
  const numkit::Conv2dSpec spec{1, (p.config.kernel - 1) / 2};
  return numkit::activation(numkit::conv2d(spatial_in, p.spatial_kernel, nullptr, spec), Activation::kSigmoid);
}

}  // namespace

int cbam_hidden_width(int channels, int reduction) { return std::max(1, channels / std::max(1, reduction)); }

template <typename T>
std::vector<Param<T>*> CbamParams<T>::params() {
  std::vector<Param<T>*> out{&mlp_w1, &mlp_w2};
  if (config.mlp_bias) {
    out.push_back(&mlp_b1);
    out.push_back(&mlp_b2);
  }
  out.push_back(&spatial_kernel);
  return out;
}

template <typename T>
CbamParams<T> zero_cbam_params(const CbamConfig& config, const std::string& prefix) {
  validate(config);
  const int C = config.channels;
  const int hid = cbam_hidden_width(C, config.reduction);
  CbamParams<T> p;
  p.config = config;
  p.mlp_w1 = Param<T>(prefix + ".mlp_w1", Tensor<T>({hid, C}));
  p.mlp_w2 = Param<T>(prefix + ".mlp_w2", Tensor<T>({C, hid}));
  if (config.mlp_bias) {
    p.mlp_b1 = Param<T>(prefix + ".mlp_b1", Tensor<T>({hid}));
    p.mlp_b2 = Param<T>(prefix + ".mlp_b2", Tensor<T>({C}));
  }
  p.spatial_kernel = Param<T>(prefix + ".spatial_kernel", Tensor<T>({1, 2, config.kernel, config.kernel}));
  return p;
}

template <typename T>
CbamParams<T> make_cbam_params(const CbamConfig& config, const std::string& prefix, std::mt19937_64& rng) {
  CbamParams<T> p = zero_cbam_params<T>(config, prefix);
  const int C = config.channels;
  const int hid = p.hidden();
  p.mlp_w1.value = numkit::he_normal<T>({hid, C}, C, rng);
  p.mlp_w2.value = numkit::he_normal<T>({C, hid}, hid, rng, 0.5);
  p.spatial_kernel.value = numkit::he_normal<T>({1, 2, config.kernel, config.kernel}, 2 * config.kernel * config.kernel, rng, 0.5);
  return p;
}

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& features, const CbamParams<T>& p) {
  check_input(features, p);
  CbamCache<T> scratch;
  return channel_gate(features, p, scratch);
}

template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& features, const CbamParams<T>& p) {
  check_input(features, p);
  Tensor<T> scratch;
  return spatial_gate(features, p, scratch);
}

template <typename T>
Tensor<T> cbam_forward(const Tensor<T>& features, const CbamParams<T>& p, std::type_identity_t<CbamCache<T>>* cache) {
  check_input(features, p);
  CbamCache<T> local;
  CbamCache<T>& c = cache ? *cache : local;
  c.input = features;
  c.channel_gate = channel_gate(features, p, c);
  c.refined = numkit::mul(features, c.channel_gate);
  c.spatial_gate = spatial_gate(c.refined, p, c.spatial_in);
  return numkit::mul(c.refined, c.spatial_gate);
}

template <typename T>
Tensor<T> cbam_backward(const CbamCache<T>& c, CbamParams<T>& p, const Tensor<T>& grad_out) {
  const bool bias = p.config.mlp_bias;
  const int B = c.input.dim(0), C = c.input.dim(1);

  auto [d_refined, d_sgate] = numkit::mul_backward(c.refined, c.spatial_gate, grad_out);
  // Sigmoid derivative expressed through the gate values.
  Tensor<T> d_logit_s = d_sgate;
  for (std::size_t i = 0; i < d_logit_s.size(); ++i) {
    const T s = c.spatial_gate[i];
    d_logit_s[i] *= s * (T(1) - s);
  }
  const numkit::Conv2dSpec spec{1, (p.config.kernel - 1) / 2};
  const Tensor<T> d_spatial_in = numkit::conv2d_backward(c.spatial_in, p.spatial_kernel, nullptr, spec, d_logit_s);
  auto [d_avg_map, d_max_map] = numkit::split_channels(d_spatial_in, 1);
  d_refined += numkit::channel_reduce_backward(c.refined, PoolMode::kAvg, d_avg_map);
  d_refined += numkit::channel_reduce_backward(c.refined, PoolMode::kMax, d_max_map);

  auto [d_input, d_cgate] = numkit::mul_backward(c.input, c.channel_gate, d_refined);
  Tensor<T> d_logits({B, C});
  for (std::size_t i = 0; i < d_logits.size(); ++i) {
    const T s = c.channel_gate[i];
    d_logits[i] = d_cgate[i] * s * (T(1) - s);
  }
  const PoolMode modes[2] = {PoolMode::kAvg, PoolMode::kMax};
  for (int path = 0; path < 2; ++path) {
    const Tensor<T> d_hidden = numkit::linear_backward(c.hidden[path], p.mlp_w2, bias ? &p.mlp_b2 : nullptr, d_logits);
    const Tensor<T> d_hidden_pre =
        numkit::activation_backward(c.hidden_pre[path], c.hidden[path], p.config.hidden_activation, d_hidden);
    Tensor<T> d_pooled = numkit::linear_backward(c.pooled[path], p.mlp_w1, bias ? &p.mlp_b1 : nullptr, d_hidden_pre);
    d_pooled.reshape({B, C, 1, 1});
    d_input += numkit::global_pool_backward(c.input, modes[path], d_pooled);
  }
  return d_input;
}

#define TEMPODET_INSTANTIATE_CBAM(T)                                                                      \
  template struct CbamParams<T>;                                                                          \
  template CbamParams<T> make_cbam_params<T>(const CbamConfig&, const std::string&, std::mt19937_64&);    \
  template CbamParams<T> zero_cbam_params<T>(const CbamConfig&, const std::string&);                      \
  template Tensor<T> channel_attention<T>(const Tensor<T>&, const CbamParams<T>&);                        \
  template Tensor<T> spatial_attention<T>(const Tensor<T>&, const CbamParams<T>&);                        \
  template Tensor<T> cbam_forward<T>(const Tensor<T>&, const CbamParams<T>&, CbamCache<T>*);              \
  template Tensor<T> cbam_backward<T>(const CbamCache<T>&, CbamParams<T>&, const Tensor<T>&);

TEMPODET_INSTANTIATE_CBAM(float)
TEMPODET_INSTANTIATE_CBAM(double)

}  // namespace tempodet::attention
