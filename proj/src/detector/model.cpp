#include "tempodet/detector/model.hpp"

#include <cmath>

#include "tempodet/errors.hpp"
#include "tempodet/numkit/init.hpp"

namespace tempodet::detector {

namespace {

using numkit::Activation;

struct ConvShape {
  const char* name;
  int in_mult;   // input channels as a multiple of width (0 means image channels)
  int out_mult;
  int kernel;
  int stride;
};

// Channel multipliers are relative to the base width.
constexpr std::array<ConvShape, kNumConvs> kLayout{{{"backbone.stem", 0, 1, 3, 2},
                                                    {"backbone.down1", 1, 1, 3, 2},
                                                    {"backbone.mix1", 1, 1, 3, 1},
                                                    {"backbone.down2", 1, 2, 3, 2},
                                                    {"backbone.mix2", 2, 2, 3, 1},
                                                    {"backbone.down3", 2, 4, 3, 2},
                                                    {"backbone.mix3", 4, 4, 3, 1},
                                                    {"backbone.down4", 4, 8, 3, 2},
                                                    {"backbone.mix4", 8, 8, 3, 1},
                                                    {"neck.lateral5", 8, 4, 1, 1},
                                                    {"neck.topdown4", 8, 4, 3, 1},
                                                    {"neck.lateral4", 4, 2, 1, 1},
                                                    {"neck.out3", 4, 2, 3, 1},
                                                    {"neck.bottomup3", 2, 2, 3, 2},
                                                    {"neck.out4", 4, 4, 3, 1},
                                                    {"neck.bottomup4", 4, 4, 3, 2},
                                                    {"neck.out5", 8, 8, 3, 1}}};

constexpr std::array<const char*, 3> kScaleNames{"p3", "p4", "p5"};

template <typename T>
ConvBlock<T> make_block(const std::string& name, int cin, int cout, int k, int stride, Activation act) {
  ConvBlock<T> b;
  b.weight = Param<T>(name + ".weight", Tensor<T>({cout, cin, k, k}));
  b.bias = Param<T>(name + ".bias", Tensor<T>({cout}));
  b.spec = {stride, (k - 1) / 2};
  b.act = act;
  return b;
}

template <typename T>
Tensor<T> conv_forward(const ConvBlock<T>& b, const Tensor<T>& x, ConvCache<T>* cache) {
  Tensor<T> pre = numkit::conv2d(x, b.weight, &b.bias, b.spec);
  Tensor<T> out = numkit::activation(pre, b.act);
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
    cache->out = out;
  }
  return out;
}

template <typename T>
Tensor<T> conv_backward(ConvBlock<T>& b, const ConvCache<T>& cache, const Tensor<T>& dy, bool need_dx = true) {
  const Tensor<T> dpre = numkit::activation_backward(cache.pre, cache.out, b.act, dy);
  return numkit::conv2d_backward(cache.input, b.weight, &b.bias, b.spec, dpre, need_dx);
}

// Rows t, t+F, t+2F... of a [B*F, C, H, W] tensor.
template <typename T>
Tensor<T> select_time(const Tensor<T>& x, int batch, int frames, int t) {
  const std::size_t per = x.size() / static_cast<std::size_t>(x.dim(0));
  Tensor<T> out({batch, x.dim(1), x.dim(2), x.dim(3)});
  for (int b = 0; b < batch; ++b) {
    const std::size_t src = static_cast<std::size_t>(b * frames + t) * per;
    std::copy(x.data() + src, x.data() + src + per, out.data() + static_cast<std::size_t>(b) * per);
  }
  return out;
}

template <typename T>
void scatter_time(Tensor<T>& dst, const Tensor<T>& src, int batch, int frames, int t) {
  const std::size_t per = src.size() / static_cast<std::size_t>(batch);
  for (int b = 0; b < batch; ++b) {
    const std::size_t off = static_cast<std::size_t>(b * frames + t) * per;
    for (std::size_t i = 0; i < per; ++i) dst[off + i] += src[static_cast<std::size_t>(b) * per + i];
  }
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int w = config_.width;
  for (int i = 0; i < kNumConvs; ++i) {
    const auto& l = kLayout[static_cast<std::size_t>(i)];
    const int cin = l.in_mult == 0 ? 3 : l.in_mult * w;
    convs_[static_cast<std::size_t>(i)] = make_block<T>(l.name, cin, l.out_mult * w, l.kernel, l.stride, Activation::kSilu);
  }
  for (int s = 0; s < 3; ++s) {
    const auto ss = static_cast<std::size_t>(s);
    const int C = config_.scale_channels(s);
    const std::string scale = kScaleNames[ss];
    if (config_.cbam_after_neck)
      cbam_[ss] = attention::zero_cbam_params<T>({C, config_.cbam_reduction, 7}, "cbam." + scale);
    if (config_.convlstm_per_scale[ss])
      lstm_[ss] = temporal::zero_convlstm_params<T>({C, C, 3}, "lstm." + scale);
    heads_[ss] = make_block<T>("head." + scale, C, kAnchorsPerScale * config_.outputs_per_anchor(), 1, 1,
                               Activation::kIdentity);
  }
}

template <typename T>
Model<T> Model<T>::zeros(const ModelConfig& config) {
  return Model<T>(config);
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::mt19937_64& rng) : Model(config) {
  for (auto& b : convs_) {
    const auto& sh = b.weight.value.shape();
    b.weight.value = numkit::he_normal<T>(sh, sh[1] * sh[2] * sh[3], rng);
  }
  for (int s = 0; s < 3; ++s) {
    const auto ss = static_cast<std::size_t>(s);
    const int C = config_.scale_channels(s);
    const std::string scale = kScaleNames[ss];
    if (cbam_[ss]) cbam_[ss] = attention::make_cbam_params<T>({C, config_.cbam_reduction, 7}, "cbam." + scale, rng);
    if (lstm_[ss]) lstm_[ss] = temporal::make_convlstm_params<T>({C, C, 3}, "lstm." + scale, rng);
    auto& h = heads_[ss];
    h.weight.value = numkit::he_normal<T>(h.weight.value.shape(), C, rng, 0.1);
    // Objectness prior of roughly 8 objects per 640x640 image and a flat class prior.
    const double cells = std::pow(640.0 / config_.strides[ss], 2.0);
    const double obj_bias = std::log(8.0 / cells);
    const double cls_bias = std::log(0.6 / std::max(0.99, config_.num_classes - 0.99));
    const int no = config_.outputs_per_anchor();
    for (int a = 0; a < kAnchorsPerScale; ++a) {
      h.bias.value[static_cast<std::size_t>(a * no + 4)] = static_cast<T>(obj_bias);
      for (int c = 0; c < config_.num_classes; ++c) h.bias.value[static_cast<std::size_t>(a * no + 5 + c)] = static_cast<T>(cls_bias);
    }
  }
}

template <typename T>
std::vector<Param<T>*> Model<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& b : convs_) {
    out.push_back(&b.weight);
    out.push_back(&b.bias);
  }
  for (int s = 0; s < 3; ++s) {
    const auto ss = static_cast<std::size_t>(s);
    if (cbam_[ss])
      for (auto* p : cbam_[ss]->params()) out.push_back(p);
    if (lstm_[ss])
      for (auto* p : lstm_[ss]->params()) out.push_back(p);
    out.push_back(&heads_[ss].weight);
    out.push_back(&heads_[ss].bias);
  }
  return out;
}

template <typename T>
std::vector<const Param<T>*> Model<T>::params() const {
  auto mutable_params = const_cast<Model<T>*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template <typename T>
RawPrediction<T> Model<T>::forward(const Tensor<T>& input, ForwardCache<T>* cache) const {
  numkit::require_rank(input, 4, "Model::forward");
  const int S = config_.image_size, F = config_.frames();
  if (input.dim(1) != 3 || input.dim(2) != S || input.dim(3) != S)
    throw ShapeError("Model::forward: expected [N,3," + std::to_string(S) + "," + std::to_string(S) + "] input, got " +
                     numkit::shape_string(input.shape()));
  if (input.dim(0) % F != 0)
    throw ShapeError("Model::forward: " + variant_name(config_.variant) + " expects windows of " + std::to_string(F) +
                     " frames, got " + std::to_string(input.dim(0)) + " frames");
  const int B = input.dim(0) / F;
  if (cache) {
    cache->batch = B;
    cache->frames = F;
  }
  auto conv = [&](int id, const Tensor<T>& x) {
    return conv_forward(convs_[static_cast<std::size_t>(id)], x, cache ? &cache->convs[static_cast<std::size_t>(id)] : nullptr);
  };
  const Tensor<T> c1 = conv(kMix1, conv(kDown1, conv(kStem, input)));
  const Tensor<T> p3 = conv(kMix2, conv(kDown2, c1));
  const Tensor<T> p4 = conv(kMix3, conv(kDown3, p3));
  const Tensor<T> p5 = conv(kMix4, conv(kDown4, p4));
  const Tensor<T> lat5 = conv(kLateral5, p5);
  const Tensor<T> lat4 = conv(kLateral4, conv(kTopDown4, numkit::concat_channels(numkit::upsample_nearest2(lat5), p4)));
  const Tensor<T> out3 = conv(kOut3, numkit::concat_channels(numkit::upsample_nearest2(lat4), p3));
  const Tensor<T> out4 = conv(kOut4, numkit::concat_channels(conv(kBottomUp3, out3), lat4));
  const Tensor<T> out5 = conv(kOut5, numkit::concat_channels(conv(kBottomUp4, out4), lat5));
  const std::array<const Tensor<T>*, 3> feats{&out3, &out4, &out5};

  RawPrediction<T> raw;
  for (int s = 0; s < 3; ++s) {
    const auto ss = static_cast<std::size_t>(s);
    Tensor<T> f = cbam_[ss] ? attention::cbam_forward(*feats[ss], *cbam_[ss], cache ? &cache->cbam[ss] : nullptr) : *feats[ss];
    Tensor<T> g;
    if (lstm_[ss]) {
      std::vector<Tensor<T>> seq;
      for (int t = 0; t < F; ++t) seq.push_back(select_time(f, B, F, t));
      auto states = temporal::convlstm_rollout(seq, *lstm_[ss], nullptr, cache ? &cache->lstm[ss] : nullptr);
      g = std::move(states.back().h);
      if (config_.temporal_skip) g += seq.back();
    } else {
      g = F > 1 ? select_time(f, B, F, F - 1) : std::move(f);
    }
    raw[ss] = conv_forward(heads_[ss], g, cache ? &cache->heads[ss] : nullptr);
  }
  return raw;
}

template <typename T>
Tensor<T> Model<T>::backward(const ForwardCache<T>& cache, const RawPrediction<T>& grad, bool need_input_grad) {
  const int B = cache.batch, F = cache.frames, w = config_.width;
  auto conv_bwd = [&](int id, const Tensor<T>& dy, bool need_dx = true) {
    return conv_backward(convs_[static_cast<std::size_t>(id)], cache.convs[static_cast<std::size_t>(id)], dy, need_dx);
  };
  std::array<Tensor<T>, 3> d_feat;
  for (int s = 0; s < 3; ++s) {
    const auto ss = static_cast<std::size_t>(s);
    const Tensor<T> dg = conv_backward(heads_[ss], cache.heads[ss], grad[ss]);
    const auto& feat_shape = cache.convs[static_cast<std::size_t>(kOut3 + 2 * s)].out.shape();
    Tensor<T> df;
    if (lstm_[ss]) {
      std::vector<Tensor<T>> dh(static_cast<std::size_t>(F));
      dh.back() = dg;
      const auto dxs = temporal::convlstm_rollout_backward(cache.lstm[ss], *lstm_[ss], dh);
      df = Tensor<T>(feat_shape);
      for (int t = 0; t < F; ++t) scatter_time(df, dxs[static_cast<std::size_t>(t)], B, F, t);
      if (config_.temporal_skip) scatter_time(df, dg, B, F, F - 1);
    } else if (F > 1) {
      df = Tensor<T>(feat_shape);
      scatter_time(df, dg, B, F, F - 1);
    } else {
      df = dg;
    }
    d_feat[ss] = cbam_[ss] ? attention::cbam_backward(cache.cbam[ss], *cbam_[ss], df) : std::move(df);
  }

  auto [d_bu4, d_lat5] = numkit::split_channels(conv_bwd(kOut5, d_feat[2]), 4 * w);
  Tensor<T> d_out4 = std::move(d_feat[1]);
  d_out4 += conv_bwd(kBottomUp4, d_bu4);
  auto [d_bu3, d_lat4] = numkit::split_channels(conv_bwd(kOut4, d_out4), 2 * w);
  Tensor<T> d_out3 = std::move(d_feat[0]);
  d_out3 += conv_bwd(kBottomUp3, d_bu3);
  auto [d_up4, d_p3] = numkit::split_channels(conv_bwd(kOut3, d_out3), 2 * w);
  d_lat4 += numkit::upsample_nearest2_backward(d_up4);
  auto [d_up5, d_p4] = numkit::split_channels(conv_bwd(kTopDown4, conv_bwd(kLateral4, d_lat4)), 4 * w);
  d_lat5 += numkit::upsample_nearest2_backward(d_up5);
  Tensor<T> d_p5 = conv_bwd(kLateral5, d_lat5);

  d_p4 += conv_bwd(kDown4, conv_bwd(kMix4, d_p5));
  d_p3 += conv_bwd(kDown3, conv_bwd(kMix3, d_p4));
  const Tensor<T> d_c1 = conv_bwd(kDown2, conv_bwd(kMix2, d_p3));
  const Tensor<T> d_c0 = conv_bwd(kDown1, conv_bwd(kMix1, d_c1));
  return conv_bwd(kStem, d_c0, need_input_grad);
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out(config_);
  auto dst = out.params();
  const auto src = params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value.template cast<U>();
  return out;
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace tempodet::detector
