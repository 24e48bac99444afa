#pragma once

#include <array>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tempodet/attention.hpp"
#include "tempodet/detector/config.hpp"
#include "tempodet/numkit/ops.hpp"
#include "tempodet/temporal.hpp"

namespace tempodet::detector {

using numkit::Param;
using numkit::Tensor;

// One raw map per scale: [B, A*(5+nc), H/stride, W/stride], per-anchor block
// (tx, ty, tw, th, obj, cls...).
template <typename T>
using RawPrediction = std::array<Tensor<T>, 3>;

template <typename T>
struct ConvBlock {
  Param<T> weight;
  Param<T> bias;
  numkit::Conv2dSpec spec;
  numkit::Activation act = numkit::Activation::kSilu;
};

template <typename T>
struct ConvCache {
  Tensor<T> input;
  Tensor<T> pre;
  Tensor<T> out;
};

enum ConvId : int {
  kStem,
  kDown1,
  kMix1,
  kDown2,
  kMix2,
  kDown3,
  kMix3,
  kDown4,
  kMix4,
  kLateral5,
  kTopDown4,
  kLateral4,
  kOut3,
  kBottomUp3,
  kOut4,
  kBottomUp4,
  kOut5,
  kNumConvs
};

template <typename T>
struct ForwardCache {
  int batch = 0;   // samples
  int frames = 1;  // frames per sample
  std::array<ConvCache<T>, kNumConvs> convs;
  std::array<attention::CbamCache<T>, 3> cbam;
  std::array<Tensor<T>, 3> neck_out;  // per-frame features fed to the temporal stage
  std::array<temporal::RolloutCache<T>, 3> lstm;
  std::array<ConvCache<T>, 3> heads;
};

/// Mini single-stage detector: conv backbone, PAN neck, optional CBAM and
/// ConvLSTM per scale, 1x1 anchor head.
template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::mt19937_64& rng);
  // All weights and biases zero.
  static Model zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // input: [batch * frames, 3, S, S], frames of one sample contiguous and in
  // time order.
  RawPrediction<T> forward(const Tensor<T>& input, ForwardCache<T>* cache = nullptr) const;
  // Accumulates parameter gradients; returns the gradient w.r.t. the input.
  Tensor<T> backward(const ForwardCache<T>& cache, const RawPrediction<T>& grad, bool need_input_grad = false);

  template <typename U>
  Model<U> cast() const;

 private:
  template <typename U>
  friend class Model;
  explicit Model(const ModelConfig& config);

  ModelConfig config_;
  std::array<ConvBlock<T>, kNumConvs> convs_;
  std::array<std::optional<attention::CbamParams<T>>, 3> cbam_;
  std::array<std::optional<temporal::ConvLstmParams<T>>, 3> lstm_;
  std::array<ConvBlock<T>, 3> heads_;
};

}  // namespace tempodet::detector
