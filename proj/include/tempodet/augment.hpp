#pragma once

#include <array>
#include <functional>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "tempodet/data.hpp"

namespace tempodet::augment {

using data::FrameSequence;
using numkit::Tensor;

using Range = std::pair<double, double>;

struct AugmentConfig {
  double mosaic_p = 0.5;
  double mixup_p = 0.15;
  Range mixup_lambda{0.3, 0.7};
  double erase_p = 0.3;
  Range erase_area{0.02, 0.2};
  double blur_p = 0.2;
  Range blur_sigma{0.5, 2.0};
  double noise_p = 0.2;
  double noise_sigma = 0.02;
  Range mosaic_center{0.25, 0.75};  // center jitter, as a fraction of each side
  double mosaic_min_area = 0.2;     // boxes keeping less of their area are dropped

  void validate() const;
  static AugmentConfig disabled();
};

struct MosaicRecord {
  int center_x = 0;
  int center_y = 0;
  bool operator==(const MosaicRecord&) const = default;
};

// The center splits the canvas into four quadrants (top-left, top-right,
// bottom-left, bottom-right in `inputs` order). Each input is scaled, aspect
// preserved, until it covers its quadrant, anchored at the center and cropped.
FrameSequence temporal_mosaic(const std::array<const FrameSequence*, 4>& inputs, std::mt19937_64& rng,
                              const AugmentConfig& config = {}, MosaicRecord* record = nullptr);
FrameSequence temporal_mosaic_at(const std::array<const FrameSequence*, 4>& inputs, int center_x, int center_y,
                                 double min_area = 0.2);

FrameSequence temporal_mixup(const FrameSequence& a, const FrameSequence& b, double lambda);

struct EraseRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool operator==(const EraseRect&) const = default;
};

EraseRect sample_erase_rect(int height, int width, Range area, std::mt19937_64& rng);
Tensor<float> apply_erase(const Tensor<float>& frame, const EraseRect& rect, std::mt19937_64& rng);
Tensor<float> random_erase(const Tensor<float>& frame, std::mt19937_64& rng, const AugmentConfig& config = {},
                           EraseRect* record = nullptr);

int blur_kernel_size(double sigma);
std::vector<double> gaussian_kernel(double sigma);
Tensor<float> random_blur(const Tensor<float>& frame, double sigma);

Tensor<float> gaussian_noise(const Tensor<float>& frame, double sigma, std::mt19937_64& rng);

// What the pipeline did to one window; identical geometry for every frame.
struct AugmentRecord {
  std::optional<MosaicRecord> mosaic;
  std::optional<double> mixup_lambda;
  std::optional<EraseRect> erase;
  std::optional<double> blur_sigma;
  std::optional<double> noise_sigma;
};

// Draws another window for mosaic and mixup partners.
using PartnerSource = std::function<FrameSequence(std::mt19937_64&)>;

FrameSequence augment_sequence(const FrameSequence& seq, const PartnerSource& partners, const AugmentConfig& config,
                               std::mt19937_64& rng, AugmentRecord* record = nullptr);

}  // namespace tempodet::augment
