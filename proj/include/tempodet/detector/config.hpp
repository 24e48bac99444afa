#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace tempodet::detector {

enum class Variant { kBaseline, kTemporal, kTemporalCbam };

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant variant);

struct Anchor {
  double w = 0.0;
  double h = 0.0;
  bool operator==(const Anchor&) const = default;
};

using AnchorSet = std::array<std::array<Anchor, 3>, 3>;

inline constexpr int kNumScales = 3;
inline constexpr int kAnchorsPerScale = 3;

// The usual COCO anchors, scaled from 640 to `image_size`.
AnchorSet default_anchors(int image_size);

// k-means (1 - IoU distance) over box sizes in pixels, seeded at area
// quantiles; sorted by area and dealt three per scale, smallest to the finest.
AnchorSet kmeans_anchors(const std::vector<std::pair<double, double>>& sizes, int iterations = 50);

struct ModelConfig {
  Variant variant = Variant::kBaseline;
  int width = 16;
  int num_classes = 1;
  AnchorSet anchors = default_anchors(640);
  std::array<int, 3> strides{8, 16, 32};
  bool cbam_after_neck = false;
  std::array<bool, 3> convlstm_per_scale{false, false, false};
  int window = 3;
  int image_size = 640;
  int cbam_reduction = 16;
  // Head input is the last frame's feature plus the final ConvLSTM state.
  bool temporal_skip = true;

  // Sets the CBAM/ConvLSTM flags the variant implies and anchors for the size.
  static ModelConfig for_variant(Variant variant, int width, int num_classes, int image_size, int window = 3);

  void validate() const;
  bool temporal() const { return convlstm_per_scale[0] || convlstm_per_scale[1] || convlstm_per_scale[2]; }
  // Frames the model consumes per sample.
  int frames() const { return temporal() ? window : 1; }
  int outputs_per_anchor() const { return 5 + num_classes; }
  int grid(int scale) const { return image_size / strides[static_cast<std::size_t>(scale)]; }
  // Channel width of the neck output at a scale.
  int scale_channels(int scale) const;
  bool operator==(const ModelConfig&) const = default;
};

}  // namespace tempodet::detector
