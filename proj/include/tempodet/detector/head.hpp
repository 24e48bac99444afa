#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tempodet/detector/model.hpp"
#include "tempodet/geometry.hpp"

namespace tempodet::detector {

using geometry::NormBox;
using geometry::PixelBox;

struct DecodeOptions {
  double conf_threshold = 0.25;
  double iou_threshold = 0.45;
  int max_detections = 300;
};

// Box from raw offsets at grid cell (gx, gy).
PixelBox decode_cell(const std::array<double, 4>& t, int gx, int gy, int stride, const Anchor& anchor);
// Inverse of decode_cell for a box (center/size in pixels) assigned to that cell.
std::array<double, 4> encode_cell(double cx, double cy, double w, double h, int gx, int gy, int stride,
                                  const Anchor& anchor);

// Detections per batch item, after the confidence threshold and NMS.
template <typename T>
std::vector<std::vector<PixelBox>> decode(const RawPrediction<T>& raw, const ModelConfig& config,
                                          const DecodeOptions& options = {});

struct Positive {
  int batch = 0;
  int scale = 0;
  int anchor = 0;
  int gx = 0;
  int gy = 0;
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;  // target box in pixels
  std::array<double, 4> encoded{};
};

struct Targets {
  int batch = 0;
  std::vector<Positive> positives;
  std::array<std::vector<std::uint8_t>, 3> obj_mask;  // [B, A, H, W] per scale
  int skipped_degenerate = 0;
};

inline constexpr double kAssignIouThreshold = 0.2;
// Largest box/anchor side ratio the decode parameterization can express.
inline constexpr double kMaxAnchorRatio = 4.0;

Targets assign_targets(const std::vector<std::vector<NormBox>>& labels, const ModelConfig& config);

struct LossWeights {
  double box = 0.05;
  double obj = 1.0;
  double cls = 0.5;
};

struct LossOptions {
  LossWeights weights;
  bool ciou = false;
};

struct LossValue {
  double box = 0.0;
  double obj = 0.0;
  double cls = 0.0;
  double total = 0.0;
};

// IoU (or CIoU) of a box against a target, with d/d(tx,ty,tw,th) of the
// predicted box when `grad` is given.
double box_overlap(const std::array<double, 4>& t, const Positive& target, const ModelConfig& config, bool ciou,
                   std::array<double, 4>* grad = nullptr);

// Writes d(total)/d(raw) into `grad` when given.
template <typename T>
LossValue detection_loss(const RawPrediction<T>& raw, const Targets& targets, const ModelConfig& config,
                         const LossOptions& options = {}, RawPrediction<T>* grad = nullptr);

}  // namespace tempodet::detector
