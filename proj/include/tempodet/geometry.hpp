#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tempodet/numkit/tensor.hpp"

namespace tempodet::geometry {

using numkit::Tensor;

/// Normalized center-size box (YOLO label convention), fractions of the image extent.
struct NormBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  int class_id = 0;

  bool operator==(const NormBox&) const = default;
};

/// Pixel corner box. Coordinates are continuous reals; area = (x2-x1)(y2-y1).
struct PixelBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  int class_id = 0;
  double confidence = 1.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool operator==(const PixelBox&) const = default;
};

// The out-of-range flag is set when the box had to be clamped to the image.
PixelBox norm_to_pixel(const NormBox& box, int img_w, int img_h, bool* clamped = nullptr);
NormBox pixel_to_norm(const PixelBox& box, int img_w, int img_h);

// Clips a normalized box to the unit square. Returns false when nothing of
// positive area remains.
bool clip_to_unit(NormBox& box);

bool is_valid(const NormBox& box);

struct LetterboxTransform {
  double scale = 1.0;
  double pad_x = 0.0;
  double pad_y = 0.0;
  int src_w = 0;
  int src_h = 0;
  int dst = 0;

  std::pair<double, double> apply(double x, double y) const { return {x * scale + pad_x, y * scale + pad_y}; }
  std::pair<double, double> invert(double x, double y) const { return {(x - pad_x) / scale, (y - pad_y) / scale}; }
  NormBox apply(const NormBox& box) const;
  PixelBox invert(const PixelBox& box) const;
};

/// Aspect-preserving resize of a [C,H,W] image into a dst x dst canvas, the
/// short axis padded equally on both sides with `fill`.
std::pair<Tensor<float>, LetterboxTransform> letterbox(const Tensor<float>& image, int dst = 640, float fill = 0.5f);

/// Bilinear resampling of a [C,H,W] image (pixel-center aligned).
Tensor<float> resize_bilinear(const Tensor<float>& image, int out_h, int out_w);

double iou(const PixelBox& a, const PixelBox& b);

struct NmsOptions {
  double iou_threshold = 0.45;
  double conf_threshold = 0.25;
};

/// Class-aware greedy suppression. Output is ordered by descending confidence,
/// ties broken by input order.
std::vector<PixelBox> nms(const std::vector<PixelBox>& dets, const NmsOptions& options = {});

// YOLO label lines: `class_id cx cy w h`.
NormBox parse_label_line(std::string_view line, const std::string& source, int line_number);
std::string format_label_line(const NormBox& box);
std::vector<NormBox> read_label_file(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path, const std::vector<NormBox>& boxes);

}  // namespace tempodet::geometry
