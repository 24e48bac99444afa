#include "tempodet/detector/config.hpp"

#include <algorithm>
#include <cmath>

#include "tempodet/errors.hpp"

namespace tempodet::detector {

Variant variant_from_name(const std::string& name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "temporal") return Variant::kTemporal;
  if (name == "temporal_cbam") return Variant::kTemporalCbam;
  throw ConfigError("unknown variant '" + name + "' (expected baseline, temporal or temporal_cbam)");
}

std::string variant_name(Variant variant) {
  switch (variant) {
    case Variant::kBaseline: return "baseline";
    case Variant::kTemporal: return "temporal";
    case Variant::kTemporalCbam: return "temporal_cbam";
  }
  return "baseline";
}

AnchorSet default_anchors(int image_size) {
  static constexpr double kCoco[3][3][2] = {{{10, 13}, {16, 30}, {33, 23}},
                                            {{30, 61}, {62, 45}, {59, 119}},
                                            {{116, 90}, {156, 198}, {373, 326}}};
  const double s = image_size / 640.0;
  AnchorSet out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = {kCoco[i][j][0] * s, kCoco[i][j][1] * s};
  return out;
}

namespace {

double wh_iou(double w1, double h1, double w2, double h2) {
  const double inter = std::min(w1, w2) * std::min(h1, h2);
  return inter / (w1 * h1 + w2 * h2 - inter);
}

}  // namespace

AnchorSet kmeans_anchors(const std::vector<std::pair<double, double>>& sizes, int iterations) {
  constexpr int k = kNumScales * kAnchorsPerScale;
  if (static_cast<int>(sizes.size()) < k) throw ConfigError("kmeans_anchors: need at least 9 boxes");
  for (const auto& [w, h] : sizes)
    if (!(w > 0 && h > 0)) throw ConfigError("kmeans_anchors: box sizes must be positive");
  std::vector<std::pair<double, double>> by_area = sizes;
  std::sort(by_area.begin(), by_area.end(),
            [](const auto& a, const auto& b) { return a.first * a.second < b.first * b.second; });
  std::vector<std::pair<double, double>> centers;
  for (int i = 0; i < k; ++i)
    centers.push_back(by_area[static_cast<std::size_t>((2 * i + 1) * by_area.size() / (2 * k))]);
  std::vector<int> assign(sizes.size(), 0);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      double best = -1.0;
      for (int c = 0; c < k; ++c) {
        const double v = wh_iou(sizes[i].first, sizes[i].second, centers[static_cast<std::size_t>(c)].first,
                                centers[static_cast<std::size_t>(c)].second);
        if (v > best) best = v, assign[i] = c;
      }
    }
    std::vector<double> sw(k, 0.0), sh(k, 0.0), n(k, 0.0);
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      sw[c] += sizes[i].first, sh[c] += sizes[i].second, n[c] += 1.0;
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c)
      if (n[c] > 0) centers[c] = {sw[c] / n[c], sh[c] / n[c]};
  }
  std::sort(centers.begin(), centers.end(),
            [](const auto& a, const auto& b) { return a.first * a.second < b.first * b.second; });
  AnchorSet out{};
  for (int i = 0; i < k; ++i)
    out[static_cast<std::size_t>(i / 3)][static_cast<std::size_t>(i % 3)] = {centers[static_cast<std::size_t>(i)].first,
                                                                              centers[static_cast<std::size_t>(i)].second};
  return out;
}

ModelConfig ModelConfig::for_variant(Variant variant, int width, int num_classes, int image_size, int window) {
  ModelConfig c;
  c.variant = variant;
  c.width = width;
  c.num_classes = num_classes;
  c.image_size = image_size;
  c.window = window;
  c.anchors = default_anchors(image_size);
  const bool temporal = variant != Variant::kBaseline;
  c.convlstm_per_scale = {temporal, temporal, temporal};
  c.cbam_after_neck = variant == Variant::kTemporalCbam;
  return c;
}

int ModelConfig::scale_channels(int scale) const { return width * (2 << scale); }

void ModelConfig::validate() const {
  if (width < 1) throw ConfigError("model: width must be at least 1");
  if (num_classes < 1) throw ConfigError("model: num_classes must be at least 1");
  if (image_size < 32 || image_size % 32 != 0)
    throw ConfigError("model: image_size must be a positive multiple of 32, got " + std::to_string(image_size));
  if (window < 1) throw ConfigError("model: window must be at least 1");
  if (cbam_reduction < 1) throw ConfigError("model: cbam_reduction must be at least 1");
  if (strides != std::array<int, 3>{8, 16, 32}) throw ConfigError("model: strides must be 8, 16, 32");
  for (const auto& scale : anchors)
    for (const auto& a : scale)
      if (!(a.w > 0 && a.h > 0 && std::isfinite(a.w) && std::isfinite(a.h))) throw ConfigError("model: anchors must be positive");
  switch (variant) {
    case Variant::kBaseline:
      if (cbam_after_neck || temporal()) throw ConfigError("model: baseline variant has no CBAM or ConvLSTM");
      break;
    case Variant::kTemporal:
      if (cbam_after_neck || !temporal()) throw ConfigError("model: temporal variant needs ConvLSTM and no CBAM");
      break;
    case Variant::kTemporalCbam:
      if (!cbam_after_neck || !temporal()) throw ConfigError("model: temporal_cbam variant needs CBAM and ConvLSTM");
      break;
  }
}

}  // namespace tempodet::detector
