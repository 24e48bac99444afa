#include "tempodet/detector/head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tempodet/errors.hpp"

namespace tempodet::detector {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

// Value with partial derivatives w.r.t. the four raw box offsets.
struct Dual {
  double v = 0.0;
  std::array<double, 4> d{};

  static Dual constant(double x) { return {x, {}}; }
  static Dual variable(double x, int i) {
    Dual r{x, {}};
    r.d[static_cast<std::size_t>(i)] = 1.0;
    return r;
  }
};

Dual operator+(const Dual& a, const Dual& b) {
  Dual r{a.v + b.v, {}};
  for (std::size_t i = 0; i < 4; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
Dual operator-(const Dual& a, const Dual& b) {
  Dual r{a.v - b.v, {}};
  for (std::size_t i = 0; i < 4; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
Dual operator*(const Dual& a, const Dual& b) {
  Dual r{a.v * b.v, {}};
  for (std::size_t i = 0; i < 4; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
Dual operator/(const Dual& a, const Dual& b) {
  Dual r{a.v / b.v, {}};
  for (std::size_t i = 0; i < 4; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
  return r;
}
Dual operator+(const Dual& a, double b) { return a + Dual::constant(b); }
Dual operator-(const Dual& a, double b) { return a - Dual::constant(b); }
Dual operator*(const Dual& a, double b) { return a * Dual::constant(b); }

Dual dual_sigmoid(const Dual& a) {
  const double s = sigmoid(a.v);
  Dual r{s, {}};
  for (std::size_t i = 0; i < 4; ++i) r.d[i] = s * (1 - s) * a.d[i];
  return r;
}
Dual dual_atan(const Dual& a) {
  Dual r{std::atan(a.v), {}};
  for (std::size_t i = 0; i < 4; ++i) r.d[i] = a.d[i] / (1 + a.v * a.v);
  return r;
}
const Dual& dual_min(const Dual& a, const Dual& b) { return a.v <= b.v ? a : b; }
const Dual& dual_max(const Dual& a, const Dual& b) { return a.v >= b.v ? a : b; }

constexpr double kEps = 1e-9;

void check_raw_shapes(const ModelConfig& config, const std::array<numkit::Shape, 3>& shapes, int* batch) {
  const int C = kAnchorsPerScale * config.outputs_per_anchor();
  for (int s = 0; s < 3; ++s) {
    const auto& sh = shapes[static_cast<std::size_t>(s)];
    const int G = config.grid(s);
    if (sh.size() != 4 || sh[1] != C || sh[2] != G || sh[3] != G || (s > 0 && sh[0] != *batch))
      throw ShapeError("raw prediction shape " + numkit::shape_string(sh) + " does not match the model config at scale " +
                       std::to_string(s));
    *batch = sh[0];
  }
}

}  // namespace

PixelBox decode_cell(const std::array<double, 4>& t, int gx, int gy, int stride, const Anchor& anchor) {
  const double cx = (2 * sigmoid(t[0]) - 0.5 + gx) * stride;
  const double cy = (2 * sigmoid(t[1]) - 0.5 + gy) * stride;
  const double sw = 2 * sigmoid(t[2]), sh = 2 * sigmoid(t[3]);
  const double w = anchor.w * sw * sw, h = anchor.h * sh * sh;
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, 0, 1.0};
}

std::array<double, 4> encode_cell(double cx, double cy, double w, double h, int gx, int gy, int stride,
                                  const Anchor& anchor) {
  return {logit((cx / stride - gx + 0.5) / 2), logit((cy / stride - gy + 0.5) / 2), logit(std::sqrt(w / anchor.w) / 2),
          logit(std::sqrt(h / anchor.h) / 2)};
}

template <typename T>
std::vector<std::vector<PixelBox>> decode(const RawPrediction<T>& raw, const ModelConfig& config,
                                          const DecodeOptions& options) {
  int B = 0;
  check_raw_shapes(config, {raw[0].shape(), raw[1].shape(), raw[2].shape()}, &B);
  const int no = config.outputs_per_anchor(), nc = config.num_classes;
  const double S = config.image_size;
  std::vector<std::vector<PixelBox>> out(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    std::vector<PixelBox> cand;
    for (int s = 0; s < 3; ++s) {
      const auto& r = raw[static_cast<std::size_t>(s)];
      const int G = config.grid(s), stride = config.strides[static_cast<std::size_t>(s)];
      for (int a = 0; a < kAnchorsPerScale; ++a)
        for (int gy = 0; gy < G; ++gy)
          for (int gx = 0; gx < G; ++gx) {
            const double obj = sigmoid(r.at(b, a * no + 4, gy, gx));
            if (obj < options.conf_threshold) continue;
            int best = 0;
            double best_logit = r.at(b, a * no + 5, gy, gx);
            for (int c = 1; c < nc; ++c) {
              const double v = r.at(b, a * no + 5 + c, gy, gx);
              if (v > best_logit) best = c, best_logit = v;
            }
            const double conf = obj * sigmoid(best_logit);
            if (conf < options.conf_threshold) continue;
            PixelBox p = decode_cell({r.at(b, a * no, gy, gx), r.at(b, a * no + 1, gy, gx), r.at(b, a * no + 2, gy, gx),
                                      r.at(b, a * no + 3, gy, gx)},
                                     gx, gy, stride,
                                     config.anchors[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]);
            p.x1 = std::clamp(p.x1, 0.0, S);
            p.y1 = std::clamp(p.y1, 0.0, S);
            p.x2 = std::clamp(p.x2, 0.0, S);
            p.y2 = std::clamp(p.y2, 0.0, S);
            if (p.width() <= 0 || p.height() <= 0) continue;
            p.class_id = best;
            p.confidence = conf;
            cand.push_back(p);
          }
    }
    auto kept = geometry::nms(cand, {options.iou_threshold, options.conf_threshold});
    if (options.max_detections > 0 && static_cast<int>(kept.size()) > options.max_detections)
      kept.resize(static_cast<std::size_t>(options.max_detections));
    out[static_cast<std::size_t>(b)] = std::move(kept);
  }
  return out;
}

Targets assign_targets(const std::vector<std::vector<NormBox>>& labels, const ModelConfig& config) {
  Targets t;
  t.batch = static_cast<int>(labels.size());
  const double S = config.image_size;
  for (int s = 0; s < 3; ++s) {
    const int G = config.grid(s);
    t.obj_mask[static_cast<std::size_t>(s)].assign(static_cast<std::size_t>(t.batch) * kAnchorsPerScale * G * G, 0);
  }
  for (int b = 0; b < t.batch; ++b) {
    for (const auto& box : labels[static_cast<std::size_t>(b)]) {
      if (!(box.w > 0 && box.h > 0)) {
        ++t.skipped_degenerate;
        continue;
      }
      const double cx = box.cx * S, cy = box.cy * S, w = box.w * S, h = box.h * S;
      for (int s = 0; s < 3; ++s) {
        const auto ss = static_cast<std::size_t>(s);
        const int G = config.grid(s), stride = config.strides[ss];
        int best = -1;
        double best_iou = kAssignIouThreshold;
        for (int a = 0; a < kAnchorsPerScale; ++a) {
          const Anchor& an = config.anchors[ss][static_cast<std::size_t>(a)];
          if (w / an.w >= kMaxAnchorRatio || h / an.h >= kMaxAnchorRatio) continue;
          const double inter = std::min(w, an.w) * std::min(h, an.h);
          const double iou = inter / (w * h + an.w * an.h - inter);
          if (iou >= best_iou) {
            if (best < 0 || iou > best_iou) best = a, best_iou = iou;
          }
        }
        if (best < 0) continue;
        Positive p;
        p.batch = b;
        p.scale = s;
        p.anchor = best;
        p.gx = std::clamp(static_cast<int>(std::floor(cx / stride)), 0, G - 1);
        p.gy = std::clamp(static_cast<int>(std::floor(cy / stride)), 0, G - 1);
        p.class_id = box.class_id;
        p.cx = cx, p.cy = cy, p.w = w, p.h = h;
        p.encoded = encode_cell(cx, cy, w, h, p.gx, p.gy, stride, config.anchors[ss][static_cast<std::size_t>(best)]);
        t.obj_mask[ss][((static_cast<std::size_t>(b) * kAnchorsPerScale + best) * G + p.gy) * G + p.gx] = 1;
        t.positives.push_back(p);
      }
    }
  }
  return t;
}

double box_overlap(const std::array<double, 4>& t, const Positive& target, const ModelConfig& config, bool ciou,
                   std::array<double, 4>* grad) {
  const auto ss = static_cast<std::size_t>(target.scale);
  const double stride = config.strides[ss];
  const Anchor& an = config.anchors[ss][static_cast<std::size_t>(target.anchor)];
  const Dual sx = dual_sigmoid(Dual::variable(t[0], 0)), sy = dual_sigmoid(Dual::variable(t[1], 1));
  const Dual sw = dual_sigmoid(Dual::variable(t[2], 2)) * 2.0, sh = dual_sigmoid(Dual::variable(t[3], 3)) * 2.0;
  const Dual px = (sx * 2.0 - 0.5 + target.gx) * stride;
  const Dual py = (sy * 2.0 - 0.5 + target.gy) * stride;
  const Dual pw = sw * sw * an.w, ph = sh * sh * an.h;
  const Dual px1 = px - pw * 0.5, px2 = px + pw * 0.5, py1 = py - ph * 0.5, py2 = py + ph * 0.5;
  const Dual tx1 = Dual::constant(target.cx - target.w / 2), tx2 = Dual::constant(target.cx + target.w / 2);
  const Dual ty1 = Dual::constant(target.cy - target.h / 2), ty2 = Dual::constant(target.cy + target.h / 2);
  Dual iw = dual_min(px2, tx2) - dual_max(px1, tx1);
  Dual ih = dual_min(py2, ty2) - dual_max(py1, ty1);
  if (iw.v <= 0) iw = Dual::constant(0.0);
  if (ih.v <= 0) ih = Dual::constant(0.0);
  const Dual inter = iw * ih;
  const Dual uni = pw * ph + target.w * target.h - inter + kEps;
  Dual result = inter / uni;
  if (ciou) {
    const Dual cw = dual_max(px2, tx2) - dual_min(px1, tx1);
    const Dual ch = dual_max(py2, ty2) - dual_min(py1, ty1);
    const Dual c2 = cw * cw + ch * ch + kEps;
    const Dual dx = px - target.cx, dy = py - target.cy;
    const Dual rho2 = dx * dx + dy * dy;
    const Dual diff = Dual::constant(std::atan(target.w / target.h)) - dual_atan(pw / ph);
    const Dual v = diff * diff * (4.0 / (std::numbers::pi * std::numbers::pi));
    const Dual alpha = v / (v - result + (1.0 + kEps));
    result = result - (rho2 / c2 + v * alpha);
  }
  if (grad) *grad = result.d;
  return result.v;
}

namespace {

double bce_with_logits(double x, double y) { return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

template <typename T>
LossValue detection_loss(const RawPrediction<T>& raw, const Targets& targets, const ModelConfig& config,
                         const LossOptions& options, RawPrediction<T>* grad) {
  int B = 0;
  check_raw_shapes(config, {raw[0].shape(), raw[1].shape(), raw[2].shape()}, &B);
  if (B != targets.batch) throw ShapeError("detection_loss: targets were built for a different batch size");
  const int no = config.outputs_per_anchor(), nc = config.num_classes;
  const auto& w = options.weights;
  if (grad)
    for (int s = 0; s < 3; ++s) (*grad)[static_cast<std::size_t>(s)] = Tensor<T>::zeros_like(raw[static_cast<std::size_t>(s)]);

  LossValue lv;
  for (int s = 0; s < 3; ++s) {
    const auto ss = static_cast<std::size_t>(s);
    const int G = config.grid(s);
    const auto& r = raw[ss];
    const auto& mask = targets.obj_mask[ss];
    const double n = static_cast<double>(mask.size());
    double sum = 0.0;
    std::size_t m = 0;
    for (int b = 0; b < B; ++b)
      for (int a = 0; a < kAnchorsPerScale; ++a)
        for (int gy = 0; gy < G; ++gy)
          for (int gx = 0; gx < G; ++gx, ++m) {
            const double x = r.at(b, a * no + 4, gy, gx), y = mask[m];
            sum += bce_with_logits(x, y);
            if (grad) (*grad)[ss].at(b, a * no + 4, gy, gx) = static_cast<T>(w.obj * (sigmoid(x) - y) / n);
          }
    lv.obj += sum / n;
  }

  const double P = static_cast<double>(targets.positives.size());
  for (const auto& p : targets.positives) {
    const auto ss = static_cast<std::size_t>(p.scale);
    const auto& r = raw[ss];
    const int base = p.anchor * no;
    const std::array<double, 4> t{r.at(p.batch, base, p.gy, p.gx), r.at(p.batch, base + 1, p.gy, p.gx),
                                  r.at(p.batch, base + 2, p.gy, p.gx), r.at(p.batch, base + 3, p.gy, p.gx)};
    std::array<double, 4> g{};
    const double overlap = box_overlap(t, p, config, options.ciou, grad ? &g : nullptr);
    lv.box += (1.0 - overlap) / P;
    for (int c = 0; c < nc; ++c) {
      const double x = r.at(p.batch, base + 5 + c, p.gy, p.gx), y = c == p.class_id ? 1.0 : 0.0;
      lv.cls += bce_with_logits(x, y) / (P * nc);
      if (grad) (*grad)[ss].at(p.batch, base + 5 + c, p.gy, p.gx) += static_cast<T>(w.cls * (sigmoid(x) - y) / (P * nc));
    }
    if (grad)
      for (int k = 0; k < 4; ++k) (*grad)[ss].at(p.batch, base + k, p.gy, p.gx) += static_cast<T>(-w.box * g[static_cast<std::size_t>(k)] / P);
  }
  lv.total = w.box * lv.box + w.obj * lv.obj + w.cls * lv.cls;
  return lv;
}

template std::vector<std::vector<PixelBox>> decode<float>(const RawPrediction<float>&, const ModelConfig&, const DecodeOptions&);
template std::vector<std::vector<PixelBox>> decode<double>(const RawPrediction<double>&, const ModelConfig&, const DecodeOptions&);
template LossValue detection_loss<float>(const RawPrediction<float>&, const Targets&, const ModelConfig&, const LossOptions&,
                                         RawPrediction<float>*);
template LossValue detection_loss<double>(const RawPrediction<double>&, const Targets&, const ModelConfig&,
                                          const LossOptions&, RawPrediction<double>*);

}  // namespace tempodet::detector
