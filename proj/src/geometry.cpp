#include "tempodet/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tempodet/errors.hpp"

namespace tempodet::geometry {

PixelBox norm_to_pixel(const NormBox& box, int img_w, int img_h, bool* clamped) {
  if (img_w < 1 || img_h < 1) throw std::invalid_argument("norm_to_pixel: image extent must be positive");
  PixelBox p;
  p.x1 = (box.cx - box.w / 2.0) * img_w;
  p.y1 = (box.cy - box.h / 2.0) * img_h;
  p.x2 = (box.cx + box.w / 2.0) * img_w;
  p.y2 = (box.cy + box.h / 2.0) * img_h;
  p.class_id = box.class_id;
  p.confidence = 1.0;
  const PixelBox raw = p;
  p.x1 = std::clamp(p.x1, 0.0, static_cast<double>(img_w));
  p.x2 = std::clamp(p.x2, 0.0, static_cast<double>(img_w));
  p.y1 = std::clamp(p.y1, 0.0, static_cast<double>(img_h));
  p.y2 = std::clamp(p.y2, 0.0, static_cast<double>(img_h));
  if (clamped) *clamped = !(raw == p);
  return p;
}

NormBox pixel_to_norm(const PixelBox& box, int img_w, int img_h) {
  if (img_w < 1 || img_h < 1) throw std::invalid_argument("pixel_to_norm: image extent must be positive");
  NormBox n;
  n.cx = (box.x1 + box.x2) / 2.0 / img_w;
  n.cy = (box.y1 + box.y2) / 2.0 / img_h;
  n.w = (box.x2 - box.x1) / img_w;
  n.h = (box.y2 - box.y1) / img_h;
  n.class_id = box.class_id;
  return n;
}

bool clip_to_unit(NormBox& box) {
  const double x1 = std::clamp(box.cx - box.w / 2.0, 0.0, 1.0);
  const double x2 = std::clamp(box.cx + box.w / 2.0, 0.0, 1.0);
  const double y1 = std::clamp(box.cy - box.h / 2.0, 0.0, 1.0);
  const double y2 = std::clamp(box.cy + box.h / 2.0, 0.0, 1.0);
  if (x2 <= x1 || y2 <= y1) return false;
  box.cx = (x1 + x2) / 2.0;
  box.cy = (y1 + y2) / 2.0;
  box.w = x2 - x1;
  box.h = y2 - y1;
  return true;
}

bool is_valid(const NormBox& box) {
  return box.class_id >= 0 && box.cx >= 0.0 && box.cx <= 1.0 && box.cy >= 0.0 && box.cy <= 1.0 && box.w > 0.0 &&
         box.w <= 1.0 && box.h > 0.0 && box.h <= 1.0;
}

NormBox LetterboxTransform::apply(const NormBox& box) const {
  NormBox out = box;
  const auto [cx, cy] = apply(box.cx * src_w, box.cy * src_h);
  out.cx = cx / dst;
  out.cy = cy / dst;
  out.w = box.w * src_w * scale / dst;
  out.h = box.h * src_h * scale / dst;
  return out;
}

PixelBox LetterboxTransform::invert(const PixelBox& box) const {
  PixelBox out = box;
  std::tie(out.x1, out.y1) = invert(box.x1, box.y1);
  std::tie(out.x2, out.y2) = invert(box.x2, box.y2);
  return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, int out_h, int out_w) {
  numkit::require_rank(image, 3, "resize_bilinear");
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (out_h == H && out_w == W) return image;
  Tensor<float> out({C, out_h, out_w});
  const double sy = static_cast<double>(H) / out_h;
  const double sx = static_cast<double>(W) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, H - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, W - 1);
      const double wx = fx - x0;
      for (int c = 0; c < C; ++c) {
        const float* p = image.data() + static_cast<std::size_t>(c) * H * W;
        const double top = p[y0 * W + x0] * (1 - wx) + p[y0 * W + x1] * wx;
        const double bot = p[y1 * W + x0] * (1 - wx) + p[y1 * W + x1] * wx;
        out[(static_cast<std::size_t>(c) * out_h + y) * out_w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

std::pair<Tensor<float>, LetterboxTransform> letterbox(const Tensor<float>& image, int dst, float fill) {
  numkit::require_rank(image, 3, "letterbox");
  if (dst < 1) throw std::invalid_argument("letterbox: destination size must be positive");
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  LetterboxTransform t;
  t.src_w = W;
  t.src_h = H;
  t.dst = dst;
  t.scale = static_cast<double>(dst) / std::max(H, W);
  const int new_w = std::clamp(static_cast<int>(std::lround(W * t.scale)), 1, dst);
  const int new_h = std::clamp(static_cast<int>(std::lround(H * t.scale)), 1, dst);
  const int left = (dst - new_w) / 2;
  const int top = (dst - new_h) / 2;
  t.pad_x = left;
  t.pad_y = top;
  const Tensor<float> resized = resize_bilinear(image, new_h, new_w);
  Tensor<float> canvas({C, dst, dst}, fill);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < new_h; ++y)
      std::copy_n(resized.data() + (static_cast<std::size_t>(c) * new_h + y) * new_w, new_w,
                  canvas.data() + (static_cast<std::size_t>(c) * dst + top + y) * dst + left);
  return {std::move(canvas), t};
}

double iou(const PixelBox& a, const PixelBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<PixelBox> nms(const std::vector<PixelBox>& dets, const NmsOptions& options) {
  std::vector<std::size_t> order;
  order.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].confidence >= options.conf_threshold) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  std::vector<PixelBox> kept;
  for (std::size_t i : order) {
    const PixelBox& cand = dets[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const PixelBox& k) {
      return k.class_id == cand.class_id && iou(k, cand) > options.iou_threshold;
    });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

namespace {

template <typename N>
bool parse_number(std::string_view token, N& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

NormBox parse_label_line(std::string_view line, const std::string& source, int line_number) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos > start) fields.push_back(line.substr(start, pos - start));
  }
  const std::string where = source + ":" + std::to_string(line_number);
  if (fields.size() != 5) {
    throw DataError(where + ": expected 5 fields 'class_id cx cy w h', got " + std::to_string(fields.size()));
  }
  NormBox box;
  if (!parse_number(fields[0], box.class_id) || box.class_id < 0) throw DataError(where + ": invalid class id");
  double* targets[4] = {&box.cx, &box.cy, &box.w, &box.h};
  for (int i = 0; i < 4; ++i) {
    if (!parse_number(fields[static_cast<std::size_t>(i + 1)], *targets[i])) {
      throw DataError(where + ": invalid number '" + std::string(fields[static_cast<std::size_t>(i + 1)]) + "'");
    }
  }
  if (!is_valid(box)) throw DataError(where + ": box outside normalized bounds");
  return box;
}

std::string format_label_line(const NormBox& box) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %.17g", box.class_id, box.cx, box.cy, box.w, box.h);
  return buf;
}

std::vector<NormBox> read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file " + path.string());
  std::vector<NormBox> boxes;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    boxes.push_back(parse_label_line(line, path.string(), number));
  }
  return boxes;
}

void write_label_file(const std::filesystem::path& path, const std::vector<NormBox>& boxes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write label file " + path.string());
  for (const auto& b : boxes) out << format_label_line(b) << '\n';
}

}  // namespace tempodet::geometry
