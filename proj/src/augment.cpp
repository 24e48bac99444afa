#include "tempodet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tempodet/errors.hpp"

namespace tempodet::augment {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augment: ") + name + " must lie in [0,1]");
}

void check_range(const Range& r, double lo, double hi, const char* name) {
  if (!(r.first <= r.second) || r.first < lo || r.second > hi)
    throw ConfigError(std::string("augment: ") + name + " must be an ordered range within [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
}

void check_same_geometry(const FrameSequence& a, const FrameSequence& b, const char* what) {
  if (a.length() != b.length()) throw ShapeError(std::string(what) + ": sequence lengths differ");
  if (a.length() == 0) throw ShapeError(std::string(what) + ": empty sequence");
  for (int t = 0; t < a.length(); ++t)
    a.frames[static_cast<std::size_t>(t)].require_same_shape(b.frames[static_cast<std::size_t>(t)], what);
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i >= n ? period - i : i;
}

}  // namespace

void AugmentConfig::validate() const {
  check_probability(mosaic_p, "mosaic_p");
  check_probability(mixup_p, "mixup_p");
  check_probability(erase_p, "erase_p");
  check_probability(blur_p, "blur_p");
  check_probability(noise_p, "noise_p");
  check_range(mixup_lambda, 0.0, 1.0, "mixup_lambda");
  check_range(erase_area, 0.0, 1.0, "erase_area");
  check_range(blur_sigma, 0.0, 1e3, "blur_sigma");
  check_range(mosaic_center, 0.0, 1.0, "mosaic_center");
  if (!(noise_sigma >= 0.0)) throw ConfigError("augment: noise_sigma must be non-negative");
  if (!(mosaic_min_area >= 0.0 && mosaic_min_area <= 1.0)) throw ConfigError("augment: mosaic_min_area must lie in [0,1]");
}

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.mosaic_p = c.mixup_p = c.erase_p = c.blur_p = c.noise_p = 0.0;
  return c;
}

FrameSequence temporal_mosaic_at(const std::array<const FrameSequence*, 4>& inputs, int center_x, int center_y,
                                 double min_area) {
  for (const auto* s : inputs)
    if (!s) throw ShapeError("temporal_mosaic: null input");
  for (int k = 1; k < 4; ++k) check_same_geometry(*inputs[0], *inputs[static_cast<std::size_t>(k)], "temporal_mosaic");
  const auto& ref = inputs[0]->frames[0];
  numkit::require_rank(ref, 3, "temporal_mosaic");
  const int C = ref.dim(0), H = ref.dim(1), W = ref.dim(2);
  if (center_x < 0 || center_x > W || center_y < 0 || center_y > H)
    throw ShapeError("temporal_mosaic: center outside the frame");

  struct Quadrant {
    int x0, y0, x1, y1;  // canvas region
    int tw, th;          // scaled tile size
    int ox, oy;          // tile origin on the canvas
  };
  std::array<Quadrant, 4> quads{};
  const std::array<std::array<int, 4>, 4> regions{{{0, 0, center_x, center_y},
                                                   {center_x, 0, W, center_y},
                                                   {0, center_y, center_x, H},
                                                   {center_x, center_y, W, H}}};
  for (std::size_t k = 0; k < 4; ++k) {
    auto& q = quads[k];
    q.x0 = regions[k][0], q.y0 = regions[k][1], q.x1 = regions[k][2], q.y1 = regions[k][3];
    const int qw = q.x1 - q.x0, qh = q.y1 - q.y0;
    const double s = std::max(static_cast<double>(qw) / W, static_cast<double>(qh) / H);
    q.tw = std::max({qw, 1, static_cast<int>(std::lround(W * s))});
    q.th = std::max({qh, 1, static_cast<int>(std::lround(H * s))});
    q.ox = (k == 0 || k == 2) ? center_x - q.tw : center_x;
    q.oy = (k == 0 || k == 1) ? center_y - q.th : center_y;
  }

  FrameSequence out;
  out.video_id = inputs[0]->video_id;
  out.start_index = inputs[0]->start_index;
  for (int t = 0; t < inputs[0]->length(); ++t) {
    const auto ts = static_cast<std::size_t>(t);
    Tensor<float> canvas({C, H, W}, 0.5f);
    std::vector<geometry::NormBox> labels;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& q = quads[k];
      if (q.x1 <= q.x0 || q.y1 <= q.y0) continue;
      const Tensor<float> tile = geometry::resize_bilinear(inputs[k]->frames[ts], q.th, q.tw);
      for (int c = 0; c < C; ++c)
        for (int y = q.y0; y < q.y1; ++y)
          for (int x = q.x0; x < q.x1; ++x)
            canvas[(static_cast<std::size_t>(c) * H + y) * W + x] =
                tile[(static_cast<std::size_t>(c) * q.th + (y - q.oy)) * q.tw + (x - q.ox)];
      const double sx = static_cast<double>(q.tw) / W, sy = static_cast<double>(q.th) / H;
      for (const auto& b : inputs[k]->labels[ts]) {
        geometry::PixelBox p = geometry::norm_to_pixel(b, W, H);
        p.x1 = q.ox + p.x1 * sx;
        p.x2 = q.ox + p.x2 * sx;
        p.y1 = q.oy + p.y1 * sy;
        p.y2 = q.oy + p.y2 * sy;
        const double before = p.area();
        p.x1 = std::clamp(p.x1, static_cast<double>(q.x0), static_cast<double>(q.x1));
        p.x2 = std::clamp(p.x2, static_cast<double>(q.x0), static_cast<double>(q.x1));
        p.y1 = std::clamp(p.y1, static_cast<double>(q.y0), static_cast<double>(q.y1));
        p.y2 = std::clamp(p.y2, static_cast<double>(q.y0), static_cast<double>(q.y1));
        if (before <= 0.0 || p.width() <= 0.0 || p.height() <= 0.0 || p.area() < min_area * before) continue;
        geometry::NormBox n = geometry::pixel_to_norm(p, W, H);
        geometry::clip_to_unit(n);
        if (geometry::is_valid(n)) labels.push_back(n);
      }
    }
    out.frames.push_back(std::move(canvas));
    out.labels.push_back(std::move(labels));
  }
  return out;
}

FrameSequence temporal_mosaic(const std::array<const FrameSequence*, 4>& inputs, std::mt19937_64& rng,
                              const AugmentConfig& config, MosaicRecord* record) {
  if (!inputs[0] || inputs[0]->length() == 0) throw ShapeError("temporal_mosaic: empty input");
  const auto& ref = inputs[0]->frames[0];
  numkit::require_rank(ref, 3, "temporal_mosaic");
  const int H = ref.dim(1), W = ref.dim(2);
  std::uniform_real_distribution<double> u(config.mosaic_center.first, config.mosaic_center.second);
  const int cx = static_cast<int>(std::lround(u(rng) * W));
  const int cy = static_cast<int>(std::lround(u(rng) * H));
  if (record) *record = {cx, cy};
  return temporal_mosaic_at(inputs, cx, cy, config.mosaic_min_area);
}

FrameSequence temporal_mixup(const FrameSequence& a, const FrameSequence& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("temporal_mixup: lambda must lie in [0,1]");
  check_same_geometry(a, b, "temporal_mixup");
  FrameSequence out = a;
  const float la = static_cast<float>(lambda), lb = static_cast<float>(1.0 - lambda);
  for (int t = 0; t < a.length(); ++t) {
    const auto ts = static_cast<std::size_t>(t);
    auto& f = out.frames[ts];
    const auto& g = b.frames[ts];
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = la * f[i] + lb * g[i];
    out.labels[ts].insert(out.labels[ts].end(), b.labels[ts].begin(), b.labels[ts].end());
  }
  return out;
}

EraseRect sample_erase_rect(int height, int width, Range area, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double frac = area.first + (area.second - area.first) * u(rng);
  const double aspect = std::exp(std::log(1.0 / 3.0) + std::log(9.0) * u(rng));
  const double pixels = frac * height * width;
  EraseRect r;
  r.w = std::clamp(static_cast<int>(std::lround(std::sqrt(pixels * aspect))), 0, width);
  r.h = std::clamp(static_cast<int>(std::lround(std::sqrt(pixels / aspect))), 0, height);
  r.x = std::uniform_int_distribution<int>(0, width - r.w)(rng);
  r.y = std::uniform_int_distribution<int>(0, height - r.h)(rng);
  return r;
}

Tensor<float> apply_erase(const Tensor<float>& frame, const EraseRect& rect, std::mt19937_64& rng) {
  numkit::require_rank(frame, 3, "apply_erase");
  const int C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  Tensor<float> out = frame;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int c = 0; c < C; ++c)
    for (int y = std::max(0, rect.y); y < std::min(H, rect.y + rect.h); ++y)
      for (int x = std::max(0, rect.x); x < std::min(W, rect.x + rect.w); ++x)
        out[(static_cast<std::size_t>(c) * H + y) * W + x] = u(rng);
  return out;
}

Tensor<float> random_erase(const Tensor<float>& frame, std::mt19937_64& rng, const AugmentConfig& config,
                           EraseRect* record) {
  numkit::require_rank(frame, 3, "random_erase");
  const EraseRect r = sample_erase_rect(frame.dim(1), frame.dim(2), config.erase_area, rng);
  if (record) *record = r;
  return apply_erase(frame, r, rng);
}

int blur_kernel_size(double sigma) { return 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1; }

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("gaussian_kernel: sigma must be non-negative");
  const int size = blur_kernel_size(sigma), r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size), 0.0);
  if (sigma == 0.0) {
    k[0] = 1.0;
    return k;
  }
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

Tensor<float> random_blur(const Tensor<float>& frame, double sigma) {
  numkit::require_rank(frame, 3, "random_blur");
  if (sigma == 0.0) return frame;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size()) / 2;
  const int C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  std::vector<double> tmp(frame.size());
  Tensor<float> out(frame.shape());
  for (int c = 0; c < C; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * H * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i)
          s += k[static_cast<std::size_t>(i + r)] * frame[base + static_cast<std::size_t>(y) * W + reflect_index(x + i, W)];
        tmp[base + static_cast<std::size_t>(y) * W + x] = s;
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i)
          s += k[static_cast<std::size_t>(i + r)] * tmp[base + static_cast<std::size_t>(reflect_index(y + i, H)) * W + x];
        out[base + static_cast<std::size_t>(y) * W + x] = static_cast<float>(s);
      }
  }
  return out;
}

Tensor<float> gaussian_noise(const Tensor<float>& frame, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("gaussian_noise: sigma must be non-negative");
  if (sigma == 0.0) return frame;
  std::normal_distribution<double> n(0.0, sigma);
  Tensor<float> out = frame;
  for (auto& v : out.storage()) v = static_cast<float>(std::clamp(v + n(rng), 0.0, 1.0));
  return out;
}

FrameSequence augment_sequence(const FrameSequence& seq, const PartnerSource& partners, const AugmentConfig& config,
                               std::mt19937_64& rng, AugmentRecord* record) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AugmentRecord rec;
  FrameSequence out = seq;
  if (partners && u(rng) < config.mosaic_p) {
    const FrameSequence b = partners(rng), c = partners(rng), d = partners(rng);
    MosaicRecord m;
    out = temporal_mosaic({&out, &b, &c, &d}, rng, config, &m);
    rec.mosaic = m;
  }
  if (partners && u(rng) < config.mixup_p) {
    const FrameSequence other = partners(rng);
    const double lambda = config.mixup_lambda.first + (config.mixup_lambda.second - config.mixup_lambda.first) * u(rng);
    out = temporal_mixup(out, other, lambda);
    rec.mixup_lambda = lambda;
  }
  if (u(rng) < config.erase_p) {
    const auto& f = out.frames[0];
    const EraseRect r = sample_erase_rect(f.dim(1), f.dim(2), config.erase_area, rng);
    for (auto& frame : out.frames) frame = apply_erase(frame, r, rng);
    rec.erase = r;
  }
  if (u(rng) < config.blur_p) {
    const double sigma = config.blur_sigma.first + (config.blur_sigma.second - config.blur_sigma.first) * u(rng);
    for (auto& frame : out.frames) frame = random_blur(frame, sigma);
    rec.blur_sigma = sigma;
  }
  if (u(rng) < config.noise_p) {
    for (auto& frame : out.frames) frame = gaussian_noise(frame, config.noise_sigma, rng);
    rec.noise_sigma = config.noise_sigma;
  }
  if (record) *record = rec;
  return out;
}

}  // namespace tempodet::augment
