#include "tempodet/data.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>
#include <set>

#include "tempodet/errors.hpp"

namespace tempodet::data {

namespace fs = std::filesystem;

Tensor<float> to_tensor(const ByteImage& image) {
  Tensor<float> out({image.channels, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out[i] = static_cast<float>(image.pixels[i]) / 255.0f;
  return out;
}

ByteImage to_bytes(const Tensor<float>& image) {
  numkit::require_rank(image, 3, "to_bytes");
  ByteImage out(image.dim(0), image.dim(1), image.dim(2));
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const float v = std::clamp(image[i], 0.0f, 1.0f);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

ByteImage read_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw DataError("cannot read image " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  std::vector<std::uint8_t> interleaved(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, interleaved.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot decode image " + path.string() + ": " + msg);
  }
  ByteImage out(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = interleaved[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  return out;
}

void write_png(const fs::path& path, const ByteImage& image) {
  if (image.channels != 3 && image.channels != 1) throw ShapeError("write_png: expected 1 or 3 channels");
  std::vector<std::uint8_t> interleaved(image.pixels.size());
  const int C = image.channels;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < C; ++c) interleaved[(static_cast<std::size_t>(y) * image.width + x) * C + c] = image.at(c, y, x);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, interleaved.data(), 0, nullptr)) {
    throw DataError("cannot write image " + path.string() + ": " + img.message);
  }
}

std::array<int, 3> probe_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw DataError("unreadable image " + path.string() + ": " + img.message);
  }
  const std::array<int, 3> dims{3, static_cast<int>(img.height), static_cast<int>(img.width)};
  png_image_free(&img);
  return dims;
}

void draw_box(ByteImage& image, const geometry::PixelBox& box, std::array<std::uint8_t, 3> color, int thickness) {
  const int x1 = std::clamp(static_cast<int>(std::floor(box.x1)), 0, image.width - 1);
  const int y1 = std::clamp(static_cast<int>(std::floor(box.y1)), 0, image.height - 1);
  const int x2 = std::clamp(static_cast<int>(std::ceil(box.x2)) - 1, 0, image.width - 1);
  const int y2 = std::clamp(static_cast<int>(std::ceil(box.y2)) - 1, 0, image.height - 1);
  auto put = [&](int x, int y) {
    for (int c = 0; c < std::min(image.channels, 3); ++c) image.at(c, y, x) = color[static_cast<std::size_t>(c)];
  };
  for (int t = 0; t < thickness; ++t) {
    for (int x = x1; x <= x2; ++x) {
      put(x, std::min(y1 + t, y2));
      put(x, std::max(y2 - t, y1));
    }
    for (int y = y1; y <= y2; ++y) {
      put(std::min(x1 + t, x2), y);
      put(std::max(x2 - t, x1), y);
    }
  }
}

bool VideoRecord::is_occluded(int index) const {
  return static_cast<std::size_t>(index) < occluded.size() && occluded[static_cast<std::size_t>(index)];
}

ByteImage VideoRecord::frame_bytes(int index) const {
  if (index < 0 || index >= size()) throw DataError("frame index out of range in video " + id);
  const auto i = static_cast<std::size_t>(index);
  if (i < images.size() && images[i]) return *images[i];
  return read_png(frame_paths.at(i));
}

Tensor<float> VideoRecord::frame(int index) const { return to_tensor(frame_bytes(index)); }

void VideoRecord::load_all() {
  images.resize(static_cast<std::size_t>(size()));
  for (int i = 0; i < size(); ++i) {
    auto& slot = images[static_cast<std::size_t>(i)];
    if (!slot) slot = std::make_shared<const ByteImage>(read_png(frame_paths.at(static_cast<std::size_t>(i))));
  }
}

const VideoRecord& Dataset::video(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return v;
  throw DataError("unknown video id " + id);
}

namespace {

std::string dominant_class(const std::vector<std::vector<NormBox>>& labels, const std::vector<std::string>& names) {
  std::map<int, int> counts;
  for (const auto& frame : labels)
    for (const auto& b : frame) ++counts[b.class_id];
  int best = -1, best_count = 0;
  for (const auto& [cls, n] : counts)
    if (n > best_count) best = cls, best_count = n;
  if (best < 0) return "";
  return best < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(best)] : std::to_string(best);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

VideoRecord ingest_video(const fs::path& dir, const std::vector<std::string>& class_names) {
  static const std::regex frame_re(R"(img_(\d+)\.png)");
  std::vector<std::pair<long, fs::path>> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, frame_re)) frames.emplace_back(std::stol(m[1].str()), entry.path());
  }
  if (frames.empty()) throw DataError("video directory has no frames: " + dir.string());
  std::sort(frames.begin(), frames.end());
  VideoRecord v;
  v.id = dir.filename().string();
  std::array<int, 3> dims{};
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const fs::path& img = frames[i].second;
    const auto d = probe_png(img);
    if (i == 0) dims = d;
    else if (d != dims) throw DataError("frame size differs from the first frame: " + img.string());
    const fs::path label = dir / "labels" / (img.stem().string() + ".txt");
    if (!fs::exists(label)) throw DataError("missing label file for frame " + img.string());
    v.frame_paths.push_back(img);
    v.labels.push_back(geometry::read_label_file(label));
    for (const auto& b : v.labels.back())
      if (b.class_id < 0 || b.class_id >= static_cast<int>(class_names.size()))
        throw DataError("class id " + std::to_string(b.class_id) + " not in classes.txt: " + label.string());
  }
  const fs::path occ = dir / "occlusion.txt";
  if (fs::exists(occ)) {
    v.occluded.assign(frames.size(), false);
    int line_no = 0;
    for (const auto& line : read_lines(occ)) {
      ++line_no;
      if (line.empty()) continue;
      int idx = -1;
      const auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), idx);
      if (ec != std::errc() || p != line.data() + line.size() || idx < 0 || idx >= static_cast<int>(frames.size()))
        throw DataError(occ.string() + ":" + std::to_string(line_no) + ": bad frame index");
      v.occluded[static_cast<std::size_t>(idx)] = true;
    }
  }
  v.class_name = dominant_class(v.labels, class_names);
  return v;
}

}  // namespace

Dataset ingest(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  Dataset ds;
  const fs::path classes = root / "classes.txt";
  if (!fs::exists(classes)) throw DataError("missing " + classes.string());
  for (const auto& line : read_lines(classes))
    if (!line.empty()) ds.class_names.push_back(line);
  if (ds.class_names.empty()) throw DataError("no class names in " + classes.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  if (dirs.empty()) throw DataError("dataset directory is empty: " + root.string());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) ds.videos.push_back(ingest_video(d, ds.class_names));
  return ds;
}

void write_dataset(const fs::path& root, const Dataset& dataset) {
  fs::create_directories(root);
  {
    std::ofstream out(root / "classes.txt");
    for (const auto& n : dataset.class_names) out << n << '\n';
  }
  for (const auto& v : dataset.videos) {
    const fs::path dir = root / v.id;
    fs::create_directories(dir / "labels");
    char stem[32];
    for (int i = 0; i < v.size(); ++i) {
      std::snprintf(stem, sizeof stem, "img_%05d", i);
      write_png(dir / (std::string(stem) + ".png"), v.frame_bytes(i));
      geometry::write_label_file(dir / "labels" / (std::string(stem) + ".txt"), v.labels[static_cast<std::size_t>(i)]);
    }
    if (std::find(v.occluded.begin(), v.occluded.end(), true) != v.occluded.end()) {
      std::ofstream out(dir / "occlusion.txt");
      for (int i = 0; i < v.size(); ++i)
        if (v.is_occluded(i)) out << i << '\n';
    }
  }
}

VideoRecord standardize_frames(const VideoRecord& video, int n) {
  if (n < 1) throw ConfigError("standardize_frames: n must be at least 1");
  VideoRecord out = video;
  if (video.size() > n) {
    const auto keep = static_cast<std::ptrdiff_t>(n);
    out.labels.resize(static_cast<std::size_t>(n));
    if (out.frame_paths.size() > static_cast<std::size_t>(n)) out.frame_paths.erase(out.frame_paths.begin() + keep, out.frame_paths.end());
    if (out.images.size() > static_cast<std::size_t>(n)) out.images.erase(out.images.begin() + keep, out.images.end());
    if (out.occluded.size() > static_cast<std::size_t>(n)) out.occluded.resize(static_cast<std::size_t>(n));
    out.short_video = false;
  } else {
    out.short_video = video.size() < n;
  }
  return out;
}

DatasetSplit split_videos(const std::vector<std::string>& video_ids, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios)
    if (!(r > 0.0)) throw ConfigError("split ratios must all be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (std::set<std::string>(video_ids.begin(), video_ids.end()).size() != video_ids.size())
    throw DataError("duplicate video ids in split input");
  const int n = static_cast<int>(video_ids.size());
  if (n < 3) throw DataError("need at least 3 videos to fill train, val and test splits, got " + std::to_string(n));
  std::vector<std::string> ids = video_ids;
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const int n_val = std::max(1, static_cast<int>(std::floor(ratios[1] * n + 1e-9)));
  const int n_test = std::max(1, static_cast<int>(std::floor(ratios[2] * n + 1e-9)));
  const int n_train = n - n_val - n_test;
  if (n_train < 1) throw DataError("split leaves no training videos");
  DatasetSplit s;
  s.seed = seed;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  s.test.assign(ids.begin() + n_train + n_val, ids.end());
  return s;
}

std::vector<Window> window_sampler(int video_length, int T, int stride) {
  if (T < 1 || stride < 1) throw ConfigError("window_sampler: T and stride must be at least 1");
  std::vector<Window> out;
  if (video_length < T) return out;
  for (int s = 0; s + T <= video_length; s += stride) out.push_back({s, T});
  return out;
}

FrameSequence materialize(const VideoRecord& video, const Window& window) {
  if (window.start < 0 || window.length < 1 || window.start + window.length > video.size())
    throw DataError("window outside video " + video.id);
  FrameSequence seq;
  seq.video_id = video.id;
  seq.start_index = window.start;
  for (int i = window.start; i < window.start + window.length; ++i) {
    seq.frames.push_back(video.frame(i));
    seq.labels.push_back(video.labels[static_cast<std::size_t>(i)]);
  }
  return seq;
}

FrameSequence context_window(const VideoRecord& video, int last_index, int T) {
  if (last_index < 0 || last_index >= video.size()) throw DataError("frame index out of range in video " + video.id);
  if (T < 1) throw ConfigError("context_window: T must be at least 1");
  FrameSequence seq;
  seq.video_id = video.id;
  seq.start_index = last_index - T + 1;
  const Tensor<float> ref = video.frame(last_index);
  for (int i = last_index - T + 1; i <= last_index; ++i) {
    if (i < 0) {
      seq.frames.push_back(Tensor<float>::zeros_like(ref));
      seq.labels.emplace_back();
    } else {
      seq.frames.push_back(i == last_index ? ref : video.frame(i));
      seq.labels.push_back(video.labels[static_cast<std::size_t>(i)]);
    }
  }
  return seq;
}

Motion motion_from_name(const std::string& name) {
  if (name == "gradual") return Motion::kGradual;
  if (name == "sudden") return Motion::kSudden;
  throw ConfigError("unknown motion '" + name + "' (expected gradual or sudden)");
}

std::string motion_name(Motion motion) { return motion == Motion::kGradual ? "gradual" : "sudden"; }

namespace {

struct Palette {
  const char* name;
  std::array<double, 3> rgb;
};

constexpr std::array<Palette, 6> kPalette{{{"red", {0.90, 0.15, 0.15}},
                                           {"blue", {0.15, 0.35, 0.95}},
                                           {"green", {0.15, 0.85, 0.25}},
                                           {"yellow", {0.95, 0.90, 0.15}},
                                           {"magenta", {0.90, 0.20, 0.85}},
                                           {"cyan", {0.15, 0.90, 0.90}}}};

struct Blob {
  int class_id = 0;
  double sx = 0.0, sy = 0.0;
  std::vector<double> x, y;  // center per frame
};

struct Occluder {
  int blob = 0;
  int start = 0;
  int length = 0;
  double fraction = 0.5;
  bool vertical = true;
  bool leading = true;
};

std::vector<double> textured_background(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int grid = size / 8 + 2;
  std::vector<double> bg(static_cast<std::size_t>(3) * size * size);
  const double base = 0.35 + 0.3 * u(rng);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> coarse(static_cast<std::size_t>(grid) * grid);
    const double tint = base + 0.06 * (u(rng) - 0.5);
    for (auto& v : coarse) v = tint + 0.3 * (u(rng) - 0.5);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double gy = y / 8.0, gx = x / 8.0;
        const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
        const double fy = gy - y0, fx = gx - x0;
        auto at = [&](int yy, int xx) { return coarse[static_cast<std::size_t>(yy) * grid + xx]; };
        bg[(static_cast<std::size_t>(c) * size + y) * size + x] =
            (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      }
  }
  return bg;
}

Blob make_blob(const SynthConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double S = cfg.size;
  Blob b;
  b.class_id = std::uniform_int_distribution<int>(0, cfg.classes - 1)(rng);
  b.sx = S * (0.04 + 0.04 * u(rng));
  b.sy = S * (0.04 + 0.04 * u(rng));
  const double lox = 2 * b.sx, hix = S - 2 * b.sx, loy = 2 * b.sy, hiy = S - 2 * b.sy;
  const int F = cfg.frames;
  b.x.resize(static_cast<std::size_t>(F));
  b.y.resize(static_cast<std::size_t>(F));
  if (cfg.motion == Motion::kGradual) {
    const double x0 = lox + (hix - lox) * u(rng), y0 = loy + (hiy - loy) * u(rng);
    const double x1 = lox + (hix - lox) * u(rng), y1 = loy + (hiy - loy) * u(rng);
    for (int t = 0; t < F; ++t) {
      const double a = F > 1 ? static_cast<double>(t) / (F - 1) : 0.0;
      b.x[static_cast<std::size_t>(t)] = x0 + (x1 - x0) * a;
      b.y[static_cast<std::size_t>(t)] = y0 + (y1 - y0) * a;
    }
    return b;
  }
  const double slow = 0.02 * S, fast = 0.08 * S;
  double x = lox + (hix - lox) * u(rng), y = loy + (hiy - loy) * u(rng);
  double vx = slow * (2 * u(rng) - 1), vy = slow * (2 * u(rng) - 1);
  auto reflect = [](double& p, double& v, double lo, double hi) {
    for (int guard = 0; guard < 8 && (p < lo || p > hi); ++guard) {
      if (p < lo) p = 2 * lo - p, v = -v;
      if (p > hi) p = 2 * hi - p, v = -v;
    }
    p = std::clamp(p, lo, hi);
  };
  for (int t = 0; t < F; ++t) {
    if (t > 0) {
      if (u(rng) < cfg.jump_prob) {
        const double vmax = u(rng) < 0.5 ? fast : slow;
        vx = vmax * (2 * u(rng) - 1);
        vy = vmax * (2 * u(rng) - 1);
      }
      x += vx;
      y += vy;
      reflect(x, vx, lox, hix);
      reflect(y, vy, loy, hiy);
    }
    b.x[static_cast<std::size_t>(t)] = x;
    b.y[static_cast<std::size_t>(t)] = y;
  }
  return b;
}

}  // namespace

Dataset synth_moving_blob(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.size < 32) throw ConfigError("synth: size must be at least 32");
  if (cfg.frames < 1) throw ConfigError("synth: frames must be at least 1");
  if (cfg.n_videos < 1) throw ConfigError("synth: n_videos must be at least 1");
  if (cfg.classes < 1 || cfg.classes > static_cast<int>(kPalette.size()))
    throw ConfigError("synth: classes must be between 1 and " + std::to_string(kPalette.size()));
  if (cfg.max_blobs < 1) throw ConfigError("synth: max_blobs must be at least 1");
  if (cfg.occlusion_episodes < 0) throw ConfigError("synth: occlusion_episodes must be non-negative");
  if (cfg.noise < 0.0) throw ConfigError("synth: noise must be non-negative");

  Dataset ds;
  for (int c = 0; c < cfg.classes; ++c) ds.class_names.emplace_back(kPalette[static_cast<std::size_t>(c)].name);
  const int S = cfg.size, F = cfg.frames;
  for (int vi = 0; vi < cfg.n_videos; ++vi) {
    std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(vi)};
    std::mt19937_64 rng(sseq);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto bg = textured_background(S, rng);
    const int n_blobs = 1 + std::uniform_int_distribution<int>(0, cfg.max_blobs - 1)(rng);
    std::vector<Blob> blobs;
    for (int k = 0; k < n_blobs; ++k) blobs.push_back(make_blob(cfg, rng));
    std::vector<Occluder> occluders;
    for (int e = 0; e < cfg.occlusion_episodes; ++e) {
      Occluder o;
      o.blob = std::uniform_int_distribution<int>(0, n_blobs - 1)(rng);
      o.length = std::min(F, std::uniform_int_distribution<int>(3, 8)(rng));
      o.start = std::uniform_int_distribution<int>(0, F - o.length)(rng);
      o.fraction = 0.4 + 0.3 * u(rng);
      o.vertical = u(rng) < 0.5;
      o.leading = u(rng) < 0.5;
      const bool clash = std::any_of(occluders.begin(), occluders.end(), [&](const Occluder& p) {
        return p.blob == o.blob && o.start < p.start + p.length && p.start < o.start + o.length;
      });
      if (!clash) occluders.push_back(o);
    }
    std::normal_distribution<double> noise(0.0, 1.0);

    VideoRecord v;
    char id[32];
    std::snprintf(id, sizeof id, "video_%03d", vi);
    v.id = id;
    v.occluded.assign(static_cast<std::size_t>(F), false);
    for (int t = 0; t < F; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      std::vector<double> img = bg;
      std::vector<NormBox> labels;
      for (const auto& b : blobs) {
        const auto& col = kPalette[static_cast<std::size_t>(b.class_id)].rgb;
        const double cx = b.x[ts], cy = b.y[ts];
        const int y0 = std::max(0, static_cast<int>(cy - 3 * b.sy)), y1 = std::min(S - 1, static_cast<int>(cy + 3 * b.sy) + 1);
        const int x0 = std::max(0, static_cast<int>(cx - 3 * b.sx)), x1 = std::min(S - 1, static_cast<int>(cx + 3 * b.sx) + 1);
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            const double dx = (x + 0.5 - cx) / b.sx, dy = (y + 0.5 - cy) / b.sy;
            const double a = std::exp(-0.5 * (dx * dx + dy * dy));
            for (int c = 0; c < 3; ++c) {
              double& p = img[(static_cast<std::size_t>(c) * S + y) * S + x];
              p = (1 - a) * p + a * col[static_cast<std::size_t>(c)];
            }
          }
        NormBox box{cx / S, cy / S, 4 * b.sx / S, 4 * b.sy / S, b.class_id};
        geometry::clip_to_unit(box);
        labels.push_back(box);
      }
      for (const auto& o : occluders) {
        if (t < o.start || t >= o.start + o.length) continue;
        const auto& b = blobs[static_cast<std::size_t>(o.blob)];
        double bx1 = b.x[ts] - 2 * b.sx, bx2 = b.x[ts] + 2 * b.sx;
        double by1 = b.y[ts] - 2 * b.sy, by2 = b.y[ts] + 2 * b.sy;
        if (o.vertical) {
          const double w = o.fraction * (bx2 - bx1);
          if (o.leading) bx2 = bx1 + w;
          else bx1 = bx2 - w;
          const double m = 0.25 * (by2 - by1);
          by1 -= m, by2 += m;
        } else {
          const double h = o.fraction * (by2 - by1);
          if (o.leading) by2 = by1 + h;
          else by1 = by2 - h;
          const double m = 0.25 * (bx2 - bx1);
          bx1 -= m, bx2 += m;
        }
        const int x0 = std::max(0, static_cast<int>(std::lround(bx1))), x1 = std::min(S, static_cast<int>(std::lround(bx2)));
        const int y0 = std::max(0, static_cast<int>(std::lround(by1))), y1 = std::min(S, static_cast<int>(std::lround(by2)));
        for (int c = 0; c < 3; ++c)
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) img[(static_cast<std::size_t>(c) * S + y) * S + x] = 0.22 + 0.04 * ((x / 3 + y / 3) % 2);
        v.occluded[ts] = true;
      }
      auto frame = std::make_shared<ByteImage>(3, S, S);
      for (std::size_t i = 0; i < img.size(); ++i) {
        const double p = img[i] + (cfg.noise > 0 ? cfg.noise * noise(rng) : 0.0);
        frame->pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
      }
      v.images.push_back(std::move(frame));
      v.labels.push_back(std::move(labels));
      char stem[32];
      std::snprintf(stem, sizeof stem, "img_%05d.png", t);
      v.frame_paths.emplace_back(v.id + "/" + stem);
    }
    v.class_name = dominant_class(v.labels, ds.class_names);
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

}  // namespace tempodet::data
