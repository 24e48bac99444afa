#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "tempodet/data.hpp"
#include "tempodet/errors.hpp"

namespace tempodet::data {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("tempodet_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

SynthConfig small_synth() {
  SynthConfig cfg;
  cfg.n_videos = 2;
  cfg.frames = 5;
  cfg.size = 32;
  cfg.occlusion_episodes = 1;
  return cfg;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

TEST(Png, RoundTripAndProbe) {
  TempDir dir("png");
  ByteImage img(3, 7, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 37);
  write_png(dir.path() / "a.png", img);
  EXPECT_EQ(read_png(dir.path() / "a.png"), img);
  EXPECT_EQ(probe_png(dir.path() / "a.png"), (std::array<int, 3>{3, 7, 5}));
  std::ofstream(dir.path() / "bad.png") << "not an image";
  EXPECT_THROW(read_png(dir.path() / "bad.png"), DataError);
  EXPECT_THROW(probe_png(dir.path() / "bad.png"), DataError);
}

TEST(Png, TensorConversionRoundTrips) {
  ByteImage img(3, 2, 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 21);
  EXPECT_EQ(to_bytes(to_tensor(img)), img);
}

TEST(Ingest, SyntheticDatasetRoundTrips) {
  TempDir dir("ingest_roundtrip");
  const Dataset ds = synth_moving_blob(small_synth(), 3);
  write_dataset(dir.path(), ds);
  const Dataset back = ingest(dir.path());
  ASSERT_EQ(back.videos.size(), 2u);
  EXPECT_EQ(back.class_names, ds.class_names);
  for (std::size_t v = 0; v < 2; ++v) {
    EXPECT_EQ(back.videos[v].id, ds.videos[v].id);
    ASSERT_EQ(back.videos[v].size(), 5);
    EXPECT_EQ(back.videos[v].labels, ds.videos[v].labels);
    EXPECT_EQ(back.videos[v].occluded, ds.videos[v].occluded);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(back.videos[v].frame_bytes(i), ds.videos[v].frame_bytes(i));
  }
}

TEST(Ingest, EmptyLabelFileMeansNoObjects) {
  TempDir dir("ingest_empty_labels");
  Dataset ds = synth_moving_blob(small_synth(), 4);
  ds.videos[0].labels[2].clear();
  write_dataset(dir.path(), ds);
  const Dataset back = ingest(dir.path());
  EXPECT_TRUE(back.videos[0].labels[2].empty());
}

TEST(Ingest, FramesSortNumerically) {
  TempDir dir("ingest_sort");
  std::ofstream(dir.path() / "classes.txt") << "thing\n";
  fs::create_directories(dir.path() / "v" / "labels");
  for (int i : {10, 9, 100}) {
    ByteImage img(3, 4, 4, static_cast<std::uint8_t>(i));
    write_png(dir.path() / "v" / ("img_" + std::to_string(i) + ".png"), img);
    std::ofstream(dir.path() / "v" / "labels" / ("img_" + std::to_string(i) + ".txt")).close();
  }
  const Dataset ds = ingest(dir.path());
  ASSERT_EQ(ds.videos[0].size(), 3);
  EXPECT_EQ(ds.videos[0].frame_bytes(0).pixels[0], 9);
  EXPECT_EQ(ds.videos[0].frame_bytes(1).pixels[0], 10);
  EXPECT_EQ(ds.videos[0].frame_bytes(2).pixels[0], 100);
}

TEST(Ingest, ErrorsNameTheCulprit) {
  TempDir dir("ingest_errors");
  EXPECT_NE(error_of([&] { ingest(dir.path()); }), "");
  std::ofstream(dir.path() / "classes.txt") << "red\nblue\n";
  EXPECT_NE(error_of([&] { ingest(dir.path()); }).find("empty"), std::string::npos);

  write_dataset(dir.path(), synth_moving_blob(small_synth(), 5));
  fs::remove(dir.path() / "video_001" / "labels" / "img_00003.txt");
  EXPECT_NE(error_of([&] { ingest(dir.path()); }).find("img_00003.png"), std::string::npos);

  std::ofstream(dir.path() / "video_001" / "labels" / "img_00003.txt") << "0 0.5 0.5 0.1 0.1\n1 0.5 0.5 0.1\n";
  EXPECT_NE(error_of([&] { ingest(dir.path()); }).find("img_00003.txt:2"), std::string::npos);

  std::ofstream(dir.path() / "video_001" / "labels" / "img_00003.txt") << "7 0.5 0.5 0.1 0.1\n";
  EXPECT_NE(error_of([&] { ingest(dir.path()); }), "");

  std::ofstream(dir.path() / "video_001" / "labels" / "img_00003.txt").close();
  std::ofstream(dir.path() / "video_001" / "img_00004.png") << "garbage";
  EXPECT_NE(error_of([&] { ingest(dir.path()); }).find("img_00004.png"), std::string::npos);
}

TEST(Standardize, TruncatesOrFlags) {
  VideoRecord v;
  v.id = "v";
  v.labels.resize(150);
  v.frame_paths.resize(150);
  const auto a = standardize_frames(v, 100);
  EXPECT_EQ(a.size(), 100);
  EXPECT_FALSE(a.short_video);
  const auto b = standardize_frames(a, 100);
  EXPECT_EQ(b.size(), 100);
  EXPECT_FALSE(b.short_video);
  v.labels.resize(80);
  v.frame_paths.resize(80);
  const auto c = standardize_frames(v, 100);
  EXPECT_EQ(c.size(), 80);
  EXPECT_TRUE(c.short_video);
  EXPECT_THROW(standardize_frames(v, 0), ConfigError);
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("v" + std::to_string(i));
  return out;
}

TEST(Split, FloorsAndGivesRemainderToTrain) {
  const auto s = split_videos(ids(10), {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  const auto t = split_videos(ids(10), {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(s.train, t.train);
  EXPECT_EQ(s.val, t.val);
  EXPECT_EQ(s.test, t.test);
  const auto u = split_videos(ids(32), {0.7, 0.15, 0.15}, 0);
  EXPECT_EQ(u.val.size(), 4u);
  EXPECT_EQ(u.test.size(), 4u);
  EXPECT_EQ(u.train.size(), 24u);
}

TEST(Split, RejectsBadInput) {
  EXPECT_THROW(split_videos(ids(10), {1.0, 0.0, 0.0}, 1), ConfigError);
  EXPECT_THROW(split_videos(ids(10), {0.5, 0.2, 0.2}, 1), ConfigError);
  EXPECT_THROW(split_videos(ids(2), {0.6, 0.2, 0.2}, 1), DataError);
}

TEST(Split, DisjointCoveringWholeVideos) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 60)(rng);
    const auto s = split_videos(ids(n), {0.7, 0.15, 0.15}, rng());
    std::set<std::string> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      EXPECT_FALSE(part->empty());
      all.insert(part->begin(), part->end());
    }
    EXPECT_EQ(all.size(), static_cast<std::size_t>(n));
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), static_cast<std::size_t>(n));
  }
}

TEST(Split, IndependentOfInputOrder) {
  auto a = ids(12);
  auto b = a;
  std::reverse(b.begin(), b.end());
  EXPECT_EQ(split_videos(a, {0.5, 0.25, 0.25}, 9).test, split_videos(b, {0.5, 0.25, 0.25}, 9).test);
}

TEST(Windows, CountsAndStarts) {
  EXPECT_EQ(window_sampler(100, 3, 1).size(), 98u);
  EXPECT_TRUE(window_sampler(2, 3, 1).empty());
  const auto w = window_sampler(10, 3, 3);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].start, 0);
  EXPECT_EQ(w[1].start, 3);
  EXPECT_EQ(w[2].start, 6);
  for (int len = 0; len <= 40; ++len)
    for (int T = 1; T <= 6; ++T)
      for (int stride = 1; stride <= 5; ++stride) {
        const auto v = window_sampler(len, T, stride);
        const std::size_t expected = len >= T ? static_cast<std::size_t>((len - T) / stride + 1) : 0u;
        ASSERT_EQ(v.size(), expected);
        for (std::size_t i = 0; i < v.size(); ++i) {
          EXPECT_EQ(v[i].start, static_cast<int>(i) * stride);
          EXPECT_LE(v[i].start + v[i].length, len);
        }
      }
  EXPECT_THROW(window_sampler(10, 0, 1), ConfigError);
}

TEST(Windows, TargetIsLastFrame) {
  const Dataset ds = synth_moving_blob(small_synth(), 6);
  const auto seq = materialize(ds.videos[0], {1, 3});
  EXPECT_EQ(seq.length(), 3);
  EXPECT_EQ(seq.target(), ds.videos[0].labels[3]);
  EXPECT_EQ(seq.frames[0], ds.videos[0].frame(1));
}

TEST(Windows, ContextPadsOnlyAtVideoStart) {
  const Dataset ds = synth_moving_blob(small_synth(), 7);
  const auto& v = ds.videos[1];
  const auto head = context_window(v, 0, 3);
  EXPECT_EQ(head.start_index, -2);
  for (float x : head.frames[0].values()) EXPECT_EQ(x, 0.0f);
  for (float x : head.frames[1].values()) EXPECT_EQ(x, 0.0f);
  EXPECT_EQ(head.frames[2], v.frame(0));
  const auto mid = context_window(v, 3, 3);
  EXPECT_EQ(mid.frames[0], v.frame(1));
  EXPECT_EQ(mid.frames[2], v.frame(3));
}

TEST(Synth, GradualMotionIsALine) {
  SynthConfig cfg;
  cfg.n_videos = 3;
  cfg.frames = 30;
  cfg.size = 64;
  cfg.max_blobs = 1;
  cfg.occlusion_episodes = 0;
  cfg.motion = Motion::kGradual;
  const Dataset ds = synth_moving_blob(cfg, 8);
  for (const auto& v : ds.videos) {
    const auto& first = v.labels.front()[0];
    const auto& last = v.labels.back()[0];
    for (int t = 0; t < v.size(); ++t) {
      const double a = t / 29.0;
      const auto& b = v.labels[static_cast<std::size_t>(t)][0];
      EXPECT_LT(std::abs(b.cx - (first.cx + a * (last.cx - first.cx))) * 64, 0.5);
      EXPECT_LT(std::abs(b.cy - (first.cy + a * (last.cy - first.cy))) * 64, 0.5);
    }
    EXPECT_TRUE(std::none_of(v.occluded.begin(), v.occluded.end(), [](bool o) { return o; }));
  }
}

TEST(Synth, DeterministicPerSeed) {
  const SynthConfig cfg = small_synth();
  const Dataset a = synth_moving_blob(cfg, 11), b = synth_moving_blob(cfg, 11), c = synth_moving_blob(cfg, 12);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.videos[0].frame_bytes(i), b.videos[0].frame_bytes(i));
  EXPECT_EQ(a.videos[1].labels, b.videos[1].labels);
  EXPECT_NE(a.videos[0].frame_bytes(0), c.videos[0].frame_bytes(0));
}

TEST(Synth, LabelsValidAndRoundTrip) {
  SynthConfig cfg;
  cfg.n_videos = 6;
  cfg.frames = 60;
  cfg.size = 96;
  cfg.classes = 3;
  const Dataset ds = synth_moving_blob(cfg, 13);
  int occluded = 0;
  for (const auto& v : ds.videos) {
    ASSERT_EQ(v.size(), 60);
    for (const auto& frame : v.labels) {
      EXPECT_FALSE(frame.empty());
      for (const auto& b : frame) {
        EXPECT_TRUE(geometry::is_valid(b));
        EXPECT_LT(b.class_id, 3);
        const auto back = geometry::pixel_to_norm(geometry::norm_to_pixel(b, 96, 96), 96, 96);
        EXPECT_NEAR(back.cx, b.cx, 1e-9);
        EXPECT_NEAR(back.w, b.w, 1e-9);
      }
    }
    for (int i = 0; i < v.size(); ++i) occluded += v.is_occluded(i);
  }
  EXPECT_GT(occluded, 0);
  EXPECT_LE(occluded, 6 * 2 * 8);
}

TEST(Synth, OcclusionDarkensPartOfTheBlob) {
  SynthConfig cfg;
  cfg.n_videos = 8;
  cfg.frames = 40;
  cfg.size = 128;
  cfg.max_blobs = 1;
  cfg.noise = 0.0;
  const Dataset ds = synth_moving_blob(cfg, 14);
  int checked = 0;
  for (const auto& v : ds.videos)
    for (int t = 0; t < v.size(); ++t) {
      if (!v.is_occluded(t)) continue;
      const auto px = geometry::norm_to_pixel(v.labels[static_cast<std::size_t>(t)][0], 128, 128);
      const ByteImage img = v.frame_bytes(t);
      int dark = 0, total = 0;
      for (int y = static_cast<int>(px.y1) + 1; y < static_cast<int>(px.y2); ++y)
        for (int x = static_cast<int>(px.x1) + 1; x < static_cast<int>(px.x2); ++x) {
          ++total;
          const int r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
          dark += r == g && g == b && r < 80;
        }
      const double frac = static_cast<double>(dark) / total;
      EXPECT_GT(frac, 0.3);
      EXPECT_LT(frac, 0.8);
      ++checked;
    }
  EXPECT_GT(checked, 0);
}

TEST(Synth, RejectsBadConfig) {
  SynthConfig cfg;
  cfg.size = 16;
  EXPECT_THROW(synth_moving_blob(cfg, 1), ConfigError);
  cfg = SynthConfig{};
  cfg.classes = 9;
  EXPECT_THROW(synth_moving_blob(cfg, 1), ConfigError);
}

}  // namespace
}  // namespace tempodet::data
