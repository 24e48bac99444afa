#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tempodet/geometry.hpp"
#include "tempodet/numkit/tensor.hpp"

namespace tempodet::data {

using geometry::NormBox;
using numkit::Tensor;

// Planar 8-bit image, CHW order.
struct ByteImage {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  ByteImage() = default;
  ByteImage(int c, int h, int w, std::uint8_t fill = 0)
      : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  std::uint8_t& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  std::uint8_t at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool operator==(const ByteImage&) const = default;
};

Tensor<float> to_tensor(const ByteImage& image);
ByteImage to_bytes(const Tensor<float>& image);

// PNG codec (8-bit gray, RGB or RGBA in; gray is replicated, alpha dropped).
ByteImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ByteImage& image);
// Reads only the header. Throws DataError when the file is not a PNG.
std::array<int, 3> probe_png(const std::filesystem::path& path);

void draw_box(ByteImage& image, const geometry::PixelBox& box, std::array<std::uint8_t, 3> color, int thickness = 1);

struct VideoRecord {
  std::string id;
  std::string class_name;
  std::vector<std::filesystem::path> frame_paths;
  std::vector<std::vector<NormBox>> labels;
  // In-memory pixels; when empty, frames are read from frame_paths.
  std::vector<std::shared_ptr<const ByteImage>> images;
  // Per-frame occlusion flags; empty when unknown.
  std::vector<bool> occluded;
  bool short_video = false;

  int size() const { return static_cast<int>(labels.size()); }
  bool is_occluded(int index) const;
  ByteImage frame_bytes(int index) const;
  Tensor<float> frame(int index) const;
  // Decodes every frame into `images`.
  void load_all();
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<VideoRecord> videos;

  const VideoRecord& video(const std::string& id) const;
};

/// Layout: <root>/classes.txt, <root>/<video>/img_%05d.png and
/// <root>/<video>/labels/img_%05d.txt. An optional <root>/<video>/occlusion.txt
/// lists occluded frame indices, one per line.
Dataset ingest(const std::filesystem::path& root);
void write_dataset(const std::filesystem::path& root, const Dataset& dataset);

VideoRecord standardize_frames(const VideoRecord& video, int n = 100);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

DatasetSplit split_videos(const std::vector<std::string>& video_ids, std::array<double, 3> ratios, std::uint64_t seed);

struct Window {
  int start = 0;
  int length = 0;
};

std::vector<Window> window_sampler(int video_length, int T = 3, int stride = 1);

struct FrameSequence {
  std::string video_id;
  int start_index = 0;
  std::vector<Tensor<float>> frames;  // [C,H,W] in [0,1]
  std::vector<std::vector<NormBox>> labels;

  int length() const { return static_cast<int>(frames.size()); }
  const std::vector<NormBox>& target() const { return labels.back(); }
};

FrameSequence materialize(const VideoRecord& video, const Window& window);

// Frames before the start of the video are zero images; labels there are empty.
FrameSequence context_window(const VideoRecord& video, int last_index, int T);

enum class Motion { kGradual, kSudden };

Motion motion_from_name(const std::string& name);
std::string motion_name(Motion motion);

struct SynthConfig {
  int n_videos = 4;
  int frames = 100;
  int size = 128;
  int classes = 2;
  int max_blobs = 2;
  int occlusion_episodes = 2;
  Motion motion = Motion::kSudden;
  double noise = 0.03;        // per-pixel noise standard deviation
  double jump_prob = 0.1;     // per-frame chance of a velocity change (sudden)
};

Dataset synth_moving_blob(const SynthConfig& config, std::uint64_t seed);

}  // namespace tempodet::data
