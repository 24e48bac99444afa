#pragma once

#include <string>
#include <vector>

#include "tempodet/data.hpp"
#include "tempodet/detector/head.hpp"
#include "tempodet/eval.hpp"

namespace tempodet::detector {

// One model sample: the last `frames` frames of a sequence letterboxed to the
// model size, with the final frame's labels mapped into that canvas.
struct PreparedSample {
  std::vector<Tensor<float>> frames;
  std::vector<NormBox> target;
  geometry::LetterboxTransform transform;
};

PreparedSample prepare_sample(const data::FrameSequence& seq, int image_size, int frames);

// [B*F, 3, S, S], samples contiguous.
Tensor<float> stack_batch(const std::vector<PreparedSample>& samples);

struct FramePrediction {
  std::string video_id;
  int frame_index = 0;
  std::vector<PixelBox> boxes;  // source-frame pixels
};

// Temporal variants see the preceding frames of the same video (zero frames
// before the start).
std::vector<FramePrediction> predict_frames(const Model<float>& model, const data::VideoRecord& video,
                                            const std::vector<int>& frame_indices, const DecodeOptions& decode,
                                            int batch_size = 16);

std::string image_id(const std::string& video_id, int frame_index);

struct EvalSettings {
  DecodeOptions decode{0.001, 0.6, 300};
  // Frames before this index are skipped; -1 means window - 1, so every
  // variant is scored on the same frames.
  int first_frame = -1;
  int frame_stride = 1;
  int batch_size = 16;
  eval::EvalOptions eval;
};

struct EvalResult {
  eval::Metrics metrics;
  std::vector<eval::Detection> detections;
  std::vector<eval::GroundTruth> truths;
  int frames = 0;
};

EvalResult evaluate_videos(const Model<float>& model, const data::Dataset& dataset,
                           const std::vector<std::string>& video_ids, const EvalSettings& settings = {});

}  // namespace tempodet::detector
