#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tempodet/augment.hpp"
#include "tempodet/data.hpp"
#include "tempodet/detector/inference.hpp"
#include "tempodet/detector/optim.hpp"
#include "tempodet/errors.hpp"

namespace tempodet::detector {

struct TrainConfig {
  int epochs = 30;
  double lr = 0.01;
  OptimizerKind optimizer = OptimizerKind::kSgdMomentum;
  double weight_decay = 5e-4;
  int batch_size = 8;
  LossWeights loss;
  bool ciou = false;
  std::string init_weights;  // checkpoint to warm-start from; empty for none
  std::uint64_t seed = 0;
  int window_stride = 1;        // spacing of training windows within a video
  int steps_per_epoch = 0;  // 0: one pass over the training windows; otherwise exactly this many (windows wrap)
  int warmup_steps = 0;
  double final_lr_ratio = 0.1;  // cosine decay floor
  double grad_clip = 10.0;      // <= 0 disables
  bool kmeans_anchors = false;
  std::array<double, 3> split{0.7, 0.15, 0.15};
  std::uint64_t split_seed = 0;
  int val_frame_stride = 1;
  augment::AugmentConfig augment;

  // lr = 0 is only accepted when asked for (a null-update run).
  void validate(bool allow_zero_lr = false) const;
  // SGD with momentum at lr 0.01 for the baseline, AdamW at 0.001 for the temporal variants.
  static TrainConfig defaults_for(Variant variant);
};

struct EpochRecord {
  int epoch = 0;
  double box = 0, obj = 0, cls = 0, total = 0;
  double val_p = 0, val_r = 0, val_map50 = 0, val_map50_95 = 0;
  long steps = 0;
  double lr = 0;
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochRecord& r);

struct FitOptions {
  std::filesystem::path out_dir;  // best.ckpt, last.ckpt and epochs.csv; nothing written when empty
  std::ostream* log = nullptr;
  EvalSettings eval;
  // Called after every optimizer step with (step, total loss).
  std::function<void(long, double)> on_step;
};

struct FitResult {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_map50_95 = -1.0;
  int transferred = -1;  // tensors warm-started, -1 when no init_weights
  long steps = 0;
};

class NonFiniteLoss : public NumericError {
 public:
  NonFiniteLoss(const std::string& what, std::string batch_id) : NumericError(what), batch_id(std::move(batch_id)) {}
  std::string batch_id;
};

// Baseline samples are the last frame of each training window, so every
// variant sees the same supervised frames per step.
FitResult fit(Model<float>& model, const TrainConfig& config, const data::Dataset& dataset,
              const data::DatasetSplit& split, const FitOptions& options = {});

// k-means anchors over all boxes of the given videos, in model pixels.
AnchorSet anchors_from_dataset(const data::Dataset& dataset, const std::vector<std::string>& video_ids, int image_size);

}  // namespace tempodet::detector
