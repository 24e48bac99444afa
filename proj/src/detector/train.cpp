#include "tempodet/detector/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "tempodet/detector/checkpoint.hpp"

namespace tempodet::detector {

void TrainConfig::validate(bool allow_zero_lr) const {
  if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (!(allow_zero_lr ? lr >= 0 : lr > 0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be non-negative");
  if (!(loss.box >= 0 && loss.obj >= 0 && loss.cls >= 0)) throw ConfigError("train: loss weights must be non-negative");
  if (window_stride < 1) throw ConfigError("train: window_stride must be at least 1");
  if (steps_per_epoch < 0) throw ConfigError("train: steps_per_epoch must be non-negative");
  if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be non-negative");
  if (!(final_lr_ratio >= 0 && final_lr_ratio <= 1)) throw ConfigError("train: final_lr_ratio must be in [0, 1]");
  if (val_frame_stride < 1) throw ConfigError("train: val_frame_stride must be at least 1");
  double sum = 0.0;
  for (double r : split) {
    if (!(r > 0)) throw ConfigError("train: split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("train: split ratios must sum to 1");
  augment.validate();
}

TrainConfig TrainConfig::defaults_for(Variant variant) {
  TrainConfig c;
  if (variant != Variant::kBaseline) {
    c.optimizer = OptimizerKind::kAdamW;
    c.lr = 0.001;
  }
  return c;
}

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct WindowRef {
  const data::VideoRecord* video;
  data::Window window;
};

std::string window_id(const WindowRef& w) { return w.video->id + "@" + std::to_string(w.window.start); }

}  // namespace

std::string epoch_csv_header() { return "epoch,box,obj,cls,val_P,val_R,val_mAP50,val_mAP50_95\n"; }

std::string epoch_csv_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + fmt6(r.box) + "," + fmt6(r.obj) + "," + fmt6(r.cls) + "," + fmt6(r.val_p) +
         "," + fmt6(r.val_r) + "," + fmt6(r.val_map50) + "," + fmt6(r.val_map50_95) + "\n";
}

FitResult fit(Model<float>& model, const TrainConfig& config, const data::Dataset& dataset,
              const data::DatasetSplit& split, const FitOptions& options) {
  config.validate(true);
  if (split.train.empty()) throw DataError("training split is empty");
  if (split.val.empty()) throw DataError("validation split is empty");
  const ModelConfig& mc = model.config();
  if (static_cast<int>(dataset.class_names.size()) > mc.num_classes)
    throw ConfigError("model has " + std::to_string(mc.num_classes) + " classes but the dataset has " +
                      std::to_string(dataset.class_names.size()));
  auto log = [&](const std::string& line) {
    if (options.log) *options.log << line << "\n" << std::flush;
  };

  FitResult result;
  if (!config.init_weights.empty()) {
    const auto ck = read_checkpoint(config.init_weights);
    result.transferred = warm_start(model, ck);
    log("warm start: transferred " + std::to_string(result.transferred) + " of " +
        std::to_string(model.params().size()) + " tensors from " + config.init_weights);
  }

  std::vector<WindowRef> windows;
  for (const auto& id : split.train) {
    const auto& v = dataset.video(id);
    for (const auto& w : data::window_sampler(v.size(), mc.window, config.window_stride)) windows.push_back({&v, w});
  }
  if (windows.empty()) throw DataError("no training windows: every training video is shorter than the window");

  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0x66697474u};
  std::mt19937_64 rng(seq);
  const augment::PartnerSource partners = [&](std::mt19937_64& r) {
    std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);
    const auto& w = windows[pick(r)];
    return data::materialize(*w.video, w.window);
  };

  const long n = static_cast<long>(windows.size());
  const long steps_per_epoch =
      config.steps_per_epoch > 0 ? config.steps_per_epoch : (n + config.batch_size - 1) / config.batch_size;
  const long total_steps = steps_per_epoch * config.epochs;
  Optimizer optimizer({config.optimizer, 0.937, 0.9, 0.999, 1e-8, config.weight_decay});
  const auto params = model.params();
  const LossOptions loss_options{config.loss, config.ciou};
  const int S = mc.image_size, F = mc.frames();

  const auto& out = options.out_dir;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream(out / "epochs.csv", std::ios::binary | std::ios::trunc) << epoch_csv_header();
  }
  auto metadata = [&](int epoch, double map) {
    return "epoch: " + std::to_string(epoch) + "\nval_mAP50_95: " + shortest(map) + "\nsplit: [" +
           shortest(config.split[0]) + ", " + shortest(config.split[1]) + ", " + shortest(config.split[2]) +
           "]\nsplit_seed: " + std::to_string(config.split_seed) + "\n";
  };

  EvalSettings eval_settings = options.eval;
  eval_settings.frame_stride = config.val_frame_stride;

  std::vector<std::size_t> order(windows.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (long s = 0; s < steps_per_epoch; ++s) {
      std::vector<PreparedSample> batch;
      std::string batch_id;
      for (int k = 0; k < config.batch_size; ++k) {
        const long pos = s * config.batch_size + k;
        if (pos >= n && config.steps_per_epoch == 0) break;
        const auto& w = windows[order[static_cast<std::size_t>(pos % n)]];
        batch_id += (batch_id.empty() ? "" : ",") + window_id(w);
        auto seq_in = data::materialize(*w.video, w.window);
        auto seq_aug = augment::augment_sequence(seq_in, partners, config.augment, rng);
        batch.push_back(prepare_sample(seq_aug, S, F));
      }
      std::vector<std::vector<NormBox>> labels;
      for (const auto& b : batch) labels.push_back(b.target);
      const Targets targets = assign_targets(labels, mc);
      ForwardCache<float> cache;
      const auto raw = model.forward(stack_batch(batch), &cache);
      RawPrediction<float> grad;
      const LossValue lv = detection_loss(raw, targets, mc, loss_options, &grad);
      const std::string where = "epoch " + std::to_string(epoch) + " step " + std::to_string(s + 1);
      auto abort = [&](const std::string& what) {
        if (!out.empty())
          std::ofstream(out / "nonfinite_batch.txt", std::ios::binary | std::ios::trunc)
              << where << "\nbatch: " << batch_id << "\nbox: " << lv.box << "\nobj: " << lv.obj << "\ncls: " << lv.cls
              << "\n";
        throw NonFiniteLoss(what + " at " + where + " (batch " + batch_id + ")", batch_id);
      };
      if (!std::isfinite(lv.total)) abort("non-finite loss");
      model.zero_grad();
      model.backward(cache, grad);
      if (!std::isfinite(clip_grad_norm(params, config.grad_clip))) abort("non-finite gradient");
      rec.lr = scheduled_lr(config.lr, result.steps, total_steps, config.warmup_steps, config.final_lr_ratio);
      optimizer.step(params, rec.lr);
      ++result.steps;
      ++rec.steps;
      rec.box += lv.box;
      rec.obj += lv.obj;
      rec.cls += lv.cls;
      rec.total += lv.total;
      if (options.on_step) options.on_step(result.steps, lv.total);
    }
    const double k = static_cast<double>(std::max(1L, rec.steps));
    rec.box /= k;
    rec.obj /= k;
    rec.cls /= k;
    rec.total /= k;
    const auto ev = evaluate_videos(model, dataset, split.val, eval_settings);
    rec.val_p = ev.metrics.precision;
    rec.val_r = ev.metrics.recall;
    rec.val_map50 = ev.metrics.map50;
    rec.val_map50_95 = ev.metrics.map50_95;
    result.epochs.push_back(rec);
    log("epoch " + std::to_string(epoch) + "/" + std::to_string(config.epochs) + " loss " + fmt6(rec.total) + " (box " +
        fmt6(rec.box) + " obj " + fmt6(rec.obj) + " cls " + fmt6(rec.cls) + ") val P " + fmt6(rec.val_p) + " R " +
        fmt6(rec.val_r) + " mAP50 " + fmt6(rec.val_map50) + " mAP50-95 " + fmt6(rec.val_map50_95));
    const bool best = rec.val_map50_95 > result.best_map50_95;
    if (best) {
      result.best_map50_95 = rec.val_map50_95;
      result.best_epoch = epoch;
    }
    if (!out.empty()) {
      std::ofstream(out / "epochs.csv", std::ios::binary | std::ios::app) << epoch_csv_row(rec);
      save_checkpoint(out / "last.ckpt", model, metadata(epoch, rec.val_map50_95));
      if (best) save_checkpoint(out / "best.ckpt", model, metadata(epoch, rec.val_map50_95));
    }
  }
  return result;
}

AnchorSet anchors_from_dataset(const data::Dataset& dataset, const std::vector<std::string>& video_ids, int image_size) {
  std::vector<std::pair<double, double>> sizes;
  for (const auto& id : video_ids) {
    const auto& v = dataset.video(id);
    if (v.size() == 0) continue;
    const auto frame = v.frame_bytes(0);
    const double scale = static_cast<double>(image_size) / std::max(frame.width, frame.height);
    for (const auto& labels : v.labels)
      for (const auto& b : labels)
        if (b.w > 0 && b.h > 0) sizes.emplace_back(b.w * frame.width * scale, b.h * frame.height * scale);
  }
  return kmeans_anchors(sizes);
}

}  // namespace tempodet::detector
