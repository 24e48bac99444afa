#include "tempodet/config_io.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "tempodet/errors.hpp"

namespace tempodet::config {

namespace {

using detector::ModelConfig;
using detector::TrainConfig;

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string flag(bool b) { return b ? "true" : "false"; }

std::string quoted(const std::string& s) {
  YAML::Emitter e;
  e << YAML::DoubleQuoted << s;
  return e.c_str();
}

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  YAML::Node load(const std::string& text) const {
    try {
      YAML::Node root = YAML::Load(text);
      if (root.IsNull()) return YAML::Node(YAML::NodeType::Map);
      if (!root.IsMap()) fail(root, "expected a map of `key: value` entries");
      return root;
    } catch (const YAML::ParserException& e) {
      throw ConfigError(source_ + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
  }

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(node.Mark().line + 1) + ": " + msg);
  }

  template <typename T>
  T scalar(const YAML::Node& node, const std::string& key, const char* what) const {
    if (!node.IsScalar()) fail(node, "key '" + key + "' expects " + what);
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "key '" + key + "' expects " + what + ", got '" + node.Scalar() + "'");
    }
  }

  double number(const YAML::Node& n, const std::string& key) const { return scalar<double>(n, key, "a number"); }
  int integer(const YAML::Node& n, const std::string& key) const { return scalar<int>(n, key, "an integer"); }
  bool boolean(const YAML::Node& n, const std::string& key) const { return scalar<bool>(n, key, "true or false"); }
  std::string text(const YAML::Node& n, const std::string& key) const { return scalar<std::string>(n, key, "a string"); }
  std::uint64_t seed(const YAML::Node& n, const std::string& key) const {
    const auto v = scalar<long long>(n, key, "a non-negative integer");
    if (v < 0) fail(n, "key '" + key + "' expects a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }

  std::vector<double> numbers(const YAML::Node& n, const std::string& key, std::size_t count) const {
    if (!n.IsSequence() || n.size() != count)
      fail(n, "key '" + key + "' expects a list of " + std::to_string(count) + " numbers");
    std::vector<double> out;
    for (const auto& e : n) out.push_back(number(e, key));
    return out;
  }

  std::pair<double, double> range(const YAML::Node& n, const std::string& key) const {
    const auto v = numbers(n, key, 2);
    return {v[0], v[1]};
  }

  using Handlers = std::map<std::string, std::function<void(const YAML::Node&)>>;

  void dispatch(const YAML::Node& map, const Handlers& handlers) const {
    for (const auto& kv : map) {
      const std::string key = kv.first.Scalar();
      const auto it = handlers.find(key);
      if (it == handlers.end()) fail(kv.first, "unknown key '" + key + "'");
      it->second(kv.second);
    }
  }

  // Re-throws a validation error with this file as the source.
  template <typename F>
  void validate(F&& f) const {
    try {
      f();
    } catch (const ConfigError& e) {
      throw ConfigError(source_ + ": " + e.what());
    }
  }

 private:
  std::string source_;
};

void read_augment(const Reader& r, const YAML::Node& map, augment::AugmentConfig& a) {
  if (!map.IsMap()) r.fail(map, "'augment' expects a map");
  r.dispatch(map, {
                      {"mosaic_p", [&](const YAML::Node& n) { a.mosaic_p = r.number(n, "mosaic_p"); }},
                      {"mixup_p", [&](const YAML::Node& n) { a.mixup_p = r.number(n, "mixup_p"); }},
                      {"mixup_lambda", [&](const YAML::Node& n) { a.mixup_lambda = r.range(n, "mixup_lambda"); }},
                      {"erase_p", [&](const YAML::Node& n) { a.erase_p = r.number(n, "erase_p"); }},
                      {"erase_area", [&](const YAML::Node& n) { a.erase_area = r.range(n, "erase_area"); }},
                      {"blur_p", [&](const YAML::Node& n) { a.blur_p = r.number(n, "blur_p"); }},
                      {"blur_sigma", [&](const YAML::Node& n) { a.blur_sigma = r.range(n, "blur_sigma"); }},
                      {"noise_p", [&](const YAML::Node& n) { a.noise_p = r.number(n, "noise_p"); }},
                      {"noise_sigma", [&](const YAML::Node& n) { a.noise_sigma = r.number(n, "noise_sigma"); }},
                      {"mosaic_center", [&](const YAML::Node& n) { a.mosaic_center = r.range(n, "mosaic_center"); }},
                      {"mosaic_min_area", [&](const YAML::Node& n) { a.mosaic_min_area = r.number(n, "mosaic_min_area"); }},
                  });
}

std::string range_text(std::pair<double, double> r) { return "[" + num(r.first) + ", " + num(r.second) + "]"; }

std::string augment_body(const augment::AugmentConfig& a, const std::string& indent) {
  std::ostringstream o;
  o << indent << "mosaic_p: " << num(a.mosaic_p) << "\n"
    << indent << "mixup_p: " << num(a.mixup_p) << "\n"
    << indent << "mixup_lambda: " << range_text(a.mixup_lambda) << "\n"
    << indent << "erase_p: " << num(a.erase_p) << "\n"
    << indent << "erase_area: " << range_text(a.erase_area) << "\n"
    << indent << "blur_p: " << num(a.blur_p) << "\n"
    << indent << "blur_sigma: " << range_text(a.blur_sigma) << "\n"
    << indent << "noise_p: " << num(a.noise_p) << "\n"
    << indent << "noise_sigma: " << num(a.noise_sigma) << "\n"
    << indent << "mosaic_center: " << range_text(a.mosaic_center) << "\n"
    << indent << "mosaic_min_area: " << num(a.mosaic_min_area) << "\n";
  return o.str();
}

}  // namespace

ModelConfig parse_model_config(const std::string& text, const std::string& source) {
  const Reader r(source);
  const YAML::Node root = r.load(text);
  std::optional<detector::Variant> variant;
  int width = 16, num_classes = 1, image_size = 640, window = 3, reduction = 16;
  std::optional<bool> cbam;
  bool skip = true;
  std::optional<std::array<bool, 3>> lstm;
  std::optional<detector::AnchorSet> anchors;
  std::optional<std::array<int, 3>> strides;
  r.dispatch(root, {
                       {"variant",
                        [&](const YAML::Node& n) {
                          const std::string name = r.text(n, "variant");
                          try {
                            variant = detector::variant_from_name(name);
                          } catch (const ConfigError& e) {
                            r.fail(n, e.what());
                          }
                        }},
                       {"width", [&](const YAML::Node& n) { width = r.integer(n, "width"); }},
                       {"num_classes", [&](const YAML::Node& n) { num_classes = r.integer(n, "num_classes"); }},
                       {"image_size", [&](const YAML::Node& n) { image_size = r.integer(n, "image_size"); }},
                       {"window", [&](const YAML::Node& n) { window = r.integer(n, "window"); }},
                       {"cbam_reduction", [&](const YAML::Node& n) { reduction = r.integer(n, "cbam_reduction"); }},
                       {"cbam_after_neck", [&](const YAML::Node& n) { cbam = r.boolean(n, "cbam_after_neck"); }},
                       {"temporal_skip", [&](const YAML::Node& n) { skip = r.boolean(n, "temporal_skip"); }},
                       {"convlstm_per_scale",
                        [&](const YAML::Node& n) {
                          if (!n.IsSequence() || n.size() != 3) r.fail(n, "key 'convlstm_per_scale' expects 3 booleans");
                          lstm = std::array<bool, 3>{r.boolean(n[0], "convlstm_per_scale"),
                                                     r.boolean(n[1], "convlstm_per_scale"),
                                                     r.boolean(n[2], "convlstm_per_scale")};
                        }},
                       {"strides",
                        [&](const YAML::Node& n) {
                          if (!n.IsSequence() || n.size() != 3) r.fail(n, "key 'strides' expects 3 integers");
                          strides = std::array<int, 3>{r.integer(n[0], "strides"), r.integer(n[1], "strides"),
                                                       r.integer(n[2], "strides")};
                        }},
                       {"anchors",
                        [&](const YAML::Node& n) {
                          if (!n.IsSequence() || n.size() != 3)
                            r.fail(n, "key 'anchors' expects 3 lists (one per scale) of 6 numbers w,h,w,h,w,h");
                          detector::AnchorSet a{};
                          for (std::size_t s = 0; s < 3; ++s) {
                            const auto v = r.numbers(n[s], "anchors", 6);
                            for (std::size_t k = 0; k < 3; ++k) a[s][k] = {v[2 * k], v[2 * k + 1]};
                          }
                          anchors = a;
                        }},
                   });
  ModelConfig c = ModelConfig::for_variant(variant.value_or(detector::Variant::kBaseline), width, num_classes,
                                           image_size, window);
  c.cbam_reduction = reduction;
  c.temporal_skip = skip;
  if (cbam) c.cbam_after_neck = *cbam;
  if (lstm) c.convlstm_per_scale = *lstm;
  if (anchors) c.anchors = *anchors;
  if (strides) c.strides = *strides;
  r.validate([&] { c.validate(); });
  return c;
}

std::string format_model_config(const ModelConfig& c) {
  std::ostringstream o;
  o << "variant: " << detector::variant_name(c.variant) << "\n"
    << "width: " << c.width << "\n"
    << "num_classes: " << c.num_classes << "\n"
    << "image_size: " << c.image_size << "\n"
    << "window: " << c.window << "\n"
    << "cbam_reduction: " << c.cbam_reduction << "\n"
    << "cbam_after_neck: " << flag(c.cbam_after_neck) << "\n"
    << "temporal_skip: " << flag(c.temporal_skip) << "\n"
    << "convlstm_per_scale: [" << flag(c.convlstm_per_scale[0]) << ", " << flag(c.convlstm_per_scale[1]) << ", "
    << flag(c.convlstm_per_scale[2]) << "]\n"
    << "strides: [" << c.strides[0] << ", " << c.strides[1] << ", " << c.strides[2] << "]\n"
    << "anchors:\n";
  for (const auto& scale : c.anchors) {
    o << "  - [";
    for (std::size_t k = 0; k < 3; ++k) o << (k ? ", " : "") << num(scale[k].w) << ", " << num(scale[k].h);
    o << "]\n";
  }
  return o.str();
}

TrainFile parse_train_file(const std::string& text, const std::string& source) {
  const Reader r(source);
  const YAML::Node root = r.load(text);
  TrainFile f;
  auto& c = f.config;
  r.dispatch(root, {
                       {"epochs", [&](const YAML::Node& n) { c.epochs = r.integer(n, "epochs"); }},
                       {"lr",
                        [&](const YAML::Node& n) {
                          c.lr = r.number(n, "lr");
                          f.has_lr = true;
                        }},
                       {"optimizer",
                        [&](const YAML::Node& n) {
                          const std::string name = r.text(n, "optimizer");
                          try {
                            c.optimizer = detector::optimizer_from_name(name);
                          } catch (const ConfigError& e) {
                            r.fail(n, e.what());
                          }
                          f.has_optimizer = true;
                        }},
                       {"weight_decay", [&](const YAML::Node& n) { c.weight_decay = r.number(n, "weight_decay"); }},
                       {"batch_size", [&](const YAML::Node& n) { c.batch_size = r.integer(n, "batch_size"); }},
                       {"loss",
                        [&](const YAML::Node& n) {
                          if (!n.IsMap()) r.fail(n, "'loss' expects a map with box, obj, cls");
                          r.dispatch(n, {{"box", [&](const YAML::Node& v) { c.loss.box = r.number(v, "box"); }},
                                         {"obj", [&](const YAML::Node& v) { c.loss.obj = r.number(v, "obj"); }},
                                         {"cls", [&](const YAML::Node& v) { c.loss.cls = r.number(v, "cls"); }}});
                        }},
                       {"ciou", [&](const YAML::Node& n) { c.ciou = r.boolean(n, "ciou"); }},
                       {"init_weights",
                        [&](const YAML::Node& n) { c.init_weights = n.IsNull() ? "" : r.text(n, "init_weights"); }},
                       {"seed", [&](const YAML::Node& n) { c.seed = r.seed(n, "seed"); }},
                       {"window_stride", [&](const YAML::Node& n) { c.window_stride = r.integer(n, "window_stride"); }},
                       {"steps_per_epoch",
                        [&](const YAML::Node& n) { c.steps_per_epoch = r.integer(n, "steps_per_epoch"); }},
                       {"warmup_steps", [&](const YAML::Node& n) { c.warmup_steps = r.integer(n, "warmup_steps"); }},
                       {"final_lr_ratio", [&](const YAML::Node& n) { c.final_lr_ratio = r.number(n, "final_lr_ratio"); }},
                       {"grad_clip", [&](const YAML::Node& n) { c.grad_clip = r.number(n, "grad_clip"); }},
                       {"kmeans_anchors", [&](const YAML::Node& n) { c.kmeans_anchors = r.boolean(n, "kmeans_anchors"); }},
                       {"split",
                        [&](const YAML::Node& n) {
                          const auto v = r.numbers(n, "split", 3);
                          c.split = {v[0], v[1], v[2]};
                        }},
                       {"split_seed", [&](const YAML::Node& n) { c.split_seed = r.seed(n, "split_seed"); }},
                       {"val_frame_stride",
                        [&](const YAML::Node& n) { c.val_frame_stride = r.integer(n, "val_frame_stride"); }},
                       {"augment", [&](const YAML::Node& n) { read_augment(r, n, c.augment); }},
                       {"model",
                        [&](const YAML::Node& n) {
                          if (!n.IsMap()) r.fail(n, "'model' expects a map");
                          YAML::Emitter e;
                          e << n;
                          f.model_yaml = e.c_str();
                        }},
                   });
  r.validate([&] { c.validate(); });
  return f;
}

TrainConfig resolve_train_config(const TrainFile& file, detector::Variant variant) {
  TrainConfig c = file.config;
  if (!file.has_optimizer) c.optimizer = TrainConfig::defaults_for(variant).optimizer;
  if (!file.has_lr) c.lr = c.optimizer == detector::OptimizerKind::kAdamW ? 0.001 : 0.01;
  c.validate();
  return c;
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream o;
  o << "epochs: " << c.epochs << "\n"
    << "lr: " << num(c.lr) << "\n"
    << "optimizer: " << detector::optimizer_name(c.optimizer) << "\n"
    << "weight_decay: " << num(c.weight_decay) << "\n"
    << "batch_size: " << c.batch_size << "\n"
    << "loss:\n  box: " << num(c.loss.box) << "\n  obj: " << num(c.loss.obj) << "\n  cls: " << num(c.loss.cls) << "\n"
    << "ciou: " << flag(c.ciou) << "\n"
    << "init_weights: " << (c.init_weights.empty() ? std::string("null") : quoted(c.init_weights)) << "\n"
    << "seed: " << c.seed << "\n"
    << "window_stride: " << c.window_stride << "\n"
    << "steps_per_epoch: " << c.steps_per_epoch << "\n"
    << "warmup_steps: " << c.warmup_steps << "\n"
    << "final_lr_ratio: " << num(c.final_lr_ratio) << "\n"
    << "grad_clip: " << num(c.grad_clip) << "\n"
    << "kmeans_anchors: " << flag(c.kmeans_anchors) << "\n"
    << "split: [" << num(c.split[0]) << ", " << num(c.split[1]) << ", " << num(c.split[2]) << "]\n"
    << "split_seed: " << c.split_seed << "\n"
    << "val_frame_stride: " << c.val_frame_stride << "\n"
    << "augment:\n"
    << augment_body(c.augment, "  ");
  return o.str();
}

augment::AugmentConfig parse_augment_config(const std::string& text, const std::string& source) {
  const Reader r(source);
  augment::AugmentConfig a;
  read_augment(r, r.load(text), a);
  r.validate([&] { a.validate(); });
  return a;
}

std::string format_augment_config(const augment::AugmentConfig& config) { return augment_body(config, ""); }

SynthSettings parse_synth_config(const std::string& text, const std::string& source) {
  const Reader r(source);
  SynthSettings s;
  auto& c = s.synth;
  r.dispatch(r.load(text),
             {
                 {"n_videos", [&](const YAML::Node& n) { c.n_videos = r.integer(n, "n_videos"); }},
                 {"frames", [&](const YAML::Node& n) { c.frames = r.integer(n, "frames"); }},
                 {"size", [&](const YAML::Node& n) { c.size = r.integer(n, "size"); }},
                 {"classes", [&](const YAML::Node& n) { c.classes = r.integer(n, "classes"); }},
                 {"max_blobs", [&](const YAML::Node& n) { c.max_blobs = r.integer(n, "max_blobs"); }},
                 {"occlusion_episodes",
                  [&](const YAML::Node& n) { c.occlusion_episodes = r.integer(n, "occlusion_episodes"); }},
                 {"motion",
                  [&](const YAML::Node& n) {
                    const std::string name = r.text(n, "motion");
                    try {
                      c.motion = data::motion_from_name(name);
                    } catch (const std::exception& e) {
                      r.fail(n, e.what());
                    }
                  }},
                 {"noise", [&](const YAML::Node& n) { c.noise = r.number(n, "noise"); }},
                 {"jump_prob", [&](const YAML::Node& n) { c.jump_prob = r.number(n, "jump_prob"); }},
                 {"seed", [&](const YAML::Node& n) { s.seed = r.seed(n, "seed"); }},
             });
  return s;
}

std::string format_synth_config(const SynthSettings& s) {
  const auto& c = s.synth;
  std::ostringstream o;
  o << "n_videos: " << c.n_videos << "\n"
    << "frames: " << c.frames << "\n"
    << "size: " << c.size << "\n"
    << "classes: " << c.classes << "\n"
    << "max_blobs: " << c.max_blobs << "\n"
    << "occlusion_episodes: " << c.occlusion_episodes << "\n"
    << "motion: " << data::motion_name(c.motion) << "\n"
    << "noise: " << num(c.noise) << "\n"
    << "jump_prob: " << num(c.jump_prob) << "\n"
    << "seed: " << s.seed << "\n";
  return o.str();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace tempodet::config
