#include "tempodet/cli.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "tempodet/config_io.hpp"
#include "tempodet/detector/checkpoint.hpp"
#include "tempodet/errors.hpp"

namespace tempodet::cli {

namespace {

using detector::ModelConfig;
using detector::Variant;
using Json = nlohmann::ordered_json;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

data::Dataset load_dataset(const fs::path& dir) {
  if (dir.empty()) throw UsageError("--data is required");
  return data::ingest(dir);
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path.string());
}

struct SplitInfo {
  std::array<double, 3> ratios{0.7, 0.15, 0.15};
  std::uint64_t seed = 0;
};

SplitInfo split_from_metadata(const std::string& metadata) {
  SplitInfo s;
  if (metadata.empty()) return s;
  try {
    const YAML::Node root = YAML::Load(metadata);
    if (const auto r = root["split"]; r && r.IsSequence() && r.size() == 3)
      for (std::size_t i = 0; i < 3; ++i) s.ratios[i] = r[i].as<double>();
    if (const auto seed = root["split_seed"]) s.seed = seed.as<std::uint64_t>();
  } catch (const YAML::Exception& e) {
    throw DataError(std::string("checkpoint metadata: ") + e.what());
  }
  return s;
}

std::vector<std::string> video_ids(const data::Dataset& ds) {
  std::vector<std::string> ids;
  for (const auto& v : ds.videos) ids.push_back(v.id);
  return ids;
}

void check_classes(const ModelConfig& mc, const data::Dataset& ds) {
  if (mc.num_classes != static_cast<int>(ds.class_names.size()))
    throw DataError("class count mismatch: model has " + std::to_string(mc.num_classes) + ", dataset has " +
                    std::to_string(ds.class_names.size()));
}

// 3x5 glyphs, one row per 3-bit group, most significant bit left.
const std::array<std::array<std::uint8_t, 5>, 11> kGlyphs{{
    {7, 5, 5, 5, 7},  // 0
    {2, 6, 2, 2, 7},  // 1
    {7, 1, 7, 4, 7},  // 2
    {7, 1, 7, 1, 7},  // 3
    {5, 5, 7, 1, 1},  // 4
    {7, 4, 7, 1, 7},  // 5
    {7, 4, 7, 5, 7},  // 6
    {7, 1, 1, 1, 1},  // 7
    {7, 5, 7, 5, 7},  // 8
    {7, 5, 7, 1, 7},  // 9
    {0, 0, 0, 0, 2},  // .
}};

const std::array<std::array<std::uint8_t, 3>, 8> kClassColors{{
    {255, 56, 56}, {72, 249, 10}, {0, 194, 255}, {255, 157, 151},
    {255, 178, 29}, {146, 204, 23}, {132, 56, 255}, {255, 55, 199},
}};

void draw_text(data::ByteImage& img, int x, int y, const std::string& text, std::array<std::uint8_t, 3> color) {
  const int w = 4 * static_cast<int>(text.size()) + 1;
  for (int yy = y; yy < y + 7; ++yy)
    for (int xx = x; xx < x + w; ++xx)
      if (xx >= 0 && yy >= 0 && xx < img.width && yy < img.height)
        for (int c = 0; c < 3; ++c) img.at(c, yy, xx) = color[static_cast<std::size_t>(c)];
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    const int g = ch == '.' ? 10 : (ch >= '0' && ch <= '9' ? ch - '0' : -1);
    if (g < 0) continue;
    for (int r = 0; r < 5; ++r)
      for (int b = 0; b < 3; ++b) {
        if (!(kGlyphs[static_cast<std::size_t>(g)][static_cast<std::size_t>(r)] & (4 >> b))) continue;
        const int px = x + 1 + 4 * static_cast<int>(i) + b, py = y + 1 + r;
        if (px >= 0 && py >= 0 && px < img.width && py < img.height)
          for (int c = 0; c < 3; ++c) img.at(c, py, px) = 255;
      }
  }
}

std::string conf_text(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

ModelConfig resolve_model(const std::string& text, const std::string& source, const std::string& variant,
                          const data::Dataset& ds) {
  ModelConfig m = text.empty() ? ModelConfig{} : config::parse_model_config(text, source);
  bool explicit_classes = false;
  if (!text.empty()) {
    const YAML::Node root = YAML::Load(text);
    explicit_classes = root.IsMap() && root["num_classes"];
  }
  const int nc = static_cast<int>(ds.class_names.size());
  if (explicit_classes && m.num_classes != nc)
    throw DataError(source + ": num_classes is " + std::to_string(m.num_classes) + " but the dataset has " +
                    std::to_string(nc) + " classes");
  const Variant v = variant.empty() ? m.variant : detector::variant_from_name(variant);
  ModelConfig out = ModelConfig::for_variant(v, m.width, nc, m.image_size, m.window);
  out.anchors = m.anchors;
  out.strides = m.strides;
  out.cbam_reduction = m.cbam_reduction;
  out.temporal_skip = m.temporal_skip;
  if (v == m.variant) {
    out.cbam_after_neck = m.cbam_after_neck;
    out.convlstm_per_scale = m.convlstm_per_scale;
  }
  out.validate();
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), salt};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

SynthSummary cmd_synth(const SynthArgs& args, std::ostream& log) {
  if (args.out.empty()) throw UsageError("--out is required");
  config::SynthSettings s;
  if (!args.config.empty()) {
    require_file(args.config, "synth config");
    s = config::parse_synth_config(config::read_text(args.config), args.config.string());
  }
  if (args.seed) s.seed = *args.seed;
  if (args.window < 1) throw UsageError("--window must be at least 1");
  const data::Dataset ds = data::synth_moving_blob(s.synth, s.seed);
  if (s.synth.frames < args.window)
    log << "warning: videos have " << s.synth.frames << " frames, fewer than the window of " << args.window
        << "; they yield no training windows\n";
  make_out_dir(args.out);
  data::write_dataset(args.out, ds);
  write_file(args.out / "synth.yaml", config::format_synth_config(s));
  SynthSummary sum;
  sum.videos = static_cast<int>(ds.videos.size());
  for (const auto& v : ds.videos) sum.frames += v.size();
  log << "wrote " << sum.videos << " videos, " << sum.frames << " frames to " << args.out.string() << "\n";
  return sum;
}

detector::FitResult cmd_train(const TrainArgs& args, std::ostream& log) {
  if (args.out.empty()) throw UsageError("--out is required");
  config::TrainFile file;
  if (!args.config.empty()) {
    require_file(args.config, "train config");
    file = config::parse_train_file(config::read_text(args.config), args.config.string());
  }
  std::string model_text = file.model_yaml;
  std::string model_source = args.config.string() + " (model)";
  if (!args.model.empty()) {
    require_file(args.model, "model config");
    model_text = config::read_text(args.model);
    model_source = args.model.string();
  }
  Variant variant = Variant::kBaseline;
  if (!model_text.empty()) variant = config::parse_model_config(model_text, model_source).variant;
  if (!args.variant.empty()) variant = detector::variant_from_name(args.variant);
  detector::TrainConfig tc = config::resolve_train_config(file, variant);
  if (args.seed) tc.seed = *args.seed;
  if (!args.init.empty()) tc.init_weights = args.init.string();
  tc.validate();
  if (!tc.init_weights.empty()) detector::read_checkpoint(tc.init_weights);

  data::Dataset ds = load_dataset(args.data);
  ModelConfig mc = resolve_model(model_text, model_source, args.variant, ds);

  const auto split = data::split_videos(video_ids(ds), tc.split, tc.split_seed);
  if (split.train.empty()) throw DataError("training split is empty");
  if (split.val.empty()) throw DataError("validation split is empty");
  if (tc.kmeans_anchors) mc.anchors = detector::anchors_from_dataset(ds, split.train, mc.image_size);
  for (auto& v : ds.videos) v.load_all();

  make_out_dir(args.out);
  write_file(args.out / "model.yaml", config::format_model_config(mc));
  write_file(args.out / "train.yaml", config::format_train_config(tc));
  log << "variant " << detector::variant_name(mc.variant) << ", " << split.train.size() << " train / "
      << split.val.size() << " val / " << split.test.size() << " test videos\n";

  std::mt19937_64 rng(mix_seed(tc.seed, 0x6d6f64u));
  detector::Model<float> model(mc, rng);
  log << "parameters " << model.parameter_count() << "\n";
  detector::FitOptions fo;
  fo.out_dir = args.out;
  fo.log = &log;
  auto result = detector::fit(model, tc, ds, split, fo);
  log << "best epoch " << result.best_epoch << " val mAP50-95 " << conf_text(result.best_map50_95) << "\n";
  return result;
}

eval::MetricsTable cmd_eval(const EvalArgs& args, std::ostream& out) {
  if (args.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (args.split != "val" && args.split != "test") throw UsageError("--split must be val or test");
  if (!(args.conf >= 0 && args.conf <= 1) || !(args.iou > 0 && args.iou <= 1))
    throw UsageError("--conf and --iou must lie in [0, 1]");
  const auto ck = detector::read_checkpoint(args.checkpoint);
  const auto model = detector::model_from_checkpoint(ck);
  const data::Dataset ds = load_dataset(args.data);
  check_classes(model.config(), ds);
  const SplitInfo info = split_from_metadata(ck.metadata);
  const auto split = data::split_videos(video_ids(ds), info.ratios, info.seed);
  const auto& ids = args.split == "val" ? split.val : split.test;
  if (ids.empty()) throw DataError("the " + args.split + " split is empty");

  detector::EvalSettings es;
  es.decode.conf_threshold = args.conf;
  es.decode.iou_threshold = args.iou;
  es.eval.interp = args.all_points ? eval::Interpolation::kAllPoints : eval::Interpolation::kCoco101;
  const auto result = detector::evaluate_videos(model, ds, ids, es);
  const auto table = eval::emit_table(result.metrics, ds.class_names);
  if (!args.out.empty()) {
    make_out_dir(args.out);
    write_file(args.out / "metrics.csv", table.to_csv());
    write_file(args.out / "metrics.json", table.to_json());
    write_file(args.out / "metrics.txt", table.to_text());
    eval::write_predictions(args.out / "predictions.txt", result.detections);
  }
  out << table.to_text() << table.summary_line() << "\n";
  return table;
}

FrameRange parse_frame_range(const std::string& text) {
  FrameRange r;
  const auto dash = text.find('-');
  auto to_int = [&](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw UsageError("frame range must look like a-b, got '" + text + "'");
    return std::stoi(s);
  };
  if (dash == std::string::npos) {
    r.first = r.last = to_int(text);
  } else {
    r.first = to_int(text.substr(0, dash));
    r.last = to_int(text.substr(dash + 1));
  }
  if (r.last < r.first) throw UsageError("frame range " + text + " is reversed");
  return r;
}

std::string report_to_json(const AnalysisReport& report) {
  Json j;
  j["video_id"] = report.video_id;
  j["variant"] = report.variant;
  Json records = Json::array();
  for (const auto& r : report.records) {
    Json jr;
    jr["frame_index"] = r.frame_index;
    jr["occluded"] = r.occluded;
    jr["top_confidence"] = r.top_confidence ? Json(*r.top_confidence) : Json(nullptr);
    Json dets = Json::array();
    for (const auto& d : r.detections)
      dets.push_back({{"class_id", d.class_id},
                      {"class_name", d.class_name},
                      {"confidence", d.confidence},
                      {"box", {d.x1, d.y1, d.x2, d.y2}}});
    jr["detections"] = std::move(dets);
    records.push_back(std::move(jr));
  }
  j["records"] = std::move(records);
  return j.dump(2) + "\n";
}

AnalysisReport report_from_json(const std::string& text) {
  AnalysisReport rep;
  try {
    const Json j = Json::parse(text);
    rep.video_id = j.at("video_id").get<std::string>();
    rep.variant = j.at("variant").get<std::string>();
    for (const auto& jr : j.at("records")) {
      FrameAnalysisRecord r;
      r.frame_index = jr.at("frame_index").get<int>();
      r.occluded = jr.at("occluded").get<bool>();
      if (!jr.at("top_confidence").is_null()) r.top_confidence = jr.at("top_confidence").get<double>();
      for (const auto& jd : jr.at("detections")) {
        FrameDetection d;
        d.class_id = jd.at("class_id").get<int>();
        d.class_name = jd.at("class_name").get<std::string>();
        d.confidence = jd.at("confidence").get<double>();
        const auto& b = jd.at("box");
        if (b.size() != 4) throw DataError("analysis record: box needs 4 numbers");
        d.x1 = b[0].get<double>(), d.y1 = b[1].get<double>(), d.x2 = b[2].get<double>(), d.y2 = b[3].get<double>();
        r.detections.push_back(std::move(d));
      }
      rep.records.push_back(std::move(r));
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("analysis report: ") + e.what());
  }
  return rep;
}

std::string confidence_csv(const AnalysisReport& report) {
  std::string s = "frame_index,occluded,top_confidence,detections\n";
  for (const auto& r : report.records) {
    char buf[32] = "";
    if (r.top_confidence) std::snprintf(buf, sizeof buf, "%.6f", *r.top_confidence);
    s += std::to_string(r.frame_index) + "," + (r.occluded ? "1" : "0") + "," + buf + "," +
         std::to_string(r.detections.size()) + "\n";
  }
  return s;
}

AnalysisReport cmd_analyze(const AnalyzeArgs& args, std::ostream& log) {
  if (args.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (args.video.empty()) throw UsageError("--video is required");
  if (args.out.empty()) throw UsageError("--out is required");
  const FrameRange range = parse_frame_range(args.frames);
  if (!(args.conf >= 0 && args.conf <= 1) || !(args.iou > 0 && args.iou <= 1))
    throw UsageError("--conf and --iou must lie in [0, 1]");
  const auto ck = detector::read_checkpoint(args.checkpoint);
  const auto model = detector::model_from_checkpoint(ck);
  const data::Dataset ds = load_dataset(args.data);
  check_classes(model.config(), ds);
  const auto it = std::find_if(ds.videos.begin(), ds.videos.end(), [&](const auto& v) { return v.id == args.video; });
  if (it == ds.videos.end()) throw DataError("no video '" + args.video + "' in " + args.data.string());
  const data::VideoRecord& video = *it;
  if (range.last >= video.size())
    throw DataError("frame range " + args.frames + " is outside video " + video.id + " (" +
                    std::to_string(video.size()) + " frames)");

  std::vector<int> indices;
  for (int i = range.first; i <= range.last; ++i) indices.push_back(i);
  detector::DecodeOptions dopt;
  dopt.conf_threshold = args.conf;
  dopt.iou_threshold = args.iou;
  const auto preds = detector::predict_frames(model, video, indices, dopt);

  AnalysisReport rep;
  rep.video_id = video.id;
  rep.variant = detector::variant_name(model.config().variant);
  for (const auto& p : preds) {
    FrameAnalysisRecord r;
    r.frame_index = p.frame_index;
    r.occluded = video.is_occluded(p.frame_index);
    auto boxes = p.boxes;
    std::stable_sort(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
    for (const auto& b : boxes) {
      FrameDetection d;
      d.class_id = b.class_id;
      d.class_name = b.class_id < static_cast<int>(ds.class_names.size())
                         ? ds.class_names[static_cast<std::size_t>(b.class_id)]
                         : std::to_string(b.class_id);
      d.confidence = b.confidence;
      d.x1 = b.x1, d.y1 = b.y1, d.x2 = b.x2, d.y2 = b.y2;
      r.detections.push_back(std::move(d));
    }
    if (!r.detections.empty()) r.top_confidence = r.detections.front().confidence;
    rep.records.push_back(std::move(r));
  }

  make_out_dir(args.out);
  write_file(args.out / "records.json", report_to_json(rep));
  write_file(args.out / "confidence.csv", confidence_csv(rep));
  if (args.render) {
    make_out_dir(args.out / "frames");
    for (const auto& r : rep.records) {
      data::ByteImage img = video.frame_bytes(r.frame_index);
      for (auto d = r.detections.rbegin(); d != r.detections.rend(); ++d) {
        const auto color = kClassColors[static_cast<std::size_t>(d->class_id) % kClassColors.size()];
        data::draw_box(img, {d->x1, d->y1, d->x2, d->y2, d->class_id, d->confidence}, color);
        draw_text(img, static_cast<int>(d->x1), static_cast<int>(d->y1) - 7, conf_text(d->confidence), color);
      }
      char name[32];
      std::snprintf(name, sizeof name, "img_%05d.png", r.frame_index);
      data::write_png(args.out / "frames" / name, img);
    }
  }
  for (const auto& r : rep.records)
    log << "frame " << r.frame_index << (r.occluded ? " (occluded)" : "") << ": " << r.detections.size()
        << " detections, top " << (r.top_confidence ? conf_text(*r.top_confidence) : std::string("-")) << "\n";
  return rep;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal object detection on video: synthesize data, train, evaluate, analyze."};
  app.name("tempodet");
  app.require_subcommand(1);

  SynthArgs sa;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic moving-blob dataset");
  synth->add_option("--config", sa.config, "Synth config (YAML)");
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "Overrides the config seed");
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--window", sa.window, "Window length to check video lengths against");

  TrainArgs ta;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "Train a model variant");
  train->add_option("--config", ta.config, "Train config (YAML)");
  train->add_option("--model", ta.model, "Model config (YAML)");
  train->add_option("--data", ta.data, "Dataset directory")->required();
  train->add_option("--out", ta.out, "Run directory")->required();
  train->add_option("--variant", ta.variant, "baseline, temporal or temporal_cbam")
      ->check(CLI::IsMember({"baseline", "temporal", "temporal_cbam"}));
  train->add_option("--init", ta.init, "Checkpoint to warm-start from");
  auto* train_seed_opt = train->add_option("--seed", train_seed, "Overrides the config seed");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--split", ea.split, "val or test")->check(CLI::IsMember({"val", "test"}));
  ev->add_option("--out", ea.out, "Directory for metrics.csv, metrics.json, metrics.txt, predictions.txt");
  ev->add_option("--conf", ea.conf, "Confidence threshold");
  ev->add_option("--iou", ea.iou, "NMS IoU threshold");
  ev->add_flag("--all-points", ea.all_points, "All-point interpolated AP instead of 101-point");

  AnalyzeArgs aa;
  bool no_render = false;
  auto* an = app.add_subcommand("analyze", "Per-frame confidence analysis of one video");
  an->add_option("--checkpoint", aa.checkpoint, "Checkpoint file")->required();
  an->add_option("--data", aa.data, "Dataset directory")->required();
  an->add_option("--video", aa.video, "Video id")->required();
  an->add_option("--frames", aa.frames, "Inclusive frame range a-b")->required();
  an->add_option("--out", aa.out, "Output directory")->required();
  an->add_option("--conf", aa.conf, "Confidence threshold");
  an->add_option("--iou", aa.iou, "NMS IoU threshold");
  an->add_flag("--no-render", no_render, "Skip annotated frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      if (synth_seed_opt->count()) sa.seed = synth_seed;
      cmd_synth(sa, out);
    } else if (train->parsed()) {
      if (train_seed_opt->count()) ta.seed = train_seed;
      cmd_train(ta, out);
    } else if (ev->parsed()) {
      cmd_eval(ea, out);
    } else if (an->parsed()) {
      aa.render = !no_render;
      cmd_analyze(aa, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace tempodet::cli
