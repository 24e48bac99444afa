#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempodet/detector/train.hpp"
#include "tempodet/eval.hpp"

namespace tempodet::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthArgs {
  fs::path config;  // empty: built-in defaults
  fs::path out;
  std::optional<std::uint64_t> seed;
  int window = 3;  // only used to warn about videos shorter than a window
};

struct SynthSummary {
  int videos = 0;
  long frames = 0;
};

SynthSummary cmd_synth(const SynthArgs& args, std::ostream& log);

struct TrainArgs {
  fs::path config;  // train config; may embed a `model:` map
  fs::path model;   // model config; replaces the embedded map
  fs::path data;
  fs::path out;
  std::string variant;  // overrides the model config's variant
  fs::path init;        // overrides init_weights
  std::optional<std::uint64_t> seed;
};

detector::FitResult cmd_train(const TrainArgs& args, std::ostream& log);

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";  // val or test
  fs::path out;                // empty: print only
  double conf = 0.001;
  double iou = 0.6;
  bool all_points = false;
};

eval::MetricsTable cmd_eval(const EvalArgs& args, std::ostream& out);

struct FrameRange {
  int first = 0;
  int last = 0;
};

// Inclusive "a-b"; a single "a" is the range a-a.
FrameRange parse_frame_range(const std::string& text);

struct FrameDetection {
  int class_id = 0;
  std::string class_name;
  double confidence = 0.0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const FrameDetection&) const = default;
};

struct FrameAnalysisRecord {
  int frame_index = 0;
  bool occluded = false;
  std::vector<FrameDetection> detections;  // descending confidence
  std::optional<double> top_confidence;
  bool operator==(const FrameAnalysisRecord&) const = default;
};

struct AnalysisReport {
  std::string video_id;
  std::string variant;
  std::vector<FrameAnalysisRecord> records;
  bool operator==(const AnalysisReport&) const = default;
};

std::string report_to_json(const AnalysisReport& report);
AnalysisReport report_from_json(const std::string& text);
// frame_index,occluded,top_confidence,detections; empty cell when no detection.
std::string confidence_csv(const AnalysisReport& report);

struct AnalyzeArgs {
  fs::path checkpoint;
  fs::path data;
  std::string video;
  std::string frames;
  fs::path out;
  double conf = 0.25;
  double iou = 0.45;
  bool render = true;
};

AnalysisReport cmd_analyze(const AnalyzeArgs& args, std::ostream& log);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tempodet::cli
