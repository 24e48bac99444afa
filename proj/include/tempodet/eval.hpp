#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tempodet/geometry.hpp"

namespace tempodet::eval {

using geometry::PixelBox;

struct Detection {
  std::string image_id;
  PixelBox box;  // class_id and confidence live on the box
};

struct GroundTruth {
  std::string image_id;
  PixelBox box;
};

struct MatchRecord {
  double confidence = 0.0;
  bool matched = false;
  int class_id = 0;
  std::string image_id;
  bool operator==(const MatchRecord&) const = default;
};

// Descending confidence; ties by image_id, then input order.
std::vector<Detection> sort_detections(std::vector<Detection> dets);

// Greedy per image and class: each detection (in sort_detections order) takes
// the highest-IoU unmatched ground truth with IoU >= iou_threshold.
// Records come back in that same order.
std::vector<MatchRecord> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                          double iou_threshold);

enum class Interpolation { kCoco101, kAllPoints };

// Records must be in match_detections order. nullopt when n_gt == 0.
std::optional<double> average_precision(const std::vector<MatchRecord>& records, int n_gt,
                                        Interpolation interp = Interpolation::kCoco101);

// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

struct ClassMetrics {
  int class_id = 0;
  int instances = 0;
  double precision = 0.0;
  double recall = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  std::vector<double> ap;  // one per threshold
};

struct Metrics {
  std::vector<ClassMetrics> classes;  // only classes with at least one ground truth, by class id
  double precision = 0.0;
  double recall = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  std::vector<double> thresholds;
};

struct EvalOptions {
  std::vector<double> thresholds = coco_thresholds();
  Interpolation interp = Interpolation::kCoco101;
  // P and R are counted at IoU 0.5 over detections at or above this confidence.
  double pr_confidence = 0.25;
};

// mAP50 uses IoU 0.5; mAP50-95 averages over `thresholds` (strictly
// increasing, within [0.5, 0.95]).
Metrics map_range(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                  const EvalOptions& options = {});

struct TableRow {
  std::string name;
  int instances = 0;
  double precision = 0.0;
  double recall = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  bool operator==(const TableRow&) const = default;
};

struct MetricsTable {
  std::vector<TableRow> rows;  // "all" first, then classes sorted by name; empty when no class has ground truth

  std::string to_csv() const;
  std::string to_json() const;
  std::string to_text() const;
  // "P R mAP50 mAP50-95" of the "all" row.
  std::string summary_line() const;
};

MetricsTable emit_table(const Metrics& metrics, const std::vector<std::string>& class_names);

// `image_id class_id conf x1 y1 x2 y2` per line.
std::string format_predictions(const std::vector<Detection>& dets);
std::vector<Detection> parse_predictions(const std::string& text, const std::string& source = "predictions");
void write_predictions(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::vector<Detection> read_predictions(const std::filesystem::path& path);

}  // namespace tempodet::eval
