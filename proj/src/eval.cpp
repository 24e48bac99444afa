#include "tempodet/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tempodet/errors.hpp"

namespace tempodet::eval {

std::vector<Detection> sort_detections(std::vector<Detection> dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.box.confidence != b.box.confidence) return a.box.confidence > b.box.confidence;
    return a.image_id < b.image_id;
  });
  return dets;
}

std::vector<MatchRecord> match_detections(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                          double iou_threshold) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < gts.size(); ++i) by_key[{gts[i].image_id, gts[i].box.class_id}].push_back(i);
  std::vector<bool> taken(gts.size(), false);
  std::vector<MatchRecord> out;
  for (const auto& d : sort_detections(dets)) {
    MatchRecord r{d.box.confidence, false, d.box.class_id, d.image_id};
    const auto it = by_key.find({d.image_id, d.box.class_id});
    if (it != by_key.end()) {
      double best = iou_threshold;
      std::size_t best_i = gts.size();
      for (std::size_t g : it->second) {
        if (taken[g]) continue;
        const double v = geometry::iou(d.box, gts[g].box);
        if (v >= best && (best_i == gts.size() || v > best)) best = v, best_i = g;
      }
      if (best_i < gts.size()) {
        taken[best_i] = true;
        r.matched = true;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::optional<double> average_precision(const std::vector<MatchRecord>& records, int n_gt, Interpolation interp) {
  if (n_gt <= 0) return std::nullopt;
  const std::size_t n = records.size();
  std::vector<double> recall(n), precision(n);
  int tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (records[k].matched) ++tp;
    recall[k] = static_cast<double>(tp) / n_gt;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  if (interp == Interpolation::kCoco101) {
    std::size_t k = 0;
    for (int i = 0; i <= 100; ++i) {
      const double r = i / 100.0;
      while (k < n && recall[k] < r) ++k;
      if (k == n) break;
      ap += precision[k];
    }
    ap /= 101.0;
  } else {
    double prev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      ap += (recall[k] - prev) * precision[k];
      prev = recall[k];
    }
  }
  return ap;
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

Metrics map_range(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, const EvalOptions& options) {
  const auto& thr = options.thresholds;
  if (thr.empty()) throw ConfigError("map_range: no IoU thresholds");
  for (std::size_t i = 0; i < thr.size(); ++i) {
    if (thr[i] < 0.5 - 1e-12 || thr[i] > 0.95 + 1e-12)
      throw ConfigError("map_range: IoU thresholds must lie in [0.5, 0.95]");
    if (i > 0 && !(thr[i] > thr[i - 1])) throw ConfigError("map_range: IoU thresholds must be strictly increasing");
  }
  std::map<int, int> instances;
  for (const auto& g : gts) ++instances[g.box.class_id];

  auto per_class = [&](const std::vector<MatchRecord>& recs) {
    std::map<int, std::vector<MatchRecord>> out;
    for (const auto& r : recs)
      if (instances.count(r.class_id)) out[r.class_id].push_back(r);
    return out;
  };

  Metrics m;
  m.thresholds = thr;
  for (const auto& [cls, n] : instances) m.classes.push_back({cls, n, 0, 0, 0, 0, {}});
  if (m.classes.empty()) return m;

  auto fill = [&](double t, auto&& sink) {
    auto groups = per_class(match_detections(dets, gts, t));
    for (auto& c : m.classes) sink(c, groups[c.class_id]);
  };
  for (double t : thr)
    fill(t, [&](ClassMetrics& c, const std::vector<MatchRecord>& recs) {
      c.ap.push_back(*average_precision(recs, c.instances, options.interp));
    });
  fill(0.5, [&](ClassMetrics& c, const std::vector<MatchRecord>& recs) {
    c.map50 = *average_precision(recs, c.instances, options.interp);
    int tp = 0, count = 0;
    for (const auto& r : recs)
      if (r.confidence >= options.pr_confidence) {
        ++count;
        tp += r.matched ? 1 : 0;
      }
    c.precision = count > 0 ? static_cast<double>(tp) / count : 0.0;
    c.recall = static_cast<double>(tp) / c.instances;
  });
  const double nc = static_cast<double>(m.classes.size());
  for (auto& c : m.classes) {
    c.map50_95 = std::accumulate(c.ap.begin(), c.ap.end(), 0.0) / static_cast<double>(c.ap.size());
    m.precision += c.precision / nc;
    m.recall += c.recall / nc;
    m.map50 += c.map50 / nc;
    m.map50_95 += c.map50_95 / nc;
  }
  return m;
}

MetricsTable emit_table(const Metrics& metrics, const std::vector<std::string>& class_names) {
  MetricsTable t;
  if (metrics.classes.empty()) return t;
  std::vector<TableRow> rows;
  int total = 0;
  for (const auto& c : metrics.classes) {
    const std::string name = c.class_id >= 0 && c.class_id < static_cast<int>(class_names.size())
                                 ? class_names[static_cast<std::size_t>(c.class_id)]
                                 : "class" + std::to_string(c.class_id);
    rows.push_back({name, c.instances, c.precision, c.recall, c.map50, c.map50_95});
    total += c.instances;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const TableRow& a, const TableRow& b) { return a.name < b.name; });
  t.rows.push_back({"all", total, metrics.precision, metrics.recall, metrics.map50, metrics.map50_95});
  t.rows.insert(t.rows.end(), rows.begin(), rows.end());
  return t;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double rounded(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

std::string MetricsTable::to_csv() const {
  std::string out = "Class,Instances,P,R,mAP50,mAP50-95\n";
  for (const auto& r : rows)
    out += r.name + "," + std::to_string(r.instances) + "," + fixed(r.precision, 6) + "," + fixed(r.recall, 6) + "," +
           fixed(r.map50, 6) + "," + fixed(r.map50_95, 6) + "\n";
  return out;
}

std::string MetricsTable::to_json() const {
  nlohmann::ordered_json j;
  j["columns"] = {"Class", "Instances", "P", "R", "mAP50", "mAP50-95"};
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"Class", r.name},
                         {"Instances", r.instances},
                         {"P", rounded(r.precision)},
                         {"R", rounded(r.recall)},
                         {"mAP50", rounded(r.map50)},
                         {"mAP50-95", rounded(r.map50_95)}});
  return j.dump(2) + "\n";
}

std::string MetricsTable::to_text() const {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %10s %10s %10s\n", static_cast<int>(width), "Class", "Instances", "P",
                "R", "mAP50", "mAP50-95");
  std::string out = buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %10d %10.3f %10.3f %10.3f %10.3f\n", static_cast<int>(width), r.name.c_str(),
                  r.instances, r.precision, r.recall, r.map50, r.map50_95);
    out += buf;
  }
  return out;
}

std::string MetricsTable::summary_line() const {
  if (rows.empty()) return "P - R - mAP50 - mAP50-95 -";
  const auto& a = rows.front();
  return "P " + fixed(a.precision, 6) + " R " + fixed(a.recall, 6) + " mAP50 " + fixed(a.map50, 6) + " mAP50-95 " +
         fixed(a.map50_95, 6);
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string format_predictions(const std::vector<Detection>& dets) {
  std::string out;
  for (const auto& d : dets) {
    if (d.image_id.empty() || d.image_id.find_first_of(" \t\r\n") != std::string::npos)
      throw DataError("prediction image_id must be non-empty and contain no whitespace: '" + d.image_id + "'");
    const auto& b = d.box;
    out += d.image_id + " " + std::to_string(b.class_id) + " " + shortest(b.confidence) + " " + shortest(b.x1) + " " +
           shortest(b.y1) + " " + shortest(b.x2) + " " + shortest(b.y2) + "\n";
  }
  return out;
}

std::vector<Detection> parse_predictions(const std::string& text, const std::string& source) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Detection d;
    std::string extra;
    if (!(ls >> d.image_id >> d.box.class_id >> d.box.confidence >> d.box.x1 >> d.box.y1 >> d.box.x2 >> d.box.y2) ||
        (ls >> extra))
      throw DataError(source + ":" + std::to_string(line_no) +
                      ": expected `image_id class_id conf x1 y1 x2 y2`, got '" + line + "'");
    if (d.box.class_id < 0) throw DataError(source + ":" + std::to_string(line_no) + ": negative class id");
    if (!(d.box.confidence >= 0 && d.box.confidence <= 1))
      throw DataError(source + ":" + std::to_string(line_no) + ": confidence outside [0, 1]");
    out.push_back(std::move(d));
  }
  return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  const std::string text = format_predictions(dets);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

std::vector<Detection> read_predictions(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_predictions(ss.str(), path.string());
}

}  // namespace tempodet::eval
