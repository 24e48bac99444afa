#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tempodet/cli.hpp"
#include "tempodet/data.hpp"
#include "tempodet/detector/checkpoint.hpp"

namespace tempodet::cli {
namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "tempodet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("tempodet_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    put(root_ / "synth.yaml", "n_videos: 4\nframes: 12\nsize: 64\nseed: 5\n");
    put(root_ / "train.yaml",
        "epochs: 1\nbatch_size: 2\nsteps_per_epoch: 2\nsplit: [0.5, 0.25, 0.25]\n"
        "model:\n  variant: baseline\n  width: 4\n  image_size: 64\n  window: 2\n  cbam_reduction: 4\n");
    ASSERT_EQ(call({"synth", "--config", (root_ / "synth.yaml").string(), "--out", (root_ / "data").string()}).code, 0);
    ASSERT_EQ(call({"train", "--config", (root_ / "train.yaml").string(), "--data", (root_ / "data").string(), "--out",
                    (root_ / "base").string(), "--seed", "1"})
                  .code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string p(const std::string& rel) { return (root_ / rel).string(); }
  static fs::path root_;
};

fs::path CliTest::root_;

TEST_F(CliTest, SynthIsDeterministicAndIngestible) {
  ASSERT_EQ(call({"synth", "--config", p("synth.yaml"), "--out", p("data2")}).code, 0);
  const auto a = data::ingest(root_ / "data");
  const auto b = data::ingest(root_ / "data2");
  ASSERT_EQ(a.videos.size(), 4u);
  for (std::size_t i = 0; i < a.videos.size(); ++i)
    for (int f = 0; f < a.videos[i].size(); ++f)
      EXPECT_EQ(slurp(root_ / "data" / a.videos[i].frame_paths[static_cast<std::size_t>(f)]),
                slurp(root_ / "data2" / b.videos[i].frame_paths[static_cast<std::size_t>(f)]));
}

TEST_F(CliTest, SynthWarnsAboutShortVideos) {
  put(root_ / "short.yaml", "n_videos: 1\nframes: 2\nsize: 32\n");
  const auto r = call({"synth", "--config", p("short.yaml"), "--out", p("short"), "--window", "3"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("warning"), std::string::npos);
}

TEST_F(CliTest, ConfigErrorsLeaveNoOutput) {
  put(root_ / "bad.yaml", "epochs: 1\nlearning_rate: 3\n");
  const auto r = call({"train", "--config", p("bad.yaml"), "--data", p("data"), "--out", p("bad_run")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("bad.yaml:2:"), std::string::npos);
  EXPECT_FALSE(fs::exists(root_ / "bad_run"));
  put(root_ / "bad_synth.yaml", "n_videos: -1\n");
  EXPECT_EQ(call({"synth", "--config", p("bad_synth.yaml"), "--out", p("bad_data")}).code, kExitUsage);
  EXPECT_FALSE(fs::exists(root_ / "bad_data"));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(call({}).code, kExitUsage);
  EXPECT_EQ(call({"fly"}).code, kExitUsage);
  EXPECT_EQ(call({"train", "--data", p("data"), "--out", p("x"), "--variant", "yolo"}).code, kExitUsage);
  EXPECT_EQ(call({"eval", "--checkpoint", p("base/best.ckpt"), "--data", p("data"), "--split", "train"}).code,
            kExitUsage);
  EXPECT_EQ(call({"--help"}).code, kExitOk);
  EXPECT_FALSE(fs::exists(root_ / "x"));
}

TEST_F(CliTest, DataErrors) {
  EXPECT_EQ(call({"eval", "--checkpoint", p("missing.ckpt"), "--data", p("data")}).code, kExitData);
  EXPECT_EQ(call({"train", "--config", p("train.yaml"), "--data", p("nowhere"), "--out", p("y")}).code, kExitData);
  EXPECT_FALSE(fs::exists(root_ / "y"));
  const auto r = call({"analyze", "--checkpoint", p("base/best.ckpt"), "--data", p("data"), "--video", "video_000",
                       "--frames", "10-12", "--out", p("an_bad")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_FALSE(fs::exists(root_ / "an_bad"));
}

TEST_F(CliTest, ClassCountMismatchIsAnError) {
  put(root_ / "three.yaml", "n_videos: 2\nframes: 4\nsize: 64\nclasses: 3\n");
  ASSERT_EQ(call({"synth", "--config", p("three.yaml"), "--out", p("three")}).code, 0);
  const auto r = call({"eval", "--checkpoint", p("base/best.ckpt"), "--data", p("three")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("class count"), std::string::npos);
}

TEST_F(CliTest, EmptySplitIsAnError) {
  put(root_ / "one.yaml", "n_videos: 1\nframes: 4\nsize: 64\n");
  ASSERT_EQ(call({"synth", "--config", p("one.yaml"), "--out", p("one")}).code, 0);
  const auto r = call({"eval", "--checkpoint", p("base/best.ckpt"), "--data", p("one"), "--split", "test"});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("split"), std::string::npos);
}

TEST_F(CliTest, NonFiniteTrainingExitsWithNumericCode) {
  put(root_ / "hot.yaml",
      "epochs: 1\nlr: 1.0e+30\noptimizer: sgd_momentum\ngrad_clip: 0\nbatch_size: 2\nsteps_per_epoch: 4\n"
      "split: [0.5, 0.25, 0.25]\nmodel:\n  width: 4\n  image_size: 64\n");
  const auto r = call({"train", "--config", p("hot.yaml"), "--data", p("data"), "--out", p("hot")});
  EXPECT_EQ(r.code, kExitNumeric) << r.err;
  EXPECT_TRUE(fs::exists(root_ / "hot" / "nonfinite_batch.txt"));
}

TEST_F(CliTest, TrainAndEvalAreDeterministic) {
  ASSERT_EQ(call({"train", "--config", p("train.yaml"), "--data", p("data"), "--out", p("base2"), "--seed", "1"}).code,
            0);
  for (const char* f : {"best.ckpt", "last.ckpt", "epochs.csv", "train.yaml", "model.yaml"})
    EXPECT_EQ(slurp(root_ / "base" / f), slurp(root_ / "base2" / f)) << f;
  for (const char* out : {"ev1", "ev2"})
    ASSERT_EQ(call({"eval", "--checkpoint", p("base/best.ckpt"), "--data", p("data"), "--split", "val", "--out", p(out)})
                  .code,
              0);
  for (const char* f : {"metrics.csv", "metrics.json", "metrics.txt", "predictions.txt"})
    EXPECT_EQ(slurp(root_ / "ev1" / f), slurp(root_ / "ev2" / f)) << f;
  EXPECT_EQ(slurp(root_ / "ev1" / "metrics.csv").rfind("Class,Instances,P,R,mAP50,mAP50-95\nall,", 0), 0u);
}

TEST_F(CliTest, WarmStartReportsTransfer) {
  const auto r = call({"train", "--config", p("train.yaml"), "--data", p("data"), "--out", p("temporal"), "--variant",
                       "temporal", "--init", p("base/best.ckpt")});
  EXPECT_EQ(r.code, 0) << r.err;
  const int n = static_cast<int>(detector::load_model(root_ / "base" / "best.ckpt").params().size());
  EXPECT_NE(r.out.find("transferred " + std::to_string(n) + " of"), std::string::npos) << r.out;
}

TEST_F(CliTest, AnalyzeRangeRecordsAndRoundTrip) {
  for (const char* out : {"an1", "an2"})
    ASSERT_EQ(call({"analyze", "--checkpoint", p("base/best.ckpt"), "--data", p("data"), "--video", "video_001",
                    "--frames", "3-5", "--out", p(out), "--conf", "0.001"})
                  .code,
              0);
  const auto text = slurp(root_ / "an1" / "records.json");
  const auto rep = report_from_json(text);
  ASSERT_EQ(rep.records.size(), 3u);
  EXPECT_EQ(rep.records.front().frame_index, 3);
  EXPECT_EQ(rep.records.back().frame_index, 5);
  EXPECT_EQ(report_to_json(rep), text);
  EXPECT_EQ(text, slurp(root_ / "an2" / "records.json"));
  EXPECT_EQ(slurp(root_ / "an1" / "confidence.csv"), slurp(root_ / "an2" / "confidence.csv"));
  for (int f = 3; f <= 5; ++f) {
    const auto name = "frames/img_0000" + std::to_string(f) + ".png";
    EXPECT_EQ(slurp(root_ / "an1" / name), slurp(root_ / "an2" / name));
  }
  for (const auto& r : rep.records) {
    for (std::size_t i = 1; i < r.detections.size(); ++i)
      EXPECT_GE(r.detections[i - 1].confidence, r.detections[i].confidence);
    if (r.detections.empty()) EXPECT_FALSE(r.top_confidence);
  }
}

TEST_F(CliTest, OneEpochSmokeRunIsQuick) {
  put(root_ / "smoke_synth.yaml", "n_videos: 4\nframes: 100\nsize: 64\nseed: 8\n");
  ASSERT_EQ(call({"synth", "--config", p("smoke_synth.yaml"), "--out", p("smoke_data")}).code, 0);
  put(root_ / "smoke.yaml",
      "epochs: 1\nsplit: [0.5, 0.25, 0.25]\nmodel:\n  variant: temporal_cbam\n  width: 8\n  image_size: 64\n");
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = call({"train", "--config", p("smoke.yaml"), "--data", p("smoke_data"), "--out", p("smoke_run")});
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("2 train"), std::string::npos);
  EXPECT_LT(sec, 60.0);
}

TEST_F(CliTest, RandomWeightsScoreNearZero) {
  const auto ds = data::ingest(root_ / "data");
  std::vector<std::string> ids;
  for (const auto& v : ds.videos) ids.push_back(v.id);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    detector::Model<float> m(detector::ModelConfig::for_variant(detector::Variant::kBaseline, 8, 2, 64), rng);
    EXPECT_LT(detector::evaluate_videos(m, ds, ids).metrics.map50, 0.1) << "seed " << seed;
  }
}

TEST(FrameRange, InclusiveParsing) {
  EXPECT_EQ(parse_frame_range("21-23").first, 21);
  EXPECT_EQ(parse_frame_range("21-23").last, 23);
  EXPECT_EQ(parse_frame_range("7").last, 7);
  EXPECT_THROW(parse_frame_range("5-3"), UsageError);
  EXPECT_THROW(parse_frame_range("a-b"), UsageError);
  EXPECT_THROW(parse_frame_range("-3"), UsageError);
}

TEST(AnalysisJson, SilentModelHasNoTopConfidence) {
  AnalysisReport rep;
  rep.video_id = "v";
  rep.variant = "baseline";
  rep.records.push_back({4, true, {}, std::nullopt});
  rep.records.push_back({5, false, {{1, "red", 0.875, 1.5, 2, 30.25, 40}}, 0.875});
  const auto text = report_to_json(rep);
  EXPECT_EQ(report_from_json(text), rep);
  EXPECT_NE(text.find("\"top_confidence\": null"), std::string::npos);
  EXPECT_EQ(confidence_csv(rep), "frame_index,occluded,top_confidence,detections\n4,1,,0\n5,0,0.875000,1\n");
  EXPECT_THROW(report_from_json("{\"video_id\": 3}"), DataError);
}

}  // namespace
}  // namespace tempodet::cli
