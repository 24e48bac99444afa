#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "tempodet/errors.hpp"
#include "tempodet/geometry.hpp"
#include "reference.hpp"

namespace tempodet::geometry {
namespace {

using reference::random_box;
using reference::reference_nms;

TEST(NormToPixel, FullFrameAndCentered) {
  const PixelBox full = norm_to_pixel({0.5, 0.5, 1.0, 1.0, 0}, 640, 640);
  EXPECT_EQ(full.x1, 0.0);
  EXPECT_EQ(full.y1, 0.0);
  EXPECT_EQ(full.x2, 640.0);
  EXPECT_EQ(full.y2, 640.0);
  const PixelBox mid = norm_to_pixel({0.5, 0.5, 0.5, 0.5, 2}, 640, 640);
  EXPECT_EQ(mid.x1, 160.0);
  EXPECT_EQ(mid.y1, 160.0);
  EXPECT_EQ(mid.x2, 480.0);
  EXPECT_EQ(mid.y2, 480.0);
  EXPECT_EQ(mid.class_id, 2);
}

TEST(NormToPixel, OutOfRangeIsClampedAndFlagged) {
  bool clamped = false;
  const PixelBox p = norm_to_pixel({0.05, 0.5, 0.2, 0.2, 0}, 100, 100, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(p.x1, 0.0);
  norm_to_pixel({0.5, 0.5, 0.2, 0.2, 0}, 100, 100, &clamped);
  EXPECT_FALSE(clamped);
}

TEST(NormToPixel, RoundTripIsIdentity) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 2000);
  for (int i = 0; i < 1000; ++i) {
    NormBox b;
    b.w = 0.01 + 0.5 * u(rng);
    b.h = 0.01 + 0.5 * u(rng);
    b.cx = b.w / 2 + (1 - b.w) * u(rng);
    b.cy = b.h / 2 + (1 - b.h) * u(rng);
    const int W = dim(rng), H = dim(rng);
    const NormBox back = pixel_to_norm(norm_to_pixel(b, W, H), W, H);
    EXPECT_NEAR(back.cx, b.cx, 1e-9);
    EXPECT_NEAR(back.cy, b.cy, 1e-9);
    EXPECT_NEAR(back.w, b.w, 1e-9);
    EXPECT_NEAR(back.h, b.h, 1e-9);
  }
}

TEST(Letterbox, SquareInputIsPureResize) {
  const numkit::Tensor<float> img({3, 64, 64}, 0.25f);
  const auto [out, t] = letterbox(img, 128);
  EXPECT_EQ(out.shape(), (numkit::Shape{3, 128, 128}));
  EXPECT_EQ(t.pad_x, 0.0);
  EXPECT_EQ(t.pad_y, 0.0);
  EXPECT_EQ(t.scale, 2.0);
  for (float v : out.values()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Letterbox, LandscapeInputPadsVertically) {
  const numkit::Tensor<float> img({3, 240, 320}, 1.0f);
  const auto [out, t] = letterbox(img, 640, 0.5f);
  EXPECT_EQ(t.scale, 2.0);
  EXPECT_EQ(t.pad_x, 0.0);
  EXPECT_EQ(t.pad_y, 80.0);
  // Padding rows keep the fill value, image rows keep the content.
  EXPECT_EQ(out[static_cast<std::size_t>(79 * 640)], 0.5f);
  EXPECT_EQ(out[static_cast<std::size_t>(80 * 640)], 1.0f);
  EXPECT_EQ(out[static_cast<std::size_t>(559 * 640)], 1.0f);
  EXPECT_EQ(out[static_cast<std::size_t>(560 * 640)], 0.5f);
  const auto [x0, y0] = t.apply(0.0, 0.0);
  EXPECT_EQ(x0, t.pad_x);
  EXPECT_EQ(y0, t.pad_y);
}

TEST(Letterbox, InverseRecoversPoints) {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> dim(7, 900);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    LetterboxTransform t;
    t.src_w = dim(rng);
    t.src_h = dim(rng);
    t.dst = 640;
    t.scale = 640.0 / std::max(t.src_w, t.src_h);
    t.pad_x = (640 - std::lround(t.src_w * t.scale)) / 2;
    t.pad_y = (640 - std::lround(t.src_h * t.scale)) / 2;
    const double x = u(rng) * t.src_w, y = u(rng) * t.src_h;
    const auto [fx, fy] = t.apply(x, y);
    const auto [bx, by] = t.invert(fx, fy);
    EXPECT_NEAR(bx, x, 1e-6);
    EXPECT_NEAR(by, y, 1e-6);
  }
}

TEST(Letterbox, LabelsFollowTheImage) {
  const numkit::Tensor<float> img({3, 240, 320}, 0.0f);
  const auto [out, t] = letterbox(img, 640);
  const NormBox full{0.5, 0.5, 1.0, 1.0, 1};
  const NormBox mapped = t.apply(full);
  EXPECT_NEAR(mapped.cx, 0.5, 1e-12);
  EXPECT_NEAR(mapped.cy, 0.5, 1e-12);
  EXPECT_NEAR(mapped.w, 1.0, 1e-12);
  EXPECT_NEAR(mapped.h, 480.0 / 640.0, 1e-12);
}

TEST(Iou, HandCases) {
  const PixelBox a{0, 0, 2, 2, 0, 1.0};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, PixelBox{5, 5, 6, 6, 0, 1.0}), 0.0);
  EXPECT_NEAR(iou(a, PixelBox{1, 0, 3, 2, 0, 1.0}), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(iou(PixelBox{1, 1, 1, 1, 0, 1.0}, PixelBox{1, 1, 1, 1, 0, 1.0}), 0.0);
}

TEST(Iou, SymmetricBoundedReflexive) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 2000; ++i) {
    const PixelBox a = random_box(rng), b = random_box(rng);
    const double ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
  }
}

TEST(Nms, IdenticalBoxesKeepHighestConfidence) {
  const std::vector<PixelBox> dets{{0, 0, 10, 10, 0, 0.8}, {0, 0, 10, 10, 0, 0.9}};
  const auto out = nms(dets);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].confidence, 0.9);
}

TEST(Nms, DistinctClassesNeverSuppressEachOther) {
  const std::vector<PixelBox> dets{{0, 0, 10, 10, 0, 0.8}, {0, 0, 10, 10, 1, 0.9}, {50, 50, 60, 60, 2, 0.7}};
  EXPECT_EQ(nms(dets).size(), 3u);
}

TEST(Nms, MatchesBruteForceReference) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PixelBox> dets;
    for (int i = 0; i < 50; ++i) dets.push_back(random_box(rng, 60.0, 2));
    const auto fast = nms(dets, {0.45, 0.25});
    const auto ref = reference_nms(dets, 0.45, 0.25);
    ASSERT_EQ(fast, ref);
    for (std::size_t i = 0; i < fast.size(); ++i) {
      EXPECT_GE(fast[i].confidence, 0.25);
      if (i) EXPECT_GE(fast[i - 1].confidence, fast[i].confidence);
      for (std::size_t j = i + 1; j < fast.size(); ++j)
        if (fast[i].class_id == fast[j].class_id) EXPECT_LE(iou(fast[i], fast[j]), 0.45);
    }
  }
}

TEST(Nms, RaisingConfidenceThresholdNeverAddsDetections) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PixelBox> dets;
    for (int i = 0; i < 40; ++i) dets.push_back(random_box(rng, 60.0, 2));
    std::size_t previous = dets.size() + 1;
    for (double thr = 0.0; thr <= 1.0; thr += 0.1) {
      const auto out = nms(dets, {0.45, thr});
      EXPECT_LE(out.size(), previous);
      previous = out.size();
      for (const auto& b : out) EXPECT_NE(std::find(dets.begin(), dets.end(), b), dets.end());
    }
  }
}

TEST(LabelLines, ParseFormatAndErrors) {
  const NormBox b = parse_label_line("3 0.5 0.25 0.1 0.2", "f.txt", 1);
  EXPECT_EQ(b, (NormBox{0.5, 0.25, 0.1, 0.2, 3}));
  EXPECT_EQ(parse_label_line(format_label_line(b), "x", 1), b);
  try {
    parse_label_line("1 0.5 0.5 0.2", "frame.txt", 7);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("frame.txt:7"), std::string::npos);
  }
  EXPECT_THROW(parse_label_line("1 0.5 0.5 0.2 abc", "f", 1), DataError);
  EXPECT_THROW(parse_label_line("1 0.5 0.5 0.0 0.1", "f", 1), DataError);
}

TEST(LabelLines, FileRoundTripAndEmptyFile) {
  const auto dir = std::filesystem::temp_directory_path() / "tempodet_geometry_test";
  std::filesystem::create_directories(dir);
  const std::vector<NormBox> boxes{{0.5, 0.5, 0.2, 0.3, 0}, {0.1, 0.9, 0.05, 0.05, 4}};
  write_label_file(dir / "a.txt", boxes);
  EXPECT_EQ(read_label_file(dir / "a.txt"), boxes);
  std::ofstream(dir / "empty.txt").close();
  EXPECT_TRUE(read_label_file(dir / "empty.txt").empty());
  EXPECT_THROW(read_label_file(dir / "missing.txt"), DataError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace tempodet::geometry
