#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "tempodet/detector/checkpoint.hpp"
#include "tempodet/errors.hpp"

namespace tempodet::detector {
namespace {

namespace fs = std::filesystem;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("tempodet_ckpt_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

ModelConfig cfg(Variant v) {
  auto c = ModelConfig::for_variant(v, 4, 3, 64, 2);
  c.cbam_reduction = 4;
  return c;
}

void expect_same_weights(const Model<float>& a, const Model<float>& b) {
  const auto pa = a.params();
  const auto pb = b.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    ASSERT_EQ(pa[i]->value.shape(), pb[i]->value.shape());
    EXPECT_EQ(pa[i]->value.storage(), pb[i]->value.storage()) << pa[i]->name;
  }
}

TEST_F(CheckpointTest, RoundTripKeepsConfigWeightsAndMetadata) {
  std::mt19937_64 rng(1);
  Model<float> m(cfg(Variant::kTemporalCbam), rng);
  save_checkpoint(dir_ / "a.ckpt", m, "epoch: 3\n");
  const auto ck = read_checkpoint(dir_ / "a.ckpt");
  EXPECT_EQ(ck.config, m.config());
  EXPECT_EQ(ck.metadata, "epoch: 3\n");
  const auto back = model_from_checkpoint(ck);
  expect_same_weights(m, back);
  EXPECT_FALSE(fs::exists(dir_ / "a.ckpt.tmp"));
}

TEST_F(CheckpointTest, LoadThenSaveIsByteIdentical) {
  std::mt19937_64 rng(2);
  Model<float> m(cfg(Variant::kTemporal), rng);
  save_checkpoint(dir_ / "a.ckpt", m, "x: 1\n");
  save_checkpoint(dir_ / "b.ckpt", load_model(dir_ / "a.ckpt"), "x: 1\n");
  std::ifstream a(dir_ / "a.ckpt", std::ios::binary), b(dir_ / "b.ckpt", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST_F(CheckpointTest, WarmStartCopiesSharedTensors) {
  std::mt19937_64 rng(3);
  Model<float> base(cfg(Variant::kBaseline), rng);
  save_checkpoint(dir_ / "base.ckpt", base);
  Model<float> temporal(cfg(Variant::kTemporal), rng);
  const int n = warm_start(temporal, read_checkpoint(dir_ / "base.ckpt"));
  EXPECT_EQ(n, static_cast<int>(base.params().size()));
  EXPECT_LT(n, static_cast<int>(temporal.params().size()));
  for (const auto* p : base.params())
    for (const auto* q : temporal.params())
      if (q->name == p->name) EXPECT_EQ(q->value.storage(), p->value.storage()) << p->name;
}

TEST_F(CheckpointTest, WarmStartSkipsShapeMismatch) {
  std::mt19937_64 rng(4);
  Model<float> a(cfg(Variant::kBaseline), rng);
  save_checkpoint(dir_ / "a.ckpt", a);
  auto other = cfg(Variant::kBaseline);
  other.num_classes = 5;
  Model<float> b(other, rng);
  const int n = warm_start(b, read_checkpoint(dir_ / "a.ckpt"));
  EXPECT_GT(n, 0);
  EXPECT_LT(n, static_cast<int>(b.params().size()));
}

TEST_F(CheckpointTest, BadFilesAreDataErrors) {
  EXPECT_THROW(read_checkpoint(dir_ / "missing.ckpt"), DataError);
  std::ofstream(dir_ / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(read_checkpoint(dir_ / "junk.ckpt"), DataError);

  std::mt19937_64 rng(5);
  Model<float> m(cfg(Variant::kBaseline), rng);
  save_checkpoint(dir_ / "full.ckpt", m);
  const auto size = fs::file_size(dir_ / "full.ckpt");
  fs::copy_file(dir_ / "full.ckpt", dir_ / "cut.ckpt");
  fs::resize_file(dir_ / "cut.ckpt", size - 7);
  EXPECT_THROW(read_checkpoint(dir_ / "cut.ckpt"), DataError);
}

TEST_F(CheckpointTest, StrictLoadRejectsMissingTensor) {
  std::mt19937_64 rng(6);
  Model<float> m(cfg(Variant::kTemporal), rng);
  save_checkpoint(dir_ / "a.ckpt", m);
  auto ck = read_checkpoint(dir_ / "a.ckpt");
  ck.tensors.pop_back();
  EXPECT_THROW(model_from_checkpoint(ck), DataError);
}

}  // namespace
}  // namespace tempodet::detector
