#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gwc/aggregation.hpp"
#include "gwc/verify.hpp"

using namespace gwc;
using TD = Tensor<double>;

namespace {

TD random_volume(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0, 1);
  TD t(std::move(shape));
  for (auto& v : t.data()) v = nd(rng);
  return t;
}

void set_all(ParameterRegistry<double>& reg, const std::string& name, double value) {
  auto t = reg.find(name);
  ASSERT_TRUE(t.has_value()) << name;
  for (auto& v : t->data()) v = value;
}

}  // namespace

TEST(PreHourglass, DeskAndFullScaleShapes) {
  ParameterRegistry<float> reg;
  Rng rng(1);
  PreHourglass<float> desk(reg, 16, 8, rng);
  EXPECT_EQ(desk.forward(Tensor<float>(Shape{1, 16, 8, 4, 8}, 0.1f), false).shape(), (Shape{1, 8, 8, 4, 8}));
  ParameterRegistry<float> full_reg;
  PreHourglass<float> full(full_reg, 64, 32, rng);
  EXPECT_EQ(full.forward(Tensor<float>(Shape{1, 64, 4, 4, 4}, 0.1f), false).shape(), (Shape{1, 32, 4, 4, 4}));
  EXPECT_THROW(desk.forward(Tensor<float>(Shape{1, 15, 8, 4, 8}), false), ShapeError);
}

TEST(PreHourglass, ZeroVolumeGivesZero) {
  ParameterRegistry<double> reg;
  Rng rng(2);
  PreHourglass<double> pre(reg, 4, 4, rng);
  const auto out = pre.forward(TD(Shape{1, 4, 4, 4, 4}), false);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Hourglass, PreservesShapeWithNonnegativeOutput) {
  ParameterRegistry<double> reg;
  Rng rng(3);
  Hourglass<double> hg(reg, "hg", 8, rng);
  ShapeTrace trace;
  const TD out = hg.forward(random_volume({2, 8, 8, 16, 32}, 4), false, &trace);
  EXPECT_EQ(out.shape(), (Shape{2, 8, 8, 16, 32}));
  for (double v : out.data()) EXPECT_GE(v, 0.0);
  EXPECT_EQ(*trace.find("hg.conv1b"), (Shape{2, 16, 4, 8, 16}));
  EXPECT_EQ(*trace.find("hg.conv2b"), (Shape{2, 32, 2, 4, 8}));
  EXPECT_EQ(*trace.find("hg.plus1"), (Shape{2, 16, 4, 8, 16}));
}

TEST(Hourglass, ShortcutsArePointwise) {
  ParameterRegistry<float> reg;
  Rng rng(5);
  Hourglass<float> hg(reg, "hg", 32, rng);
  const auto s1 = reg.find("hg.shortcut1.weight");
  const auto c2a = reg.find("hg.conv2a.weight");  // 3x3x3 conv, 64 -> 128
  ASSERT_TRUE(s1 && c2a);
  EXPECT_EQ(s1->shape(), (Shape{64, 64, 1, 1, 1}));
  // A 3x3x3 conv with the same channels has 27 times the kernel weights.
  EXPECT_EQ(27 * static_cast<std::int64_t>(s1->numel()), 64 * 64 * 27);
  EXPECT_EQ(reg.find("hg.shortcut0.weight")->shape(), (Shape{32, 32, 1, 1, 1}));
}

TEST(Hourglass, IndivisibleExtentsRejected) {
  ParameterRegistry<float> reg;
  Rng rng(6);
  Hourglass<float> hg(reg, "hg", 4, rng);
  EXPECT_THROW(hg.forward(Tensor<float>(Shape{1, 4, 6, 8, 8}), false), Error);
}

TEST(Aggregation, OutputCountsPerMode) {
  ParameterRegistry<double> reg;
  Rng rng(7);
  NetworkConfig cfg = NetworkConfig::desk_scale();
  cfg.base_3d_channels = 4;
  Aggregation<double> agg(reg, cfg, rng);
  CostVolume<double> vol{random_volume({1, cfg.volume_channels(), 8, 4, 8}, 8), VolumeKind::Combined};
  const auto all = agg.aggregate(vol, HeadMode::AllOutputs, false);
  const auto fin = agg.aggregate(vol, HeadMode::FinalOnly, false);
  ASSERT_EQ(all.volumes.size(), 4u);
  ASSERT_EQ(fin.volumes.size(), 1u);
  for (const auto& v : all.volumes) EXPECT_EQ(v.shape(), (Shape{1, 4, 8, 4, 8}));
  for (std::size_t i = 0; i < fin.final_volume().numel(); ++i) {
    EXPECT_EQ(fin.final_volume().data()[i], all.final_volume().data()[i]);
  }
}

TEST(Aggregation, PadsAndCropsIndivisibleVolumes) {
  ParameterRegistry<double> reg;
  Rng rng(9);
  NetworkConfig cfg = NetworkConfig::desk_scale();
  cfg.base_3d_channels = 2;
  Aggregation<double> agg(reg, cfg, rng);
  CostVolume<double> vol{random_volume({1, cfg.volume_channels(), 6, 3, 5}, 10), VolumeKind::Combined};
  for (const auto& v : agg.aggregate(vol, HeadMode::AllOutputs, false).volumes) {
    EXPECT_EQ(v.shape(), (Shape{1, 2, 6, 3, 5}));
  }
}

TEST(Aggregation, IdentityHourglassesComposeToIdentity) {
  // Zero the deconv0 path and make shortcut0 an exact identity in eval mode:
  // each hourglass then computes relu(input).
  ParameterRegistry<double> reg;
  Rng rng(11);
  NetworkConfig cfg = NetworkConfig::desk_scale();
  cfg.base_3d_channels = 4;
  Aggregation<double> agg(reg, cfg, rng);
  for (int i = 1; i <= 3; ++i) {
    const std::string p = "hourglass" + std::to_string(i);
    set_all(reg, p + ".deconv0.bn.weight", 0.0);
    set_all(reg, p + ".deconv0.bn.bias", 0.0);
    auto w = *reg.find(p + ".shortcut0.weight");
    for (auto& v : w.data()) v = 0;
    for (int c = 0; c < 4; ++c) w.data()[static_cast<std::size_t>(c * 4 + c)] = 1;
    set_all(reg, p + ".shortcut0.bn.weight", std::sqrt(1 + kBatchNormEps));
  }
  CostVolume<double> vol{random_volume({1, cfg.volume_channels(), 4, 4, 8}, 12), VolumeKind::Combined};
  const auto out = agg.aggregate(vol, HeadMode::AllOutputs, false);
  for (std::size_t i = 0; i < out.volumes[0].numel(); ++i) {
    const double v0 = std::max(0.0, out.volumes[0].data()[i]);
    for (int k = 1; k <= 3; ++k) EXPECT_NEAR(out.volumes[static_cast<std::size_t>(k)].data()[i], v0, 1e-12);
  }
}

TEST(Aggregation, VerifySuitesPass) {
  const auto shapes = verify_shape_conformance();
  EXPECT_TRUE(shapes.passed) << shapes.detail;
  const auto aux = verify_aux_head_removal(3);
  EXPECT_TRUE(aux.passed) << aux.detail;
}
