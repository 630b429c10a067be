#include <gtest/gtest.h>

#include <random>

#include "gwc/features.hpp"

using namespace gwc;

namespace {

Tensor<double> random_image(std::int64_t n, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<double> t(Shape{n, 3, h, w});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST(FeatureWidths, FullScaleSplit) {
  const auto w = feature_widths(NetworkConfig::full_scale());
  EXPECT_EQ(w.stem, 32);
  EXPECT_EQ(w.conv2, 64);
  EXPECT_EQ(w.conv3, 128);
  EXPECT_EQ(w.conv4, 128);
  EXPECT_EQ(w.conv2 + w.conv3 + w.conv4, 320);
}

TEST(FeatureWidths, SumToUnaryChannelsAtAnyScale) {
  for (std::int64_t nc : {8, 16, 32, 40, 64, 100, 320}) {
    NetworkConfig cfg = NetworkConfig::desk_scale();
    cfg.unary_channels = nc;
    cfg.gwc_groups = 1;
    const auto w = feature_widths(cfg);
    EXPECT_EQ(w.conv2 + w.conv3 + w.conv4, nc) << nc;
    EXPECT_GE(w.conv2, 1);
  }
}

TEST(FeatureExtractor, DeskShapeIsQuarterResolution) {
  ParameterRegistry<float> reg;
  Rng rng(1);
  FeatureExtractor<float> fx(reg, NetworkConfig::desk_scale(), rng);
  Tensor<float> img(Shape{1, 3, 64, 128}, 0.25f);
  const auto f = fx.extract(img, Side::Left, false);
  EXPECT_EQ(f.tensor.shape(), (Shape{1, 32, 16, 32}));
  EXPECT_EQ(f.nc, 32);
}

TEST(FeatureExtractor, FullScaleHas320Channels) {
  ParameterRegistry<float> reg;
  Rng rng(1);
  FeatureExtractor<float> fx(reg, NetworkConfig::full_scale(), rng);
  Tensor<float> img(Shape{1, 3, 16, 16}, 0.5f);
  const auto f = fx.extract(img, Side::Left, false);
  EXPECT_EQ(f.tensor.shape(), (Shape{1, 320, 4, 4}));
  EXPECT_EQ(fx.compress_for_concat(f, false).tensor.shape(), (Shape{1, 12, 4, 4}));
}

TEST(FeatureExtractor, IndivisibleExtentsAskForPadding) {
  ParameterRegistry<float> reg;
  Rng rng(1);
  FeatureExtractor<float> fx(reg, NetworkConfig::desk_scale(), rng);
  try {
    fx.extract(Tensor<float>(Shape{1, 3, 30, 64}), Side::Left, false);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos) << e.what();
  }
}

TEST(FeatureExtractor, SharedWeightsGiveIdenticalViews) {
  ParameterRegistry<double> reg;
  Rng rng(2);
  FeatureExtractor<double> fx(reg, NetworkConfig::desk_scale(), rng);
  const auto a = random_image(1, 16, 32, 5);
  const auto b = random_image(1, 16, 32, 6);
  const auto la = fx.extract(a, Side::Left, false), ra = fx.extract(a, Side::Right, false);
  ASSERT_EQ(la.tensor.numel(), ra.tensor.numel());
  for (std::size_t i = 0; i < la.tensor.numel(); ++i) EXPECT_EQ(la.tensor.data()[i], ra.tensor.data()[i]);
  // Swapping the inputs swaps the outputs.
  const auto lb = fx.extract(b, Side::Left, false), rb = fx.extract(b, Side::Right, false);
  for (std::size_t i = 0; i < lb.tensor.numel(); ++i) EXPECT_EQ(lb.tensor.data()[i], rb.tensor.data()[i]);
}

TEST(FeatureExtractor, NoCrossBatchLeakageInEvalMode) {
  ParameterRegistry<double> reg;
  Rng rng(3);
  FeatureExtractor<double> fx(reg, NetworkConfig::desk_scale(), rng);
  auto batch = random_image(2, 16, 16, 9);
  const auto before = fx.extract(batch, Side::Left, false).tensor.clone();
  const std::size_t half = batch.numel() / 2;
  for (std::size_t i = half; i < batch.numel(); ++i) batch.data()[i] += 0.5;
  const auto after = fx.extract(batch, Side::Left, false).tensor;
  const std::size_t fhalf = after.numel() / 2;
  for (std::size_t i = 0; i < fhalf; ++i) EXPECT_EQ(after.data()[i], before.data()[i]);
  bool changed = false;
  for (std::size_t i = fhalf; i < after.numel(); ++i) changed |= after.data()[i] != before.data()[i];
  EXPECT_TRUE(changed);
}

TEST(FeatureExtractor, CompressKeepsSpatialExtents) {
  ParameterRegistry<float> reg;
  Rng rng(4);
  FeatureExtractor<float> fx(reg, NetworkConfig::desk_scale(), rng);
  FeatureMap<float> f{Tensor<float>(Shape{1, 32, 16, 32}, 0.1f), 32, Side::Left};
  EXPECT_EQ(fx.compress_for_concat(f, false).tensor.shape(), (Shape{1, 4, 16, 32}));
}
