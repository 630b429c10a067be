#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gwc/disparity_head.hpp"
#include "gwc/verify.hpp"

using namespace gwc;
using TD = Tensor<double>;

namespace {

ProbabilityVolume<double> pixel_distribution(const std::vector<double>& p) {
  return {TD(Shape{1, static_cast<std::int64_t>(p.size()), 1, 1}, p)};
}

}  // namespace

TEST(SoftArgmin, ClosedForms) {
  std::vector<double> one_hot(8, 0.0);
  one_hot[5] = 1;
  EXPECT_DOUBLE_EQ(soft_argmin(pixel_distribution(one_hot)).values.item(), 5.0);
  EXPECT_DOUBLE_EQ(soft_argmin(pixel_distribution({0.25, 0.25, 0.25, 0.25})).values.item(), 1.5);
  EXPECT_DOUBLE_EQ(soft_argmin(pixel_distribution({0.25, 0.75})).values.item(), 0.75);
}

TEST(SoftArgmin, RangeReversalAndShiftInvariance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0, 3);
    const std::int64_t D = 12;
    TD scores(Shape{1, D, 2, 3});
    for (auto& v : scores.data()) v = nd(rng);
    const TD p = softmax(scores, 1);
    const auto d = soft_argmin(ProbabilityVolume<double>{p}).values;

    TD rev(p.shape());
    TD shifted(p.shape());
    for (std::int64_t k = 0; k < D; ++k) {
      for (std::int64_t i = 0; i < 6; ++i) {
        rev.data()[static_cast<std::size_t>(k * 6 + i)] = p.data()[static_cast<std::size_t>((D - 1 - k) * 6 + i)];
        shifted.data()[static_cast<std::size_t>(k * 6 + i)] = scores.data()[static_cast<std::size_t>(k * 6 + i)] + 4.5;
      }
    }
    const auto dr = soft_argmin(ProbabilityVolume<double>{rev}).values;
    const auto ds = soft_argmin(ProbabilityVolume<double>{softmax(shifted, 1)}).values;
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_GE(d.data()[i], 0.0);
      EXPECT_LE(d.data()[i], D - 1.0);
      EXPECT_NEAR(dr.data()[i], (D - 1) - d.data()[i], 1e-12);
      EXPECT_NEAR(ds.data()[i], d.data()[i], 1e-12);
    }
  }
}

TEST(SoftArgmin, GradientThroughSoftmax) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0, 1);
  TD scores(Shape{1, 6, 2, 2});
  for (auto& v : scores.data()) v = nd(rng);
  const double err = gradcheck(
      [](const std::vector<TD>& in) {
        return random_projection(soft_argmin(ProbabilityVolume<double>{softmax(in[0], 1)}).values, 9);
      },
      {scores});
  EXPECT_LT(err, 1e-4);
}

TEST(OutputModule, UpsamplesToFullDisparityRange) {
  ParameterRegistry<float> reg;
  Rng rng(1);
  OutputModule<float> head(reg, "output3", 32, rng);
  ShapeTrace trace;
  const auto p = head.forward(Tensor<float>(Shape{1, 32, 48, 2, 2}, 0.1f), 192, false, &trace);
  EXPECT_EQ(p.tensor.shape(), (Shape{1, 192, 8, 8}));
  EXPECT_EQ(*trace.find("output3.score"), (Shape{1, 1, 192, 8, 8}));
  EXPECT_THROW(head.forward(Tensor<float>(Shape{1, 32, 48, 2, 2}), 190, false), ShapeError);
}

TEST(OutputModule, ProbabilitiesNormalized) {
  ParameterRegistry<double> reg;
  Rng rng(2);
  OutputModule<double> head(reg, "output0", 4, rng);
  std::mt19937_64 g(3);
  std::normal_distribution<double> nd(0, 1);
  TD v(Shape{2, 4, 4, 3, 3});
  for (auto& e : v.data()) e = nd(g);
  const auto p = head.forward(v, 16, false).tensor;
  const std::int64_t HW = 12 * 12;
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t i = 0; i < HW; ++i) {
      double s = 0;
      for (std::int64_t k = 0; k < 16; ++k) s += p.data()[static_cast<std::size_t>((n * 16 + k) * HW + i)];
      EXPECT_NEAR(s, 1.0, 1e-5);
    }
  }
}

TEST(OutputModule, ConstantScoresGiveUniform) {
  // With the final conv zeroed the score volume is constant.
  ParameterRegistry<double> reg;
  Rng rng(4);
  OutputModule<double> head(reg, "out", 2, rng);
  for (auto& e : reg.find("out.conv2.weight")->data()) e = 0;
  const auto p = head.forward(TD(Shape{1, 2, 2, 1, 1}, 1.0), 8, false).tensor;
  for (double e : p.data()) EXPECT_NEAR(e, 1.0 / 8, 1e-15);
}
