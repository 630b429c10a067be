#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "gwc/checkpoint.hpp"
#include "gwc/ops.hpp"
#include "gwc/verify.hpp"

using namespace gwc;
using TD = Tensor<double>;

namespace {

TD random_tensor(Shape shape, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> nd(0.0, 1.0);
  TD t(std::move(shape));
  for (auto& v : t.data()) v = nd(rng);
  t.set_requires_grad(grad);
  return t;
}

double max_abs_diff(const TD& a, const TD& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Tensor, ShapeAndFill) {
  Tensor<float> t(Shape{2, 3, 4}, 1.5f);
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.rank(), 3);
  EXPECT_EQ(t.dim(2), 4);
  EXPECT_FLOAT_EQ(t.data()[23], 1.5f);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, CopiesAliasAndCloneDoesNot) {
  TD a(Shape{2}, 1.0);
  TD alias = a;
  TD copy = a.clone();
  a.data()[0] = 7;
  EXPECT_EQ(alias.data()[0], 7);
  EXPECT_EQ(copy.data()[0], 1);
}

TEST(Autograd, LinearCaseGradientIsInput) {
  TD w(Shape{3}, std::vector<double>{0.5, -1, 2});
  w.set_requires_grad(true);
  TD x(Shape{3}, std::vector<double>{4, 5, 6});
  sum(mul(w, x)).backward();
  ASSERT_TRUE(w.has_grad());
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], x.data()[i]);
}

TEST(Autograd, NonScalarBackwardThrows) {
  TD w(Shape{3}, 1.0);
  w.set_requires_grad(true);
  EXPECT_THROW(relu(w).backward(), ShapeError);
}

TEST(Autograd, UnreachableParameterUntouched) {
  TD w(Shape{2}, 1.0), p(Shape{2}, 3.0);
  w.set_requires_grad(true);
  p.set_requires_grad(true);
  sum(w).backward();
  EXPECT_FALSE(p.has_grad());
}

TEST(Autograd, TwoUsesAccumulate) {
  std::mt19937_64 rng(3);
  TD x = random_tensor({4}, rng, true);
  TD a = random_tensor({4}, rng), b = random_tensor({4}, rng);
  sum(mul(x, a)).backward();
  std::vector<double> g1(x.grad().begin(), x.grad().end());
  x.zero_grad();
  sum(mul(x, b)).backward();
  std::vector<double> g2(x.grad().begin(), x.grad().end());
  x.zero_grad();
  sum(add(mul(x, a), mul(x, b))).backward();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(x.grad()[i], g1[i] + g2[i], 1e-12);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  TD w(Shape{2}, 1.0);
  w.set_requires_grad(true);
  TD y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = sum(w);
  }
  EXPECT_TRUE(grad_enabled());
  y.backward();
  EXPECT_FALSE(w.has_grad());
}

TEST(Ops, SoftmaxClosedForms) {
  TD a(Shape{2}, std::vector<double>{0, 0});
  TD pa = softmax(a, 0);
  EXPECT_DOUBLE_EQ(pa.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(pa.data()[1], 0.5);
  TD b(Shape{2}, std::vector<double>{std::log(1.0), std::log(3.0)});
  TD pb = softmax(b, 0);
  EXPECT_NEAR(pb.data()[0], 0.25, 1e-15);
  EXPECT_NEAR(pb.data()[1], 0.75, 1e-15);
  EXPECT_THROW(softmax(b, 1), ShapeError);
}

TEST(Ops, SoftmaxSumsToOneAlongAxis) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    TD x = random_tensor({2, 5, 3}, rng);
    for (auto& v : x.data()) v *= 10;
    TD p = softmax(x, 1);
    for (int n = 0; n < 2; ++n) {
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 5; ++k) {
          const double v = p.data()[flat_index(p.shape(), {n, k, j})];
          EXPECT_GE(v, 0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

TEST(Ops, UpsamplePreservesConstant) {
  TD x(Shape{1, 2, 2, 3, 2}, 4.25);
  TD y = upsample_trilinear(x, 4);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 8, 12, 8}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 4.25);
}

TEST(Ops, SliceConcatPadShapes) {
  std::mt19937_64 rng(1);
  TD x = random_tensor({2, 5, 3}, rng);
  TD parts = concat<double>({slice(x, 1, 0, 2), slice(x, 1, 2, 3)}, 1);
  EXPECT_EQ(max_abs_diff(parts, x), 0.0);
  TD p = pad(x, 2, 1, 2);
  EXPECT_EQ(p.shape(), (Shape{2, 5, 6}));
  EXPECT_EQ(p.data()[flat_index(p.shape(), {1, 4, 0})], 0.0);
  EXPECT_EQ(p.data()[flat_index(p.shape(), {1, 4, 1})], x.data()[flat_index(x.shape(), {1, 4, 0})]);
  EXPECT_THROW(slice(x, 1, 4, 2), ShapeError);
  EXPECT_THROW(reshape(x, {7}), ShapeError);
}

TEST(Conv, AllOnesSums) {
  TD x2(Shape{1, 1, 3, 3}, 1.0), w2(Shape{1, 1, 3, 3}, 1.0);
  TD y2 = conv2d(x2, w2, std::optional<TD>{});
  ASSERT_EQ(y2.numel(), 1u);
  EXPECT_DOUBLE_EQ(y2.item(), 9.0);
  TD x3(Shape{1, 1, 3, 3, 3}, 1.0), w3(Shape{1, 1, 3, 3, 3}, 1.0);
  TD y3 = conv3d(x3, w3, std::optional<TD>{});
  ASSERT_EQ(y3.numel(), 1u);
  EXPECT_DOUBLE_EQ(y3.item(), 27.0);
}

TEST(Conv, IdentityKernel) {
  std::mt19937_64 rng(2);
  TD x = random_tensor({2, 1, 5, 4}, rng);
  TD w(Shape{1, 1, 1, 1}, 1.0);
  EXPECT_EQ(max_abs_diff(conv2d(x, w, std::optional<TD>{TD(Shape{1}, 0.0)}), x), 0.0);
}

TEST(Conv, ZeroWeightGivesBias) {
  TD x(Shape{1, 2, 4, 4, 4}, 1.0), w(Shape{3, 2, 3, 3, 3}, 0.0);
  TD b(Shape{3}, std::vector<double>{1, -2, 0.5});
  TD y = conv3d(x, w, std::optional<TD>{b}, {1, 1});
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 64; ++i) EXPECT_EQ(y.data()[c * 64 + i], b.data()[c]);
  }
}

TEST(Conv, Conv2dMatchesNestedLoopOracle) {
  // The stride/pad/dilation combinations the extractor uses, plus an
  // unpadded stride-2 case.
  const std::vector<std::pair<Conv2dOptions, int>> cases = {
      {{2, 1, 1}, 3}, {{1, 1, 1}, 3}, {{1, 2, 2}, 3}, {{1, 0, 1}, 1}, {{2, 0, 1}, 1}};
  std::mt19937_64 rng(7);
  for (const auto& [opt, k] : cases) {
    TD x = random_tensor({2, 3, 8, 8}, rng);
    TD w = random_tensor({4, 3, k, k}, rng);
    TD b = random_tensor({4}, rng);
    EXPECT_LT(max_abs_diff(conv2d(x, w, std::optional<TD>{b}, opt), naive_conv2d(x, w, &b, opt)), 1e-6);
  }
}

TEST(Conv, Conv3dStride2MatchesOracle) {
  std::mt19937_64 rng(8);
  TD x = random_tensor({1, 1, 4, 4, 4}, rng);
  TD w = random_tensor({1, 1, 3, 3, 3}, rng);
  TD y = conv3d(x, w, std::optional<TD>{}, {2, 1});
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2, 2}));
  EXPECT_LT(max_abs_diff(y, naive_conv3d(x, w, nullptr, {2, 1})), 1e-6);
}

TEST(Conv, ChannelMismatchNamesAxis) {
  TD x(Shape{1, 3, 4, 4}), w(Shape{2, 2, 3, 3});
  try {
    conv2d(x, w, std::optional<TD>{});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
}

TEST(ConvTranspose, DoublesExtents) {
  TD x(Shape{1, 1, 2, 2, 2}, 1.0), w(Shape{1, 1, 3, 3, 3}, 1.0);
  EXPECT_EQ(conv_transpose3d(x, w, std::optional<TD>{}).shape(), (Shape{1, 1, 4, 4, 4}));
  EXPECT_THROW(conv_transpose3d(x, w, std::optional<TD>{}, {2, 0, 0}), ConfigError);
}

TEST(ConvTranspose, ZeroInputGivesBias) {
  TD x(Shape{1, 2, 2, 2, 2}, 0.0), w(Shape{2, 3, 3, 3, 3}, 1.0);
  TD b(Shape{3}, std::vector<double>{0.25, -1, 2});
  TD y = conv_transpose3d(x, w, std::optional<TD>{b});
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 64; ++i) EXPECT_EQ(y.data()[c * 64 + i], b.data()[c]);
  }
}

TEST(ConvTranspose, IsAdjointOfStridedConv) {
  // <conv3d(u), v> == <u, conv_transpose3d(v)> with the same weight tensor.
  std::mt19937_64 rng(9);
  TD w = random_tensor({3, 2, 3, 3, 3}, rng);  // conv: 2 -> 3; transpose: 3 -> 2
  TD u = random_tensor({1, 2, 4, 6, 8}, rng);
  TD v = random_tensor({1, 3, 2, 3, 4}, rng);
  TD cu = conv3d(u, w, std::optional<TD>{}, {2, 1});
  TD tv = conv_transpose3d(v, w, std::optional<TD>{});
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cu.numel(); ++i) lhs += cu.data()[i] * v.data()[i];
  for (std::size_t i = 0; i < u.numel(); ++i) rhs += u.data()[i] * tv.data()[i];
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
  EXPECT_LT(max_abs_diff(tv, naive_conv_transpose3d(v, w, nullptr, {})), 1e-6);
}

TEST(BatchNorm, TrainModeNormalizes) {
  std::mt19937_64 rng(10);
  TD x = random_tensor({4, 2, 5, 5}, rng);
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = 3 * x.data()[i] + 7;
  TD gamma(Shape{2}, 1.0), beta(Shape{2}, 0.0), rm(Shape{2}, 0.0), rv(Shape{2}, 1.0);
  TD y = batchnorm(x, gamma, beta, rm, rv, true);
  for (int c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (int n = 0; n < 4; ++n) {
      for (int i = 0; i < 25; ++i) m += y.data()[(n * 2 + c) * 25 + i];
    }
    m /= 100;
    for (int n = 0; n < 4; ++n) {
      for (int i = 0; i < 25; ++i) v += std::pow(y.data()[(n * 2 + c) * 25 + i] - m, 2);
    }
    v /= 100;
    EXPECT_NEAR(m, 0, 1e-5);
    EXPECT_NEAR(v, 1, 1e-4);  // eps = 1e-5 against variance ~9
    EXPECT_GT(rm.data()[c], 0.5);  // running mean moved 10% toward ~7
  }
}

TEST(BatchNorm, AffineOnNormalizedInput) {
  TD x(Shape{4, 1}, std::vector<double>{-1, -1, 1, 1});  // mean 0, biased var 1
  TD gamma(Shape{1}, 2.0), beta(Shape{1}, 3.0), rm(Shape{1}, 0.0), rv(Shape{1}, 1.0);
  TD y = batchnorm(x, gamma, beta, rm, rv, true);
  double m = 0, v = 0;
  for (double e : y.data()) m += e / 4;
  for (double e : y.data()) v += (e - m) * (e - m) / 4;
  EXPECT_NEAR(m, 3, 1e-9);
  EXPECT_NEAR(std::sqrt(v), 2, 1e-4);
}

TEST(BatchNorm, EvalModeIsAffineOnly) {
  TD x(Shape{2, 1, 2}, std::vector<double>{1, 2, 3, 4});
  TD gamma(Shape{1}, 2.0), beta(Shape{1}, 0.5), rm(Shape{1}, 0.0), rv(Shape{1}, 1.0);
  TD y = batchnorm(x, gamma, beta, rm, rv, false);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.data()[i], 2 * x.data()[i] / std::sqrt(1 + kBatchNormEps) + 0.5, 1e-12);
  }
  EXPECT_EQ(rm.data()[0], 0.0);
  EXPECT_THROW(batchnorm(x, TD(Shape{2}, 1.0), beta, rm, rv, false), ShapeError);
}

TEST(Gradients, EveryOpPassesFiniteDifferences) {
  for (const auto& r : verify_op_gradients(11, 20)) {
    EXPECT_TRUE(r.passed) << r.name << " rel err " << r.measured << " " << r.detail;
    EXPECT_LT(r.measured, 1e-4) << r.name;
  }
}

TEST(Gradients, LossIndependentOfParameterGivesZero) {
  TD p(Shape{3}, 1.0), q(Shape{3}, 2.0);
  p.set_requires_grad(true);
  q.set_requires_grad(true);
  sum(add(multiply_scalar(q, 2.0), multiply_scalar(p, 0.0))).backward();
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Archive, BitExactRoundTrip) {
  ArchiveTensor a{"w", {2, 3}, DType::F32, {1.5f, -0.0f, 3e-38f, 1e30f, -7.25f, 0.1f}, {}};
  ArchiveTensor b{"meta.x", {}, DType::F64, {}, {0.1}};
  const std::string bytes = encode_archive({a, b});
  EXPECT_EQ(bytes.substr(0, 4), "GWCT");
  const auto back = decode_archive(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "w");
  EXPECT_EQ(back[0].shape, a.shape);
  EXPECT_EQ(std::memcmp(back[0].f32.data(), a.f32.data(), a.f32.size() * 4), 0);
  EXPECT_EQ(back[1].f64[0], 0.1);
  EXPECT_EQ(encode_archive(back), bytes);
}

TEST(Archive, CorruptionReportsByteOffset) {
  ArchiveTensor a{"w", {2}, DType::F32, {1, 2}, {}};
  std::string bytes = encode_archive({a});
  try {
    decode_archive(bytes.substr(0, bytes.size() - 3));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
  EXPECT_THROW(decode_archive("GWCX" + bytes.substr(4)), ParseError);
  EXPECT_THROW(decode_archive(bytes + "x"), ParseError);
}
