#include "gwc/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "gwc/cost_volume.hpp"
#include "gwc/loss_metrics.hpp"
#include "gwc/model.hpp"

namespace gwc {

namespace {

using Clock = std::chrono::steady_clock;

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : t.data()) v = nd(rng);
  return t;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.ptr()[i] - b.ptr()[i]));
  return m;
}

std::int64_t pick(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

SuiteResult finish(SuiteResult r, Clock::time_point t0) {
  r.passed = r.measured <= r.tolerance;
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

struct FeaturePair {
  Tensor<double> left, right;
  std::int64_t d_levels;
};

// Random feature pairs; widths sometimes fall below the disparity range so
// out-of-bounds cells are exercised.
FeaturePair random_pair(std::mt19937_64& rng, std::int64_t nc, std::int64_t d_levels) {
  const std::int64_t n = pick(rng, 1, 2), h = pick(rng, 2, 5), w = pick(rng, 1, d_levels + 4);
  return {random_tensor({n, nc, h, w}, rng), random_tensor({n, nc, h, w}, rng), d_levels};
}

}  // namespace

Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                            Conv2dOptions opt) {
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t O = w.dim(0), K = w.dim(2);
  const std::int64_t Ho = (H + 2 * opt.padding - opt.dilation * (K - 1) - 1) / opt.stride + 1;
  const std::int64_t Wo = (W + 2 * opt.padding - opt.dilation * (K - 1) - 1) / opt.stride + 1;
  Tensor<double> y(Shape{N, O, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j) {
          double acc = bias ? bias->ptr()[o] : 0.0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t a = 0; a < K; ++a)
              for (std::int64_t b = 0; b < K; ++b) {
                const std::int64_t yi = i * opt.stride - opt.padding + a * opt.dilation;
                const std::int64_t xj = j * opt.stride - opt.padding + b * opt.dilation;
                if (yi < 0 || yi >= H || xj < 0 || xj >= W) continue;
                acc += x.ptr()[((n * C + c) * H + yi) * W + xj] * w.ptr()[((o * C + c) * K + a) * K + b];
              }
          y.ptr()[((n * O + o) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

Tensor<double> naive_conv3d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                            Conv3dOptions opt) {
  const std::int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::int64_t O = w.dim(0), K = w.dim(2);
  auto ext = [&](std::int64_t in) { return (in + 2 * opt.padding - K) / opt.stride + 1; };
  const std::int64_t Do = ext(D), Ho = ext(H), Wo = ext(W);
  Tensor<double> y(Shape{N, O, Do, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t p = 0; p < Do; ++p)
        for (std::int64_t i = 0; i < Ho; ++i)
          for (std::int64_t j = 0; j < Wo; ++j) {
            double acc = bias ? bias->ptr()[o] : 0.0;
            for (std::int64_t c = 0; c < C; ++c)
              for (std::int64_t a = 0; a < K; ++a)
                for (std::int64_t b = 0; b < K; ++b)
                  for (std::int64_t e = 0; e < K; ++e) {
                    const std::int64_t zd = p * opt.stride - opt.padding + a;
                    const std::int64_t zh = i * opt.stride - opt.padding + b;
                    const std::int64_t zw = j * opt.stride - opt.padding + e;
                    if (zd < 0 || zd >= D || zh < 0 || zh >= H || zw < 0 || zw >= W) continue;
                    acc += x.ptr()[(((n * C + c) * D + zd) * H + zh) * W + zw] *
                           w.ptr()[(((o * C + c) * K + a) * K + b) * K + e];
                  }
            y.ptr()[(((n * O + o) * Do + p) * Ho + i) * Wo + j] = acc;
          }
  return y;
}

Tensor<double> naive_conv_transpose3d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                                      ConvTranspose3dOptions opt) {
  const std::int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::int64_t O = w.dim(1), K = w.dim(2);
  auto ext = [&](std::int64_t in) { return (in - 1) * opt.stride - 2 * opt.padding + K + opt.output_padding; };
  const std::int64_t Do = ext(D), Ho = ext(H), Wo = ext(W);
  Tensor<double> y(Shape{N, O, Do, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o) {
      const double b0 = bias ? bias->ptr()[o] : 0.0;
      for (std::int64_t q = 0; q < Do * Ho * Wo; ++q) y.ptr()[(n * O + o) * Do * Ho * Wo + q] = b0;
    }
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t p = 0; p < D; ++p)
        for (std::int64_t i = 0; i < H; ++i)
          for (std::int64_t j = 0; j < W; ++j) {
            const double v = x.ptr()[(((n * C + c) * D + p) * H + i) * W + j];
            for (std::int64_t o = 0; o < O; ++o)
              for (std::int64_t a = 0; a < K; ++a)
                for (std::int64_t b = 0; b < K; ++b)
                  for (std::int64_t e = 0; e < K; ++e) {
                    const std::int64_t zd = p * opt.stride - opt.padding + a;
                    const std::int64_t zh = i * opt.stride - opt.padding + b;
                    const std::int64_t zw = j * opt.stride - opt.padding + e;
                    if (zd < 0 || zd >= Do || zh < 0 || zh >= Ho || zw < 0 || zw >= Wo) continue;
                    y.ptr()[(((n * O + o) * Do + zd) * Ho + zh) * Wo + zw] +=
                        v * w.ptr()[(((c * O + o) * K + a) * K + b) * K + e];
                  }
          }
  return y;
}

double gradcheck_tensors(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& targets,
                         double h, std::size_t coords_per_input, std::uint64_t seed) {
  for (auto t : targets) t.zero_grad();
  f().backward();
  std::mt19937_64 rng(seed);
  double worst = 0;
  for (auto target : targets) {
    const std::vector<double> grad(target.grad().begin(), target.grad().end());
    std::vector<std::size_t> coords;
    if (coords_per_input == 0 || coords_per_input >= target.numel()) {
      for (std::size_t i = 0; i < target.numel(); ++i) coords.push_back(i);
    } else {
      std::uniform_int_distribution<std::size_t> u(0, target.numel() - 1);
      for (std::size_t k = 0; k < coords_per_input; ++k) coords.push_back(u(rng));
    }
    NoGradGuard no_grad;
    double diff2 = 0, a2 = 0, n2 = 0;
    for (auto i : coords) {
      const double orig = target.ptr()[i];
      target.ptr()[i] = orig + h;
      const double fp = f().item();
      target.ptr()[i] = orig - h;
      const double fm = f().item();
      target.ptr()[i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double analytic = grad.empty() ? 0.0 : grad[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

double gradcheck(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double h,
                 std::size_t coords_per_input, std::uint64_t seed) {
  std::vector<Tensor<double>> leaves;
  for (const auto& in : inputs) {
    auto t = in.detach();
    t.set_requires_grad(true);
    leaves.push_back(t);
  }
  return gradcheck_tensors([&] { return f(leaves); }, leaves, h, coords_per_input, seed);
}

Tensor<double> random_projection(const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5ULL);
  return sum(mul(y, random_tensor(y.shape(), rng)));
}

SuiteResult verify_degeneracy(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r{"degeneracy: gwc(Ng=1) == full correlation", false, 0, 1e-6, "", 0};
  std::mt19937_64 rng(seed);
  const std::int64_t ncs[] = {4, 8, 32}, dqs[] = {1, 4, 8};
  int count = 0;
  for (int k = 0; k < 20; ++k) {
    auto p = random_pair(rng, ncs[k % 3], dqs[(k / 3) % 3]);
    const auto g = build_gwc_volume(p.left, p.right, p.d_levels, 1);
    const auto c = build_full_correlation_volume(p.left, p.right, p.d_levels);
    r.measured = std::max(r.measured, max_abs_diff(g.tensor, c.tensor));
    ++count;
  }
  r.detail = std::to_string(count) + " instances, Nc in {4,8,32}, Dq in {1,4,8}";
  return finish(r, t0);
}

SuiteResult verify_group_mean(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r{"group mean: mean_g C_gwc == C_corr", false, 0, 1e-6, "", 0};
  std::mt19937_64 rng(seed);
  const std::int64_t ncs[] = {4, 8, 32}, dqs[] = {1, 4, 8};
  for (int k = 0; k < 20; ++k) {
    const std::int64_t nc = ncs[k % 3];
    auto p = random_pair(rng, nc, dqs[(k / 3) % 3]);
    const std::int64_t groups[] = {1, 2, 4, nc};
    const std::int64_t ng = groups[k % 4];
    const auto g = build_gwc_volume(p.left, p.right, p.d_levels, ng).tensor;
    const auto c = build_full_correlation_volume(p.left, p.right, p.d_levels).tensor;
    const std::int64_t N = g.dim(0), cell = g.dim(2) * g.dim(3) * g.dim(4);
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t q = 0; q < cell; ++q) {
        double m = 0;
        for (std::int64_t gi = 0; gi < ng; ++gi) m += g.ptr()[(n * ng + gi) * cell + q];
        m /= static_cast<double>(ng);
        r.measured = std::max(r.measured, std::abs(m - c.ptr()[n * cell + q]));
      }
    }
  }
  r.detail = "20 instances, Ng in {1,2,4,Nc}";
  return finish(r, t0);
}

SuiteResult verify_volume_oracle(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r{"oracle: volume builders == nested-loop oracle", false, 0, 1e-6, "", 0};
  std::mt19937_64 rng(seed);
  const std::int64_t ncs[] = {4, 8, 32}, dqs[] = {1, 4, 8};
  std::int64_t oob = 0;
  for (int k = 0; k < 20; ++k) {
    const std::int64_t nc = ncs[k % 3];
    auto p = random_pair(rng, nc, dqs[(k / 3) % 3]);
    const std::int64_t ng = k % 2 ? 2 : 4;
    const auto corr = build_full_correlation_volume(p.left, p.right, p.d_levels);
    const auto cat = build_concat_volume(p.left, p.right, p.d_levels);
    const auto gwc = build_gwc_volume(p.left, p.right, p.d_levels, ng);
    const auto both = build_combined_volume(gwc, cat);
    r.measured = std::max(
        {r.measured, max_abs_diff(corr.tensor, oracle_volume(VolumeKind::Correlation, p.left, p.right, p.d_levels).tensor),
         max_abs_diff(cat.tensor, oracle_volume(VolumeKind::Concat, p.left, p.right, p.d_levels).tensor),
         max_abs_diff(gwc.tensor,
                      oracle_volume(VolumeKind::GroupwiseCorrelation, p.left, p.right, p.d_levels, ng).tensor),
         max_abs_diff(both.tensor, oracle_volume(VolumeKind::Combined, p.left, p.right, p.d_levels, ng).tensor)});
    // Out-of-bounds cells must hold exact zeros in every correlation channel.
    const auto& g = gwc.tensor;
    const std::int64_t W = g.dim(4), H = g.dim(3), D = g.dim(2);
    for (std::int64_t n = 0; n < g.dim(0); ++n)
      for (std::int64_t c = 0; c < g.dim(1); ++c)
        for (std::int64_t d = 0; d < D; ++d)
          for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < std::min(d, W); ++x) {
              r.measured = std::max(r.measured, std::abs(g.ptr()[(((n * g.dim(1) + c) * D + d) * H + y) * W + x]));
              ++oob;
            }
  }
  r.detail = "20 instances x 4 builders, " + std::to_string(oob) + " out-of-bounds cells";
  return finish(r, t0);
}

SuiteResult verify_conv_oracle(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r{"oracle: conv2d/conv3d/conv_transpose3d == nested loops", false, 0, 1e-6, "", 0};
  std::mt19937_64 rng(seed);
  // Every (kernel, stride, padding, dilation) the network uses.
  const struct { int k; Conv2dOptions o; } c2[] = {
      {3, {2, 1, 1}}, {3, {1, 1, 1}}, {3, {1, 2, 2}}, {1, {1, 0, 1}}, {1, {2, 0, 1}}};
  const struct { int k; Conv3dOptions o; } c3[] = {{3, {1, 1}}, {3, {2, 1}}, {1, {1, 0}}};
  for (int s = 0; s < 4; ++s) {
    for (const auto& c : c2) {
      auto x = random_tensor({2, 3, pick(rng, 5, 9), pick(rng, 5, 9)}, rng);
      auto w = random_tensor({4, 3, c.k, c.k}, rng);
      auto b = random_tensor({4}, rng);
      r.measured = std::max(r.measured, max_abs_diff(conv2d(x, w, std::optional(b), c.o), naive_conv2d(x, w, &b, c.o)));
      r.measured = std::max(r.measured, max_abs_diff(conv2d(x, w, std::optional<Tensor<double>>{}, c.o), naive_conv2d(x, w, nullptr, c.o)));
    }
    for (const auto& c : c3) {
      auto x = random_tensor({1, 2, 4, pick(rng, 4, 6), pick(rng, 4, 6)}, rng);
      auto w = random_tensor({3, 2, c.k, c.k, c.k}, rng);
      r.measured = std::max(r.measured, max_abs_diff(conv3d(x, w, std::optional<Tensor<double>>{}, c.o), naive_conv3d(x, w, nullptr, c.o)));
    }
    auto x = random_tensor({1, 3, 2, pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
    auto w = random_tensor({3, 2, 3, 3, 3}, rng);
    auto b = random_tensor({2}, rng);
    const auto yt = conv_transpose3d(x, w, std::optional(b), ConvTranspose3dOptions{});
    r.measured = std::max(r.measured, max_abs_diff(yt, naive_conv_transpose3d(x, w, &b, {})));
    // Adjoint identity: <convT(x), y> == <x, conv(y)> with the same weights.
    auto y = random_tensor(yt.shape(), rng);
    const auto yt0 = conv_transpose3d(x, w, std::optional<Tensor<double>>{}, ConvTranspose3dOptions{});
    const auto cy = conv3d(y, w, std::optional<Tensor<double>>{}, Conv3dOptions{2, 1});
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) lhs += yt0.ptr()[i] * y.ptr()[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.ptr()[i] * cy.ptr()[i];
    r.measured = std::max(r.measured, std::abs(lhs - rhs));
  }
  r.detail = "5 conv2d, 3 conv3d configurations and the transposed adjoint";
  return finish(r, t0);
}

std::vector<SuiteResult> verify_op_gradients(std::uint64_t seed, int seeds) {
  struct OpCase {
    const char* name;
    std::function<double(std::mt19937_64&, std::uint64_t)> run;
  };
  auto proj = [](Tensor<double> y, std::uint64_t s) { return random_projection(y, s); };
  const std::vector<OpCase> cases = {
      {"add", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(add(v[0], v[1]), s); },
                          {random_tensor({2, 5}, g), random_tensor({2, 5}, g)});
       }},
      {"mul", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(mul(v[0], v[1]), s); },
                          {random_tensor({2, 5}, g), random_tensor({2, 5}, g)});
       }},
      {"mul (shared input)", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(mul(v[0], v[0]), s); }, {random_tensor({10}, g)});
       }},
      {"multiply_scalar", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(multiply_scalar(v[0], 0.7), s); }, {random_tensor({10}, g)});
       }},
      {"relu", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(relu(v[0]), s); }, {random_tensor({10}, g)});
       }},
      {"sum", [&](auto& g, auto) {
         return gradcheck([&](const auto& v) { return sum(mul(v[0], v[0])); }, {random_tensor({10}, g)});
       }},
      {"mean", [&](auto& g, auto) {
         return gradcheck([&](const auto& v) { return mean(mul(v[0], v[0])); }, {random_tensor({10}, g)});
       }},
      {"reshape", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(reshape(v[0], {5, 2}), s); }, {random_tensor({2, 5}, g)});
       }},
      {"concat", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(concat<double>({v[0], v[1]}, 1), s); },
                          {random_tensor({2, 2, 3}, g), random_tensor({2, 1, 3}, g)});
       }},
      {"slice", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(slice(v[0], 1, 1, 2), s); }, {random_tensor({2, 4, 2}, g)});
       }},
      {"pad", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(pad(v[0], 1, 1, 2), s); }, {random_tensor({2, 3, 2}, g)});
       }},
      {"softmax", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(softmax(v[0], 1), s); }, {random_tensor({2, 5, 2}, g)});
       }},
      {"upsample_trilinear", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(upsample_trilinear(v[0], 2), s); },
                          {random_tensor({1, 2, 2, 2, 3}, g)});
       }},
      {"conv2d", [&](auto& g, auto s) {
         const Conv2dOptions opts[] = {{2, 1, 1}, {1, 2, 2}, {1, 0, 1}};
         const auto o = opts[s % 3];
         const int k = o.padding == 0 ? 1 : 3;
         return gradcheck([&](const auto& v) { return proj(conv2d(v[0], v[1], std::optional(v[2]), o), s); },
                          {random_tensor({2, 2, 5, 6}, g), random_tensor({3, 2, k, k}, g), random_tensor({3}, g)});
       }},
      {"conv3d", [&](auto& g, auto s) {
         const Conv3dOptions o = s % 2 ? Conv3dOptions{2, 1} : Conv3dOptions{1, 1};
         return gradcheck([&](const auto& v) { return proj(conv3d(v[0], v[1], std::optional(v[2]), o), s); },
                          {random_tensor({1, 2, 3, 4, 4}, g), random_tensor({2, 2, 3, 3, 3}, g), random_tensor({2}, g)});
       }},
      {"conv_transpose3d", [&](auto& g, auto s) {
         return gradcheck(
             [&](const auto& v) { return proj(conv_transpose3d(v[0], v[1], std::optional(v[2]), {}), s); },
             {random_tensor({1, 2, 2, 2, 1}, g), random_tensor({2, 2, 3, 3, 3}, g), random_tensor({2}, g)});
       }},
      {"batchnorm (train)", [&](auto& g, auto s) {
         auto rm = Tensor<double>::zeros({3});
         auto rv = Tensor<double>::full({3}, 1.0);
         return gradcheck([&](const auto& v) { return proj(batchnorm(v[0], v[1], v[2], rm, rv, true), s); },
                          {random_tensor({2, 3, 4}, g), random_tensor({3}, g), random_tensor({3}, g)});
       }},
      {"batchnorm (eval)", [&](auto& g, auto s) {
         auto rm = random_tensor({3}, g);
         auto rv = Tensor<double>::full({3}, 1.5);
         return gradcheck([&](const auto& v) { return proj(batchnorm(v[0], v[1], v[2], rm, rv, false), s); },
                          {random_tensor({2, 3, 4}, g), random_tensor({3}, g), random_tensor({3}, g)});
       }},
      {"full correlation volume", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(build_full_correlation_volume(v[0], v[1], 3).tensor, s); },
                          {random_tensor({1, 4, 2, 4}, g), random_tensor({1, 4, 2, 4}, g)});
       }},
      {"group-wise correlation volume", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(build_gwc_volume(v[0], v[1], 3, 2).tensor, s); },
                          {random_tensor({1, 4, 2, 4}, g), random_tensor({1, 4, 2, 4}, g)});
       }},
      {"concatenation volume", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(build_concat_volume(v[0], v[1], 3).tensor, s); },
                          {random_tensor({1, 2, 2, 4}, g), random_tensor({1, 2, 2, 4}, g)});
       }},
      {"combined volume", [&](auto& g, auto s) {
         return gradcheck(
             [&](const auto& v) {
               return proj(build_combined_volume(build_gwc_volume(v[0], v[1], 2, 2), build_concat_volume(v[0], v[1], 2))
                               .tensor,
                           s);
             },
             {random_tensor({1, 4, 2, 3}, g), random_tensor({1, 4, 2, 3}, g)});
       }},
      {"soft_argmin", [&](auto& g, auto s) {
         return gradcheck([&](const auto& v) { return proj(soft_argmin(ProbabilityVolume<double>{softmax(v[0], 1)}).values, s); },
                          {random_tensor({1, 5, 2, 2}, g)});
       }},
      {"smooth_l1_loss", [&](auto& g, auto) {
         DisparityMap<double> gt;
         gt.values = random_tensor({2, 5}, g, 2.0);
         gt.valid = {1, 1, 0, 1, 1, 1, 0, 1, 1, 1};
         return gradcheck([&](const auto& v) { return smooth_l1_loss(v[0], gt); }, {random_tensor({2, 5}, g, 2.0)});
       }},
      {"total_loss", [&](auto& g, auto) {
         DisparityMap<double> gt;
         gt.values = random_tensor({10}, g, 2.0);
         return gradcheck([&](const auto& v) { return total_loss<double>({v[0], v[1], v[2], v[3]}, gt, LossConfig{}); },
                          {random_tensor({10}, g, 2.0), random_tensor({10}, g, 2.0), random_tensor({10}, g, 2.0),
                           random_tensor({10}, g, 2.0)});
       }},
  };
  std::vector<SuiteResult> out;
  for (const auto& c : cases) {
    const auto t0 = Clock::now();
    SuiteResult r{std::string("gradient: ") + c.name, false, 0, 1e-4, std::to_string(seeds) + " seeds", 0};
    for (int s = 0; s < seeds; ++s) {
      std::mt19937_64 rng(seed * 1000 + static_cast<std::uint64_t>(s));
      r.measured = std::max(r.measured, c.run(rng, static_cast<std::uint64_t>(s)));
    }
    out.push_back(finish(r, t0));
  }
  return out;
}

SuiteResult verify_pipeline_gradient(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r{"gradient: end-to-end pipeline (32x64, D_max 16, base 4)", false, 0, 1e-3, "", 0};
  NetworkConfig cfg = NetworkConfig::desk_scale();
  cfg.d_max = 16;
  cfg.base_3d_channels = 4;
  cfg.stage_blocks = {1, 1, 1, 1};
  GwcNet<double> model(cfg, seed);
  std::mt19937_64 rng(seed);
  // Smaller inputs leave a couple of values per channel at the 1/16 level,
  // where batch norm is close to degenerate.
  const auto left = random_tensor({2, 3, 32, 64}, rng);
  const auto right = random_tensor({2, 3, 32, 64}, rng);
  DisparityMap<double> gt;
  gt.values = Tensor<double>(Shape{2, 32, 64});
  std::uniform_real_distribution<double> ud(0.0, 15.0);
  for (auto& v : gt.values.data()) v = ud(rng);

  Tensor<double> l = left, rt = right;
  l.set_requires_grad(true);
  rt.set_requires_grad(true);
  std::vector<Tensor<double>> targets;
  for (const auto& p : model.registry().parameters()) targets.push_back(p.tensor);
  const std::size_t n_params = targets.size();
  targets.push_back(l);
  targets.push_back(rt);
  auto f = [&] { return total_loss(model.forward(l, rt, ForwardMode::train()).disparities, gt, LossConfig{}); };
  // Larger steps straddle ReLU kinks somewhere in the network.
  r.measured = gradcheck_tensors(f, targets, 1e-7, 3, seed);
  r.detail = std::to_string(n_params) + " parameter tensors + both images, 3 random coordinates each";
  return finish(r, t0);
}

SuiteResult verify_shape_conformance() {
  const auto t0 = Clock::now();
  SuiteResult r{"shapes: full-scale structure table", false, 0, 0, "", 0};
  const NetworkConfig cfg = NetworkConfig::full_scale();
  const std::int64_t H = 32, W = 64, D = cfg.d_max;
  GwcNet<float> model(cfg, 0);
  Tensor<float> img(Shape{1, 3, H, W}, 0.1f);
  ShapeTrace trace;
  {
    NoGradGuard no_grad;
    model.forward(img, img, ForwardMode::eval(), &trace);
  }
  using S = Shape;
  std::vector<std::pair<std::string, Shape>> expect = {
      {"unary_l", S{1, 320, H / 4, W / 4}},
      {"unary_r", S{1, 320, H / 4, W / 4}},
      {"volume_g", S{1, 40, D / 4, H / 4, W / 4}},
      {"volume_c", S{1, 24, D / 4, H / 4, W / 4}},
      {"volume", S{1, 64, D / 4, H / 4, W / 4}},
      {"prehourglass.conv1", S{1, 32, D / 4, H / 4, W / 4}},
      {"prehourglass.conv2", S{1, 32, D / 4, H / 4, W / 4}},
      {"prehourglass.output", S{1, 32, D / 4, H / 4, W / 4}},
  };
  for (int k = 1; k <= 3; ++k) {
    const std::string p = "hourglass" + std::to_string(k) + ".";
    const S q4{1, 32, D / 4, H / 4, W / 4}, q8{1, 64, D / 8, H / 8, W / 8}, q16{1, 128, D / 16, H / 16, W / 16};
    for (const char* n : {"input", "deconv0", "shortcut0", "output"}) expect.push_back({p + n, q4});
    for (const char* n : {"conv1a", "conv1b", "deconv1", "shortcut1", "plus1"}) expect.push_back({p + n, q8});
    for (const char* n : {"conv2a", "conv2b"}) expect.push_back({p + n, q16});
  }
  for (int k = 0; k <= 3; ++k) {
    const std::string p = "output" + std::to_string(k) + ".";
    expect.push_back({p + "conv1", S{1, 32, D / 4, H / 4, W / 4}});
    expect.push_back({p + "conv2", S{1, 1, D / 4, H / 4, W / 4}});
    expect.push_back({p + "score", S{1, 1, D, H, W}});
    expect.push_back({p + "prob", S{1, D, H, W}});
    expect.push_back({p + "disparity", S{1, H, W}});
  }
  int mismatches = 0;
  std::string first;
  for (const auto& [name, shape] : expect) {
    const Shape* got = trace.find(name);
    if (!got || *got != shape) {
      ++mismatches;
      if (first.empty()) first = name + " got " + (got ? shape_str(*got) : std::string("nothing")) + " want " + shape_str(shape);
    }
  }
  r.measured = mismatches;
  r.detail = std::to_string(expect.size()) + " rows at H=" + std::to_string(H) + " W=" + std::to_string(W) +
             " D=" + std::to_string(D) + (first.empty() ? "" : "; first mismatch: " + first);
  return finish(r, t0);
}

SuiteResult verify_aux_head_removal(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult r{"aux heads: infer == eval final disparity, aux unused", false, 0, 0, "", 0};
  GwcNet<float> model(NetworkConfig::desk_scale(), seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  auto image = [&] {
    Tensor<float> t(Shape{1, 3, 32, 64});
    for (auto& v : t.data()) v = nd(rng);
    return t;
  };
  {
    // A few training-mode passes move the running statistics off their init.
    NoGradGuard no_grad;
    for (int i = 0; i < 3; ++i) model.forward(image(), image(), ForwardMode::train());
  }
  const auto l = image(), rt = image();
  Tensor<float> eval_final, infer_final;
  {
    NoGradGuard no_grad;
    auto e = model.forward(l, rt, ForwardMode::eval());
    auto i = model.forward(l, rt, ForwardMode::infer());
    if (e.disparities.size() != 4 || i.disparities.size() != 1) {
      r.measured = 1;
      r.detail = "unexpected head counts";
      return finish(r, t0);
    }
    eval_final = e.final_disparity();
    infer_final = i.final_disparity();
  }
  double diff = 0;
  for (std::size_t k = 0; k < eval_final.numel(); ++k) {
    diff = std::max(diff, static_cast<double>(std::abs(eval_final.ptr()[k] - infer_final.ptr()[k])));
  }

  // Parameters reached by the inference graph.
  model.registry().zero_grad();
  sum(model.forward(l, rt, ForwardMode::infer()).final_disparity()).backward();
  std::int64_t aux_params = 0, aux_touched = 0;
  for (const auto& p : model.registry().parameters()) {
    const bool aux = p.name.rfind("output0.", 0) == 0 || p.name.rfind("output1.", 0) == 0 ||
                     p.name.rfind("output2.", 0) == 0;
    if (!aux) continue;
    aux_params += static_cast<std::int64_t>(p.tensor.numel());
    if (p.tensor.has_grad()) aux_touched += static_cast<std::int64_t>(p.tensor.numel());
  }
  model.registry().zero_grad();

  // Poisoned auxiliary weights must not reach the inference output.
  for (const auto& p : model.registry().parameters()) {
    if (p.name.rfind("output3.", 0) == 0 || p.name.rfind("output", 0) != 0) continue;
    Tensor<float> t = p.tensor;
    for (auto& v : t.data()) v = std::numeric_limits<float>::quiet_NaN();
  }
  double poison_diff = 0;
  {
    NoGradGuard no_grad;
    auto i = model.forward(l, rt, ForwardMode::infer()).final_disparity();
    for (std::size_t k = 0; k < i.numel(); ++k) {
      const double d = std::abs(static_cast<double>(i.ptr()[k]) - infer_final.ptr()[k]);
      poison_diff = std::max(poison_diff, std::isnan(d) ? std::numeric_limits<double>::infinity() : d);
    }
  }
  r.measured = diff + poison_diff + static_cast<double>(aux_touched);
  r.detail = "max |eval - infer| = " + std::to_string(diff) + ", aux parameters " + std::to_string(aux_params) +
             " of which reached by inference " + std::to_string(aux_touched) +
             ", output change with NaN aux weights " + std::to_string(poison_diff);
  return finish(r, t0);
}

std::vector<SuiteResult> run_verify_suites(std::uint64_t seed, const std::function<void(const SuiteResult&)>& on_result) {
  std::vector<SuiteResult> out;
  auto push = [&](SuiteResult r) {
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  };
  push(verify_degeneracy(seed));
  push(verify_group_mean(seed));
  push(verify_volume_oracle(seed));
  push(verify_conv_oracle(seed));
  for (auto& r : verify_op_gradients(seed)) push(std::move(r));
  push(verify_pipeline_gradient(seed));
  push(verify_shape_conformance());
  push(verify_aux_head_removal(seed));
  return out;
}

}  // namespace gwc
