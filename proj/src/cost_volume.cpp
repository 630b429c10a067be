#include "gwc/cost_volume.hpp"

#include "gwc/ops.hpp"
#include "op_util.hpp"

namespace gwc {

const char* to_string(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::Correlation: return "corr";
    case VolumeKind::Concat: return "concat";
    case VolumeKind::GroupwiseCorrelation: return "gwc";
    case VolumeKind::Combined: return "combined";
  }
  return "?";
}

namespace {

template <typename T>
void check_features(const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels, const char* op) {
  if (left.rank() != 4) throw ShapeError(std::string(op) + ": features must be [N,C,H,W], got " + shape_str(left.shape()));
  if (left.shape() != right.shape()) {
    throw ShapeError(std::string(op) + ": left/right feature shapes differ: " + shape_str(left.shape()) + " vs " +
                     shape_str(right.shape()));
  }
  if (d_levels < 1) throw ShapeError(std::string(op) + ": d_levels must be >= 1, got " + std::to_string(d_levels));
}

}  // namespace

template <typename T>
CostVolume<T> build_full_correlation_volume(const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels) {
  check_features(left, right, d_levels, "build_full_correlation_volume");
  const std::int64_t N = left.dim(0), C = left.dim(1), H = left.dim(2), W = left.dim(3), D = d_levels;
  const std::int64_t HW = H * W;
  const T inv = T(1) / static_cast<T>(C);
  std::vector<T> out(static_cast<std::size_t>(N * D * HW), T(0));
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t d = 0; d < D; ++d) {
      T* o = out.data() + (n * D + d) * HW;
      for (std::int64_t c = 0; c < C; ++c) {
        const T* l = left.ptr() + (n * C + c) * HW;
        const T* r = right.ptr() + (n * C + c) * HW;
        for (std::int64_t y = 0; y < H; ++y) {
          for (std::int64_t x = d; x < W; ++x) o[y * W + x] += l[y * W + x] * r[y * W + x - d];
        }
      }
      for (std::int64_t i = 0; i < HW; ++i) o[i] *= inv;
    }
  }
  auto il = left.impl(), ir = right.impl();
  auto t = make_result<T>(Shape{N, 1, D, H, W}, std::move(out), {il, ir},
                          [il, ir, N, C, H, W, D, HW, inv](TensorImpl<T>& self) {
    auto* gl = grad_target(il.get());
    auto* gr = grad_target(ir.get());
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t d = 0; d < D; ++d) {
        const T* go = self.grad.data() + (n * D + d) * HW;
        for (std::int64_t c = 0; c < C; ++c) {
          const std::int64_t base = (n * C + c) * HW;
          for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t x = d; x < W; ++x) {
              const T g = go[y * W + x] * inv;
              if (gl) (*gl)[base + y * W + x] += g * ir->data[base + y * W + x - d];
              if (gr) (*gr)[base + y * W + x - d] += g * il->data[base + y * W + x];
            }
          }
        }
      }
    }
  }, "full_correlation_volume");
  return {t, VolumeKind::Correlation};
}

template <typename T>
CostVolume<T> build_gwc_volume(const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels,
                               std::int64_t groups) {
  check_features(left, right, d_levels, "build_gwc_volume");
  const std::int64_t N = left.dim(0), C = left.dim(1), H = left.dim(2), W = left.dim(3), D = d_levels;
  if (groups < 1 || C % groups != 0) {
    throw ShapeError("build_gwc_volume: Nc=" + std::to_string(C) + " is not divisible into Ng=" +
                     std::to_string(groups) + " groups");
  }
  const std::int64_t G = groups, cpg = C / G, HW = H * W;
  const T inv = T(1) / static_cast<T>(cpg);
  std::vector<T> out(static_cast<std::size_t>(N * G * D * HW), T(0));
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t g = 0; g < G; ++g) {
      for (std::int64_t d = 0; d < D; ++d) {
        T* o = out.data() + ((n * G + g) * D + d) * HW;
        for (std::int64_t c = g * cpg; c < (g + 1) * cpg; ++c) {
          const T* l = left.ptr() + (n * C + c) * HW;
          const T* r = right.ptr() + (n * C + c) * HW;
          for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t x = d; x < W; ++x) o[y * W + x] += l[y * W + x] * r[y * W + x - d];
          }
        }
        for (std::int64_t i = 0; i < HW; ++i) o[i] *= inv;
      }
    }
  }
  auto il = left.impl(), ir = right.impl();
  auto t = make_result<T>(Shape{N, G, D, H, W}, std::move(out), {il, ir},
                          [il, ir, N, C, H, W, D, G, cpg, HW, inv](TensorImpl<T>& self) {
    auto* gl = grad_target(il.get());
    auto* gr = grad_target(ir.get());
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t g = 0; g < G; ++g) {
        for (std::int64_t d = 0; d < D; ++d) {
          const T* go = self.grad.data() + ((n * G + g) * D + d) * HW;
          for (std::int64_t c = g * cpg; c < (g + 1) * cpg; ++c) {
            const std::int64_t base = (n * C + c) * HW;
            const T* l = il->data.data() + base;
            const T* r = ir->data.data() + base;
            for (std::int64_t y = 0; y < H; ++y) {
              for (std::int64_t x = d; x < W; ++x) {
                const T gv = go[y * W + x] * inv;
                if (gl) (*gl)[base + y * W + x] += gv * r[y * W + x - d];
                if (gr) (*gr)[base + y * W + x - d] += gv * l[y * W + x];
              }
            }
          }
        }
      }
    }
  }, "gwc_volume");
  return {t, VolumeKind::GroupwiseCorrelation};
}

template <typename T>
CostVolume<T> build_concat_volume(const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels) {
  check_features(left, right, d_levels, "build_concat_volume");
  const std::int64_t N = left.dim(0), C = left.dim(1), H = left.dim(2), W = left.dim(3), D = d_levels;
  const std::int64_t HW = H * W;
  std::vector<T> out(static_cast<std::size_t>(N * 2 * C * D * HW), T(0));
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t c = 0; c < C; ++c) {
      const T* l = left.ptr() + (n * C + c) * HW;
      const T* r = right.ptr() + (n * C + c) * HW;
      for (std::int64_t d = 0; d < D; ++d) {
        T* ol = out.data() + ((n * 2 * C + c) * D + d) * HW;
        T* orr = out.data() + ((n * 2 * C + C + c) * D + d) * HW;
        std::copy_n(l, HW, ol);
        for (std::int64_t y = 0; y < H; ++y) {
          for (std::int64_t x = d; x < W; ++x) orr[y * W + x] = r[y * W + x - d];
        }
      }
    }
  }
  auto il = left.impl(), ir = right.impl();
  auto t = make_result<T>(Shape{N, 2 * C, D, H, W}, std::move(out), {il, ir},
                          [il, ir, N, C, H, W, D, HW](TensorImpl<T>& self) {
    auto* gl = grad_target(il.get());
    auto* gr = grad_target(ir.get());
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t c = 0; c < C; ++c) {
        const std::int64_t base = (n * C + c) * HW;
        for (std::int64_t d = 0; d < D; ++d) {
          const T* gol = self.grad.data() + ((n * 2 * C + c) * D + d) * HW;
          const T* gor = self.grad.data() + ((n * 2 * C + C + c) * D + d) * HW;
          if (gl) {
            for (std::int64_t i = 0; i < HW; ++i) (*gl)[base + i] += gol[i];
          }
          if (gr) {
            for (std::int64_t y = 0; y < H; ++y) {
              for (std::int64_t x = d; x < W; ++x) (*gr)[base + y * W + x - d] += gor[y * W + x];
            }
          }
        }
      }
    }
  }, "concat_volume");
  return {t, VolumeKind::Concat};
}

template <typename T>
CostVolume<T> build_combined_volume(const CostVolume<T>& gwc, const CostVolume<T>& concat_volume) {
  const auto& a = gwc.tensor.shape();
  const auto& b = concat_volume.tensor.shape();
  if (a.size() != 5 || b.size() != 5 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3] || a[4] != b[4]) {
    throw ShapeError("build_combined_volume: non-channel extents differ: " + shape_str(a) + " vs " + shape_str(b));
  }
  return {concat<T>({gwc.tensor, concat_volume.tensor}, 1), VolumeKind::Combined};
}

template <typename T>
CostVolume<T> oracle_volume(VolumeKind kind, const Tensor<T>& left, const Tensor<T>& right, std::int64_t d_levels,
                            std::int64_t groups) {
  check_features(left, right, d_levels, "oracle_volume");
  const std::int64_t N = left.dim(0), C = left.dim(1), H = left.dim(2), W = left.dim(3);
  auto fl = [&](std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return left.ptr()[((n * C + c) * H + y) * W + x];
  };
  // Right feature at column x - d, zero vector outside the image.
  auto fr = [&](std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return x < 0 ? T(0) : right.ptr()[((n * C + c) * H + y) * W + x];
  };

  auto correlation = [&](std::int64_t g_count) {
    if (g_count < 1 || C % g_count != 0) {
      throw ShapeError("oracle_volume: Nc=" + std::to_string(C) + " is not divisible into Ng=" +
                       std::to_string(g_count) + " groups");
    }
    const std::int64_t cpg = C / g_count;
    Tensor<T> v({N, g_count, d_levels, H, W});
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t d = 0; d < d_levels; ++d)
        for (std::int64_t y = 0; y < H; ++y)
          for (std::int64_t x = 0; x < W; ++x)
            for (std::int64_t g = 0; g < g_count; ++g) {
              T acc = 0;
              for (std::int64_t k = 0; k < cpg; ++k) {
                const std::int64_t c = g * cpg + k;
                acc += fl(n, c, y, x) * fr(n, c, y, x - d);
              }
              v.ptr()[(((n * g_count + g) * d_levels + d) * H + y) * W + x] = acc / static_cast<T>(cpg);
            }
    return v;
  };

  auto concatenation = [&]() {
    Tensor<T> v({N, 2 * C, d_levels, H, W});
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t d = 0; d < d_levels; ++d)
        for (std::int64_t y = 0; y < H; ++y)
          for (std::int64_t x = 0; x < W; ++x)
            for (std::int64_t c = 0; c < 2 * C; ++c) {
              const T value = c < C ? fl(n, c, y, x) : fr(n, c - C, y, x - d);
              v.ptr()[(((n * 2 * C + c) * d_levels + d) * H + y) * W + x] = value;
            }
    return v;
  };

  switch (kind) {
    case VolumeKind::Correlation: return {correlation(1), kind};
    case VolumeKind::GroupwiseCorrelation: return {correlation(groups), kind};
    case VolumeKind::Concat: return {concatenation(), kind};
    case VolumeKind::Combined: {
      NoGradGuard no_grad;
      return {concat<T>({correlation(groups), concatenation()}, 1), kind};
    }
  }
  throw ShapeError("oracle_volume: unknown kind");
}

#define GWC_INSTANTIATE_VOLUMES(T)                                                                        \
  template CostVolume<T> build_full_correlation_volume(const Tensor<T>&, const Tensor<T>&, std::int64_t); \
  template CostVolume<T> build_concat_volume(const Tensor<T>&, const Tensor<T>&, std::int64_t);           \
  template CostVolume<T> build_gwc_volume(const Tensor<T>&, const Tensor<T>&, std::int64_t, std::int64_t); \
  template CostVolume<T> build_combined_volume(const CostVolume<T>&, const CostVolume<T>&);               \
  template CostVolume<T> oracle_volume(VolumeKind, const Tensor<T>&, const Tensor<T>&, std::int64_t,      \
                                       std::int64_t);

GWC_INSTANTIATE_VOLUMES(float)
GWC_INSTANTIATE_VOLUMES(double)

}  // namespace gwc
