#include <algorithm>
#include <cmath>

#include "gwc/ops.hpp"
#include "op_util.hpp"

namespace gwc {

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T>& running_mean, Tensor<T>& running_var, bool training) {
  if (input.rank() < 2) throw ShapeError("batchnorm: input must have a channel axis");
  const std::int64_t N = input.dim(0), C = input.dim(1);
  const std::int64_t S = static_cast<std::int64_t>(input.numel()) / std::max<std::int64_t>(N * C, 1);
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (p->rank() != 1 || p->dim(0) != C) {
      throw ShapeError("batchnorm: channel mismatch, input has " + std::to_string(C) +
                       " channels but a parameter has shape " + shape_str(p->shape()));
    }
  }
  const std::int64_t M = N * S;
  const T* x = input.ptr();
  auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
  if (training) {
    if (M < 1) throw ShapeError("batchnorm: empty batch");
    for (std::int64_t c = 0; c < C; ++c) {
      double s = 0;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = x + (n * C + c) * S;
        for (std::int64_t i = 0; i < S; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(M);
      double ss = 0;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = x + (n * C + c) * S;
        for (std::int64_t i = 0; i < S; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(M);
      (*mean)[c] = static_cast<T>(mu);
      (*invstd)[c] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
      const double unbiased = M > 1 ? ss / static_cast<double>(M - 1) : var;
      T& rm = running_mean.ptr()[c];
      T& rv = running_var.ptr()[c];
      rm = static_cast<T>((1 - kBatchNormMomentum) * rm + kBatchNormMomentum * mu);
      rv = static_cast<T>((1 - kBatchNormMomentum) * rv + kBatchNormMomentum * unbiased);
    }
  } else {
    for (std::int64_t c = 0; c < C; ++c) {
      (*mean)[c] = running_mean.ptr()[c];
      (*invstd)[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.ptr()[c]) + kBatchNormEps));
    }
  }

  std::vector<T> out(input.numel());
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t c = 0; c < C; ++c) {
      const T scale = gamma.ptr()[c] * (*invstd)[c];
      const T shift = beta.ptr()[c] - (*mean)[c] * scale;
      const T* p = x + (n * C + c) * S;
      T* o = out.data() + (n * C + c) * S;
      for (std::int64_t i = 0; i < S; ++i) o[i] = p[i] * scale + shift;
    }
  }

  auto ix = input.impl(), ig = gamma.impl(), ibt = beta.impl();
  return make_result<T>(input.shape(), std::move(out), {ix, ig, ibt},
                        [ix, ig, ibt, mean, invstd, N, C, S, M, training](TensorImpl<T>& self) {
    auto* gx = grad_target(ix.get());
    auto* gg = grad_target(ig.get());
    auto* gb = grad_target(ibt.get());
    const T* x = ix->data.data();
    const T* gy = self.grad.data();
    for (std::int64_t c = 0; c < C; ++c) {
      const T mu = (*mean)[c], is = (*invstd)[c];
      double sum_gy = 0, sum_gy_xhat = 0;
      for (std::int64_t n = 0; n < N; ++n) {
        const std::int64_t base = (n * C + c) * S;
        for (std::int64_t i = 0; i < S; ++i) {
          sum_gy += gy[base + i];
          sum_gy_xhat += gy[base + i] * (x[base + i] - mu) * is;
        }
      }
      if (gg) (*gg)[c] += static_cast<T>(sum_gy_xhat);
      if (gb) (*gb)[c] += static_cast<T>(sum_gy);
      if (!gx) continue;
      const T gamma_c = ig->data[c];
      if (training) {
        const T k = gamma_c * is / static_cast<T>(M);
        const T mean_gy = static_cast<T>(sum_gy), mean_gyx = static_cast<T>(sum_gy_xhat);
        for (std::int64_t n = 0; n < N; ++n) {
          const std::int64_t base = (n * C + c) * S;
          for (std::int64_t i = 0; i < S; ++i) {
            const T xhat = (x[base + i] - mu) * is;
            (*gx)[base + i] += k * (static_cast<T>(M) * gy[base + i] - mean_gy - xhat * mean_gyx);
          }
        }
      } else {
        const T k = gamma_c * is;
        for (std::int64_t n = 0; n < N; ++n) {
          const std::int64_t base = (n * C + c) * S;
          for (std::int64_t i = 0; i < S; ++i) (*gx)[base + i] += k * gy[base + i];
        }
      }
    }
  }, "batchnorm");
}

template Tensor<float> batchnorm(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                 Tensor<float>&, Tensor<float>&, bool);
template Tensor<double> batchnorm(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                  Tensor<double>&, Tensor<double>&, bool);

}  // namespace gwc
