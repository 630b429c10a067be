// Convolutions lowered to vol2col + GEMM. conv2d is the depth-1 case of the
// same 3D machinery.
#include <Eigen/Core>

#include <algorithm>
#include <array>

#include "gwc/ops.hpp"
#include "op_util.hpp"

namespace gwc {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Geometry of a convolution that maps `in` extents to `out` extents.
struct ConvGeom {
  std::array<std::int64_t, 3> in{}, out{};
  std::array<int, 3> k{}, stride{}, pad{}, dil{};

  std::int64_t in_size() const { return in[0] * in[1] * in[2]; }
  std::int64_t out_size() const { return out[0] * out[1] * out[2]; }
  std::int64_t taps() const { return static_cast<std::int64_t>(k[0]) * k[1] * k[2]; }
  bool is_pointwise() const {
    return taps() == 1 && stride == std::array<int, 3>{1, 1, 1} && pad == std::array<int, 3>{0, 0, 0};
  }
};

// cols[(c, kd, kh, kw), (od, oh, ow)] = x[c, id, ih, iw], zero outside.
template <typename T>
void vol2col(const T* x, std::int64_t channels, const ConvGeom& g, T* cols) {
  const std::int64_t P = g.out_size();
  const std::int64_t iH = g.in[1], iW = g.in[2];
  const std::int64_t oD = g.out[0], oH = g.out[1], oW = g.out[2];
  T* row = cols;
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* xc = x + c * g.in_size();
    for (int kd = 0; kd < g.k[0]; ++kd) {
      for (int kh = 0; kh < g.k[1]; ++kh) {
        for (int kw = 0; kw < g.k[2]; ++kw, row += P) {
          // Valid ow range: 0 <= ow*s - p + kw*dl < iW.
          const std::int64_t off_w = static_cast<std::int64_t>(kw) * g.dil[2] - g.pad[2];
          std::int64_t ow_lo = 0, ow_hi = oW;
          while (ow_lo < oW && ow_lo * g.stride[2] + off_w < 0) ++ow_lo;
          while (ow_hi > ow_lo && (ow_hi - 1) * g.stride[2] + off_w >= iW) --ow_hi;
          for (std::int64_t od = 0; od < oD; ++od) {
            const std::int64_t id = od * g.stride[0] - g.pad[0] + static_cast<std::int64_t>(kd) * g.dil[0];
            T* dst_d = row + od * oH * oW;
            if (id < 0 || id >= g.in[0]) {
              std::fill_n(dst_d, oH * oW, T(0));
              continue;
            }
            for (std::int64_t oh = 0; oh < oH; ++oh) {
              const std::int64_t ih = oh * g.stride[1] - g.pad[1] + static_cast<std::int64_t>(kh) * g.dil[1];
              T* dst = dst_d + oh * oW;
              if (ih < 0 || ih >= iH) {
                std::fill_n(dst, oW, T(0));
                continue;
              }
              const T* src = xc + (id * iH + ih) * iW + off_w;
              std::fill_n(dst, ow_lo, T(0));
              if (g.stride[2] == 1) {
                std::copy(src + ow_lo, src + ow_hi, dst + ow_lo);
              } else {
                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) dst[ow] = src[ow * g.stride[2]];
              }
              std::fill(dst + ow_hi, dst + oW, T(0));
            }
          }
        }
      }
    }
  }
}

// Adjoint of vol2col: x[c, id, ih, iw] += cols[...].
template <typename T>
void col2vol(const T* cols, std::int64_t channels, const ConvGeom& g, T* x) {
  const std::int64_t P = g.out_size();
  const std::int64_t iH = g.in[1], iW = g.in[2];
  const std::int64_t oD = g.out[0], oH = g.out[1], oW = g.out[2];
  const T* row = cols;
  for (std::int64_t c = 0; c < channels; ++c) {
    T* xc = x + c * g.in_size();
    for (int kd = 0; kd < g.k[0]; ++kd) {
      for (int kh = 0; kh < g.k[1]; ++kh) {
        for (int kw = 0; kw < g.k[2]; ++kw, row += P) {
          const std::int64_t off_w = static_cast<std::int64_t>(kw) * g.dil[2] - g.pad[2];
          std::int64_t ow_lo = 0, ow_hi = oW;
          while (ow_lo < oW && ow_lo * g.stride[2] + off_w < 0) ++ow_lo;
          while (ow_hi > ow_lo && (ow_hi - 1) * g.stride[2] + off_w >= iW) --ow_hi;
          for (std::int64_t od = 0; od < oD; ++od) {
            const std::int64_t id = od * g.stride[0] - g.pad[0] + static_cast<std::int64_t>(kd) * g.dil[0];
            if (id < 0 || id >= g.in[0]) continue;
            for (std::int64_t oh = 0; oh < oH; ++oh) {
              const std::int64_t ih = oh * g.stride[1] - g.pad[1] + static_cast<std::int64_t>(kh) * g.dil[1];
              if (ih < 0 || ih >= iH) continue;
              const T* src = row + (od * oH + oh) * oW;
              T* dst = xc + (id * iH + ih) * iW + off_w;
              for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow) dst[ow * g.stride[2]] += src[ow];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void check_bias(const std::optional<Tensor<T>>& bias, std::int64_t channels, const char* op) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != channels)) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_str(bias->shape()) + " does not match " +
                     std::to_string(channels) + " output channels");
  }
}

// Shared forward/backward for conv2d and conv3d. Input [N, Cin, in...],
// weight [Cout, Cin, k...].
template <typename T>
Tensor<T> conv_nd(const Tensor<T>& input, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                  const ConvGeom& g, Shape out_shape, const char* name) {
  const std::int64_t N = input.dim(0), Cin = input.dim(1), Cout = weight.dim(0);
  const std::int64_t K = Cin * g.taps(), P = g.out_size();
  std::vector<T> out(static_cast<std::size_t>(N * Cout * P));
  const bool pointwise = g.is_pointwise();
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(K * P));
  ConstMatMap<T> W(weight.ptr(), Cout, K);
  for (std::int64_t n = 0; n < N; ++n) {
    const T* xn = input.ptr() + n * Cin * g.in_size();
    const T* colp = xn;
    if (!pointwise) {
      vol2col(xn, Cin, g, cols.data());
      colp = cols.data();
    }
    MatMap<T> Y(out.data() + n * Cout * P, Cout, P);
    Y.noalias() = W * ConstMatMap<T>(colp, K, P);
    if (bias) {
      for (std::int64_t c = 0; c < Cout; ++c) Y.row(c).array() += bias->ptr()[c];
    }
  }

  auto ix = input.impl(), iw = weight.impl();
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs{ix, iw};
  std::shared_ptr<TensorImpl<T>> ib = bias ? bias->impl() : nullptr;
  if (ib) inputs.push_back(ib);
  return make_result<T>(std::move(out_shape), std::move(out), inputs,
                        [ix, iw, ib, g, N, Cin, Cout, K, P, pointwise](TensorImpl<T>& self) {
    auto* gx = grad_target(ix.get());
    auto* gw = grad_target(iw.get());
    auto* gb = ib ? grad_target(ib.get()) : nullptr;
    std::vector<T> cols(static_cast<std::size_t>(K * P));
    ConstMatMap<T> W(iw->data.data(), Cout, K);
    for (std::int64_t n = 0; n < N; ++n) {
      ConstMatMap<T> GY(self.grad.data() + n * Cout * P, Cout, P);
      const T* xn = ix->data.data() + n * Cin * g.in_size();
      if (gw) {
        const T* colp = xn;
        if (!pointwise) {
          vol2col(xn, Cin, g, cols.data());
          colp = cols.data();
        }
        MatMap<T>(gw->data(), Cout, K).noalias() += GY * ConstMatMap<T>(colp, K, P).transpose();
      }
      if (gb) {
        for (std::int64_t c = 0; c < Cout; ++c) (*gb)[c] += GY.row(c).sum();
      }
      if (gx) {
        T* gxn = gx->data() + n * Cin * g.in_size();
        if (pointwise) {
          MatMap<T>(gxn, Cin, P).noalias() += W.transpose() * GY;
        } else {
          MatMap<T>(cols.data(), K, P).noalias() = W.transpose() * GY;
          col2vol(cols.data(), Cin, g, gxn);
        }
      }
    }
  }, name);
}

}  // namespace

std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding, int dilation) {
  if (stride < 1 || dilation < 1 || kernel < 1 || padding < 0) {
    throw ConfigError("convolution needs kernel, stride, dilation >= 1 and padding >= 0");
  }
  const std::int64_t span = static_cast<std::int64_t>(dilation) * (kernel - 1) + 1;
  const std::int64_t padded = in + 2 * static_cast<std::int64_t>(padding);
  if (padded < span) return 0;
  return (padded - span) / stride + 1;
}

std::int64_t conv_transpose_out_extent(std::int64_t in, int kernel, int stride, int padding,
                                       int output_padding) {
  return (in - 1) * stride - 2 * static_cast<std::int64_t>(padding) + kernel + output_padding;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 Conv2dOptions opt) {
  if (input.rank() != 4) throw ShapeError("conv2d: input must be [N,C,H,W], got " + shape_str(input.shape()));
  if (weight.rank() != 4) throw ShapeError("conv2d: weight must be [Cout,Cin,kH,kW], got " + shape_str(weight.shape()));
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: channel axis (1) mismatch: input has " + std::to_string(input.dim(1)) +
                     ", weight expects " + std::to_string(weight.dim(1)));
  }
  check_bias(bias, weight.dim(0), "conv2d");
  ConvGeom g;
  g.in = {1, input.dim(2), input.dim(3)};
  g.k = {1, static_cast<int>(weight.dim(2)), static_cast<int>(weight.dim(3))};
  g.stride = {1, opt.stride, opt.stride};
  g.pad = {0, opt.padding, opt.padding};
  g.dil = {1, opt.dilation, opt.dilation};
  const char* axis_names[] = {"", "height (2)", "width (3)"};
  for (int a = 1; a < 3; ++a) {
    g.out[a] = conv_out_extent(g.in[a], g.k[a], g.stride[a], g.pad[a], g.dil[a]);
    if (g.out[a] < 1) throw ShapeError(std::string("conv2d: kernel larger than padded input along ") + axis_names[a]);
  }
  g.out[0] = 1;
  return conv_nd(input, weight, bias, g, Shape{input.dim(0), weight.dim(0), g.out[1], g.out[2]}, "conv2d");
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 Conv3dOptions opt) {
  if (input.rank() != 5) throw ShapeError("conv3d: input must be [N,C,D,H,W], got " + shape_str(input.shape()));
  if (weight.rank() != 5) throw ShapeError("conv3d: weight must be [Cout,Cin,kD,kH,kW], got " + shape_str(weight.shape()));
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv3d: channel axis (1) mismatch: input has " + std::to_string(input.dim(1)) +
                     ", weight expects " + std::to_string(weight.dim(1)));
  }
  check_bias(bias, weight.dim(0), "conv3d");
  ConvGeom g;
  const char* axis_names[] = {"depth (2)", "height (3)", "width (4)"};
  for (int a = 0; a < 3; ++a) {
    g.in[a] = input.dim(2 + a);
    g.k[a] = static_cast<int>(weight.dim(2 + a));
    g.stride[a] = opt.stride;
    g.pad[a] = opt.padding;
    g.dil[a] = 1;
    g.out[a] = conv_out_extent(g.in[a], g.k[a], g.stride[a], g.pad[a]);
    if (g.out[a] < 1) throw ShapeError(std::string("conv3d: kernel larger than padded input along ") + axis_names[a]);
  }
  return conv_nd(input, weight, bias, g, Shape{input.dim(0), weight.dim(0), g.out[0], g.out[1], g.out[2]},
                 "conv3d");
}

template <typename T>
Tensor<T> conv_transpose3d(const Tensor<T>& input, const Tensor<T>& weight,
                           const std::optional<Tensor<T>>& bias, ConvTranspose3dOptions opt) {
  if (input.rank() != 5) {
    throw ShapeError("conv_transpose3d: input must be [N,C,D,H,W], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 5) {
    throw ShapeError("conv_transpose3d: weight must be [Cin,Cout,kD,kH,kW], got " + shape_str(weight.shape()));
  }
  if (input.dim(1) != weight.dim(0)) {
    throw ShapeError("conv_transpose3d: channel axis (1) mismatch: input has " + std::to_string(input.dim(1)) +
                     ", weight expects " + std::to_string(weight.dim(0)));
  }
  if (opt.output_padding < 0 || opt.output_padding >= opt.stride) {
    throw ConfigError("conv_transpose3d: output_padding must lie in [0, stride)");
  }
  const std::int64_t N = input.dim(0), Cin = weight.dim(0), Cout = weight.dim(1);
  check_bias(bias, Cout, "conv_transpose3d");
  // The "conv" this op is the adjoint of maps the output volume onto the input.
  ConvGeom g;
  for (int a = 0; a < 3; ++a) {
    g.out[a] = input.dim(2 + a);
    g.k[a] = static_cast<int>(weight.dim(2 + a));
    g.stride[a] = opt.stride;
    g.pad[a] = opt.padding;
    g.dil[a] = 1;
    g.in[a] = conv_transpose_out_extent(g.out[a], g.k[a], opt.stride, opt.padding, opt.output_padding);
    if (opt.stride == 2 && g.in[a] != 2 * g.out[a]) {
      throw ConfigError("conv_transpose3d: stride-2 configuration (kernel " + std::to_string(g.k[a]) +
                        ", padding " + std::to_string(opt.padding) + ", output_padding " +
                        std::to_string(opt.output_padding) + ") does not double extent " +
                        std::to_string(g.out[a]));
    }
    if (g.in[a] < 1) throw ConfigError("conv_transpose3d: non-positive output extent");
  }
  const std::int64_t K = Cout * g.taps(), Pi = g.out_size(), Po = g.in_size();
  std::vector<T> out(static_cast<std::size_t>(N * Cout * Po), T(0));
  std::vector<T> cols(static_cast<std::size_t>(K * Pi));
  ConstMatMap<T> W(weight.ptr(), Cin, K);
  for (std::int64_t n = 0; n < N; ++n) {
    MatMap<T>(cols.data(), K, Pi).noalias() = W.transpose() * ConstMatMap<T>(input.ptr() + n * Cin * Pi, Cin, Pi);
    T* yn = out.data() + n * Cout * Po;
    col2vol(cols.data(), Cout, g, yn);
    if (bias) {
      for (std::int64_t c = 0; c < Cout; ++c) {
        const T b = bias->ptr()[c];
        for (std::int64_t i = 0; i < Po; ++i) yn[c * Po + i] += b;
      }
    }
  }
  Shape out_shape{N, Cout, g.in[0], g.in[1], g.in[2]};
  auto ix = input.impl(), iw = weight.impl();
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs{ix, iw};
  std::shared_ptr<TensorImpl<T>> ib = bias ? bias->impl() : nullptr;
  if (ib) inputs.push_back(ib);
  return make_result<T>(std::move(out_shape), std::move(out), inputs,
                        [ix, iw, ib, g, N, Cin, Cout, K, Pi, Po](TensorImpl<T>& self) {
    auto* gx = grad_target(ix.get());
    auto* gw = grad_target(iw.get());
    auto* gb = ib ? grad_target(ib.get()) : nullptr;
    std::vector<T> cols(static_cast<std::size_t>(K * Pi));
    ConstMatMap<T> W(iw->data.data(), Cin, K);
    for (std::int64_t n = 0; n < N; ++n) {
      const T* gyn = self.grad.data() + n * Cout * Po;
      if (gb) {
        for (std::int64_t c = 0; c < Cout; ++c) {
          T acc = 0;
          for (std::int64_t i = 0; i < Po; ++i) acc += gyn[c * Po + i];
          (*gb)[c] += acc;
        }
      }
      if (!gx && !gw) continue;
      vol2col(gyn, Cout, g, cols.data());
      ConstMatMap<T> C(cols.data(), K, Pi);
      if (gx) MatMap<T>(gx->data() + n * Cin * Pi, Cin, Pi).noalias() += W * C;
      if (gw) {
        MatMap<T>(gw->data(), Cin, K).noalias() +=
            ConstMatMap<T>(ix->data.data() + n * Cin * Pi, Cin, Pi) * C.transpose();
      }
    }
  }, "conv_transpose3d");
}

#define GWC_INSTANTIATE_CONV(T)                                                                    \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&,   \
                            Conv2dOptions);                                                        \
  template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&,   \
                            Conv3dOptions);                                                        \
  template Tensor<T> conv_transpose3d(const Tensor<T>&, const Tensor<T>&,                          \
                                      const std::optional<Tensor<T>>&, ConvTranspose3dOptions);

GWC_INSTANTIATE_CONV(float)
GWC_INSTANTIATE_CONV(double)

}  // namespace gwc
