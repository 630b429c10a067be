#include "gwc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "op_util.hpp"

namespace gwc {

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return axis;
}

// Splits a shape around `axis` into (outer, extent, inner) products.
struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  r.extent = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
  auto ia = a.impl(), ib = b.impl();
  return make_result<T>(a.shape(), std::move(out), {ia, ib}, [ia, ib](TensorImpl<T>& self) {
    for (auto* in : {ia.get(), ib.get()}) {
      if (auto* g = grad_target(in)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  }, "add");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.ptr()[i] * b.ptr()[i];
  auto ia = a.impl(), ib = b.impl();
  return make_result<T>(a.shape(), std::move(out), {ia, ib}, [ia, ib](TensorImpl<T>& self) {
    if (auto* g = grad_target(ia.get())) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * ib->data[i];
    }
    if (auto* g = grad_target(ib.get())) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * ia->data[i];
    }
  }, "mul");
}

template <typename T>
Tensor<T> multiply_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.ptr()[i] * s;
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {ia}, [ia, s](TensorImpl<T>& self) {
    if (auto* g = grad_target(ia.get())) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
    }
  }, "multiply_scalar");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.ptr()[i], T(0));
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {ia}, [ia](TensorImpl<T>& self) {
    if (auto* g = grad_target(ia.get())) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (self.data[i] > T(0)) (*g)[i] += self.grad[i];
      }
    }
  }, "relu");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  auto ia = a.impl();
  return make_result<T>(Shape{}, {acc}, {ia}, [ia](TensorImpl<T>& self) {
    if (auto* g = grad_target(ia.get())) {
      for (auto& v : *g) v += self.grad[0];
    }
  }, "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return multiply_scalar(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != static_cast<std::int64_t>(a.numel())) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto ia = a.impl();
  return make_result<T>(std::move(shape), ia->data, {ia}, [ia](TensorImpl<T>& self) {
    if (auto* g = grad_target(ia.get())) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  }, "reshape");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  axis = normalize_axis(axis, static_cast<int>(first.size()), "concat");
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != first[i]) {
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(i) + ": " + shape_str(s) +
                         " vs " + shape_str(first));
      }
    }
    extents.push_back(s[static_cast<std::size_t>(axis)]);
    out_shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
  }
  const AxisSplit o = split_at(out_shape, axis);
  std::vector<T> out(static_cast<std::size_t>(numel_of(out_shape)));
  std::int64_t offset = 0;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::int64_t block = extents[k] * o.inner;
    const T* src = parts[k].ptr();
    for (std::int64_t r = 0; r < o.outer; ++r) {
      std::copy_n(src + r * block, block, out.data() + r * o.extent * o.inner + offset * o.inner);
    }
    offset += extents[k];
    inputs.push_back(parts[k].impl());
  }
  return make_result<T>(out_shape, std::move(out), inputs, [inputs, extents, o](TensorImpl<T>& self) {
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const std::int64_t block = extents[k] * o.inner;
      if (auto* g = grad_target(inputs[k].get())) {
        for (std::int64_t r = 0; r < o.outer; ++r) {
          const T* src = self.grad.data() + r * o.extent * o.inner + offset * o.inner;
          T* dst = g->data() + r * block;
          for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      offset += extents[k];
    }
  }, "concat");
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, a.rank(), "slice");
  const AxisSplit s = split_at(a.shape(), axis);
  if (start < 0 || length < 0 || start + length > s.extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of bounds for axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  std::vector<T> out(static_cast<std::size_t>(numel_of(out_shape)));
  const std::int64_t block = length * s.inner;
  for (std::int64_t r = 0; r < s.outer; ++r) {
    std::copy_n(a.ptr() + r * s.extent * s.inner + start * s.inner, block, out.data() + r * block);
  }
  auto ia = a.impl();
  return make_result<T>(out_shape, std::move(out), {ia}, [ia, s, start, block](TensorImpl<T>& self) {
    if (auto* g = grad_target(ia.get())) {
      for (std::int64_t r = 0; r < s.outer; ++r) {
        T* dst = g->data() + r * s.extent * s.inner + start * s.inner;
        const T* src = self.grad.data() + r * block;
        for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
      }
    }
  }, "slice");
}

template <typename T>
Tensor<T> pad(const Tensor<T>& a, int axis, std::int64_t before, std::int64_t after) {
  axis = normalize_axis(axis, a.rank(), "pad");
  if (before < 0 || after < 0) throw ShapeError("pad: negative padding");
  const AxisSplit s = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  const std::int64_t out_extent = s.extent + before + after;
  out_shape[static_cast<std::size_t>(axis)] = out_extent;
  std::vector<T> out(static_cast<std::size_t>(numel_of(out_shape)), T(0));
  const std::int64_t block = s.extent * s.inner;
  for (std::int64_t r = 0; r < s.outer; ++r) {
    std::copy_n(a.ptr() + r * block, block, out.data() + r * out_extent * s.inner + before * s.inner);
  }
  auto ia = a.impl();
  return make_result<T>(out_shape, std::move(out), {ia},
                        [ia, s, before, out_extent, block](TensorImpl<T>& self) {
    if (auto* g = grad_target(ia.get())) {
      for (std::int64_t r = 0; r < s.outer; ++r) {
        const T* src = self.grad.data() + r * out_extent * s.inner + before * s.inner;
        T* dst = g->data() + r * block;
        for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
      }
    }
  }, "pad");
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  axis = normalize_axis(axis, a.rank(), "softmax");
  const AxisSplit s = split_at(a.shape(), axis);
  std::vector<T> out(a.numel());
  const T* x = a.ptr();
  std::vector<T> mx(static_cast<std::size_t>(s.inner));
  std::vector<T> denom(static_cast<std::size_t>(s.inner));
  for (std::int64_t r = 0; r < s.outer; ++r) {
    const std::int64_t base = r * s.extent * s.inner;
    std::fill(mx.begin(), mx.end(), -std::numeric_limits<T>::infinity());
    for (std::int64_t k = 0; k < s.extent; ++k) {
      const T* row = x + base + k * s.inner;
      for (std::int64_t i = 0; i < s.inner; ++i) mx[i] = std::max(mx[i], row[i]);
    }
    std::fill(denom.begin(), denom.end(), T(0));
    for (std::int64_t k = 0; k < s.extent; ++k) {
      const T* row = x + base + k * s.inner;
      T* orow = out.data() + base + k * s.inner;
      for (std::int64_t i = 0; i < s.inner; ++i) {
        orow[i] = std::exp(row[i] - mx[i]);
        denom[i] += orow[i];
      }
    }
    for (std::int64_t k = 0; k < s.extent; ++k) {
      T* orow = out.data() + base + k * s.inner;
      for (std::int64_t i = 0; i < s.inner; ++i) orow[i] /= denom[i];
    }
  }
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {ia}, [ia, s](TensorImpl<T>& self) {
    auto* g = grad_target(ia.get());
    if (!g) return;
    std::vector<T> dot(static_cast<std::size_t>(s.inner));
    for (std::int64_t r = 0; r < s.outer; ++r) {
      const std::int64_t base = r * s.extent * s.inner;
      std::fill(dot.begin(), dot.end(), T(0));
      for (std::int64_t k = 0; k < s.extent; ++k) {
        const T* y = self.data.data() + base + k * s.inner;
        const T* gy = self.grad.data() + base + k * s.inner;
        for (std::int64_t i = 0; i < s.inner; ++i) dot[i] += y[i] * gy[i];
      }
      for (std::int64_t k = 0; k < s.extent; ++k) {
        const T* y = self.data.data() + base + k * s.inner;
        const T* gy = self.grad.data() + base + k * s.inner;
        T* gx = g->data() + base + k * s.inner;
        for (std::int64_t i = 0; i < s.inner; ++i) gx[i] += y[i] * (gy[i] - dot[i]);
      }
    }
  }, "softmax");
}

namespace {

// Linear interpolation taps for one axis, half-pixel centres.
struct Taps {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> w_hi;
};

Taps make_taps(std::int64_t in, std::int64_t out, int scale) {
  Taps t;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.w_hi.resize(static_cast<std::size_t>(out));
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / scale - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::int64_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::int64_t hi = std::min(lo + 1, in - 1);
    t.lo[o] = lo;
    t.hi[o] = hi;
    t.w_hi[o] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

template <typename T>
Tensor<T> upsample_trilinear(const Tensor<T>& a, int scale) {
  if (a.rank() != 5) throw ShapeError("upsample_trilinear: expected [N,C,D,H,W], got " + shape_str(a.shape()));
  if (scale < 1) throw ShapeError("upsample_trilinear: scale must be a positive integer");
  const auto& s = a.shape();
  const std::int64_t nc = s[0] * s[1], D = s[2], H = s[3], W = s[4];
  const std::int64_t oD = D * scale, oH = H * scale, oW = W * scale;
  auto td = std::make_shared<Taps>(make_taps(D, oD, scale));
  auto th = std::make_shared<Taps>(make_taps(H, oH, scale));
  auto tw = std::make_shared<Taps>(make_taps(W, oW, scale));
  std::vector<T> out(static_cast<std::size_t>(nc * oD * oH * oW));
  const T* x = a.ptr();
  for (std::int64_t c = 0; c < nc; ++c) {
    const T* xc = x + c * D * H * W;
    T* yc = out.data() + c * oD * oH * oW;
    for (std::int64_t od = 0; od < oD; ++od) {
      const T wd = static_cast<T>(td->w_hi[od]);
      const T* p0 = xc + td->lo[od] * H * W;
      const T* p1 = xc + td->hi[od] * H * W;
      for (std::int64_t oh = 0; oh < oH; ++oh) {
        const T wh = static_cast<T>(th->w_hi[oh]);
        const std::int64_t h0 = th->lo[oh] * W, h1 = th->hi[oh] * W;
        T* yrow = yc + (od * oH + oh) * oW;
        for (std::int64_t ow = 0; ow < oW; ++ow) {
          const T ww = static_cast<T>(tw->w_hi[ow]);
          const std::int64_t w0 = tw->lo[ow], w1 = tw->hi[ow];
          const T c00 = p0[h0 + w0] * (1 - ww) + p0[h0 + w1] * ww;
          const T c01 = p0[h1 + w0] * (1 - ww) + p0[h1 + w1] * ww;
          const T c10 = p1[h0 + w0] * (1 - ww) + p1[h0 + w1] * ww;
          const T c11 = p1[h1 + w0] * (1 - ww) + p1[h1 + w1] * ww;
          yrow[ow] = (c00 * (1 - wh) + c01 * wh) * (1 - wd) + (c10 * (1 - wh) + c11 * wh) * wd;
        }
      }
    }
  }
  auto ia = a.impl();
  Shape out_shape{s[0], s[1], oD, oH, oW};
  return make_result<T>(out_shape, std::move(out), {ia},
                        [ia, td, th, tw, nc, D, H, W, oD, oH, oW](TensorImpl<T>& self) {
    auto* g = grad_target(ia.get());
    if (!g) return;
    for (std::int64_t c = 0; c < nc; ++c) {
      T* gc = g->data() + c * D * H * W;
      const T* gy = self.grad.data() + c * oD * oH * oW;
      for (std::int64_t od = 0; od < oD; ++od) {
        const T wd = static_cast<T>(td->w_hi[od]);
        T* p0 = gc + td->lo[od] * H * W;
        T* p1 = gc + td->hi[od] * H * W;
        for (std::int64_t oh = 0; oh < oH; ++oh) {
          const T wh = static_cast<T>(th->w_hi[oh]);
          const std::int64_t h0 = th->lo[oh] * W, h1 = th->hi[oh] * W;
          const T* grow = gy + (od * oH + oh) * oW;
          for (std::int64_t ow = 0; ow < oW; ++ow) {
            const T ww = static_cast<T>(tw->w_hi[ow]);
            const std::int64_t w0 = tw->lo[ow], w1 = tw->hi[ow];
            const T v = grow[ow];
            const T v0 = v * (1 - wd), v1 = v * wd;
            const T v00 = v0 * (1 - wh), v01 = v0 * wh, v10 = v1 * (1 - wh), v11 = v1 * wh;
            p0[h0 + w0] += v00 * (1 - ww);
            p0[h0 + w1] += v00 * ww;
            p0[h1 + w0] += v01 * (1 - ww);
            p0[h1 + w1] += v01 * ww;
            p1[h0 + w0] += v10 * (1 - ww);
            p1[h0 + w1] += v10 * ww;
            p1[h1 + w0] += v11 * (1 - ww);
            p1[h1 + w1] += v11 * ww;
          }
        }
      }
    }
  }, "upsample_trilinear");
}

#define GWC_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> multiply_scalar(const Tensor<T>&, T);                              \
  template Tensor<T> relu(const Tensor<T>&);                                            \
  template Tensor<T> sum(const Tensor<T>&);                                             \
  template Tensor<T> mean(const Tensor<T>&);                                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                  \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                        \
  template Tensor<T> slice(const Tensor<T>&, int, std::int64_t, std::int64_t);          \
  template Tensor<T> pad(const Tensor<T>&, int, std::int64_t, std::int64_t);            \
  template Tensor<T> softmax(const Tensor<T>&, int);                                    \
  template Tensor<T> upsample_trilinear(const Tensor<T>&, int);

GWC_INSTANTIATE_OPS(float)
GWC_INSTANTIATE_OPS(double)

}  // namespace gwc
