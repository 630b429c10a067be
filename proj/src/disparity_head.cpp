#include "gwc/disparity_head.hpp"

#include "op_util.hpp"

namespace gwc {

template <typename T>
OutputModule<T>::OutputModule(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t base, Rng& rng)
    : prefix_(prefix),
      conv1_(reg, prefix + ".conv1", base, base, 3, Conv3dOptions{1, 1}, true, rng),
      conv2_(reg, prefix + ".conv2", base, 1, 3, Conv3dOptions{1, 1}, false, rng) {}

template <typename T>
ProbabilityVolume<T> OutputModule<T>::forward(const Tensor<T>& v, std::int64_t d_max, bool training,
                                              ShapeTrace* trace) {
  if (v.rank() != 5) throw ShapeError("output_module: expected [N,C,D,H,W], got " + shape_str(v.shape()));
  if (d_max != 4 * v.dim(2)) {
    throw ShapeError("output_module: d_max " + std::to_string(d_max) + " != 4 * volume depth " +
                     std::to_string(v.dim(2)));
  }
  auto c1 = relu(conv1_.forward(v, training));
  trace_shape(trace, prefix_ + ".conv1", c1.shape());
  auto c2 = conv2_.forward(c1, training);
  trace_shape(trace, prefix_ + ".conv2", c2.shape());
  auto score = upsample_trilinear(c2, 4);
  trace_shape(trace, prefix_ + ".score", score.shape());
  const auto& s = score.shape();
  auto prob = softmax(reshape(score, {s[0], s[2], s[3], s[4]}), 1);
  trace_shape(trace, prefix_ + ".prob", prob.shape());
  return {prob};
}

template <typename T>
DisparityMap<T> soft_argmin(const ProbabilityVolume<T>& p) {
  const auto& t = p.tensor;
  if (t.rank() != 4) throw ShapeError("soft_argmin: expected [N,D,H,W], got " + shape_str(t.shape()));
  const std::int64_t N = t.dim(0), D = t.dim(1), HW = t.dim(2) * t.dim(3);
  std::vector<T> out(static_cast<std::size_t>(N * HW), T(0));
  for (std::int64_t n = 0; n < N; ++n) {
    T* o = out.data() + n * HW;
    for (std::int64_t k = 0; k < D; ++k) {
      const T* pk = t.ptr() + (n * D + k) * HW;
      const T w = static_cast<T>(k);
      for (std::int64_t i = 0; i < HW; ++i) o[i] += w * pk[i];
    }
  }
  auto ip = t.impl();
  auto values = make_result<T>(Shape{N, t.dim(2), t.dim(3)}, std::move(out), {ip},
                               [ip, N, D, HW](TensorImpl<T>& self) {
    auto* g = grad_target(ip.get());
    if (!g) return;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* go = self.grad.data() + n * HW;
      for (std::int64_t k = 0; k < D; ++k) {
        T* gk = g->data() + (n * D + k) * HW;
        const T w = static_cast<T>(k);
        for (std::int64_t i = 0; i < HW; ++i) gk[i] += w * go[i];
      }
    }
  }, "soft_argmin");
  return {values, {}};
}

template class OutputModule<float>;
template class OutputModule<double>;
template DisparityMap<float> soft_argmin(const ProbabilityVolume<float>&);
template DisparityMap<double> soft_argmin(const ProbabilityVolume<double>&);

}  // namespace gwc
