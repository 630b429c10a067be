#include "gwc/aggregation.hpp"

namespace gwc {

namespace {
constexpr Conv3dOptions kSame{1, 1};
constexpr Conv3dOptions kDown{2, 1};
constexpr Conv3dOptions kPointwise{1, 0};

std::int64_t round_up4(std::int64_t v) { return (v + 3) / 4 * 4; }
}  // namespace

template <typename T>
PreHourglass<T>::PreHourglass(ParameterRegistry<T>& reg, std::int64_t volume_channels, std::int64_t base, Rng& rng)
    : volume_channels_(volume_channels),
      conv1a_(reg, "prehourglass.conv1.0", volume_channels, base, 3, kSame, true, rng),
      conv1b_(reg, "prehourglass.conv1.1", base, base, 3, kSame, true, rng),
      conv2a_(reg, "prehourglass.conv2.0", base, base, 3, kSame, true, rng),
      conv2b_(reg, "prehourglass.conv2.1", base, base, 3, kSame, true, rng) {}

template <typename T>
Tensor<T> PreHourglass<T>::forward(const Tensor<T>& volume, bool training, ShapeTrace* trace) {
  if (volume.rank() != 5 || volume.dim(1) != volume_channels_) {
    throw ShapeError("pre_hourglass: expected a " + std::to_string(volume_channels_) +
                     "-channel volume [N,C,D,H,W], got " + shape_str(volume.shape()));
  }
  auto c1 = relu(conv1b_.forward(relu(conv1a_.forward(volume, training)), training));
  trace_shape(trace, "prehourglass.conv1", c1.shape());
  auto c2 = relu(conv2b_.forward(relu(conv2a_.forward(c1, training)), training));
  trace_shape(trace, "prehourglass.conv2", c2.shape());
  auto out = add(c1, c2);
  trace_shape(trace, "prehourglass.output", out.shape());
  return out;
}

template <typename T>
Hourglass<T>::Hourglass(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t base, Rng& rng)
    : prefix_(prefix),
      conv1a_(reg, prefix + ".conv1a", base, 2 * base, 3, kDown, true, rng),
      conv1b_(reg, prefix + ".conv1b", 2 * base, 2 * base, 3, kSame, true, rng),
      conv2a_(reg, prefix + ".conv2a", 2 * base, 4 * base, 3, kDown, true, rng),
      conv2b_(reg, prefix + ".conv2b", 4 * base, 4 * base, 3, kSame, true, rng),
      deconv1_(reg, prefix + ".deconv1", 4 * base, 2 * base, rng),
      deconv0_(reg, prefix + ".deconv0", 2 * base, base, rng),
      shortcut1_(reg, prefix + ".shortcut1", 2 * base, 2 * base, 1, kPointwise, true, rng),
      shortcut0_(reg, prefix + ".shortcut0", base, base, 1, kPointwise, true, rng) {}

template <typename T>
Tensor<T> Hourglass<T>::forward(const Tensor<T>& x, bool training, ShapeTrace* trace) {
  if (x.rank() != 5) throw ShapeError("hourglass: expected [N,C,D,H,W], got " + shape_str(x.shape()));
  for (int a = 2; a < 5; ++a) {
    if (x.dim(a) % 4 != 0) {
      throw ShapeError("hourglass: volume extents " + shape_str(x.shape()) +
                       " must be divisible by 4 on D, H, W; pad the volume first");
    }
  }
  auto t = [&](const char* name, const Tensor<T>& v) { trace_shape(trace, prefix_ + "." + name, v.shape()); };
  trace_shape(trace, prefix_ + ".input", x.shape());
  auto c1a = relu(conv1a_.forward(x, training));
  t("conv1a", c1a);
  auto c1b = relu(conv1b_.forward(c1a, training));
  t("conv1b", c1b);
  auto c2a = relu(conv2a_.forward(c1b, training));
  t("conv2a", c2a);
  auto c2b = relu(conv2b_.forward(c2a, training));
  t("conv2b", c2b);
  auto d1 = deconv1_.forward(c2b, training);
  t("deconv1", d1);
  auto s1 = shortcut1_.forward(c1b, training);
  t("shortcut1", s1);
  auto plus1 = relu(add(d1, s1));
  t("plus1", plus1);
  auto d0 = deconv0_.forward(plus1, training);
  t("deconv0", d0);
  auto s0 = shortcut0_.forward(x, training);
  t("shortcut0", s0);
  auto out = relu(add(d0, s0));
  t("output", out);
  return out;
}

template <typename T>
Aggregation<T>::Aggregation(ParameterRegistry<T>& reg, const NetworkConfig& cfg, Rng& rng)
    : pre_(reg, cfg.volume_channels(), cfg.base_3d_channels, rng) {
  hourglasses_.reserve(static_cast<std::size_t>(cfg.num_hourglasses));
  for (int i = 0; i < cfg.num_hourglasses; ++i) {
    hourglasses_.emplace_back(reg, "hourglass" + std::to_string(i + 1), cfg.base_3d_channels, rng);
  }
}

template <typename T>
AggregationOutputs<T> Aggregation<T>::aggregate(const CostVolume<T>& volume, HeadMode mode, bool training,
                                                ShapeTrace* trace) {
  Tensor<T> x = volume.tensor;
  if (x.rank() != 5) throw ShapeError("aggregate: expected [N,C,D,H,W], got " + shape_str(x.shape()));
  const std::int64_t D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const bool padded = D % 4 || H % 4 || W % 4;
  if (padded) {
    x = pad(x, 2, 0, round_up4(D) - D);
    x = pad(x, 3, 0, round_up4(H) - H);
    x = pad(x, 4, 0, round_up4(W) - W);
  }
  auto crop = [&](const Tensor<T>& v) {
    if (!padded) return v;
    return slice(slice(slice(v, 2, 0, D), 3, 0, H), 4, 0, W);
  };

  AggregationOutputs<T> out;
  auto v = pre_.forward(x, training, trace);
  if (mode == HeadMode::AllOutputs) out.volumes.push_back(crop(v));
  for (std::size_t i = 0; i < hourglasses_.size(); ++i) {
    v = hourglasses_[i].forward(v, training, trace);
    if (mode == HeadMode::AllOutputs || i + 1 == hourglasses_.size()) out.volumes.push_back(crop(v));
  }
  return out;
}

template class PreHourglass<float>;
template class PreHourglass<double>;
template class Hourglass<float>;
template class Hourglass<double>;
template class Aggregation<float>;
template class Aggregation<double>;

}  // namespace gwc
