#include "gwc/model.hpp"

namespace gwc {

template <typename T>
GwcNet<T>::GwcNet(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  features_ = std::make_unique<FeatureExtractor<T>>(registry_, cfg_, rng);
  aggregation_ = std::make_unique<Aggregation<T>>(registry_, cfg_, rng);
  heads_.reserve(static_cast<std::size_t>(cfg_.num_hourglasses + 1));
  for (int i = 0; i <= cfg_.num_hourglasses; ++i) {
    heads_.emplace_back(registry_, "output" + std::to_string(i), cfg_.base_3d_channels, rng);
  }
}

template <typename T>
CostVolume<T> GwcNet<T>::build_volume(const Tensor<T>& left, const Tensor<T>& right, bool training,
                                      ShapeTrace* trace) {
  if (left.shape() != right.shape()) {
    throw ShapeError("left/right image shapes differ: " + shape_str(left.shape()) + " vs " +
                     shape_str(right.shape()));
  }
  auto fl = features_->extract(left, Side::Left, training);
  auto fr = features_->extract(right, Side::Right, training);
  trace_shape(trace, "unary_l", fl.tensor.shape());
  trace_shape(trace, "unary_r", fr.tensor.shape());
  const std::int64_t levels = cfg_.d_max / 4;

  std::optional<CostVolume<T>> gwc, cat;
  if (cfg_.use_gwc_volume) {
    gwc = build_gwc_volume(fl.tensor, fr.tensor, levels, cfg_.gwc_groups);
    trace_shape(trace, "volume_g", gwc->tensor.shape());
  }
  if (cfg_.use_concat_volume) {
    auto cl = features_->compress_for_concat(fl, training);
    auto cr = features_->compress_for_concat(fr, training);
    cat = build_concat_volume(cl.tensor, cr.tensor, levels);
    trace_shape(trace, "volume_c", cat->tensor.shape());
  }
  CostVolume<T> volume = gwc && cat ? build_combined_volume(*gwc, *cat) : (gwc ? *gwc : *cat);
  trace_shape(trace, "volume", volume.tensor.shape());
  return volume;
}

template <typename T>
Prediction<T> GwcNet<T>::forward(const Tensor<T>& left, const Tensor<T>& right, ForwardMode mode,
                                 ShapeTrace* trace) {
  auto volume = build_volume(left, right, mode.batch_stats, trace);
  auto agg = aggregation_->aggregate(volume, mode.heads, mode.batch_stats, trace);
  Prediction<T> pred;
  // In FinalOnly mode the single volume belongs to the last head.
  const std::size_t first_head = heads_.size() - agg.volumes.size();
  for (std::size_t i = 0; i < agg.volumes.size(); ++i) {
    auto& head = heads_[first_head + i];
    auto prob = head.forward(agg.volumes[i], cfg_.d_max, mode.batch_stats, trace);
    auto disp = soft_argmin(prob);
    trace_shape(trace, "output" + std::to_string(first_head + i) + ".disparity", disp.values.shape());
    pred.disparities.push_back(disp.values);
  }
  return pred;
}

template class GwcNet<float>;
template class GwcNet<double>;

}  // namespace gwc
