#include "gwc/features.hpp"

namespace gwc {

namespace {

template <typename T>
std::vector<ResidualBlock2d<T>> make_stage(ParameterRegistry<T>& reg, const std::string& name, int blocks,
                                           std::int64_t in_channels, std::int64_t out_channels, int stride,
                                           int dilation, Rng& rng) {
  std::vector<ResidualBlock2d<T>> stage;
  stage.reserve(static_cast<std::size_t>(blocks));
  for (int b = 0; b < blocks; ++b) {
    stage.emplace_back(reg, "feature." + name + "." + std::to_string(b), b == 0 ? in_channels : out_channels,
                       out_channels, b == 0 ? stride : 1, dilation, rng);
  }
  return stage;
}

template <typename T>
Tensor<T> run_stage(std::vector<ResidualBlock2d<T>>& stage, Tensor<T> x, bool training) {
  for (auto& block : stage) x = block.forward(x, training);
  return x;
}

}  // namespace

template <typename T>
FeatureExtractor<T>::FeatureExtractor(ParameterRegistry<T>& reg, const NetworkConfig& cfg, Rng& rng)
    : cfg_(cfg), widths_(feature_widths(cfg)) {
  const auto& w = widths_;
  stem_.emplace_back(reg, "feature.stem.0", 3, w.stem, 3, Conv2dOptions{2, 1, 1}, true, rng);
  stem_.emplace_back(reg, "feature.stem.1", w.stem, w.stem, 3, Conv2dOptions{1, 1, 1}, true, rng);
  stem_.emplace_back(reg, "feature.stem.2", w.stem, w.stem, 3, Conv2dOptions{1, 1, 1}, true, rng);
  conv1_ = make_stage<T>(reg, "conv1", cfg.stage_blocks[0], w.stem, w.conv1, 1, 1, rng);
  conv2_ = make_stage<T>(reg, "conv2", cfg.stage_blocks[1], w.conv1, w.conv2, 2, 1, rng);
  conv3_ = make_stage<T>(reg, "conv3", cfg.stage_blocks[2], w.conv2, w.conv3, 1, 1, rng);
  conv4_ = make_stage<T>(reg, "conv4", cfg.stage_blocks[3], w.conv3, w.conv4, 1, 2, rng);
  if (cfg.use_concat_volume) {
    compress_.emplace_back(reg, "compress.0", cfg.unary_channels, w.compress_hidden, 3, Conv2dOptions{1, 1, 1},
                           true, rng);
    compress_.emplace_back(reg, "compress.1", w.compress_hidden, cfg.concat_channels, 1, Conv2dOptions{1, 0, 1},
                           false, rng);
  }
}

template <typename T>
FeatureMap<T> FeatureExtractor<T>::extract(const Tensor<T>& image, Side side, bool training) {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw ShapeError("extract_features: expected image [N,3,H,W], got " + shape_str(image.shape()));
  }
  if (image.dim(2) % 4 != 0 || image.dim(3) % 4 != 0) {
    throw ShapeError("extract_features: image extents " + std::to_string(image.dim(2)) + "x" +
                     std::to_string(image.dim(3)) + " are not divisible by 4; pad the image first");
  }
  Tensor<T> x = image;
  for (auto& conv : stem_) x = relu(conv.forward(x, training));
  x = run_stage(conv1_, x, training);
  auto l2 = run_stage(conv2_, x, training);
  auto l3 = run_stage(conv3_, l2, training);
  auto l4 = run_stage(conv4_, l3, training);
  return {concat<T>({l2, l3, l4}, 1), cfg_.unary_channels, side};
}

template <typename T>
FeatureMap<T> FeatureExtractor<T>::compress_for_concat(const FeatureMap<T>& f, bool training) {
  if (compress_.empty()) throw ConfigError("compress_for_concat: model has no concatenation volume");
  if (f.tensor.rank() != 4 || f.tensor.dim(1) != cfg_.unary_channels) {
    throw ShapeError("compress_for_concat: expected [N," + std::to_string(cfg_.unary_channels) +
                     ",H,W] features, got " + shape_str(f.tensor.shape()));
  }
  auto x = relu(compress_[0].forward(f.tensor, training));
  x = compress_[1].forward(x, training);
  return {x, cfg_.concat_channels, f.source};
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;

}  // namespace gwc
