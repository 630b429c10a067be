#include "gwc/layers.hpp"

#include <cmath>

namespace gwc {

template <typename T>
Tensor<T> he_normal(Shape shape, std::int64_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(std::max<std::int64_t>(fan_in, 1))));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
BatchNorm<T>::BatchNorm(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t channels)
    : gamma(reg.add_parameter(prefix + ".weight", Tensor<T>::full({channels}, T(1)))),
      beta(reg.add_parameter(prefix + ".bias", Tensor<T>::zeros({channels}))),
      running_mean(reg.add_buffer(prefix + ".running_mean", Tensor<T>::zeros({channels}))),
      running_var(reg.add_buffer(prefix + ".running_var", Tensor<T>::full({channels}, T(1)))) {}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, bool training) {
  return batchnorm(x, gamma, beta, running_mean, running_var, training);
}

template <typename T>
Conv2dUnit<T>::Conv2dUnit(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
                          std::int64_t out_channels, int kernel, Conv2dOptions opt_, bool with_bn, Rng& rng)
    : weight(reg.add_parameter(prefix + ".weight",
                               he_normal<T>({out_channels, in_channels, kernel, kernel},
                                            in_channels * kernel * kernel, rng))),
      opt(opt_) {
  if (with_bn) bn.emplace(reg, prefix + ".bn", out_channels);
}

template <typename T>
Tensor<T> Conv2dUnit<T>::forward(const Tensor<T>& x, bool training) {
  auto y = conv2d<T>(x, weight, std::nullopt, opt);
  return bn ? bn->forward(y, training) : y;
}

template <typename T>
Conv3dUnit<T>::Conv3dUnit(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
                          std::int64_t out_channels, int kernel, Conv3dOptions opt_, bool with_bn, Rng& rng)
    : weight(reg.add_parameter(prefix + ".weight",
                               he_normal<T>({out_channels, in_channels, kernel, kernel, kernel},
                                            in_channels * kernel * kernel * kernel, rng))),
      opt(opt_) {
  if (with_bn) bn.emplace(reg, prefix + ".bn", out_channels);
}

template <typename T>
Tensor<T> Conv3dUnit<T>::forward(const Tensor<T>& x, bool training) {
  auto y = conv3d<T>(x, weight, std::nullopt, opt);
  return bn ? bn->forward(y, training) : y;
}

// Each output voxel of a stride-2 transpose sees on average 27/8 taps per
// input channel.
template <typename T>
Deconv3dUnit<T>::Deconv3dUnit(ParameterRegistry<T>& reg, const std::string& prefix, std::int64_t in_channels,
                              std::int64_t out_channels, Rng& rng)
    : weight(reg.add_parameter(prefix + ".weight",
                               he_normal<T>({in_channels, out_channels, 3, 3, 3},
                                            std::max<std::int64_t>(in_channels * 27 / 8, 1), rng))),
      opt{2, 1, 1},
      bn(reg, prefix + ".bn", out_channels) {}

template <typename T>
Tensor<T> Deconv3dUnit<T>::forward(const Tensor<T>& x, bool training) {
  return bn.forward(conv_transpose3d<T>(x, weight, std::nullopt, opt), training);
}

template <typename T>
ResidualBlock2d<T>::ResidualBlock2d(ParameterRegistry<T>& reg, const std::string& prefix,
                                    std::int64_t in_channels, std::int64_t out_channels, int stride,
                                    int dilation, Rng& rng)
    : conv1_(reg, prefix + ".conv1", in_channels, out_channels, 3, {stride, dilation, dilation}, true, rng),
      conv2_(reg, prefix + ".conv2", out_channels, out_channels, 3, {1, dilation, dilation}, true, rng) {
  if (stride != 1 || in_channels != out_channels) {
    downsample_.emplace(reg, prefix + ".downsample", in_channels, out_channels, 1, Conv2dOptions{stride, 0, 1},
                        true, rng);
  }
}

template <typename T>
Tensor<T> ResidualBlock2d<T>::forward(const Tensor<T>& x, bool training) {
  auto y = conv2_.forward(relu(conv1_.forward(x, training)), training);
  auto shortcut = downsample_ ? downsample_->forward(x, training) : x;
  return relu(add(y, shortcut));
}

template class BatchNorm<float>;
template class BatchNorm<double>;
template class Conv2dUnit<float>;
template class Conv2dUnit<double>;
template class Conv3dUnit<float>;
template class Conv3dUnit<double>;
template class Deconv3dUnit<float>;
template class Deconv3dUnit<double>;
template class ResidualBlock2d<float>;
template class ResidualBlock2d<double>;
template Tensor<float> he_normal(Shape, std::int64_t, Rng&);
template Tensor<double> he_normal(Shape, std::int64_t, Rng&);

}  // namespace gwc
