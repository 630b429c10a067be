#pragma once

#include <cstdint>
#include <vector>

#include "gwc/aggregation.hpp"
#include "gwc/disparity_head.hpp"
#include "gwc/features.hpp"
#include "gwc/network_config.hpp"

namespace gwc {

/// How a forward pass runs.
///  - train: batch statistics (running stats updated), all four outputs.
///  - eval:  running statistics, all four outputs.
///  - infer: running statistics, final output only; auxiliary heads never run.
struct ForwardMode {
  bool batch_stats = false;
  HeadMode heads = HeadMode::AllOutputs;

  static ForwardMode train() { return {true, HeadMode::AllOutputs}; }
  static ForwardMode eval() { return {false, HeadMode::AllOutputs}; }
  static ForwardMode infer() { return {false, HeadMode::FinalOnly}; }
};

template <typename T>
struct Prediction {
  /// d0..d3 in AllOutputs mode, only the final map in FinalOnly mode. Each is
  /// [N, H, W] in full-resolution pixels.
  std::vector<Tensor<T>> disparities;
  const Tensor<T>& final_disparity() const { return disparities.back(); }
};

/// The full stereo network: shared unary feature extractor, cost volume
/// (group-wise correlation and/or concatenation), stacked-hourglass
/// aggregation and four output modules.
template <typename T>
class GwcNet {
 public:
  GwcNet(const NetworkConfig& cfg, std::uint64_t seed);
  GwcNet(const GwcNet&) = delete;
  GwcNet& operator=(const GwcNet&) = delete;

  /// left/right: [N, 3, H, W] normalized images with H, W divisible by 4.
  Prediction<T> forward(const Tensor<T>& left, const Tensor<T>& right, ForwardMode mode,
                        ShapeTrace* trace = nullptr);

  /// The cost volume the aggregation network consumes.
  CostVolume<T> build_volume(const Tensor<T>& left, const Tensor<T>& right, bool training,
                             ShapeTrace* trace = nullptr);

  const NetworkConfig& config() const { return cfg_; }
  ParameterRegistry<T>& registry() { return registry_; }
  const ParameterRegistry<T>& registry() const { return registry_; }
  FeatureExtractor<T>& features() { return *features_; }
  Aggregation<T>& aggregation() { return *aggregation_; }
  OutputModule<T>& output_module(std::size_t i) { return heads_.at(i); }

 private:
  NetworkConfig cfg_;
  ParameterRegistry<T> registry_;
  std::unique_ptr<FeatureExtractor<T>> features_;
  std::unique_ptr<Aggregation<T>> aggregation_;
  std::vector<OutputModule<T>> heads_;
};

extern template class GwcNet<float>;
extern template class GwcNet<double>;

}  // namespace gwc
