#include "gwc/network_config.hpp"

#include <algorithm>
#include <cmath>

#include "gwc/error.hpp"

namespace gwc {

NetworkConfig NetworkConfig::full_scale() {
  NetworkConfig c;
  c.unary_channels = 320;
  c.gwc_groups = 40;
  c.concat_channels = 12;
  c.d_max = 192;
  c.base_3d_channels = 32;
  c.stage_blocks = {3, 16, 3, 3};
  return c;
}

NetworkConfig NetworkConfig::desk_scale() { return NetworkConfig{}; }

std::int64_t NetworkConfig::volume_channels() const {
  return (use_gwc_volume ? gwc_groups : 0) + (use_concat_volume ? 2 * concat_channels : 0);
}

void NetworkConfig::validate() const {
  if (unary_channels < 3) throw ConfigError("unary_channels must be >= 3");
  if (gwc_groups < 1) throw ConfigError("gwc_groups must be >= 1");
  if (use_gwc_volume && unary_channels % gwc_groups != 0) {
    throw ConfigError("unary_channels (" + std::to_string(unary_channels) + ") is not divisible by gwc_groups (" +
                      std::to_string(gwc_groups) + ")");
  }
  if (d_max < 4 || d_max % 4 != 0) {
    throw ConfigError("d_max must be a positive multiple of 4, got " + std::to_string(d_max));
  }
  if (!use_concat_volume && !use_gwc_volume) {
    throw ConfigError("at least one of use_concat_volume / use_gwc_volume must be set");
  }
  if (use_concat_volume && concat_channels < 1) throw ConfigError("concat_channels must be >= 1");
  if (min_stem_channels < 1) throw ConfigError("min_stem_channels must be >= 1");
  if (base_3d_channels < 1) throw ConfigError("base_3d_channels must be >= 1");
  if (num_hourglasses != 3) throw ConfigError("num_hourglasses must be 3");
  for (int b : stage_blocks) {
    if (b < 1) throw ConfigError("every feature stage needs at least one block");
  }
}

std::string NetworkConfig::variant_name() const {
  if (use_gwc_volume && use_concat_volume) return "gwc-cat";
  if (use_gwc_volume) return "gwc";
  return "cat";
}

FeatureWidths feature_widths(const NetworkConfig& cfg) {
  const double s = static_cast<double>(cfg.unary_channels) / 320.0;
  auto scaled = [s](double full) { return std::max<std::int64_t>(1, std::llround(full * s)); };
  FeatureWidths w;
  w.stem = std::max(scaled(32), cfg.min_stem_channels);
  w.conv1 = w.stem;
  w.conv2 = scaled(64);
  w.conv3 = scaled(128);
  w.conv4 = cfg.unary_channels - w.conv2 - w.conv3;
  if (w.conv4 < 1) throw ConfigError("unary_channels too small to split across three stages");
  w.compress_hidden = w.conv3;
  return w;
}

}  // namespace gwc
