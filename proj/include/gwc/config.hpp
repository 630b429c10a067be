#pragma once

#include <map>
#include <string>
#include <vector>

#include "gwc/train.hpp"

namespace gwc {

/// Flat key=value text, one key per line. '#' starts a comment; blank lines
/// are ignored. Repeated keys are errors.
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static KeyValueFile parse(const std::string& text, const std::string& origin);
  static KeyValueFile load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::map<std::string, Entry> entries_;
};

/// Everything a train or sweep run reads from its config file.
struct RunConfig {
  NetworkConfig net = NetworkConfig::desk_scale();
  TrainConfig train;
  SweepConfig sweep;       // base_channels / variants; reference and train mirror the fields above
  std::string data;        // optional manifest path (sweep)
  std::int64_t synthetic_samples = 220;
  std::int64_t synthetic_height = 64;
  std::int64_t synthetic_width = 128;
  int synthetic_dot_size = SyntheticConfig{}.dot_size;
};

/// Keys that every config file must set.
const std::vector<std::string>& required_config_keys();

/// Unknown keys, malformed values and missing required keys are errors that
/// name the key (and line, when there is one).
RunConfig parse_run_config(const KeyValueFile& file);
RunConfig load_run_config(const std::string& path);

/// Applies a variant name: "gwc-cat", "gwc" or "cat".
void apply_variant(NetworkConfig& net, const std::string& variant);

}  // namespace gwc
