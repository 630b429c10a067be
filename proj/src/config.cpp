#include "gwc/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace gwc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Conversion failures throw std::invalid_argument; parse_run_config adds the
// location.
std::int64_t to_int(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno == ERANGE) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

double to_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
  return out;
}

std::vector<std::int64_t> to_int_list(const std::string& s) {
  std::vector<std::int64_t> out;
  for (const auto& item : split_list(s)) out.push_back(to_int(item));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"lr", [](RunConfig& c, const std::string& v) { c.train.adam.lr = to_double(v); }},
      {"beta1", [](RunConfig& c, const std::string& v) { c.train.adam.beta1 = to_double(v); }},
      {"beta2", [](RunConfig& c, const std::string& v) { c.train.adam.beta2 = to_double(v); }},
      {"adam_eps", [](RunConfig& c, const std::string& v) { c.train.adam.eps = to_double(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_int(v); }},
      {"max_iterations", [](RunConfig& c, const std::string& v) { c.train.max_iterations = to_int(v); }},
      {"milestones", [](RunConfig& c, const std::string& v) {
         c.train.milestones = trim(v).empty() ? std::vector<std::int64_t>{} : to_int_list(v);
       }},
      {"lr_decay_factor", [](RunConfig& c, const std::string& v) { c.train.lr_decay_factor = to_double(v); }},
      {"loss_weights", [](RunConfig& c, const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 4) throw std::invalid_argument("expected 4 comma-separated weights");
         for (std::size_t i = 0; i < 4; ++i) c.train.loss.lambdas[i] = to_double(items[i]);
       }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = static_cast<std::uint64_t>(to_int(v)); }},
      {"precision", [](RunConfig& c, const std::string& v) {
         if (v == "f32") {
           c.train.precision = Precision::F32;
         } else if (v == "f64") {
           c.train.precision = Precision::F64;
         } else {
           throw std::invalid_argument("expected f32 or f64, got '" + v + "'");
         }
       }},
      {"val_interval", [](RunConfig& c, const std::string& v) { c.train.val_interval = to_int(v); }},
      {"val_fraction", [](RunConfig& c, const std::string& v) { c.train.val_fraction = to_double(v); }},
      {"norm_mean", [](RunConfig& c, const std::string& v) { c.train.norm.mean = static_cast<float>(to_double(v)); }},
      {"norm_std", [](RunConfig& c, const std::string& v) { c.train.norm.std = static_cast<float>(to_double(v)); }},
      {"variant", [](RunConfig& c, const std::string& v) { apply_variant(c.net, v); }},
      {"unary_channels", [](RunConfig& c, const std::string& v) { c.net.unary_channels = to_int(v); }},
      {"gwc_groups", [](RunConfig& c, const std::string& v) { c.net.gwc_groups = to_int(v); }},
      {"concat_channels", [](RunConfig& c, const std::string& v) { c.net.concat_channels = to_int(v); }},
      {"d_max", [](RunConfig& c, const std::string& v) { c.net.d_max = to_int(v); }},
      {"base_3d_channels", [](RunConfig& c, const std::string& v) { c.net.base_3d_channels = to_int(v); }},
      {"stage_blocks", [](RunConfig& c, const std::string& v) {
         const auto items = to_int_list(v);
         if (items.size() != 4) throw std::invalid_argument("expected 4 comma-separated block counts");
         for (std::size_t i = 0; i < 4; ++i) c.net.stage_blocks[i] = static_cast<int>(items[i]);
       }},
      {"min_stem_channels", [](RunConfig& c, const std::string& v) { c.net.min_stem_channels = to_int(v); }},
      {"use_gwc_volume", [](RunConfig& c, const std::string& v) { c.net.use_gwc_volume = to_bool(v); }},
      {"use_concat_volume", [](RunConfig& c, const std::string& v) { c.net.use_concat_volume = to_bool(v); }},
      {"sweep_base_channels", [](RunConfig& c, const std::string& v) { c.sweep.base_channels = to_int_list(v); }},
      {"sweep_variants", [](RunConfig& c, const std::string& v) {
         c.sweep.variants.clear();
         for (const auto& item : split_list(v)) c.sweep.variants.push_back(parse_sweep_variant(item));
       }},
      {"data", [](RunConfig& c, const std::string& v) { c.data = v; }},
      {"synthetic_samples", [](RunConfig& c, const std::string& v) { c.synthetic_samples = to_int(v); }},
      {"synthetic_height", [](RunConfig& c, const std::string& v) { c.synthetic_height = to_int(v); }},
      {"synthetic_width", [](RunConfig& c, const std::string& v) { c.synthetic_width = to_int(v); }},
      {"synthetic_dot_size", [](RunConfig& c, const std::string& v) { c.synthetic_dot_size = static_cast<int>(to_int(v)); }},
  };
  return table;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile f;
  f.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ParseError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(where + "empty key");
    if (f.entries_.count(key)) {
      throw ParseError(where + "duplicate key '" + key + "' (first set on line " +
                       std::to_string(f.entries_[key].line) + ")");
    }
    f.entries_[key] = {trim(line.substr(eq + 1)), lineno};
  }
  return f;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys = {"lr", "batch_size", "max_iterations"};
  return keys;
}

RunConfig parse_run_config(const KeyValueFile& file) {
  RunConfig cfg;
  for (const auto& key : required_config_keys()) {
    if (!file.has(key)) throw ConfigError(file.origin() + ": missing required key '" + key + "'");
  }
  // Variant first so explicit use_* keys can refine it.
  std::vector<std::pair<std::string, KeyValueFile::Entry>> ordered(file.entries().begin(), file.entries().end());
  std::stable_partition(ordered.begin(), ordered.end(), [](const auto& kv) { return kv.first == "variant"; });
  for (const auto& [key, entry] : ordered) {
    const std::string where = file.origin() + ":" + std::to_string(entry.line) + ": ";
    auto it = setters().find(key);
    if (it == setters().end()) throw ParseError(where + "unknown key '" + key + "'");
    try {
      it->second(cfg, entry.value);
    } catch (const std::invalid_argument& e) {
      throw ParseError(where + key + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ParseError(where + key + ": " + e.what());
    }
  }
  try {
    cfg.net.validate();
    cfg.train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(file.origin() + ": " + e.what());
  }
  cfg.sweep.reference = cfg.net;
  cfg.sweep.train = cfg.train;
  return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(KeyValueFile::load(path)); }

void apply_variant(NetworkConfig& net, const std::string& variant) {
  if (variant == "gwc-cat") {
    net.use_gwc_volume = net.use_concat_volume = true;
  } else if (variant == "gwc") {
    net.use_gwc_volume = true;
    net.use_concat_volume = false;
  } else if (variant == "cat") {
    net.use_gwc_volume = false;
    net.use_concat_volume = true;
  } else {
    throw ConfigError("unknown variant '" + variant + "' (expected gwc-cat, gwc or cat)");
  }
}

}  // namespace gwc
