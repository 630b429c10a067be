#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "gwc/ops.hpp"
#include "gwc/stereo_io.hpp"

namespace gwc {

namespace fs = std::filesystem;

void SyntheticConfig::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("synthetic image size must be positive");
  if (d_max < 0) throw ConfigError("d_max must be nonnegative");
  if (d_max >= width) {
    throw ConfigError("d_max (" + std::to_string(d_max) + ") must be smaller than width (" + std::to_string(width) +
                      ")");
  }
  if (!(dot_density > 0 && dot_density <= 1)) throw ConfigError("dot_density must lie in (0, 1]");
  if (max_shapes < 0) throw ConfigError("max_shapes must be nonnegative");
  if (dot_size < 1) throw ConfigError("dot_size must be at least 1");
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over a golden-ratio stride
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

struct DotPainter {
  std::mt19937_64& rng;
  double density;
  std::bernoulli_distribution on{0.5};
  std::uniform_int_distribution<int> level{0, 255};

  DotPainter(std::mt19937_64& r, double d) : rng(r), density(d), on(d) {}

  void paint(std::uint8_t* rgb) {
    if (on(rng)) {
      for (int c = 0; c < 3; ++c) rgb[c] = static_cast<std::uint8_t>(level(rng));
    } else {
      rgb[0] = rgb[1] = rgb[2] = 128;
    }
  }

  // Interleaved RGB of square dots on a grid with a random phase.
  std::vector<std::uint8_t> texture(std::int64_t h, std::int64_t w, int size) {
    std::uniform_int_distribution<int> phase(0, size - 1);
    const std::int64_t ox = phase(rng), oy = phase(rng);
    const std::int64_t gh = (h + oy) / size + 1, gw = (w + ox) / size + 1;
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(gh * gw * 3));
    for (std::size_t i = 0; i < cells.size(); i += 3) paint(&cells[i]);
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(h * w * 3));
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t cell = ((y + oy) / size) * gw + (x + ox) / size;
        std::copy_n(&cells[static_cast<std::size_t>(cell * 3)], 3, &rgb[static_cast<std::size_t>((y * w + x) * 3)]);
      }
    }
    return rgb;
  }
};

}  // namespace

RdsPair generate_rds_images(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::int64_t H = cfg.height, W = cfg.width;
  auto draw_disparity = [&] {
    if (cfg.d_max == 0) return std::int64_t{0};
    return std::uniform_int_distribution<std::int64_t>(0, cfg.d_max - 1)(rng);
  };

  std::vector<std::int64_t> disp(static_cast<std::size_t>(H * W), draw_disparity());
  const int shapes = cfg.max_shapes > 0 ? std::uniform_int_distribution<int>(1, cfg.max_shapes)(rng) : 0;
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = std::bernoulli_distribution(0.5)(rng);
    const double cx = std::uniform_real_distribution<double>(0, static_cast<double>(W))(rng);
    const double cy = std::uniform_real_distribution<double>(0, static_cast<double>(H))(rng);
    const double rx = std::uniform_real_distribution<double>(std::max(2.0, W / 16.0), std::max(2.0, W / 4.0))(rng);
    const double ry = std::uniform_real_distribution<double>(std::max(2.0, H / 16.0), std::max(2.0, H / 4.0))(rng);
    const std::int64_t value = draw_disparity();
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        const double u = (static_cast<double>(x) + 0.5 - cx) / rx;
        const double v = (static_cast<double>(y) + 0.5 - cy) / ry;
        const bool inside = ellipse ? u * u + v * v <= 1.0 : std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
        if (inside) disp[static_cast<std::size_t>(y * W + x)] = value;
      }
    }
  }

  RdsPair out;
  out.left.height = out.right.height = H;
  out.left.width = out.right.width = W;
  out.left.rgb.resize(static_cast<std::size_t>(H * W * 3));
  out.right.rgb.resize(out.left.rgb.size());
  DotPainter dots(rng, cfg.dot_density);
  out.left.rgb = dots.texture(H, W, cfg.dot_size);
  const std::vector<std::uint8_t> fill = dots.texture(H, W, cfg.dot_size);

  out.gt.values = Tensor<float>(Shape{H, W});
  out.gt.valid.assign(static_cast<std::size_t>(H * W), 0);
  std::vector<std::int64_t> winner(static_cast<std::size_t>(W));
  for (std::int64_t y = 0; y < H; ++y) {
    // Z-buffer: the left pixel with the largest disparity (nearest surface)
    // owns each right pixel.
    std::fill(winner.begin(), winner.end(), -1);
    for (std::int64_t x = 0; x < W; ++x) {
      const std::int64_t d = disp[static_cast<std::size_t>(y * W + x)];
      const std::int64_t xr = x - d;
      if (xr < 0) continue;
      auto& w = winner[static_cast<std::size_t>(xr)];
      if (w < 0 || disp[static_cast<std::size_t>(y * W + w)] < d) w = x;
    }
    for (std::int64_t xr = 0; xr < W; ++xr) {
      std::uint8_t* dst = &out.right.rgb[static_cast<std::size_t>((y * W + xr) * 3)];
      const std::int64_t src = winner[static_cast<std::size_t>(xr)];
      if (src < 0) {
        std::copy_n(&fill[static_cast<std::size_t>((y * W + xr) * 3)], 3, dst);
      } else {
        std::copy_n(&out.left.rgb[static_cast<std::size_t>((y * W + src) * 3)], 3, dst);
        out.gt.valid[static_cast<std::size_t>(y * W + src)] = 1;
      }
    }
    for (std::int64_t x = 0; x < W; ++x) {
      out.gt.values.ptr()[y * W + x] = static_cast<float>(disp[static_cast<std::size_t>(y * W + x)]);
    }
  }
  return out;
}

StereoSample generate_rds(const SyntheticConfig& cfg) {
  RdsPair pair = generate_rds_images(cfg);
  StereoSample s;
  s.left = image_to_tensor(pair.left);
  s.right = image_to_tensor(pair.right);
  s.gt = std::move(pair.gt);
  s.id = "rds-" + std::to_string(cfg.seed);
  return s;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return (fp.is_absolute() || base.empty() ? fp : base / fp).string();
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected left<TAB>right<TAB>gt");
    }
    entries.push_back({resolve(fields[0]), resolve(fields[1]), resolve(fields[2])});
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& e : entries) out << e.left << '\t' << e.right << '\t' << e.gt << '\n';
  if (!out) throw IoError("write failed: " + path);
}

DisparityMap<float> read_disparity(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".png" || ext == ".PNG") return read_kitti_png(path);
  PfmImage pfm = read_pfm(path);
  if (pfm.color) throw ParseError(path + ": disparity PFM must be grayscale (Pf)");
  DisparityMap<float> out;
  out.values = pfm.data;
  out.valid.resize(out.values.numel());
  for (std::size_t i = 0; i < out.valid.size(); ++i) out.valid[i] = std::isfinite(out.values.ptr()[i]);
  return out;
}

StereoSample load_sample(const ManifestEntry& entry) {
  StereoSample s;
  const Image8 l = read_image8(entry.left);
  const Image8 r = read_image8(entry.right);
  if (l.height != r.height || l.width != r.width) {
    throw ShapeError(entry.left + ": left/right sizes differ (" + std::to_string(l.height) + "x" +
                     std::to_string(l.width) + " vs " + std::to_string(r.height) + "x" + std::to_string(r.width) +
                     ")");
  }
  s.left = image_to_tensor(l);
  s.right = image_to_tensor(r);
  s.gt = read_disparity(entry.gt);
  if (s.gt.values.dim(0) != l.height || s.gt.values.dim(1) != l.width) {
    throw ShapeError(entry.gt + ": ground truth size does not match the images");
  }
  s.id = fs::path(entry.left).stem().string();
  return s;
}

template <typename T>
Batch<T> make_batch(const std::vector<StereoSample>& samples, const std::vector<std::size_t>& indices,
                    const Normalization& norm) {
  if (indices.empty()) throw ConfigError("make_batch: empty batch");
  if (!(norm.std > 0)) throw ConfigError("normalization std must be positive");
  const auto& first = samples.at(indices[0]);
  const std::int64_t H = first.left.dim(1), W = first.left.dim(2);
  const std::int64_t B = static_cast<std::int64_t>(indices.size());
  Batch<T> b;
  b.left = Tensor<T>(Shape{B, 3, H, W});
  b.right = Tensor<T>(Shape{B, 3, H, W});
  b.gt.values = Tensor<T>(Shape{B, H, W});
  b.gt.valid.assign(static_cast<std::size_t>(B * H * W), 1);
  const std::size_t img = static_cast<std::size_t>(3 * H * W), plane = static_cast<std::size_t>(H * W);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& s = samples.at(indices[k]);
    if (s.left.dim(1) != H || s.left.dim(2) != W) throw ShapeError("make_batch: samples differ in size");
    for (std::size_t i = 0; i < img; ++i) {
      b.left.ptr()[k * img + i] = static_cast<T>((s.left.ptr()[i] - norm.mean) / norm.std);
      b.right.ptr()[k * img + i] = static_cast<T>((s.right.ptr()[i] - norm.mean) / norm.std);
    }
    for (std::size_t i = 0; i < plane; ++i) {
      b.gt.values.ptr()[k * plane + i] = static_cast<T>(s.gt.values.ptr()[i]);
      b.gt.valid[k * plane + i] = s.gt.is_valid(i);
    }
  }
  return b;
}

template <typename T>
Tensor<T> pad_top_right(const Tensor<T>& x, std::int64_t multiple) {
  if (x.rank() != 4) throw ShapeError("pad_top_right: expected [N, C, H, W], got " + shape_str(x.shape()));
  if (multiple <= 0) throw ConfigError("pad_top_right: multiple must be positive");
  const std::int64_t top = (multiple - x.dim(2) % multiple) % multiple;
  const std::int64_t right = (multiple - x.dim(3) % multiple) % multiple;
  return pad(pad(x, 2, top, 0), 3, 0, right);
}

template Batch<float> make_batch(const std::vector<StereoSample>&, const std::vector<std::size_t>&,
                                 const Normalization&);
template Batch<double> make_batch(const std::vector<StereoSample>&, const std::vector<std::size_t>&,
                                  const Normalization&);
template Tensor<float> pad_top_right(const Tensor<float>&, std::int64_t);
template Tensor<double> pad_top_right(const Tensor<double>&, std::int64_t);

}  // namespace gwc
