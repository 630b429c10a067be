#include "gwc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace gwc {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    raw(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    raw(&v, 8, what);
    return v;
  }
  void raw(void* dst, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError("checkpoint: byte " + std::to_string(pos_) + ": truncated " + what);
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

// Architecture fields stored as f64 scalars.
struct MetaField {
  const char* name;
  double (*get)(const NetworkConfig&);
  void (*set)(NetworkConfig&, double);
};

const MetaField kMeta[] = {
    {"meta.unary_channels", [](const NetworkConfig& c) { return double(c.unary_channels); },
     [](NetworkConfig& c, double v) { c.unary_channels = std::int64_t(v); }},
    {"meta.gwc_groups", [](const NetworkConfig& c) { return double(c.gwc_groups); },
     [](NetworkConfig& c, double v) { c.gwc_groups = std::int64_t(v); }},
    {"meta.concat_channels", [](const NetworkConfig& c) { return double(c.concat_channels); },
     [](NetworkConfig& c, double v) { c.concat_channels = std::int64_t(v); }},
    {"meta.d_max", [](const NetworkConfig& c) { return double(c.d_max); },
     [](NetworkConfig& c, double v) { c.d_max = std::int64_t(v); }},
    {"meta.base_3d_channels", [](const NetworkConfig& c) { return double(c.base_3d_channels); },
     [](NetworkConfig& c, double v) { c.base_3d_channels = std::int64_t(v); }},
    {"meta.blocks1", [](const NetworkConfig& c) { return double(c.stage_blocks[0]); },
     [](NetworkConfig& c, double v) { c.stage_blocks[0] = int(v); }},
    {"meta.blocks2", [](const NetworkConfig& c) { return double(c.stage_blocks[1]); },
     [](NetworkConfig& c, double v) { c.stage_blocks[1] = int(v); }},
    {"meta.blocks3", [](const NetworkConfig& c) { return double(c.stage_blocks[2]); },
     [](NetworkConfig& c, double v) { c.stage_blocks[2] = int(v); }},
    {"meta.blocks4", [](const NetworkConfig& c) { return double(c.stage_blocks[3]); },
     [](NetworkConfig& c, double v) { c.stage_blocks[3] = int(v); }},
    {"meta.use_concat_volume", [](const NetworkConfig& c) { return c.use_concat_volume ? 1.0 : 0.0; },
     [](NetworkConfig& c, double v) { c.use_concat_volume = v != 0; }},
    {"meta.use_gwc_volume", [](const NetworkConfig& c) { return c.use_gwc_volume ? 1.0 : 0.0; },
     [](NetworkConfig& c, double v) { c.use_gwc_volume = v != 0; }},
    {"meta.num_hourglasses", [](const NetworkConfig& c) { return double(c.num_hourglasses); },
     [](NetworkConfig& c, double v) { c.num_hourglasses = int(v); }},
    {"meta.min_stem_channels", [](const NetworkConfig& c) { return double(c.min_stem_channels); },
     [](NetworkConfig& c, double v) { c.min_stem_channels = std::int64_t(v); }},
};

template <typename T>
ArchiveTensor to_archive(const std::string& name, const Tensor<T>& t) {
  ArchiveTensor a;
  a.name = name;
  a.shape = t.shape();
  if constexpr (std::is_same_v<T, float>) {
    a.dtype = DType::F32;
    a.f32.assign(t.data().begin(), t.data().end());
  } else {
    a.dtype = DType::F64;
    a.f64.assign(t.data().begin(), t.data().end());
  }
  return a;
}

template <typename T>
void copy_into(const ArchiveTensor& a, Tensor<T>& t) {
  if (a.shape != t.shape()) {
    throw ShapeError("checkpoint: tensor '" + a.name + "' has shape " + shape_str(a.shape) + ", model expects " +
                     shape_str(t.shape()));
  }
  auto dst = t.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = a.dtype == DType::F32 ? static_cast<T>(a.f32[i]) : static_cast<T>(a.f64[i]);
  }
}

}  // namespace

std::string encode_archive(const std::vector<ArchiveTensor>& tensors) {
  Writer w;
  w.raw("GWCT", 4);
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    const std::size_t n = t.numel();
    if ((t.dtype == DType::F32 ? t.f32.size() : t.f64.size()) != n) {
      throw ShapeError("checkpoint: tensor '" + t.name + "' data does not match its shape");
    }
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) w.u64(static_cast<std::uint64_t>(e));
    w.u32(static_cast<std::uint32_t>(t.dtype));
    if (t.dtype == DType::F32) {
      w.raw(t.f32.data(), n * 4);
    } else {
      w.raw(t.f64.data(), n * 8);
    }
  }
  return w.take();
}

std::vector<ArchiveTensor> decode_archive(const std::string& bytes) {
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, "GWCT", 4) != 0) throw ParseError("checkpoint: byte 0: bad magic, expected GWCT");
  const std::uint32_t version = r.u32("version");
  if (version != kArchiveVersion) {
    throw ParseError("checkpoint: byte 4: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<ArchiveTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    ArchiveTensor t;
    const std::uint32_t len = r.u32("name length");
    if (len > bytes.size()) throw ParseError("checkpoint: byte " + std::to_string(r.pos()) + ": bad name length");
    t.name.resize(len);
    r.raw(t.name.data(), len, "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw ParseError("checkpoint: byte " + std::to_string(r.pos()) + ": bad rank");
    std::uint64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t e = r.u64("extent");
      if (e > bytes.size()) throw ParseError("checkpoint: byte " + std::to_string(r.pos()) + ": bad extent");
      t.shape.push_back(static_cast<std::int64_t>(e));
      n *= e;
    }
    const std::size_t dtype_at = r.pos();
    const std::uint32_t dtype = r.u32("dtype");
    if (dtype == 0) {
      t.dtype = DType::F32;
      if (n * 4 > bytes.size()) throw ParseError("checkpoint: byte " + std::to_string(r.pos()) + ": truncated data");
      t.f32.resize(n);
      r.raw(t.f32.data(), n * 4, "data");
    } else if (dtype == 1) {
      t.dtype = DType::F64;
      if (n * 8 > bytes.size()) throw ParseError("checkpoint: byte " + std::to_string(r.pos()) + ": truncated data");
      t.f64.resize(n);
      r.raw(t.f64.data(), n * 8, "data");
    } else {
      throw ParseError("checkpoint: byte " + std::to_string(dtype_at) + ": unknown dtype " + std::to_string(dtype));
    }
    out.push_back(std::move(t));
  }
  if (!r.done()) throw ParseError("checkpoint: byte " + std::to_string(r.pos()) + ": trailing data");
  return out;
}

void write_archive(const std::string& path, const std::vector<ArchiveTensor>& tensors) {
  const std::string bytes = encode_archive(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ArchiveTensor> read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_archive(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

NetworkConfig checkpoint_config(const std::vector<ArchiveTensor>& archive) {
  std::map<std::string, const ArchiveTensor*> by_name;
  for (const auto& t : archive) by_name[t.name] = &t;
  NetworkConfig cfg;
  for (const auto& f : kMeta) {
    auto it = by_name.find(f.name);
    if (it == by_name.end()) throw ParseError(std::string("checkpoint: missing ") + f.name);
    const ArchiveTensor& t = *it->second;
    if (t.numel() != 1) throw ParseError(std::string("checkpoint: ") + f.name + " is not a scalar");
    f.set(cfg, t.dtype == DType::F64 ? t.f64[0] : t.f32[0]);
  }
  cfg.validate();
  return cfg;
}

template <typename T>
void save_checkpoint(const std::string& path, const GwcNet<T>& model) {
  std::vector<ArchiveTensor> out;
  for (const auto& f : kMeta) {
    ArchiveTensor m;
    m.name = f.name;
    m.dtype = DType::F64;
    m.f64 = {f.get(model.config())};
    out.push_back(std::move(m));
  }
  for (const auto& p : model.registry().parameters()) out.push_back(to_archive(p.name, p.tensor));
  for (const auto& b : model.registry().buffers()) out.push_back(to_archive(b.name, b.tensor));
  write_archive(path, out);
}

template <typename T>
std::unique_ptr<GwcNet<T>> load_checkpoint(const std::string& path) {
  const auto archive = read_archive(path);
  auto model = std::make_unique<GwcNet<T>>(checkpoint_config(archive), 0);
  std::map<std::string, const ArchiveTensor*> by_name;
  for (const auto& t : archive) by_name[t.name] = &t;
  auto load_all = [&](const std::vector<Parameter<T>>& items) {
    for (const auto& p : items) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw ParseError(path + ": missing tensor '" + p.name + "'");
      Tensor<T> t = p.tensor;
      copy_into(*it->second, t);
    }
  };
  load_all(model->registry().parameters());
  load_all(model->registry().buffers());
  return model;
}

template void save_checkpoint(const std::string&, const GwcNet<float>&);
template void save_checkpoint(const std::string&, const GwcNet<double>&);
template std::unique_ptr<GwcNet<float>> load_checkpoint(const std::string&);
template std::unique_ptr<GwcNet<double>> load_checkpoint(const std::string&);

}  // namespace gwc
