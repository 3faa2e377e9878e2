#include "condense/dataio.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "condense/rng.hpp"

namespace condense {

// ---------------------------------------------------------------------------
// synthetic data

namespace {

struct Palette {
  float r, g, b;
};

constexpr Palette kClassColors[3] = {
    {-0.85f, -0.80f, -0.75f},  // background
    {0.90f, 0.20f, -0.40f},
    {-0.50f, 0.70f, 0.90f},
};

}  // namespace

std::vector<PairedSample> gen_synthetic_pairs(uint64_t seed, int n, int size) {
  if (n < 0) throw ConfigError("sample count must be non-negative");
  if (size < 1) throw ConfigError("sample size must be positive");
  Rng rng(seed);
  std::vector<PairedSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int s = 0; s < n; ++s) {
    std::vector<int> cls(static_cast<size_t>(size) * size, 0);
    std::vector<float> shade(static_cast<size_t>(size) * size, 1.0f);
    const int shapes = 1 + rng.uniform_int(3);
    for (int sh = 0; sh < shapes; ++sh) {
      const bool ellipse = rng.uniform() < 0.5;
      const int klass = 1 + rng.uniform_int(2);
      const double cx = rng.uniform(0.2, 0.8) * size;
      const double cy = rng.uniform(0.2, 0.8) * size;
      const double rx = rng.uniform(0.10, 0.30) * size;
      const double ry = rng.uniform(0.10, 0.30) * size;
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double dx = (x + 0.5 - cx) / rx;
          const double dy = (y + 0.5 - cy) / ry;
          // normalized distance from the shape center, 1 at the boundary
          const double d = ellipse ? std::sqrt(dx * dx + dy * dy)
                                   : std::max(std::fabs(dx), std::fabs(dy));
          if (d > 1.0) continue;
          const size_t i = static_cast<size_t>(y) * size + x;
          cls[i] = klass;
          shade[i] = 1.0f - 0.3f * static_cast<float>(d);
        }
      }
    }
    PairedSample sample;
    sample.mask = Tensor({1, 3, size, size});
    sample.image = Tensor({1, 3, size, size});
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const size_t i = static_cast<size_t>(y) * size + x;
        const int c = cls[i];
        sample.mask.at(0, c, y, x) = 1.0f;
        const Palette& p = kClassColors[c];
        sample.image.at(0, 0, y, x) = p.r * shade[i];
        sample.image.at(0, 1, y, x) = p.g * shade[i];
        sample.image.at(0, 2, y, x) = p.b * shade[i];
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint serialization

namespace {

constexpr char kMagic[8] = {'C', 'N', 'D', 'S', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void f32_array(const float* p, int64_t n) {
    for (int64_t i = 0; i < n; ++i) f32(p[i]);
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(data_[pos_++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void f32_array(float* p, int64_t n) {
    for (int64_t i = 0; i < n; ++i) p[i] = f32();
  }
  void raw(char* dst, size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size()) throw CorruptionError("checkpoint file is truncated");
  }
  std::vector<char> data_;
  size_t pos_ = 0;
};

uint8_t act_code(Act a) {
  switch (a) {
    case Act::none: return 0;
    case Act::relu: return 1;
    case Act::leaky_relu: return 2;
    case Act::tanh: return 3;
    case Act::sigmoid: return 4;
  }
  return 0;
}

Act act_from_code(uint8_t c) {
  switch (c) {
    case 0: return Act::none;
    case 1: return Act::relu;
    case 2: return Act::leaky_relu;
    case 3: return Act::tanh;
    case 4: return Act::sigmoid;
    default: throw CorruptionError("unknown activation code " + std::to_string(c));
  }
}

void write_tensor(ByteWriter& w, const Tensor& t) {
  w.u32(static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<uint32_t>(t.dim(i)));
  w.u64(static_cast<uint64_t>(t.size()));
  w.f32_array(t.data(), t.size());
}

Tensor read_tensor(ByteReader& r) {
  const uint32_t rank = r.u32();
  if (rank > 4) throw CorruptionError("tensor rank " + std::to_string(rank) + " exceeds 4");
  std::vector<int> shape;
  shape.reserve(rank);
  for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(r.u32()));
  const uint64_t numel = r.u64();
  if (static_cast<int64_t>(numel) != shape_numel(shape)) {
    throw CorruptionError("tensor length does not match the product of its shape");
  }
  Tensor t(shape);
  r.f32_array(t.data(), t.size());
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  validate_graph(ckpt.graph);
  if (ckpt.optimizer &&
      ckpt.optimizer->first_moment.size() != ckpt.graph.weights.size()) {
    throw StateError("optimizer state does not match the graph's parameter list");
  }
  ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<uint8_t>(c));
  w.u32(kVersion);
  w.u64(ckpt.seed);
  w.u32(static_cast<uint32_t>(ckpt.metadata.size()));
  for (const auto& [key, value] : ckpt.metadata) {
    w.str(key);
    w.str(value);
  }
  const NetworkGraph& g = ckpt.graph;
  w.u32(static_cast<uint32_t>(g.input_channels));
  w.u32(static_cast<uint32_t>(g.layers.size()));
  for (const LayerSpec& l : g.layers) {
    w.i32(l.id);
    w.u8(l.kind == LayerKind::conv ? 0 : 1);
    w.i32(l.in_ch);
    w.i32(l.out_ch);
    w.i32(l.kernel);
    w.i32(l.stride);
    w.i32(l.padding);
    w.u8(act_code(l.activation));
    w.f32(l.leaky_slope);
    w.u8(l.instance_norm ? 1 : 0);
    w.u32(static_cast<uint32_t>(l.input_sources.size()));
    for (int s : l.input_sources) w.i32(s);
  }
  w.u32(static_cast<uint32_t>(g.skip_edges.size()));
  for (const auto& [p, c] : g.skip_edges) {
    w.i32(p);
    w.i32(c);
  }
  for (const VarPtr& weight : g.weights) write_tensor(w, weight->value);
  w.u8(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const AdamState& s = *ckpt.optimizer;
    w.u64(static_cast<uint64_t>(s.step_count));
    w.f64(s.learning_rate);
    w.f64(s.beta1);
    w.f64(s.beta2);
    w.f64(s.epsilon);
    for (size_t i = 0; i < s.first_moment.size(); ++i) {
      w.u64(static_cast<uint64_t>(s.first_moment[i].size()));
      w.f32_array(s.first_moment[i].data(), s.first_moment[i].size());
      w.f32_array(s.second_moment[i].data(), s.second_moment[i].size());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint path for writing: " + path);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(std::move(data));
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  const uint32_t version = r.u32();
  if (version > kVersion) {
    throw UnsupportedVersionError("checkpoint version " + std::to_string(version) +
                                  " is newer than this build supports");
  }
  Checkpoint ckpt;
  ckpt.seed = r.u64();
  const uint32_t n_meta = r.u32();
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string key = r.str();
    std::string value = r.str();
    ckpt.metadata.emplace(std::move(key), std::move(value));
  }
  NetworkGraph& g = ckpt.graph;
  g.input_channels = static_cast<int>(r.u32());
  const uint32_t n_layers = r.u32();
  g.layers.reserve(n_layers);
  for (uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.id = r.i32();
    l.kind = r.u8() == 0 ? LayerKind::conv : LayerKind::conv_transpose;
    l.in_ch = r.i32();
    l.out_ch = r.i32();
    l.kernel = r.i32();
    l.stride = r.i32();
    l.padding = r.i32();
    l.activation = act_from_code(r.u8());
    l.leaky_slope = r.f32();
    l.instance_norm = r.u8() != 0;
    const uint32_t n_sources = r.u32();
    l.input_sources.reserve(n_sources);
    for (uint32_t s = 0; s < n_sources; ++s) l.input_sources.push_back(r.i32());
    g.layers.push_back(std::move(l));
  }
  const uint32_t n_skip = r.u32();
  for (uint32_t i = 0; i < n_skip; ++i) {
    const int p = r.i32();
    const int c = r.i32();
    g.skip_edges.emplace_back(p, c);
  }
  g.weights.reserve(n_layers);
  for (uint32_t i = 0; i < n_layers; ++i) g.weights.push_back(make_param(read_tensor(r)));
  if (r.u8() != 0) {
    AdamState s;
    s.step_count = static_cast<int64_t>(r.u64());
    s.learning_rate = r.f64();
    s.beta1 = r.f64();
    s.beta2 = r.f64();
    s.epsilon = r.f64();
    for (uint32_t i = 0; i < n_layers; ++i) {
      const uint64_t numel = r.u64();
      if (static_cast<int64_t>(numel) != g.weights[i]->value.size()) {
        throw CorruptionError("optimizer moment length does not match its parameter tensor");
      }
      Tensor m(g.weights[i]->value.shape());
      Tensor v(g.weights[i]->value.shape());
      r.f32_array(m.data(), m.size());
      r.f32_array(v.data(), v.size());
      s.first_moment.push_back(std::move(m));
      s.second_moment.push_back(std::move(v));
    }
    ckpt.optimizer = std::move(s);
  }
  if (!r.exhausted()) throw CorruptionError("checkpoint has trailing bytes");
  validate_graph(ckpt.graph);
  return ckpt;
}

// ---------------------------------------------------------------------------
// CSV reports

void write_report(const std::string& path, const ReportTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open report path for writing: " + path);
  for (size_t i = 0; i < table.header.size(); ++i) {
    if (i) out << ',';
    out << table.header[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) {
      throw StateError("report row width does not match its header");
    }
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing report: " + path);
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string format_int(int64_t v) { return std::to_string(v); }

std::string digest_hex(const std::string& payload) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace condense
