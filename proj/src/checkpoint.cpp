#include "leand/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace leand {
namespace {

constexpr std::string_view kMagic{"LEANDMDL", 8};

constexpr std::uint32_t tag(const char (&s)[5]) {
  return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
         static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
}

constexpr std::uint32_t kScaler = tag("SCAL");
constexpr std::uint32_t kAutoencoder = tag("AUTO");
constexpr std::uint32_t kFeatureMap = tag("FMAP");
constexpr std::uint32_t kDensity = tag("DENS");
constexpr std::uint32_t kScalars = tag("META");

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void index(Index v) { u64(static_cast<std::uint64_t>(v)); }
  void text(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void vec(const Vector& v) {
    index(v.size());
    for (Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  void mat(const Matrix& m) {
    index(m.rows());
    index(m.cols());
    for (Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  void section(std::uint32_t id, const Writer& body) {
    u32(id);
    u64(body.out_.size());
    out_.append(body.out_);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  bool done() const { return pos_ == in_.size(); }
  std::string_view take(std::size_t n) {
    if (in_.size() - pos_ < n) throw IoError("checkpoint truncated");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Index index() {
    const auto v = u64();
    if (v > (std::uint64_t{1} << 40)) throw IoError("checkpoint size field out of range");
    return static_cast<Index>(v);
  }
  std::string text() { return std::string(take(static_cast<std::size_t>(index()))); }
  Vector vec() {
    Vector v(index());
    for (Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
  Matrix mat() {
    const Index r = index();
    const Index c = index();
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

Writer write_autoencoder(const AutoencoderParams& p) {
  Writer w;
  w.index(p.arch.input_dim);
  w.u64(p.arch.encoder_sizes.size());
  for (Index s : p.arch.encoder_sizes) w.index(s);
  w.text(to_string(p.arch.activation));
  w.u8(p.arch.allow_overcomplete ? 1 : 0);
  w.u64(p.seed);
  w.u64(p.layers.size());
  for (const auto& layer : p.layers) {
    w.mat(layer.weight);
    w.vec(layer.bias);
    w.text(to_string(layer.activation));
  }
  return w;
}

AutoencoderParams read_autoencoder(Reader& r) {
  AutoencoderParams p;
  p.arch.input_dim = r.index();
  const auto depth = r.u64();
  if (depth > 1024) throw IoError("checkpoint: implausible encoder depth");
  for (std::uint64_t i = 0; i < depth; ++i) p.arch.encoder_sizes.push_back(r.index());
  p.arch.activation = parse_activation(r.text());
  p.arch.allow_overcomplete = r.u8() != 0;
  p.seed = r.u64();
  const auto layers = r.u64();
  if (layers != 2 * depth) throw IoError("checkpoint: layer count does not match architecture");
  const auto widths = p.arch.layer_widths();
  for (std::uint64_t k = 0; k < layers; ++k) {
    DenseLayer layer;
    layer.weight = r.mat();
    layer.bias = r.vec();
    layer.activation = parse_activation(r.text());
    if (layer.weight.cols() != widths[k] || layer.weight.rows() != widths[k + 1] || layer.bias.size() != widths[k + 1]) {
      throw IoError("checkpoint: layer " + std::to_string(k) + " has inconsistent shape");
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

}  // namespace

std::string serialize(const LeandModel& model) {
  Writer out;
  out.raw(kMagic);
  out.u32(kCheckpointVersion);

  Writer scaler;
  scaler.vec(model.scaler.mean);
  scaler.vec(model.scaler.scale);
  out.section(kScaler, scaler);

  out.section(kAutoencoder, write_autoencoder(model.autoencoder));

  Writer map;
  map.mat(model.feature_map.weights);
  map.vec(model.feature_map.offsets);
  map.f64(model.feature_map.scaling);
  map.f64(model.feature_map.gamma);
  out.section(kFeatureMap, map);

  Writer density;
  density.mat(model.density.eigvecs);
  density.vec(model.density.eigvals);
  density.f64(model.density.normalizer);
  density.f64(model.density.gamma);
  out.section(kDensity, density);

  Writer scalars;
  scalars.f64(model.alpha);
  scalars.f64(model.reconstruction_weight);
  scalars.f64(model.anomaly_rate);
  scalars.f64(model.tau);
  scalars.u64(model.seed);
  out.section(kScalars, scalars);
  return out.take();
}

LeandModel deserialize(std::string_view bytes) {
  Reader in(bytes);
  if (bytes.size() < kMagic.size() || in.take(kMagic.size()) != kMagic) throw IoError("not a model checkpoint");
  const auto version = in.u32();
  if (version == 0 || version > kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::uint32_t, std::string_view> sections;
  while (!in.done()) {
    const auto id = in.u32();
    const auto size = in.u64();
    if (size > bytes.size()) throw IoError("checkpoint truncated");
    sections[id] = in.take(static_cast<std::size_t>(size));
  }
  auto body = [&](std::uint32_t id, const char* name) {
    const auto it = sections.find(id);
    if (it == sections.end()) throw IoError(std::string("checkpoint missing section ") + name);
    return Reader(it->second);
  };

  LeandModel m;
  {
    auto r = body(kScaler, "SCAL");
    m.scaler.mean = r.vec();
    m.scaler.scale = r.vec();
  }
  {
    auto r = body(kAutoencoder, "AUTO");
    m.autoencoder = read_autoencoder(r);
  }
  {
    auto r = body(kFeatureMap, "FMAP");
    m.feature_map.weights = r.mat();
    m.feature_map.offsets = r.vec();
    m.feature_map.scaling = r.f64();
    m.feature_map.gamma = r.f64();
  }
  {
    auto r = body(kDensity, "DENS");
    m.density.eigvecs = r.mat();
    m.density.eigvals = r.vec();
    m.density.normalizer = r.f64();
    m.density.gamma = r.f64();
  }
  {
    auto r = body(kScalars, "META");
    m.alpha = r.f64();
    m.reconstruction_weight = r.f64();
    m.anomaly_rate = r.f64();
    m.tau = r.f64();
    m.seed = r.u64();
  }
  const Index d = m.autoencoder.arch.input_dim;
  const Index p = m.autoencoder.arch.latent_dim();
  if (m.scaler.mean.size() != d || m.scaler.scale.size() != d || m.feature_map.input_dim() != p + 2 ||
      m.feature_map.offsets.size() != m.feature_map.dim() || m.density.dim() != m.feature_map.dim() ||
      m.density.eigvals.size() != m.density.rank()) {
    throw IoError("checkpoint components have inconsistent dimensions");
  }
  return m;
}

void save_model(const LeandModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

LeandModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

}  // namespace leand
