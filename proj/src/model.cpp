#include "model.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>
#include <random>

#include "error.hpp"

namespace tailcast::model {

using ad::Shape;
using ad::Tensor;
using ad::Var;

const char* to_string(AttentionBias b) noexcept { return b == AttentionBias::MaskOnly ? "mask_only" : "log_bias"; }

std::optional<AttentionBias> parse_attention_bias(std::string_view s) {
  if (s == "mask_only") return AttentionBias::MaskOnly;
  if (s == "log_bias") return AttentionBias::LogBias;
  return std::nullopt;
}

std::string validate(const ModelConfig& c) {
  if (c.c_in < 1 || c.c_out < 1) return "c_in and c_out must be >= 1";
  if (c.n_features != dataset::feature_count(c.mode))
    return std::string(dataset::to_string(c.mode)) + " mode needs " + std::to_string(dataset::feature_count(c.mode)) +
           " features, config has " + std::to_string(c.n_features);
  if (c.n_layers < 1) return "n_layers must be >= 1";
  if (c.hidden_dim < 1 || c.n_heads < 1) return "hidden_dim and n_heads must be >= 1";
  if (!(c.leaky_slope >= 0.0 && c.leaky_slope < 1.0)) return "leaky_slope must lie in [0, 1)";
  return {};
}

AttentionGraph make_attention_graph(const graph::Matrix& a) {
  AttentionGraph g;
  g.n = a.n;
  g.mask = Tensor(Shape{a.n, a.n}, 0.0);
  g.log_bias = Tensor(Shape{a.n, a.n}, 0.0);
  for (std::size_t i = 0; i < a.n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < a.n; ++j) {
      if (a(i, j) > 0.0) {
        g.mask[i * a.n + j] = 1.0;
        g.log_bias[i * a.n + j] = std::log(a(i, j));
        any = true;
      }
    }
    if (!any) throw Error(ErrorKind::IsolatedNode, "node " + std::to_string(i) + " has no positive adjacency entry");
  }
  return g;
}

namespace {

Var glorot(std::mt19937_64& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t(Shape{fan_in, fan_out});
  for (auto& v : t.values()) v = u(rng);
  return Var::parameter(std::move(t));
}

}  // namespace

GatModel::GatModel(const ModelConfig& c) : config_(c) {
  if (auto why = validate(c); !why.empty()) throw Error(ErrorKind::InvalidConfig, why);
  std::mt19937_64 rng(c.seed);
  const std::size_t in_dim = c.c_in * c.n_features;
  in_weight_ = glorot(rng, in_dim, c.hidden_dim);
  in_bias_ = Var::parameter(Tensor(Shape{c.hidden_dim}, 0.0));
  std::size_t d_in = c.hidden_dim;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    GatLayerParams layer;
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      layer.weight.push_back(glorot(rng, d_in, c.hidden_dim));
      // The attention vector [src; dst] is one 2H x 1 Glorot draw split in halves.
      Var a = glorot(rng, 2 * c.hidden_dim, 1);
      const auto& av = a.value().vector();
      layer.att_src.push_back(Var::parameter(Tensor(Shape{c.hidden_dim, 1},
                                                    std::vector<double>(av.begin(), av.begin() + c.hidden_dim))));
      layer.att_dst.push_back(Var::parameter(Tensor(Shape{c.hidden_dim, 1},
                                                    std::vector<double>(av.begin() + c.hidden_dim, av.end()))));
    }
    layers_.push_back(std::move(layer));
    d_in = c.hidden_dim * c.n_heads;
  }
  out_weight_ = glorot(rng, c.hidden_dim, c.c_out);
  out_bias_ = Var::parameter(Tensor(Shape{c.c_out}, 0.0));
}

Var GatModel::attention(const Var& wh, const Var& att_src, const Var& att_dst, const AttentionGraph& g) const {
  const Shape& s = wh.shape();  // [B, N, H]
  const Shape bn{s[0], s[1]};
  Var src = ad::reshape(ad::matmul(wh, att_src), bn);
  Var dst = ad::reshape(ad::matmul(wh, att_dst), bn);
  Var e = ad::leaky_relu(ad::pairwise_sum(src, dst), config_.leaky_slope);
  if (config_.attention_bias == AttentionBias::LogBias) e = ad::add(e, Var::constant(g.log_bias));
  return ad::masked_softmax(e, g.mask);
}

Var GatModel::logits(const Var& x_in, const AttentionGraph& g) const {
  Var x = x_in;
  if (x.value().rank() == 2) x = ad::reshape(x, Shape{1, x.shape()[0], x.shape()[1]});
  const Shape& s = x.shape();
  if (s.size() != 3 || s[1] != g.n || s[2] != config_.c_in * config_.n_features)
    throw Error(ErrorKind::ShapeMismatch, "model expects [B, " + std::to_string(g.n) + ", " +
                                              std::to_string(config_.c_in * config_.n_features) + "], got " +
                                              ad::shape_string(s));
  Var h = ad::leaky_relu(ad::add(ad::matmul(x, in_weight_), in_bias_), config_.leaky_slope);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    std::vector<Var> heads;
    for (std::size_t k = 0; k < config_.n_heads; ++k) {
      Var wh = ad::matmul(h, layer.weight[k]);
      Var alpha = attention(wh, layer.att_src[k], layer.att_dst[k], g);
      heads.push_back(ad::bmm(alpha, wh));
    }
    if (l + 1 < layers_.size()) {
      h = ad::leaky_relu(ad::concat_last_dim(heads), config_.leaky_slope);
    } else {
      Var acc = heads[0];
      for (std::size_t k = 1; k < heads.size(); ++k) acc = ad::add(acc, heads[k]);
      h = ad::leaky_relu(ad::scale(acc, 1.0 / static_cast<double>(heads.size())), config_.leaky_slope);
    }
  }
  return ad::add(ad::matmul(h, out_weight_), out_bias_);
}

Var GatModel::forward(const Var& x, const AttentionGraph& g) const { return ad::sigmoid(logits(x, g)); }

void window_to_node_rows(std::span<const double> window, std::size_t c_in, std::size_t n, std::size_t f,
                         std::span<double> out) {
  for (std::size_t t = 0; t < c_in; ++t)
    for (std::size_t s = 0; s < n; ++s)
      std::copy_n(window.data() + (t * n + s) * f, f, out.data() + s * c_in * f + t * f);
}

Tensor GatModel::predict_window(std::span<const double> window, const AttentionGraph& g) const {
  const std::size_t n = g.n, f = config_.n_features, c_in = config_.c_in, c_out = config_.c_out;
  if (window.size() != c_in * n * f)
    throw Error(ErrorKind::ShapeMismatch, "window has " + std::to_string(window.size()) + " values, expected " +
                                              std::to_string(c_in * n * f));
  Tensor x(Shape{1, n, c_in * f});
  window_to_node_rows(window, c_in, n, f, x.values());
  ad::NoGradGuard no_grad;
  const Tensor p = forward(Var::constant(std::move(x)), g).value();  // [1, N, C_out]
  Tensor out(Shape{c_out, n});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t h = 0; h < c_out; ++h) out[h * n + s] = p[s * c_out + h];
  return out;
}

Tensor GatModel::attention_coefficients(const Tensor& h, std::size_t layer, std::size_t head,
                                        const AttentionGraph& g) const {
  const auto& L = layers_.at(layer);
  if (h.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "embeddings must be [N, d]");
  ad::NoGradGuard no_grad;
  Var hv = Var::constant(Tensor(Shape{1, h.dim(0), h.dim(1)}, h.vector()));
  Var wh = ad::matmul(hv, L.weight.at(head));
  Tensor a = attention(wh, L.att_src[head], L.att_dst[head], g).value();
  return Tensor(Shape{g.n, g.n}, a.vector());
}

std::vector<std::pair<std::string, Var>> GatModel::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out{{"input.weight", in_weight_}, {"input.bias", in_bias_}};
  for (std::size_t l = 0; l < layers_.size(); ++l)
    for (std::size_t h = 0; h < layers_[l].weight.size(); ++h) {
      const std::string p = "layer" + std::to_string(l) + ".head" + std::to_string(h) + ".";
      out.emplace_back(p + "weight", layers_[l].weight[h]);
      out.emplace_back(p + "att_src", layers_[l].att_src[h]);
      out.emplace_back(p + "att_dst", layers_[l].att_dst[h]);
    }
  out.emplace_back("head.weight", out_weight_);
  out.emplace_back("head.bias", out_bias_);
  return out;
}

std::vector<Var> GatModel::parameters() const {
  std::vector<Var> out;
  for (auto& [name, v] : named_parameters()) out.push_back(v);
  return out;
}

// --- checkpoint ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    le(static_cast<std::uint64_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    le(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) le(static_cast<std::uint64_t>(d));
    for (double v : t.values()) f64(v);
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw Error(ErrorKind::BadCheckpoint, "truncated checkpoint");
  }
  template <class T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str() {
    const auto n = le<std::uint64_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const auto rank = le<std::uint32_t>();
    if (rank > 8) throw Error(ErrorKind::BadCheckpoint, "implausible tensor rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = le<std::uint64_t>();
    const std::size_t count = ad::shape_size(shape);
    need(count * 8);
    std::vector<double> v(count);
    for (auto& x : v) x = f64();
    return {std::move(name), Tensor(std::move(shape), std::move(v))};
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

json config_json(const TrainedModel& m) {
  const auto& c = m.model.config();
  json j;
  j["format_version"] = 1;
  j["mode"] = dataset::to_string(c.mode);
  j["c_in"] = c.c_in;
  j["c_out"] = c.c_out;
  j["n_features"] = c.n_features;
  j["n_layers"] = c.n_layers;
  j["hidden_dim"] = c.hidden_dim;
  j["n_heads"] = c.n_heads;
  j["attention_bias"] = to_string(c.attention_bias);
  j["leaky_slope"] = c.leaky_slope;
  j["seed"] = c.seed;
  j["station_ids"] = m.station_ids;
  std::vector<int> pass;
  for (bool b : m.norm.passthrough) pass.push_back(b ? 1 : 0);
  j["norm_passthrough"] = pass;
  j["train_end"] = m.split.train_end.iso();
  j["val_start"] = m.split.val_start.iso();
  return j;
}

constexpr std::size_t kDescriptorCols = 9;

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const TrainedModel& m) {
  Writer w;
  w.bytes(kCheckpointMagic, 6);
  w.str(config_json(m).dump());
  const std::size_t n = m.station_ids.size();
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (const auto& [name, v] : m.model.named_parameters()) tensors.emplace_back("param." + name, v.value());
  tensors.emplace_back("norm.mean", Tensor(Shape{m.norm.mean.size()}, m.norm.mean));
  tensors.emplace_back("norm.sd", Tensor(Shape{m.norm.sd.size()}, m.norm.sd));
  tensors.emplace_back("graph.adjacency", Tensor(Shape{m.adjacency.n, m.adjacency.n}, m.adjacency.data));
  tensors.emplace_back("graph.weights", Tensor(Shape{m.station_weights.size()}, m.station_weights));
  tensors.emplace_back("station.t90", Tensor(Shape{m.t90.size()}, m.t90));
  std::vector<double> desc;
  for (const auto& d : m.descriptors)
    desc.insert(desc.end(), {d.threshold_u, d.xi, d.sigma, d.mu, d.variance, d.q95, static_cast<double>(d.n_exceed),
                             d.converged ? 1.0 : 0.0, d.hit_clamp ? 1.0 : 0.0});
  tensors.emplace_back("station.descriptors", Tensor(Shape{m.descriptors.size(), kDescriptorCols}, desc));
  (void)n;
  w.le(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) w.tensor(name, t);
  auto& buf = w.buffer();
  const auto crc = static_cast<std::uint32_t>(::crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
  w.le(crc);
  return std::move(buf);
}

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(m);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint " + path.string());
}

TrainedModel deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kCheckpointMagic, 6) != 0)
    throw Error(ErrorKind::BadCheckpoint, "missing DIGNN1 magic");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  const auto actual = static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(body)));
  if (stored != actual) throw Error(ErrorKind::BadCheckpoint, "checksum mismatch");

  Reader r(bytes.subspan(0, body));
  r.need(6);
  (void)r.le<std::uint32_t>();
  (void)r.le<std::uint16_t>();
  json j;
  try {
    j = json::parse(r.str());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("config block: ") + e.what());
  }
  if (j.value("format_version", 0) != 1) throw Error(ErrorKind::BadCheckpoint, "unsupported format version");

  TrainedModel m;
  ModelConfig c;
  try {
    const auto mode = dataset::parse_feature_mode(j.at("mode").get<std::string>());
    const auto bias = parse_attention_bias(j.at("attention_bias").get<std::string>());
    if (!mode || !bias) throw Error(ErrorKind::BadCheckpoint, "bad mode or attention_bias");
    c.mode = *mode;
    c.attention_bias = *bias;
    c.c_in = j.at("c_in");
    c.c_out = j.at("c_out");
    c.n_features = j.at("n_features");
    c.n_layers = j.at("n_layers");
    c.hidden_dim = j.at("hidden_dim");
    c.n_heads = j.at("n_heads");
    c.leaky_slope = j.at("leaky_slope");
    c.seed = j.at("seed");
    m.station_ids = j.at("station_ids").get<std::vector<std::string>>();
    for (int b : j.at("norm_passthrough").get<std::vector<int>>()) m.norm.passthrough.push_back(b != 0);
    const auto te = Date::parse(j.at("train_end").get<std::string>());
    const auto vs = Date::parse(j.at("val_start").get<std::string>());
    if (!te || !vs) throw Error(ErrorKind::BadCheckpoint, "bad split dates");
    m.split = {*te, *vs};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("config block: ") + e.what());
  }
  m.model = GatModel(c);

  std::map<std::string, Tensor> tensors;
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) tensors.insert(r.tensor());
  if (r.pos() != body) throw Error(ErrorKind::BadCheckpoint, "trailing bytes before checksum");

  auto take = [&](const std::string& name) -> Tensor& {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorKind::BadCheckpoint, "missing tensor " + name);
    return it->second;
  };
  for (auto& [name, v] : m.model.named_parameters()) {
    Tensor& t = take("param." + name);
    if (t.shape() != v.shape())
      throw Error(ErrorKind::BadCheckpoint, name + " has shape " + ad::shape_string(t.shape()) + ", config implies " +
                                                ad::shape_string(v.shape()));
    Var(v).mutable_value() = t;
  }
  m.norm.mean = take("norm.mean").vector();
  m.norm.sd = take("norm.sd").vector();
  const Tensor& adj = take("graph.adjacency");
  m.adjacency = graph::Matrix(adj.rank() == 2 ? adj.dim(0) : 0);
  m.adjacency.data = adj.vector();
  m.station_weights = take("graph.weights").vector();
  m.t90 = take("station.t90").vector();
  const Tensor& desc = take("station.descriptors");
  for (std::size_t i = 0; desc.rank() == 2 && i < desc.dim(0); ++i) {
    const double* d = desc.data() + i * kDescriptorCols;
    evt::GpdDescriptors g;
    g.threshold_u = d[0];
    g.xi = d[1];
    g.sigma = d[2];
    g.mu = d[3];
    g.variance = d[4];
    g.q95 = d[5];
    g.n_exceed = static_cast<std::size_t>(d[6]);
    g.converged = d[7] != 0.0;
    g.hit_clamp = d[8] != 0.0;
    m.descriptors.push_back(g);
  }
  const std::size_t n = m.station_ids.size();
  if (m.adjacency.n != n || m.station_weights.size() != n || m.t90.size() != n ||
      m.norm.mean.size() != c.n_features || m.norm.sd.size() != c.n_features ||
      m.norm.passthrough.size() != c.n_features)
    throw Error(ErrorKind::BadCheckpoint, "inconsistent station or feature dimensions");
  return m;
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace tailcast::model
