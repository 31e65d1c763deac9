#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "error.hpp"
#include "model.hpp"
#include "support.hpp"
#include "training.hpp"

using namespace tailcast;
using namespace tailcast::model;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

ModelConfig small_config(std::uint64_t seed = 3, AttentionBias bias = AttentionBias::LogBias) {
  ModelConfig c;
  c.mode = dataset::FeatureMode::Baseline;
  c.n_features = dataset::kBaseFeatures;
  c.c_in = 2;
  c.c_out = 3;
  c.hidden_dim = 8;
  c.n_heads = 2;
  c.attention_bias = bias;
  c.seed = seed;
  return c;
}

graph::Matrix random_adjacency(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  graph::Matrix a(n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1.5;
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = u(rng) < 0.3 ? 0.0 : 0.2 + u(rng);
  }
  return a;
}

Tensor random_input(std::size_t b, std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Tensor t(Shape{b, n, d});
  for (auto& v : t.values()) v = z(rng);
  return t;
}

Tensor run(const GatModel& m, const Tensor& x, const AttentionGraph& g) {
  ad::NoGradGuard no_grad;
  return m.forward(Var::constant(x), g).value();
}

TrainedModel trained_fixture() {
  TrainedModel t;
  t.model = GatModel(small_config(11));
  const std::size_t f = dataset::kBaseFeatures;
  t.norm.mean.assign(f, 0.25);
  t.norm.sd.assign(f, 1.5);
  t.norm.passthrough.assign(f, false);
  t.norm.passthrough[0] = true;
  t.station_ids = {"S1", "S2", "S3"};
  std::mt19937_64 rng(1);
  t.adjacency = random_adjacency(3, rng);
  t.station_weights = {1.0, 1.0, 1.0};
  t.t90 = {28.125, 31.0 / 3.0, 29.5};
  t.split = {Date(2021, 12, 31), Date(2022, 1, 1)};
  return t;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("outputs are probabilities strictly inside the unit interval") {
    std::mt19937_64 rng(1);
    const GatModel m(small_config());
    const auto g = make_attention_graph(random_adjacency(5, rng));
    Tensor x = random_input(4, 5, 2 * dataset::kBaseFeatures, rng);
    for (auto& v : x.values()) v *= 50.0;
    const auto p = run(m, x, g);
    CHECK(p.shape() == Shape{4, 5, 3});
    for (double v : p.values()) {
      REQUIRE(std::isfinite(v));
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
    }
  }

  TEST_CASE("joint permutation of stations permutes the predictions") {
    std::mt19937_64 rng(2);
    const std::size_t n = 6, d = 2 * dataset::kBaseFeatures;
    for (auto bias : {AttentionBias::LogBias, AttentionBias::MaskOnly}) {
      const GatModel m(small_config(5, bias));
      const auto a = random_adjacency(n, rng);
      const Tensor x = random_input(2, n, d, rng);
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      graph::Matrix pa(n);
      Tensor px(x.shape());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) pa(i, j) = a(perm[i], perm[j]);
        for (std::size_t b = 0; b < 2; ++b)
          for (std::size_t k = 0; k < d; ++k) px[(b * n + i) * d + k] = x[(b * n + perm[i]) * d + k];
      }
      const auto p = run(m, x, make_attention_graph(a));
      const auto pp = run(m, px, make_attention_graph(pa));
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t h = 0; h < 3; ++h)
            CHECK(std::abs(pp[(b * n + i) * 3 + h] - p[(b * n + perm[i]) * 3 + h]) < 1e-12);
    }
  }

  TEST_CASE("with only self loops a node ignores every other node") {
    std::mt19937_64 rng(3);
    const std::size_t n = 4, d = 2 * dataset::kBaseFeatures;
    const GatModel m(small_config(6, AttentionBias::MaskOnly));
    graph::Matrix a(n);
    for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
    const auto g = make_attention_graph(a);
    const Tensor x = random_input(1, n, d, rng);
    Tensor y(x);
    for (std::size_t k = d; k < n * d; ++k) y[k] += 3.0;
    const auto p = run(m, x, g), q = run(m, y, g);
    for (std::size_t h = 0; h < 3; ++h) CHECK(p[h] == q[h]);
    CHECK(p[3] != q[3]);
  }

  TEST_CASE("attention rows are distributions over positive neighbours") {
    std::mt19937_64 rng(4);
    const std::size_t n = 7;
    const GatModel m(small_config(7));
    const auto a = random_adjacency(n, rng);
    const auto g = make_attention_graph(a);
    const Tensor h = Tensor(Shape{n, 8}, random_input(1, n, 8, rng).vector());
    for (std::size_t layer = 0; layer < 2; ++layer) {
      const Tensor hl = layer == 0 ? h : Tensor(Shape{n, 16}, random_input(1, n, 16, rng).vector());
      for (std::size_t head = 0; head < 2; ++head) {
        const auto alpha = m.attention_coefficients(hl, layer, head, g);
        for (std::size_t i = 0; i < n; ++i) {
          double total = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double v = alpha[i * n + j];
            CHECK(v >= 0.0);
            if (a(i, j) == 0.0) CHECK(v == 0.0);
            total += v;
          }
          CHECK(std::abs(total - 1.0) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("two identical nodes attend equally") {
    const GatModel m(small_config(8));
    graph::Matrix a(2, 0.7);
    const auto g = make_attention_graph(a);
    std::mt19937_64 rng(5);
    const Tensor row = random_input(1, 1, 8, rng);
    Tensor h(Shape{2, 8});
    for (std::size_t k = 0; k < 8; ++k) h[k] = h[8 + k] = row[k];
    const auto alpha = m.attention_coefficients(h, 0, 0, g);
    for (double v : alpha.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  }

  TEST_CASE("log bias favours a strengthened edge and mask only ignores magnitudes") {
    std::mt19937_64 rng(6);
    const std::size_t n = 5;
    const auto a = random_adjacency(n, rng);
    const Tensor h = Tensor(Shape{n, 8}, random_input(1, n, 8, rng).vector());
    std::size_t j = 1;
    while (a(0, j) == 0.0) ++j;
    graph::Matrix doubled(a);
    doubled(0, j) *= 2.0;
    const GatModel lb(small_config(9, AttentionBias::LogBias));
    CHECK(lb.attention_coefficients(h, 0, 1, make_attention_graph(doubled))[j] >
          lb.attention_coefficients(h, 0, 1, make_attention_graph(a))[j]);

    graph::Matrix scaled(a);
    for (auto& v : scaled.data) v *= 10.0;
    const GatModel mo(small_config(9, AttentionBias::MaskOnly));
    CHECK(mo.attention_coefficients(h, 0, 1, make_attention_graph(scaled)) ==
          mo.attention_coefficients(h, 0, 1, make_attention_graph(a)));
  }

  TEST_CASE("isolated nodes and mismatched inputs are rejected") {
    graph::Matrix a(3, 0.0);
    a(0, 0) = a(1, 1) = 1.0;
    CHECK_THROWS_AS(make_attention_graph(a), Error);
    try {
      make_attention_graph(a);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::IsolatedNode);
    }
    const GatModel m(small_config());
    graph::Matrix ok(3, 1.0);
    try {
      run(m, Tensor(Shape{1, 3, 5}), make_attention_graph(ok));
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
  }

  TEST_CASE("initialisation is deterministic per seed") {
    const GatModel a(small_config(21)), b(small_config(21)), c(small_config(22));
    const auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
    REQUIRE(pa.size() == pb.size());
    bool differs = false;
    for (std::size_t k = 0; k < pa.size(); ++k) {
      CHECK(pa[k].first == pb[k].first);
      CHECK(pa[k].second.value() == pb[k].second.value());
      differs |= !(pa[k].second.value() == pc[k].second.value());
    }
    CHECK(differs);
  }

  TEST_CASE("a 64 by 64 layer is bounded by the Glorot limit") {
    auto c = small_config(4);
    c.hidden_dim = 64;
    c.n_heads = 1;
    const GatModel m(c);
    const auto& w = m.layer(1).weight[0].value();
    REQUIRE(w.shape() == Shape{64, 64});
    const double limit = std::sqrt(6.0 / 128.0);
    double largest = 0.0;
    for (double v : w.values()) largest = std::max(largest, std::abs(v));
    CHECK(largest <= limit);
    CHECK(largest > 0.9 * limit);
  }

  TEST_CASE("unit station weights reproduce the plain correlation graph") {
    std::mt19937_64 rng(7);
    const std::size_t n = 5;
    graph::Matrix rho(n, 1.0);
    std::uniform_real_distribution<double> u(-0.5, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) rho(i, j) = rho(j, i) = u(rng);
    const auto plain = graph::weighted_adjacency(rho, std::vector<double>(n, 1.0));
    graph::Matrix clamped(rho);
    for (auto& v : clamped.data) v = std::max(v, 0.0);
    const GatModel m(small_config(12));
    const Tensor x = random_input(3, n, 2 * dataset::kBaseFeatures, rng);
    CHECK(run(m, x, make_attention_graph(plain)) == run(m, x, make_attention_graph(clamped)));
  }

  TEST_CASE("model gradients pass the finite-difference check on six nodes") {
    std::mt19937_64 rng(8);
    ModelConfig c = small_config(13);
    c.mode = dataset::FeatureMode::Baseline;
    c.hidden_dim = 4;
    c.n_heads = 2;
    const GatModel m(c);
    const std::size_t n = 6;
    const auto g = make_attention_graph(random_adjacency(n, rng));
    const Tensor x = random_input(2, n, 2 * dataset::kBaseFeatures, rng);
    Tensor y(Shape{2, n, 3});
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = (k % 4 == 0) ? 1.0 : 0.0;
    const std::vector<double> w{1.2, 1.9, 1.0, 1.5, 2.0, 1.3};
    auto f = [&](const std::vector<Var>&) {
      return training::weighted_f1_loss(m.forward(Var::constant(x), g), y, w);
    };
    CHECK(ad::grad_check(f, m.parameters()) < 1e-4);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    const auto t = trained_fixture();
    const auto bytes = serialize_checkpoint(t);
    REQUIRE(bytes.size() > 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 6) == kCheckpointMagic);
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.model.config() == t.model.config());
    const auto pa = t.model.named_parameters(), pb = back.model.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k].second.value() == pb[k].second.value());
    CHECK(back.norm.mean == t.norm.mean);
    CHECK(back.norm.sd == t.norm.sd);
    CHECK(back.norm.passthrough == t.norm.passthrough);
    CHECK(back.station_ids == t.station_ids);
    CHECK(back.adjacency == t.adjacency);
    CHECK(back.t90 == t.t90);
    CHECK(back.split.train_end == t.split.train_end);
    CHECK(serialize_checkpoint(back) == bytes);
  }

  TEST_CASE("corrupted or truncated checkpoints are rejected") {
    const auto bytes = serialize_checkpoint(trained_fixture());
    auto kind = [](std::vector<std::uint8_t> b) {
      try {
        deserialize_checkpoint(b);
      } catch (const Error& e) {
        return e.kind();
      }
      return ErrorKind::Io;
    };
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    CHECK(kind(flipped) == ErrorKind::BadCheckpoint);
    CHECK(kind(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + bytes.size() / 3)) ==
          ErrorKind::BadCheckpoint);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK(kind(magic) == ErrorKind::BadCheckpoint);
  }

  TEST_CASE("invalid configurations are rejected") {
    auto c = small_config();
    c.n_features = dataset::kDiFeatures;
    CHECK_FALSE(validate(c).empty());
    c = small_config();
    c.n_heads = 0;
    CHECK_FALSE(validate(c).empty());
    CHECK(validate(small_config()).empty());
  }
}
