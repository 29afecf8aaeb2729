#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lmk/encoder.hpp"
#include "lmk/model.hpp"
#include "lmk/rope.hpp"

using namespace lmk;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Written out independently of rope.cpp.
std::vector<double> rotate_oracle(const std::vector<double>& v, double m, double base) {
  const std::size_t d = v.size();
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d / 2; ++j) {
    const double theta = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(d));
    const double c = std::cos(m * theta), s = std::sin(m * theta);
    out[2 * j] = c * v[2 * j] - s * v[2 * j + 1];
    out[2 * j + 1] = s * v[2 * j] + c * v[2 * j + 1];
  }
  return out;
}

std::vector<double> layer_norm_row(const Matrix& x, Eigen::Index r, const Matrix& g,
                                   const Matrix& b) {
  const auto n = static_cast<std::size_t>(x.cols());
  double mean = 0.0;
  for (std::size_t c = 0; c < n; ++c) mean += x(r, static_cast<Eigen::Index>(c));
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double d = x(r, static_cast<Eigen::Index>(c)) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  std::vector<double> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    const auto cc = static_cast<Eigen::Index>(c);
    out[c] = (x(r, cc) - mean) / std::sqrt(var + 1e-5) * g(0, cc) + b(0, cc);
  }
  return out;
}

EncoderConfig tiny_config(std::size_t layers = 1) {
  EncoderConfig c;
  c.layers = layers;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_head = 4;
  c.ffn_dim = 16;
  c.vocab_size = 30;
  return c;
}

TokenSequence seq_of(std::vector<TokenId> ids) {
  TokenSequence s;
  s.ids = std::move(ids);
  s.mask.assign(s.ids.size(), 1);
  return s;
}

}  // namespace

TEST_CASE("rope frequencies") {
  const auto t = rope_frequencies(64, 10000.0);
  REQUIRE(t.size() == 32);
  CHECK(t[0] == 1.0);
  for (std::size_t j = 1; j < t.size(); ++j) CHECK(t[j] < t[j - 1]);
  // 10000^(-62/64) = 10^(-3.875)
  CHECK(t[31] == doctest::Approx(1.333521432163324e-4).epsilon(1e-12));
  for (double x : rope_frequencies(16, 1.0)) CHECK(x == 1.0);
  CHECK_THROWS(rope_frequencies(7, 10000.0));
  CHECK_THROWS(rope_frequencies(8, 0.0));
}

TEST_CASE("rotation identities") {
  Rng rng(5);
  const auto theta = rope_frequencies(16, 10000.0);
  const auto v = random_vec(rng, 16);
  CHECK(rotate(v, 0.0, theta) == v);
  CHECK_THROWS(rotate(random_vec(rng, 15), 1.0, theta));
  for (int i = 0; i < 200; ++i) {
    const auto x = random_vec(rng, 16);
    const double m = std::uniform_real_distribution<double>(-500, 500)(rng);
    const double n = std::uniform_real_distribution<double>(-500, 500)(rng);
    const auto r = rotate(x, m, theta);
    CHECK(std::sqrt(dot(r, r)) == doctest::Approx(std::sqrt(dot(x, x))).epsilon(1e-9));
    const auto twice = rotate(r, n, theta);
    const auto once = rotate(x, m + n, theta);
    for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(twice[c] - once[c]) < 1e-6);
    const auto oracle = rotate_oracle(x, m, 10000.0);
    for (std::size_t c = 0; c < 16; ++c) CHECK(std::abs(r[c] - oracle[c]) < 1e-9);
  }
}

TEST_CASE("relative-position identity") {
  Rng rng(9);
  const auto theta = rope_frequencies(32, 10000.0);
  for (int i = 0; i < 200; ++i) {
    const auto q = random_vec(rng, 32), k = random_vec(rng, 32);
    const double m = std::uniform_int_distribution<int>(0, 4096)(rng);
    const double n = std::uniform_int_distribution<int>(0, 4096)(rng);
    const double lhs = dot(rotate(q, m, theta), rotate(k, n, theta));
    const double rhs = dot(q, rotate(k, n - m, theta));
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("config validation") {
  EncoderConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.d_head = 3;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.n_heads = 3;
  CHECK_THROWS(c.validate());
  c = tiny_config();
  c.rope_base = -1.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("first-layer logits match a standalone oracle") {
  const EncoderConfig cfg = tiny_config(2);
  Rng rng(1);
  const EncoderParams p = EncoderParams::init(cfg, rng);
  const auto seq = seq_of({0, 7, 12, 5, 9, 1});
  const HiddenStates h = forward(seq, p, cfg, true);
  REQUIRE(h.trace);
  const auto& layer = p.layers[0];
  Matrix x(static_cast<Eigen::Index>(seq.size()), 8);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = p.token_embedding.row(seq.ids[i]);
  }
  for (std::size_t head = 0; head < 2; ++head) {
    for (std::size_t m = 0; m < seq.size(); ++m) {
      for (std::size_t n = 0; n < seq.size(); ++n) {
        const auto lm = layer_norm_row(x, static_cast<Eigen::Index>(m), layer.ln1_gamma, layer.ln1_beta);
        const auto ln = layer_norm_row(x, static_cast<Eigen::Index>(n), layer.ln1_gamma, layer.ln1_beta);
        std::vector<double> q(4, 0.0), k(4, 0.0);
        for (std::size_t c = 0; c < 4; ++c) {
          for (std::size_t r = 0; r < 8; ++r) {
            q[c] += lm[r] * layer.wq(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(head * 4 + c));
            k[c] += ln[r] * layer.wk(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(head * 4 + c));
          }
        }
        const double expected =
            dot(q, rotate_oracle(k, static_cast<double>(n) - static_cast<double>(m), cfg.rope_base)) / 2.0;
        CHECK(std::abs(h.trace->logits[0][head](static_cast<Eigen::Index>(m),
                                                static_cast<Eigen::Index>(n)) - expected) < 1e-6);
      }
    }
  }
}

TEST_CASE("attention rows sum to one and logits are translation invariant") {
  const EncoderConfig cfg = tiny_config(2);
  Rng rng(2);
  const EncoderParams p = EncoderParams::init(cfg, rng);
  const auto seq = pad_to(seq_of({0, 3, 4, 5, 6, 1}), 8, SpecialIds{}.pad);
  const HiddenStates a = forward(seq, p, cfg, true, 0.0);
  const HiddenStates b = forward(seq, p, cfg, true, 1234.0);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t h = 0; h < 2; ++h) {
      const Matrix& w = a.trace->weights[l][h];
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        CHECK(w.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(w(r, 6) == 0.0);
        CHECK(w(r, 7) == 0.0);
      }
      const Matrix& la = a.trace->logits[l][h];
      const Matrix& lb = b.trace->logits[l][h];
      for (Eigen::Index r = 0; r < la.rows(); ++r) {
        for (Eigen::Index c = 0; c < 6; ++c) CHECK(std::abs(la(r, c) - lb(r, c)) < 1e-6);
      }
    }
  }
}

TEST_CASE("padding has no influence on real positions") {
  const EncoderConfig cfg = tiny_config(2);
  Rng rng(3);
  EncoderParams p = EncoderParams::init(cfg, rng);
  const auto seq = pad_to(seq_of({0, 8, 9, 10, 1}), 9, SpecialIds{}.pad);
  const Matrix before = forward(seq, p, cfg).states;
  p.token_embedding.row(SpecialIds{}.pad) *= -7.5;
  p.token_embedding.row(SpecialIds{}.pad).array() += 3.0;
  const Matrix after = forward(seq, p, cfg).states;
  for (Eigen::Index r = 0; r < 5; ++r) CHECK(before.row(r) == after.row(r));
}

TEST_CASE("zeroed mixing leaves normalised embeddings") {
  const EncoderConfig cfg = tiny_config(1);
  Rng rng(4);
  EncoderParams p = EncoderParams::init(cfg, rng);
  p.layers[0].wo.setZero();
  p.layers[0].w2.setZero();
  p.layers[0].b2.setZero();
  const auto seq = seq_of({0, 11, 12, 1});
  const Matrix out = forward(seq, p, cfg).states;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    Matrix row = p.token_embedding.row(seq.ids[i]);
    const auto expected = layer_norm_row(row, 0, p.final_gamma, p.final_beta);
    for (Eigen::Index c = 0; c < 8; ++c) {
      CHECK(std::abs(out(static_cast<Eigen::Index>(i), c) - expected[static_cast<std::size_t>(c)]) < 1e-12);
    }
  }
}

TEST_CASE("forward shape, determinism and id errors") {
  const EncoderConfig cfg = tiny_config(2);
  Rng rng(6);
  const EncoderParams p = EncoderParams::init(cfg, rng);
  for (std::size_t s = 1; s <= 5; ++s) {
    std::vector<TokenId> ids(s, 7);
    const Matrix out = forward(seq_of(ids), p, cfg).states;
    CHECK(out.rows() == static_cast<Eigen::Index>(s));
    CHECK(out.cols() == 8);
    CHECK(out == forward(seq_of(ids), p, cfg).states);
  }
  CHECK_THROWS_AS(forward(seq_of({0, 30}), p, cfg), std::out_of_range);
  CHECK_THROWS_AS(forward(seq_of({0, -1}), p, cfg), std::out_of_range);
}

TEST_CASE("model save and load round trip") {
  EncoderConfig cfg = tiny_config(2);
  for (bool latent : {false, true}) {
    std::optional<LatentAttentionConfig> lc;
    if (latent) lc = LatentAttentionConfig{4, 0, 0, 0};
    const Model m = Model::init(cfg, lc, 17);
    const auto path = std::filesystem::temp_directory_path() / "lmk_model_test.bin";
    m.save(path);
    const Model r = Model::load(path);
    CHECK(r.latent.has_value() == latent);
    const auto a = m.parameters();
    const auto b = r.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
    CHECK(r.parameter_count() == m.parameter_count());
    std::filesystem::remove(path);
  }
  const auto bad = std::filesystem::temp_directory_path() / "lmk_model_bad.bin";
  std::ofstream(bad) << "NOTAMODEL";
  CHECK_THROWS(Model::load(bad));
  std::filesystem::remove(bad);
}
