#include <cmath>

#include "doctest.h"
#include "lmk/retromae.hpp"

using namespace lmk;

namespace {

Vocabulary words_vocab(int n) {
  std::vector<std::string> w;
  for (int i = 0; i < n; ++i) w.push_back("w" + std::to_string(i));
  return Vocabulary(w);
}

std::vector<std::string> sentences(std::size_t count, std::size_t len, int n_words, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, n_words - 1);
  std::vector<std::string> out;
  for (std::size_t s = 0; s < count; ++s) {
    std::string t;
    for (std::size_t i = 0; i < len; ++i) t += (i ? " w" : "w") + std::to_string(pick(rng));
    out.push_back(t);
  }
  return out;
}

EncoderConfig tiny(std::size_t vocab) {
  EncoderConfig c;
  c.layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_head = 4;
  c.ffn_dim = 16;
  c.vocab_size = vocab;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  RetroMaeConfig c;
  CHECK_NOTHROW(c.validate());
  c.decoder_mask_ratio = 1.0;
  CHECK_THROWS(c.validate());
  c = RetroMaeConfig{};
  c.pooling = PoolingStrategy::mean();
  CHECK_THROWS(c.validate());
  c.pooling = PoolingStrategy::multi_cls();
  CHECK_THROWS(c.validate());
  c.pooling = PoolingStrategy::lmk();
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("initial loss is close to uniform over the vocabulary") {
  const Vocabulary v = words_vocab(200);
  Rng rng(1);
  const auto texts = sentences(16, 30, 200, rng);
  for (const auto& pooling : {PoolingStrategy::cls(), PoolingStrategy::lmk()}) {
    const Model m = Model::init(tiny(v.size()), std::nullopt, 2);
    Rng drng(3);
    const RetroMaeDecoder d = RetroMaeDecoder::init(m.config, drng);
    RetroMaeConfig c;
    c.pooling = pooling;
    const double loss = retromae_loss(texts, m, d, v, c, 4, nullptr);
    CHECK(std::abs(loss - std::log(static_cast<double>(v.size()))) < 0.1 * std::log(static_cast<double>(v.size())));
  }
}

TEST_CASE("too few tokens to mask") {
  const Vocabulary v = words_vocab(10);
  const Model m = Model::init(tiny(v.size()), std::nullopt, 1);
  Rng rng(1);
  const RetroMaeDecoder d = RetroMaeDecoder::init(m.config, rng);
  RetroMaeConfig c;
  c.decoder_mask_ratio = 0.01;
  CHECK_THROWS_WITH(retromae_loss({"w1 w2 w3"}, m, d, v, c, 0, nullptr), "no masked positions");
  CHECK_THROWS(retromae_loss({}, m, d, v, RetroMaeConfig{}, 0, nullptr));
}

TEST_CASE("gradient check through encoder and decoder") {
  const Vocabulary v = words_vocab(12);
  Rng rng(5);
  const auto texts = sentences(3, 9, 12, rng);
  for (const auto& pooling : {PoolingStrategy::cls(), PoolingStrategy::lmk()}) {
    Model m = Model::init(tiny(v.size()), std::nullopt, 6);
    Rng drng(7);
    RetroMaeDecoder d = RetroMaeDecoder::init(m.config, drng);
    RetroMaeConfig c;
    c.pooling = pooling;
    c.chunking = ChunkingStrategy::fixed(3);
    Gradients g;
    retromae_loss(texts, m, d, v, c, 8, &g);
    auto params = m.parameters();
    for (Matrix* p : d.parameters()) params.push_back(p);
    REQUIRE(g.size() == params.size());
    std::vector<std::string> names;
    for (std::size_t i = 0; i < params.size(); ++i) names.push_back("p" + std::to_string(i));
    const auto r = grad_check_function(
        params, names, [&] { return retromae_loss(texts, m, d, v, c, 8, nullptr); }, g, 1e-5, 40, 9);
    CHECK(r.max_relative_error <= 1e-3);
  }
}

TEST_CASE("short pretraining lowers the loss") {
  const Vocabulary v = words_vocab(40);
  Rng rng(11);
  const auto texts = sentences(8, 12, 40, rng);
  Model m = Model::init(tiny(v.size()), std::nullopt, 12);
  Rng drng(13);
  RetroMaeDecoder d = RetroMaeDecoder::init(m.config, drng);
  RetroMaeConfig c;
  c.learning_rate = 1e-2;
  RetroMaePretrainer t(m, d, v, c);
  const double first = t.step(texts);
  double last = first;
  for (int i = 0; i < 60; ++i) last = t.step(texts);
  CHECK(last < first);
}
