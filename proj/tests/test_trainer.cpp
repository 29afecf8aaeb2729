#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lmk/planted_key.hpp"
#include "lmk/trainer.hpp"

using namespace lmk;

namespace {

Vocabulary toy_vocab() {
  std::vector<std::string> words;
  for (int i = 0; i < 20; ++i) words.push_back("w" + std::to_string(i));
  return Vocabulary(words);
}

TripletBatch toy_batch() {
  TripletBatch b;
  b.queries = {"w1 w2", "w3 w4", "w5"};
  b.positives = {"w0 w1 w2 w9 w8", "w3 w4 w7 w6 w10 w11", "w5 w12"};
  b.negatives = {{"w6 w7 w8"}, {"w13 w2 w1"}, {"w14 w15 w16 w17"}};
  return b;
}

EncoderConfig small_config(std::size_t layers, std::size_t d) {
  EncoderConfig c;
  c.layers = layers;
  c.d_model = d;
  c.n_heads = 2;
  c.d_head = d / 2;
  c.ffn_dim = 2 * d;
  c.vocab_size = toy_vocab().size();
  return c;
}

}  // namespace

TEST_CASE("similarity matrix") {
  const Matrix eye = Matrix::Identity(3, 3);
  CHECK(similarity_matrix(eye, eye) == eye);
  CHECK_THROWS(similarity_matrix(Matrix::Ones(2, 3), Matrix::Ones(2, 4)));
}

TEST_CASE("infonce closed forms") {
  const std::vector<std::size_t> diag{0, 1};
  SUBCASE("uniform sims give ln m") {
    const Matrix s = Matrix::Constant(2, 5, 0.3);
    CHECK(std::abs(infonce_loss(s, diag, 0.02).loss - std::log(5.0)) < 1e-12);
  }
  SUBCASE("hand 2x2") {
    Matrix s(2, 2);
    s << 0.5, 0.1, 0.2, 0.9;
    const double want = 0.5 * (std::log1p(std::exp(-0.4)) + std::log1p(std::exp(-0.7)));
    CHECK(std::abs(infonce_loss(s, diag, 1.0).loss - want) < 1e-12);
  }
  SUBCASE("separated sims at tau 0.02") {
    Matrix s = Matrix::Constant(1, 8, -1.0);
    s(0, 0) = 1.0;
    const double got = infonce_loss(s, std::vector<std::size_t>{0}, 0.02).loss;
    CHECK(got == doctest::Approx(7.0 * std::exp(-100.0)).epsilon(1e-9));
  }
  SUBCASE("errors") {
    Matrix s = Matrix::Zero(2, 2);
    CHECK_THROWS(infonce_loss(s, diag, 0.0));
    s(0, 1) = std::nan("");
    CHECK_THROWS(infonce_loss(s, diag, 0.1));
    CHECK_THROWS(infonce_loss(Matrix::Zero(2, 2), std::vector<std::size_t>{0, 2}, 0.1));
  }
}

TEST_CASE("infonce invariances") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix s(4, 7);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
  const std::vector<std::size_t> pos{0, 3, 5, 6};
  const auto base = infonce_loss(s, pos, 0.05);
  for (Eigen::Index r = 0; r < 4; ++r) CHECK(std::abs(base.grad.row(r).sum()) < 1e-9);
  Matrix shifted = s;
  for (Eigen::Index r = 0; r < 4; ++r) shifted.row(r).array() += u(rng);
  CHECK(std::abs(infonce_loss(shifted, pos, 0.05).loss - base.loss) < 1e-9);
  CHECK(std::abs(infonce_loss(s / 3.0, pos, 0.05 / 3.0).loss - base.loss) < 1e-9);

  // gradient against central differences of the scalar loss
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    Matrix a = s, b = s;
    a.data()[i] += 1e-6;
    b.data()[i] -= 1e-6;
    const double fd = (infonce_loss(a, pos, 0.05).loss - infonce_loss(b, pos, 0.05).loss) / 2e-6;
    CHECK(std::abs(fd - base.grad.data()[i]) < 1e-6);
  }
}

TEST_CASE("warmup schedule is linear then constant") {
  CHECK(warmup_learning_rate(1.0, 0, 4) == 0.25);
  CHECK(warmup_learning_rate(1.0, 3, 4) == 1.0);
  CHECK(warmup_learning_rate(1.0, 10, 4) == 1.0);
  CHECK(warmup_learning_rate(0.5, 0, 0) == 0.5);
}

TEST_CASE("config and batch validation") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate());
  c.temperature = 0.0;
  CHECK_THROWS(c.validate());
  c = TrainingConfig{};
  c.batch_size = 1;
  c.hard_negatives = 0;
  CHECK_THROWS(c.validate());
  TripletBatch b;
  b.queries = {"q"};
  b.positives = {"p"};
  CHECK_THROWS(b.validate());
  b.negatives = {{"n"}};
  CHECK_NOTHROW(b.validate());
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Vocabulary v = toy_vocab();
  Model m = Model::init(small_config(1, 8), std::nullopt, 3);
  const Model before = m;
  TrainingConfig c;
  c.learning_rate = 0.0;
  Trainer t(m, v, c);
  t.step(toy_batch());
  const auto a = m.parameters();
  const auto b = before.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
}

TEST_CASE("training is deterministic and reduces loss on a fixed batch") {
  const Vocabulary v = toy_vocab();
  TrainingConfig c;
  c.learning_rate = 3e-3;
  c.temperature = 0.1;
  c.pooling = PoolingStrategy::lmk();
  c.chunking = ChunkingStrategy::variable({2, 3});
  auto run = [&] {
    Model m = Model::init(small_config(2, 32), std::nullopt, 5);
    Trainer t(m, v, c);
    std::vector<double> losses;
    for (int i = 0; i < 50; ++i) losses.push_back(t.step(toy_batch()).loss);
    return losses;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);
  CHECK(a.back() < 0.5 * a.front());
}

TEST_CASE("linear loss gradient check is exact") {
  Rng rng(2);
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix w(6, 5), c(6, 5);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = d(rng), c.data()[i] = d(rng);
  auto loss = [&] { return w.cwiseProduct(c).sum(); };
  const auto r = grad_check_function({&w}, {"w"}, loss, {c}, 1e-5, 200, 1);
  CHECK(r.max_relative_error <= 1e-7);
  CHECK(r.coordinates_checked == 30);
}

TEST_CASE("gradient check on a tiny model for each pooling") {
  const Vocabulary v = toy_vocab();
  for (const char* tag : {"cls", "mean", "mean@2", "lmk", "latent"}) {
    CAPTURE(tag);
    TrainingConfig c;
    c.temperature = 0.5;
    c.pooling = PoolingStrategy::parse(tag);
    c.chunking = ChunkingStrategy::fixed(2);
    std::optional<LatentAttentionConfig> lc;
    if (c.pooling.kind == PoolingKind::LatentAttention) lc = LatentAttentionConfig{4, 0, 0, 0};
    Model m = Model::init(small_config(1, 8), lc, 7);
    const auto r = grad_check(m, v, toy_batch(), c, 1e-5, 40);
    CHECK(r.max_relative_error <= 1e-3);
  }
}

TEST_CASE("triplet files") {
  const auto path = std::filesystem::temp_directory_path() / "lmk_triplets.jsonl";
  std::ofstream(path) << R"({"query": "a", "positive": "b", "negatives": ["c", "d"]})" << '\n'
                      << R"({"query": "e", "positive": "f"})" << '\n';
  const TripletBatch b = read_triplets(path);
  CHECK(b.size() == 2);
  CHECK(b.negatives[0] == std::vector<std::string>{"c", "d"});
  CHECK(b.negatives[1].empty());
  CHECK(slice(b, 1, 5).queries == std::vector<std::string>{"e"});
  std::ofstream(path) << "{not json\n";
  CHECK_THROWS(read_triplets(path));
  std::filesystem::remove(path);
}

TEST_CASE("planted-key training batches") {
  const PlantedKeyGenerator g;
  Rng rng(4);
  const TripletBatch b = g.training_batch(6, 20, 40, 2, rng);
  REQUIRE(b.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (const auto& k : split_words(b.queries[i])) CHECK(b.positives[i].find(k.text) != std::string::npos);
    CHECK(b.negatives[i].size() == 2);
    CHECK(split_words(b.negatives[i][0]).size() == split_words(b.positives[i]).size());
  }
  CHECK(g.vocabulary().size() == 2000);
}
