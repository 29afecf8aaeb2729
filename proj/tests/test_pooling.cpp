#include <fstream>
#include <random>

#include "doctest.h"
#include "lmk/pooling.hpp"
#include "oracles.hpp"

using namespace lmk;

namespace {

HiddenStates hidden_of(Matrix m) {
  HiddenStates h;
  h.states = std::move(m);
  return h;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

void check_close(const Eigen::RowVectorXd& got, const std::vector<double>& want, double tol) {
  REQUIRE(static_cast<std::size_t>(got.size()) == want.size());
  for (std::size_t c = 0; c < want.size(); ++c) {
    CHECK(std::abs(got(static_cast<Eigen::Index>(c)) - want[c]) < tol);
  }
}

const SpecialIds kS;

}  // namespace

TEST_CASE("cls returns row zero exactly") {
  Matrix m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  CHECK(pool_cls(hidden_of(m)).vector == m.row(0));
  CHECK(pool_cls(hidden_of(m.topRows(1))).vector == m.row(0));
  CHECK_THROWS(pool_cls(hidden_of(Matrix(0, 2))));
}

TEST_CASE("mean over unmasked rows") {
  Matrix m(2, 2);
  m << 1, 3, 3, 1;
  TokenSequence seq;
  seq.ids = {kS.cls, 9};
  seq.mask = {1, 1};
  CHECK(pool_mean(hidden_of(m), seq).vector == Eigen::RowVector2d(2, 2));
  seq.mask = {1, 0};
  CHECK(pool_mean(hidden_of(m), seq).vector == m.row(0));
  seq.mask = {0, 0};
  CHECK_THROWS(pool_mean(hidden_of(m), seq));
}

TEST_CASE("marker mean selects marker id with mask") {
  // [CLS, x, M, y, M]
  Matrix m(5, 2);
  m << 0, 0, 9, 9, 1, 2, 9, 9, 3, 6;
  TokenSequence seq;
  seq.ids = {kS.cls, 20, kS.sep, 21, kS.sep};
  seq.mask = {1, 1, 1, 1, 1};
  seq.marker_positions = {2, 4};
  CHECK(pool_marker_mean(hidden_of(m), seq, kS.sep).vector == Eigen::RowVector2d(2, 4));

  // a padded trailing marker is excluded
  TokenSequence padded = seq;
  padded.mask[4] = 0;
  CHECK(pool_marker_mean(hidden_of(m), padded, kS.sep).vector == m.row(2));

  TokenSequence none;
  none.ids = {kS.cls, 20};
  none.mask = {1, 1};
  CHECK_THROWS_WITH(pool_marker_mean(hidden_of(m.topRows(2)), none, kS.sep), "no landmark tokens");
}

TEST_CASE("single chunk lmk equals the landmark row") {
  Rng rng(1);
  const std::vector<TokenId> tokens{11, 12, 13};
  const auto seq = landmark_tokenize_ids(tokens, kS, ChunkingStrategy::fixed(8), kUnlimited, kS.sep, rng);
  const Matrix m = random_matrix(rng, static_cast<Eigen::Index>(seq.size()), 4);
  CHECK(pool(hidden_of(m), seq, PoolingStrategy::lmk()).vector == m.row(static_cast<Eigen::Index>(seq.size() - 1)));
}

TEST_CASE("mean@k strides over content tokens") {
  Rng rng(2);
  const std::vector<TokenId> tokens{11, 12, 13, 14};
  const auto seq = standard_tokenize_ids(tokens, kS, 16);
  const Matrix m = random_matrix(rng, static_cast<Eigen::Index>(seq.size()), 3);
  const Eigen::RowVectorXd want = (m.row(1) + m.row(3)) / 2.0;
  CHECK((pool_mean_at_k(hidden_of(m), seq, 2).vector - want).cwiseAbs().maxCoeff() < 1e-15);
  const Eigen::RowVectorXd all = m.middleRows(1, 4).colwise().mean();
  CHECK((pool_mean_at_k(hidden_of(m), seq, 1).vector - all).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS(PoolingStrategy::mean_at_k(0));
  CHECK(strided_content_rows(seq, 2, 1) == std::vector<std::size_t>{2, 4});
}

TEST_CASE("latent attention with one latent follows the closed form") {
  Rng rng(3);
  const std::size_t d = 6;
  auto p = LatentAttentionParams::init({1, 0, 0, 0}, d, rng);
  p.ln_q_gamma = random_matrix(rng, 1, 6);
  p.b1 = random_matrix(rng, 1, 12);
  TokenSequence seq;
  seq.ids = {kS.cls, 20, 21, kS.sep};
  seq.mask = {1, 1, 1, 1};
  const Matrix h = random_matrix(rng, 4, 6);
  const Eigen::RowVectorXd got = pool_latent_attention(hidden_of(h), seq, p).vector;

  // one latent: attention weight is 1, so Y_i = q_i + v
  const Matrix v = p.latents * p.wv;
  Eigen::RowVectorXd z_sum = Eigen::RowVectorXd::Zero(6);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const Eigen::RowVectorXd y = h.row(i) * p.wq + v.row(0);
    const auto yn = oracle::layer_norm(std::vector<double>(y.data(), y.data() + 6), p.ln_y_gamma, p.ln_y_beta);
    auto f = oracle::matvec(yn, p.w1);
    for (std::size_t c = 0; c < f.size(); ++c) f[c] = oracle::gelu(f[c] + p.b1(0, static_cast<Eigen::Index>(c)));
    const auto g = oracle::matvec(f, p.w2);
    for (Eigen::Index c = 0; c < 6; ++c) z_sum(c) += g[static_cast<std::size_t>(c)] + p.b2(0, c) + y(c);
  }
  const Eigen::RowVectorXd want = (z_sum / 4.0) * p.w_out;
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("latent attention with zeroed FFN is the mean of q plus attended v") {
  Rng rng(4);
  auto p = LatentAttentionParams::init({5, 0, 0, 0}, 4, rng);
  p.w2.setZero();
  p.b2.setZero();
  p.w_out = Matrix::Identity(4, 4);
  TokenSequence seq;
  seq.ids = {kS.cls, 20, kS.sep};
  seq.mask = {1, 1, 1};
  const Matrix h = random_matrix(rng, 3, 4);
  check_close(pool_latent_attention(hidden_of(h), seq, p).vector, oracle::latent(oracle::to_rows(h), seq, p), 1e-12);
}

TEST_CASE("latent attention with identical rows pools to any row") {
  Rng rng(5);
  const auto p = LatentAttentionParams::init({8, 0, 0, 0}, 4, rng);
  TokenSequence seq;
  seq.ids = {kS.cls, 20, 21};
  seq.mask = {1, 1, 1};
  Matrix h(3, 4);
  const Matrix row = random_matrix(rng, 1, 4);
  for (Eigen::Index i = 0; i < 3; ++i) h.row(i) = row;
  TokenSequence one = seq;
  one.ids.resize(1);
  one.mask.resize(1);
  const auto all = pool_latent_attention(hidden_of(h), seq, p).vector;
  const auto first = pool_latent_attention(hidden_of(h.topRows(1)), one, p).vector;
  CHECK((all - first).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("latent shape mismatch is rejected") {
  Rng rng(6);
  const auto p = LatentAttentionParams::init({4, 0, 0, 0}, 4, rng);
  TokenSequence seq;
  seq.ids = {kS.cls, 20};
  seq.mask = {1, 1};
  CHECK_THROWS(pool_latent_attention(hidden_of(random_matrix(rng, 2, 5)), seq, p));
}

TEST_CASE("pooling matches the loop oracles on random inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const std::size_t g = std::uniform_int_distribution<std::size_t>(1, 9)(rng);
    std::vector<TokenId> tokens(n, 30);
    const auto base = landmark_tokenize_ids(tokens, kS, ChunkingStrategy::fixed(g), kUnlimited, kS.sep, rng);
    const auto seq = pad_to(base, base.size() + 3, kS.pad);
    const Matrix m = random_matrix(rng, static_cast<Eigen::Index>(seq.size()), 5);
    const auto rows = oracle::to_rows(m);
    const auto h = hidden_of(m);
    check_close(pool(h, seq, PoolingStrategy::cls()).vector, oracle::cls(rows), 1e-12);
    check_close(pool(h, seq, PoolingStrategy::mean()).vector, oracle::mean(rows, seq), 1e-12);
    check_close(pool(h, seq, PoolingStrategy::lmk()).vector, oracle::marker_mean(rows, seq, kS.sep), 1e-12);
    check_close(pool(h, seq, PoolingStrategy::mean_at_k(3)).vector, oracle::mean_at_k(rows, seq, 3), 1e-12);
    const auto p = LatentAttentionParams::init({4, 0, 0, 0}, 5, rng);
    check_close(pool(h, seq, PoolingStrategy::latent(), &p).vector, oracle::latent(rows, seq, p), 1e-10);
  }
}

TEST_CASE("marker mean is permutation and convexity safe") {
  Rng rng(8);
  std::vector<TokenId> tokens(12, 30);
  const auto seq = landmark_tokenize_ids(tokens, kS, ChunkingStrategy::fixed(3), kUnlimited, kS.sep, rng);
  Matrix m = random_matrix(rng, static_cast<Eigen::Index>(seq.size()), 4);
  const auto before = pool_marker_mean(hidden_of(m), seq, kS.sep).vector;
  const auto rows = marker_rows(seq, kS.sep);
  Matrix swapped = m;
  swapped.row(static_cast<Eigen::Index>(rows.front())) = m.row(static_cast<Eigen::Index>(rows.back()));
  swapped.row(static_cast<Eigen::Index>(rows.back())) = m.row(static_cast<Eigen::Index>(rows.front()));
  CHECK((pool_marker_mean(hidden_of(swapped), seq, kS.sep).vector - before).cwiseAbs().maxCoeff() < 1e-14);
  for (Eigen::Index c = 0; c < 4; ++c) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t r : rows) {
      lo = std::min(lo, m(static_cast<Eigen::Index>(r), c));
      hi = std::max(hi, m(static_cast<Eigen::Index>(r), c));
    }
    CHECK(before(c) >= lo - 1e-12);
    CHECK(before(c) <= hi + 1e-12);
  }
}

TEST_CASE("strategy tags round trip") {
  for (const char* t : {"cls", "mean", "mean@4", "lmk", "multicls", "latent"}) {
    CHECK(PoolingStrategy::parse(t).tag() == t);
  }
  CHECK_THROWS(PoolingStrategy::parse("max"));
  CHECK_THROWS(PoolingStrategy::parse("mean@0"));
  CHECK(PoolingStrategy::lmk().uses_landmarks());
  CHECK(PoolingStrategy::multi_cls().uses_landmarks());
  CHECK_FALSE(PoolingStrategy::mean().uses_landmarks());
}

TEST_CASE("embedding files round trip") {
  Rng rng(9);
  const Matrix m = random_matrix(rng, 3, 4);
  const auto dir = std::filesystem::temp_directory_path();
  save_embeddings(dir / "lmk_emb.bin", m, "lmk");
  std::string tag;
  CHECK(load_embeddings(dir / "lmk_emb.bin", &tag) == m);
  CHECK(tag == "lmk");
  export_embeddings_text(dir / "lmk_emb.tsv", {"a", "b", "c"}, m);
  std::ifstream in(dir / "lmk_emb.tsv");
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("a\t", 0) == 0);
  CHECK(std::stod(line.substr(2)) == m(0, 0));
  std::filesystem::remove(dir / "lmk_emb.bin");
  std::filesystem::remove(dir / "lmk_emb.tsv");
}
