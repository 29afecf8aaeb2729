#include "lmk/pooling.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "lmk/io.hpp"

namespace lmk {

PoolingStrategy PoolingStrategy::mean_at_k(std::size_t k, std::size_t phase) {
  if (k < 1) throw std::invalid_argument("mean@k: k must be >= 1");
  return {PoolingKind::MeanAtK, k, phase, SpecialIds{}.sep};
}

std::string PoolingStrategy::tag() const {
  switch (kind) {
    case PoolingKind::Cls: return "cls";
    case PoolingKind::Mean: return "mean";
    case PoolingKind::MeanAtK: return "mean@" + std::to_string(k);
    case PoolingKind::MarkerMean: return marker == SpecialIds{}.cls ? "multicls" : "lmk";
    case PoolingKind::LatentAttention: return "latent";
  }
  return "unknown";
}

PoolingStrategy PoolingStrategy::parse(std::string_view tag) {
  if (tag == "cls") return cls();
  if (tag == "mean") return mean();
  if (tag == "lmk") return lmk();
  if (tag == "multicls") return multi_cls();
  if (tag == "latent") return latent();
  if (tag.starts_with("mean@")) {
    std::size_t k = 0;
    const auto rest = tag.substr(5);
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), k);
    if (ec == std::errc() && ptr == rest.data() + rest.size()) return mean_at_k(k);
  }
  throw std::invalid_argument("unknown pooling strategy '" + std::string(tag) + "'");
}

LatentAttentionConfig LatentAttentionConfig::resolved(std::size_t d_model) const {
  LatentAttentionConfig c = *this;
  if (c.latents < 1) throw std::invalid_argument("latent attention: need at least one latent");
  if (c.d_latent == 0) c.d_latent = d_model;
  if (c.d_head == 0) c.d_head = d_model;
  if (c.ffn_dim == 0) c.ffn_dim = 2 * c.d_head;
  return c;
}

LatentAttentionParams LatentAttentionParams::init(const LatentAttentionConfig& config,
                                                  std::size_t d_model, Rng& rng) {
  const auto c = config.resolved(d_model);
  auto gaussian = [&](std::size_t r, std::size_t cols, double sd) {
    std::normal_distribution<double> dist(0.0, sd);
    Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
  };
  auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
  const auto dh = static_cast<Eigen::Index>(c.d_head);
  const auto f = static_cast<Eigen::Index>(c.ffn_dim);
  LatentAttentionParams p;
  p.latents = gaussian(c.latents, c.d_latent, 1.0);
  p.wq = gaussian(d_model, c.d_head, inv_sqrt(d_model));
  p.wk = gaussian(c.d_latent, c.d_head, inv_sqrt(c.d_latent));
  p.wv = gaussian(c.d_latent, c.d_head, inv_sqrt(c.d_latent));
  p.ln_q_gamma = Matrix::Ones(1, dh);
  p.ln_q_beta = Matrix::Zero(1, dh);
  p.ln_y_gamma = Matrix::Ones(1, dh);
  p.ln_y_beta = Matrix::Zero(1, dh);
  p.w1 = gaussian(c.d_head, c.ffn_dim, inv_sqrt(c.d_head));
  p.b1 = Matrix::Zero(1, f);
  p.w2 = gaussian(c.ffn_dim, c.d_head, 0.5 * inv_sqrt(c.ffn_dim));
  p.b2 = Matrix::Zero(1, dh);
  p.w_out = gaussian(c.d_head, d_model, inv_sqrt(c.d_head));
  return p;
}

LatentAttentionConfig LatentAttentionParams::config() const {
  LatentAttentionConfig c;
  c.latents = static_cast<std::size_t>(latents.rows());
  c.d_latent = static_cast<std::size_t>(latents.cols());
  c.d_head = static_cast<std::size_t>(wq.cols());
  c.ffn_dim = static_cast<std::size_t>(w1.cols());
  return c;
}

void LatentAttentionParams::visit(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("latent.latents", latents);
  fn("latent.wq", wq);
  fn("latent.wk", wk);
  fn("latent.wv", wv);
  fn("latent.ln_q_gamma", ln_q_gamma);
  fn("latent.ln_q_beta", ln_q_beta);
  fn("latent.ln_y_gamma", ln_y_gamma);
  fn("latent.ln_y_beta", ln_y_beta);
  fn("latent.w1", w1);
  fn("latent.b1", b1);
  fn("latent.w2", w2);
  fn("latent.b2", b2);
  fn("latent.w_out", w_out);
}

void LatentAttentionParams::check_shapes(std::size_t d_model) const {
  const auto d = static_cast<Eigen::Index>(d_model);
  const Eigen::Index dl = latents.cols();
  const Eigen::Index dh = wq.cols();
  const Eigen::Index f = w1.cols();
  const bool ok = latents.rows() >= 1 && wq.rows() == d && wk.rows() == dl && wk.cols() == dh &&
                  wv.rows() == dl && wv.cols() == dh && ln_q_gamma.cols() == dh &&
                  ln_q_beta.cols() == dh && ln_y_gamma.cols() == dh && ln_y_beta.cols() == dh &&
                  w1.rows() == dh && b1.cols() == f && w2.rows() == f && w2.cols() == dh &&
                  b2.cols() == dh && w_out.rows() == dh && w_out.cols() == d;
  if (!ok) throw std::invalid_argument("latent attention: shape mismatch");
}

std::vector<std::size_t> unmasked_rows(const TokenSequence& seq) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < seq.mask.size(); ++i) {
    if (seq.mask[i]) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> marker_rows(const TokenSequence& seq, TokenId marker) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.ids[i] == marker && seq.mask[i] == 1) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> strided_content_rows(const TokenSequence& seq, std::size_t k,
                                              std::size_t phase) {
  if (k < 1) throw std::invalid_argument("mean@k: k must be >= 1");
  const auto content = seq.content_positions();
  std::vector<std::size_t> rows;
  for (std::size_t c = 0; c < content.size(); ++c) {
    if (c % k == phase % k) rows.push_back(content[c]);
  }
  return rows;
}

ad::Var latent_attention_tokens(ad::Tape& tape, ad::Var tokens,
                                const LatentAttentionParams& params) {
  using namespace ad;
  params.check_shapes(static_cast<std::size_t>(tokens.cols()));
  Var q = matmul(tokens, tape.parameter(params.wq));
  Var latents = tape.parameter(params.latents);
  Var k = matmul(latents, tape.parameter(params.wk));
  Var v = matmul(latents, tape.parameter(params.wv));
  Var qn = layer_norm(q, tape.parameter(params.ln_q_gamma), tape.parameter(params.ln_q_beta));
  AttentionSpec spec;
  spec.n_heads = 1;
  spec.d_head = static_cast<std::size_t>(params.wq.cols());
  Var y = add(attention(qn, k, v, spec), q);
  Var yn = layer_norm(y, tape.parameter(params.ln_y_gamma), tape.parameter(params.ln_y_beta));
  Var f = gelu(add_row(matmul(yn, tape.parameter(params.w1)), tape.parameter(params.b1)));
  f = add_row(matmul(f, tape.parameter(params.w2)), tape.parameter(params.b2));
  return add(f, y);
}

ad::Var pool(ad::Tape& tape, ad::Var hidden, const TokenSequence& seq,
             const PoolingStrategy& strategy, const LatentAttentionParams* latent) {
  if (hidden.rows() == 0) throw std::invalid_argument("pool: empty hidden states");
  if (static_cast<std::size_t>(hidden.rows()) != seq.size()) {
    throw std::invalid_argument("pool: hidden states and sequence disagree in length");
  }
  switch (strategy.kind) {
    case PoolingKind::Cls: {
      const std::size_t row0 = 0;
      return ad::select_rows(hidden, std::span(&row0, 1));
    }
    case PoolingKind::Mean: {
      const auto rows = unmasked_rows(seq);
      if (rows.empty()) throw std::invalid_argument("mean pooling: all positions are padding");
      return ad::mean_rows(hidden, rows);
    }
    case PoolingKind::MeanAtK: {
      const auto rows = strided_content_rows(seq, strategy.k, strategy.phase);
      if (rows.empty()) throw std::invalid_argument("mean@k pooling: no selected rows");
      return ad::mean_rows(hidden, rows);
    }
    case PoolingKind::MarkerMean: {
      const auto rows = marker_rows(seq, strategy.marker);
      if (rows.empty()) throw std::invalid_argument("no landmark tokens");
      return ad::mean_rows(hidden, rows);
    }
    case PoolingKind::LatentAttention: {
      if (!latent) throw std::invalid_argument("latent pooling: missing latent-attention params");
      const auto rows = unmasked_rows(seq);
      if (rows.empty()) throw std::invalid_argument("latent pooling: all positions are padding");
      ad::Var z = latent_attention_tokens(tape, ad::select_rows(hidden, rows), *latent);
      std::vector<std::size_t> all(rows.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      return ad::matmul(ad::mean_rows(z, all), tape.parameter(latent->w_out));
    }
  }
  throw std::invalid_argument("pool: unknown strategy");
}

namespace {

Embedding run_pool(const HiddenStates& hidden, const TokenSequence& seq,
                   const PoolingStrategy& strategy, const LatentAttentionParams* latent) {
  ad::Tape tape(false);
  ad::Var h = tape.constant(hidden.states);
  Embedding e;
  e.vector = pool(tape, h, seq, strategy, latent).value().row(0);
  e.strategy = strategy.tag();
  return e;
}

}  // namespace

Embedding pool_cls(const HiddenStates& hidden) {
  if (hidden.states.rows() == 0) throw std::invalid_argument("pool_cls: empty hidden states");
  return {hidden.states.row(0), "cls", false};
}

Embedding pool_mean(const HiddenStates& hidden, const TokenSequence& seq) {
  return run_pool(hidden, seq, PoolingStrategy::mean(), nullptr);
}

Embedding pool_marker_mean(const HiddenStates& hidden, const TokenSequence& seq, TokenId marker) {
  PoolingStrategy s = PoolingStrategy::lmk();
  s.marker = marker;
  return run_pool(hidden, seq, s, nullptr);
}

Embedding pool_mean_at_k(const HiddenStates& hidden, const TokenSequence& seq, std::size_t k,
                         std::size_t phase) {
  return run_pool(hidden, seq, PoolingStrategy::mean_at_k(k, phase), nullptr);
}

Embedding pool_latent_attention(const HiddenStates& hidden, const TokenSequence& seq,
                                const LatentAttentionParams& params) {
  return run_pool(hidden, seq, PoolingStrategy::latent(), &params);
}

Embedding pool(const HiddenStates& hidden, const TokenSequence& seq,
               const PoolingStrategy& strategy, const LatentAttentionParams* latent) {
  if (strategy.kind == PoolingKind::Cls) return pool_cls(hidden);
  return run_pool(hidden, seq, strategy, latent);
}

Embedding normalized(Embedding e) {
  const double n = e.vector.norm();
  if (n > 0.0) e.vector /= n;
  e.normalized = true;
  return e;
}

void save_embeddings(const std::filesystem::path& path, const Matrix& rows, const std::string& tag) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("LMKEMB01", 8);
  io::write_u64(out, static_cast<std::uint64_t>(rows.rows()));
  io::write_u64(out, static_cast<std::uint64_t>(rows.cols()));
  io::write_u64(out, tag.size());
  out.write(tag.data(), static_cast<std::streamsize>(tag.size()));
  io::write_matrix(out, rows);
}

Matrix load_embeddings(const std::filesystem::path& path, std::string* tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "LMKEMB01") {
    throw std::runtime_error("not an embedding file: " + path.string());
  }
  const auto count = io::read_u64(in);
  const auto dims = io::read_u64(in);
  const auto tag_len = io::read_u64(in);
  if (tag_len > 4096) throw std::runtime_error("embedding file: bad tag length");
  std::string t(tag_len, '\0');
  if (!in.read(t.data(), static_cast<std::streamsize>(tag_len))) throw std::runtime_error("truncated file");
  if (tag) *tag = t;
  Matrix m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dims));
  io::read_matrix(in, m);
  return m;
}

void export_embeddings_text(const std::filesystem::path& path, const std::vector<std::string>& ids,
                            const Matrix& rows) {
  if (ids.size() != static_cast<std::size_t>(rows.rows())) {
    throw std::invalid_argument("export_embeddings_text: one id per row required");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    out << ids[static_cast<std::size_t>(r)] << '\t';
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (c) out << ',';
      out << rows(r, c);
    }
    out << '\n';
  }
}

}  // namespace lmk
