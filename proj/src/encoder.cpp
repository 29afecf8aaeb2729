#include "lmk/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "lmk/rope.hpp"

namespace lmk {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  Matrix m(rows, cols);
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? s : 0.0;
  return m;
}

ad::Var maybe_dropout(ad::Var x, double p, Rng* rng) {
  if (!rng || p <= 0.0) return x;
  return ad::multiply_constant(x, dropout_mask(x.rows(), x.cols(), p, *rng));
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1 || d_model < 1 || n_heads < 1 || d_head < 1 || ffn_dim < 1 || vocab_size < 1) {
    throw std::invalid_argument("encoder config: all counts must be >= 1");
  }
  if (d_head % 2 != 0) throw std::invalid_argument("encoder config: d_head must be even");
  if (n_heads * d_head != d_model) {
    throw std::invalid_argument("encoder config: d_model must equal n_heads * d_head");
  }
  if (!(rope_base > 0.0)) throw std::invalid_argument("encoder config: rope_base must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("encoder config: dropout must be in [0, 1)");
  }
}

LayerParams LayerParams::init(std::size_t d_model, std::size_t ffn_dim, std::size_t depth,
                              Rng& rng) {
  const auto d = static_cast<Eigen::Index>(d_model);
  const auto f = static_cast<Eigen::Index>(ffn_dim);
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(d_model));
  const double out_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(depth));
  LayerParams p;
  p.ln1_gamma = Matrix::Ones(1, d);
  p.ln1_beta = Matrix::Zero(1, d);
  p.wq = gaussian(d, d, in_scale, rng);
  p.wk = gaussian(d, d, in_scale, rng);
  p.wv = gaussian(d, d, in_scale, rng);
  p.wo = gaussian(d, d, in_scale * out_scale, rng);
  p.ln2_gamma = Matrix::Ones(1, d);
  p.ln2_beta = Matrix::Zero(1, d);
  p.w1 = gaussian(d, f, in_scale, rng);
  p.b1 = Matrix::Zero(1, f);
  p.w2 = gaussian(f, d, out_scale / std::sqrt(static_cast<double>(ffn_dim)), rng);
  p.b2 = Matrix::Zero(1, d);
  return p;
}

void LayerParams::visit(const std::function<void(const std::string&, Matrix&)>& fn,
                        const std::string& prefix) {
  fn(prefix + "ln1_gamma", ln1_gamma);
  fn(prefix + "ln1_beta", ln1_beta);
  fn(prefix + "wq", wq);
  fn(prefix + "wk", wk);
  fn(prefix + "wv", wv);
  fn(prefix + "wo", wo);
  fn(prefix + "ln2_gamma", ln2_gamma);
  fn(prefix + "ln2_beta", ln2_beta);
  fn(prefix + "w1", w1);
  fn(prefix + "b1", b1);
  fn(prefix + "w2", w2);
  fn(prefix + "b2", b2);
}

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
  config.validate();
  EncoderParams p;
  const auto d = static_cast<Eigen::Index>(config.d_model);
  p.token_embedding = gaussian(static_cast<Eigen::Index>(config.vocab_size), d, 1.0, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    p.layers.push_back(LayerParams::init(config.d_model, config.ffn_dim, config.layers, rng));
  }
  p.final_gamma = Matrix::Ones(1, d);
  p.final_beta = Matrix::Zero(1, d);
  return p;
}

void EncoderParams::visit(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("token_embedding", token_embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].visit(fn, "layer" + std::to_string(l) + ".");
  }
  fn("final_gamma", final_gamma);
  fn("final_beta", final_beta);
}

void EncoderParams::visit(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<EncoderParams*>(this)->visit(
      [&](const std::string& name, Matrix& m) { fn(name, m); });
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

void EncoderParams::check_shapes(const EncoderConfig& config) const {
  const auto d = static_cast<Eigen::Index>(config.d_model);
  const auto f = static_cast<Eigen::Index>(config.ffn_dim);
  auto expect = [](const Matrix& m, Eigen::Index r, Eigen::Index c, const char* what) {
    if (m.rows() != r || m.cols() != c) {
      throw std::invalid_argument(std::string("encoder params: bad shape for ") + what);
    }
  };
  expect(token_embedding, static_cast<Eigen::Index>(config.vocab_size), d, "token_embedding");
  if (layers.size() != config.layers) throw std::invalid_argument("encoder params: layer count");
  for (const auto& l : layers) {
    expect(l.ln1_gamma, 1, d, "ln1_gamma");
    expect(l.ln1_beta, 1, d, "ln1_beta");
    expect(l.wq, d, d, "wq");
    expect(l.wk, d, d, "wk");
    expect(l.wv, d, d, "wv");
    expect(l.wo, d, d, "wo");
    expect(l.ln2_gamma, 1, d, "ln2_gamma");
    expect(l.ln2_beta, 1, d, "ln2_beta");
    expect(l.w1, d, f, "w1");
    expect(l.b1, 1, f, "b1");
    expect(l.w2, f, d, "w2");
    expect(l.b2, 1, d, "b2");
  }
  expect(final_gamma, 1, d, "final_gamma");
  expect(final_beta, 1, d, "final_beta");
}

ad::Var transformer_block(ad::Tape& tape, ad::Var x, const LayerParams& layer,
                          const EncoderConfig& config, const std::vector<double>& positions,
                          const std::vector<int>& key_mask, const std::vector<double>& theta,
                          Rng* dropout_rng, ad::AttentionRecord* record) {
  using namespace ad;
  Var h = layer_norm(x, tape.parameter(layer.ln1_gamma), tape.parameter(layer.ln1_beta));
  Var q = matmul(h, tape.parameter(layer.wq));
  Var k = matmul(h, tape.parameter(layer.wk));
  Var v = matmul(h, tape.parameter(layer.wv));
  AttentionSpec spec;
  spec.n_heads = config.n_heads;
  spec.d_head = config.d_head;
  spec.q_positions = positions;
  spec.k_positions = positions;
  spec.theta = theta;
  spec.key_mask = key_mask;
  Var a = attention(q, k, v, spec, record);
  Var o = maybe_dropout(matmul(a, tape.parameter(layer.wo)), config.dropout, dropout_rng);
  x = add(x, o);

  Var h2 = layer_norm(x, tape.parameter(layer.ln2_gamma), tape.parameter(layer.ln2_beta));
  Var f = gelu(add_row(matmul(h2, tape.parameter(layer.w1)), tape.parameter(layer.b1)));
  f = add_row(matmul(f, tape.parameter(layer.w2)), tape.parameter(layer.b2));
  f = maybe_dropout(f, config.dropout, dropout_rng);
  return add(x, f);
}

ad::Var encoder_forward(ad::Tape& tape, const TokenSequence& seq, const EncoderParams& params,
                        const EncoderConfig& config, const ForwardOptions& options,
                        AttentionTrace* trace) {
  config.validate();
  if (seq.ids.empty()) throw std::invalid_argument("forward: empty sequence");
  if (seq.mask.size() != seq.ids.size()) throw std::invalid_argument("forward: mask length");
  for (TokenId id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw std::out_of_range("forward: token id " + std::to_string(id) + " out of range");
    }
  }
  const auto theta = rope_frequencies(config.d_head, config.rope_base);
  std::vector<double> positions(seq.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = static_cast<double>(i) + options.position_offset;
  }

  ad::Var x = ad::gather_rows(tape.parameter(params.token_embedding), seq.ids);
  if (trace) {
    trace->weights.clear();
    trace->logits.clear();
  }
  for (const auto& layer : params.layers) {
    ad::AttentionRecord record;
    x = transformer_block(tape, x, layer, config, positions, seq.mask, theta,
                          options.dropout_rng, trace ? &record : nullptr);
    if (trace) {
      trace->weights.push_back(std::move(record.weights));
      trace->logits.push_back(std::move(record.logits));
    }
  }
  return ad::layer_norm(x, tape.parameter(params.final_gamma), tape.parameter(params.final_beta));
}

HiddenStates forward(const TokenSequence& seq, const EncoderParams& params,
                     const EncoderConfig& config, bool trace, double position_offset) {
  ad::Tape tape(/*grad_enabled=*/false);
  ForwardOptions options;
  options.trace = trace;
  options.position_offset = position_offset;
  HiddenStates out;
  AttentionTrace t;
  out.states = encoder_forward(tape, seq, params, config, options, trace ? &t : nullptr).value();
  if (trace) out.trace = std::move(t);
  return out;
}

}  // namespace lmk
