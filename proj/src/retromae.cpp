#include "lmk/retromae.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "lmk/parallel.hpp"
#include "lmk/rope.hpp"

namespace lmk {

void RetroMaeConfig::validate() const {
  auto in_open_unit = [](double r) { return r > 0.0 && r < 1.0; };
  if (!in_open_unit(encoder_mask_ratio) || !in_open_unit(decoder_mask_ratio)) {
    throw std::invalid_argument("retromae: mask ratios must lie in (0, 1)");
  }
  const bool lmk = pooling.kind == PoolingKind::MarkerMean && pooling.marker == SpecialIds{}.sep;
  if (pooling.kind != PoolingKind::Cls && !lmk) {
    throw std::invalid_argument("retromae: pooling must be cls or lmk");
  }
  if (max_len < 2) throw std::invalid_argument("retromae: max_len < 2");
}

RetroMaeDecoder RetroMaeDecoder::init(const EncoderConfig& config, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(config.d_model);
  const auto v = static_cast<Eigen::Index>(config.vocab_size);
  RetroMaeDecoder dec;
  dec.layer = LayerParams::init(config.d_model, config.ffn_dim, 1, rng);
  dec.final_gamma = Matrix::Ones(1, d);
  dec.final_beta = Matrix::Zero(1, d);
  std::normal_distribution<double> dist(0.0, 0.02);
  dec.lm_head = Matrix(d, v);
  for (Eigen::Index i = 0; i < dec.lm_head.size(); ++i) dec.lm_head.data()[i] = dist(rng);
  dec.lm_bias = Matrix::Zero(1, v);
  return dec;
}

std::vector<Matrix*> RetroMaeDecoder::parameters() {
  std::vector<Matrix*> out;
  layer.visit([&](const std::string&, Matrix& m) { out.push_back(&m); }, "");
  out.push_back(&final_gamma);
  out.push_back(&final_beta);
  out.push_back(&lm_head);
  out.push_back(&lm_bias);
  return out;
}

namespace {

// Replaces floor(ratio * |candidates|) randomly chosen candidate positions.
std::vector<std::size_t> choose_masked(const std::vector<std::size_t>& candidates, double ratio,
                                       Rng& rng) {
  std::vector<std::size_t> pick = candidates;
  std::shuffle(pick.begin(), pick.end(), rng);
  pick.resize(static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pick.size()))));
  std::sort(pick.begin(), pick.end());
  return pick;
}

struct Prepared {
  TokenSequence encoder_seq;
  TokenSequence decoder_seq;
  std::vector<std::size_t> rows;  // decoder-masked positions
  std::vector<int> targets;
};

}  // namespace

double retromae_loss(const std::vector<std::string>& texts, const Model& model,
                     const RetroMaeDecoder& decoder, const Vocabulary& vocab,
                     const RetroMaeConfig& config, std::uint64_t seed, Gradients* grads) {
  config.validate();
  if (texts.empty()) throw std::invalid_argument("retromae: no texts");
  const SpecialIds& sp = vocab.specials();

  std::vector<Prepared> prepared(texts.size());
  std::size_t total_masked = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    Rng rng(mix_seed(seed, i));
    const auto ids = encode_text(texts[i], vocab);
    Prepared& p = prepared[i];
    p.encoder_seq = tokenize_for(ids, sp, config.pooling, config.chunking, config.max_len, rng);
    for (std::size_t pos : choose_masked(p.encoder_seq.content_positions(),
                                         config.encoder_mask_ratio, rng)) {
      p.encoder_seq.ids[pos] = sp.mask;
    }
    p.decoder_seq = standard_tokenize_ids(ids, sp, config.max_len);
    for (std::size_t pos : choose_masked(p.decoder_seq.content_positions(),
                                         config.decoder_mask_ratio, rng)) {
      p.rows.push_back(pos);
      p.targets.push_back(p.decoder_seq.ids[pos]);
      p.decoder_seq.ids[pos] = sp.mask;
    }
    total_masked += p.rows.size();
  }
  if (total_masked == 0) throw std::invalid_argument("no masked positions");

  const bool want_grads = grads != nullptr;
  const auto theta = rope_frequencies(model.config.d_head, model.config.rope_base);
  std::vector<std::unique_ptr<ad::Tape>> tapes(texts.size());
  std::vector<ad::Var> losses(texts.size());
  std::vector<double> values(texts.size(), 0.0);
  parallel_for(texts.size(), [&](std::size_t i) {
    const Prepared& p = prepared[i];
    if (p.rows.empty()) return;
    tapes[i] = std::make_unique<ad::Tape>(want_grads);
    ad::Tape& tape = *tapes[i];
    const LatentAttentionParams* latent = model.latent ? &*model.latent : nullptr;
    ad::Var h = encoder_forward(tape, p.encoder_seq, model.encoder, model.config);
    ad::Var sentence = pool(tape, h, p.encoder_seq, config.pooling, latent);

    ad::Var x = ad::gather_rows(tape.parameter(model.encoder.token_embedding), p.decoder_seq.ids);
    x = ad::add_row(x, sentence);
    std::vector<double> positions(p.decoder_seq.size());
    for (std::size_t j = 0; j < positions.size(); ++j) positions[j] = static_cast<double>(j);
    x = transformer_block(tape, x, decoder.layer, model.config, positions, p.decoder_seq.mask,
                          theta, nullptr, nullptr);
    x = ad::layer_norm(x, tape.parameter(decoder.final_gamma), tape.parameter(decoder.final_beta));
    ad::Var logits =
        ad::add_row(ad::matmul(x, tape.parameter(decoder.lm_head)), tape.parameter(decoder.lm_bias));
    losses[i] = ad::softmax_cross_entropy(logits, p.rows, p.targets);
    values[i] = losses[i].value()(0, 0);
  });

  double loss = 0.0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    loss += values[i] * static_cast<double>(prepared[i].rows.size());
  }
  loss /= static_cast<double>(total_masked);
  if (!want_grads) return loss;

  std::vector<const Matrix*> params;
  for (const Matrix* m : model.parameters()) params.push_back(m);
  for (Matrix* m : const_cast<RetroMaeDecoder&>(decoder).parameters()) params.push_back(m);

  std::vector<Gradients> per_text(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) {
    if (!tapes[i]) return;
    const double w = static_cast<double>(prepared[i].rows.size()) / static_cast<double>(total_masked);
    tapes[i]->backward(losses[i], Matrix::Constant(1, 1, w));
    per_text[i].resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (const Matrix* g = tapes[i]->parameter_grad(*params[p])) per_text[i][p] = *g;
    }
    tapes[i].reset();
  });
  grads->assign(params.size(), Matrix());
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (const auto& g : per_text) {
      if (g.empty() || g[p].size() == 0) continue;
      if ((*grads)[p].size() == 0) {
        (*grads)[p] = g[p];
      } else {
        (*grads)[p] += g[p];
      }
    }
  }
  return loss;
}

namespace {

std::vector<Matrix*> joint_parameters(Model& model, RetroMaeDecoder& decoder) {
  auto params = model.parameters();
  for (Matrix* m : decoder.parameters()) params.push_back(m);
  return params;
}

}  // namespace

RetroMaePretrainer::RetroMaePretrainer(Model& model, RetroMaeDecoder& decoder,
                                       const Vocabulary& vocab, RetroMaeConfig config)
    : model_(model),
      decoder_(decoder),
      vocab_(vocab),
      config_(std::move(config)),
      adam_(joint_parameters(model, decoder)) {
  config_.validate();
}

double RetroMaePretrainer::step(const std::vector<std::string>& texts) {
  Gradients grads;
  const double loss =
      retromae_loss(texts, model_, decoder_, vocab_, config_, mix_seed(config_.seed, step_), &grads);
  adam_.step(grads, config_.learning_rate);
  ++step_;
  return loss;
}

}  // namespace lmk
