#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lmk/autodiff.hpp"
#include "lmk/tokenizer.hpp"

namespace lmk {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t d_head = 16;
  std::size_t ffn_dim = 128;
  double rope_base = 10000.0;
  std::size_t vocab_size = 0;
  double dropout = 0.0;

  void validate() const;
};

// One pre-norm transformer block: x + Attn(LN(x)), then x + FFN(LN(x)).
struct LayerParams {
  Matrix ln1_gamma, ln1_beta;
  Matrix wq, wk, wv, wo;
  Matrix ln2_gamma, ln2_beta;
  Matrix w1, b1, w2, b2;

  static LayerParams init(std::size_t d_model, std::size_t ffn_dim, std::size_t depth, Rng& rng);
  void visit(const std::function<void(const std::string&, Matrix&)>& fn,
             const std::string& prefix);
};

struct EncoderParams {
  Matrix token_embedding;  // vocab_size x d_model
  std::vector<LayerParams> layers;
  Matrix final_gamma, final_beta;

  static EncoderParams init(const EncoderConfig& config, Rng& rng);

  // Fixed order; this is also the on-disk tensor order.
  void visit(const std::function<void(const std::string&, Matrix&)>& fn);
  void visit(const std::function<void(const std::string&, const Matrix&)>& fn) const;
  bool all_finite() const;
  void check_shapes(const EncoderConfig& config) const;
};

struct AttentionTrace {
  // [layer][head], each S x S.
  std::vector<std::vector<Matrix>> weights;
  std::vector<std::vector<Matrix>> logits;
};

struct HiddenStates {
  Matrix states;  // S x d_model
  std::optional<AttentionTrace> trace;
};

struct ForwardOptions {
  bool trace = false;
  // Added to every rotary position; attention logits are invariant to it.
  double position_offset = 0.0;
  // Inverted dropout; only applied when rng is set and config.dropout > 0.
  Rng* dropout_rng = nullptr;
};

// Differentiable forward pass recorded on `tape`.
ad::Var encoder_forward(ad::Tape& tape, const TokenSequence& seq, const EncoderParams& params,
                        const EncoderConfig& config, const ForwardOptions& options = {},
                        AttentionTrace* trace = nullptr);

// Transformer block applied to already-embedded inputs; shared with the
// reconstruction decoder.
ad::Var transformer_block(ad::Tape& tape, ad::Var x, const LayerParams& layer,
                          const EncoderConfig& config, const std::vector<double>& positions,
                          const std::vector<int>& key_mask, const std::vector<double>& theta,
                          Rng* dropout_rng, ad::AttentionRecord* record);

HiddenStates forward(const TokenSequence& seq, const EncoderParams& params,
                     const EncoderConfig& config, bool trace = false,
                     double position_offset = 0.0);

}  // namespace lmk
