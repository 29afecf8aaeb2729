#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lmk/encoder.hpp"
#include "lmk/model.hpp"
#include "lmk/trainer.hpp"

namespace lmk {

// Masked-autoencoder pretraining: the encoder reads a lightly masked copy,
// its pooled sentence vector is added to every input of a one-layer decoder
// that reconstructs a heavily masked copy.
struct RetroMaeConfig {
  double encoder_mask_ratio = 0.3;
  double decoder_mask_ratio = 0.5;
  PoolingStrategy pooling = PoolingStrategy::cls();  // cls or lmk
  ChunkingStrategy chunking = ChunkingStrategy::variable({8, 16, 32});
  std::size_t max_len = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RetroMaeDecoder {
  LayerParams layer;
  Matrix final_gamma, final_beta;
  Matrix lm_head;  // d_model x vocab
  Matrix lm_bias;  // 1 x vocab

  static RetroMaeDecoder init(const EncoderConfig& config, Rng& rng);
  std::vector<Matrix*> parameters();
};

// Mean reconstruction cross-entropy over decoder-masked positions. Gradients
// (when requested) are aligned with model params followed by decoder params.
double retromae_loss(const std::vector<std::string>& texts, const Model& model,
                     const RetroMaeDecoder& decoder, const Vocabulary& vocab,
                     const RetroMaeConfig& config, std::uint64_t seed, Gradients* grads);

class RetroMaePretrainer {
 public:
  RetroMaePretrainer(Model& model, RetroMaeDecoder& decoder, const Vocabulary& vocab,
                     RetroMaeConfig config);

  // One optimizer update; returns the loss before the update.
  double step(const std::vector<std::string>& texts);

 private:
  Model& model_;
  RetroMaeDecoder& decoder_;
  const Vocabulary& vocab_;
  RetroMaeConfig config_;
  Adam adam_;
  std::size_t step_ = 0;
};

}  // namespace lmk
