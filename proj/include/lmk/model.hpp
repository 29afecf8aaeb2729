#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lmk/autodiff.hpp"
#include "lmk/encoder.hpp"
#include "lmk/pooling.hpp"
#include "lmk/tokenizer.hpp"

namespace lmk {

// Encoder plus the optional latent-attention pooling head.
struct Model {
  EncoderConfig config;
  EncoderParams encoder;
  std::optional<LatentAttentionParams> latent;

  static Model init(const EncoderConfig& config,
                    const std::optional<LatentAttentionConfig>& latent_config, std::uint64_t seed);

  // Stable order: encoder tensors, then latent tensors.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  // Binary layout: "LMKENC01"; u64 layers, d_model, n_heads, d_head,
  // ffn_dim, vocab_size; f64 rope_base, dropout; encoder tensors (row-major
  // doubles, EncoderParams::visit order); u64 has_latent; when set, u64
  // latents, d_latent, d_head, ffn_dim followed by the latent tensors.
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);
};

TokenSequence tokenize_for(std::span<const TokenId> tokens, const SpecialIds& specials,
                           const PoolingStrategy& pooling, const ChunkingStrategy& chunking,
                           std::size_t max_len, Rng& rng,
                           std::optional<std::span<const std::size_t>> boundaries = {});
TokenSequence tokenize_for(std::string_view text, const Vocabulary& vocab,
                           const PoolingStrategy& pooling, const ChunkingStrategy& chunking,
                           std::size_t max_len, Rng& rng);

// Encoder -> pooling -> L2 normalisation, recorded on tape (1 x d_model).
ad::Var embed_on_tape(ad::Tape& tape, const TokenSequence& seq, const Model& model,
                      const PoolingStrategy& pooling, Rng* dropout_rng = nullptr);

Embedding embed_sequence(const TokenSequence& seq, const Model& model,
                         const PoolingStrategy& pooling);

}  // namespace lmk
