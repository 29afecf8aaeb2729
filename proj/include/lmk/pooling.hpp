#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lmk/autodiff.hpp"
#include "lmk/encoder.hpp"
#include "lmk/tokenizer.hpp"

namespace lmk {

enum class PoolingKind { Cls, Mean, MeanAtK, MarkerMean, LatentAttention };

struct PoolingStrategy {
  PoolingKind kind = PoolingKind::Cls;
  std::size_t k = 1;       // MeanAtK stride
  std::size_t phase = 0;   // MeanAtK offset into content positions
  TokenId marker = SpecialIds{}.sep;

  static PoolingStrategy cls() { return {PoolingKind::Cls}; }
  static PoolingStrategy mean() { return {PoolingKind::Mean}; }
  static PoolingStrategy mean_at_k(std::size_t k, std::size_t phase = 0);
  static PoolingStrategy lmk() { return {PoolingKind::MarkerMean, 1, 0, SpecialIds{}.sep}; }
  static PoolingStrategy multi_cls() { return {PoolingKind::MarkerMean, 1, 0, SpecialIds{}.cls}; }
  static PoolingStrategy latent() { return {PoolingKind::LatentAttention}; }

  // Sequences for marker pooling are landmark-tokenized; everything else
  // uses the standard [CLS] x [SEP] layout.
  bool uses_landmarks() const { return kind == PoolingKind::MarkerMean; }

  // cls | mean | mean@K | lmk | multicls | latent
  std::string tag() const;
  static PoolingStrategy parse(std::string_view tag);
};

struct LatentAttentionConfig {
  std::size_t latents = 64;
  std::size_t d_latent = 0;  // defaults to d_model when 0
  std::size_t d_head = 0;    // defaults to d_model when 0
  std::size_t ffn_dim = 0;   // defaults to 2 * d_head when 0

  LatentAttentionConfig resolved(std::size_t d_model) const;
};

struct LatentAttentionParams {
  Matrix latents;               // l x d_latent
  Matrix wq;                    // d_model x d_head
  Matrix wk, wv;                // d_latent x d_head, applied to each latent row
  Matrix ln_q_gamma, ln_q_beta; // 1 x d_head
  Matrix ln_y_gamma, ln_y_beta; // 1 x d_head
  Matrix w1, b1, w2, b2;        // FFN d_head -> ffn -> d_head
  Matrix w_out;                 // d_head x d_model

  static LatentAttentionParams init(const LatentAttentionConfig& config, std::size_t d_model,
                                    Rng& rng);
  LatentAttentionConfig config() const;
  void visit(const std::function<void(const std::string&, Matrix&)>& fn);
  void check_shapes(std::size_t d_model) const;
};

struct Embedding {
  Eigen::RowVectorXd vector;
  std::string strategy;
  bool normalized = false;
};

Embedding pool_cls(const HiddenStates& hidden);
Embedding pool_mean(const HiddenStates& hidden, const TokenSequence& seq);
Embedding pool_marker_mean(const HiddenStates& hidden, const TokenSequence& seq, TokenId marker);
Embedding pool_mean_at_k(const HiddenStates& hidden, const TokenSequence& seq, std::size_t k,
                         std::size_t phase = 0);
Embedding pool_latent_attention(const HiddenStates& hidden, const TokenSequence& seq,
                                const LatentAttentionParams& params);
Embedding pool(const HiddenStates& hidden, const TokenSequence& seq,
               const PoolingStrategy& strategy, const LatentAttentionParams* latent = nullptr);
Embedding normalized(Embedding e);

// Row sets selected by each strategy (Alg.-level index sets), exposed for
// diagnostics and tests.
std::vector<std::size_t> unmasked_rows(const TokenSequence& seq);
std::vector<std::size_t> marker_rows(const TokenSequence& seq, TokenId marker);
std::vector<std::size_t> strided_content_rows(const TokenSequence& seq, std::size_t k,
                                              std::size_t phase);

// Differentiable pooling of hidden (S x d_model) to 1 x d_model.
ad::Var pool(ad::Tape& tape, ad::Var hidden, const TokenSequence& seq,
             const PoolingStrategy& strategy, const LatentAttentionParams* latent = nullptr);
ad::Var latent_attention_tokens(ad::Tape& tape, ad::Var tokens,
                                const LatentAttentionParams& params);

// Binary: "LMKEMB01", u64 count, u64 dims, u64 tag length, tag bytes, then
// count*dims little-endian doubles, row-major.
void save_embeddings(const std::filesystem::path& path, const Matrix& rows, const std::string& tag);
Matrix load_embeddings(const std::filesystem::path& path, std::string* tag = nullptr);
// One "id<TAB>v1,v2,..." record per row.
void export_embeddings_text(const std::filesystem::path& path, const std::vector<std::string>& ids,
                            const Matrix& rows);

}  // namespace lmk
