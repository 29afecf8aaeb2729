#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace lmk {

using TokenId = int;
using Rng = std::mt19937_64;

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

struct SpecialIds {
  TokenId cls = 0;
  TokenId sep = 1;  // doubles as the landmark (LMK) token
  TokenId pad = 2;
  TokenId mask = 3;
  TokenId unk = 4;
};

inline constexpr std::size_t kNumSpecials = 5;

class Vocabulary {
 public:
  // Specials first, in the fixed order CLS, SEP, PAD, MASK, UNK.
  explicit Vocabulary(std::vector<std::string> words);

  TokenId id(std::string_view token) const;  // UNK if absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const SpecialIds& specials() const { return specials_; }
  bool is_special(TokenId id) const { return id >= 0 && id < static_cast<TokenId>(kNumSpecials); }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  static const std::vector<std::string>& special_tokens();

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  SpecialIds specials_;
};

struct FixedChunking {
  std::size_t granularity;
};
struct VariableChunking {
  std::vector<std::size_t> granularities{32, 64, 128, 256};
};
struct SentenceChunking {};

class ChunkingStrategy {
 public:
  using Variant = std::variant<FixedChunking, VariableChunking, SentenceChunking>;

  static ChunkingStrategy fixed(std::size_t g);
  static ChunkingStrategy variable(std::vector<std::size_t> set = {32, 64, 128, 256});
  static ChunkingStrategy sentence();

  const Variant& variant() const { return variant_; }
  bool is_sentence() const { return std::holds_alternative<SentenceChunking>(variant_); }
  std::string describe() const;
  // "fixed:16", "variable:8,16,32", "sentence"
  static ChunkingStrategy parse(std::string_view text);

 private:
  explicit ChunkingStrategy(Variant v);
  Variant variant_;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<int> mask;
  // Inserted marker positions (the leading CLS is not listed).
  std::vector<std::size_t> marker_positions;
  std::size_t content_length = 0;
  // nullopt for sentence chunking and the standard [CLS] x [SEP] layout.
  std::optional<std::size_t> granularity;

  std::size_t size() const { return ids.size(); }
  // Indices of mask=1 positions that are neither position 0 nor a marker.
  std::vector<std::size_t> content_positions() const;
};

struct WordSpan {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Alphanumeric runs and single punctuation characters; whitespace separates.
std::vector<WordSpan> split_words(std::string_view text);

Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size);

std::vector<TokenId> encode_text(std::string_view text, const Vocabulary& vocab);

// End-exclusive word indices at which sentences end.
std::vector<std::size_t> sentence_boundaries(std::string_view text);

struct Chunks {
  std::vector<std::vector<TokenId>> chunks;
  std::optional<std::size_t> granularity;  // nullopt for sentence chunking
};

Chunks make_chunks(std::span<const TokenId> tokens, const ChunkingStrategy& strategy,
                   std::optional<std::span<const std::size_t>> boundaries, Rng& rng);

TokenSequence landmark_tokenize(std::string_view text, const Vocabulary& vocab,
                                const ChunkingStrategy& strategy, std::size_t max_len,
                                TokenId marker, Rng& rng);

// Same as above from pre-encoded tokens; boundaries required for sentence chunking.
TokenSequence landmark_tokenize_ids(std::span<const TokenId> tokens, const SpecialIds& specials,
                                    const ChunkingStrategy& strategy, std::size_t max_len,
                                    TokenId marker, Rng& rng,
                                    std::optional<std::span<const std::size_t>> boundaries = {});

TokenSequence standard_tokenize(std::string_view text, const Vocabulary& vocab,
                                std::size_t max_len);
TokenSequence standard_tokenize_ids(std::span<const TokenId> tokens, const SpecialIds& specials,
                                    std::size_t max_len);

// Appends PAD positions (mask 0) up to length.
TokenSequence pad_to(TokenSequence seq, std::size_t length, TokenId pad);

}  // namespace lmk
