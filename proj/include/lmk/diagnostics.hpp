#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lmk/model.hpp"
#include "lmk/planted_key.hpp"
#include "lmk/pooling.hpp"
#include "lmk/tokenizer.hpp"

namespace lmk {

// Final-layer attention mass that pooling tokens put on each slice of the
// (normalised) content positions.
struct SpanProfile {
  std::vector<double> bins;
  std::string strategy;
  std::size_t trained_msl = 0;
  std::size_t eval_length = 0;
  std::size_t documents = 0;

  double mass(double from, double to) const;  // sum of bins in [from, to)
  std::string to_csv() const;
  std::string to_json() const;
};

// Docs must already be tokenized for the strategy (standard layout for CLS,
// landmark layout for LMK / MultiCLS). Heads are averaged; for marker
// strategies every marker row is a query and those rows are averaged.
SpanProfile attention_span_profile(const Model& model, const std::vector<TokenSequence>& docs,
                                   const PoolingStrategy& strategy, std::size_t n_bins);

// q^T R_{theta,d} k for q = k = ones, d = 0..max_dist.
std::vector<double> rope_decay_curve(double base, std::size_t d_head, std::size_t max_dist);
std::string curve_to_csv(const std::vector<double>& curve, const std::string& x, const std::string& y);

struct OverheadReport {
  std::size_t markers = 0;
  std::size_t cls = 1;
};
OverheadReport lmk_overhead(std::size_t n_content, std::size_t granularity);

struct DirectionalHits {
  double left = 0.0;   // chunk retrieves the landmark right after it
  double right = 0.0;  // chunk retrieves the landmark right before it
  double any = 0.0;
  std::size_t k = 0;
  std::size_t chunks = 0;  // chunks scored (each has both neighbours)
  std::size_t documents = 0;

  std::string to_json() const;
};

// Chunk -> landmark retrieval inside each document. Landmark embeddings come
// from encoding the whole document with fixed granularity g; chunk
// embeddings come from encoding each chunk alone as [CLS] chunk [LMK].
DirectionalHits directional_hits(const Model& model,
                                 const std::vector<std::vector<TokenId>>& documents,
                                 const SpecialIds& specials, std::size_t granularity,
                                 std::size_t k);

// Maps texts to L2-normalised rows; `queries` tells query from document side.
using TextEmbedder = std::function<Matrix(const std::vector<std::string>& texts, bool queries)>;

TextEmbedder model_embedder(const Model& model, const Vocabulary& vocab,
                            const PoolingStrategy& pooling, const ChunkingStrategy& chunking,
                            std::size_t query_max_len, std::size_t doc_max_len, std::uint64_t seed);
// Harness self-test: normalised counts of key words; exact for planted keys.
TextEmbedder bag_of_key_words_embedder(const PlantedKeyGenerator& generator);
// Chance-level baseline: a fresh random direction per text.
TextEmbedder random_embedder(std::size_t dims, std::uint64_t seed);

struct Proportion {
  std::size_t hits = 0;
  std::size_t trials = 0;
  double rate = 0.0;
  double low = 0.0;   // 95% Wilson interval
  double high = 0.0;
};
Proportion wilson_interval(std::size_t hits, std::size_t trials);

struct LongContextConfig {
  std::vector<std::size_t> lengths{128, 1024};
  std::size_t trials = 300;
  double position_lo = 0.0;
  double position_hi = 1.0;
  std::uint64_t seed = 0;
  PlantedKeyConfig planted;
};

struct LengthResult {
  std::size_t length = 0;
  Proportion p1;
  Proportion final_quarter;  // keys with relative position >= 0.75
  double chance = 0.0;       // 1 / pool size
};

struct LongContextReport {
  std::map<std::string, std::vector<LengthResult>> per_strategy;

  std::string to_json() const;
  std::string to_csv() const;
};

// Each trial's query retrieves over the per-length pool of all trial
// documents (one relevant each); reports P@1 with 95% intervals.
LongContextReport synthetic_longctx_suite(
    const std::vector<std::pair<std::string, TextEmbedder>>& embedders,
    const LongContextConfig& config);

}  // namespace lmk
