#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmk/model.hpp"
#include "lmk/pooling.hpp"
#include "lmk/tokenizer.hpp"

namespace lmk {

struct Corpus {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::optional<Matrix> embeddings;

  void validate() const;
  // Line-delimited JSON records {"id": ..., "text": ...}.
  static Corpus read_jsonl(const std::filesystem::path& path);
};

// (query id, doc id) -> graded relevance.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> judgments;

  // Whitespace-separated "qid docid rel" lines.
  static Qrels read(const std::filesystem::path& path);
};

// Query id -> ranked doc ids (best first).
using Run = std::map<std::string, std::vector<std::string>>;

struct ScoredDoc {
  std::string id;
  double score = 0.0;
};

struct EmbedOptions {
  PoolingStrategy pooling = PoolingStrategy::cls();
  ChunkingStrategy chunking = ChunkingStrategy::fixed(128);
  std::size_t max_len = 512;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// One L2-normalised row per text. The tokenization seed of each text depends
// only on (options.seed, text), so batching and duplicates never change rows.
Matrix embed_corpus(const std::vector<std::string>& texts, const Model& model,
                    const Vocabulary& vocab, const EmbedOptions& options);

// Exact top-k by cosine, ties broken by ascending doc id.
std::vector<ScoredDoc> search(const Eigen::RowVectorXd& query, const Matrix& corpus,
                              const std::vector<std::string>& doc_ids, std::size_t k);

struct QueryMetrics {
  std::map<std::size_t, double> ndcg, mrr, hit;
  double p1 = 0.0;
};

struct MetricReport {
  std::vector<std::size_t> ks;
  std::map<std::string, QueryMetrics> per_query;
  std::map<std::size_t, double> mean_ndcg, mean_mrr, mean_hit;
  double mean_p1 = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded_unjudged = 0;  // run queries without positive judgments
  std::size_t missing_from_run = 0;   // judged queries scored as empty rankings

  std::string to_json() const;
  std::string to_csv() const;
};

// NDCG@k with gain 2^rel - 1 and log2(rank + 1) discount; P@1; MRR@k; Hit@k.
MetricReport evaluate(const Run& run, const Qrels& qrels, std::vector<std::size_t> ks);

// TREC run format: "qid Q0 docid rank score tag".
void write_run(const std::filesystem::path& path,
               const std::map<std::string, std::vector<ScoredDoc>>& results, const std::string& tag);
Run read_run(const std::filesystem::path& path);

}  // namespace lmk
