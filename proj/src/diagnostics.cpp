#include "lmk/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "lmk/io.hpp"
#include "lmk/parallel.hpp"
#include "lmk/retrieval.hpp"
#include "lmk/rope.hpp"
#include "lmk/trainer.hpp"

namespace lmk {

double SpanProfile::mass(double from, double to) const {
  double total = 0.0;
  const auto n = static_cast<double>(bins.size());
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const double left = static_cast<double>(b) / n;
    if (left >= from && left < to) total += bins[b];
  }
  return total;
}

std::string SpanProfile::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(17) << "bin,position,mass\n";
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const double center = (static_cast<double>(b) + 0.5) / static_cast<double>(bins.size());
    out << b << ',' << center << ',' << bins[b] << '\n';
  }
  return out.str();
}

std::string SpanProfile::to_json() const {
  nlohmann::ordered_json j;
  j["strategy"] = strategy;
  j["trained_msl"] = trained_msl;
  j["eval_length"] = eval_length;
  j["documents"] = documents;
  j["bins"] = bins;
  j["first_quarter"] = mass(0.0, 0.25);
  j["last_quarter"] = mass(0.75, 1.0);
  return j.dump(2) + "\n";
}

SpanProfile attention_span_profile(const Model& model, const std::vector<TokenSequence>& docs,
                                   const PoolingStrategy& strategy, std::size_t n_bins) {
  if (strategy.kind != PoolingKind::Cls && strategy.kind != PoolingKind::MarkerMean) {
    throw std::invalid_argument("no pooling token");
  }
  if (n_bins < 1) throw std::invalid_argument("span profile: n_bins must be >= 1");
  if (docs.empty()) throw std::invalid_argument("span profile: no documents");

  std::vector<std::vector<double>> per_doc(docs.size());
  parallel_for(docs.size(), [&](std::size_t d) {
    const TokenSequence& seq = docs[d];
    const auto content = seq.content_positions();
    if (content.size() < n_bins) {
      throw std::invalid_argument("span profile: document shorter than n_bins content tokens");
    }
    std::vector<std::size_t> queries;
    if (strategy.kind == PoolingKind::Cls) {
      queries = {0};
    } else {
      queries = marker_rows(seq, strategy.marker);
    }
    const HiddenStates hidden = forward(seq, model.encoder, model.config, true);
    const auto& last = hidden.trace->weights.back();

    std::vector<double> bins(n_bins, 0.0);
    const auto n = static_cast<double>(content.size());
    for (const Matrix& w : last) {
      for (std::size_t q : queries) {
        for (std::size_t c = 0; c < content.size(); ++c) {
          const auto b = static_cast<std::size_t>(static_cast<double>(c) *
                                                  static_cast<double>(n_bins) / n);
          bins[std::min(b, n_bins - 1)] +=
              w(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(content[c]));
        }
      }
    }
    const double total = std::accumulate(bins.begin(), bins.end(), 0.0);
    if (total > 0.0) {
      for (double& b : bins) b /= total;
    }
    per_doc[d] = std::move(bins);
  });

  SpanProfile profile;
  profile.strategy = strategy.tag();
  profile.documents = docs.size();
  profile.bins.assign(n_bins, 0.0);
  for (const auto& bins : per_doc) {
    for (std::size_t b = 0; b < n_bins; ++b) profile.bins[b] += bins[b];
  }
  const double total = std::accumulate(profile.bins.begin(), profile.bins.end(), 0.0);
  if (total > 0.0) {
    for (double& b : profile.bins) b /= total;
  }
  std::size_t longest = 0;
  for (const auto& seq : docs) longest = std::max(longest, seq.content_length);
  profile.eval_length = longest;
  return profile;
}

std::vector<double> rope_decay_curve(double base, std::size_t d_head, std::size_t max_dist) {
  const auto theta = rope_frequencies(d_head, base);
  const std::vector<double> ones(d_head, 1.0);
  std::vector<double> curve(max_dist + 1);
  for (std::size_t d = 0; d <= max_dist; ++d) {
    const auto k = rotate(ones, static_cast<double>(d), theta);
    curve[d] = std::accumulate(k.begin(), k.end(), 0.0);
  }
  return curve;
}

std::string curve_to_csv(const std::vector<double>& curve, const std::string& x,
                         const std::string& y) {
  std::ostringstream out;
  out << std::setprecision(17) << x << ',' << y << '\n';
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << ',' << curve[i] << '\n';
  return out.str();
}

OverheadReport lmk_overhead(std::size_t n_content, std::size_t granularity) {
  if (granularity < 1) throw std::invalid_argument("overhead: granularity must be >= 1");
  OverheadReport r;
  r.markers = std::max<std::size_t>(1, (n_content + granularity - 1) / granularity);
  return r;
}

std::string DirectionalHits::to_json() const {
  nlohmann::ordered_json j;
  j["k"] = k;
  j["documents"] = documents;
  j["chunks"] = chunks;
  j["left"] = left;
  j["right"] = right;
  j["any"] = any;
  return j.dump(2) + "\n";
}

namespace {

Matrix normalized_rows(Matrix m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0) m.row(r) /= n;
  }
  return m;
}

// Indices of the k best scores, ties to the lower index.
std::vector<std::size_t> top_k(const Eigen::VectorXd& scores, std::size_t k) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores(static_cast<Eigen::Index>(a));
                      const double sb = scores(static_cast<Eigen::Index>(b));
                      return sa != sb ? sa > sb : a < b;
                    });
  order.resize(k);
  return order;
}

struct DocHits {
  std::size_t left = 0, right = 0, any = 0, scored = 0;
};

}  // namespace

DirectionalHits directional_hits(const Model& model,
                                 const std::vector<std::vector<TokenId>>& documents,
                                 const SpecialIds& specials, std::size_t granularity,
                                 std::size_t k) {
  if (k < 1) throw std::invalid_argument("directional hits: k must be >= 1");
  if (documents.empty()) throw std::invalid_argument("directional hits: no documents");
  const auto chunking = ChunkingStrategy::fixed(granularity);
  const auto lmk = PoolingStrategy::lmk();

  std::vector<DocHits> per_doc(documents.size());
  parallel_for(documents.size(), [&](std::size_t d) {
    Rng rng(0);  // fixed chunking draws nothing
    const auto& tokens = documents[d];
    const auto full = landmark_tokenize_ids(tokens, specials, chunking, kUnlimited, specials.sep, rng);
    const std::size_t n = full.marker_positions.size();
    if (tokens.empty() || n < 2) throw std::invalid_argument("too few chunks");

    const HiddenStates hidden = forward(full, model.encoder, model.config);
    Matrix landmarks(static_cast<Eigen::Index>(n), hidden.states.cols());
    for (std::size_t i = 0; i < n; ++i) {
      landmarks.row(static_cast<Eigen::Index>(i)) =
          hidden.states.row(static_cast<Eigen::Index>(full.marker_positions[i]));
    }
    landmarks = normalized_rows(std::move(landmarks));

    const std::size_t kk = std::min(k, n);
    DocHits hits;
    for (std::size_t c = 1; c < n; ++c) {
      const std::size_t begin = c * granularity;
      const std::size_t end = std::min(tokens.size(), begin + granularity);
      const std::span<const TokenId> chunk(tokens.data() + begin, end - begin);
      const auto alone = landmark_tokenize_ids(chunk, specials, chunking, kUnlimited, specials.sep, rng);
      const Eigen::RowVectorXd e = embed_sequence(alone, model, lmk).vector;
      const auto best = top_k(landmarks * e.transpose(), kk);
      const bool left = std::find(best.begin(), best.end(), c) != best.end();
      const bool right = std::find(best.begin(), best.end(), c - 1) != best.end();
      hits.left += left;
      hits.right += right;
      hits.any += left || right;
      ++hits.scored;
    }
    per_doc[d] = hits;
  });

  DocHits total;
  for (const auto& h : per_doc) {
    total.left += h.left;
    total.right += h.right;
    total.any += h.any;
    total.scored += h.scored;
  }
  DirectionalHits out;
  out.k = k;
  out.documents = documents.size();
  out.chunks = total.scored;
  const auto s = static_cast<double>(total.scored);
  out.left = static_cast<double>(total.left) / s;
  out.right = static_cast<double>(total.right) / s;
  out.any = static_cast<double>(total.any) / s;
  return out;
}

TextEmbedder model_embedder(const Model& model, const Vocabulary& vocab,
                            const PoolingStrategy& pooling, const ChunkingStrategy& chunking,
                            std::size_t query_max_len, std::size_t doc_max_len,
                            std::uint64_t seed) {
  return [&model, &vocab, pooling, chunking, query_max_len, doc_max_len, seed](
             const std::vector<std::string>& texts, bool queries) {
    EmbedOptions options;
    options.pooling = pooling;
    options.chunking = chunking;
    options.max_len = queries ? query_max_len : doc_max_len;
    options.seed = seed;
    return embed_corpus(texts, model, vocab, options);
  };
}

TextEmbedder bag_of_key_words_embedder(const PlantedKeyGenerator& generator) {
  const std::size_t dims = generator.config().key_words;
  return [&generator, dims](const std::vector<std::string>& texts, bool) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(texts.size()),
                              static_cast<Eigen::Index>(dims));
    for (std::size_t i = 0; i < texts.size(); ++i) {
      for (const auto& w : split_words(texts[i])) {
        if (!generator.is_key_word(w.text)) continue;
        std::size_t index = 0;
        const char* first = w.text.data() + 1;
        const char* last = w.text.data() + w.text.size();
        if (std::from_chars(first, last, index).ptr != last || index >= dims) continue;
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(index)) += 1.0;
      }
    }
    return normalized_rows(std::move(out));
  };
}

TextEmbedder random_embedder(std::size_t dims, std::uint64_t seed) {
  return [dims, seed](const std::vector<std::string>& texts, bool queries) {
    Matrix out(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(dims));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      Rng rng(mix_seed(mix_seed(seed, queries ? 1 : 2), io::fnv1a(texts[i])));
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(static_cast<Eigen::Index>(i), c) = normal(rng);
    }
    return normalized_rows(std::move(out));
  };
}

Proportion wilson_interval(std::size_t hits, std::size_t trials) {
  Proportion p;
  p.hits = hits;
  p.trials = trials;
  if (trials == 0) return p;
  constexpr double z = 1.959963984540054;
  const auto n = static_cast<double>(trials);
  p.rate = static_cast<double>(hits) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p.rate + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p.rate * (1.0 - p.rate) / n + z2 / (4.0 * n * n)) / denom;
  p.low = std::max(0.0, center - half);
  p.high = std::min(1.0, center + half);
  return p;
}

namespace {

nlohmann::ordered_json proportion_json(const Proportion& p) {
  nlohmann::ordered_json j;
  j["hits"] = p.hits;
  j["trials"] = p.trials;
  j["rate"] = p.rate;
  j["ci95"] = {p.low, p.high};
  return j;
}

}  // namespace

std::string LongContextReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, rows] : per_strategy) {
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json e;
      e["length"] = r.length;
      e["chance"] = r.chance;
      e["p1"] = proportion_json(r.p1);
      e["final_quarter"] = proportion_json(r.final_quarter);
      list.push_back(e);
    }
    j[name] = list;
  }
  return j.dump(2) + "\n";
}

std::string LongContextReport::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(17)
      << "strategy,length,trials,p1,p1_low,p1_high,fq_trials,fq_p1,fq_low,fq_high,chance\n";
  for (const auto& [name, rows] : per_strategy) {
    for (const auto& r : rows) {
      out << name << ',' << r.length << ',' << r.p1.trials << ',' << r.p1.rate << ','
          << r.p1.low << ',' << r.p1.high << ',' << r.final_quarter.trials << ','
          << r.final_quarter.rate << ',' << r.final_quarter.low << ',' << r.final_quarter.high
          << ',' << r.chance << '\n';
    }
  }
  return out.str();
}

LongContextReport synthetic_longctx_suite(
    const std::vector<std::pair<std::string, TextEmbedder>>& embedders,
    const LongContextConfig& config) {
  if (config.trials < 1) throw std::invalid_argument("longctx: trials must be >= 1");
  const PlantedKeyGenerator generator(config.planted);
  LongContextReport report;
  for (std::size_t li = 0; li < config.lengths.size(); ++li) {
    const std::size_t length = config.lengths[li];
    Rng rng(mix_seed(config.seed, length));
    const auto inst = generator.instances(config.trials, length, config.position_lo,
                                          config.position_hi, rng);
    std::vector<std::string> docs, queries;
    for (const auto& i : inst) {
      docs.push_back(i.document);
      queries.push_back(i.query);
    }
    for (const auto& [name, embed] : embedders) {
      const Matrix d = embed(docs, false);
      const Matrix q = embed(queries, true);
      const Matrix scores = q * d.transpose();
      std::size_t hits = 0, fq_hits = 0, fq_trials = 0;
      for (std::size_t t = 0; t < inst.size(); ++t) {
        const auto best = top_k(scores.row(static_cast<Eigen::Index>(t)).transpose(), 1);
        const bool hit = best.front() == t;
        hits += hit;
        if (inst[t].relative_position >= 0.75) {
          ++fq_trials;
          fq_hits += hit;
        }
      }
      LengthResult r;
      r.length = length;
      r.p1 = wilson_interval(hits, inst.size());
      r.final_quarter = wilson_interval(fq_hits, fq_trials);
      r.chance = 1.0 / static_cast<double>(inst.size());
      report.per_strategy[name].push_back(r);
    }
  }
  return report;
}

}  // namespace lmk
