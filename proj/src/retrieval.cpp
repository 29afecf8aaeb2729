#include "lmk/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "lmk/io.hpp"
#include "lmk/parallel.hpp"
#include "lmk/trainer.hpp"

namespace lmk {

void Corpus::validate() const {
  if (ids.size() != texts.size()) throw std::invalid_argument("corpus: one text per id");
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw std::invalid_argument("corpus: duplicate id '" + id + "'");
  }
  if (embeddings && static_cast<std::size_t>(embeddings->rows()) != ids.size()) {
    throw std::invalid_argument("corpus: embedding rows must match documents");
  }
}

Corpus Corpus::read_jsonl(const std::filesystem::path& path) {
  Corpus c;
  std::size_t line_no = 0;
  for (const auto& line : io::read_lines(path)) {
    ++line_no;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& id = j.at("id");
      c.ids.push_back(id.is_string() ? id.get<std::string>() : id.dump());
      c.texts.push_back(j.at("text").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

Qrels Qrels::read(const std::filesystem::path& path) {
  Qrels q;
  std::size_t line_no = 0;
  for (const auto& line : io::read_lines(path)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    // Also accept the 4-column TREC form "qid 0 docid rel".
    if (fields.size() == 4) fields.erase(fields.begin() + 1);
    if (fields.size() != 3) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 'qid docid rel'");
    }
    int rel = 0;
    try {
      rel = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad relevance");
    }
    if (rel < 0) throw std::runtime_error(path.string() + ": relevance must be >= 0");
    q.judgments[fields[0]][fields[1]] = rel;
  }
  return q;
}

Matrix embed_corpus(const std::vector<std::string>& texts, const Model& model,
                    const Vocabulary& vocab, const EmbedOptions& options) {
  if (options.batch_size < 1) throw std::invalid_argument("embed_corpus: batch size must be >= 1");
  Matrix out(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(model.config.d_model));
  for (std::size_t begin = 0; begin < texts.size(); begin += options.batch_size) {
    const std::size_t count = std::min(options.batch_size, texts.size() - begin);
    parallel_for(count, [&](std::size_t j) {
      const std::size_t i = begin + j;
      Rng rng(mix_seed(options.seed, io::fnv1a(texts[i])));
      const auto seq =
          tokenize_for(texts[i], vocab, options.pooling, options.chunking, options.max_len, rng);
      out.row(static_cast<Eigen::Index>(i)) = embed_sequence(seq, model, options.pooling).vector;
    });
  }
  return out;
}

std::vector<ScoredDoc> search(const Eigen::RowVectorXd& query, const Matrix& corpus,
                              const std::vector<std::string>& doc_ids, std::size_t k) {
  if (k < 1) throw std::invalid_argument("search: k must be >= 1");
  if (static_cast<std::size_t>(corpus.rows()) != doc_ids.size()) {
    throw std::invalid_argument("search: one id per corpus row");
  }
  if (query.size() != corpus.cols()) throw std::invalid_argument("search: dimension mismatch");
  const Eigen::VectorXd scores = corpus * query.transpose();
  std::vector<std::size_t> order(doc_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto better = [&](std::size_t a, std::size_t b) {
    const double sa = scores(static_cast<Eigen::Index>(a));
    const double sb = scores(static_cast<Eigen::Index>(b));
    if (sa != sb) return sa > sb;
    return doc_ids[a] < doc_ids[b];
  };
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    better);
  std::vector<ScoredDoc> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({doc_ids[order[i]], scores(static_cast<Eigen::Index>(order[i]))});
  }
  return out;
}

namespace {

QueryMetrics score_query(const std::vector<std::string>& ranking,
                         const std::map<std::string, int>& judged,
                         const std::vector<std::size_t>& ks) {
  auto rel_of = [&](const std::string& doc) {
    auto it = judged.find(doc);
    return it == judged.end() ? 0 : it->second;
  };
  std::vector<int> ideal;
  for (const auto& [doc, rel] : judged) {
    if (rel > 0) ideal.push_back(rel);
  }
  std::sort(ideal.rbegin(), ideal.rend());

  QueryMetrics m;
  m.p1 = !ranking.empty() && rel_of(ranking.front()) > 0 ? 1.0 : 0.0;
  for (std::size_t k : ks) {
    double dcg = 0.0, idcg = 0.0, rr = 0.0;
    for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
      const int rel = rel_of(ranking[r]);
      if (rel > 0) {
        dcg += (std::pow(2.0, rel) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
        if (rr == 0.0) rr = 1.0 / static_cast<double>(r + 1);
      }
    }
    for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) {
      idcg += (std::pow(2.0, ideal[r]) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
    }
    m.ndcg[k] = idcg > 0.0 ? dcg / idcg : 0.0;
    m.mrr[k] = rr;
    m.hit[k] = rr > 0.0 ? 1.0 : 0.0;
  }
  return m;
}

bool has_positive(const std::map<std::string, int>& judged) {
  return std::any_of(judged.begin(), judged.end(), [](const auto& kv) { return kv.second > 0; });
}

}  // namespace

MetricReport evaluate(const Run& run, const Qrels& qrels, std::vector<std::size_t> ks) {
  if (ks.empty()) ks = {1, 10};
  for (std::size_t k : ks) {
    if (k < 1) throw std::invalid_argument("evaluate: cutoffs must be >= 1");
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  MetricReport report;
  report.ks = ks;
  for (const auto& [qid, ranking] : run) {
    auto it = qrels.judgments.find(qid);
    if (it == qrels.judgments.end() || !has_positive(it->second)) ++report.excluded_unjudged;
  }
  static const std::vector<std::string> kEmpty;
  for (const auto& [qid, judged] : qrels.judgments) {
    if (!has_positive(judged)) continue;
    auto it = run.find(qid);
    if (it == run.end()) ++report.missing_from_run;
    report.per_query[qid] = score_query(it == run.end() ? kEmpty : it->second, judged, ks);
  }
  report.evaluated = report.per_query.size();
  for (std::size_t k : ks) {
    report.mean_ndcg[k] = report.mean_mrr[k] = report.mean_hit[k] = 0.0;
  }
  if (report.evaluated == 0) return report;
  const auto n = static_cast<double>(report.evaluated);
  for (const auto& [qid, m] : report.per_query) {
    report.mean_p1 += m.p1 / n;
    for (std::size_t k : ks) {
      report.mean_ndcg[k] += m.ndcg.at(k) / n;
      report.mean_mrr[k] += m.mrr.at(k) / n;
      report.mean_hit[k] += m.hit.at(k) / n;
    }
  }
  return report;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["ks"] = ks;
  j["evaluated"] = evaluated;
  j["excluded_unjudged"] = excluded_unjudged;
  j["missing_from_run"] = missing_from_run;
  nlohmann::ordered_json mean;
  mean["P@1"] = mean_p1;
  for (std::size_t k : ks) {
    mean["NDCG@" + std::to_string(k)] = mean_ndcg.at(k);
    mean["MRR@" + std::to_string(k)] = mean_mrr.at(k);
    mean["Hit@" + std::to_string(k)] = mean_hit.at(k);
  }
  j["mean"] = mean;
  nlohmann::ordered_json pq = nlohmann::ordered_json::object();
  for (const auto& [qid, m] : per_query) {
    nlohmann::ordered_json q;
    q["P@1"] = m.p1;
    for (std::size_t k : ks) {
      q["NDCG@" + std::to_string(k)] = m.ndcg.at(k);
      q["MRR@" + std::to_string(k)] = m.mrr.at(k);
      q["Hit@" + std::to_string(k)] = m.hit.at(k);
    }
    pq[qid] = q;
  }
  j["per_query"] = pq;
  return j.dump(2) + "\n";
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "query,P@1";
  for (std::size_t k : ks) out << ",NDCG@" << k << ",MRR@" << k << ",Hit@" << k;
  out << '\n';
  auto row = [&](const std::string& name, double p1, const std::map<std::size_t, double>& nd,
                 const std::map<std::size_t, double>& mr, const std::map<std::size_t, double>& ht) {
    out << name << ',' << p1;
    for (std::size_t k : ks) out << ',' << nd.at(k) << ',' << mr.at(k) << ',' << ht.at(k);
    out << '\n';
  };
  for (const auto& [qid, m] : per_query) row(qid, m.p1, m.ndcg, m.mrr, m.hit);
  row("mean", mean_p1, mean_ndcg, mean_mrr, mean_hit);
  return out.str();
}

void write_run(const std::filesystem::path& path,
               const std::map<std::string, std::vector<ScoredDoc>>& results, const std::string& tag) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& [qid, docs] : results) {
    for (std::size_t r = 0; r < docs.size(); ++r) {
      out << qid << " Q0 " << docs[r].id << ' ' << (r + 1) << ' ' << docs[r].score << ' ' << tag
          << '\n';
    }
  }
}

Run read_run(const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::pair<std::size_t, std::string>>> staged;
  std::size_t line_no = 0;
  for (const auto& line : io::read_lines(path)) {
    ++line_no;
    std::istringstream ss(line);
    std::string qid, q0, doc, tag;
    std::size_t rank = 0;
    double score = 0.0;
    if (!(ss >> qid >> q0 >> doc >> rank >> score)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad run line");
    }
    staged[qid].emplace_back(rank, doc);
  }
  Run run;
  for (auto& [qid, docs] : staged) {
    std::stable_sort(docs.begin(), docs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& out = run[qid];
    for (auto& [rank, doc] : docs) out.push_back(std::move(doc));
  }
  return run;
}

}  // namespace lmk
