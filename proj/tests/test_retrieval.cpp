#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lmk/io.hpp"
#include "lmk/retrieval.hpp"
#include "lmk/trainer.hpp"
#include "oracles.hpp"

using namespace lmk;

namespace {

Matrix random_unit_rows(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  m.rowwise().normalize();
  return m;
}

std::vector<std::string> doc_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("d" + std::to_string(i));
  return ids;
}

}  // namespace

TEST_CASE("rank-2 binary relevance gives 1/log2(3)") {
  Qrels q;
  q.judgments["q"]["b"] = 1;
  const Run run{{"q", {"a", "b", "c"}}};
  const auto r = evaluate(run, q, {1, 10});
  CHECK(std::abs(r.mean_ndcg.at(10) - 1.0 / std::log2(3.0)) < 1e-12);
  CHECK(r.mean_p1 == 0.0);
  CHECK(r.mean_mrr.at(10) == 0.5);
  CHECK(r.mean_hit.at(1) == 0.0);
  CHECK(r.mean_hit.at(10) == 1.0);
}

TEST_CASE("perfect and empty rankings") {
  Qrels q;
  q.judgments["q"] = {{"a", 2}, {"b", 1}};
  auto r = evaluate(Run{{"q", {"a", "b", "x"}}}, q, {10});
  CHECK(r.mean_ndcg.at(10) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.mean_p1 == 1.0);
  r = evaluate(Run{{"q", {"x", "y"}}}, q, {10});
  CHECK(r.mean_ndcg.at(10) == 0.0);
  CHECK(r.mean_mrr.at(10) == 0.0);
  CHECK(r.mean_hit.at(10) == 0.0);
}

TEST_CASE("unjudged and missing queries are counted") {
  Qrels q;
  q.judgments["q1"]["a"] = 1;
  q.judgments["q2"]["a"] = 0;
  q.judgments["q3"]["b"] = 1;
  const Run run{{"q1", {"a"}}, {"q2", {"a"}}, {"q4", {"a"}}};
  const auto r = evaluate(run, q, {10});
  CHECK(r.evaluated == 2);
  CHECK(r.excluded_unjudged == 2);
  CHECK(r.missing_from_run == 1);
  CHECK(r.mean_p1 == 0.5);
  CHECK_THROWS(evaluate(run, q, {0}));
}

TEST_CASE("metrics match the brute-force oracle") {
  Rng rng(3);
  for (int inst = 0; inst < 20; ++inst) {
    Qrels q;
    Run run;
    const auto ids = doc_ids(20);
    for (int qi = 0; qi < 5; ++qi) {
      const std::string qid = "q" + std::to_string(qi);
      auto ranking = ids;
      std::shuffle(ranking.begin(), ranking.end(), rng);
      ranking.resize(std::uniform_int_distribution<std::size_t>(0, 20)(rng));
      run[qid] = ranking;
      for (const auto& d : ids) {
        const int g = std::uniform_int_distribution<int>(0, 6)(rng);
        if (g <= 3) q.judgments[qid][d] = g;
      }
      q.judgments[qid]["d0"] = 1 + static_cast<int>(rng() % 3);
    }
    const auto r = evaluate(run, q, {1, 3, 10});
    for (const auto& [qid, ranking] : run) {
      for (std::size_t k : {1u, 3u, 10u}) {
        const auto o = oracle::metrics(ranking, q.judgments[qid], k);
        const auto& m = r.per_query.at(qid);
        CHECK(std::abs(m.ndcg.at(k) - o.ndcg) < 1e-9);
        CHECK(std::abs(m.mrr.at(k) - o.mrr) < 1e-9);
        CHECK(std::abs(m.hit.at(k) - o.hit) < 1e-9);
        CHECK(m.p1 == o.p1);
        CHECK(m.mrr.at(k) <= m.hit.at(k));
      }
      CHECK(r.per_query.at(qid).hit.at(1) == r.per_query.at(qid).p1);
      CHECK(r.per_query.at(qid).hit.at(3) <= r.per_query.at(qid).hit.at(10));
    }
  }
}

TEST_CASE("moving a relevant document up never lowers NDCG") {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    auto ranking = doc_ids(12);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    Qrels q;
    q.judgments["q"][ranking[7]] = 2;
    q.judgments["q"][ranking[2]] = 1;
    double last = evaluate(Run{{"q", ranking}}, q, {10}).mean_ndcg.at(10);
    for (std::size_t pos = 7; pos > 0; --pos) {
      std::swap(ranking[pos], ranking[pos - 1]);
      if (q.judgments["q"].count(ranking[pos])) break;  // swapped past another relevant doc
      const double now = evaluate(Run{{"q", ranking}}, q, {10}).mean_ndcg.at(10);
      CHECK(now >= last - 1e-15);
      last = now;
    }
  }
}

TEST_CASE("search is exact top-k with id tie-breaks") {
  Rng rng(5);
  const Matrix corpus = random_unit_rows(rng, 100, 8);
  const auto ids = doc_ids(100);
  const Eigen::RowVectorXd query = corpus.row(42);
  auto hits = search(query, corpus, ids, 5);
  REQUIRE(hits.size() == 5);
  CHECK(hits[0].id == "d42");
  CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<std::pair<double, std::string>> all;
  for (Eigen::Index i = 0; i < 100; ++i) all.emplace_back(-corpus.row(i).dot(query), ids[static_cast<std::size_t>(i)]);
  std::sort(all.begin(), all.end());
  const auto full = search(query, corpus, ids, 1000);
  REQUIRE(full.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) CHECK(full[i].id == all[i].second);

  Matrix ties = Matrix::Ones(3, 2);
  const auto tied = search(Eigen::RowVector2d(1, 0), ties, {"c", "a", "b"}, 3);
  CHECK(tied[0].id == "a");
  CHECK(tied[2].id == "c");
  CHECK_THROWS(search(query, corpus, ids, 0));
}

TEST_CASE("embedding is deterministic, batch independent and matches single runs") {
  std::vector<std::string> words;
  for (int i = 0; i < 30; ++i) words.push_back("t" + std::to_string(i));
  const Vocabulary v(words);
  EncoderConfig c;
  c.layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_head = 4;
  c.ffn_dim = 16;
  c.vocab_size = v.size();
  const Model m = Model::init(c, std::nullopt, 1);
  std::vector<std::string> texts{"t1 t2 t3 t4 t5", "t6 t7", "t1 t2 t3 t4 t5", "t9 t8 t7 t6 t5 t4 t3"};
  EmbedOptions o;
  o.pooling = PoolingStrategy::lmk();
  o.chunking = ChunkingStrategy::variable({1, 2, 3});
  o.max_len = 64;
  o.batch_size = 1;
  const Matrix one = embed_corpus(texts, m, v, o);
  o.batch_size = 32;
  const Matrix many = embed_corpus(texts, m, v, o);
  CHECK(one == many);
  CHECK(one.row(0) == one.row(2));
  for (Eigen::Index i = 0; i < one.rows(); ++i) {
    CHECK(one.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
    Rng rng(mix_seed(o.seed, io::fnv1a(texts[static_cast<std::size_t>(i)])));
    const auto seq = tokenize_for(texts[static_cast<std::size_t>(i)], v, o.pooling, o.chunking, o.max_len, rng);
    CHECK(embed_sequence(seq, m, o.pooling).vector == one.row(i));
  }
}

TEST_CASE("corpus, qrels and run files") {
  const auto dir = std::filesystem::temp_directory_path();
  std::ofstream(dir / "lmk_corpus.jsonl") << R"({"id": "a", "text": "x y"})" << '\n'
                                          << R"({"id": 7, "text": "z"})" << '\n';
  const Corpus c = Corpus::read_jsonl(dir / "lmk_corpus.jsonl");
  CHECK(c.ids == std::vector<std::string>{"a", "7"});
  std::ofstream(dir / "lmk_dup.jsonl") << R"({"id": "a", "text": "x"})" << '\n'
                                       << R"({"id": "a", "text": "y"})" << '\n';
  CHECK_THROWS(Corpus::read_jsonl(dir / "lmk_dup.jsonl"));

  std::ofstream(dir / "lmk_qrels.txt") << "q1 d1 1\nq1 0 d2 2\n";
  const Qrels q = Qrels::read(dir / "lmk_qrels.txt");
  CHECK(q.judgments.at("q1").at("d2") == 2);
  std::ofstream(dir / "lmk_bad_qrels.txt") << "q1 d1\n";
  CHECK_THROWS(Qrels::read(dir / "lmk_bad_qrels.txt"));

  write_run(dir / "lmk_run.trec", {{"q1", {{"d2", 0.9}, {"d1", 0.5}}}}, "test");
  const Run run = read_run(dir / "lmk_run.trec");
  CHECK(run.at("q1") == std::vector<std::string>{"d2", "d1"});

  const auto report = evaluate(run, q, {10});
  CHECK(report.to_json() == evaluate(run, q, {10}).to_json());
  CHECK(report.to_csv().rfind("query,P@1,NDCG@10,MRR@10,Hit@10\n", 0) == 0);
  for (const char* f : {"lmk_corpus.jsonl", "lmk_dup.jsonl", "lmk_qrels.txt", "lmk_bad_qrels.txt", "lmk_run.trec"}) {
    std::filesystem::remove(dir / f);
  }
}
