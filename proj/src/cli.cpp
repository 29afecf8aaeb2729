#include "lmk/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"

#include "lmk/diagnostics.hpp"
#include "lmk/io.hpp"
#include "lmk/model.hpp"
#include "lmk/planted_key.hpp"
#include "lmk/retrieval.hpp"
#include "lmk/retromae.hpp"
#include "lmk/trainer.hpp"

namespace lmk::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json defaults() {
  return json::parse(R"({
    "seed": 0,
    "output": "lmk_out",
    "data": {"corpus": "", "queries": "", "triplets": "", "qrels": "", "run": "",
             "vocab": "", "model": ""},
    "vocab": {"max_size": 2000},
    "encoder": {"layers": 2, "d_model": 64, "n_heads": 4, "d_head": 16, "ffn_dim": 128,
                "rope_base": 10000.0, "dropout": 0.0},
    "latent": {"latents": 64, "d_latent": 0, "d_head": 0, "ffn_dim": 0},
    "training": {"temperature": 0.02, "steps": 100, "batch_size": 8, "hard_negatives": 7,
                 "learning_rate": 0.001, "warmup_steps": 0, "query_max_len": 32,
                 "doc_max_len": 128, "pooling": "cls", "chunking": "variable:32,64,128,256",
                 "planted": false, "planted_min_len": 16, "planted_max_len": 110,
                 "log_every": 10},
    "retromae": {"encoder_mask_ratio": 0.3, "decoder_mask_ratio": 0.5, "pooling": "cls",
                 "chunking": "variable:8,16,32", "max_len": 128, "learning_rate": 0.001,
                 "steps": 100, "batch_size": 8},
    "embed": {"pooling": "cls", "chunking": "fixed:128", "max_len": 512, "query_max_len": 64,
              "batch_size": 32},
    "search": {"k": 10},
    "eval": {"ks": [1, 10]},
    "diagnose": {"tokens": 0, "granularity": 128, "base": 10000.0, "d_head": 64,
                 "max_dist": 1024, "n_bins": 20, "k": 10, "lengths": [128, 1024],
                 "trials": 300, "position_lo": 0.0, "position_hi": 1.0, "models": []}
  })");
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Recursively overlays `patch` onto `base`, rejecting keys or types that the
// defaults do not declare.
void merge(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw UsageError(where + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string name = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw UsageError("unknown config key '" + name + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, name);
    } else {
      if (!same_kind(slot, value)) throw UsageError("config key '" + name + "' has the wrong type");
      slot = value;
    }
  }
}

void apply_override(json& config, const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) throw UsageError("override '" + arg + "' needs '=value'");
  const std::string path = arg.substr(2, eq - 2);
  const std::string raw = arg.substr(eq + 1);
  json* slot = &config;
  std::string name;
  std::istringstream parts(path);
  for (std::string part; std::getline(parts, part, '.');) {
    name += (name.empty() ? "" : ".") + part;
    if (!slot->is_object() || !slot->contains(part)) {
      throw UsageError("unknown config key '" + name + "'");
    }
    slot = &(*slot)[part];
  }
  if (slot->is_object()) throw UsageError("'" + path + "' is a section, not a key");
  if (slot->is_string()) {
    *slot = raw;
    return;
  }
  const json value = json::parse(raw, nullptr, false);
  if (value.is_discarded() || !same_kind(*slot, value)) {
    throw UsageError("bad value for '" + path + "': " + raw);
  }
  *slot = value;
}

std::string require_path(const json& config, const std::string& key) {
  const std::string p = config["data"][key].get<std::string>();
  if (p.empty()) throw UsageError("missing --data." + key);
  if (!fs::exists(p)) throw std::runtime_error("no such file: " + p);
  return p;
}

EncoderConfig encoder_config(const json& c, std::size_t vocab_size) {
  EncoderConfig e;
  e.layers = c["layers"];
  e.d_model = c["d_model"];
  e.n_heads = c["n_heads"];
  e.d_head = c["d_head"];
  e.ffn_dim = c["ffn_dim"];
  e.rope_base = c["rope_base"];
  e.dropout = c["dropout"];
  e.vocab_size = vocab_size;
  e.validate();
  return e;
}

LatentAttentionConfig latent_config(const json& c) {
  LatentAttentionConfig l;
  l.latents = c["latents"];
  l.d_latent = c["d_latent"];
  l.d_head = c["d_head"];
  l.ffn_dim = c["ffn_dim"];
  return l;
}

TrainingConfig training_config(const json& c, std::uint64_t seed) {
  TrainingConfig t;
  t.temperature = c["temperature"];
  t.steps = c["steps"];
  t.batch_size = c["batch_size"];
  t.hard_negatives = c["hard_negatives"];
  t.learning_rate = c["learning_rate"];
  t.warmup_steps = c["warmup_steps"];
  t.query_max_len = c["query_max_len"];
  t.doc_max_len = c["doc_max_len"];
  t.pooling = PoolingStrategy::parse(c["pooling"].get<std::string>());
  t.chunking = ChunkingStrategy::parse(c["chunking"].get<std::string>());
  t.seed = seed;
  t.validate();
  return t;
}

EmbedOptions embed_options(const json& c, std::uint64_t seed) {
  EmbedOptions o;
  o.pooling = PoolingStrategy::parse(c["pooling"].get<std::string>());
  o.chunking = ChunkingStrategy::parse(c["chunking"].get<std::string>());
  o.max_len = c["max_len"];
  o.batch_size = c["batch_size"];
  o.seed = seed;
  return o;
}

class RunDir {
 public:
  RunDir(const json& config, const std::string& command) : config_(config), command_(command) {
    dir_ = config["output"].get<std::string>();
  }
  void input(const std::string& path) { inputs_[path] = io::sha256_hex(io::read_file(path)); }
  // Created on first use so that bad arguments leave nothing behind.
  fs::path path(const std::string& name) const {
    fs::create_directories(dir_);
    return dir_ / name;
  }
  void finish() const {
    io::write_file(path("resolved_config.json"), config_.dump(2) + "\n");
    json info;
    info["command"] = command_;
    info["seed"] = config_["seed"];
    info["version"] = kVersion;
    info["inputs"] = json::object();
    for (const auto& [p, digest] : inputs_) info["inputs"][p] = digest;
    io::write_file(path("run_info.json"), info.dump(2) + "\n");
  }

 private:
  json config_;
  std::string command_;
  fs::path dir_;
  std::map<std::string, std::string> inputs_;
};

std::vector<std::string> corpus_texts(const std::string& path) {
  return Corpus::read_jsonl(path).texts;
}

int cmd_build_vocab(const json& config, std::ostream& out) {
  RunDir run(config, "build-vocab");
  const auto corpus = require_path(config, "corpus");
  run.input(corpus);
  const auto texts = corpus_texts(corpus);
  const Vocabulary vocab = build_vocab(texts, config["vocab"]["max_size"]);
  vocab.save(run.path("vocab.txt"));
  run.finish();
  out << "vocabulary: " << vocab.size() << " tokens -> " << run.path("vocab.txt").string() << '\n';
  return 0;
}

Vocabulary load_vocab(const json& config, RunDir& run) {
  const auto path = require_path(config, "vocab");
  run.input(path);
  return Vocabulary::load(path);
}

Model load_model(const json& config, RunDir& run) {
  const auto path = require_path(config, "model");
  run.input(path);
  return Model::load(path);
}

int cmd_train(const json& config, std::ostream& out, std::ostream& err) {
  RunDir run(config, "train");
  const std::uint64_t seed = config["seed"];
  const json& tc = config["training"];
  const TrainingConfig training = training_config(tc, seed);
  const bool planted = tc["planted"];
  const PlantedKeyGenerator generator;

  std::optional<Vocabulary> vocab;
  if (planted && config["data"]["vocab"].get<std::string>().empty()) {
    vocab = generator.vocabulary();
  } else {
    vocab = load_vocab(config, run);
  }
  TripletBatch triplets;
  if (!planted) {
    const auto path = require_path(config, "triplets");
    run.input(path);
    triplets = read_triplets(path);
    if (triplets.size() == 0) throw std::runtime_error("no training triplets in " + path);
  }

  Model model;
  if (!config["data"]["model"].get<std::string>().empty()) {
    model = load_model(config, run);
    if (model.config.vocab_size != vocab->size()) {
      throw std::runtime_error("model vocabulary size does not match the vocabulary file");
    }
  } else {
    std::optional<LatentAttentionConfig> latent;
    if (training.pooling.kind == PoolingKind::LatentAttention) latent = latent_config(config["latent"]);
    model = Model::init(encoder_config(config["encoder"], vocab->size()), latent, seed);
  }

  Trainer trainer(model, *vocab, training);
  Rng batch_rng(mix_seed(seed, 0x7261696eULL));
  std::ofstream log(run.path("train_log.csv"));
  log << std::setprecision(17) << "step,loss,learning_rate,grad_norm\n";
  const std::size_t log_every = std::max<std::size_t>(1, tc["log_every"].get<std::size_t>());
  std::size_t cursor = 0;
  for (std::size_t step = 0; step < training.steps; ++step) {
    TripletBatch batch;
    if (planted) {
      batch = generator.training_batch(training.batch_size, tc["planted_min_len"],
                                       tc["planted_max_len"], training.hard_negatives, batch_rng);
    } else {
      while (batch.size() < training.batch_size) {
        const auto part = slice(triplets, cursor, training.batch_size - batch.size());
        for (std::size_t i = 0; i < part.size(); ++i) {
          batch.queries.push_back(part.queries[i]);
          batch.positives.push_back(part.positives[i]);
          batch.negatives.push_back(part.negatives[i]);
        }
        cursor = (cursor + part.size()) % triplets.size();
      }
    }
    const LossReport r = trainer.step(batch);
    const double lr = warmup_learning_rate(training.learning_rate, step, training.warmup_steps);
    log << step << ',' << r.loss << ',' << lr << ',' << r.grad_norm << '\n';
    if (step % log_every == 0 || step + 1 == training.steps) {
      err << "step " << step << " loss " << r.loss << '\n';
    }
  }
  if (!model.encoder.all_finite()) throw std::runtime_error("training diverged (non-finite weights)");
  model.save(run.path("model.bin"));
  std::ofstream(run.path("model.training.json")) << tc.dump(2) << '\n';
  if (planted) vocab->save(run.path("vocab.txt"));
  run.finish();
  out << "model -> " << run.path("model.bin").string() << '\n';
  return 0;
}

int cmd_pretrain(const json& config, std::ostream& out, std::ostream& err) {
  RunDir run(config, "pretrain");
  const std::uint64_t seed = config["seed"];
  const json& rc = config["retromae"];
  const Vocabulary vocab = load_vocab(config, run);
  const auto corpus = require_path(config, "corpus");
  run.input(corpus);
  const auto texts = corpus_texts(corpus);
  if (texts.empty()) throw std::runtime_error("empty corpus " + corpus);

  RetroMaeConfig cfg;
  cfg.encoder_mask_ratio = rc["encoder_mask_ratio"];
  cfg.decoder_mask_ratio = rc["decoder_mask_ratio"];
  cfg.pooling = PoolingStrategy::parse(rc["pooling"].get<std::string>());
  cfg.chunking = ChunkingStrategy::parse(rc["chunking"].get<std::string>());
  cfg.max_len = rc["max_len"];
  cfg.learning_rate = rc["learning_rate"];
  cfg.seed = seed;
  cfg.validate();

  Model model = Model::init(encoder_config(config["encoder"], vocab.size()), std::nullopt, seed);
  Rng rng(mix_seed(seed, 0x646563ULL));
  RetroMaeDecoder decoder = RetroMaeDecoder::init(model.config, rng);
  RetroMaePretrainer trainer(model, decoder, vocab, cfg);

  const std::size_t steps = rc["steps"];
  const std::size_t batch_size = std::max<std::size_t>(1, rc["batch_size"].get<std::size_t>());
  std::ofstream log(run.path("pretrain_log.csv"));
  log << std::setprecision(17) << "step,loss\n";
  std::size_t cursor = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<std::string> batch;
    for (std::size_t i = 0; i < batch_size; ++i) {
      batch.push_back(texts[cursor]);
      cursor = (cursor + 1) % texts.size();
    }
    const double loss = trainer.step(batch);
    log << step << ',' << loss << '\n';
    if (step % 10 == 0 || step + 1 == steps) err << "step " << step << " loss " << loss << '\n';
  }
  model.save(run.path("model.bin"));
  run.finish();
  out << "model -> " << run.path("model.bin").string() << '\n';
  return 0;
}

int cmd_embed(const json& config, std::ostream& out) {
  RunDir run(config, "embed");
  const std::uint64_t seed = config["seed"];
  const Vocabulary vocab = load_vocab(config, run);
  const Model model = load_model(config, run);
  const auto path = require_path(config, "corpus");
  run.input(path);
  const Corpus corpus = Corpus::read_jsonl(path);
  const EmbedOptions options = embed_options(config["embed"], seed);
  const Matrix rows = embed_corpus(corpus.texts, model, vocab, options);
  save_embeddings(run.path("embeddings.bin"), rows, options.pooling.tag());
  export_embeddings_text(run.path("embeddings.tsv"), corpus.ids, rows);
  run.finish();
  out << rows.rows() << " embeddings -> " << run.path("embeddings.bin").string() << '\n';
  return 0;
}

int cmd_search(const json& config, std::ostream& out) {
  RunDir run(config, "search");
  const std::uint64_t seed = config["seed"];
  const Vocabulary vocab = load_vocab(config, run);
  const Model model = load_model(config, run);
  const auto corpus_path = require_path(config, "corpus");
  const auto queries_path = require_path(config, "queries");
  run.input(corpus_path);
  run.input(queries_path);
  const Corpus corpus = Corpus::read_jsonl(corpus_path);
  const Corpus queries = Corpus::read_jsonl(queries_path);

  EmbedOptions options = embed_options(config["embed"], seed);
  const Matrix docs = embed_corpus(corpus.texts, model, vocab, options);
  options.max_len = config["embed"]["query_max_len"];
  const Matrix q = embed_corpus(queries.texts, model, vocab, options);
  const std::size_t k = config["search"]["k"];
  std::map<std::string, std::vector<ScoredDoc>> results;
  for (std::size_t i = 0; i < queries.ids.size(); ++i) {
    results[queries.ids[i]] = search(q.row(static_cast<Eigen::Index>(i)), docs, corpus.ids, k);
  }
  write_run(run.path("run.trec"), results, options.pooling.tag());
  run.finish();
  out << results.size() << " queries -> " << run.path("run.trec").string() << '\n';
  return 0;
}

int cmd_eval(const json& config, std::ostream& out) {
  RunDir run(config, "eval");
  const auto run_path = require_path(config, "run");
  const auto qrels_path = require_path(config, "qrels");
  run.input(run_path);
  run.input(qrels_path);
  const std::vector<std::size_t> ks = config["eval"]["ks"].get<std::vector<std::size_t>>();
  const MetricReport report = evaluate(read_run(run_path), Qrels::read(qrels_path), ks);
  io::write_file(run.path("metrics.json"), report.to_json());
  io::write_file(run.path("metrics.csv"), report.to_csv());
  run.finish();
  out << std::setprecision(4) << std::fixed;
  out << "queries " << report.evaluated << "  P@1 " << report.mean_p1;
  for (std::size_t k : report.ks) out << "  NDCG@" << k << ' ' << report.mean_ndcg.at(k);
  out << '\n';
  return 0;
}

std::vector<std::vector<TokenId>> corpus_tokens(const std::string& path, const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> docs;
  for (const auto& t : corpus_texts(path)) docs.push_back(encode_text(t, vocab));
  return docs;
}

int cmd_diagnose(const std::string& what, const json& config, std::ostream& out) {
  const json& dc = config["diagnose"];
  const std::uint64_t seed = config["seed"];
  if (what == "overhead") {
    const OverheadReport r = lmk_overhead(dc["tokens"], dc["granularity"]);
    out << r.markers << '\n';
    return 0;
  }
  RunDir run(config, "diagnose " + what);
  if (what == "decay") {
    const auto curve = rope_decay_curve(dc["base"], dc["d_head"], dc["max_dist"]);
    io::write_file(run.path("decay.csv"), curve_to_csv(curve, "distance", "value"));
    run.finish();
    out << "decay curve -> " << run.path("decay.csv").string() << '\n';
    return 0;
  }
  if (what == "span") {
    const Vocabulary vocab = load_vocab(config, run);
    const Model model = load_model(config, run);
    const auto path = require_path(config, "corpus");
    run.input(path);
    const EmbedOptions options = embed_options(config["embed"], seed);
    std::vector<TokenSequence> docs;
    for (const auto& text : corpus_texts(path)) {
      Rng rng(mix_seed(seed, io::fnv1a(text)));
      docs.push_back(tokenize_for(text, vocab, options.pooling, options.chunking, options.max_len, rng));
    }
    const SpanProfile p = attention_span_profile(model, docs, options.pooling, dc["n_bins"]);
    io::write_file(run.path("span.csv"), p.to_csv());
    io::write_file(run.path("span.json"), p.to_json());
    run.finish();
    out << std::setprecision(4) << "first quarter " << p.mass(0.0, 0.25) << "  last quarter "
        << p.mass(0.75, 1.0) << '\n';
    return 0;
  }
  if (what == "directional") {
    const Vocabulary vocab = load_vocab(config, run);
    const Model model = load_model(config, run);
    const auto path = require_path(config, "corpus");
    run.input(path);
    const DirectionalHits h =
        directional_hits(model, corpus_tokens(path, vocab), vocab.specials(), dc["granularity"], dc["k"]);
    io::write_file(run.path("directional.json"), h.to_json());
    run.finish();
    out << std::setprecision(4) << "left " << h.left << "  right " << h.right << "  any " << h.any
        << '\n';
    return 0;
  }
  if (what == "longctx") {
    LongContextConfig lc;
    lc.lengths = dc["lengths"].get<std::vector<std::size_t>>();
    lc.trials = dc["trials"];
    lc.position_lo = dc["position_lo"];
    lc.position_hi = dc["position_hi"];
    lc.seed = seed;
    const PlantedKeyGenerator generator(lc.planted);
    const Vocabulary vocab = generator.vocabulary();
    std::vector<Model> models;
    std::vector<json> specs;
    for (const auto& m : dc["models"]) {
      if (!m.contains("name") || !m.contains("model") || !m.contains("pooling")) {
        throw UsageError("diagnose.models entries need name, model and pooling");
      }
      const std::string path = m["model"];
      if (!fs::exists(path)) throw std::runtime_error("no such file: " + path);
      run.input(path);
      models.push_back(Model::load(path));
      specs.push_back(m);
    }
    std::vector<std::pair<std::string, TextEmbedder>> embedders;
    embedders.emplace_back("oracle", bag_of_key_words_embedder(generator));
    embedders.emplace_back("random", random_embedder(64, seed));
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto pooling = PoolingStrategy::parse(specs[i]["pooling"].get<std::string>());
      const auto chunking =
          ChunkingStrategy::parse(specs[i].value("chunking", std::string("fixed:16")));
      embedders.emplace_back(specs[i]["name"].get<std::string>(),
                             model_embedder(models[i], vocab, pooling, chunking,
                                            config["embed"]["query_max_len"], kUnlimited, seed));
    }
    const LongContextReport report = synthetic_longctx_suite(embedders, lc);
    io::write_file(run.path("longctx.json"), report.to_json());
    io::write_file(run.path("longctx.csv"), report.to_csv());
    run.finish();
    out << report.to_csv();
    return 0;
  }
  throw UsageError("unknown diagnostic '" + what + "'");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  // Pull out --section.key=value overrides; everything else goes to CLI11.
  std::vector<std::string> rest{args.empty() ? std::string("lmk") : args.front()};
  std::vector<std::string> overrides;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    const auto eq = a.find('=');
    const auto dot = a.find('.');
    if (a.rfind("--", 0) == 0 && dot != std::string::npos && (eq == std::string::npos || dot < eq)) {
      overrides.push_back(a);
    } else {
      rest.push_back(a);
    }
  }

  CLI::App app{"Landmark pooling toolkit: training, embedding, retrieval and diagnostics"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config_path, output;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", output, "output directory");
  app.add_option("--seed", seed, "random seed");

  std::map<std::string, CLI::App*> commands;
  for (const char* name : {"build-vocab", "train", "pretrain", "embed", "search", "eval"}) {
    commands[name] = app.add_subcommand(name);
  }
  commands["build-vocab"]->description("build a vocabulary from data.corpus");
  commands["train"]->description("contrastive training on data.triplets (or planted keys)");
  commands["pretrain"]->description("masked-autoencoder pretraining on data.corpus");
  commands["embed"]->description("embed data.corpus with data.model");
  commands["search"]->description("rank data.corpus for data.queries");
  commands["eval"]->description("score data.run against data.qrels");
  CLI::App* diagnose = app.add_subcommand("diagnose", "analyses");
  diagnose->require_subcommand(1);
  std::optional<std::size_t> tokens, granularity;
  std::map<std::string, CLI::App*> diagnostics;
  for (const char* name : {"span", "decay", "directional", "longctx", "overhead"}) {
    diagnostics[name] = diagnose->add_subcommand(name);
  }
  diagnostics["overhead"]->description("landmark tokens added for --tokens content tokens");
  diagnostics["overhead"]->add_option("--tokens", tokens, "content tokens");
  diagnostics["overhead"]->add_option("--granularity", granularity, "landmark granularity");
  diagnostics["directional"]->add_option("--granularity", granularity, "landmark granularity");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();
  diagnose->fallthrough();
  for (auto& [name, sub] : diagnostics) sub->fallthrough();

  std::vector<char*> argv;
  for (auto& a : rest) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    std::ostringstream help;
    app.exit(e, help, help);
    out << help.str();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg;
    app.exit(e, msg, msg);
    err << msg.str();
    return 2;
  }

  try {
    json config = defaults();
    if (!config_path.empty()) {
      const json file = json::parse(io::read_file(config_path), nullptr, false);
      if (file.is_discarded()) throw UsageError("config " + config_path + " is not valid JSON");
      merge(config, file, "");
    }
    if (seed) config["seed"] = *seed;
    if (!output.empty()) config["output"] = output;
    if (tokens) config["diagnose"]["tokens"] = *tokens;
    if (granularity) config["diagnose"]["granularity"] = *granularity;
    for (const auto& o : overrides) apply_override(config, o);

    for (const auto& [name, sub] : commands) {
      if (!sub->parsed()) continue;
      if (name == "build-vocab") return cmd_build_vocab(config, out);
      if (name == "train") return cmd_train(config, out, err);
      if (name == "pretrain") return cmd_pretrain(config, out, err);
      if (name == "embed") return cmd_embed(config, out);
      if (name == "search") return cmd_search(config, out);
      if (name == "eval") return cmd_eval(config, out);
    }
    for (const auto& [name, sub] : diagnostics) {
      if (sub->parsed()) return cmd_diagnose(name, config, out);
    }
    throw UsageError("no command given");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace lmk::cli
