#include "lmk/model.hpp"

#include <fstream>
#include <stdexcept>

#include "lmk/io.hpp"

namespace lmk {

Model Model::init(const EncoderConfig& config,
                  const std::optional<LatentAttentionConfig>& latent_config, std::uint64_t seed) {
  Rng rng(seed);
  Model m;
  m.config = config;
  m.encoder = EncoderParams::init(config, rng);
  if (latent_config) m.latent = LatentAttentionParams::init(*latent_config, config.d_model, rng);
  return m;
}

std::vector<Matrix*> Model::parameters() {
  std::vector<Matrix*> out;
  encoder.visit([&](const std::string&, Matrix& m) { out.push_back(&m); });
  if (latent) latent->visit([&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> out;
  auto* self = const_cast<Model*>(this);
  self->encoder.visit([&](const std::string& n, Matrix&) { out.push_back(n); });
  if (latent) self->latent->visit([&](const std::string& n, Matrix&) { out.push_back(n); });
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : parameters()) n += static_cast<std::size_t>(m->size());
  return n;
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("LMKENC01", 8);
  io::write_u64(out, config.layers);
  io::write_u64(out, config.d_model);
  io::write_u64(out, config.n_heads);
  io::write_u64(out, config.d_head);
  io::write_u64(out, config.ffn_dim);
  io::write_u64(out, config.vocab_size);
  io::write_f64(out, config.rope_base);
  io::write_f64(out, config.dropout);
  encoder.visit([&](const std::string&, const Matrix& m) { io::write_matrix(out, m); });
  io::write_u64(out, latent ? 1 : 0);
  if (latent) {
    const auto c = latent->config();
    io::write_u64(out, c.latents);
    io::write_u64(out, c.d_latent);
    io::write_u64(out, c.d_head);
    io::write_u64(out, c.ffn_dim);
    const_cast<LatentAttentionParams&>(*latent).visit(
        [&](const std::string&, Matrix& m) { io::write_matrix(out, m); });
  }
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "LMKENC01") {
    throw std::runtime_error("not an encoder file: " + path.string());
  }
  Model m;
  m.config.layers = io::read_u64(in);
  m.config.d_model = io::read_u64(in);
  m.config.n_heads = io::read_u64(in);
  m.config.d_head = io::read_u64(in);
  m.config.ffn_dim = io::read_u64(in);
  m.config.vocab_size = io::read_u64(in);
  m.config.rope_base = io::read_f64(in);
  m.config.dropout = io::read_f64(in);
  m.config.validate();
  // Shapes come from a deterministic init; values are overwritten below.
  Rng rng(0);
  m.encoder = EncoderParams::init(m.config, rng);
  m.encoder.visit([&](const std::string&, Matrix& t) { io::read_matrix(in, t); });
  if (io::read_u64(in) == 1) {
    LatentAttentionConfig c;
    c.latents = io::read_u64(in);
    c.d_latent = io::read_u64(in);
    c.d_head = io::read_u64(in);
    c.ffn_dim = io::read_u64(in);
    m.latent = LatentAttentionParams::init(c, m.config.d_model, rng);
    m.latent->visit([&](const std::string&, Matrix& t) { io::read_matrix(in, t); });
  }
  if (!m.encoder.all_finite()) throw std::runtime_error("encoder file contains non-finite values");
  return m;
}

TokenSequence tokenize_for(std::span<const TokenId> tokens, const SpecialIds& specials,
                           const PoolingStrategy& pooling, const ChunkingStrategy& chunking,
                           std::size_t max_len, Rng& rng,
                           std::optional<std::span<const std::size_t>> boundaries) {
  if (pooling.uses_landmarks()) {
    return landmark_tokenize_ids(tokens, specials, chunking, max_len, pooling.marker, rng,
                                 boundaries);
  }
  return standard_tokenize_ids(tokens, specials, max_len);
}

TokenSequence tokenize_for(std::string_view text, const Vocabulary& vocab,
                           const PoolingStrategy& pooling, const ChunkingStrategy& chunking,
                           std::size_t max_len, Rng& rng) {
  if (pooling.uses_landmarks()) {
    return landmark_tokenize(text, vocab, chunking, max_len, pooling.marker, rng);
  }
  return standard_tokenize(text, vocab, max_len);
}

ad::Var embed_on_tape(ad::Tape& tape, const TokenSequence& seq, const Model& model,
                      const PoolingStrategy& pooling, Rng* dropout_rng) {
  ForwardOptions options;
  options.dropout_rng = dropout_rng;
  ad::Var h = encoder_forward(tape, seq, model.encoder, model.config, options);
  const LatentAttentionParams* latent = model.latent ? &*model.latent : nullptr;
  return ad::l2_normalize_rows(pool(tape, h, seq, pooling, latent));
}

Embedding embed_sequence(const TokenSequence& seq, const Model& model,
                         const PoolingStrategy& pooling) {
  ad::Tape tape(false);
  Embedding e;
  e.vector = embed_on_tape(tape, seq, model, pooling).value().row(0);
  e.strategy = pooling.tag();
  e.normalized = true;
  return e;
}

}  // namespace lmk
