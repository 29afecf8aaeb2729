#include "lmk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "json.hpp"

#include "lmk/io.hpp"
#include "lmk/parallel.hpp"

namespace lmk {

void TrainingConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("training: temperature must be > 0");
  if (batch_size < 2 && hard_negatives < 1) {
    throw std::invalid_argument("training: need batch >= 2 or at least one hard negative");
  }
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("training: learning rate must be >= 0");
  if (query_max_len < 2 || doc_max_len < 2) throw std::invalid_argument("training: max_len < 2");
}

void TripletBatch::validate() const {
  if (queries.empty()) throw std::invalid_argument("batch: no queries");
  if (positives.size() != queries.size()) throw std::invalid_argument("batch: one positive per query");
  if (!negatives.empty() && negatives.size() != queries.size()) {
    throw std::invalid_argument("batch: negative lists must align with queries");
  }
  std::size_t n_neg = 0;
  for (const auto& n : negatives) n_neg += n.size();
  if (queries.size() < 2 && n_neg == 0) {
    throw std::invalid_argument("batch: no negatives (need >= 2 queries or hard negatives)");
  }
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word.
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix similarity_matrix(const Matrix& queries, const Matrix& docs) {
  if (queries.cols() != docs.cols()) throw std::invalid_argument("similarity_matrix: dim mismatch");
  return queries * docs.transpose();
}

InfoNceResult infonce_loss(const Matrix& sims, std::span<const std::size_t> positive_columns,
                           double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("infonce: temperature must be > 0");
  if (positive_columns.size() != static_cast<std::size_t>(sims.rows())) {
    throw std::invalid_argument("infonce: one positive column per row");
  }
  if (!sims.allFinite()) throw std::invalid_argument("infonce: non-finite similarities");
  const auto n = static_cast<double>(sims.rows());
  InfoNceResult r;
  r.grad = Matrix::Zero(sims.rows(), sims.cols());
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    const auto pos = static_cast<Eigen::Index>(positive_columns[static_cast<std::size_t>(i)]);
    if (pos >= sims.cols()) throw std::invalid_argument("infonce: positive column out of range");
    Eigen::RowVectorXd z = sims.row(i) / temperature;
    const double m = z.maxCoeff();
    Eigen::RowVectorXd e = (z.array() - m).exp();
    const double s = e.sum();
    r.loss += std::log(s) + m - z(pos);
    Eigen::RowVectorXd p = e / s;
    p(pos) -= 1.0;
    r.grad.row(i) = p / (temperature * n);
  }
  r.loss /= n;
  return r;
}

Adam::Adam(std::vector<Matrix*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Matrix* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(const Gradients& grads, double learning_rate) {
  if (grads.size() != params_.size()) throw std::invalid_argument("adam: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.size() == 0) {
      // Untouched tensor: zero gradient still decays the moments.
      m_[i] *= beta1_;
      v_[i] *= beta2_;
    } else {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    }
    Matrix& p = *params_[i];
    p.array() -= learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double warmup_learning_rate(double base, std::size_t step, std::size_t warmup_steps) {
  if (warmup_steps == 0 || step >= warmup_steps) return base;
  return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

namespace {

struct EncodedText {
  std::unique_ptr<ad::Tape> tape;
  ad::Var embedding;
};

}  // namespace

LossReport batch_loss(const Model& model, const Vocabulary& vocab, const TripletBatch& batch,
                      const TrainingConfig& config, std::uint64_t seed, Gradients* grads) {
  config.validate();
  batch.validate();
  const std::size_t nq = batch.size();

  // Texts: queries, then positives, then hard negatives in query order.
  std::vector<const std::string*> texts;
  for (const auto& q : batch.queries) texts.push_back(&q);
  for (const auto& p : batch.positives) texts.push_back(&p);
  for (const auto& negs : batch.negatives) {
    const std::size_t take = std::min(negs.size(), config.hard_negatives);
    for (std::size_t j = 0; j < take; ++j) texts.push_back(&negs[j]);
  }
  const std::size_t nd = texts.size() - nq;

  const bool want_grads = grads != nullptr;
  std::vector<EncodedText> encoded(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) {
    Rng rng(mix_seed(seed, i));
    const std::size_t max_len = i < nq ? config.query_max_len : config.doc_max_len;
    const TokenSequence seq =
        tokenize_for(*texts[i], vocab, config.pooling, config.chunking, max_len, rng);
    Rng dropout_rng(mix_seed(seed ^ 0xd20u, i));
    encoded[i].tape = std::make_unique<ad::Tape>(want_grads);
    encoded[i].embedding = embed_on_tape(*encoded[i].tape, seq, model, config.pooling,
                                         want_grads ? &dropout_rng : nullptr);
  });

  const auto d = static_cast<Eigen::Index>(model.config.d_model);
  Matrix q(static_cast<Eigen::Index>(nq), d);
  Matrix docs(static_cast<Eigen::Index>(nd), d);
  for (std::size_t i = 0; i < nq; ++i) q.row(static_cast<Eigen::Index>(i)) = encoded[i].embedding.value().row(0);
  for (std::size_t j = 0; j < nd; ++j) {
    docs.row(static_cast<Eigen::Index>(j)) = encoded[nq + j].embedding.value().row(0);
  }
  const Matrix sims = similarity_matrix(q, docs);
  std::vector<std::size_t> positives(nq);
  for (std::size_t i = 0; i < nq; ++i) positives[i] = i;
  const InfoNceResult nce = infonce_loss(sims, positives, config.temperature);

  LossReport report;
  report.loss = nce.loss;
  for (std::size_t i = 0; i < nq; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::size_t rank = 1;
    for (Eigen::Index j = 0; j < sims.cols(); ++j) {
      if (j != r && sims(r, j) > sims(r, r)) ++rank;
    }
    report.ranks.push_back(rank);
  }
  if (!want_grads) return report;

  const Matrix dq = nce.grad * docs;
  const Matrix dd = nce.grad.transpose() * q;
  const auto params = model.parameters();
  std::vector<Gradients> per_text(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) {
    const Matrix seed_grad = i < nq ? Matrix(dq.row(static_cast<Eigen::Index>(i)))
                                    : Matrix(dd.row(static_cast<Eigen::Index>(i - nq)));
    ad::Tape& tape = *encoded[i].tape;
    tape.backward(encoded[i].embedding, seed_grad);
    per_text[i].resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (const Matrix* g = tape.parameter_grad(*params[p])) per_text[i][p] = *g;
    }
    encoded[i].tape.reset();
  });

  grads->assign(params.size(), Matrix());
  double sq = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix total = Matrix::Zero(params[p]->rows(), params[p]->cols());
    bool touched = false;
    for (const auto& g : per_text) {
      if (g[p].size() != 0) {
        total += g[p];
        touched = true;
      }
    }
    if (touched) {
      sq += total.squaredNorm();
      (*grads)[p] = std::move(total);
    }
  }
  report.grad_norm = std::sqrt(sq);
  return report;
}

Trainer::Trainer(Model& model, const Vocabulary& vocab, TrainingConfig config)
    : model_(model), vocab_(vocab), config_(std::move(config)), adam_(model.parameters()) {
  config_.validate();
  if (config_.pooling.kind == PoolingKind::LatentAttention && !model_.latent) {
    throw std::invalid_argument("trainer: latent pooling requires latent-attention params");
  }
}

LossReport Trainer::step(const TripletBatch& batch) {
  Gradients grads;
  const LossReport report =
      batch_loss(model_, vocab_, batch, config_, mix_seed(config_.seed, step_), &grads);
  adam_.step(grads, warmup_learning_rate(config_.learning_rate, step_, config_.warmup_steps));
  ++step_;
  return report;
}

GradCheckReport grad_check_function(const std::vector<Matrix*>& params,
                                    const std::vector<std::string>& names,
                                    const std::function<double()>& loss,
                                    const Gradients& analytic, double eps, std::size_t min_coords,
                                    std::uint64_t seed) {
  if (analytic.size() != params.size() || names.size() != params.size()) {
    throw std::invalid_argument("grad_check: parameter/gradient count mismatch");
  }
  Rng rng(seed);
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& m = *params[p];
    const auto size = static_cast<std::size_t>(m.size());
    std::vector<std::size_t> coords(size);
    for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    if (size > min_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(min_coords);
    }
    for (std::size_t c : coords) {
      double& x = m.data()[c];
      const double saved = x;
      x = saved + eps;
      const double up = loss();
      x = saved - eps;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p].size() == 0 ? 0.0 : analytic[p].data()[c];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = names[p];
      }
      ++report.coordinates_checked;
    }
  }
  return report;
}

GradCheckReport grad_check(Model& model, const Vocabulary& vocab, const TripletBatch& batch,
                           const TrainingConfig& config, double eps, std::size_t min_coords) {
  TrainingConfig cfg = config;
  Gradients analytic;
  batch_loss(model, vocab, batch, cfg, cfg.seed, &analytic);
  auto params = model.parameters();
  return grad_check_function(
      params, model.parameter_names(),
      [&] { return batch_loss(model, vocab, batch, cfg, cfg.seed, nullptr).loss; }, analytic, eps,
      min_coords, mix_seed(cfg.seed, 0x6c6b));
}

TripletBatch read_triplets(const std::filesystem::path& path) {
  TripletBatch all;
  std::size_t line_no = 0;
  for (const auto& line : io::read_lines(path)) {
    ++line_no;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("query") || !j.contains("positive")) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": record needs query and positive");
    }
    all.queries.push_back(j.at("query").get<std::string>());
    all.positives.push_back(j.at("positive").get<std::string>());
    all.negatives.push_back(j.value("negatives", std::vector<std::string>{}));
  }
  return all;
}

TripletBatch slice(const TripletBatch& all, std::size_t begin, std::size_t count) {
  TripletBatch b;
  const std::size_t end = std::min(all.size(), begin + count);
  for (std::size_t i = begin; i < end; ++i) {
    b.queries.push_back(all.queries[i]);
    b.positives.push_back(all.positives[i]);
    b.negatives.push_back(i < all.negatives.size() ? all.negatives[i] : std::vector<std::string>{});
  }
  return b;
}

}  // namespace lmk
