#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lmk/autodiff.hpp"
#include "lmk/model.hpp"
#include "lmk/pooling.hpp"
#include "lmk/tokenizer.hpp"

namespace lmk {

struct TrainingConfig {
  double temperature = 0.02;
  std::size_t steps = 100;
  std::size_t batch_size = 8;
  std::size_t hard_negatives = 7;
  double learning_rate = 1e-3;
  std::size_t warmup_steps = 0;
  std::size_t query_max_len = 32;
  std::size_t doc_max_len = 128;
  PoolingStrategy pooling = PoolingStrategy::cls();
  ChunkingStrategy chunking = ChunkingStrategy::variable();
  std::uint64_t seed = 0;

  void validate() const;
};

struct TripletBatch {
  std::vector<std::string> queries;
  std::vector<std::string> positives;
  std::vector<std::vector<std::string>> negatives;  // may be empty per query

  std::size_t size() const { return queries.size(); }
  void validate() const;
};

struct LossReport {
  double loss = 0.0;
  std::vector<std::size_t> ranks;  // 1-based rank of each query's positive
  double grad_norm = 0.0;
};

// S[i][j] = Q_i . D_j for L2-normalised rows.
Matrix similarity_matrix(const Matrix& queries, const Matrix& docs);

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d sims
};

// Mean over rows of -log softmax(sims / tau) at the positive column.
InfoNceResult infonce_loss(const Matrix& sims, std::span<const std::size_t> positive_columns,
                           double temperature);

using Gradients = std::vector<Matrix>;  // aligned with Model::parameters()

class Adam {
 public:
  explicit Adam(std::vector<Matrix*> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(const Gradients& grads, double learning_rate);
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Matrix*> params_;
  std::vector<Matrix> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

double warmup_learning_rate(double base, std::size_t step, std::size_t warmup_steps);

// Loss of one batch under `config`, with gradients if `grads` is non-null.
// Tokenization randomness is derived from (seed, text index) only.
LossReport batch_loss(const Model& model, const Vocabulary& vocab, const TripletBatch& batch,
                      const TrainingConfig& config, std::uint64_t seed, Gradients* grads);

class Trainer {
 public:
  Trainer(Model& model, const Vocabulary& vocab, TrainingConfig config);

  LossReport step(const TripletBatch& batch);
  std::size_t steps_taken() const { return step_; }
  const TrainingConfig& config() const { return config_; }

 private:
  Model& model_;
  const Vocabulary& vocab_;
  TrainingConfig config_;
  Adam adam_;
  std::size_t step_ = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates_checked = 0;
};

// Central-difference check of d loss / d params on a random subsample of at
// least `min_coords` coordinates per tensor (all of them when smaller).
// Relative error: |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradCheckReport grad_check_function(const std::vector<Matrix*>& params,
                                    const std::vector<std::string>& names,
                                    const std::function<double()>& loss,
                                    const Gradients& analytic, double eps, std::size_t min_coords,
                                    std::uint64_t seed);

GradCheckReport grad_check(Model& model, const Vocabulary& vocab, const TripletBatch& batch,
                           const TrainingConfig& config, double eps = 1e-5,
                           std::size_t min_coords = 200);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Line-delimited JSON: {"query": ..., "positive": ..., "negatives": [...]}.
TripletBatch read_triplets(const std::filesystem::path& path);
TripletBatch slice(const TripletBatch& all, std::size_t begin, std::size_t count);

}  // namespace lmk
