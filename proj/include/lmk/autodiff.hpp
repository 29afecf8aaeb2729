#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace lmk {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace lmk

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation applied to its Vars. Parameters enter the
// tape by reference (no copy) and are cached per address, so the same weight
// used twice accumulates one gradient. A tape is single-threaded; parallel
// work uses one tape per sequence.
namespace lmk::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  // Leaf referencing external storage; the matrix must outlive the tape.
  Var parameter(const Matrix& ref);
  Var record(Matrix value, bool requires_grad, BackwardFn fn);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const;

  // Gradient buffer for v, zero-initialised on first access. Returns nullptr
  // when v does not require a gradient.
  Matrix* grad_buffer(Var v);
  void accumulate(Var v, const Matrix& delta);

  void backward(Var root, const Matrix& seed);
  void backward(Var root);  // root must be 1x1

  // Gradient w.r.t. a parameter leaf; nullptr if the parameter never
  // received one.
  const Matrix* parameter_grad(const Matrix& ref) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  Node& node(Var v);

  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::unordered_map<const Matrix*, std::size_t> parameter_ids_;
};

// True if any of the inputs needs a gradient (and the tape records them).
bool any_requires_grad(std::initializer_list<Var> vars);

Var matmul(Var a, Var b);
// a * b^T
Var matmul_transposed(Var a, Var b);
Var add(Var a, Var b);
// Adds a 1 x C row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var multiply_constant(Var a, const Matrix& c);
Var gelu(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var gather_rows(Var table, std::span<const int> ids);
Var select_rows(Var x, std::span<const std::size_t> rows);
// 1 x C mean of the given rows.
Var mean_rows(Var x, std::span<const std::size_t> rows);
Var l2_normalize_rows(Var x);
// 1 x 1 scalar sum(x .* w).
Var weighted_sum(Var x, const Matrix& w);
// Mean negative log-likelihood over the listed rows of a logit matrix.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> rows,
                          std::span<const int> targets);

struct AttentionSpec {
  std::size_t n_heads = 1;
  std::size_t d_head = 1;
  // Rotary positions; empty disables RoPE. Must match q / k row counts.
  std::vector<double> q_positions;
  std::vector<double> k_positions;
  std::vector<double> theta;
  // Key columns with mask 0 receive -inf logits. Empty means all visible.
  std::vector<int> key_mask;
};

struct AttentionRecord {
  std::vector<Matrix> weights;  // per head, Sq x Sk
  std::vector<Matrix> logits;   // per head, scaled pre-softmax logits
};

// Multi-head scaled dot-product attention with optional rotary embedding.
// q: Sq x (H*dh), k, v: Sk x (H*dh). Returns Sq x (H*dh).
Var attention(Var q, Var k, Var v, const AttentionSpec& spec,
              AttentionRecord* record = nullptr);

}  // namespace lmk::ad
