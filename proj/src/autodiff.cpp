#include "lmk/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "lmk/rope.hpp"

namespace lmk::ad {

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::invalid_argument("Var does not belong to this tape");
  }
  return nodes_[v.id_];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::invalid_argument("Var does not belong to this tape");
  }
  return nodes_[v.id_];
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Matrix& ref) {
  if (auto it = parameter_ids_.find(&ref); it != parameter_ids_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.external = &ref;
  n.requires_grad = grad_enabled_;
  Var v = push(std::move(n));
  parameter_ids_.emplace(&ref, v.id_);
  return v;
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Matrix* Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    const Matrix& val = n.external ? *n.external : n.value;
    n.grad = Matrix::Zero(val.rows(), val.cols());
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::accumulate(Var v, const Matrix& delta) {
  if (Matrix* g = grad_buffer(v)) *g += delta;
}

void Tape::backward(Var root, const Matrix& seed) {
  Node& r = node(root);
  if (seed.rows() != value(root).rows() || seed.cols() != value(root).cols()) {
    throw std::invalid_argument("backward: seed shape mismatch");
  }
  if (!r.requires_grad) return;
  accumulate(root, seed);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) {
      // Copy: the callback may grow other nodes' gradients but never its own.
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward: implicit seed needs a scalar root");
  }
  backward(root, Matrix::Ones(1, 1));
}

const Matrix* Tape::parameter_grad(const Matrix& ref) const {
  auto it = parameter_ids_.find(&ref);
  if (it == parameter_ids_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.has_grad ? &n.grad : nullptr;
}

bool any_requires_grad(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.tape()->requires_grad(v)) return true;
  }
  return false;
}

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("Vars from different tapes");
}

void require_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), any_requires_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a)) ga->noalias() += g * b.value().transpose();
    if (Matrix* gb = t.grad_buffer(b)) gb->noalias() += a.value().transpose() * g;
  });
}

Var matmul_transposed(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.cols() == b.cols(), "matmul_transposed");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value().transpose();
  return t.record(std::move(out), any_requires_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a)) ga->noalias() += g * b.value();
    if (Matrix* gb = t.grad_buffer(b)) gb->noalias() += g.transpose() * a.value();
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape& t = *a.tape();
  Matrix out = a.value() + b.value();
  return t.record(std::move(out), any_requires_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), any_requires_grad({a, row}),
                  [a, row](Tape& t, const Matrix& g) {
                    t.accumulate(a, g);
                    if (Matrix* gr = t.grad_buffer(row)) *gr += g.colwise().sum();
                  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  Matrix out = a.value() * s;
  return t.record(std::move(out), any_requires_grad({a}),
                  [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var multiply_constant(Var a, const Matrix& c) {
  require_shape(a.rows() == c.rows() && a.cols() == c.cols(), "multiply_constant");
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseProduct(c);
  return t.record(std::move(out), any_requires_grad({a}), [a, c](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(c));
  });
}

Var gelu(Var x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Tape& t = *x.tape();
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double z = v.data()[i];
    out.data()[i] = 0.5 * z * (1.0 + std::tanh(kC * (z + kA * z * z * z)));
  }
  return t.record(std::move(out), any_requires_grad({x}), [x](Tape& t, const Matrix& g) {
    const Matrix& v = x.value();
    Matrix d(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double z = v.data()[i];
      const double th = std::tanh(kC * (z + kA * z * z * z));
      const double dz = 0.5 * (1.0 + th) +
                        0.5 * z * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * z * z);
      d.data()[i] = g.data()[i] * dz;
    }
    t.accumulate(x, d);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  require_shape(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 &&
                    beta.cols() == x.cols(),
                "layer_norm");
  Tape& t = *x.tape();
  const Matrix& v = x.value();
  const auto n = static_cast<double>(v.cols());
  Matrix xhat(v.rows(), v.cols());
  Vector inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).sum() / n;
    const double var = (v.row(r).array() - mu).square().sum() / n;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return t.record(std::move(out), any_requires_grad({x, gamma, beta}),
                  [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape& t, const Matrix& g) {
                    if (Matrix* gg = t.grad_buffer(gamma)) {
                      *gg += g.cwiseProduct(xhat).colwise().sum();
                    }
                    if (Matrix* gb = t.grad_buffer(beta)) *gb += g.colwise().sum();
                    if (Matrix* gx = t.grad_buffer(x)) {
                      const double n = static_cast<double>(xhat.cols());
                      Matrix dxhat = g.array().rowwise() * gamma.value().row(0).array();
                      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                        const double m1 = dxhat.row(r).sum() / n;
                        const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                        gx->row(r).array() +=
                            inv_std(r) *
                            (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                      }
                    }
                  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = *table.tape();
  const Matrix& tv = table.value();
  std::vector<int> idx(ids.begin(), ids.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), tv.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= tv.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(idx[i]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(idx[i]);
  }
  return t.record(std::move(out), any_requires_grad({table}),
                  [table, idx = std::move(idx)](Tape& t, const Matrix& g) {
                    if (Matrix* gt = t.grad_buffer(table)) {
                      for (std::size_t i = 0; i < idx.size(); ++i) {
                        gt->row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                      }
                    }
                  });
}

Var select_rows(Var x, std::span<const std::size_t> rows) {
  Tape& t = *x.tape();
  const Matrix& v = x.value();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), v.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= static_cast<std::size_t>(v.rows())) {
      throw std::out_of_range("select_rows: row out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = v.row(static_cast<Eigen::Index>(idx[i]));
  }
  return t.record(std::move(out), any_requires_grad({x}),
                  [x, idx = std::move(idx)](Tape& t, const Matrix& g) {
                    if (Matrix* gx = t.grad_buffer(x)) {
                      for (std::size_t i = 0; i < idx.size(); ++i) {
                        gx->row(static_cast<Eigen::Index>(idx[i])) +=
                            g.row(static_cast<Eigen::Index>(i));
                      }
                    }
                  });
}

Var mean_rows(Var x, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("mean_rows: empty row set");
  Tape& t = *x.tape();
  const Matrix& v = x.value();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Matrix out = Matrix::Zero(1, v.cols());
  for (std::size_t r : idx) {
    if (r >= static_cast<std::size_t>(v.rows())) {
      throw std::out_of_range("mean_rows: row out of range");
    }
    out.row(0) += v.row(static_cast<Eigen::Index>(r));
  }
  out /= static_cast<double>(idx.size());
  return t.record(std::move(out), any_requires_grad({x}),
                  [x, idx = std::move(idx)](Tape& t, const Matrix& g) {
                    if (Matrix* gx = t.grad_buffer(x)) {
                      const double w = 1.0 / static_cast<double>(idx.size());
                      for (std::size_t r : idx) gx->row(static_cast<Eigen::Index>(r)) += w * g.row(0);
                    }
                  });
}

Var l2_normalize_rows(Var x) {
  Tape& t = *x.tape();
  const Matrix& v = x.value();
  Vector norms(v.rows());
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    norms(r) = std::max(v.row(r).norm(), 1e-12);
    out.row(r) = v.row(r) / norms(r);
  }
  Matrix y = out;
  return t.record(std::move(out), any_requires_grad({x}),
                  [x, y = std::move(y), norms = std::move(norms)](Tape& t, const Matrix& g) {
                    if (Matrix* gx = t.grad_buffer(x)) {
                      for (Eigen::Index r = 0; r < y.rows(); ++r) {
                        const double yg = y.row(r).dot(g.row(r));
                        gx->row(r) += (g.row(r) - yg * y.row(r)) / norms(r);
                      }
                    }
                  });
}

Var weighted_sum(Var x, const Matrix& w) {
  require_shape(x.rows() == w.rows() && x.cols() == w.cols(), "weighted_sum");
  Tape& t = *x.tape();
  Matrix out(1, 1);
  out(0, 0) = x.value().cwiseProduct(w).sum();
  return t.record(std::move(out), any_requires_grad({x}),
                  [x, w](Tape& t, const Matrix& g) { t.accumulate(x, w * g(0, 0)); });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> rows,
                          std::span<const int> targets) {
  if (rows.size() != targets.size()) {
    throw std::invalid_argument("softmax_cross_entropy: rows/targets size mismatch");
  }
  if (rows.empty()) throw std::invalid_argument("softmax_cross_entropy: no rows");
  Tape& t = *logits.tape();
  const Matrix& z = logits.value();
  const auto count = static_cast<double>(rows.size());
  Matrix probs(static_cast<Eigen::Index>(rows.size()), z.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    if (r >= z.rows() || targets[i] < 0 || targets[i] >= z.cols()) {
      throw std::out_of_range("softmax_cross_entropy: index out of range");
    }
    const double m = z.row(r).maxCoeff();
    auto e = (z.row(r).array() - m).exp();
    const double s = e.sum();
    probs.row(static_cast<Eigen::Index>(i)) = e / s;
    loss += -(z(r, targets[i]) - m - std::log(s));
  }
  Matrix out(1, 1);
  out(0, 0) = loss / count;
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  std::vector<int> tv(targets.begin(), targets.end());
  return t.record(std::move(out), any_requires_grad({logits}),
                  [logits, probs = std::move(probs), rv = std::move(rv), tv = std::move(tv)](
                      Tape& t, const Matrix& g) {
                    if (Matrix* gz = t.grad_buffer(logits)) {
                      const double w = g(0, 0) / static_cast<double>(rv.size());
                      for (std::size_t i = 0; i < rv.size(); ++i) {
                        const auto r = static_cast<Eigen::Index>(rv[i]);
                        gz->row(r) += w * probs.row(static_cast<Eigen::Index>(i));
                        (*gz)(r, tv[i]) -= w;
                      }
                    }
                  });
}

Var attention(Var q, Var k, Var v, const AttentionSpec& spec, AttentionRecord* record) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const auto H = static_cast<Eigen::Index>(spec.n_heads);
  const auto dh = static_cast<Eigen::Index>(spec.d_head);
  require_shape(q.cols() == H * dh && k.cols() == H * dh && v.cols() == H * dh &&
                    k.rows() == v.rows(),
                "attention");
  const bool use_rope = !spec.theta.empty();
  if (use_rope) {
    require_shape(spec.q_positions.size() == static_cast<std::size_t>(q.rows()) &&
                      spec.k_positions.size() == static_cast<std::size_t>(k.rows()) &&
                      spec.theta.size() * 2 == spec.d_head,
                  "attention rope");
  }
  if (!spec.key_mask.empty()) {
    require_shape(spec.key_mask.size() == static_cast<std::size_t>(k.rows()), "attention mask");
    bool any = false;
    for (int m : spec.key_mask) any = any || m != 0;
    if (!any) throw std::invalid_argument("attention: every key is masked");
  }

  Tape& t = *q.tape();
  const Eigen::Index Sq = q.rows();
  const Eigen::Index Sk = k.rows();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool needs_grad = any_requires_grad({q, k, v});

  Matrix out(Sq, H * dh);
  std::vector<Matrix> qs, ks, ws;
  if (needs_grad) {
    qs.reserve(static_cast<std::size_t>(H));
    ks.reserve(static_cast<std::size_t>(H));
    ws.reserve(static_cast<std::size_t>(H));
  }
  if (record) {
    record->weights.clear();
    record->logits.clear();
  }
  for (Eigen::Index h = 0; h < H; ++h) {
    Matrix qh = q.value().middleCols(h * dh, dh);
    Matrix kh = k.value().middleCols(h * dh, dh);
    if (use_rope) {
      rotate_block(qh, 0, spec.q_positions, spec.theta);
      rotate_block(kh, 0, spec.k_positions, spec.theta);
    }
    Matrix logits = (qh * kh.transpose()) * inv_sqrt;
    if (!spec.key_mask.empty()) {
      for (Eigen::Index c = 0; c < Sk; ++c) {
        if (spec.key_mask[static_cast<std::size_t>(c)] == 0) {
          logits.col(c).setConstant(-std::numeric_limits<double>::infinity());
        }
      }
    }
    Matrix w(Sq, Sk);
    for (Eigen::Index r = 0; r < Sq; ++r) {
      const double m = logits.row(r).maxCoeff();
      w.row(r) = (logits.row(r).array() - m).exp();
      w.row(r) /= w.row(r).sum();
    }
    // Vectorized exp can leave denormals at -inf; masked keys get exactly zero.
    if (!spec.key_mask.empty()) {
      for (Eigen::Index c = 0; c < Sk; ++c) {
        if (spec.key_mask[static_cast<std::size_t>(c)] == 0) w.col(c).setZero();
      }
    }
    out.middleCols(h * dh, dh).noalias() = w * v.value().middleCols(h * dh, dh);
    if (record) {
      record->weights.push_back(w);
      record->logits.push_back(std::move(logits));
    }
    if (needs_grad) {
      qs.push_back(std::move(qh));
      ks.push_back(std::move(kh));
      ws.push_back(std::move(w));
    }
  }

  return t.record(
      std::move(out), needs_grad,
      [q, k, v, spec, qs = std::move(qs), ks = std::move(ks), ws = std::move(ws), inv_sqrt](
          Tape& t, const Matrix& g) {
        const auto H = static_cast<Eigen::Index>(spec.n_heads);
        const auto dh = static_cast<Eigen::Index>(spec.d_head);
        Matrix* gq = t.grad_buffer(q);
        Matrix* gk = t.grad_buffer(k);
        Matrix* gv = t.grad_buffer(v);
        for (Eigen::Index h = 0; h < H; ++h) {
          const auto hs = static_cast<std::size_t>(h);
          const Matrix& w = ws[hs];
          Matrix gh = g.middleCols(h * dh, dh);
          if (gv) gv->middleCols(h * dh, dh).noalias() += w.transpose() * gh;
          if (!gq && !gk) continue;
          Matrix dw = gh * v.value().middleCols(h * dh, dh).transpose();
          Matrix dlogits(w.rows(), w.cols());
          for (Eigen::Index r = 0; r < w.rows(); ++r) {
            const double dot = dw.row(r).dot(w.row(r));
            dlogits.row(r) = w.row(r).array() * (dw.row(r).array() - dot);
          }
          dlogits *= inv_sqrt;
          if (gq) {
            Matrix dq = dlogits * ks[hs];
            if (!spec.theta.empty()) rotate_block(dq, 0, spec.q_positions, spec.theta, -1.0);
            gq->middleCols(h * dh, dh) += dq;
          }
          if (gk) {
            Matrix dk = dlogits.transpose() * qs[hs];
            if (!spec.theta.empty()) rotate_block(dk, 0, spec.k_positions, spec.theta, -1.0);
            gk->middleCols(h * dh, dh) += dk;
          }
        }
      });
}

}  // namespace lmk::ad
