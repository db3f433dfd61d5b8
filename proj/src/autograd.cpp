// src/autograd.cpp

// Copyright 2026 The dapc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "dapc/autograd.hpp"

#include <cmath>
#include <memory>
#include <sstream>
#include <utility>

namespace dapc::ag {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Tape* common_tape(const Tensor& a, const Tensor& b) {
  if (a.traced() && b.traced() && a.tape != b.tape) {
    throw ContractError("operands live on different tapes");
  }
  return a.traced() ? a.tape : b.tape;
}

enum class Bcast { kNone, kRow, kCol, kScalar };

Bcast bcast_kind(const Matrix& full, const Matrix& other) {
  if (other.rows() == full.rows() && other.cols() == full.cols()) return Bcast::kNone;
  if (other.rows() == 1 && other.cols() == 1) return Bcast::kScalar;
  if (other.rows() == 1 && other.cols() == full.cols()) return Bcast::kRow;
  if (other.cols() == 1 && other.rows() == full.rows()) return Bcast::kCol;
  throw DimensionError("incompatible shapes " + shape_str(full) + " and " +
                       shape_str(other));
}

Matrix bcast_expand(const Matrix& m, Index rows, Index cols, Bcast kind) {
  switch (kind) {
    case Bcast::kNone: return m;
    case Bcast::kScalar: return Matrix::Constant(rows, cols, m(0, 0));
    case Bcast::kRow: return m.replicate(rows, 1);
    case Bcast::kCol: return m.replicate(1, cols);
  }
  return m;
}

Matrix bcast_reduce(const Matrix& g, Bcast kind) {
  switch (kind) {
    case Bcast::kNone: return g;
    case Bcast::kScalar: return Matrix::Constant(1, 1, g.sum());
    case Bcast::kRow: return g.colwise().sum();
    case Bcast::kCol: return g.rowwise().sum();
  }
  return g;
}

// The larger operand dictates the output shape; at most one operand may
// broadcast.
void binary_shapes(const Tensor& a, const Tensor& b, Bcast* ka, Bcast* kb,
                   Index* rows, Index* cols) {
  Index ra = a.rows() * a.cols(), rb = b.rows() * b.cols();
  if (rb <= ra) {
    *ka = Bcast::kNone;
    *kb = bcast_kind(a.v, b.v);
    *rows = a.rows();
    *cols = a.cols();
  } else {
    *kb = Bcast::kNone;
    *ka = bcast_kind(b.v, a.v);
    *rows = b.rows();
    *cols = b.cols();
  }
}

}  // namespace

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ContractError("item() requires a 1x1 tensor, got " + shape_str(v));
  }
  return v(0, 0);
}

Tensor constant(Matrix value) { return Tensor(std::move(value)); }

Tensor scalar(double value) { return Tensor(Matrix::Constant(1, 1, value)); }

Tensor Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  Tensor t(nodes_.back().value);
  t.tape = this;
  t.node = static_cast<int>(nodes_.size()) - 1;
  return t;
}

Tensor Tape::record(Matrix value, std::vector<int> parents, BackwardFn backward) {
  if (consumed_) {
    throw ContractError("tape already consumed by backward(); reset() it first");
  }
  bool needs = false;
  for (int p : parents) needs = needs || nodes_[static_cast<size_t>(p)].needs_grad;
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  Tensor t(nodes_.back().value);
  t.tape = this;
  t.node = static_cast<int>(nodes_.size()) - 1;
  return t;
}

int Tape::wrap(const Tensor& t) {
  if (t.traced()) {
    if (t.tape != this) throw ContractError("tensor belongs to another tape");
    return t.node;
  }
  Node n;
  n.value = t.v;
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node, const Matrix& g) {
  Node& n = nodes_[static_cast<size_t>(node)];
  if (!n.needs_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw DimensionError("gradient shape " + shape_str(g) +
                         " does not match value shape " + shape_str(n.value));
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward() already ran on this tape");
  if (!loss.traced() || loss.tape != this) {
    throw ContractError("loss is not on this tape");
  }
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward() requires a scalar (1x1) loss, got " +
                        shape_str(loss.v));
  }
  accumulate(loss.node, Matrix::Ones(1, 1));
  for (int i = loss.node; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
  consumed_ = true;
}

bool Tape::has_grad(const Tensor& t) const {
  return t.tape == this && t.node >= 0 &&
         nodes_[static_cast<size_t>(t.node)].has_grad;
}

Matrix Tape::grad(const Tensor& t) const {
  if (t.tape != this) throw ContractError("tensor is not on this tape");
  const Node& n = nodes_[static_cast<size_t>(t.node)];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

const Matrix& Tape::grad_ref(int node) const {
  return nodes_[static_cast<size_t>(node)].grad;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

// ---- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.v) +
                         " * " + shape_str(b.v));
  }
  Matrix out = a.v * b.v;
  Tape* tape = common_tape(a, b);
  if (!tape) return constant(std::move(out));
  int pa = tape->wrap(a), pb = tape->wrap(b);
  return tape->record(std::move(out), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    if (t.needs_grad(pa)) t.accumulate(pa, g * t.value(pb).transpose());
    if (t.needs_grad(pb)) t.accumulate(pb, t.value(pa).transpose() * g);
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.v.transpose();
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, t.grad_ref(self).transpose());
  });
}

namespace {

template <class Fwd, class Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  Bcast ka, kb;
  Index rows, cols;
  binary_shapes(a, b, &ka, &kb, &rows, &cols);
  Matrix av = bcast_expand(a.v, rows, cols, ka);
  Matrix bv = bcast_expand(b.v, rows, cols, kb);
  Matrix out = fwd(av, bv);
  Tape* tape = common_tape(a, b);
  if (!tape) return constant(std::move(out));
  int pa = tape->wrap(a), pb = tape->wrap(b);
  return tape->record(std::move(out), {pa, pb},
                      [pa, pb, ka, kb, bwd](Tape& t, int self) {
                        const Matrix& g = t.grad_ref(self);
                        Matrix ga, gb;
                        bwd(t, g, pa, pb, ka, kb, &ga, &gb);
                        if (t.needs_grad(pa)) t.accumulate(pa, bcast_reduce(ga, ka));
                        if (t.needs_grad(pb)) t.accumulate(pb, bcast_reduce(gb, kb));
                      });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x + y; },
      [](Tape&, const Matrix& g, int, int, Bcast, Bcast, Matrix* ga, Matrix* gb) {
        *ga = g;
        *gb = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](const Matrix& x, const Matrix& y) -> Matrix { return x - y; },
      [](Tape&, const Matrix& g, int, int, Bcast, Bcast, Matrix* ga, Matrix* gb) {
        *ga = g;
        *gb = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b,
      [](const Matrix& x, const Matrix& y) -> Matrix {
        return x.cwiseProduct(y);
      },
      [](Tape& t, const Matrix& g, int pa, int pb, Bcast ka, Bcast kb,
         Matrix* ga, Matrix* gb) {
        Matrix av = bcast_expand(t.value(pa), g.rows(), g.cols(), ka);
        Matrix bv = bcast_expand(t.value(pb), g.rows(), g.cols(), kb);
        *ga = g.cwiseProduct(bv);
        *gb = g.cwiseProduct(av);
      });
}

Tensor scale(const Tensor& a, double s) {
  Matrix out = a.v * s;
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa}, [pa, s](Tape& t, int self) {
    t.accumulate(pa, t.grad_ref(self) * s);
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  Matrix out = a.v.array() + c;
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, t.grad_ref(self));
  });
}

namespace {

// Unary elementwise op; dfn(x, y) is the local derivative given input x
// and output y.
template <class Fn, class Dfn>
Tensor unary_op(const Tensor& a, Fn fn, Dfn dfn) {
  Matrix out = fn(a.v);
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa}, [pa, dfn](Tape& t, int self) {
    const Matrix& x = t.value(pa);
    const Matrix& y = t.value(self);
    t.accumulate(pa, t.grad_ref(self).cwiseProduct(dfn(x, y)));
  });
}

}  // namespace

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      a, [](const Matrix& x) -> Matrix { return x.array().tanh(); },
      [](const Matrix&, const Matrix& y) -> Matrix {
        return 1.0 - y.array().square();
      });
}

Tensor sigmoid_t(const Tensor& a) {
  return unary_op(
      a,
      [](const Matrix& x) -> Matrix {
        return 1.0 / (1.0 + (-x.array()).exp());
      },
      [](const Matrix&, const Matrix& y) -> Matrix {
        return y.array() * (1.0 - y.array());
      });
}

Tensor elu_t(const Tensor& a) {
  return unary_op(
      a,
      [](const Matrix& x) -> Matrix {
        return x.array().max(0.0) + x.array().min(0.0).exp() - 1.0;
      },
      [](const Matrix& x, const Matrix& y) -> Matrix {
        // d/dx elu = 1 for x > 0, exp(x) = y + 1 otherwise
        return (x.array() > 0.0).select(Matrix::Ones(x.rows(), x.cols()),
                                        y.array() + 1.0);
      });
}

Tensor relu_t(const Tensor& a) {
  return unary_op(
      a, [](const Matrix& x) -> Matrix { return x.array().max(0.0); },
      [](const Matrix& x, const Matrix&) -> Matrix {
        return (x.array() > 0.0).cast<double>();
      });
}

Tensor square_t(const Tensor& a) {
  return unary_op(
      a, [](const Matrix& x) -> Matrix { return x.array().square(); },
      [](const Matrix& x, const Matrix&) -> Matrix { return 2.0 * x.array(); });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(
      a, [](const Matrix& x) -> Matrix { return x.array().exp(); },
      [](const Matrix&, const Matrix& y) -> Matrix { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary_op(
      a, [](const Matrix& x) -> Matrix { return x.array().log(); },
      [](const Matrix& x, const Matrix&) -> Matrix {
        return x.array().inverse();
      });
}

double cholesky_logdet(const Matrix& m, int* fail_pivot, Matrix* factor) {
  const Index n = m.rows();
  Matrix L = Matrix::Zero(n, n);
  double logdet = 0.0;
  for (Index j = 0; j < n; ++j) {
    double d = m(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) {
      if (fail_pivot) *fail_pivot = static_cast<int>(j);
      return std::numeric_limits<double>::quiet_NaN();
    }
    double ljj = std::sqrt(d);
    L(j, j) = ljj;
    logdet += 2.0 * std::log(ljj);
    for (Index i = j + 1; i < n; ++i) {
      double s = m(i, j) - L.row(i).head(j).dot(L.row(j).head(j));
      L(i, j) = s / ljj;
    }
  }
  if (fail_pivot) *fail_pivot = -1;
  if (factor) *factor = std::move(L);
  return logdet;
}

Tensor logdet_spd(const Tensor& a, double jitter) {
  if (a.rows() != a.cols()) {
    throw DimensionError("logdet_spd requires a square matrix, got " +
                         shape_str(a.v));
  }
  if (jitter < 0.0) throw ContractError("logdet_spd jitter must be >= 0");
  const Index n = a.rows();
  Matrix m = a.v + jitter * Matrix::Identity(n, n);
  int pivot = -1;
  auto L = std::make_shared<Matrix>();
  double ld = cholesky_logdet(m, &pivot, L.get());
  if (pivot >= 0) {
    throw NotPositiveDefiniteError(
        "matrix not positive definite (pivot " + std::to_string(pivot) +
            " non-positive, jitter " + std::to_string(jitter) + ")",
        pivot);
  }
  Matrix out = Matrix::Constant(1, 1, ld);
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa}, [pa, L](Tape& t, int self) {
    // d logdet / dA = inv(A + jI), from the explicit inverse of the
    // Cholesky factor; symmetrized.
    const Index n = L->rows();
    Matrix linv = L->triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
    Matrix inv = linv.transpose() * linv;
    Matrix sym = 0.5 * (inv + inv.transpose());
    t.accumulate(pa, t.grad_ref(self)(0, 0) * sym);
  });
}

Tensor slice(const Tensor& a, Index row0, Index n_rows, Index col0, Index n_cols) {
  if (row0 < 0 || col0 < 0 || n_rows < 0 || n_cols < 0 ||
      row0 + n_rows > a.rows() || col0 + n_cols > a.cols()) {
    throw BoundsError("slice [" + std::to_string(row0) + "," +
                      std::to_string(row0 + n_rows) + ")x[" +
                      std::to_string(col0) + "," + std::to_string(col0 + n_cols) +
                      ") out of range for " + shape_str(a.v));
  }
  Matrix out = a.v.block(row0, col0, n_rows, n_cols);
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa},
                        [pa, row0, col0, n_rows, n_cols](Tape& t, int self) {
                          const Matrix& parent = t.value(pa);
                          Matrix g = Matrix::Zero(parent.rows(), parent.cols());
                          g.block(row0, col0, n_rows, n_cols) = t.grad_ref(self);
                          t.accumulate(pa, g);
                        });
}

Tensor concat(int axis, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat of zero parts");
  if (axis != 0 && axis != 1) throw ContractError("concat axis must be 0 or 1");
  Index rows = parts[0].rows(), cols = parts[0].cols();
  for (size_t i = 1; i < parts.size(); ++i) {
    if (axis == 0) {
      if (parts[i].cols() != cols)
        throw DimensionError("concat(axis=0) column mismatch");
      rows += parts[i].rows();
    } else {
      if (parts[i].rows() != rows)
        throw DimensionError("concat(axis=1) row mismatch");
      cols += parts[i].cols();
    }
  }
  Matrix out(axis == 0 ? rows : parts[0].rows(), axis == 0 ? parts[0].cols() : cols);
  Index at = 0;
  for (const Tensor& p : parts) {
    if (axis == 0) {
      out.middleRows(at, p.rows()) = p.v;
      at += p.rows();
    } else {
      out.middleCols(at, p.cols()) = p.v;
      at += p.cols();
    }
  }
  Tape* tape = nullptr;
  for (const Tensor& p : parts)
    if (p.traced()) {
      if (tape && tape != p.tape) throw ContractError("concat across tapes");
      tape = p.tape;
    }
  if (!tape) return constant(std::move(out));
  std::vector<int> ids;
  std::vector<Index> sizes;
  ids.reserve(parts.size());
  for (const Tensor& p : parts) {
    ids.push_back(tape->wrap(p));
    sizes.push_back(axis == 0 ? p.rows() : p.cols());
  }
  return tape->record(std::move(out), ids, [ids, sizes, axis](Tape& t, int self) {
    const Matrix& g = t.grad_ref(self);
    Index at = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (t.needs_grad(ids[i])) {
        if (axis == 0)
          t.accumulate(ids[i], g.middleRows(at, sizes[i]));
        else
          t.accumulate(ids[i], g.middleCols(at, sizes[i]));
      }
      at += sizes[i];
    }
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw BoundsError("gather_rows index " + std::to_string(rows[i]) +
                        " out of range for " + shape_str(a.v));
    }
    out.row(static_cast<Index>(i)) = a.v.row(rows[i]);
  }
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  auto idx = std::make_shared<std::vector<Index>>(rows);
  return a.tape->record(std::move(out), {pa}, [pa, idx](Tape& t, int self) {
    const Matrix& parent = t.value(pa);
    const Matrix& g = t.grad_ref(self);
    Matrix acc = Matrix::Zero(parent.rows(), parent.cols());
    for (size_t i = 0; i < idx->size(); ++i) {
      acc.row((*idx)[i]) += g.row(static_cast<Index>(i));
    }
    t.accumulate(pa, acc);
  });
}

Tensor sum(const Tensor& a) {
  Matrix out = Matrix::Constant(1, 1, a.v.sum());
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa}, [pa](Tape& t, int self) {
    const Matrix& parent = t.value(pa);
    t.accumulate(pa, Matrix::Constant(parent.rows(), parent.cols(),
                                      t.grad_ref(self)(0, 0)));
  });
}

Tensor sum_over_axis(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw ContractError("axis must be 0 or 1");
  Matrix out = axis == 0 ? Matrix(a.v.colwise().sum())
                         : Matrix(a.v.rowwise().sum());
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa}, [pa, axis](Tape& t, int self) {
    const Matrix& parent = t.value(pa);
    const Matrix& g = t.grad_ref(self);
    if (axis == 0)
      t.accumulate(pa, g.replicate(parent.rows(), 1));
    else
      t.accumulate(pa, g.replicate(1, parent.cols()));
  });
}

Tensor mean_over_axis(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw ContractError("axis must be 0 or 1");
  double n = axis == 0 ? static_cast<double>(a.rows())
                       : static_cast<double>(a.cols());
  return scale(sum_over_axis(a, axis), 1.0 / n);
}

Tensor frobenius_sq(const Tensor& a) {
  Matrix out = Matrix::Constant(1, 1, a.v.squaredNorm());
  if (!a.traced()) return constant(std::move(out));
  int pa = a.node;
  return a.tape->record(std::move(out), {pa}, [pa](Tape& t, int self) {
    t.accumulate(pa, 2.0 * t.grad_ref(self)(0, 0) * t.value(pa));
  });
}

}  // namespace dapc::ag
