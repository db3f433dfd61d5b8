// include/dapc/autograd.hpp

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

#ifndef DAPC_AUTOGRAD_HPP
#define DAPC_AUTOGRAD_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "dapc/errors.hpp"

// Minimal reverse-mode differentiation over dense double matrices.
//
// Values are Eigen::MatrixXd; a scalar is a 1x1 matrix. Operations run
// eagerly; when any operand is attached to a Tape, the operation also
// records a node so that Tape::backward can replay the chain rule in
// reverse topological order. A tape is built per step and consumed by a
// single backward pass (define-by-run).
namespace dapc::ag {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tape;

// Dense 2-D value with an optional handle into a tape node.
struct Tensor {
  Matrix v;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  explicit Tensor(Matrix value) : v(std::move(value)) {}

  bool traced() const { return tape != nullptr; }
  Index rows() const { return v.rows(); }
  Index cols() const { return v.cols(); }

  // Value of a 1x1 tensor.
  double item() const;
};

Tensor constant(Matrix value);
Tensor scalar(double value);

class Tape {
 public:
  // Called with the tape and the node's own id; reads the node's
  // accumulated gradient and pushes contributions into its parents.
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers an input tensor. Gradients are retained only for nodes
  // with requires_grad (parameters) and whatever lies between them and
  // the loss.
  Tensor leaf(Matrix value, bool requires_grad = true);

  // Records an operation node. Extension point for fused ops (the GRU
  // layer registers itself through this). `parents` are node ids on
  // this tape.
  Tensor record(Matrix value, std::vector<int> parents, BackwardFn backward);

  // Node id of `t` on this tape; untraced tensors are registered as
  // constants (no gradient flows into them).
  int wrap(const Tensor& t);

  // Reverse pass from a scalar loss. Visits nodes exactly once in
  // reverse insertion order; the tape is consumed afterwards.
  void backward(const Tensor& loss);

  const Matrix& value(int node) const { return nodes_[static_cast<size_t>(node)].value; }
  bool needs_grad(int node) const { return nodes_[static_cast<size_t>(node)].needs_grad; }
  bool has_grad(const Tensor& t) const;
  // Accumulated gradient of a tensor on this tape (zero matrix if none
  // reached it).
  Matrix grad(const Tensor& t) const;
  const Matrix& grad_ref(int node) const;

  // Adds a contribution to a node's gradient buffer (no-op for nodes
  // that do not need gradients).
  void accumulate(int node, const Matrix& g);

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  void reset();

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    BackwardFn backward;
    bool needs_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// ---- traced operations -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise binaries; shapes must match or one operand may be a
// broadcastable row (1xC), column (Rx1) or scalar (1x1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double c);

// Elementwise unaries (elu has alpha = 1).
Tensor tanh_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor elu_t(const Tensor& a);
Tensor relu_t(const Tensor& a);
Tensor square_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);

// ln det(a + jitter*I) of a symmetric positive-definite matrix via
// Cholesky; gradient is the symmetrized inverse. Throws
// NotPositiveDefiniteError (with the failing pivot) if factorization
// fails even after adding jitter.
Tensor logdet_spd(const Tensor& a, double jitter);

// Plain (non-traced) Cholesky log-determinant of a square matrix; the
// same routine backs logdet_spd.
double cholesky_logdet(const Matrix& m, int* fail_pivot = nullptr,
                       Matrix* factor = nullptr);

Tensor slice(const Tensor& a, Index row0, Index n_rows, Index col0, Index n_cols);
Tensor concat(int axis, const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, const std::vector<Index>& rows);

Tensor sum(const Tensor& a);
Tensor sum_over_axis(const Tensor& a, int axis);
Tensor mean_over_axis(const Tensor& a, int axis);
Tensor frobenius_sq(const Tensor& a);

}  // namespace dapc::ag

#endif  // DAPC_AUTOGRAD_HPP
