// Copyright 2026 The urbanseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Nodes are appended in evaluation order, so walking the node list
// backwards is a valid reverse topological order and every node's backward
// rule runs exactly once.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "urbanseg/errors.hpp"

namespace urbanseg {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Mat<Scalar>& value() const { return tape_->node(id_).value; }
  // Zero-sized until backward() reaches the node.
  const Mat<Scalar>& grad() const { return tape_->node(id_).grad; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->node(id_).requires_grad; }

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  // Receives the node's output gradient; accumulates into its inputs.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix value) { return push(std::move(value), nullptr, false); }
  Var<Scalar> parameter(Matrix value) { return push(std::move(value), nullptr, true); }

  Var<Scalar> push(Matrix value, BackwardFn backward, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), requires_grad});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  // Adds `g` into the gradient accumulator of `v` (no-op for constants).
  template <typename Derived>
  void accumulate(const Var<Scalar>& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every node
  // that requires a gradient.
  void backward(const Var<Scalar>& root) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw ValidationError("backward: root must be a scalar");
    }
    backward(root, Matrix::Ones(1, 1));
  }

  void backward(const Var<Scalar>& root, const Matrix& seed) {
    if (seed.rows() != root.rows() || seed.cols() != root.cols()) {
      throw ValidationError("backward: seed shape differs from root");
    }
    accumulate(root, seed);
    for (std::size_t id = root.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      // Rules only accumulate into lower ids, so `n` stays valid.
      n.backward(*this, n.grad);
    }
  }

 private:
  std::vector<Node> nodes_;
};

namespace ops {

template <typename Scalar>
inline void check_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.tape() != &b.tape()) throw ValidationError("tape ops: operands live on different tapes");
}

template <typename Scalar>
inline void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace ops

// C = A * B
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  ops::check_same_tape(a, b);
  ops::require<Scalar>(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Mat<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape().push(
      std::move(out),
      [a, b](Tape<Scalar>& t, const Mat<Scalar>& g) {
        if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
        if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
      },
      rg);
}

// A + broadcast row vector b (1 x cols).
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& b) {
  ops::check_same_tape(a, b);
  ops::require<Scalar>(b.rows() == 1 && b.cols() == a.cols(), "add_row: shape mismatch");
  Mat<Scalar> out = a.value().rowwise() + b.value().row(0);
  return a.tape().push(
      std::move(out),
      [a, b](Tape<Scalar>& t, const Mat<Scalar>& g) {
        t.accumulate(a, g);
        if (b.requires_grad()) t.accumulate(b, g.colwise().sum());
      },
      a.requires_grad() || b.requires_grad());
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  ops::check_same_tape(a, b);
  ops::require<Scalar>(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Mat<Scalar> out = a.value() + b.value();
  return a.tape().push(
      std::move(out),
      [a, b](Tape<Scalar>& t, const Mat<Scalar>& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
      },
      a.requires_grad() || b.requires_grad());
}

// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  ops::check_same_tape(a, b);
  ops::require<Scalar>(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Mat<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape().push(
      std::move(out),
      [a, b](Tape<Scalar>& t, const Mat<Scalar>& g) {
        if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
        if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
      },
      a.requires_grad() || b.requires_grad());
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope) {
  Mat<Scalar> out = a.value().unaryExpr([slope](Scalar v) { return v > 0 ? v : slope * v; });
  return a.tape().push(
      std::move(out),
      [a, slope](Tape<Scalar>& t, const Mat<Scalar>& g) {
        Mat<Scalar> d = g.binaryExpr(a.value(), [slope](Scalar gv, Scalar x) {
          return x > 0 ? gv : slope * gv;
        });
        t.accumulate(a, d);
      },
      a.requires_grad());
}

// Rows of `a` selected by `index` (repeats allowed). Backward scatter-adds in
// row order, so the result does not depend on scheduling.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& a, std::shared_ptr<const std::vector<std::int32_t>> index) {
  const auto n = static_cast<Eigen::Index>(index->size());
  Mat<Scalar> out(n, a.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = (*index)[static_cast<std::size_t>(r)];
    ops::require<Scalar>(src >= 0 && src < a.rows(), "gather_rows: index out of range");
    out.row(r) = a.value().row(src);
  }
  return a.tape().push(
      std::move(out),
      [a, index](Tape<Scalar>& t, const Mat<Scalar>& g) {
        Mat<Scalar> d = Mat<Scalar>::Zero(a.rows(), a.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          d.row((*index)[static_cast<std::size_t>(r)]) += g.row(r);
        }
        t.accumulate(a, d);
      },
      a.requires_grad());
}

template <typename Scalar>
Var<Scalar> concat_cols(const Var<Scalar>& a, const Var<Scalar>& b) {
  ops::check_same_tape(a, b);
  ops::require<Scalar>(a.rows() == b.rows(), "concat_cols: row counts differ");
  Mat<Scalar> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  const Eigen::Index ca = a.cols();
  const Eigen::Index cb = b.cols();
  return a.tape().push(
      std::move(out),
      [a, b, ca, cb](Tape<Scalar>& t, const Mat<Scalar>& g) {
        if (a.requires_grad()) t.accumulate(a, g.leftCols(ca));
        if (b.requires_grad()) t.accumulate(b, g.rightCols(cb));
      },
      a.requires_grad() || b.requires_grad());
}

// Softmax over each block of `group` consecutive rows, independently per
// column. Input rows = N * group.
template <typename Scalar>
Var<Scalar> group_softmax(const Var<Scalar>& a, Eigen::Index group) {
  ops::require<Scalar>(group >= 1 && a.rows() % group == 0, "group_softmax: bad group size");
  const Eigen::Index blocks = a.rows() / group;
  Mat<Scalar> out(a.rows(), a.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    auto in = a.value().middleRows(b * group, group);
    auto o = out.middleRows(b * group, group);
    const RowVec<Scalar> mx = in.colwise().maxCoeff();
    o = (in.rowwise() - mx).array().exp().matrix();
    const RowVec<Scalar> sum = o.colwise().sum();
    o.array().rowwise() /= sum.array();
  }
  auto saved = std::make_shared<const Mat<Scalar>>(out);
  return a.tape().push(
      std::move(out),
      [a, saved, group, blocks](Tape<Scalar>& t, const Mat<Scalar>& g) {
        Mat<Scalar> d(g.rows(), g.cols());
        for (Eigen::Index b = 0; b < blocks; ++b) {
          auto s = saved->middleRows(b * group, group);
          auto gb = g.middleRows(b * group, group);
          const RowVec<Scalar> dot = s.cwiseProduct(gb).colwise().sum();
          d.middleRows(b * group, group) = s.cwiseProduct(gb.rowwise() - dot);
        }
        t.accumulate(a, d);
      },
      a.requires_grad());
}

// Sums each block of `group` consecutive rows: (N*group) x C -> N x C.
template <typename Scalar>
Var<Scalar> group_sum(const Var<Scalar>& a, Eigen::Index group) {
  ops::require<Scalar>(group >= 1 && a.rows() % group == 0, "group_sum: bad group size");
  const Eigen::Index blocks = a.rows() / group;
  Mat<Scalar> out(blocks, a.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    out.row(b) = a.value().middleRows(b * group, group).colwise().sum();
  }
  return a.tape().push(
      std::move(out),
      [a, group, blocks](Tape<Scalar>& t, const Mat<Scalar>& g) {
        Mat<Scalar> d(a.rows(), a.cols());
        for (Eigen::Index b = 0; b < blocks; ++b) {
          d.middleRows(b * group, group).rowwise() = g.row(b);
        }
        t.accumulate(a, d);
      },
      a.requires_grad());
}

// Elementwise product with a constant matrix (dropout masks, projections).
template <typename Scalar>
Var<Scalar> scale_by(const Var<Scalar>& a, std::shared_ptr<const Mat<Scalar>> factor) {
  ops::require<Scalar>(factor->rows() == a.rows() && factor->cols() == a.cols(),
                       "scale_by: shape mismatch");
  Mat<Scalar> out = a.value().cwiseProduct(*factor);
  return a.tape().push(
      std::move(out),
      [a, factor](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(a, g.cwiseProduct(*factor)); },
      a.requires_grad());
}

// Sum of all entries -> 1x1.
template <typename Scalar>
Var<Scalar> sum_all(const Var<Scalar>& a) {
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return a.tape().push(
      std::move(out),
      [a, r, c](Tape<Scalar>& t, const Mat<Scalar>& g) { t.accumulate(a, Mat<Scalar>::Constant(r, c, g(0, 0))); },
      a.requires_grad());
}

// Batch normalization over rows. In training mode the batch statistics are
// used and the running estimates are blended with `momentum` (new = m * old +
// (1 - m) * batch). In evaluation mode the running estimates are used.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Mat<Scalar>& running_mean, Mat<Scalar>& running_var, bool training,
                       Scalar momentum, Scalar eps) {
  ops::check_same_tape(x, gamma);
  ops::check_same_tape(x, beta);
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  ops::require<Scalar>(gamma.cols() == c && beta.cols() == c && running_mean.cols() == c &&
                           running_var.cols() == c,
                       "batch_norm: channel mismatch");
  RowVec<Scalar> mean;
  RowVec<Scalar> var;
  if (training) {
    ops::require<Scalar>(n >= 1, "batch_norm: empty batch");
    mean = x.value().colwise().mean();
    var = (x.value().rowwise() - mean).array().square().colwise().mean().matrix();
    running_mean = momentum * running_mean + (Scalar(1) - momentum) * mean;
    running_var = momentum * running_var + (Scalar(1) - momentum) * var;
  } else {
    mean = running_mean.row(0);
    var = running_var.row(0);
  }
  const RowVec<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
  auto xhat = std::make_shared<Mat<Scalar>>(
      ((x.value().rowwise() - mean).array().rowwise() * inv_std.array()).matrix());
  Mat<Scalar> out = (xhat->array().rowwise() * gamma.value().row(0).array()).rowwise() +
                    beta.value().row(0).array();
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return x.tape().push(
      std::move(out),
      [x, gamma, beta, xhat, inv_std, training, n](Tape<Scalar>& t, const Mat<Scalar>& g) {
        if (gamma.requires_grad()) t.accumulate(gamma, g.cwiseProduct(*xhat).colwise().sum());
        if (beta.requires_grad()) t.accumulate(beta, g.colwise().sum());
        if (!x.requires_grad()) return;
        const Mat<Scalar> dxhat = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
        if (!training) {
          t.accumulate(x, (dxhat.array().rowwise() * inv_std.array()).matrix());
          return;
        }
        const RowVec<Scalar> sum_d = dxhat.colwise().sum();
        const RowVec<Scalar> sum_dx = dxhat.cwiseProduct(*xhat).colwise().sum();
        const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
        Mat<Scalar> dx = ((dxhat.rowwise() - sum_d * inv_n).array() -
                          xhat->array().rowwise() * (sum_dx * inv_n).array())
                             .matrix();
        dx.array().rowwise() *= inv_std.array();
        t.accumulate(x, dx);
      },
      rg);
}

// Mean class-weighted cross-entropy over rows of `logits`:
//   loss = (1/N) * sum_i w[y_i] * (-log softmax(logits_i)[y_i])
// with gradient (softmax - onehot) * w[y_i] / N per row.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, std::shared_ptr<const std::vector<std::uint32_t>> labels,
                                  std::shared_ptr<const std::vector<Scalar>> class_weights) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  ops::require<Scalar>(static_cast<Eigen::Index>(labels->size()) == n && n > 0,
                       "cross_entropy: label count differs from logit rows");
  ops::require<Scalar>(static_cast<Eigen::Index>(class_weights->size()) == c,
                       "cross_entropy: class weight count differs from logit columns");
  auto probs = std::make_shared<Mat<Scalar>>(n, c);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto y = (*labels)[static_cast<std::size_t>(i)];
    if (y >= static_cast<std::uint32_t>(c)) throw ValidationError("cross_entropy: label out of range");
    const auto row = logits.value().row(i);
    const Scalar mx = row.maxCoeff();
    const Scalar lse = mx + std::log((row.array() - mx).exp().sum());
    probs->row(i) = (row.array() - lse).exp().matrix();
    total += (*class_weights)[y] * (lse - row(y));
  }
  Mat<Scalar> out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(n);
  return logits.tape().push(
      std::move(out),
      [logits, labels, class_weights, probs, n](Tape<Scalar>& t, const Mat<Scalar>& g) {
        Mat<Scalar> d = *probs;
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto y = (*labels)[static_cast<std::size_t>(i)];
          d(i, y) -= Scalar(1);
          d.row(i) *= (*class_weights)[y] * g(0, 0) / static_cast<Scalar>(n);
        }
        t.accumulate(logits, d);
      },
      logits.requires_grad());
}

}  // namespace urbanseg
