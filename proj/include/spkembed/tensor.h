// Copyright (c) 2026 The spkembed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPKEMBED_TENSOR_H_
#define SPKEMBED_TENSOR_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "spkembed/errors.h"
#include "spkembed/mat.h"
#include "spkembed/rng.h"

namespace spkembed::num {

// Reverse-mode autodiff over dense 1-D/2-D tensors. Tensors are immutable
// value handles into a graph of nodes; every operation allocates a fresh
// output node and never touches its inputs. Graphs have no global tape, so
// independent models can run on independent threads.
//
// Templated on the scalar type: float is the training default, double is
// used by the finite-difference gradient checks.
template <typename T>
class Tensor {
 public:
  struct Node {
    std::vector<size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
  };
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;

  static Tensor Zeros(std::vector<size_t> shape) {
    return FromVector(std::vector<T>(NumElements(shape), T(0)), std::move(shape));
  }
  static Tensor Full(std::vector<size_t> shape, T v) {
    return FromVector(std::vector<T>(NumElements(shape), v), std::move(shape));
  }
  static Tensor Scalar(T v) { return FromVector({v}, {1}); }
  static Tensor FromVector(std::vector<T> values, std::vector<size_t> shape) {
    Require<ShapeError>(values.size() == NumElements(shape),
                        "tensor value count ", values.size(),
                        " does not match shape product ", NumElements(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return Tensor(std::move(node));
  }
  static Tensor FromMat(const Mat& m) {
    std::vector<T> v(m.data.begin(), m.data.end());
    return FromVector(std::move(v), {m.rows, m.cols});
  }

  bool Defined() const { return node_ != nullptr; }
  const std::vector<size_t>& Shape() const { return node_->shape; }
  size_t Size() const { return node_->value.size(); }
  size_t Rank() const { return node_->shape.size(); }
  size_t Rows() const {
    Require<ShapeError>(Rank() == 2, "Rows() on non-matrix tensor");
    return node_->shape[0];
  }
  size_t Cols() const {
    Require<ShapeError>(Rank() == 2, "Cols() on non-matrix tensor");
    return node_->shape[1];
  }
  const std::vector<T>& Value() const { return node_->value; }
  // The single mutation point in the library, reserved for the optimizer.
  std::vector<T>& MutableValue() { return node_->value; }
  T Item() const {
    Require<UsageError>(Size() == 1, "Item() on tensor of size ", Size());
    return node_->value[0];
  }
  T At(size_t i) const { return node_->value[i]; }
  T At(size_t r, size_t c) const { return node_->value[r * Cols() + c]; }

  bool RequiresGrad() const { return node_->requires_grad; }
  Tensor& SetRequiresGrad(bool b) {
    node_->requires_grad = b;
    return *this;
  }
  bool HasGrad() const { return !node_->grad.empty(); }
  const std::vector<T>& Grad() const {
    Require<UsageError>(HasGrad(), "gradient not populated");
    return node_->grad;
  }
  void ZeroGrad() {
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }
  void DropGrad() { node_->grad.clear(); }

  // Accumulates dL/dx into every reachable node that requires a gradient.
  // Repeated calls accumulate, which is what gradient accumulation over a
  // batch of utterance losses relies on.
  void Backward() const {
    Require<UsageError>(Defined(), "backward on an empty tensor");
    Require<UsageError>(Size() == 1, "backward requires a scalar loss, got size ",
                        Size());
    Require<UsageError>(node_->requires_grad,
                        "backward on a graph with no recorded gradients");
    std::vector<Node*> order = TopoOrder(node_.get());
    EnsureGrad(*node_);
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward) n->backward(*n);
    }
  }

  NodePtr NodeHandle() const { return node_; }

  static void EnsureGrad(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  }

  static Tensor MakeOp(std::vector<size_t> shape, std::vector<T> value,
                       std::vector<Tensor> parents,
                       std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool requires = false;
    for (const auto& p : parents) requires = requires || p.RequiresGrad();
    node->requires_grad = requires;
    if (requires) {
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node_);
      node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
  }

  static size_t NumElements(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
  }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static std::vector<Node*> TopoOrder(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    // Iterative post-order; frame second = next parent index to visit.
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node* p = node->parents[idx++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    return order;
  }

  NodePtr node_;
};

namespace detail {

// C[m x n] += A[m x k] * B[k x n]; i-k-j order streams B and C rows.
template <typename T>
void GemmAcc(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (size_t kk = 0; kk < k; ++kk) {
      T av = arow[kk];
      if (av == T(0)) continue;
      const T* brow = b + kk * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T (rows of A dotted with rows of B).
template <typename T>
void GemmTransBAcc(const T* a, const T* b, T* c, size_t m, size_t n, size_t k) {
  for (size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (size_t kk = 0; kk < k; ++kk) {
      const T* brow = b + kk * n;
      T acc = T(0);
      for (size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[kk] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n].
template <typename T>
void GemmTransAAcc(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (size_t kk = 0; kk < k; ++kk) {
      T av = arow[kk];
      if (av == T(0)) continue;
      T* crow = c + kk * n;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void CheckSameShape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  Require<ShapeError>(a.Shape() == b.Shape(), op, ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::CheckSameShape(a, b, "Add");
  std::vector<T> out(a.Size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.At(i) + b.At(i);
  return Tensor<T>::MakeOp(a.Shape(), std::move(out), {a, b},
                           [](typename Tensor<T>::Node& n) {
                             for (int s = 0; s < 2; ++s) {
                               auto& p = *n.parents[s];
                               if (!p.requires_grad) continue;
                               Tensor<T>::EnsureGrad(p);
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 p.grad[i] += n.grad[i];
                             }
                           });
}

template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::CheckSameShape(a, b, "Sub");
  std::vector<T> out(a.Size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.At(i) - b.At(i);
  return Tensor<T>::MakeOp(a.Shape(), std::move(out), {a, b},
                           [](typename Tensor<T>::Node& n) {
                             auto& pa = *n.parents[0];
                             auto& pb = *n.parents[1];
                             if (pa.requires_grad) {
                               Tensor<T>::EnsureGrad(pa);
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 pa.grad[i] += n.grad[i];
                             }
                             if (pb.requires_grad) {
                               Tensor<T>::EnsureGrad(pb);
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 pb.grad[i] -= n.grad[i];
                             }
                           });
}

template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::CheckSameShape(a, b, "Mul");
  std::vector<T> out(a.Size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.At(i) * b.At(i);
  return Tensor<T>::MakeOp(a.Shape(), std::move(out), {a, b},
                           [](typename Tensor<T>::Node& n) {
                             auto& pa = *n.parents[0];
                             auto& pb = *n.parents[1];
                             if (pa.requires_grad) {
                               Tensor<T>::EnsureGrad(pa);
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 pa.grad[i] += n.grad[i] * pb.value[i];
                             }
                             if (pb.requires_grad) {
                               Tensor<T>::EnsureGrad(pb);
                               for (size_t i = 0; i < n.grad.size(); ++i)
                                 pb.grad[i] += n.grad[i] * pa.value[i];
                             }
                           });
}

template <typename T>
Tensor<T> Scale(const Tensor<T>& a, double c) {
  std::vector<T> out(a.Size());
  T cc = static_cast<T>(c);
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.At(i) * cc;
  return Tensor<T>::MakeOp(a.Shape(), std::move(out), {a},
                           [cc](typename Tensor<T>::Node& n) {
                             auto& p = *n.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             for (size_t i = 0; i < n.grad.size(); ++i)
                               p.grad[i] += n.grad[i] * cc;
                           });
}

// Multiply by a size-1 tensor (learned scalar weight).
template <typename T>
Tensor<T> ScaleT(const Tensor<T>& x, const Tensor<T>& s) {
  Require<ShapeError>(s.Size() == 1, "ScaleT: scale must be a scalar tensor");
  T sv = s.At(0);
  std::vector<T> out(x.Size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.At(i) * sv;
  return Tensor<T>::MakeOp(
      x.Shape(), std::move(out), {x, s}, [sv](typename Tensor<T>::Node& n) {
        auto& px = *n.parents[0];
        auto& ps = *n.parents[1];
        if (px.requires_grad) {
          Tensor<T>::EnsureGrad(px);
          for (size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += n.grad[i] * sv;
        }
        if (ps.requires_grad) {
          Tensor<T>::EnsureGrad(ps);
          T acc = T(0);
          for (size_t i = 0; i < n.grad.size(); ++i)
            acc += n.grad[i] * px.value[i];
          ps.grad[0] += acc;
        }
      });
}

// M[t x f] + v[f], broadcast over rows.
template <typename T>
Tensor<T> AddRowVec(const Tensor<T>& m, const Tensor<T>& v) {
  Require<ShapeError>(m.Rank() == 2 && v.Rank() == 1 && m.Cols() == v.Size(),
                      "AddRowVec: expected [t x f] + [f], got f mismatch");
  size_t rows = m.Rows(), cols = m.Cols();
  std::vector<T> out(m.Size());
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) out[r * cols + c] = m.At(r, c) + v.At(c);
  return Tensor<T>::MakeOp(
      m.Shape(), std::move(out), {m, v},
      [rows, cols](typename Tensor<T>::Node& n) {
        auto& pm = *n.parents[0];
        auto& pv = *n.parents[1];
        if (pm.requires_grad) {
          Tensor<T>::EnsureGrad(pm);
          for (size_t i = 0; i < n.grad.size(); ++i) pm.grad[i] += n.grad[i];
        }
        if (pv.requires_grad) {
          Tensor<T>::EnsureGrad(pv);
          for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < cols; ++c)
              pv.grad[c] += n.grad[r * cols + c];
        }
      });
}

// M[t x f] * v[f], broadcast over rows.
template <typename T>
Tensor<T> MulRowVec(const Tensor<T>& m, const Tensor<T>& v) {
  Require<ShapeError>(m.Rank() == 2 && v.Rank() == 1 && m.Cols() == v.Size(),
                      "MulRowVec: expected [t x f] * [f], got f mismatch");
  size_t rows = m.Rows(), cols = m.Cols();
  std::vector<T> out(m.Size());
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) out[r * cols + c] = m.At(r, c) * v.At(c);
  return Tensor<T>::MakeOp(
      m.Shape(), std::move(out), {m, v},
      [rows, cols](typename Tensor<T>::Node& n) {
        auto& pm = *n.parents[0];
        auto& pv = *n.parents[1];
        if (pm.requires_grad) {
          Tensor<T>::EnsureGrad(pm);
          for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < cols; ++c)
              pm.grad[r * cols + c] += n.grad[r * cols + c] * pv.value[c];
        }
        if (pv.requires_grad) {
          Tensor<T>::EnsureGrad(pv);
          for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < cols; ++c)
              pv.grad[c] += n.grad[r * cols + c] * pm.value[r * cols + c];
        }
      });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b) {
  Require<ShapeError>(a.Rank() == 2 && b.Rank() == 2 && a.Cols() == b.Rows(),
                      "MatMul: inner dimensions must agree");
  size_t m = a.Rows(), k = a.Cols(), n = b.Cols();
  std::vector<T> out(m * n, T(0));
  detail::GemmAcc(a.Value().data(), b.Value().data(), out.data(), m, k, n);
  return Tensor<T>::MakeOp(
      {m, n}, std::move(out), {a, b},
      [m, k, n](typename Tensor<T>::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
          Tensor<T>::EnsureGrad(pa);
          detail::GemmTransBAcc(node.grad.data(), pb.value.data(),
                                pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
          Tensor<T>::EnsureGrad(pb);
          detail::GemmTransAAcc(pa.value.data(), node.grad.data(),
                                pb.grad.data(), m, k, n);
        }
      });
}

// A[m x k] * x[k] -> [m]
template <typename T>
Tensor<T> MatVec(const Tensor<T>& a, const Tensor<T>& x) {
  Require<ShapeError>(a.Rank() == 2 && x.Rank() == 1 && a.Cols() == x.Size(),
                      "MatVec: dimensions must agree");
  size_t m = a.Rows(), k = a.Cols();
  std::vector<T> out(m, T(0));
  for (size_t i = 0; i < m; ++i) {
    T acc = T(0);
    for (size_t j = 0; j < k; ++j) acc += a.At(i, j) * x.At(j);
    out[i] = acc;
  }
  return Tensor<T>::MakeOp(
      {m}, std::move(out), {a, x}, [m, k](typename Tensor<T>::Node& node) {
        auto& pa = *node.parents[0];
        auto& px = *node.parents[1];
        if (pa.requires_grad) {
          Tensor<T>::EnsureGrad(pa);
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < k; ++j)
              pa.grad[i * k + j] += node.grad[i] * px.value[j];
        }
        if (px.requires_grad) {
          Tensor<T>::EnsureGrad(px);
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < k; ++j)
              px.grad[j] += pa.value[i * k + j] * node.grad[i];
        }
      });
}

// v[t] * M[t x f] -> [f] (weighted sum of rows).
template <typename T>
Tensor<T> VecMat(const Tensor<T>& v, const Tensor<T>& m) {
  Require<ShapeError>(v.Rank() == 1 && m.Rank() == 2 && v.Size() == m.Rows(),
                      "VecMat: dimensions must agree");
  size_t rows = m.Rows(), cols = m.Cols();
  std::vector<T> out(cols, T(0));
  for (size_t r = 0; r < rows; ++r) {
    T w = v.At(r);
    for (size_t c = 0; c < cols; ++c) out[c] += w * m.At(r, c);
  }
  return Tensor<T>::MakeOp(
      {cols}, std::move(out), {v, m},
      [rows, cols](typename Tensor<T>::Node& node) {
        auto& pv = *node.parents[0];
        auto& pm = *node.parents[1];
        if (pv.requires_grad) {
          Tensor<T>::EnsureGrad(pv);
          for (size_t r = 0; r < rows; ++r) {
            T acc = T(0);
            for (size_t c = 0; c < cols; ++c)
              acc += pm.value[r * cols + c] * node.grad[c];
            pv.grad[r] += acc;
          }
        }
        if (pm.requires_grad) {
          Tensor<T>::EnsureGrad(pm);
          for (size_t r = 0; r < rows; ++r) {
            T w = pv.value[r];
            for (size_t c = 0; c < cols; ++c)
              pm.grad[r * cols + c] += w * node.grad[c];
          }
        }
      });
}

template <typename T>
Tensor<T> Dot(const Tensor<T>& a, const Tensor<T>& b) {
  Require<ShapeError>(a.Rank() == 1 && b.Rank() == 1 && a.Size() == b.Size(),
                      "Dot: vectors of equal length required");
  T acc = T(0);
  for (size_t i = 0; i < a.Size(); ++i) acc += a.At(i) * b.At(i);
  return Tensor<T>::MakeOp({1}, {acc}, {a, b},
                           [](typename Tensor<T>::Node& node) {
                             auto& pa = *node.parents[0];
                             auto& pb = *node.parents[1];
                             T g = node.grad[0];
                             if (pa.requires_grad) {
                               Tensor<T>::EnsureGrad(pa);
                               for (size_t i = 0; i < pa.value.size(); ++i)
                                 pa.grad[i] += g * pb.value[i];
                             }
                             if (pb.requires_grad) {
                               Tensor<T>::EnsureGrad(pb);
                               for (size_t i = 0; i < pb.value.size(); ++i)
                                 pb.grad[i] += g * pa.value[i];
                             }
                           });
}

template <typename T>
Tensor<T> Transpose(const Tensor<T>& m) {
  Require<ShapeError>(m.Rank() == 2, "Transpose: matrix required");
  size_t rows = m.Rows(), cols = m.Cols();
  std::vector<T> out(m.Size());
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) out[c * rows + r] = m.At(r, c);
  return Tensor<T>::MakeOp({cols, rows}, std::move(out), {m},
                           [rows, cols](typename Tensor<T>::Node& node) {
                             auto& p = *node.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             for (size_t r = 0; r < rows; ++r)
                               for (size_t c = 0; c < cols; ++c)
                                 p.grad[r * cols + c] += node.grad[c * rows + r];
                           });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

namespace detail {
template <typename T, typename Fwd, typename Bwd>
Tensor<T> Unary(const Tensor<T>& x, Fwd fwd, Bwd bwd) {
  std::vector<T> out(x.Size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.At(i));
  std::vector<T> saved = out;
  return Tensor<T>::MakeOp(
      x.Shape(), std::move(out), {x},
      [saved = std::move(saved), bwd](typename Tensor<T>::Node& node) {
        auto& p = *node.parents[0];
        Tensor<T>::EnsureGrad(p);
        for (size_t i = 0; i < node.grad.size(); ++i)
          p.grad[i] += node.grad[i] * bwd(p.value[i], saved[i]);
      });
}
}  // namespace detail

template <typename T>
Tensor<T> Tanh(const Tensor<T>& x) {
  return detail::Unary(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> Sigmoid(const Tensor<T>& x) {
  return detail::Unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> Relu(const Tensor<T>& x) {
  return detail::Unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// Swish a.k.a. SiLU: x * sigmoid(x).
template <typename T>
Tensor<T> Swish(const Tensor<T>& x) {
  return Mul(x, Sigmoid(x));
}

// sqrt(max(x, eps)); the gradient follows the active branch of the max and
// is zero where the clamp engages, so constant inputs stay trainable.
template <typename T>
Tensor<T> SqrtGuarded(const Tensor<T>& x, double eps) {
  T e = static_cast<T>(eps);
  return detail::Unary(
      x, [e](T v) { return std::sqrt(v > e ? v : e); },
      [e](T v, T y) { return v > e ? T(1) / (T(2) * y) : T(0); });
}

// ---------------------------------------------------------------------------
// Softmax family (row-wise on matrices, whole vector on rank-1)
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
std::pair<size_t, size_t> RowsColsOf(const Tensor<T>& x, const char* op) {
  if (x.Rank() == 1) return {size_t{1}, x.Size()};
  Require<ShapeError>(x.Rank() == 2, op, ": rank 1 or 2 required");
  return {x.Rows(), x.Cols()};
}
}  // namespace detail

template <typename T>
Tensor<T> Softmax(const Tensor<T>& x) {
  auto [rows, cols] = detail::RowsColsOf(x, "Softmax");
  std::vector<T> out(x.Size());
  for (size_t r = 0; r < rows; ++r) {
    const T* in = x.Value().data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = in[0];
    for (size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    T sum = T(0);
    for (size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (size_t c = 0; c < cols; ++c) o[c] /= sum;
  }
  std::vector<T> saved = out;
  return Tensor<T>::MakeOp(
      x.Shape(), std::move(out), {x},
      [rows, cols, saved = std::move(saved)](typename Tensor<T>::Node& node) {
        auto& p = *node.parents[0];
        Tensor<T>::EnsureGrad(p);
        for (size_t r = 0; r < rows; ++r) {
          const T* y = saved.data() + r * cols;
          const T* g = node.grad.data() + r * cols;
          T dot = T(0);
          for (size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
          T* pg = p.grad.data() + r * cols;
          for (size_t c = 0; c < cols; ++c) pg[c] += y[c] * (g[c] - dot);
        }
      });
}

template <typename T>
Tensor<T> LogSoftmax(const Tensor<T>& x) {
  auto [rows, cols] = detail::RowsColsOf(x, "LogSoftmax");
  std::vector<T> out(x.Size());
  for (size_t r = 0; r < rows; ++r) {
    const T* in = x.Value().data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = in[0];
    for (size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    T sum = T(0);
    for (size_t c = 0; c < cols; ++c) sum += std::exp(in[c] - mx);
    T lse = mx + std::log(sum);
    for (size_t c = 0; c < cols; ++c) o[c] = in[c] - lse;
  }
  std::vector<T> saved = out;
  return Tensor<T>::MakeOp(
      x.Shape(), std::move(out), {x},
      [rows, cols, saved = std::move(saved)](typename Tensor<T>::Node& node) {
        auto& p = *node.parents[0];
        Tensor<T>::EnsureGrad(p);
        for (size_t r = 0; r < rows; ++r) {
          const T* y = saved.data() + r * cols;
          const T* g = node.grad.data() + r * cols;
          T gsum = T(0);
          for (size_t c = 0; c < cols; ++c) gsum += g[c];
          T* pg = p.grad.data() + r * cols;
          for (size_t c = 0; c < cols; ++c)
            pg[c] += g[c] - std::exp(y[c]) * gsum;
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Sum(const Tensor<T>& x) {
  T acc = T(0);
  for (size_t i = 0; i < x.Size(); ++i) acc += x.At(i);
  return Tensor<T>::MakeOp({1}, {acc}, {x},
                           [](typename Tensor<T>::Node& node) {
                             auto& p = *node.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             T g = node.grad[0];
                             for (auto& pg : p.grad) pg += g;
                           });
}

template <typename T>
Tensor<T> Mean(const Tensor<T>& x) {
  Require<UsageError>(x.Size() > 0, "Mean of an empty tensor");
  T acc = T(0);
  for (size_t i = 0; i < x.Size(); ++i) acc += x.At(i);
  size_t n = x.Size();
  acc /= static_cast<T>(n);
  return Tensor<T>::MakeOp({1}, {acc}, {x},
                           [n](typename Tensor<T>::Node& node) {
                             auto& p = *node.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             T g = node.grad[0] / static_cast<T>(n);
                             for (auto& pg : p.grad) pg += g;
                           });
}

// Column means over the rows of M[t x f] -> [f].
template <typename T>
Tensor<T> MeanCols(const Tensor<T>& m) {
  Require<ShapeError>(m.Rank() == 2, "MeanCols: matrix required");
  size_t rows = m.Rows(), cols = m.Cols();
  Require<UsageError>(rows > 0, "MeanCols on an empty sequence");
  std::vector<T> out(cols, T(0));
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) out[c] += m.At(r, c);
  for (auto& v : out) v /= static_cast<T>(rows);
  return Tensor<T>::MakeOp({cols}, std::move(out), {m},
                           [rows, cols](typename Tensor<T>::Node& node) {
                             auto& p = *node.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             for (size_t r = 0; r < rows; ++r)
                               for (size_t c = 0; c < cols; ++c)
                                 p.grad[r * cols + c] +=
                                     node.grad[c] / static_cast<T>(rows);
                           });
}

// Population variance per column of M[t x f] -> [f].
template <typename T>
Tensor<T> VarCols(const Tensor<T>& m) {
  Require<ShapeError>(m.Rank() == 2, "VarCols: matrix required");
  size_t rows = m.Rows(), cols = m.Cols();
  Require<UsageError>(rows > 0, "VarCols on an empty sequence");
  std::vector<T> mean(cols, T(0));
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) mean[c] += m.At(r, c);
  for (auto& v : mean) v /= static_cast<T>(rows);
  std::vector<T> out(cols, T(0));
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) {
      T d = m.At(r, c) - mean[c];
      out[c] += d * d;
    }
  for (auto& v : out) v /= static_cast<T>(rows);
  return Tensor<T>::MakeOp(
      {cols}, std::move(out), {m},
      [rows, cols, mean = std::move(mean)](typename Tensor<T>::Node& node) {
        auto& p = *node.parents[0];
        Tensor<T>::EnsureGrad(p);
        T inv = T(2) / static_cast<T>(rows);
        for (size_t r = 0; r < rows; ++r)
          for (size_t c = 0; c < cols; ++c)
            p.grad[r * cols + c] +=
                node.grad[c] * inv * (p.value[r * cols + c] - mean[c]);
      });
}

// ---------------------------------------------------------------------------
// Shape surgery
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Concat(const Tensor<T>& a, const Tensor<T>& b) {
  Require<ShapeError>(a.Rank() == 1 && b.Rank() == 1,
                      "Concat: rank-1 tensors required");
  std::vector<T> out;
  out.reserve(a.Size() + b.Size());
  out.insert(out.end(), a.Value().begin(), a.Value().end());
  out.insert(out.end(), b.Value().begin(), b.Value().end());
  size_t na = a.Size();
  return Tensor<T>::MakeOp({a.Size() + b.Size()}, std::move(out), {a, b},
                           [na](typename Tensor<T>::Node& node) {
                             auto& pa = *node.parents[0];
                             auto& pb = *node.parents[1];
                             if (pa.requires_grad) {
                               Tensor<T>::EnsureGrad(pa);
                               for (size_t i = 0; i < na; ++i)
                                 pa.grad[i] += node.grad[i];
                             }
                             if (pb.requires_grad) {
                               Tensor<T>::EnsureGrad(pb);
                               for (size_t i = 0; i < pb.value.size(); ++i)
                                 pb.grad[i] += node.grad[na + i];
                             }
                           });
}

template <typename T>
Tensor<T> ConcatCols(const Tensor<T>& a, const Tensor<T>& b) {
  Require<ShapeError>(a.Rank() == 2 && b.Rank() == 2 && a.Rows() == b.Rows(),
                      "ConcatCols: row counts must agree");
  size_t rows = a.Rows(), ca = a.Cols(), cb = b.Cols();
  std::vector<T> out(rows * (ca + cb));
  for (size_t r = 0; r < rows; ++r) {
    std::copy_n(a.Value().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.Value().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return Tensor<T>::MakeOp(
      {rows, ca + cb}, std::move(out), {a, b},
      [rows, ca, cb](typename Tensor<T>::Node& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        size_t stride = ca + cb;
        if (pa.requires_grad) {
          Tensor<T>::EnsureGrad(pa);
          for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < ca; ++c)
              pa.grad[r * ca + c] += node.grad[r * stride + c];
        }
        if (pb.requires_grad) {
          Tensor<T>::EnsureGrad(pb);
          for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < cb; ++c)
              pb.grad[r * cb + c] += node.grad[r * stride + ca + c];
        }
      });
}

template <typename T>
Tensor<T> ConcatRows(const Tensor<T>& a, const Tensor<T>& b) {
  Require<ShapeError>(a.Rank() == 2 && b.Rank() == 2 && a.Cols() == b.Cols(),
                      "ConcatRows: column counts must agree");
  size_t ra = a.Rows(), rb = b.Rows(), cols = a.Cols();
  std::vector<T> out;
  out.reserve((ra + rb) * cols);
  out.insert(out.end(), a.Value().begin(), a.Value().end());
  out.insert(out.end(), b.Value().begin(), b.Value().end());
  return Tensor<T>::MakeOp({ra + rb, cols}, std::move(out), {a, b},
                           [ra, cols](typename Tensor<T>::Node& node) {
                             auto& pa = *node.parents[0];
                             auto& pb = *node.parents[1];
                             if (pa.requires_grad) {
                               Tensor<T>::EnsureGrad(pa);
                               for (size_t i = 0; i < pa.value.size(); ++i)
                                 pa.grad[i] += node.grad[i];
                             }
                             if (pb.requires_grad) {
                               Tensor<T>::EnsureGrad(pb);
                               size_t off = ra * cols;
                               for (size_t i = 0; i < pb.value.size(); ++i)
                                 pb.grad[i] += node.grad[off + i];
                             }
                           });
}

// Same values, new shape; element count must match.
template <typename T>
Tensor<T> Reshape(const Tensor<T>& x, std::vector<size_t> shape) {
  Require<ShapeError>(Tensor<T>::NumElements(shape) == x.Size(),
                      "Reshape: element count mismatch");
  std::vector<T> out = x.Value();
  return Tensor<T>::MakeOp(std::move(shape), std::move(out), {x},
                           [](typename Tensor<T>::Node& node) {
                             auto& p = *node.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             for (size_t i = 0; i < node.grad.size(); ++i)
                               p.grad[i] += node.grad[i];
                           });
}

template <typename T>
Tensor<T> SliceRows(const Tensor<T>& m, size_t begin, size_t count) {
  Require<ShapeError>(m.Rank() == 2, "SliceRows: matrix required");
  Require<ShapeError>(begin + count <= m.Rows(), "SliceRows: out of range");
  size_t cols = m.Cols();
  std::vector<T> out(count * cols);
  std::copy_n(m.Value().data() + begin * cols, count * cols, out.data());
  return Tensor<T>::MakeOp({count, cols}, std::move(out), {m},
                           [begin, count, cols](typename Tensor<T>::Node& node) {
                             auto& p = *node.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             for (size_t i = 0; i < count * cols; ++i)
                               p.grad[begin * cols + i] += node.grad[i];
                           });
}

template <typename T>
Tensor<T> SliceCols(const Tensor<T>& m, size_t begin, size_t count) {
  Require<ShapeError>(m.Rank() == 2, "SliceCols: matrix required");
  Require<ShapeError>(begin + count <= m.Cols(), "SliceCols: out of range");
  size_t rows = m.Rows(), cols = m.Cols();
  std::vector<T> out(rows * count);
  for (size_t r = 0; r < rows; ++r)
    std::copy_n(m.Value().data() + r * cols + begin, count,
                out.data() + r * count);
  return Tensor<T>::MakeOp(
      {rows, count}, std::move(out), {m},
      [begin, count, rows, cols](typename Tensor<T>::Node& node) {
        auto& p = *node.parents[0];
        Tensor<T>::EnsureGrad(p);
        for (size_t r = 0; r < rows; ++r)
          for (size_t c = 0; c < count; ++c)
            p.grad[r * cols + begin + c] += node.grad[r * count + c];
      });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

// y[t] = M[t, idx[t]]; the per-frame pick used by frame-level cross-entropy.
template <typename T>
Tensor<T> PickRows(const Tensor<T>& m, const std::vector<int>& idx) {
  Require<ShapeError>(m.Rank() == 2, "PickRows: matrix required");
  Require<ShapeError>(idx.size() == m.Rows(),
                      "PickRows: one index per row required");
  size_t rows = m.Rows(), cols = m.Cols();
  std::vector<T> out(rows);
  for (size_t r = 0; r < rows; ++r) {
    Require<UsageError>(idx[r] >= 0 && static_cast<size_t>(idx[r]) < cols,
                        "PickRows: index ", idx[r], " out of range at row ", r);
    out[r] = m.At(r, static_cast<size_t>(idx[r]));
  }
  return Tensor<T>::MakeOp({rows}, std::move(out), {m},
                           [idx, cols](typename Tensor<T>::Node& node) {
                             auto& p = *node.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             for (size_t r = 0; r < idx.size(); ++r)
                               p.grad[r * cols + static_cast<size_t>(idx[r])] +=
                                   node.grad[r];
                           });
}

template <typename T>
Tensor<T> Pick(const Tensor<T>& v, size_t i) {
  Require<ShapeError>(v.Rank() == 1 && i < v.Size(), "Pick: index out of range");
  return Tensor<T>::MakeOp({1}, {v.At(i)}, {v},
                           [i](typename Tensor<T>::Node& node) {
                             auto& p = *node.parents[0];
                             Tensor<T>::EnsureGrad(p);
                             p.grad[i] += node.grad[0];
                           });
}

// ---------------------------------------------------------------------------
// Regularization and normalization
// ---------------------------------------------------------------------------

// Inverted dropout; draws one uniform per element from the given stream.
template <typename T>
Tensor<T> Dropout(const Tensor<T>& x, double p, Rng& rng) {
  Require<UsageError>(p >= 0.0 && p < 1.0, "Dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.Size());
  for (auto& mv : mask) mv = rng.Uniform() >= p ? keep_scale : T(0);
  std::vector<T> out(x.Size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.At(i) * mask[i];
  return Tensor<T>::MakeOp(
      x.Shape(), std::move(out), {x},
      [mask = std::move(mask)](typename Tensor<T>::Node& node) {
        auto& p0 = *node.parents[0];
        Tensor<T>::EnsureGrad(p0);
        for (size_t i = 0; i < node.grad.size(); ++i)
          p0.grad[i] += node.grad[i] * mask[i];
      });
}

namespace detail {
// Shared forward/backward for normalization along rows (axis=1) or columns
// (axis=0) of M, with per-feature gain/bias.
template <typename T, bool kAlongRows>
Tensor<T> NormImpl(const Tensor<T>& m, const Tensor<T>& gamma,
                   const Tensor<T>& beta, double eps) {
  Require<ShapeError>(m.Rank() == 2, "Norm: matrix required");
  size_t rows = m.Rows(), cols = m.Cols();
  size_t feat = cols;
  Require<ShapeError>(gamma.Rank() == 1 && gamma.Size() == feat &&
                          beta.Rank() == 1 && beta.Size() == feat,
                      "Norm: gain/bias must have one entry per column");
  size_t groups = kAlongRows ? rows : cols;   // independent normalizations
  size_t extent = kAlongRows ? cols : rows;   // elements per normalization
  Require<UsageError>(extent > 0, "Norm over an empty axis");
  auto at = [cols](size_t g, size_t e) {
    return kAlongRows ? g * cols + e : e * cols + g;
  };
  std::vector<T> xhat(m.Size());
  std::vector<T> inv_std(groups);
  std::vector<T> out(m.Size());
  const T* mv = m.Value().data();
  for (size_t g = 0; g < groups; ++g) {
    T mean = T(0);
    for (size_t e = 0; e < extent; ++e) mean += mv[at(g, e)];
    mean /= static_cast<T>(extent);
    T var = T(0);
    for (size_t e = 0; e < extent; ++e) {
      T d = mv[at(g, e)] - mean;
      var += d * d;
    }
    var /= static_cast<T>(extent);
    T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[g] = is;
    for (size_t e = 0; e < extent; ++e) {
      size_t i = at(g, e);
      size_t f = kAlongRows ? e : g;
      xhat[i] = (mv[i] - mean) * is;
      out[i] = gamma.At(f) * xhat[i] + beta.At(f);
    }
  }
  return Tensor<T>::MakeOp(
      m.Shape(), std::move(out), {m, gamma, beta},
      [rows, cols, groups, extent, at, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](typename Tensor<T>::Node& node) {
        auto& pm = *node.parents[0];
        auto& pg = *node.parents[1];
        auto& pb = *node.parents[2];
        if (pg.requires_grad) Tensor<T>::EnsureGrad(pg);
        if (pb.requires_grad) Tensor<T>::EnsureGrad(pb);
        if (pm.requires_grad) Tensor<T>::EnsureGrad(pm);
        for (size_t g = 0; g < groups; ++g) {
          // dL/dxhat, plus the two row statistics the backward needs.
          T mean_gh = T(0), mean_ghx = T(0);
          for (size_t e = 0; e < extent; ++e) {
            size_t i = at(g, e);
            size_t f = kAlongRows ? e : g;
            T gh = node.grad[i] * pg.value[f];
            mean_gh += gh;
            mean_ghx += gh * xhat[i];
          }
          mean_gh /= static_cast<T>(extent);
          mean_ghx /= static_cast<T>(extent);
          for (size_t e = 0; e < extent; ++e) {
            size_t i = at(g, e);
            size_t f = kAlongRows ? e : g;
            if (pg.requires_grad) pg.grad[f] += node.grad[i] * xhat[i];
            if (pb.requires_grad) pb.grad[f] += node.grad[i];
            if (pm.requires_grad) {
              T gh = node.grad[i] * pg.value[f];
              pm.grad[i] +=
                  inv_std[g] * (gh - mean_gh - xhat[i] * mean_ghx);
            }
          }
        }
        (void)rows;
        (void)cols;
      });
}
}  // namespace detail

// Layer norm: each row of M normalized over its features.
template <typename T>
Tensor<T> LayerNormRows(const Tensor<T>& m, const Tensor<T>& gamma,
                        const Tensor<T>& beta, double eps = 1e-5) {
  return detail::NormImpl<T, true>(m, gamma, beta, eps);
}

// Per-channel norm over time: each column of M[t x f] normalized over its
// rows. Batch-norm stand-in for single-utterance batches.
template <typename T>
Tensor<T> ChanNormCols(const Tensor<T>& m, const Tensor<T>& gamma,
                       const Tensor<T>& beta, double eps = 1e-5) {
  return detail::NormImpl<T, false>(m, gamma, beta, eps);
}

}  // namespace spkembed::num

#endif  // SPKEMBED_TENSOR_H_
