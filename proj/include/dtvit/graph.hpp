#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "dtvit/common.hpp"
#include "dtvit/tensor.hpp"

namespace dtvit {

// Tape-based reverse-mode autodiff over a dynamically recorded graph.
// Nodes are appended in creation order, which is already a topological
// order, so backward() is a single reverse sweep visiting each node once.
// Every operation validates its output for NaN/Inf and fails fast.
template <typename S>
class Graph {
 public:
  int input(Tensor<S> v, bool requires_grad = false) {
    check_finite(v, "input");
    return push(std::move(v), requires_grad, nullptr);
  }

  const Tensor<S>& value(int id) const { return nodes_[id].value; }

  const Tensor<S>& grad(int id) const {
    check(nodes_[id].requires_grad, "grad: node does not require grad");
    return nodes_[id].grad;
  }

  // C = A x B, A: m x k, B: k x n
  int matmul(int a, int b) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    check(A.ndim() == 2 && B.ndim() == 2, "matmul: operands must be 2-D");
    if (A.shape[1] != B.shape[0])
      failf("matmul: inner extents disagree: ", shape_str(A.shape), " vs ", shape_str(B.shape));
    int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor<S> C = Tensor<S>::zeros({m, n});
    const S* pa = A.data.data();
    const S* pb = B.data.data();
    S* pc = C.data.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t t = 0; t < k; ++t) {
        S aik = pa[i * k + t];
        const S* brow = pb + t * n;
        S* crow = pc + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    int out = push(std::move(C), needs(a) || needs(b), "matmul");
    nodes_[out].back = [this, a, b, out, m, k, n]() {
      const S* dc = nodes_[out].grad.data.data();
      const S* pa2 = nodes_[a].value.data.data();
      const S* pb2 = nodes_[b].value.data.data();
      if (needs(a)) {
        S* da = grad_buf(a);
        // dA = dC x B^T
        for (int64_t i = 0; i < m; ++i)
          for (int64_t t = 0; t < k; ++t) {
            S acc = 0;
            const S* dcrow = dc + i * n;
            const S* brow = pb2 + t * n;
            for (int64_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            da[i * k + t] += acc;
          }
      }
      if (needs(b)) {
        S* db = grad_buf(b);
        // dB = A^T x dC
        for (int64_t t = 0; t < k; ++t)
          for (int64_t i = 0; i < m; ++i) {
            S ait = pa2[i * k + t];
            const S* dcrow = dc + i * n;
            S* dbrow = db + t * n;
            for (int64_t j = 0; j < n; ++j) dbrow[j] += ait * dcrow[j];
          }
      }
    };
    return out;
  }

  int transpose(int a) {
    const Tensor<S>& A = val(a);
    check(A.ndim() == 2, "transpose: operand must be 2-D");
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor<S> T = Tensor<S>::zeros({n, m});
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) T.data[j * m + i] = A.data[i * n + j];
    int out = push(std::move(T), needs(a), "transpose");
    nodes_[out].back = [this, a, out, m, n]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      const S* dt = nodes_[out].grad.data.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) da[i * n + j] += dt[j * m + i];
    };
    return out;
  }

  int add(int a, int b) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    if (A.shape != B.shape)
      failf("add: shape mismatch: ", shape_str(A.shape), " vs ", shape_str(B.shape));
    Tensor<S> C = A;
    for (int64_t i = 0; i < C.numel(); ++i) C.data[i] += B.data[i];
    int out = push(std::move(C), needs(a) || needs(b), "add");
    nodes_[out].back = [this, a, b, out]() {
      const Tensor<S>& d = nodes_[out].grad;
      if (needs(a)) {
        S* da = grad_buf(a);
        for (int64_t i = 0; i < d.numel(); ++i) da[i] += d.data[i];
      }
      if (needs(b)) {
        S* db = grad_buf(b);
        for (int64_t i = 0; i < d.numel(); ++i) db[i] += d.data[i];
      }
    };
    return out;
  }

  int mul(int a, int b) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    if (A.shape != B.shape)
      failf("mul: shape mismatch: ", shape_str(A.shape), " vs ", shape_str(B.shape));
    Tensor<S> C = A;
    for (int64_t i = 0; i < C.numel(); ++i) C.data[i] *= B.data[i];
    int out = push(std::move(C), needs(a) || needs(b), "mul");
    nodes_[out].back = [this, a, b, out]() {
      const Tensor<S>& d = nodes_[out].grad;
      if (needs(a)) {
        S* da = grad_buf(a);
        const S* pb = nodes_[b].value.data.data();
        for (int64_t i = 0; i < d.numel(); ++i) da[i] += d.data[i] * pb[i];
      }
      if (needs(b)) {
        S* db = grad_buf(b);
        const S* pa = nodes_[a].value.data.data();
        for (int64_t i = 0; i < d.numel(); ++i) db[i] += d.data[i] * pa[i];
      }
    };
    return out;
  }

  int scale(int a, S c) {
    Tensor<S> C = val(a);
    for (S& x : C.data) x *= c;
    int out = push(std::move(C), needs(a), "scale");
    nodes_[out].back = [this, a, out, c]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      const Tensor<S>& d = nodes_[out].grad;
      for (int64_t i = 0; i < d.numel(); ++i) da[i] += c * d.data[i];
    };
    return out;
  }

  // a: m x n, bias: n, broadcast over rows
  int add_bias(int a, int b) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    check(A.ndim() == 2 && B.ndim() == 1, "add_bias: need 2-D input and 1-D bias");
    if (A.shape[1] != B.shape[0])
      failf("add_bias: width mismatch: ", shape_str(A.shape), " vs ", shape_str(B.shape));
    int64_t m = A.shape[0], n = A.shape[1];
    Tensor<S> C = A;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) C.data[i * n + j] += B.data[j];
    int out = push(std::move(C), needs(a) || needs(b), "add_bias");
    nodes_[out].back = [this, a, b, out, m, n]() {
      const S* d = nodes_[out].grad.data.data();
      if (needs(a)) {
        S* da = grad_buf(a);
        for (int64_t i = 0; i < m * n; ++i) da[i] += d[i];
      }
      if (needs(b)) {
        S* db = grad_buf(b);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) db[j] += d[i * n + j];
      }
    };
    return out;
  }

  // numerically stable softmax along axis of a 1-D or 2-D tensor
  int softmax(int a, int axis) {
    const Tensor<S>& A = val(a);
    check(A.ndim() == 1 || A.ndim() == 2, "softmax: operand must be 1-D or 2-D");
    check(axis >= 0 && axis < A.ndim(), "softmax: invalid axis");
    int64_t m = A.ndim() == 1 ? 1 : A.shape[0];
    int64_t n = A.ndim() == 1 ? A.shape[0] : A.shape[1];
    bool rows = (A.ndim() == 1) || axis == 1;  // normalize along contiguous rows?
    Tensor<S> Y = A;
    int64_t outer = rows ? m : n;
    int64_t inner = rows ? n : m;
    int64_t os = rows ? n : 1;   // outer stride
    int64_t is = rows ? 1 : n;   // inner stride
    check(inner > 0, "softmax: empty axis");
    for (int64_t o = 0; o < outer; ++o) {
      S* base = Y.data.data() + o * os;
      S mx = base[0];
      for (int64_t i = 1; i < inner; ++i) mx = std::max(mx, base[i * is]);
      S sum = 0;
      for (int64_t i = 0; i < inner; ++i) {
        S e = std::exp(base[i * is] - mx);
        base[i * is] = e;
        sum += e;
      }
      for (int64_t i = 0; i < inner; ++i) base[i * is] /= sum;
    }
    int out = push(std::move(Y), needs(a), "softmax");
    nodes_[out].back = [this, a, out, outer, inner, os, is]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      const S* y = nodes_[out].value.data.data();
      const S* dy = nodes_[out].grad.data.data();
      for (int64_t o = 0; o < outer; ++o) {
        S dot = 0;
        for (int64_t i = 0; i < inner; ++i) {
          int64_t k = o * os + i * is;
          dot += dy[k] * y[k];
        }
        for (int64_t i = 0; i < inner; ++i) {
          int64_t k = o * os + i * is;
          da[k] += y[k] * (dy[k] - dot);
        }
      }
    };
    return out;
  }

  // normalize over the last axis with biased variance, then affine gamma/beta
  int layernorm(int x, int gamma, int beta, S eps) {
    const Tensor<S>& X = val(x);
    const Tensor<S>& G = val(gamma);
    const Tensor<S>& Bt = val(beta);
    check(eps > 0, "layernorm: eps must be positive");
    check(X.ndim() == 1 || X.ndim() == 2, "layernorm: input must be 1-D or 2-D");
    int64_t m = X.ndim() == 1 ? 1 : X.shape[0];
    int64_t D = X.ndim() == 1 ? X.shape[0] : X.shape[1];
    if (G.ndim() != 1 || G.shape[0] != D || Bt.ndim() != 1 || Bt.shape[0] != D)
      failf("layernorm: gamma/beta width must be ", D, ", got ", shape_str(G.shape), " and ",
            shape_str(Bt.shape));
    Tensor<S> Y = X;
    std::vector<S> xhat(static_cast<size_t>(m * D));
    std::vector<S> inv_std(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
      const S* row = X.data.data() + i * D;
      S mu = 0;
      for (int64_t j = 0; j < D; ++j) mu += row[j];
      mu /= static_cast<S>(D);
      S var = 0;
      for (int64_t j = 0; j < D; ++j) {
        S d = row[j] - mu;
        var += d * d;
      }
      var /= static_cast<S>(D);
      S istd = S(1) / std::sqrt(var + eps);
      inv_std[i] = istd;
      S* yrow = Y.data.data() + i * D;
      for (int64_t j = 0; j < D; ++j) {
        S xh = (row[j] - mu) * istd;
        xhat[i * D + j] = xh;
        yrow[j] = xh * G.data[j] + Bt.data[j];
      }
    }
    int out = push(std::move(Y), needs(x) || needs(gamma) || needs(beta), "layernorm");
    nodes_[out].back = [this, x, gamma, beta, out, m, D, xhat = std::move(xhat),
                        inv_std = std::move(inv_std)]() {
      const S* dy = nodes_[out].grad.data.data();
      const S* g = nodes_[gamma].value.data.data();
      if (needs(gamma)) {
        S* dg = grad_buf(gamma);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < D; ++j) dg[j] += dy[i * D + j] * xhat[i * D + j];
      }
      if (needs(beta)) {
        S* db = grad_buf(beta);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < D; ++j) db[j] += dy[i * D + j];
      }
      if (needs(x)) {
        S* dx = grad_buf(x);
        for (int64_t i = 0; i < m; ++i) {
          S mean_dxh = 0, mean_dxh_xh = 0;
          for (int64_t j = 0; j < D; ++j) {
            S dxh = dy[i * D + j] * g[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[i * D + j];
          }
          mean_dxh /= static_cast<S>(D);
          mean_dxh_xh /= static_cast<S>(D);
          for (int64_t j = 0; j < D; ++j) {
            S dxh = dy[i * D + j] * g[j];
            dx[i * D + j] += inv_std[i] * (dxh - mean_dxh - xhat[i * D + j] * mean_dxh_xh);
          }
        }
      }
    };
    return out;
  }

  // x * Phi(x), tanh approximation
  int gelu(int a) {
    const Tensor<S>& A = val(a);
    Tensor<S> Y = A;
    const S k = static_cast<S>(std::sqrt(2.0 / M_PI));
    const S c = static_cast<S>(0.044715);
    for (S& v : Y.data) {
      S t = std::tanh(k * (v + c * v * v * v));
      v = S(0.5) * v * (S(1) + t);
    }
    int out = push(std::move(Y), needs(a), "gelu");
    nodes_[out].back = [this, a, out, k, c]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      const S* x = nodes_[a].value.data.data();
      const S* dy = nodes_[out].grad.data.data();
      int64_t n = nodes_[a].value.numel();
      for (int64_t i = 0; i < n; ++i) {
        S v = x[i];
        S t = std::tanh(k * (v + c * v * v * v));
        S dt = (S(1) - t * t) * k * (S(1) + S(3) * c * v * v);
        da[i] += dy[i] * (S(0.5) * (S(1) + t) + S(0.5) * v * dt);
      }
    };
    return out;
  }

  int reshape(int a, std::vector<int64_t> sh) {
    const Tensor<S>& A = val(a);
    check(shape_numel(sh) == A.numel(), "reshape: element count mismatch");
    Tensor<S> Y(std::move(sh), A.data);
    int out = push(std::move(Y), needs(a), "reshape");
    nodes_[out].back = [this, a, out]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      const Tensor<S>& d = nodes_[out].grad;
      for (int64_t i = 0; i < d.numel(); ++i) da[i] += d.data[i];
    };
    return out;
  }

  // half-open [start, stop) along axis of a 2-D tensor
  int slice(int a, int axis, int64_t start, int64_t stop) {
    const Tensor<S>& A = val(a);
    check(A.ndim() == 2, "slice: operand must be 2-D");
    check(axis == 0 || axis == 1, "slice: invalid axis");
    int64_t extent = A.shape[axis];
    check(0 <= start && start < stop && stop <= extent, "slice: bounds out of range");
    int64_t m = A.shape[0], n = A.shape[1];
    int64_t om = axis == 0 ? stop - start : m;
    int64_t on = axis == 1 ? stop - start : n;
    Tensor<S> Y = Tensor<S>::zeros({om, on});
    for (int64_t i = 0; i < om; ++i)
      for (int64_t j = 0; j < on; ++j)
        Y.data[i * on + j] =
            A.data[(axis == 0 ? i + start : i) * n + (axis == 1 ? j + start : j)];
    int out = push(std::move(Y), needs(a), "slice");
    nodes_[out].back = [this, a, out, axis, start, om, on, n]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      const S* d = nodes_[out].grad.data.data();
      for (int64_t i = 0; i < om; ++i)
        for (int64_t j = 0; j < on; ++j)
          da[(axis == 0 ? i + start : i) * n + (axis == 1 ? j + start : j)] += d[i * on + j];
    };
    return out;
  }

  int concat(int a, int b, int axis) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    check(A.ndim() == 2 && B.ndim() == 2, "concat: operands must be 2-D");
    check(axis == 0 || axis == 1, "concat: invalid axis");
    if (A.shape[1 - axis] != B.shape[1 - axis])
      failf("concat: shapes disagree off-axis: ", shape_str(A.shape), " vs ", shape_str(B.shape));
    int64_t m = axis == 0 ? A.shape[0] + B.shape[0] : A.shape[0];
    int64_t n = axis == 1 ? A.shape[1] + B.shape[1] : A.shape[1];
    Tensor<S> Y = Tensor<S>::zeros({m, n});
    int64_t an = A.shape[1], bn = B.shape[1], am = A.shape[0];
    for (int64_t i = 0; i < A.shape[0]; ++i)
      for (int64_t j = 0; j < an; ++j) Y.data[i * n + j] = A.data[i * an + j];
    for (int64_t i = 0; i < B.shape[0]; ++i)
      for (int64_t j = 0; j < bn; ++j)
        Y.data[(axis == 0 ? i + am : i) * n + (axis == 1 ? j + an : j)] = B.data[i * bn + j];
    int out = push(std::move(Y), needs(a) || needs(b), "concat");
    nodes_[out].back = [this, a, b, out, axis, n, an, bn, am]() {
      const S* d = nodes_[out].grad.data.data();
      if (needs(a)) {
        S* da = grad_buf(a);
        int64_t arows = nodes_[a].value.shape[0];
        for (int64_t i = 0; i < arows; ++i)
          for (int64_t j = 0; j < an; ++j) da[i * an + j] += d[i * n + j];
      }
      if (needs(b)) {
        S* db = grad_buf(b);
        int64_t brows = nodes_[b].value.shape[0];
        for (int64_t i = 0; i < brows; ++i)
          for (int64_t j = 0; j < bn; ++j)
            db[i * bn + j] += d[(axis == 0 ? i + am : i) * n + (axis == 1 ? j + an : j)];
      }
    };
    return out;
  }

  // gather rows of a 2-D tensor; repeated indices accumulate in backward
  int take_rows(int a, std::vector<int64_t> idx) {
    const Tensor<S>& A = val(a);
    check(A.ndim() == 2, "take_rows: operand must be 2-D");
    check(!idx.empty(), "take_rows: empty index list");
    int64_t n = A.shape[1];
    for (int64_t r : idx) check(0 <= r && r < A.shape[0], "take_rows: index out of range");
    Tensor<S> Y = Tensor<S>::zeros({static_cast<int64_t>(idx.size()), n});
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t j = 0; j < n; ++j) Y.data[i * n + j] = A.data[idx[i] * n + j];
    int out = push(std::move(Y), needs(a), "take_rows");
    nodes_[out].back = [this, a, out, idx = std::move(idx), n]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      const S* d = nodes_[out].grad.data.data();
      for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t j = 0; j < n; ++j) da[idx[i] * n + j] += d[i * n + j];
    };
    return out;
  }

  int sum_all(int a) {
    const Tensor<S>& A = val(a);
    S s = 0;
    for (S v : A.data) s += v;
    int out = push(Tensor<S>({1}, {s}), needs(a), "sum_all");
    nodes_[out].back = [this, a, out]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      S d = nodes_[out].grad.data[0];
      for (int64_t i = 0; i < nodes_[a].value.numel(); ++i) da[i] += d;
    };
    return out;
  }

  int mean_all(int a) {
    const Tensor<S>& A = val(a);
    S s = 0;
    for (S v : A.data) s += v;
    S n = static_cast<S>(A.numel());
    int out = push(Tensor<S>({1}, {s / n}), needs(a), "mean_all");
    nodes_[out].back = [this, a, out, n]() {
      if (!needs(a)) return;
      S* da = grad_buf(a);
      S d = nodes_[out].grad.data[0] / n;
      for (int64_t i = 0; i < nodes_[a].value.numel(); ++i) da[i] += d;
    };
    return out;
  }

  // mean over the batch of -log softmax(logits)[i, target_i]; fused op whose
  // gradient is (softmax - onehot)/B
  int cross_entropy(int logits, const std::vector<int>& targets) {
    const Tensor<S>& L = val(logits);
    check(L.ndim() == 2, "cross_entropy: logits must be 2-D");
    int64_t B = L.shape[0], K = L.shape[1];
    check(static_cast<int64_t>(targets.size()) == B,
          "cross_entropy: batch size does not match target count");
    for (int t : targets)
      if (t < 0 || t >= K) failf("cross_entropy: target ", t, " out of range [0,", K, ")");
    std::vector<S> probs(static_cast<size_t>(B * K));
    S loss = 0;
    for (int64_t i = 0; i < B; ++i) {
      const S* row = L.data.data() + i * K;
      S mx = row[0];
      for (int64_t j = 1; j < K; ++j) mx = std::max(mx, row[j]);
      S sum = 0;
      for (int64_t j = 0; j < K; ++j) {
        S e = std::exp(row[j] - mx);
        probs[i * K + j] = e;
        sum += e;
      }
      for (int64_t j = 0; j < K; ++j) probs[i * K + j] /= sum;
      loss -= std::log(probs[i * K + targets[i]]);
    }
    loss /= static_cast<S>(B);
    int out = push(Tensor<S>({1}, {loss}), needs(logits), "cross_entropy");
    nodes_[out].back = [this, logits, out, B, K, targets, probs = std::move(probs)]() {
      if (!needs(logits)) return;
      S* dl = grad_buf(logits);
      S d = nodes_[out].grad.data[0] / static_cast<S>(B);
      for (int64_t i = 0; i < B; ++i)
        for (int64_t j = 0; j < K; ++j)
          dl[i * K + j] += d * (probs[i * K + j] - (targets[i] == j ? S(1) : S(0)));
    };
    return out;
  }

  // reverse sweep from a scalar root; every requires_grad node is visited once
  void backward(int root) {
    check(nodes_[root].value.numel() == 1, "backward: root must be scalar");
    check(nodes_[root].requires_grad, "backward: root does not depend on any parameter");
    for (Node& n : nodes_)
      if (n.requires_grad) n.grad = Tensor<S>::zeros(n.value.shape);
    nodes_[root].grad.data[0] = S(1);
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.requires_grad && n.back) n.back();
    }
    for (const Node& n : nodes_)
      if (n.requires_grad) check_finite(n.grad, "backward");
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool requires_grad = false;
    std::function<void()> back;
  };

  std::vector<Node> nodes_;

  const Tensor<S>& val(int id) const { return nodes_[id].value; }
  bool needs(int id) const { return nodes_[id].requires_grad; }
  S* grad_buf(int id) { return nodes_[id].grad.data.data(); }

  int push(Tensor<S> v, bool requires_grad, const char* op) {
    if (op) check_finite(v, op);
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  static void check_finite(const Tensor<S>& t, const char* op) {
    for (S v : t.data)
      if (!std::isfinite(static_cast<double>(v)))
        failf(op, ": produced a non-finite value");
  }
};

}  // namespace dtvit
