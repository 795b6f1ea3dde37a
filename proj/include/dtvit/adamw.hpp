#pragma once

#include <cmath>
#include <vector>

#include "dtvit/common.hpp"
#include "dtvit/tensor.hpp"
#include "dtvit/vit.hpp"

namespace dtvit {

struct AdamWConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   w <- w (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)
// The decay is applied multiplicatively so a zero-gradient step is exactly
// w * (1 - lr * wd).
template <typename S>
class AdamW {
 public:
  explicit AdamW(const AdamWConfig& cfg) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  int64_t step_count() const { return t_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // single-tensor update; state is lazily sized on first use
  void step_tensor(size_t slot, Tensor<S>& w, const Tensor<S>& g) {
    if (slot >= m_.size()) {
      m_.resize(slot + 1);
      v_.resize(slot + 1);
    }
    if (m_[slot].numel() == 0) {
      m_[slot] = Tensor<S>::zeros(w.shape);
      v_[slot] = Tensor<S>::zeros(w.shape);
    }
    if (w.shape != g.shape)
      failf("adamw: parameter/gradient shape mismatch: ", shape_str(w.shape), " vs ",
            shape_str(g.shape));
    check(m_[slot].shape == w.shape, "adamw: state shape drift");
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S lr = static_cast<S>(cfg_.lr), eps = static_cast<S>(cfg_.eps);
    const S decay = static_cast<S>(1.0 - cfg_.lr * cfg_.weight_decay);
    const S bc1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const S bc2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    S* pm = m_[slot].data.data();
    S* pv = v_[slot].data.data();
    S* pw = w.data.data();
    const S* pg = g.data.data();
    for (int64_t i = 0; i < w.numel(); ++i) {
      pm[i] = b1 * pm[i] + (S(1) - b1) * pg[i];
      pv[i] = b2 * pv[i] + (S(1) - b2) * pg[i] * pg[i];
      S mhat = pm[i] / bc1;
      S vhat = pv[i] / bc2;
      pw[i] = pw[i] * decay - lr * (mhat / (std::sqrt(vhat) + eps));
    }
  }

  // update every tensor of a parameter set; grads aligned with params order
  void step(Params<S>& params, const std::vector<Tensor<S>>& grads) {
    check(grads.size() == params.tensors.size(), "adamw: gradient list size mismatch");
    ++t_;
    for (size_t i = 0; i < params.tensors.size(); ++i)
      step_tensor(i, params.tensors[i], grads[i]);
  }

  // begin a new step explicitly when driving step_tensor directly
  void begin_step() { ++t_; }

 private:
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

}  // namespace dtvit
