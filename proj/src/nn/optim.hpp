#pragma once

#include <cmath>

#include "nn/layers.hpp"

namespace sologan {

template <typename T>
struct AdamConfig {
  T lr = T(2e-4);
  T beta1 = T(0.5);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T grad_clip = T(0);  // 0 disables clipping
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var<T>> params, AdamConfig<T> cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) {
      m_.emplace_back(p.value().shape());
      v_.emplace_back(p.value().shape());
    }
  }

  void set_lr(T lr) { cfg_.lr = lr; }
  T lr() const { return cfg_.lr; }
  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }

  const std::vector<Var<T>>& params() const { return params_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // One Adam update over all owned parameters; parameters whose grad was never
  // touched this step are skipped. Bumps the parameter generation so cached
  // derived weights are rebuilt.
  void step() {
    ++t_;
    T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Var<T>& p = params_[i];
      if (p.grad().empty()) continue;
      T* g = p.grad().data();
      if (cfg_.grad_clip > T(0)) clip_norm(p.grad(), cfg_.grad_clip);
      T* pm = m_[i].data();
      T* pv = v_[i].data();
      T* pw = p.value().data();
      for (int64_t j = 0, e = p.value().numel(); j < e; ++j) {
        pm[j] = cfg_.beta1 * pm[j] + (T(1) - cfg_.beta1) * g[j];
        pv[j] = cfg_.beta2 * pv[j] + (T(1) - cfg_.beta2) * g[j] * g[j];
        T mhat = pm[j] / bc1;
        T vhat = pv[j] / bc2;
        pw[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    bump_param_generation();
  }

 private:
  static void clip_norm(Tensor<T>& g, T max_norm) {
    T nrm = T(0);
    for (int64_t i = 0, e = g.numel(); i < e; ++i) nrm += g[i] * g[i];
    nrm = std::sqrt(nrm);
    if (nrm <= max_norm) return;
    T scale = max_norm / nrm;
    for (int64_t i = 0, e = g.numel(); i < e; ++i) g[i] *= scale;
  }

  std::vector<Var<T>> params_;
  std::vector<Tensor<T>> m_, v_;
  AdamConfig<T> cfg_;
  int64_t t_ = 0;
};

}  // namespace sologan
