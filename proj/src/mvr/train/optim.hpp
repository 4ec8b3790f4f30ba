#pragma once

#include <cmath>
#include <vector>

#include "mvr/model/params.hpp"
#include "mvr/train/config.hpp"

namespace mvr {

// Linear warmup to the peak, then cosine decay to zero (or constant when
// cosine is off). lr(0) = peak/warmup, lr(warmup) = peak.
inline double lr_at(const TrainConfig& cfg, int step) {
  const int warmup = cfg.effective_warmup();
  if (step < warmup) return cfg.lr * static_cast<double>(step + 1) / warmup;
  if (!cfg.cosine || cfg.total_steps <= warmup) return cfg.lr;
  const double progress = static_cast<double>(step - warmup) / (cfg.total_steps - warmup);
  return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * std::min(progress, 1.0)));
}

// Scales all gradients so the global norm does not exceed max_norm; returns
// the pre-clip norm. Accumulation runs serially in parameter order.
template <class T>
double clip_global_norm(ParamStore<T>& params, double max_norm) {
  double ss = 0.0;
  for (size_t i = 0; i < params.size(); ++i)
    for (const T g : params.at(i).grad) ss += static_cast<double>(g) * g;
  const double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0) {
    const T scale = static_cast<T>(max_norm / norm);
    for (size_t i = 0; i < params.size(); ++i)
      for (T& g : params.at(i).grad) g *= scale;
  }
  return norm;
}

// Adam with decoupled weight decay:
//   m <- b1 m + (1-b1) g           v <- b2 v + (1-b2) g^2
//   p <- p - lr (m^ / (sqrt(v^) + eps) + wd p)
// with the usual bias corrections m^ = m/(1-b1^t), v^ = v/(1-b2^t).
template <class T>
class AdamW {
 public:
  void init(const ParamStore<T>& params) {
    m_.clear();
    v_.clear();
    for (size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params.at(i).numel(), T(0));
      v_.emplace_back(params.at(i).numel(), T(0));
    }
    t_ = 0;
  }

  void step(ParamStore<T>& params, const TrainConfig& cfg, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = params.at(i);
      if (p.grad.size() != p.data.size()) continue;  // parameter unused this step
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t k = 0; k < p.data.size(); ++k) {
        const T g = p.grad[k];
        m[k] = static_cast<T>(cfg.beta1) * m[k] + static_cast<T>(1.0 - cfg.beta1) * g;
        v[k] = static_cast<T>(cfg.beta2) * v[k] + static_cast<T>(1.0 - cfg.beta2) * g * g;
        const double mhat = static_cast<double>(m[k]) / bc1;
        const double vhat = static_cast<double>(v[k]) / bc2;
        p.data[k] -= static_cast<T>(lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                                          cfg.weight_decay * static_cast<double>(p.data[k])));
      }
    }
  }

  long steps_taken() const { return t_; }
  std::vector<std::vector<T>>& moments1() { return m_; }
  std::vector<std::vector<T>>& moments2() { return v_; }
  void set_steps_taken(long t) { t_ = t; }

 private:
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  long t_ = 0;
};

}  // namespace mvr
