#pragma once

#include "retssl/model/params.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace retssl::train {

inline double global_grad_norm(const std::vector<nn::Mat<float>>& grads) {
  double sq = 0;
  for (const auto& g : grads) sq += static_cast<double>(g.template cast<double>().squaredNorm());
  return std::sqrt(sq);
}

// Scales all gradients so their global norm is at most max_norm; returns the
// pre-clip norm.
inline double clip_global_norm(std::vector<nn::Mat<float>>& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (norm > max_norm && norm > 0) {
    const float k = static_cast<float>(max_norm / norm);
    for (auto& g : grads) g *= k;
  }
  return norm;
}

// Adam with decoupled weight decay. Decay is skipped for parameters
// registered with decay=false (biases, norms, tokens).
class AdamW {
 public:
  AdamW() = default;
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void init(const model::ParamStore<float>& params) {
    m_.clear();
    v_.clear();
    for (const auto& e : params.entries) {
      m_.push_back(nn::Mat<float>::Zero(e.value.rows(), e.value.cols()));
      v_.push_back(nn::Mat<float>::Zero(e.value.rows(), e.value.cols()));
    }
    step_count_ = 0;
  }

  void step(model::ParamStore<float>& params, const std::vector<nn::Mat<float>>& grads,
            double lr) {
    if (grads.size() != params.count() || m_.size() != params.count())
      throw std::invalid_argument("optimizer step: size mismatch");
    ++step_count_;
    const float bc1 = 1.0f - static_cast<float>(std::pow(beta1_, step_count_));
    const float bc2 = 1.0f - static_cast<float>(std::pow(beta2_, step_count_));
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float flr = static_cast<float>(lr);
    for (size_t i = 0; i < params.count(); ++i) {
      auto& theta = params.entries[i].value;
      m_[i] = b1 * m_[i] + (1.0f - b1) * grads[i];
      v_[i] = (b2 * v_[i].array() + (1.0f - b2) * grads[i].array().square()).matrix();
      if (params.entries[i].decay && weight_decay_ > 0)
        theta -= flr * static_cast<float>(weight_decay_) * theta;
      theta.array() -=
          flr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + static_cast<float>(eps_));
    }
  }

  long step_count() const { return step_count_; }
  std::vector<nn::Mat<float>>& moments1() { return m_; }
  std::vector<nn::Mat<float>>& moments2() { return v_; }
  const std::vector<nn::Mat<float>>& moments1() const { return m_; }
  const std::vector<nn::Mat<float>>& moments2() const { return v_; }
  void restore(std::vector<nn::Mat<float>> m, std::vector<nn::Mat<float>> v, long steps) {
    m_ = std::move(m);
    v_ = std::move(v);
    step_count_ = steps;
  }
  double weight_decay() const { return weight_decay_; }

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.95;
  double eps_ = 1e-8;
  double weight_decay_ = 0.05;
  long step_count_ = 0;
  std::vector<nn::Mat<float>> m_, v_;
};

}  // namespace retssl::train
