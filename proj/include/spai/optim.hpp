#pragma once

#include <cmath>
#include <vector>

#include "spai/nn.hpp"

namespace spai {

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(const ParameterList<Scalar>& params, double max_norm) {
  double total = 0.0;
  for (const auto* p : params) {
    if (p->grad.size() != 0) total += static_cast<double>(p->grad.squaredNorm());
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto factor = static_cast<Scalar>(max_norm / (norm + 1e-6));
    for (auto* p : params) {
      if (p->grad.size() != 0) p->grad *= factor;
    }
  }
  return norm;
}

/// Adam with decoupled weight decay. Decay skips row/column vectors (biases,
/// norm gains, query vectors).
template <typename Scalar>
class AdamW {
 public:
  AdamW(ParameterList<Scalar> params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : params_(std::move(params)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto* p : params_) {
      first_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      second_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  const ParameterList<Scalar>& parameters() const { return params_; }
  long steps() const { return step_; }

  void zero_grad() { zero_grads(params_); }

  void step(double lr) {
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<Scalar>& p = *params_[i];
      if (!p.trainable) continue;
      if (p.grad.size() == 0) p.zero_grad();
      if (weight_decay_ > 0.0 && p.value.rows() > 1 && p.value.cols() > 1) {
        p.value *= static_cast<Scalar>(1.0 - lr * weight_decay_);
      }
      first_[i] = static_cast<Scalar>(beta1_) * first_[i] + static_cast<Scalar>(1.0 - beta1_) * p.grad;
      second_[i] = static_cast<Scalar>(beta2_) * second_[i] +
                   static_cast<Scalar>(1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      const auto step_size = static_cast<Scalar>(lr / c1);
      const auto denom_scale = static_cast<Scalar>(1.0 / std::sqrt(c2));
      p.value.array() -= step_size * first_[i].array() /
                         (second_[i].array().sqrt() * denom_scale + static_cast<Scalar>(eps_));
    }
  }

 private:
  ParameterList<Scalar> params_;
  std::vector<Matrix<Scalar>> first_;
  std::vector<Matrix<Scalar>> second_;
  double weight_decay_;
  double beta1_, beta2_, eps_;
  long step_ = 0;
};

}  // namespace spai
