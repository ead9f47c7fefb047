#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "multifuse/tensor.hpp"

namespace multifuse {

// Bias-corrected Adam over a fixed set of named parameter tensors. Parameters
// whose grad buffer is empty (never touched by backward) are left unchanged.
template <typename T>
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor<T>>> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, p] : params) slots_.push_back({std::move(p), std::vector<T>(), std::vector<T>()});
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long long step_count() const { return t_; }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& slot : slots_) {
      auto& value = slot.param.value();
      const auto& grad = slot.param.grad();
      if (grad.size() != value.size()) continue;
      if (slot.m.empty()) {
        slot.m.assign(value.size(), T(0));
        slot.v.assign(value.size(), T(0));
      }
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        const double m = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
        const double v = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
        slot.m[i] = static_cast<T>(m);
        slot.v[i] = static_cast<T>(v);
        value[i] -= static_cast<T>(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
      }
    }
  }

 private:
  struct Slot {
    Tensor<T> param;
    std::vector<T> m, v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

}  // namespace multifuse
