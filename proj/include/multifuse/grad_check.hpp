#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "multifuse/tensor.hpp"

namespace multifuse {

struct GradCheckFailure {
  std::string param;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_err = 0;
};

struct GradCheckReport {
  bool ok = true;
  double max_rel_err = 0;
  std::size_t checked = 0;
  std::vector<GradCheckFailure> failures;
};

// Central-difference check of d(loss)/d(param) for every entry of every named
// parameter. `forward` must rebuild the scalar loss from the current parameter
// values on each call. Relative error: |a - n| / (|a| + |n| + 1e-12).
inline GradCheckReport grad_check(const std::function<Tensor<double>()>& forward,
                                  std::vector<std::pair<std::string, Tensor<double>>> params,
                                  double tol = 1e-4, double h = 1e-5) {
  Tensor<double> loss = forward();
  if (loss.size() != 1) throw std::invalid_argument("grad_check: output must be scalar");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  for (auto& [name, p] : params) {
    if (p.grad().size() != p.size())
      p.grad().assign(p.size(), 0.0);  // parameter unused by the graph
    analytic.push_back(p.grad());
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi].second.value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      double f_plus, f_minus;
      {
        NoGradGuard guard;
        value[i] = saved + h;
        f_plus = forward().item();
        value[i] = saved - h;
        f_minus = forward().item();
        value[i] = saved;
      }
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
      if (rel > tol) {
        report.ok = false;
        report.failures.push_back({params[pi].first, i, a, numeric, rel});
      }
    }
  }
  return report;
}

}  // namespace multifuse
