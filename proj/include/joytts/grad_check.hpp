#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "joytts/tensor.hpp"

namespace joytts {

// Central-difference gradient verification. f must evaluate a scalar from a
// candidate tensor without touching the analytic path under test; run it in
// double. Returns the max relative error with denominator max(|a|,|b|,1e-8).
inline double finite_diff_check(const std::function<double(const Tensor<double>&)>& f,
                                const Tensor<double>& x, const Tensor<double>& analytic_grad,
                                double eps = 1e-4) {
  double max_rel = 0.0;
  Tensor<double> probe = x;
  for (size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + eps;
    const double fp = f(probe);
    probe.data[i] = orig - eps;
    const double fm = f(probe);
    probe.data[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic_grad.data[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
  }
  return max_rel;
}

}  // namespace joytts
