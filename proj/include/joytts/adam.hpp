#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "joytts/autodiff.hpp"
#include "joytts/common.hpp"

namespace joytts {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a parameter group. Moments live on the
// parameters themselves so checkpoints capture optimizer state for free.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  AdamConfig& config() { return cfg_; }
  int64_t step_count() const { return step_; }
  void set_step_count(int64_t t) { step_ = t; }

  // Scales all gradients so the group's global L2 norm is at most max_norm.
  static void clip_global_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
    double sq = 0.0;
    for (const Parameter<T>* p : params)
      for (const T& g : p->grad.data) sq += static_cast<double>(g) * g;
    double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    T scale = static_cast<T>(max_norm / norm);
    for (Parameter<T>* p : params)
      for (T& g : p->grad.data) g *= scale;
  }

  // Applies one update in place and zeroes the gradients.
  void step(const std::vector<Parameter<T>*>& params) {
    for (Parameter<T>* p : params)
      for (const T& g : p->grad.data)
        if (!std::isfinite(static_cast<double>(g)))
          throw NumericError("adam: non-finite gradient in parameter '" + p->name + "' at step " +
                             std::to_string(step_ + 1));
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (Parameter<T>* p : params) {
      for (size_t i = 0; i < p->value.numel(); ++i) {
        double g = static_cast<double>(p->grad.data[i]);
        double m = cfg_.beta1 * static_cast<double>(p->moment1.data[i]) + (1.0 - cfg_.beta1) * g;
        double v = cfg_.beta2 * static_cast<double>(p->moment2.data[i]) + (1.0 - cfg_.beta2) * g * g;
        p->moment1.data[i] = static_cast<T>(m);
        p->moment2.data[i] = static_cast<T>(v);
        double mhat = m / bc1;
        double vhat = v / bc2;
        p->value.data[i] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
      p->zero_grad();
    }
  }

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
};

}  // namespace joytts
