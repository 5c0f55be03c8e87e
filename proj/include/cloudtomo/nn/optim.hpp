#pragma once

#include <cmath>

#include "cloudtomo/nn/layers.hpp"

namespace cloudtomo::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

// Adam with double-precision moment state.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void zero_grad(ParamStore& ps) {
    for (auto& [_, p] : ps.params)
      if (!p->grad.data.empty()) std::fill(p->grad.data.begin(), p->grad.data.end(), real(0));
  }

  double global_grad_norm(const ParamStore& ps) const {
    double sq = 0;
    for (const auto& [_, p] : ps.params)
      for (real g : p->grad.data) sq += double(g) * double(g);
    return std::sqrt(sq);
  }

  // Clips, applies the update, and advances time. Returns the pre-clip norm.
  double step(ParamStore& ps, double lr) {
    double norm = global_grad_norm(ps);
    double scale = 1.0;
    if (cfg_.grad_clip > 0 && norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (auto& [name, p] : ps.params) {
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.empty()) {
        m.assign(p->value.numel(), 0.0);
        v.assign(p->value.numel(), 0.0);
      }
      p->ensure_grad();
      for (size_t i = 0; i < p->value.numel(); ++i) {
        double g = double(p->grad.data[i]) * scale;
        if (cfg_.weight_decay > 0) g += cfg_.weight_decay * double(p->value.data[i]);
        m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g * g;
        double mhat = m[i] / bc1, vhat = v[i] / bc2;
        p->value.data[i] -= real(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
    return norm;
  }

  int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// lr multiplier for a cosine or constant schedule.
inline double schedule_multiplier(const std::string& schedule, int64_t step, int64_t total) {
  if (schedule == "cosine" && total > 0)
    return 0.5 * (1.0 + std::cos(3.14159265358979323846 * double(step) / double(total)));
  return 1.0;
}

}  // namespace cloudtomo::nn
