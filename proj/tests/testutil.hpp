#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cloudtomo/nn/layers.hpp"

namespace testutil {

using cloudtomo::CameraModel;
using cloudtomo::Mat3;
using cloudtomo::Vec3;

// Camera at `pos` with R = identity (world z is camera depth), square pixels.
inline CameraModel up_camera(double fx, double cx, double cy, int w, int h,
                             Vec3 pos = {0, 0, 0}) {
  CameraModel cam;
  cam.K = Mat3::identity();
  cam.K(0, 0) = fx;
  cam.K(1, 1) = fx;
  cam.K(0, 2) = cx;
  cam.K(1, 2) = cy;
  cam.R = Mat3::identity();
  cam.t = cam.R * (Vec3{0, 0, 0} - pos);
  cam.width = w;
  cam.height = h;
  return cam;
}

// Central-difference gradient check. Rebuilds the loss through `loss_fn`
// after each parameter nudge (double-precision loss shadow), then compares
// the full analytic gradient against the numeric one with an L2-norm ratio.
struct GradCheckResult {
  double rel_error = 0;      // ||g_a - g_fd|| / max(||g_a||, ||g_fd||)
  double norm_analytic = 0;
  double norm_numeric = 0;
};

inline GradCheckResult gradient_check(
    cloudtomo::nn::ParamStore& params,
    const std::function<cloudtomo::nn::Var()>& loss_fn,
    const std::vector<std::string>& param_names, double step = 5e-3) {
  using namespace cloudtomo::nn;

  Var loss = loss_fn();
  for (auto& [_, p] : params.params)
    if (!p->grad.data.empty()) std::fill(p->grad.data.begin(), p->grad.data.end(), real(0));
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& name : param_names) {
    Var p = params.at(name);
    p->ensure_grad();
    analytic.emplace_back(p->grad.data.begin(), p->grad.data.end());
  }

  GradCheckResult result;
  double diff_sq = 0, a_sq = 0, n_sq = 0;
  for (size_t k = 0; k < param_names.size(); ++k) {
    Var p = params.at(param_names[k]);
    for (size_t i = 0; i < p->value.numel(); ++i) {
      real saved = p->value.data[i];
      double h = step * std::max(1.0, std::abs(double(saved)));
      p->value.data[i] = real(double(saved) + h);
      double up = scalar_of(loss_fn());
      p->value.data[i] = real(double(saved) - h);
      double down = scalar_of(loss_fn());
      p->value.data[i] = saved;
      // Use the realized parameter delta to cancel float quantization.
      double h_eff = 0.5 * (double(real(double(saved) + h)) - double(real(double(saved) - h)));
      double numeric = h_eff > 0 ? (up - down) / (2.0 * h_eff) : 0.0;
      double a = analytic[k][i];
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
    }
  }
  result.norm_analytic = std::sqrt(a_sq);
  result.norm_numeric = std::sqrt(n_sq);
  double denom = std::max(result.norm_analytic, result.norm_numeric);
  result.rel_error = denom > 0 ? std::sqrt(diff_sq) / denom : 0.0;
  return result;
}

}  // namespace testutil
