#include "cloudtomo/featvol/featvol.hpp"

#include <cmath>

namespace cloudtomo::featvol {

using nn::real;
using nn::Tensor;
using nn::Var;

Tensor image_to_tensor(const optics::HdrImage& image) {
  Tensor t({3, image.height, image.width});
  std::copy(image.data.begin(), image.data.end(), t.data.begin());
  return t;
}

ImageEncoder::ImageEncoder(nn::ParamStore& ps, const EncoderConfig& c) : cfg(c) {
  int k = c.kernel, p = k / 2;
  c1 = nn::Conv2d(ps, "encoder.c1", c.in_channels, c.hidden_channels, k, 1, p);
  c2 = nn::Conv2d(ps, "encoder.c2", c.hidden_channels, c.hidden_channels, k, 1, p);
  c3 = nn::Conv2d(ps, "encoder.c3", c.hidden_channels, c.feature_channels, k, 1, p);
}

Var ImageEncoder::forward(const Var& image) const {
  return c3.forward(nn::relu(c2.forward(nn::relu(c1.forward(image)))));
}

namespace {

struct BilinearTap {
  int x0, y0;
  double fx, fy;
};

// Valid when (u,v) lies within the pixel-center hull [0,W-1]x[0,H-1].
inline bool make_tap(double u, double v, int w, int h, BilinearTap& tap) {
  if (w < 2 || h < 2) return false;
  if (!(u >= 0.0 && u <= double(w - 1) && v >= 0.0 && v <= double(h - 1))) return false;
  tap.x0 = std::min(int(u), w - 2);
  tap.y0 = std::min(int(v), h - 2);
  tap.fx = u - tap.x0;
  tap.fy = v - tap.y0;
  return true;
}

struct LiftPlan {
  std::vector<CameraModel> cameras;       // active cameras
  std::vector<int> active;                // indices into the rig / feature list
  std::vector<Mat3> homographies;         // [plane * n_active + view]
  int planes = 0, nx = 0, ny = 0, channels = 0;
  GridSpec spec;
};

}  // namespace

LiftResult lift_features(const std::vector<Var>& view_features,
                         const std::vector<int>& active_views, const Rig& rig,
                         const HeightSweep& sweep, const GridSpec& spec) {
  require(view_features.size() == size_t(rig.size()), ErrorCode::invalid_argument,
          "lift_features needs one feature image per rig camera");
  require(!active_views.empty(), ErrorCode::invalid_argument, "no active views");
  sweep.validate();
  spec.validate();

  auto plan = std::make_shared<LiftPlan>();
  plan->spec = spec;
  plan->planes = sweep.size();
  plan->nx = spec.nx;
  plan->ny = spec.ny;
  plan->channels = view_features[size_t(active_views[0])]->value.dim(0);
  for (int v : active_views) {
    require(v >= 0 && v < rig.size(), ErrorCode::invalid_argument, "active view out of range");
    require(view_features[size_t(v)]->value.dim(0) == plan->channels,
            ErrorCode::invalid_argument, "feature channel mismatch across views");
    plan->active.push_back(v);
    plan->cameras.push_back(rig.cameras[size_t(v)]);
  }
  for (double h : sweep.heights)
    for (const auto& cam : plan->cameras) plan->homographies.push_back(cam.plane_homography(h));

  const int P = plan->planes, C = plan->channels, NX = plan->nx, NY = plan->ny;
  const int NV = int(plan->active.size());
  const size_t N = size_t(NX) * NY;

  Tensor volume({P, C, int(N)});
  Tensor counts({P, int(N)});

  std::vector<const real*> feat(NV);
  std::vector<int> fw(NV), fh(NV);
  for (int v = 0; v < NV; ++v) {
    const auto& f = view_features[size_t(plan->active[v])]->value;
    feat[v] = f.ptr();
    fw[v] = f.dim(2);
    fh[v] = f.dim(1);
  }

#pragma omp parallel for schedule(static)
  for (int p = 0; p < P; ++p) {
    std::vector<double> acc(C);
    for (int iy = 0; iy < NY; ++iy) {
      for (int ix = 0; ix < NX; ++ix) {
        Vec2 cc = spec.column_center(ix, iy);
        std::fill(acc.begin(), acc.end(), 0.0);
        int hits = 0;
        for (int v = 0; v < NV; ++v) {
          const Mat3& H = plan->homographies[size_t(p) * NV + v];
          double px = H(0, 0) * cc.x + H(0, 1) * cc.y + H(0, 2);
          double py = H(1, 0) * cc.x + H(1, 1) * cc.y + H(1, 2);
          double pw = H(2, 0) * cc.x + H(2, 1) * cc.y + H(2, 2);
          if (pw <= 1e-9) continue;
          BilinearTap tap;
          if (!make_tap(px / pw, py / pw, fw[v], fh[v], tap)) continue;
          ++hits;
          const size_t stride = size_t(fh[v]) * fw[v];
          const size_t base = size_t(tap.y0) * fw[v] + tap.x0;
          double w00 = (1 - tap.fx) * (1 - tap.fy), w10 = tap.fx * (1 - tap.fy);
          double w01 = (1 - tap.fx) * tap.fy, w11 = tap.fx * tap.fy;
          for (int c = 0; c < C; ++c) {
            const real* img = feat[v] + size_t(c) * stride;
            acc[c] += w00 * img[base] + w10 * img[base + 1] + w01 * img[base + fw[v]] +
                      w11 * img[base + fw[v] + 1];
          }
        }
        size_t cell = size_t(iy) * NX + ix;
        counts.data[size_t(p) * N + cell] = real(hits);
        if (hits > 0)
          for (int c = 0; c < C; ++c)
            volume.data[(size_t(p) * C + c) * N + cell] = real(acc[c] / hits);
      }
    }
  }

  std::vector<Var> parents;
  for (int v : plan->active) parents.push_back(view_features[size_t(v)]);
  auto counts_shared = std::make_shared<Tensor>(counts);

  Var volume_var = nn::make_node(
      std::move(volume), parents, [plan, counts_shared, C, NV, NX, NY, N](nn::Node& self) {
        // Scatter grads back through the bilinear taps; one thread per view
        // keeps every feature image owned by a single writer.
        std::vector<nn::Node*> grads(NV);
        for (int v = 0; v < NV; ++v) {
          grads[v] = self.parents[size_t(v)].get();
          grads[v]->ensure_grad();
        }
#pragma omp parallel for schedule(static)
        for (int v = 0; v < NV; ++v) {
          nn::Node* fnode = grads[v];
          const int w = fnode->value.dim(2), h = fnode->value.dim(1);
          const size_t stride = size_t(h) * w;
          for (int p = 0; p < plan->planes; ++p) {
            const Mat3& H = plan->homographies[size_t(p) * NV + v];
            for (int iy = 0; iy < NY; ++iy) {
              for (int ix = 0; ix < NX; ++ix) {
                size_t cell = size_t(iy) * NX + ix;
                double count = counts_shared->data[size_t(p) * N + cell];
                if (count <= 0) continue;
                Vec2 cc = plan->spec.column_center(ix, iy);
                double px = H(0, 0) * cc.x + H(0, 1) * cc.y + H(0, 2);
                double py = H(1, 0) * cc.x + H(1, 1) * cc.y + H(1, 2);
                double pw = H(2, 0) * cc.x + H(2, 1) * cc.y + H(2, 2);
                if (pw <= 1e-9) continue;
                BilinearTap tap;
                if (!make_tap(px / pw, py / pw, w, h, tap)) continue;
                const size_t base = size_t(tap.y0) * w + tap.x0;
                double w00 = (1 - tap.fx) * (1 - tap.fy), w10 = tap.fx * (1 - tap.fy);
                double w01 = (1 - tap.fx) * tap.fy, w11 = tap.fx * tap.fy;
                for (int c = 0; c < C; ++c) {
                  double g = double(self.grad.data[(size_t(p) * C + c) * N + cell]) / count;
                  real* gimg = fnode->grad.data.data() + size_t(c) * stride;
                  gimg[base] += real(g * w00);
                  gimg[base + 1] += real(g * w10);
                  gimg[base + w] += real(g * w01);
                  gimg[base + w + 1] += real(g * w11);
                }
              }
            }
          }
        }
      });

  return LiftResult{volume_var, *counts_shared};
}

nn::Tensor sample_point_features(const std::vector<Tensor>& view_features,
                                 const std::vector<int>& active_views, const Rig& rig,
                                 const std::vector<Vec3>& points) {
  require(!active_views.empty(), ErrorCode::invalid_argument, "no active views");
  const int C = view_features[size_t(active_views[0])].dim(0);
  Tensor out({int(points.size()), C});
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < points.size(); ++i) {
    std::vector<double> acc(C, 0.0);
    int hits = 0;
    for (int v : active_views) {
      const auto& cam = rig.cameras[size_t(v)];
      Vec2 uv;
      double depth;
      if (!cam.try_project(points[i], uv, depth)) continue;
      const auto& f = view_features[size_t(v)];
      BilinearTap tap;
      if (!make_tap(uv.x, uv.y, f.dim(2), f.dim(1), tap)) continue;
      ++hits;
      const int w = f.dim(2);
      const size_t stride = size_t(f.dim(1)) * w;
      const size_t base = size_t(tap.y0) * w + tap.x0;
      double w00 = (1 - tap.fx) * (1 - tap.fy), w10 = tap.fx * (1 - tap.fy);
      double w01 = (1 - tap.fx) * tap.fy, w11 = tap.fx * tap.fy;
      for (int c = 0; c < C; ++c) {
        const real* img = f.ptr() + c * stride;
        acc[c] += w00 * img[base] + w10 * img[base + 1] + w01 * img[base + w] +
                  w11 * img[base + w + 1];
      }
    }
    if (hits > 0)
      for (int c = 0; c < C; ++c) out.data[i * C + c] = real(acc[c] / hits);
  }
  return out;
}

Tensor sinusoidal_height_embedding(const std::vector<double>& heights, int dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorCode::invalid_argument,
          "embedding dim must be even and >= 2");
  Tensor out({int(heights.size()), dim});
  const int half = dim / 2;
  for (size_t p = 0; p < heights.size(); ++p) {
    double hs = heights[p] / 100.0;
    for (int k = 0; k < half; ++k) {
      double omega = std::pow(10000.0, -double(k) / double(half));
      out.data[p * dim + 2 * k] = real(std::sin(hs * omega));
      out.data[p * dim + 2 * k + 1] = real(std::cos(hs * omega));
    }
  }
  return out;
}

HeightConditioner::HeightConditioner(nn::ParamStore& ps, const AdaLnConfig& c, int channels_)
    : cfg(c), channels(channels_) {
  fc = nn::Linear(ps, "adaln.fc", c.embed_dim, c.hidden_dim);
  // Zero-initialized heads: modulation starts as identity (gamma=1, delta=0).
  w_gamma = ps.add_zeros("adaln.gamma.w", {channels, c.hidden_dim});
  b_gamma = ps.add_zeros("adaln.gamma.b", {channels});
  w_delta = ps.add_zeros("adaln.delta.w", {channels, c.hidden_dim});
  b_delta = ps.add_zeros("adaln.delta.b", {channels});
}

std::pair<Var, Var> HeightConditioner::modulation(const std::vector<double>& heights) const {
  Var embed = nn::make_constant(sinusoidal_height_embedding(heights, cfg.embed_dim));
  Var hidden = nn::relu(fc.forward(embed));
  Var gamma = nn::add_scalar(nn::linear(hidden, w_gamma, b_gamma), 1.0);
  Var delta = nn::linear(hidden, w_delta, b_delta);
  return {gamma, delta};
}

Var HeightConditioner::forward(const Var& volume, const Tensor& counts,
                               const std::vector<double>& heights) const {
  auto [gamma, delta] = modulation(heights);
  Tensor mask(counts.shape);
  for (size_t i = 0; i < counts.numel(); ++i) mask.data[i] = counts.data[i] > 0 ? 1.f : 0.f;
  return nn::adaln_plane(volume, gamma, delta, std::move(mask));
}

Var flatten_volume(const Var& volume, int nx, int ny) {
  require(volume->value.rank() == 3, ErrorCode::invalid_argument, "flatten expects [P,C,N]");
  require(volume->value.dim(2) == nx * ny, ErrorCode::invalid_argument,
          "flatten: cell count mismatch");
  int P = volume->value.dim(0), C = volume->value.dim(1);
  return nn::reshape(volume, {P * C, ny, nx});
}

Tensor hit_fraction_channel(const Tensor& counts, int n_active_views, int nx, int ny) {
  const int P = counts.dim(0);
  Tensor out({1, ny, nx});
  const size_t N = size_t(nx) * ny;
  for (size_t n = 0; n < N; ++n) {
    double acc = 0;
    for (int p = 0; p < P; ++p) acc += counts.data[size_t(p) * N + n];
    out.data[n] = real(acc / (double(P) * std::max(1, n_active_views)));
  }
  return out;
}

}  // namespace cloudtomo::featvol
