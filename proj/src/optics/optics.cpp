#include "cloudtomo/optics/optics.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cloudtomo::optics {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kInvFourPi = 1.0 / (4.0 * kPi);
}  // namespace

void OpticalParams::validate() const {
  require(droplet_radius > 0 && water_density > 0 && q_scat > 0 && march_step > 0,
          ErrorCode::config, "optical parameters must be positive");
}

void SunModel::validate() const {
  require(std::abs(direction.norm() - 1.0) < 1e-9, ErrorCode::config,
          "sun direction must be normalized");
  require(direction.z > 0, ErrorCode::config, "sun must be above the horizon");
  require(sky_radiance >= 0 && sun_radiance >= 0, ErrorCode::config,
          "radiances must be nonnegative");
}

SunModel SunModel::from_angles(double azimuth_deg, double elevation_deg, double sky_radiance,
                               double sun_radiance) {
  double az = azimuth_deg * kPi / 180.0, el = elevation_deg * kPi / 180.0;
  SunModel sun;
  // Compass azimuth: 0 = north (+y), 90 = east (+x).
  sun.direction = Vec3{std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el)};
  sun.sky_radiance = sky_radiance;
  sun.sun_radiance = sun_radiance;
  sun.validate();
  return sun;
}

ExtinctionGrid lwc_to_extinction(const LwcGrid& grid, const OpticalParams& params) {
  params.validate();
  const double r = params.droplet_radius;
  const double sigma_scat = params.q_scat * kPi * r * r;
  const double nd_per_rho = 3.0 / (4.0 * kPi * params.water_density * r * r * r);
  ExtinctionGrid ext(grid.spec);
  for (size_t i = 0; i < grid.rho.size(); ++i) ext.beta[i] = grid.rho[i] * nd_per_rho * sigma_scat;
  return ext;
}

double segment_scatter_probability(double beta, double dz) {
  require(beta >= 0 && dz >= 0, ErrorCode::invalid_argument,
          "segment_scatter_probability needs beta >= 0 and dz >= 0");
  return -std::expm1(-beta * dz);
}

namespace {

// Point sample with periodic horizontal wrap. z must lie in [z_bot, z_top];
// the exact top face maps into the last voxel layer so uniform slabs
// integrate exactly.
inline double sample_beta(const ExtinctionGrid& ext, double x, double y, double z) {
  const GridSpec& s = ext.spec;
  double xf = std::fmod(x - s.origin.x, s.extent_x());
  if (xf < 0) xf += s.extent_x();
  double yf = std::fmod(y - s.origin.y, s.extent_y());
  if (yf < 0) yf += s.extent_y();
  int ix = std::min(int(xf / s.voxel.x), s.nx - 1);
  int iy = std::min(int(yf / s.voxel.y), s.ny - 1);
  int iz = std::min(int((z - s.origin.z) / s.voxel.z), s.nz - 1);
  if (iz < 0) return 0.0;
  return ext.at(ix, iy, iz);
}

// Optical depth from p toward the sun until the ray leaves the z slab.
double sun_optical_depth(const ExtinctionGrid& ext, const Vec3& p, const Vec3& sun_dir,
                         double step) {
  const GridSpec& s = ext.spec;
  const double z_top = s.top_z();
  if (p.z >= z_top) return 0.0;
  double length = (z_top - p.z) / sun_dir.z;
  int n = std::max(1, int(std::ceil(length / step)));
  double h = length / n;
  double tau = 0.0;
  double prev = sample_beta(ext, p.x, p.y, p.z);
  for (int k = 1; k <= n; ++k) {
    Vec3 q = p + sun_dir * (h * k);
    double cur = sample_beta(ext, q.x, q.y, std::min(q.z, z_top));
    tau += 0.5 * (prev + cur) * h;
    prev = cur;
  }
  return tau;
}

}  // namespace

RenderResult render(const CameraModel& camera, const ExtinctionGrid& ext, const SunModel& sun,
                    const OpticalParams& params) {
  camera.validate();
  sun.validate();
  params.validate();
  for (double b : ext.beta)
    require(std::isfinite(b), ErrorCode::invalid_argument, "render: non-finite extinction");

  const GridSpec& spec = ext.spec;
  const double z_bot = spec.origin.z, z_top = spec.top_z();
  const double step = params.march_step;

  RenderResult result;
  result.image = HdrImage(camera.width, camera.height);
  HdrImage& img = result.image;

  Vec3 cam_center = camera.center();
  if (cam_center.z > z_bot && cam_center.z < z_top &&
      sample_beta(ext, cam_center.x, cam_center.y, cam_center.z) > 0)
    result.camera_in_cloud = true;

  const Mat3 ray_mat = camera.R.transposed() * camera.K.inverse();

#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      Vec3 dir = (ray_mat * Vec3{double(x), double(y), 1.0}).normalized();

      // Clip the ray against the z slab; horizontal extent is periodic.
      double t0 = 0, t1 = -1;
      if (std::abs(dir.z) < 1e-12) {
        if (cam_center.z > z_bot && cam_center.z < z_top) {
          t0 = 0;
          t1 = 4.0 * (spec.extent_x() + spec.extent_y());  // bounded horizontal traverse
        }
      } else {
        double ta = (z_bot - cam_center.z) / dir.z;
        double tb = (z_top - cam_center.z) / dir.z;
        t0 = std::max(0.0, std::min(ta, tb));
        t1 = std::max(ta, tb);
      }

      double scattered = 0.0;
      double transmittance = 1.0;
      if (t1 > t0) {
        int n = std::max(1, int(std::ceil((t1 - t0) / step)));
        double h = (t1 - t0) / n;
        Vec3 p = cam_center + dir * t0;
        double beta_prev = sample_beta(ext, p.x, p.y, std::clamp(p.z, z_bot, z_top));
        for (int k = 1; k <= n; ++k) {
          Vec3 q = cam_center + dir * (t0 + h * k);
          double beta_cur = sample_beta(ext, q.x, q.y, std::clamp(q.z, z_bot, z_top));
          double tau = 0.5 * (beta_prev + beta_cur) * h;
          if (tau > 0) {
            double p_scat = -std::expm1(-tau);
            Vec3 mid = cam_center + dir * (t0 + h * (k - 0.5));
            double tau_sun = sun_optical_depth(ext, mid, sun.direction, step);
            scattered += transmittance * p_scat * kInvFourPi * std::exp(-tau_sun);
            transmittance *= std::exp(-tau);
          }
          beta_prev = beta_cur;
        }
      }

      size_t pix = size_t(y) * camera.width + x;
      for (int c = 0; c < 3; ++c) {
        double value = scattered * sun.sun_radiance * sun.sun_tint[c] +
                       transmittance * sun.sky_radiance * sun.sky_tint[c];
        img.data[size_t(c) * camera.height * camera.width + pix] = float(value);
      }
    }
  }
  return result;
}

namespace {

inline double luminance(double r, double g, double b) {
  return 0.2126 * r + 0.7152 * g + 0.0722 * b;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  double d = mx - mn;
  s = mx > 0 ? d / mx : 0;
  if (d <= 0) {
    h = 0;
    return;
  }
  if (mx == r)
    h = std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h /= 6.0;
  if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = std::fmod(h, 1.0);
  if (h < 0) h += 1.0;
  double h6 = h * 6.0;
  int i = int(h6) % 6;
  double f = h6 - std::floor(h6);
  double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace

AugmentParams sample_augment_params(uint64_t seed) {
  CounterRng rng(seed, CounterRng::hash("augment"));
  AugmentParams p;
  p.saturation = rng.uniform(0.75, 1.25);
  p.hue_shift = rng.uniform(-0.05, 0.05) / 3.14;
  p.alpha = rng.uniform(0.8, 0.95);
  p.beta_target = rng.uniform(0.7, 0.9);
  return p;
}

HdrImage apply_augment(const HdrImage& hdr, const AugmentParams& params) {
  require(params.alpha > 0 && params.alpha < 1 && params.beta_target > 0 && params.beta_target < 1,
          ErrorCode::invalid_argument, "augment percentiles must lie in (0,1)");
  const size_t n = size_t(hdr.width) * hdr.height;
  HdrImage out(hdr.width, hdr.height);
  if (n == 0) return out;

  // Exposure anchored so the alpha-percentile luminance tonemaps to the
  // beta display value; degenerate (all-zero) images keep unit exposure.
  std::vector<float> lum(n);
  for (size_t i = 0; i < n; ++i)
    lum[i] = float(luminance(hdr.data[i], hdr.data[n + i], hdr.data[2 * n + i]));
  std::vector<float> sorted(lum);
  std::sort(sorted.begin(), sorted.end());
  size_t rank = std::min(n - 1, size_t(std::ceil(params.alpha * double(n))) - 1);
  double v_alpha = sorted[rank];
  double exposure = 1.0;
  if (v_alpha > 0) exposure = (params.beta_target / (1.0 - params.beta_target)) / v_alpha;

  for (size_t i = 0; i < n; ++i) {
    double c[3];
    for (int k = 0; k < 3; ++k) {
      double e = exposure * double(hdr.data[k * n + i]);
      c[k] = e / (1.0 + e);  // Reinhard
    }
    double l = luminance(c[0], c[1], c[2]);
    for (int k = 0; k < 3; ++k)
      c[k] = std::clamp(l + params.saturation * (c[k] - l), 0.0, 1.0);
    if (params.hue_shift != 0.0) {
      double h, s, v;
      rgb_to_hsv(c[0], c[1], c[2], h, s, v);
      hsv_to_rgb(h + params.hue_shift, s, v, c[0], c[1], c[2]);
    }
    for (int k = 0; k < 3; ++k) out.data[k * n + i] = float(std::clamp(c[k], 0.0, 1.0));
  }
  return out;
}

HdrImage tonemap_neutral(const HdrImage& hdr) { return apply_augment(hdr, AugmentParams{}); }

}  // namespace cloudtomo::optics
