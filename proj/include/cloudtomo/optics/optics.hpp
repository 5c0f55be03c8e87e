#pragma once

#include <cstdint>
#include <vector>

#include "cloudtomo/core/grid.hpp"
#include "cloudtomo/core/rng.hpp"

namespace cloudtomo::optics {

struct OpticalParams {
  double droplet_radius = 20e-6;  // m
  double water_density = 1000.0;  // kg/m^3
  double q_scat = 2.0;            // Mie efficiency
  double march_step = 12.5;       // m, <= s_z/2 for the default grid

  void validate() const;
};

struct SunModel {
  Vec3 direction{0, 0, 1};  // unit vector toward the sun, z > 0
  double sky_radiance = 1.0;
  double sun_radiance = 50.0;
  // Channel tints; unit or smaller so the per-channel energy bound holds.
  double sky_tint[3] = {0.55, 0.75, 1.0};
  double sun_tint[3] = {1.0, 1.0, 0.95};

  void validate() const;
  static SunModel from_angles(double azimuth_deg, double elevation_deg, double sky_radiance,
                              double sun_radiance);
};

// Linear-radiance image, planar RGB, row 0 at the top.
struct HdrImage {
  int width = 0, height = 0;
  std::vector<float> data;  // [3][height][width]

  HdrImage() = default;
  HdrImage(int w, int h) : width(w), height(h), data(size_t(3) * w * h, 0.f) {}
  float& at(int c, int y, int x) { return data[(size_t(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(size_t(c) * height + y) * width + x]; }
};

// Scattering coefficient field (1/m) on the same lattice as its source grid.
struct ExtinctionGrid {
  GridSpec spec;
  std::vector<double> beta;

  ExtinctionGrid() = default;
  explicit ExtinctionGrid(const GridSpec& s) : spec(s), beta(s.num_voxels(), 0.0) {}
  double at(int ix, int iy, int iz) const {
    return beta[size_t(ix) + size_t(spec.nx) * (size_t(iy) + size_t(spec.ny) * size_t(iz))];
  }
};

// beta = N_d * sigma_scat with N_d = 3 rho / (4 pi rho_w r^3) and
// sigma_scat = Q_scat pi r^2; grid values are treated as mass per volume.
ExtinctionGrid lwc_to_extinction(const LwcGrid& grid, const OpticalParams& params);

// P = 1 - exp(-beta * dz).
double segment_scatter_probability(double beta, double dz);

struct RenderResult {
  HdrImage image;
  bool camera_in_cloud = false;
};

// Deterministic single-scattering march with the volume tiled periodically
// in x/y. Fixed step, trapezoidal optical depth, isotropic phase.
RenderResult render(const CameraModel& camera, const ExtinctionGrid& ext, const SunModel& sun,
                    const OpticalParams& params);

struct AugmentParams {
  double saturation = 1.0;
  double hue_shift = 0.0;        // fraction of a full turn
  double alpha = 0.875;          // source luminance percentile
  double beta_target = 0.8;      // display value it maps to
};

// Sampled per the training augmentation ranges: saturation U(0.75, 1.25),
// hue U(-0.05, 0.05)/3.14, alpha U(0.8, 0.95), beta U(0.7, 0.9).
AugmentParams sample_augment_params(uint64_t seed);

// Percentile-anchored tonemap, then saturation, then hue. Output in [0,1].
HdrImage apply_augment(const HdrImage& hdr, const AugmentParams& params);

inline HdrImage augment(const HdrImage& hdr, uint64_t seed) {
  return apply_augment(hdr, sample_augment_params(seed));
}

// Neutral preprocessing used at inference time (no saturation/hue jitter,
// percentile anchors at their distribution means).
HdrImage tonemap_neutral(const HdrImage& hdr);

}  // namespace cloudtomo::optics
