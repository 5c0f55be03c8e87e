#include "doctest.h"

#include <cmath>

#include "cloudtomo/optics/optics.hpp"
#include "testutil.hpp"

using namespace cloudtomo;
using namespace cloudtomo::optics;

TEST_SUITE_BEGIN("optics");

TEST_CASE("extinction conversion reproduces the three-step evaluation") {
  GridSpec spec;
  spec.nx = spec.ny = spec.nz = 4;
  LwcGrid grid(spec);
  grid.at(1, 1, 1) = 3e-4;
  OpticalParams params;
  ExtinctionGrid ext = lwc_to_extinction(grid, params);

  // Independent evaluation: N_d, sigma_scat, beta computed step by step.
  const double pi = 3.14159265358979323846;
  double n_d = 3.0 * 3e-4 / (4.0 * pi * 1000.0 * std::pow(20e-6, 3));
  double sigma = 2.0 * pi * 20e-6 * 20e-6;
  CHECK(n_d == doctest::Approx(8.952e6).epsilon(1e-3));
  CHECK(sigma == doctest::Approx(2.5133e-9).epsilon(1e-4));
  CHECK(ext.at(1, 1, 1) == doctest::Approx(n_d * sigma).epsilon(1e-12));
  CHECK(ext.at(1, 1, 1) == doctest::Approx(0.02250).epsilon(1e-4));
  CHECK(ext.at(0, 0, 0) == 0.0);
}

TEST_CASE("beta is exactly linear in rho") {
  GridSpec spec;
  spec.nx = spec.ny = spec.nz = 6;
  LwcGrid a(spec), b(spec);
  CounterRng rng(4);
  for (size_t i = 0; i < a.rho.size(); ++i) {
    a.rho[i] = rng.uniform(0, 2e-3);
    b.rho[i] = 2.0 * a.rho[i];
  }
  OpticalParams params;
  ExtinctionGrid ea = lwc_to_extinction(a, params), eb = lwc_to_extinction(b, params);
  for (size_t i = 0; i < ea.beta.size(); ++i)
    CHECK(eb.beta[i] == doctest::Approx(2.0 * ea.beta[i]).epsilon(1e-12));
}

TEST_CASE("segment scatter probability") {
  CHECK(segment_scatter_probability(0.0, 25.0) == 0.0);
  CHECK(segment_scatter_probability(0.0225, 25.0) ==
        doctest::Approx(1.0 - std::exp(-0.5625)).epsilon(1e-12));
  CHECK(segment_scatter_probability(0.0225, 25.0) == doctest::Approx(0.4302).epsilon(1e-4));
  double prev = 0;
  for (double dz : {10.0, 100.0, 1000.0, 10000.0}) {
    double p = segment_scatter_probability(0.05, dz);
    CHECK(p >= prev);
    CHECK(p < 1.0);
    prev = p;
  }
  CHECK(prev == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(segment_scatter_probability(-1.0, 1.0), Error);
}

namespace {

CameraModel ground_camera() {
  // Straight-up camera below the grid.
  return testutil::up_camera(60, 31.5, 31.5, 64, 64, {800, 800, 0});
}

GridSpec slab_spec() {
  GridSpec spec;
  spec.nx = spec.ny = 64;
  spec.nz = 40;  // 1 km tall
  return spec;
}

}  // namespace

TEST_CASE("render: zero extinction gives the pure background sky") {
  ExtinctionGrid ext(slab_spec());
  SunModel sun = SunModel::from_angles(135, 55, 1.0, 50.0);
  OpticalParams params;
  RenderResult r = render(ground_camera(), ext, sun, params);
  CHECK_FALSE(r.camera_in_cloud);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; y += 9)
      for (int x = 0; x < 64; x += 9)
        CHECK(r.image.at(c, y, x) ==
              doctest::Approx(sun.sky_radiance * sun.sky_tint[c]).epsilon(1e-6));
}

TEST_CASE("render: uniform slab matches closed-form transmittance") {
  GridSpec spec = slab_spec();
  LwcGrid grid(spec);
  std::fill(grid.rho.begin(), grid.rho.end(), 3e-4);  // beta = 0.0225
  OpticalParams params;
  ExtinctionGrid ext = lwc_to_extinction(grid, params);
  SunModel sun = SunModel::from_angles(135, 55, 1.0, 0.0);  // sky only isolates transmittance
  CameraModel cam = ground_camera();
  RenderResult r = render(cam, ext, sun, params);

  // Vertical ray through the principal point: T = exp(-beta * 1000 / cos).
  double expected = std::exp(-0.0225 * 1000.0);
  double got = r.image.at(2, 31, 31) / (sun.sky_radiance * sun.sky_tint[2]);
  CHECK(got == doctest::Approx(expected).epsilon(1e-3));

  // Off-axis ray: slant path scales by 1/cos(theta).
  Vec3 c0, dir;
  cam.pixel_ray({10, 31.5}, c0, dir);
  double cos_theta = dir.normalized().z;
  double slant = std::exp(-0.0225 * 1000.0 / cos_theta);
  double got_slant = r.image.at(2, 31, 10) / (sun.sky_radiance * sun.sky_tint[2]);
  CHECK(got_slant == doctest::Approx(slant).epsilon(1e-3));
}

TEST_CASE("render: optically thick slab pushes transmittance under e^-5") {
  GridSpec spec = slab_spec();
  LwcGrid grid(spec);
  std::fill(grid.rho.begin(), grid.rho.end(), 8e-4);  // beta*L = 0.06*1000 = 60 > 5
  OpticalParams params;
  ExtinctionGrid ext = lwc_to_extinction(grid, params);
  SunModel sun = SunModel::from_angles(135, 55, 1.0, 0.0);
  RenderResult r = render(ground_camera(), ext, sun, params);
  CHECK(r.image.at(2, 31, 31) / (sun.sky_radiance * sun.sky_tint[2]) < std::exp(-5.0));
}

TEST_CASE("render: adding extinction only dims the background term") {
  GridSpec spec = slab_spec();
  LwcGrid thin(spec), thick(spec);
  for (int iz = 10; iz < 20; ++iz)
    for (int iy = 0; iy < spec.ny; ++iy)
      for (int ix = 0; ix < spec.nx; ++ix) {
        thin.at(ix, iy, iz) = 1e-4;
        thick.at(ix, iy, iz) = 5e-4;
      }
  OpticalParams params;
  SunModel sun = SunModel::from_angles(135, 55, 1.0, 0.0);
  RenderResult a = render(ground_camera(), lwc_to_extinction(thin, params), sun, params);
  RenderResult b = render(ground_camera(), lwc_to_extinction(thick, params), sun, params);
  for (int y = 0; y < 64; y += 7)
    for (int x = 0; x < 64; x += 7)
      CHECK(b.image.at(0, y, x) <= a.image.at(0, y, x) + 1e-9);
}

TEST_CASE("render: determinism and the per-pixel energy bound") {
  GridSpec spec = slab_spec();
  LwcGrid grid(spec);
  CounterRng rng(9);
  for (auto& v : grid.rho) v = rng.uniform(0, 1e-3);
  OpticalParams params;
  ExtinctionGrid ext = lwc_to_extinction(grid, params);
  SunModel sun = SunModel::from_angles(120, 60, 1.0, 50.0);
  RenderResult a = render(ground_camera(), ext, sun, params);
  RenderResult b = render(ground_camera(), ext, sun, params);
  CHECK(std::equal(a.image.data.begin(), a.image.data.end(), b.image.data.begin()));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; y += 5)
      for (int x = 0; x < 64; x += 5)
        CHECK(a.image.at(c, y, x) <= sun.sky_radiance + sun.sun_radiance);
}

TEST_CASE("render: camera inside a cloud flags a warning") {
  GridSpec spec = slab_spec();
  LwcGrid grid(spec);
  std::fill(grid.rho.begin(), grid.rho.end(), 1e-4);
  OpticalParams params;
  CameraModel cam = testutil::up_camera(60, 31.5, 31.5, 64, 64, {800, 800, 500});
  RenderResult r = render(cam, lwc_to_extinction(grid, params),
                          SunModel::from_angles(135, 55, 1, 50), params);
  CHECK(r.camera_in_cloud);
}

TEST_CASE("augment: determinism and output range") {
  HdrImage img(32, 32);
  CounterRng rng(21);
  for (auto& v : img.data) v = float(rng.uniform(0, 20));
  HdrImage a = augment(img, 77), b = augment(img, 77);
  CHECK(std::equal(a.data.begin(), a.data.end(), b.data.begin()));
  HdrImage c = augment(img, 78);
  bool differs = !std::equal(a.data.begin(), a.data.end(), c.data.begin());
  CHECK(differs);
  for (float v : a.data) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("augment: neutral saturation/hue equals the bare tonemap") {
  HdrImage img(16, 16);
  CounterRng rng(5);
  for (auto& v : img.data) v = float(rng.uniform(0, 10));
  AugmentParams p;  // saturation 1, hue 0
  p.alpha = 0.85;
  p.beta_target = 0.8;
  HdrImage a = apply_augment(img, p);
  AugmentParams q = p;
  q.saturation = 1.0;
  q.hue_shift = 0.0;
  HdrImage b = apply_augment(img, q);
  CHECK(std::equal(a.data.begin(), a.data.end(), b.data.begin()));
}

TEST_CASE("augment: percentile anchor maps to the target display value") {
  // Linear luminance ramp; the alpha-percentile value must land on beta.
  HdrImage img(100, 1);
  for (int x = 0; x < 100; ++x)
    for (int c = 0; c < 3; ++c) img.at(c, 0, x) = float(x + 1);
  AugmentParams p;
  p.alpha = 0.9;
  p.beta_target = 0.8;
  HdrImage out = apply_augment(img, p);
  // 90th percentile (nearest rank) of 1..100 is 90.
  CHECK(out.at(1, 0, 89) == doctest::Approx(0.8).epsilon(1e-5));
}

TEST_CASE("augment: constant-zero image stays zero") {
  HdrImage img(8, 8);
  HdrImage out = augment(img, 3);
  for (float v : out.data) CHECK(v == 0.f);
}

TEST_SUITE_END();
