#include "doctest.h"

#include <chrono>

#include "cloudtomo/core/geometry.hpp"
#include "cloudtomo/core/rng.hpp"
#include "testutil.hpp"

using namespace cloudtomo;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("project: principal axis and hand-computed offset") {
  CameraModel cam = testutil::up_camera(1000, 500, 500, 1000, 1000);
  Vec2 uv = cam.project({0, 0, 1000});
  CHECK(uv.x == doctest::Approx(500).epsilon(1e-12));
  CHECK(uv.y == doctest::Approx(500).epsilon(1e-12));

  uv = cam.project({100, 0, 1000});
  CHECK(uv.x == doctest::Approx(600).epsilon(1e-12));  // 500 + 1000*(100/1000)
  CHECK(uv.y == doctest::Approx(500).epsilon(1e-12));
}

TEST_CASE("project: camera center degenerates") {
  CameraModel cam = testutil::up_camera(1000, 500, 500, 1000, 1000, {10, 20, 30});
  CHECK_THROWS_AS(cam.project(cam.center()), Error);
}

TEST_CASE("pixel_to_plane: worked intersections") {
  CameraModel cam = testutil::up_camera(1000, 500, 500, 1000, 1000);
  Vec2 xy = cam.pixel_to_plane({500, 500}, 1000);
  CHECK(xy.x == doctest::Approx(0).epsilon(1e-12));
  CHECK(xy.y == doctest::Approx(0).epsilon(1e-12));

  xy = cam.pixel_to_plane({600, 500}, 1000);
  CHECK(xy.x == doctest::Approx(100).epsilon(1e-12));

  xy = cam.pixel_to_plane({600, 500}, 2000);  // linear scaling with height
  CHECK(xy.x == doctest::Approx(200).epsilon(1e-12));
}

TEST_CASE("pixel_to_plane: parallel ray and behind-camera errors") {
  CameraModel cam = testutil::up_camera(1000, 500, 500, 1000, 1000, {0, 0, 2000});
  // Looking up from 2000 m; the plane below is behind the camera.
  CHECK_THROWS_AS(cam.pixel_to_plane({500, 500}, 1000), Error);

  // Horizontal viewing direction: rotate camera z onto world x.
  CameraModel side = cam;
  side.R = Mat3{};
  side.R(0, 0) = 0; side.R(0, 1) = 0; side.R(0, 2) = -1;
  side.R(1, 0) = 0; side.R(1, 1) = 1; side.R(1, 2) = 0;
  side.R(2, 0) = 1; side.R(2, 1) = 0; side.R(2, 2) = 0;
  side.t = side.R * (Vec3{0, 0, 0} - Vec3{0, 0, 1000});
  side.validate();
  CHECK_THROWS_AS(side.pixel_to_plane({500, 500}, 1000), Error);
}

TEST_CASE("world_to_voxel and voxel_center") {
  GridSpec spec;  // defaults: 200x200x160 @ 25 m
  spec.validate();
  VoxelIndex i = spec.world_to_voxel({12.4, 0.0, 37.5});
  CHECK(i == VoxelIndex{0, 0, 1});

  Vec3 c = spec.voxel_center({0, 0, 0});
  CHECK(c.x == doctest::Approx(12.5));
  CHECK(c.y == doctest::Approx(12.5));
  CHECK(c.z == doctest::Approx(12.5));

  VoxelIndex boundary{199, 199, 159};
  CHECK(spec.world_to_voxel(spec.voxel_center(boundary)) == boundary);
  CHECK_THROWS_AS(spec.voxel_center({200, 0, 0}), Error);
  CHECK_THROWS_AS(spec.world_to_voxel({-1, 0, 0}), Error);
}

TEST_CASE("height sweep default is 400+200k, k=0..17") {
  HeightSweep sweep = HeightSweep::defaults();
  REQUIRE(sweep.size() == 18);
  for (int k = 0; k < 18; ++k) CHECK(sweep.heights[size_t(k)] == 400.0 + 200.0 * k);
}

namespace {

Rig ring_rig() {
  // Six cameras on a ring looking inward and up, in raw form.
  Rig rig;
  for (int k = 0; k < 6; ++k) {
    double a = 2 * 3.14159265358979 * k / 6;
    Vec3 pos{2500 + 3000 * std::cos(a), 2500 + 3000 * std::sin(a), 2.0};
    Vec3 fwd = (Vec3{2500, 2500, 1200} - pos).normalized();
    Vec3 right = fwd.cross({0, 0, 1}).normalized();
    Vec3 down = fwd.cross(right);
    CameraModel cam;
    cam.R(0, 0) = right.x; cam.R(0, 1) = right.y; cam.R(0, 2) = right.z;
    cam.R(1, 0) = down.x;  cam.R(1, 1) = down.y;  cam.R(1, 2) = down.z;
    cam.R(2, 0) = fwd.x;   cam.R(2, 1) = fwd.y;   cam.R(2, 2) = fwd.z;
    cam.t = cam.R * (Vec3{0, 0, 0} - pos);
    cam.K = Mat3::identity();
    cam.K(0, 0) = cam.K(1, 1) = 160;
    cam.K(0, 2) = 95.5;
    cam.K(1, 2) = 71.5;
    cam.width = 192;
    cam.height = 144;
    rig.cameras.push_back(cam);
  }
  return rig;
}

}  // namespace

TEST_CASE("round-trip: project then pixel_to_plane recovers plane points") {
  Rig rig = ring_rig();
  rig.validate();
  HeightSweep sweep = HeightSweep::defaults();
  CounterRng rng(17);

  auto start = std::chrono::steady_clock::now();
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const CameraModel& cam = rig.cameras[rng.below(6)];
    double h = sweep.heights[rng.below(18)];
    double x = rng.uniform(0, 5000), y = rng.uniform(0, 5000);
    Vec2 uv;
    double depth;
    if (!cam.try_project({x, y, h}, uv, depth)) continue;
    Vec2 back = cam.pixel_to_plane(uv, h);
    double scale = std::max({1.0, std::abs(x), std::abs(y)});
    CHECK(std::abs(back.x - x) / scale < 1e-6);
    CHECK(std::abs(back.y - y) / scale < 1e-6);
    ++checked;
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(checked > 900);
  CHECK(secs < 1.0);
}

TEST_CASE("pixel_to_plane is projective-linear: collinear pixels stay collinear") {
  Rig rig = ring_rig();
  const CameraModel& cam = rig.cameras[0];
  CounterRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    double h = rng.uniform(500, 3500);
    Vec2 a{rng.uniform(0, 191), rng.uniform(0, 143)};
    Vec2 b{rng.uniform(0, 191), rng.uniform(0, 143)};
    Vec2 m{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
    Vec2 pa, pb, pm;
    try {
      pa = cam.pixel_to_plane(a, h);
      pb = cam.pixel_to_plane(b, h);
      pm = cam.pixel_to_plane(m, h);
    } catch (const Error&) {
      continue;
    }
    // Normalized cross product of (pb-pa) x (pm-pa).
    double ux = pb.x - pa.x, uy = pb.y - pa.y;
    double vx = pm.x - pa.x, vy = pm.y - pa.y;
    double cross = ux * vy - uy * vx;
    double norm = std::sqrt((ux * ux + uy * uy) * (vx * vx + vy * vy));
    if (norm > 1e-12) CHECK(std::abs(cross) / norm < 1e-8);
  }
}

TEST_CASE("plane_homography agrees with project for plane points") {
  Rig rig = ring_rig();
  CounterRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const CameraModel& cam = rig.cameras[rng.below(6)];
    double h = rng.uniform(400, 3800);
    Mat3 H = cam.plane_homography(h);
    double x = rng.uniform(0, 5000), y = rng.uniform(0, 5000);
    Vec2 uv;
    double depth;
    if (!cam.try_project({x, y, h}, uv, depth)) continue;
    Vec3 p = H * Vec3{x, y, 1.0};
    CHECK(p.z == doctest::Approx(depth).epsilon(1e-9));
    CHECK(p.x / p.z == doctest::Approx(uv.x).epsilon(1e-9));
    CHECK(p.y / p.z == doctest::Approx(uv.y).epsilon(1e-9));
  }
}

TEST_CASE("camera validation rejects non-orthonormal R") {
  CameraModel cam = testutil::up_camera(1000, 500, 500, 1000, 1000);
  cam.R(0, 1) = 0.01;
  CHECK_THROWS_AS(cam.validate(), Error);
}

TEST_SUITE_END();
