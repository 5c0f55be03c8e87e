#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "cloudtomo/core/error.hpp"

namespace cloudtomo {

struct Vec2 {
  double x = 0, y = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return {x / n, y / n, z / n};
  }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
};

// Row-major 3x3.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }
  double& operator()(int r, int c) { return m[3 * r + c]; }
  double operator()(int r, int c) const { return m[3 * r + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  Mat3 inverse() const;
};

struct VoxelIndex {
  int x = 0, y = 0, z = 0;
  bool operator==(const VoxelIndex&) const = default;
};

// Regular voxel lattice anchored in world coordinates. origin is the corner
// of voxel (0,0,0); z is altitude, x east, y north.
struct GridSpec {
  Vec3 origin{0, 0, 0};
  int nx = 200, ny = 200, nz = 160;
  Vec3 voxel{25, 25, 25};

  static GridSpec defaults() { return GridSpec{}; }  // 5 km x 5 km x 4 km @ 25 m

  void validate() const;
  size_t num_voxels() const { return size_t(nx) * size_t(ny) * size_t(nz); }
  size_t num_columns() const { return size_t(nx) * size_t(ny); }

  double extent_x() const { return nx * voxel.x; }
  double extent_y() const { return ny * voxel.y; }
  double top_z() const { return origin.z + nz * voxel.z; }

  bool contains(const VoxelIndex& i) const {
    return i.x >= 0 && i.x < nx && i.y >= 0 && i.y < ny && i.z >= 0 && i.z < nz;
  }
  bool footprint_contains(double wx, double wy) const {
    return wx >= origin.x && wx <= origin.x + extent_x() && wy >= origin.y &&
           wy <= origin.y + extent_y();
  }

  // Floor binning; throws out-of-bounds for points outside the lattice.
  VoxelIndex world_to_voxel(const Vec3& p) const;
  Vec3 voxel_center(const VoxelIndex& i) const;
  Vec2 column_center(int ix, int iy) const {
    return {origin.x + (ix + 0.5) * voxel.x, origin.y + (iy + 0.5) * voxel.y};
  }
};

// Pinhole camera, world-to-camera convention: x_cam = R*X + t.
struct CameraModel {
  Mat3 K;
  Mat3 R;
  Vec3 t;
  int width = 0, height = 0;

  void validate() const;
  Vec3 center() const { return R.transposed() * (t * -1.0); }

  // Perspective projection; throws when the point sits on the principal
  // plane (depth <= 1e-9 m).
  Vec2 project(const Vec3& p) const;
  bool try_project(const Vec3& p, Vec2& uv, double& depth) const;

  // Viewing ray of a (continuous) pixel, in world coordinates.
  void pixel_ray(const Vec2& uv, Vec3& origin, Vec3& dir) const;

  // Intersection of the pixel's viewing ray with the world plane z = h.
  Vec2 pixel_to_plane(const Vec2& uv, double h) const;

  // 3x3 map (x, y, 1) -> homogeneous pixel for points on the plane z = h.
  // Equivalent to project() restricted to the plane; row 3 gives depth.
  Mat3 plane_homography(double h) const;
};

struct Rig {
  std::vector<CameraModel> cameras;

  int size() const { return int(cameras.size()); }
  void validate() const;
  // Camera centers must not sit strictly inside the footprint.
  void validate_against(const GridSpec& spec) const;
};

// Ladder of plane altitudes for the feature sweep.
struct HeightSweep {
  std::vector<double> heights;

  // 400, 600, ..., 3800 m (18 planes).
  static HeightSweep defaults();
  static HeightSweep regular(double start, double step, int count);
  int size() const { return int(heights.size()); }
  void validate() const;
};

}  // namespace cloudtomo
