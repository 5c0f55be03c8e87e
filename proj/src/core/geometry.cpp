#include "cloudtomo/core/geometry.hpp"

#include <cmath>
#include <string>

namespace cloudtomo {

Mat3 Mat3::inverse() const {
  double d = det();
  require(std::abs(d) > 1e-300, ErrorCode::geometry, "singular 3x3 matrix");
  Mat3 r;
  r(0, 0) = (m[4] * m[8] - m[5] * m[7]) / d;
  r(0, 1) = (m[2] * m[7] - m[1] * m[8]) / d;
  r(0, 2) = (m[1] * m[5] - m[2] * m[4]) / d;
  r(1, 0) = (m[5] * m[6] - m[3] * m[8]) / d;
  r(1, 1) = (m[0] * m[8] - m[2] * m[6]) / d;
  r(1, 2) = (m[2] * m[3] - m[0] * m[5]) / d;
  r(2, 0) = (m[3] * m[7] - m[4] * m[6]) / d;
  r(2, 1) = (m[1] * m[6] - m[0] * m[7]) / d;
  r(2, 2) = (m[0] * m[4] - m[1] * m[3]) / d;
  return r;
}

void GridSpec::validate() const {
  require(nx >= 1 && ny >= 1 && nz >= 1, ErrorCode::config, "grid dims must be >= 1");
  require(voxel.x > 0 && voxel.y > 0 && voxel.z > 0, ErrorCode::config,
          "voxel sizes must be > 0");
}

VoxelIndex GridSpec::world_to_voxel(const Vec3& p) const {
  VoxelIndex i{int(std::floor((p.x - origin.x) / voxel.x)),
               int(std::floor((p.y - origin.y) / voxel.y)),
               int(std::floor((p.z - origin.z) / voxel.z))};
  require(contains(i), ErrorCode::geometry,
          "world_to_voxel: point outside grid");
  return i;
}

Vec3 GridSpec::voxel_center(const VoxelIndex& i) const {
  require(contains(i), ErrorCode::geometry, "voxel_center: index out of bounds");
  return {origin.x + (i.x + 0.5) * voxel.x, origin.y + (i.y + 0.5) * voxel.y,
          origin.z + (i.z + 0.5) * voxel.z};
}

void CameraModel::validate() const {
  require(width > 0 && height > 0, ErrorCode::config, "camera image size must be positive");
  require(K(0, 0) > 0 && K(1, 1) > 0, ErrorCode::config, "focal entries must be positive");
  require(K(1, 0) == 0 && K(2, 0) == 0 && K(2, 1) == 0, ErrorCode::config,
          "K must be upper-triangular");
  Mat3 should_be_identity = R * R.transposed();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double want = (i == j) ? 1.0 : 0.0;
      require(std::abs(should_be_identity(i, j) - want) < 1e-9, ErrorCode::config,
              "R is not orthonormal");
    }
  require(std::abs(R.det() - 1.0) < 1e-9, ErrorCode::config, "det(R) must be +1");
}

Vec2 CameraModel::project(const Vec3& p) const {
  Vec2 uv;
  double depth;
  require(try_project(p, uv, depth), ErrorCode::geometry,
          "project: point on or behind the camera's principal plane");
  return uv;
}

bool CameraModel::try_project(const Vec3& p, Vec2& uv, double& depth) const {
  Vec3 xc = R * p + t;
  depth = xc.z;
  if (depth <= 1e-9) return false;
  Vec3 h = K * xc;
  uv = {h.x / h.z, h.y / h.z};
  return true;
}

void CameraModel::pixel_ray(const Vec2& uv, Vec3& origin, Vec3& dir) const {
  origin = center();
  dir = R.transposed() * (K.inverse() * Vec3{uv.x, uv.y, 1.0});
}

Vec2 CameraModel::pixel_to_plane(const Vec2& uv, double h) const {
  Vec3 c, d;
  pixel_ray(uv, c, d);
  require(std::abs(d.z) >= 1e-12 * d.norm(), ErrorCode::geometry,
          "pixel_to_plane: ray parallel to plane z=" + std::to_string(h));
  double s = (h - c.z) / d.z;
  require(s > 0, ErrorCode::geometry, "pixel_to_plane: intersection behind camera");
  return {c.x + s * d.x, c.y + s * d.y};
}

Mat3 CameraModel::plane_homography(double h) const {
  // Columns: image of (1,0,0), (0,1,0), and of the plane anchor (0,0,h).
  Mat3 M;
  for (int r = 0; r < 3; ++r) {
    M(r, 0) = R(r, 0);
    M(r, 1) = R(r, 1);
  }
  Vec3 anchor = R * Vec3{0, 0, h} + t;
  M(0, 2) = anchor.x;
  M(1, 2) = anchor.y;
  M(2, 2) = anchor.z;
  return K * M;
}

void Rig::validate() const {
  require(!cameras.empty(), ErrorCode::config, "rig needs at least one camera");
  for (const auto& cam : cameras) cam.validate();
}

void Rig::validate_against(const GridSpec& spec) const {
  validate();
  for (size_t i = 0; i < cameras.size(); ++i) {
    Vec3 c = cameras[i].center();
    // On-boundary placement is allowed; only the open interior is rejected.
    bool strictly_inside = c.x > spec.origin.x && c.x < spec.origin.x + spec.extent_x() &&
                           c.y > spec.origin.y && c.y < spec.origin.y + spec.extent_y();
    require(!strictly_inside, ErrorCode::config,
            "camera " + std::to_string(i) + " sits inside the reconstruction footprint");
  }
}

HeightSweep HeightSweep::defaults() { return regular(400.0, 200.0, 18); }

HeightSweep HeightSweep::regular(double start, double step, int count) {
  HeightSweep s;
  s.heights.reserve(count);
  for (int i = 0; i < count; ++i) s.heights.push_back(start + step * i);
  return s;
}

void HeightSweep::validate() const {
  require(!heights.empty(), ErrorCode::config, "height sweep is empty");
  for (size_t i = 1; i < heights.size(); ++i)
    require(heights[i] > heights[i - 1], ErrorCode::config,
            "height sweep must be strictly increasing");
}

}  // namespace cloudtomo
