#pragma once

#include <vector>

#include "cloudtomo/core/geometry.hpp"

namespace cloudtomo {

// 3D scalar field of liquid water content (kg/m^3), x-fastest storage.
struct LwcGrid {
  GridSpec spec;
  std::vector<double> rho;

  LwcGrid() = default;
  explicit LwcGrid(const GridSpec& s) : spec(s), rho(s.num_voxels(), 0.0) {}

  size_t index(int ix, int iy, int iz) const {
    return size_t(ix) + size_t(spec.nx) * (size_t(iy) + size_t(spec.ny) * size_t(iz));
  }
  double& at(int ix, int iy, int iz) { return rho[index(ix, iy, iz)]; }
  double at(int ix, int iy, int iz) const { return rho[index(ix, iy, iz)]; }

  double total_water() const {
    double s = 0;
    for (double v : rho) s += v;
    return s;
  }

  // rho must be finite and nonnegative everywhere.
  void validate() const;
};

// Per-column 2.5D cloud properties. Unoccupied columns carry the sentinel
// CBH = 0, dh = 0; validity lives in the occupancy mask.
struct CloudMaps2p5D {
  int nx = 0, ny = 0;
  std::vector<double> lwp;   // kg/m^2
  std::vector<double> cbh;   // m
  std::vector<double> dh;    // m
  std::vector<uint8_t> occupancy;

  CloudMaps2p5D() = default;
  CloudMaps2p5D(int nx_, int ny_)
      : nx(nx_),
        ny(ny_),
        lwp(size_t(nx_) * ny_, 0.0),
        cbh(size_t(nx_) * ny_, 0.0),
        dh(size_t(nx_) * ny_, 0.0),
        occupancy(size_t(nx_) * ny_, 0) {}

  size_t index(int ix, int iy) const { return size_t(ix) + size_t(nx) * size_t(iy); }
  size_t num_columns() const { return size_t(nx) * size_t(ny); }
  bool occupied(int ix, int iy) const { return occupancy[index(ix, iy)] != 0; }
};

}  // namespace cloudtomo
