#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cloudtomo/core/grid.hpp"
#include "cloudtomo/core/rng.hpp"

namespace cloudtomo::cloudgen {

// Knobs for the procedural cumulus field. Horizontal structure is a sum of
// Gaussian bumps; every occupied column carries a single vertical interval
// [CBH, CBH + dh] with density rising linearly from base to top.
struct SceneParams {
  uint64_t seed = 0;
  double coverage_target = 0.3;                      // fraction of occupied columns
  std::pair<double, double> base_height_range{700.0, 1400.0};   // m
  std::pair<double, double> thickness_range{150.0, 400.0};      // m
  std::pair<double, double> peak_lwc_range{1e-4, 1.5e-3};       // kg/m^3
  std::pair<int, int> cell_count_range{1, 2};
  // Per-cell jitter on the coverage-derived bump radius. Cells never overlap
  // and carry one (CBH, thickness) each, which keeps constant-height slices
  // smooth enough for bilinear advection to round-trip within tolerance.
  std::pair<double, double> radius_jitter_range{0.75, 1.05};

  void validate() const;
};

struct GenerationDiag {
  double achieved_coverage = 0;
  int attempts = 0;
};

// Deterministic in params.seed. Throws ErrorCode::generation when the
// coverage target stays off by more than 0.1 after bounded retries.
LwcGrid generate_scene(const SceneParams& params, const GridSpec& spec,
                       GenerationDiag* diag = nullptr);

// LWP/CBH/dh/occupancy per column. CTH takes the top face of the highest
// occupied voxel, so dh equals (occupied count)*s_z for contiguous runs.
CloudMaps2p5D derive_maps(const LwcGrid& grid);

// Horizontal translation by (u*dt, v*dt) with periodic wrap and bilinear
// resampling, applied level by level.
LwcGrid advect(const LwcGrid& grid, double u, double v, double dt);

struct SceneSequence {
  std::vector<double> timestamps;  // s, strictly increasing
  std::vector<LwcGrid> frames;
  double advection_u = 0, advection_v = 0;  // m/s used between frames

  int size() const { return int(frames.size()); }
  void validate() const;
};

// Frames are each produced by a single resample of frame 0 (translation by
// k * spacing * (u, v)), not by chained advection.
SceneSequence make_sequence(const LwcGrid& first, double u, double v, int n_frames,
                            double spacing_s, double t0 = 0.0);

}  // namespace cloudtomo::cloudgen
