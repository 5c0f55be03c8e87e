#include "cloudtomo/cloudgen/cloudgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cloudtomo::cloudgen {

namespace {

struct Cell {
  double cx = 0, cy = 0, radius = 0, amp = 0, cbh = 0, thickness = 0, peak = 0;
};

// C1 compact bump, 1 at the center and 0 with zero slope at r = R.
inline double bump(double r, double radius) {
  if (r >= radius) return 0.0;
  double q = 1.0 - (r / radius) * (r / radius);
  return q * q * q;
}

// Shortest signed offset on the periodic horizontal plane.
inline double wrap_delta(double d, double extent) {
  d = std::fmod(d, extent);
  if (d > 0.5 * extent) d -= extent;
  if (d < -0.5 * extent) d += extent;
  return d;
}

// One generation attempt; the caller retries with a fresh stream when the
// coverage misses. Cells are kept horizontally separated and carry one
// (CBH, thickness) each, so constant-z slices of the result stay smooth and
// survive bilinear resampling within tolerance.
LwcGrid attempt(const SceneParams& p, const GridSpec& spec, CounterRng rng,
                double& achieved_coverage) {
  LwcGrid grid(spec);
  const int n_cells = rng.range_int(p.cell_count_range.first, p.cell_count_range.second);
  if (n_cells == 0 || p.coverage_target <= 0.0) {
    achieved_coverage = 0.0;
    return grid;
  }

  const double sz = spec.voxel.z;
  // Keep the sampled base heights one voxel clear of the range ends so the
  // discretized base stays inside the range.
  double margin = std::min(sz, 0.5 * (p.base_height_range.second - p.base_height_range.first));
  const double base_lo = p.base_height_range.first + margin;
  const double base_hi = std::max(base_lo, p.base_height_range.second - margin);

  // One cloud-layer interval per scene (cumulus fields organize into a layer
  // at one altitude band); cells only shape the horizontal structure. Radii
  // are sized so the un-thresholded supports cover ~2.2x the target, leaving
  // room for the occupancy quantile cut below. The field lives on the
  // periodic horizontal plane, like the renderer's tiled volume.
  const double layer_cbh = rng.uniform(base_lo, base_hi);
  const double layer_thickness =
      std::max(rng.uniform(p.thickness_range.first, p.thickness_range.second), 2.05 * sz);

  // Cells overlap heavily and merge into one smooth mass; the quantile cut
  // below then trims the support to the requested coverage. Keeping radii
  // near the half-extent keeps the support perimeter short, which is what
  // bounds the bilinear resampling error of advected frames.
  const double base_radius = 0.44 * std::min(spec.extent_x(), spec.extent_y());

  // Later cells attach near an earlier one, so the mass stays connected and
  // lumpy instead of fragmenting into separate blobs with a long perimeter.
  std::vector<Cell> cells;
  for (int k = 0; k < n_cells; ++k) {
    Cell c;
    c.radius = base_radius * rng.uniform(p.radius_jitter_range.first,
                                         p.radius_jitter_range.second);
    c.amp = rng.uniform(0.6, 1.0);
    c.peak = rng.uniform(p.peak_lwc_range.first, p.peak_lwc_range.second);
    if (cells.empty()) {
      c.cx = rng.uniform(spec.origin.x, spec.origin.x + spec.extent_x());
      c.cy = rng.uniform(spec.origin.y, spec.origin.y + spec.extent_y());
    } else {
      const Cell& anchor = cells[rng.below(cells.size())];
      double angle = rng.uniform(0.0, 2.0 * 3.14159265358979);
      double dist = rng.uniform(0.2, 0.35) * (anchor.radius + c.radius);
      c.cx = anchor.cx + dist * std::cos(angle);
      c.cy = anchor.cy + dist * std::sin(angle);
    }
    cells.push_back(c);
  }

  const int nx = spec.nx, ny = spec.ny, nz = spec.nz;
  const size_t n_cols = spec.num_columns();
  std::vector<double> amp_field(n_cols), peak_field(n_cols);

  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      Vec2 cc = spec.column_center(ix, iy);
      size_t i = size_t(ix) + size_t(nx) * iy;
      double a = 0, wp = 0;
      for (const auto& c : cells) {
        double dx = wrap_delta(cc.x - c.cx, spec.extent_x());
        double dy = wrap_delta(cc.y - c.cy, spec.extent_y());
        double w = c.amp * bump(std::sqrt(dx * dx + dy * dy), c.radius);
        a += w;
        wp += w * c.peak;
      }
      amp_field[i] = a;
      if (a > 0) peak_field[i] = wp / a;
    }
  }

  // Occupancy threshold from the amplitude quantile, so the column coverage
  // lands on target up to discretization.
  std::vector<double> sorted(amp_field);
  std::sort(sorted.begin(), sorted.end());
  size_t cut = size_t(std::floor((1.0 - p.coverage_target) * double(n_cols)));
  cut = std::min(cut, n_cols - 1);
  const double tau = sorted[cut];
  const double amp_max = sorted.back();
  if (!(amp_max > tau)) {  // degenerate flat field
    achieved_coverage = 0.0;
    return grid;
  }

  // Precompute the shared vertical ramp once.
  std::vector<double> ramp(size_t(nz), 0.0);
  bool any_level = false;
  for (int iz = 0; iz < nz; ++iz) {
    double zc = spec.origin.z + (iz + 0.5) * sz;
    if (zc > layer_cbh && zc < layer_cbh + layer_thickness) {
      ramp[size_t(iz)] = (zc - layer_cbh) / layer_thickness;
      any_level = true;
    }
  }
  if (!any_level) {
    achieved_coverage = 0.0;
    return grid;
  }

  size_t occupied = 0;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      size_t i = size_t(ix) + size_t(nx) * iy;
      if (!(amp_field[i] > tau)) continue;
      double x = (amp_field[i] - tau) / (amp_max - tau);  // (0, 1]
      double envelope = x;
      double peak = peak_field[i] * envelope;
      for (int iz = 0; iz < nz; ++iz)
        if (ramp[size_t(iz)] > 0) grid.at(ix, iy, iz) = peak * ramp[size_t(iz)];
      ++occupied;
    }
  }
  achieved_coverage = double(occupied) / double(n_cols);
  return grid;
}

}  // namespace

void SceneParams::validate() const {
  require(coverage_target >= 0.0 && coverage_target <= 1.0, ErrorCode::config,
          "coverage_target must be in [0,1]");
  require(base_height_range.first <= base_height_range.second, ErrorCode::config,
          "base_height_range must be ordered");
  require(thickness_range.first <= thickness_range.second && thickness_range.first > 0,
          ErrorCode::config, "thickness_range must be ordered and positive");
  require(peak_lwc_range.first <= peak_lwc_range.second && peak_lwc_range.first > 0,
          ErrorCode::config, "peak_lwc_range must be ordered and positive");
  require(cell_count_range.first <= cell_count_range.second && cell_count_range.first >= 0,
          ErrorCode::config, "cell_count_range must be ordered and nonnegative");
  require(radius_jitter_range.first <= radius_jitter_range.second &&
              radius_jitter_range.first > 0,
          ErrorCode::config, "radius_jitter_range must be ordered and positive");
}

LwcGrid generate_scene(const SceneParams& params, const GridSpec& spec, GenerationDiag* diag) {
  params.validate();
  spec.validate();
  CounterRng root(params.seed, CounterRng::hash("cloudgen"));

  const int max_attempts = 8;
  double achieved = 0;
  for (int k = 0; k < max_attempts; ++k) {
    LwcGrid grid = attempt(params, spec, root.stream(uint64_t(k)), achieved);
    bool empty_wanted = params.coverage_target <= 0.0 ||
                        (params.cell_count_range.first == 0 && params.cell_count_range.second == 0);
    if (empty_wanted || std::abs(achieved - params.coverage_target) <= 0.1) {
      if (diag) {
        diag->achieved_coverage = achieved;
        diag->attempts = k + 1;
      }
      return grid;
    }
  }
  fail(ErrorCode::generation,
       "generate_scene: coverage target " + std::to_string(params.coverage_target) +
           " unreachable after " + std::to_string(max_attempts) +
           " attempts (last achieved " + std::to_string(achieved) + ")");
}

CloudMaps2p5D derive_maps(const LwcGrid& grid) {
  const GridSpec& spec = grid.spec;
  CloudMaps2p5D maps(spec.nx, spec.ny);
  const double sz = spec.voxel.z;
  for (int iy = 0; iy < spec.ny; ++iy) {
    for (int ix = 0; ix < spec.nx; ++ix) {
      double sum = 0;
      int lo = -1, hi = -1;
      for (int iz = 0; iz < spec.nz; ++iz) {
        double v = grid.at(ix, iy, iz);
        sum += v;
        if (v > 0) {
          if (lo < 0) lo = iz;
          hi = iz;
        }
      }
      size_t i = maps.index(ix, iy);
      maps.lwp[i] = sz * sum;
      if (lo >= 0) {
        maps.cbh[i] = sz * lo;
        maps.dh[i] = sz * (hi + 1) - sz * lo;
        maps.occupancy[i] = 1;
      }
    }
  }
  return maps;
}

LwcGrid advect(const LwcGrid& grid, double u, double v, double dt) {
  const GridSpec& spec = grid.spec;
  LwcGrid out(spec);
  const int nx = spec.nx, ny = spec.ny, nz = spec.nz;
  const double shift_x = u * dt / spec.voxel.x;
  const double shift_y = v * dt / spec.voxel.y;

  auto wrap = [](int i, int n) {
    i %= n;
    return i < 0 ? i + n : i;
  };

  for (int iz = 0; iz < nz; ++iz) {
    const double* src = grid.rho.data() + size_t(iz) * nx * ny;
    double* dst = out.rho.data() + size_t(iz) * nx * ny;
    for (int iy = 0; iy < ny; ++iy) {
      double sy = double(iy) - shift_y;
      int y0 = int(std::floor(sy));
      double fy = sy - y0;
      int ya = wrap(y0, ny), yb = wrap(y0 + 1, ny);
      for (int ix = 0; ix < nx; ++ix) {
        double sx = double(ix) - shift_x;
        int x0 = int(std::floor(sx));
        double fx = sx - x0;
        int xa = wrap(x0, nx), xb = wrap(x0 + 1, nx);
        dst[ix + size_t(nx) * iy] = (1 - fy) * ((1 - fx) * src[xa + size_t(nx) * ya] +
                                                fx * src[xb + size_t(nx) * ya]) +
                                    fy * ((1 - fx) * src[xa + size_t(nx) * yb] +
                                          fx * src[xb + size_t(nx) * yb]);
      }
    }
  }
  return out;
}

void SceneSequence::validate() const {
  require(timestamps.size() == frames.size(), ErrorCode::invalid_argument,
          "sequence timestamps/frames mismatch");
  for (size_t i = 1; i < timestamps.size(); ++i)
    require(timestamps[i] > timestamps[i - 1], ErrorCode::invalid_argument,
            "sequence timestamps must be strictly increasing");
}

SceneSequence make_sequence(const LwcGrid& first, double u, double v, int n_frames,
                            double spacing_s, double t0) {
  require(n_frames >= 1, ErrorCode::invalid_argument, "sequence needs at least one frame");
  require(spacing_s > 0, ErrorCode::invalid_argument, "frame spacing must be positive");
  SceneSequence seq;
  seq.advection_u = u;
  seq.advection_v = v;
  for (int k = 0; k < n_frames; ++k) {
    seq.timestamps.push_back(t0 + k * spacing_s);
    seq.frames.push_back(k == 0 ? first : advect(first, u, v, k * spacing_s));
  }
  return seq;
}

}  // namespace cloudtomo::cloudgen
