#include "cloudtomo/wind/wind.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace cloudtomo::wind {

SliceSequence slice_sum(const std::vector<const LwcGrid*>& grids,
                        const std::vector<double>& timestamps, int level, int halfwidth) {
  require(!grids.empty() && grids.size() == timestamps.size(), ErrorCode::invalid_argument,
          "slice_sum needs matching grids and timestamps");
  const GridSpec& spec = grids[0]->spec;
  require(level - halfwidth >= 0 && level + halfwidth < spec.nz, ErrorCode::invalid_argument,
          "slice level too close to the grid boundary");

  SliceSequence out;
  out.nx = spec.nx;
  out.ny = spec.ny;
  out.level = level;
  out.timestamps = timestamps;
  if (timestamps.size() >= 2) out.spacing_s = timestamps[1] - timestamps[0];

  double lo = 1e300, hi = -1e300;
  for (const LwcGrid* g : grids) {
    require(g->spec.nx == spec.nx && g->spec.ny == spec.ny && g->spec.nz == spec.nz,
            ErrorCode::invalid_argument, "slice_sum frames must share dims");
    std::vector<float> frame(size_t(spec.nx) * spec.ny, 0.f);
    for (int iz = level - halfwidth; iz <= level + halfwidth; ++iz) {
      const double* src = g->rho.data() + size_t(iz) * spec.nx * spec.ny;
      for (size_t i = 0; i < frame.size(); ++i) frame[i] += float(src[i]);
    }
    for (float v : frame) {
      lo = std::min(lo, double(v));
      hi = std::max(hi, double(v));
    }
    out.frames.push_back(std::move(frame));
  }

  if (hi > lo) {
    float scale = float(1.0 / (hi - lo)), bias = float(lo);
    for (auto& frame : out.frames)
      for (auto& v : frame) v = (v - bias) * scale;
  } else {
    out.empty = true;  // constant input, scaling skipped
  }
  return out;
}

SeedResult seed_points(const SliceSequence& slices, int n, uint64_t seed) {
  SeedResult result;
  require(!slices.frames.empty(), ErrorCode::invalid_argument, "seed_points: empty sequence");
  const auto& frame = slices.frames[0];

  std::vector<int> candidates;
  std::vector<float> intensities;
  for (int y = 0; y < slices.ny; ++y)
    for (int x = 0; x < slices.nx; ++x) {
      float v = frame[size_t(x) + size_t(slices.nx) * y];
      if (v > 0) {
        candidates.push_back(x + slices.nx * y);
        intensities.push_back(v);
      }
    }
  if (candidates.empty()) {
    result.short_of_candidates = true;
    return result;
  }

  // 50th percentile (nearest rank) of the positive-support intensities.
  std::vector<float> sorted(intensities);
  std::sort(sorted.begin(), sorted.end());
  float median = sorted[std::min(sorted.size() - 1, size_t(0.5 * double(sorted.size())))];

  std::vector<int> top;
  for (size_t i = 0; i < candidates.size(); ++i)
    if (intensities[i] >= median) top.push_back(candidates[i]);

  CounterRng rng(seed, CounterRng::hash("seed-points"));
  if (int(top.size()) <= n) {
    result.short_of_candidates = int(top.size()) < n;
  } else {
    for (int i = 0; i < n; ++i) {  // partial Fisher-Yates
      size_t j = size_t(i) + rng.below(top.size() - size_t(i));
      std::swap(top[size_t(i)], top[j]);
    }
    top.resize(size_t(n));
  }
  for (int p : top)
    result.points.push_back(Vec2{double(p % slices.nx), double(p / slices.nx)});
  return result;
}

namespace {

// ZNCC of patch around (cx,cy) in a vs (cx+dx, cy+dy) in b; both centers must
// have the full patch in bounds (caller guarantees).
double zncc(const std::vector<float>& a, const std::vector<float>& b, int nx, int axc, int ayc,
            int bxc, int byc, int half) {
  const int n = (2 * half + 1) * (2 * half + 1);
  double sa = 0, sb = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      sa += a[size_t(axc + dx) + size_t(nx) * (ayc + dy)];
      sb += b[size_t(bxc + dx) + size_t(nx) * (byc + dy)];
    }
  double ma = sa / n, mb = sb / n;
  double num = 0, va = 0, vb = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      double da = a[size_t(axc + dx) + size_t(nx) * (ayc + dy)] - ma;
      double db = b[size_t(bxc + dx) + size_t(nx) * (byc + dy)] - mb;
      num += da * db;
      va += da * da;
      vb += db * db;
    }
  if (va < 1e-12 || vb < 1e-12) return 0.0;
  return num / std::sqrt(va * vb);
}

double parabolic_offset(double sm, double s0, double sp) {
  double denom = sm - 2 * s0 + sp;
  if (std::abs(denom) < 1e-12) return 0.0;
  double d = 0.5 * (sm - sp) / denom;
  return std::clamp(d, -0.5, 0.5);
}

}  // namespace

std::vector<Track> track_points(const SliceSequence& slices, const std::vector<Vec2>& seeds,
                                const TrackParams& params) {
  require(slices.size() >= 2, ErrorCode::invalid_argument, "tracking needs at least 2 frames");
  require(params.patch % 2 == 1 && params.patch >= 3, ErrorCode::invalid_argument,
          "patch size must be odd and >= 3");
  const int half = params.patch / 2;
  const int T = slices.size();

  std::vector<Track> tracks(seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (size_t s = 0; s < seeds.size(); ++s) {
    Track& track = tracks[s];
    track.start = seeds[s];
    track.positions.assign(size_t(T), seeds[s]);
    track.scores.assign(size_t(T), 1.0);
    Vec2 pos = seeds[s];

    auto in_bounds = [&](int cx, int cy) {
      return cx - half >= 0 && cx + half < slices.nx && cy - half >= 0 && cy + half < slices.ny;
    };

    for (int t = 0; t + 1 < T; ++t) {
      int cx = int(std::lround(pos.x)), cy = int(std::lround(pos.y));
      if (!in_bounds(cx, cy)) {
        track.occluded = true;
        track.occluded_from = t;
        for (int r = t; r < T; ++r) track.positions[size_t(r)] = pos;
        break;
      }
      const auto& cur = slices.frames[size_t(t)];
      const auto& nxt = slices.frames[size_t(t) + 1];

      double best = -2.0;
      int bx = 0, by = 0;
      for (int dy = -params.search; dy <= params.search; ++dy) {
        for (int dx = -params.search; dx <= params.search; ++dx) {
          if (!in_bounds(cx + dx, cy + dy)) continue;
          double score = zncc(cur, nxt, slices.nx, cx, cy, cx + dx, cy + dy, half);
          if (score > best) {
            best = score;
            bx = dx;
            by = dy;
          }
        }
      }

      if (best < params.min_ncc) {
        track.occluded = true;
        track.occluded_from = t + 1;
        for (int r = t + 1; r < T; ++r) track.positions[size_t(r)] = pos;
        break;
      }

      // Sub-pixel refinement on the score surface.
      double sub_x = 0, sub_y = 0;
      if (bx > -params.search && bx < params.search && in_bounds(cx + bx - 1, cy + by) &&
          in_bounds(cx + bx + 1, cy + by)) {
        double sm = zncc(cur, nxt, slices.nx, cx, cy, cx + bx - 1, cy + by, half);
        double sp = zncc(cur, nxt, slices.nx, cx, cy, cx + bx + 1, cy + by, half);
        sub_x = parabolic_offset(sm, best, sp);
      }
      if (by > -params.search && by < params.search && in_bounds(cx + bx, cy + by - 1) &&
          in_bounds(cx + bx, cy + by + 1)) {
        double sm = zncc(cur, nxt, slices.nx, cx, cy, cx + bx, cy + by - 1, half);
        double sp = zncc(cur, nxt, slices.nx, cx, cy, cx + bx, cy + by + 1, half);
        sub_y = parabolic_offset(sm, best, sp);
      }

      pos = Vec2{pos.x + bx + sub_x, pos.y + by + sub_y};
      track.positions[size_t(t) + 1] = pos;
      track.scores[size_t(t) + 1] = best;
    }
    track.end = track.positions.back();
  }
  return tracks;
}

std::vector<Track> filter_tracks(const std::vector<Track>& tracks) {
  std::vector<const Track*> alive;
  for (const auto& t : tracks)
    if (!t.occluded) alive.push_back(&t);
  if (alive.empty()) return {};

  // Drop the bottom 5% displacement magnitudes; ties keep earlier seeds.
  size_t n_drop = size_t(std::floor(0.05 * double(alive.size())));
  std::vector<size_t> order(alive.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    double da = alive[a]->displacement(), db = alive[b]->displacement();
    if (da != db) return da < db;
    return a > b;  // later-seeded tracks drop first on ties
  });
  std::vector<bool> dropped(alive.size(), false);
  for (size_t k = 0; k < n_drop; ++k) dropped[order[k]] = true;

  std::vector<Track> kept;
  for (size_t i = 0; i < alive.size(); ++i)
    if (!dropped[i]) kept.push_back(*alive[i]);
  return kept;
}

std::vector<WindSample> tracks_to_wind(const std::vector<Track>& tracks, double pixel_size_m,
                                       double dt_s) {
  require(dt_s > 0, ErrorCode::invalid_argument, "tracks_to_wind needs dt > 0");
  std::vector<WindSample> samples;
  samples.reserve(tracks.size());
  for (const auto& t : tracks)
    samples.push_back(WindSample{pixel_size_m * (t.end.x - t.start.x) / dt_s,
                                 pixel_size_m * (t.end.y - t.start.y) / dt_s});
  return samples;
}

std::optional<WindSample> bucket_median(const std::vector<WindSample>& samples) {
  if (samples.empty()) return std::nullopt;
  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::vector<double> us, vs;
  for (const auto& s : samples) {
    us.push_back(s.u);
    vs.push_back(s.v);
  }
  return WindSample{median_of(us), median_of(vs)};
}

WindProfile retrieve_wind(const std::vector<const LwcGrid*>& grids,
                          const std::vector<double>& timestamps,
                          const std::vector<int>& levels, const WindParams& params) {
  require(grids.size() == timestamps.size() && grids.size() >= 2, ErrorCode::invalid_argument,
          "wind retrieval needs >= 2 timestamped grids");
  WindProfile profile;
  profile.pixel_size_m = params.pixel_size_m;
  const double t0 = timestamps.front();
  const double sz = grids[0]->spec.voxel.z;
  const double z0 = grids[0]->spec.origin.z;

  // Five-minute buckets aligned to the sequence start.
  int n_buckets = int(std::floor((timestamps.back() - t0) / params.bucket_s)) + 1;
  for (int level : levels) {
    for (int b = 0; b < n_buckets; ++b) {
      double b_lo = t0 + b * params.bucket_s, b_hi = b_lo + params.bucket_s;
      std::vector<const LwcGrid*> bucket_grids;
      std::vector<double> bucket_times;
      for (size_t i = 0; i < grids.size(); ++i) {
        if (timestamps[i] >= b_lo && (timestamps[i] < b_hi || (b == n_buckets - 1 &&
                                                               timestamps[i] <= b_hi))) {
          bucket_grids.push_back(grids[i]);
          bucket_times.push_back(timestamps[i]);
        }
        if (int(bucket_grids.size()) >= params.frames_per_bucket) break;
      }

      WindBucket bucket;
      bucket.level = level;
      bucket.height_m = z0 + (level + 0.5) * sz;
      bucket.bucket_start_s = b_lo;
      if (bucket_grids.size() >= 2) {
        SliceSequence slices = slice_sum(bucket_grids, bucket_times, level, params.halfwidth);
        if (!slices.empty) {
          uint64_t seed = CounterRng(params.seed, CounterRng::hash("wind")).stream(level).stream(b).next_u64();
          SeedResult seeds = seed_points(slices, params.seeds, seed);
          if (!seeds.points.empty()) {
            auto tracks = filter_tracks(track_points(slices, seeds.points, params.track));
            double dt = bucket_times.back() - bucket_times.front();
            if (!tracks.empty() && dt > 0) {
              auto samples = tracks_to_wind(tracks, params.pixel_size_m, dt);
              bucket.wind = bucket_median(samples);
              bucket.n_tracks = int(samples.size());
            }
          }
        }
      }
      profile.buckets.push_back(bucket);
    }
  }
  return profile;
}

double bearing_deg(double u, double v) {
  double deg = std::atan2(u, v) * 180.0 / 3.14159265358979323846;
  return deg < 0 ? deg + 360.0 : deg;
}

void write_wind_csv(const std::string& path, const WindProfile& profile) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << "time_bucket_start,height_m,u_ms,v_ms,speed_ms,bearing_deg,n_tracks\n";
  char line[256];
  for (const auto& b : profile.buckets) {
    if (b.wind) {
      double speed = std::hypot(b.wind->u, b.wind->v);
      std::snprintf(line, sizeof(line), "%.1f,%.1f,%.6f,%.6f,%.6f,%.2f,%d\n", b.bucket_start_s,
                    b.height_m, b.wind->u, b.wind->v, speed, bearing_deg(b.wind->u, b.wind->v),
                    b.n_tracks);
    } else {
      std::snprintf(line, sizeof(line), "%.1f,%.1f,,,,,0\n", b.bucket_start_s, b.height_m);
    }
    out << line;
  }
}

}  // namespace cloudtomo::wind
