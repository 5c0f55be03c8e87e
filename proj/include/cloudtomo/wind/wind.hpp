#pragma once

#include <optional>
#include <vector>

#include "cloudtomo/core/grid.hpp"
#include "cloudtomo/core/rng.hpp"

namespace cloudtomo::wind {

// T grayscale fields in [0,1] around one height level.
struct SliceSequence {
  int nx = 0, ny = 0;
  int level = 0;                     // center height index
  double spacing_s = 15.0;
  std::vector<double> timestamps;
  std::vector<std::vector<float>> frames;  // x-fastest, size nx*ny each
  bool empty = false;                // constant-zero input, scaling skipped

  int size() const { return int(frames.size()); }
  float at(int f, int x, int y) const { return frames[size_t(f)][size_t(x) + size_t(nx) * y]; }
};

// Sum of the 5 levels h-2..h+2, then one min-max scaling across the whole
// sequence. Requires h-2 >= 0 and h+2 < nz.
SliceSequence slice_sum(const std::vector<const LwcGrid*>& grids,
                        const std::vector<double>& timestamps, int level, int halfwidth = 2);

struct SeedResult {
  std::vector<Vec2> points;
  bool short_of_candidates = false;
};

// n pixels drawn uniformly (without replacement) from the >= median-intensity
// half of the positive-support pixels. Deterministic in seed.
SeedResult seed_points(const SliceSequence& slices, int n, uint64_t seed);

struct TrackParams {
  int patch = 21;       // odd
  int search = 16;      // +- window, px
  double min_ncc = 0.5; // below -> occluded
};

struct Track {
  Vec2 start, end;
  std::vector<Vec2> positions;   // one per frame
  std::vector<double> scores;    // NCC per step (frame 0 carries 1.0)
  bool occluded = false;
  int occluded_from = -1;

  double displacement() const {
    double dx = end.x - start.x, dy = end.y - start.y;
    return std::sqrt(dx * dx + dy * dy);
  }
};

// Block matching with normalized cross-correlation and parabolic sub-pixel
// refinement; leaving the frame or a weak peak marks the track occluded.
std::vector<Track> track_points(const SliceSequence& slices, const std::vector<Vec2>& seeds,
                                const TrackParams& params = {});

// Drops occluded tracks, then the floor(0.05*n) smallest displacements
// (ties keep earlier-seeded tracks). Stable order.
std::vector<Track> filter_tracks(const std::vector<Track>& tracks);

struct WindSample {
  double u = 0, v = 0;  // m/s
};

// u = s (x2 - x1) / dt, v = s (y2 - y1) / dt per track.
std::vector<WindSample> tracks_to_wind(const std::vector<Track>& tracks, double pixel_size_m,
                                       double dt_s);

// Componentwise median; empty input -> nullopt.
std::optional<WindSample> bucket_median(const std::vector<WindSample>& samples);

struct WindBucket {
  int level = 0;
  double height_m = 0;
  double bucket_start_s = 0;
  std::optional<WindSample> wind;  // empty bucket stays unset
  int n_tracks = 0;
};

struct WindProfile {
  double pixel_size_m = 25.0;
  std::vector<WindBucket> buckets;
};

struct WindParams {
  TrackParams track;
  int seeds = 25;
  int halfwidth = 2;          // 5 consecutive slices
  double bucket_s = 300.0;    // five-minute buckets
  int frames_per_bucket = 20; // T
  double pixel_size_m = 25.0;
  uint64_t seed = 0;
};

// Full retrieval across levels and five-minute buckets aligned to the first
// timestamp. dt for each bucket is its actual tracked duration.
WindProfile retrieve_wind(const std::vector<const LwcGrid*>& grids,
                          const std::vector<double>& timestamps,
                          const std::vector<int>& levels, const WindParams& params);

// Compass bearing (degrees clockwise from north) of a wind vector.
double bearing_deg(double u, double v);

void write_wind_csv(const std::string& path, const WindProfile& profile);

}  // namespace cloudtomo::wind
