#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cloudtomo/cloudgen/cloudgen.hpp"

namespace cloudtomo::evalbench {

// Vertical LWC profiles above one ground location: 30 m bins, 30 s ticks.
struct RadarSeries {
  double x = 0, y = 0;           // m, world
  double tick_s = 30.0;
  double bin_m = 30.0;
  double base_z = 0.0;           // altitude of bin 0's lower edge
  int n_bins = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> profiles;  // kg/m^3 per (time, bin)
};

// Nearest-column sampling, box-averaged onto 30 m bins, at the frames
// nearest each 30 s tick. Location must lie inside the grid footprint.
RadarSeries simulate_radar(const cloudgen::SceneSequence& truth, double x, double y,
                           double bin_m = 30.0, double tick_s = 30.0);

struct Confusion {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// precision = TP/(TP+FP) (0 on empty), recall = TP/(TP+FN) (0 on empty),
// f1 = harmonic mean (0 when p+r = 0).
struct PrecisionRecallF1 {
  double precision = 0, recall = 0, f1 = 0;
};
PrecisionRecallF1 prf_from_confusion(const Confusion& c);

struct MetricsReport {
  double occ_f1 = 0, occ_precision = 0, occ_recall = 0;
  double mae_lwc_g = 0;        // g/m^3, GT-cloudy bins
  double mae_lwp = 0;          // kg/m^2, all times
  double mae_cbh = 0;          // m, both-occupied times
  double mae_cth = 0;          // m
  std::optional<double> relative_error_lwc;  // mae / mean cloudy GT
  int64_t n_times = 0, n_both_occupied = 0, n_cloudy_bins = 0;
  Confusion occ_confusion;
};

MetricsReport column_metrics(const RadarSeries& pred, const RadarSeries& truth);

// Full-grid column comparison of two 2.5D map sets (same definitions).
struct MapMetrics {
  double occ_f1 = 0, occ_precision = 0, occ_recall = 0;
  double mae_cbh = 0;          // m, both-occupied columns
  double mae_dh = 0;           // m
  double mae_lwp_cloudy = 0;   // kg/m^2 over GT-occupied columns
  double mae_lwp_all = 0;      // kg/m^2 over all columns
  double mean_cloudy_lwp = 0;  // GT mean over occupied columns
  int64_t n_both_occupied = 0;
};

MapMetrics map_metrics(const CloudMaps2p5D& pred, const CloudMaps2p5D& truth);

nlohmann::json metrics_to_json(const MetricsReport& report);

struct FigureConfig {
  bool enabled = false;
  int dpi = 100;
  double width_in = 8.0, height_in = 3.0;
};

// metrics.json + metrics.csv, plus optional time-height panels (truth and
// prediction) and an LWP time-series plot.
void emit_report(const MetricsReport& report, const RadarSeries& pred, const RadarSeries& truth,
                 const std::string& out_dir, const FigureConfig& figures = {});

}  // namespace cloudtomo::evalbench
