#include "cloudtomo/evalbench/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cloudtomo/io/image_io.hpp"

namespace cloudtomo::evalbench {

RadarSeries simulate_radar(const cloudgen::SceneSequence& truth, double x, double y,
                           double bin_m, double tick_s) {
  require(!truth.frames.empty(), ErrorCode::invalid_argument, "radar needs at least one frame");
  truth.validate();
  const GridSpec& spec = truth.frames[0].spec;
  require(spec.footprint_contains(x, y), ErrorCode::invalid_argument,
          "radar location outside the grid footprint");

  RadarSeries series;
  series.x = x;
  series.y = y;
  series.bin_m = bin_m;
  series.tick_s = tick_s;
  series.base_z = spec.origin.z;
  series.n_bins = int(std::ceil(spec.nz * spec.voxel.z / bin_m));

  int ix = std::min(int((x - spec.origin.x) / spec.voxel.x), spec.nx - 1);
  int iy = std::min(int((y - spec.origin.y) / spec.voxel.y), spec.ny - 1);

  const double t0 = truth.timestamps.front(), t1 = truth.timestamps.back();
  for (int k = int(std::ceil(t0 / tick_s)); k * tick_s <= t1; ++k) {
    double tick = k * tick_s;
    size_t best = 0;
    double best_dt = 1e300;
    for (size_t f = 0; f < truth.timestamps.size(); ++f) {
      double dt = std::abs(truth.timestamps[f] - tick);
      if (dt < best_dt) {
        best_dt = dt;
        best = f;
      }
    }
    const LwcGrid& grid = truth.frames[best];

    // Box-average the 25 m column onto the 30 m bins; partial coverage of
    // the top bin keeps the column integral exact.
    std::vector<double> profile(size_t(series.n_bins), 0.0);
    const double sz = spec.voxel.z;
    for (int b = 0; b < series.n_bins; ++b) {
      double lo = b * bin_m, hi = (b + 1) * bin_m;  // relative to origin z
      double acc = 0;
      int z_first = std::max(0, int(std::floor(lo / sz)));
      int z_last = std::min(spec.nz - 1, int(std::floor((hi - 1e-9) / sz)));
      for (int iz = z_first; iz <= z_last; ++iz) {
        double vlo = iz * sz, vhi = (iz + 1) * sz;
        double overlap = std::min(hi, vhi) - std::max(lo, vlo);
        if (overlap > 0) acc += grid.at(ix, iy, iz) * overlap;
      }
      profile[size_t(b)] = acc / bin_m;
    }
    series.times.push_back(tick);
    series.profiles.push_back(std::move(profile));
  }
  return series;
}

PrecisionRecallF1 prf_from_confusion(const Confusion& c) {
  PrecisionRecallF1 out;
  if (c.tp + c.fp > 0) out.precision = double(c.tp) / double(c.tp + c.fp);
  if (c.tp + c.fn > 0) out.recall = double(c.tp) / double(c.tp + c.fn);
  if (out.precision + out.recall > 0)
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

namespace {

bool column_occupied(const std::vector<double>& profile) {
  for (double v : profile)
    if (v > 0) return true;
  return false;
}

double column_lwp(const std::vector<double>& profile, double bin_m) {
  double acc = 0;
  for (double v : profile) acc += v;
  return acc * bin_m;
}

double column_cbh(const std::vector<double>& profile, double bin_m, double base_z) {
  for (size_t b = 0; b < profile.size(); ++b)
    if (profile[b] > 0) return base_z + double(b) * bin_m;
  return 0;
}

double column_cth(const std::vector<double>& profile, double bin_m, double base_z) {
  for (size_t b = profile.size(); b-- > 0;)
    if (profile[b] > 0) return base_z + double(b + 1) * bin_m;
  return 0;
}

}  // namespace

MetricsReport column_metrics(const RadarSeries& pred, const RadarSeries& truth) {
  require(pred.times.size() == truth.times.size() && pred.n_bins == truth.n_bins,
          ErrorCode::invalid_argument, "column_metrics needs matched (time, bin) samples");
  MetricsReport report;
  report.n_times = int64_t(truth.times.size());

  double lwc_err = 0, gt_mean = 0;
  int64_t cloudy = 0;
  double lwp_err = 0, cbh_err = 0, cth_err = 0;
  int64_t both = 0;

  for (size_t t = 0; t < truth.times.size(); ++t) {
    const auto& tp = truth.profiles[t];
    const auto& pp = pred.profiles[t];
    bool t_occ = column_occupied(tp), p_occ = column_occupied(pp);
    if (t_occ && p_occ) ++report.occ_confusion.tp;
    if (!t_occ && p_occ) ++report.occ_confusion.fp;
    if (t_occ && !p_occ) ++report.occ_confusion.fn;
    if (!t_occ && !p_occ) ++report.occ_confusion.tn;

    lwp_err += std::abs(column_lwp(pp, pred.bin_m) - column_lwp(tp, truth.bin_m));

    if (t_occ) {
      for (int b = 0; b < truth.n_bins; ++b) {
        if (tp[size_t(b)] > 0) {  // GT-cloudy bins only
          lwc_err += std::abs(pp[size_t(b)] - tp[size_t(b)]);
          gt_mean += tp[size_t(b)];
          ++cloudy;
        }
      }
    }
    if (t_occ && p_occ) {
      cbh_err += std::abs(column_cbh(pp, pred.bin_m, pred.base_z) -
                          column_cbh(tp, truth.bin_m, truth.base_z));
      cth_err += std::abs(column_cth(pp, pred.bin_m, pred.base_z) -
                          column_cth(tp, truth.bin_m, truth.base_z));
      ++both;
    }
  }

  auto prf = prf_from_confusion(report.occ_confusion);
  report.occ_f1 = prf.f1;
  report.occ_precision = prf.precision;
  report.occ_recall = prf.recall;
  report.n_cloudy_bins = cloudy;
  report.n_both_occupied = both;
  if (report.n_times > 0) report.mae_lwp = lwp_err / double(report.n_times);
  if (both > 0) {
    report.mae_cbh = cbh_err / double(both);
    report.mae_cth = cth_err / double(both);
  }
  if (cloudy > 0) {
    report.mae_lwc_g = 1000.0 * lwc_err / double(cloudy);
    double mean_gt_g = 1000.0 * gt_mean / double(cloudy);
    report.relative_error_lwc = report.mae_lwc_g / mean_gt_g;
  }
  return report;
}

MapMetrics map_metrics(const CloudMaps2p5D& pred, const CloudMaps2p5D& truth) {
  require(pred.nx == truth.nx && pred.ny == truth.ny, ErrorCode::invalid_argument,
          "map_metrics dims mismatch");
  MapMetrics m;
  Confusion c;
  double cbh_err = 0, dh_err = 0, lwp_cloudy = 0, lwp_all = 0, lwp_gt = 0;
  int64_t both = 0, cloudy = 0;
  for (size_t i = 0; i < truth.num_columns(); ++i) {
    bool t_occ = truth.occupancy[i], p_occ = pred.occupancy[i];
    if (t_occ && p_occ) ++c.tp;
    if (!t_occ && p_occ) ++c.fp;
    if (t_occ && !p_occ) ++c.fn;
    if (!t_occ && !p_occ) ++c.tn;
    lwp_all += std::abs(pred.lwp[i] - truth.lwp[i]);
    if (t_occ) {
      lwp_cloudy += std::abs(pred.lwp[i] - truth.lwp[i]);
      lwp_gt += truth.lwp[i];
      ++cloudy;
    }
    if (t_occ && p_occ) {
      cbh_err += std::abs(pred.cbh[i] - truth.cbh[i]);
      dh_err += std::abs(pred.dh[i] - truth.dh[i]);
      ++both;
    }
  }
  auto prf = prf_from_confusion(c);
  m.occ_f1 = prf.f1;
  m.occ_precision = prf.precision;
  m.occ_recall = prf.recall;
  m.n_both_occupied = both;
  if (truth.num_columns() > 0) m.mae_lwp_all = lwp_all / double(truth.num_columns());
  if (cloudy > 0) {
    m.mae_lwp_cloudy = lwp_cloudy / double(cloudy);
    m.mean_cloudy_lwp = lwp_gt / double(cloudy);
  }
  if (both > 0) {
    m.mae_cbh = cbh_err / double(both);
    m.mae_dh = dh_err / double(both);
  }
  return m;
}

nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["occ_f1"] = r.occ_f1;
  j["occ_precision"] = r.occ_precision;
  j["occ_recall"] = r.occ_recall;
  j["mae_lwc_g_m3"] = r.mae_lwc_g;
  j["mae_lwp_kg_m2"] = r.mae_lwp;
  j["mae_cbh_m"] = r.mae_cbh;
  j["mae_cth_m"] = r.mae_cth;
  if (r.relative_error_lwc)
    j["relative_error_lwc"] = *r.relative_error_lwc;
  else
    j["relative_error_lwc"] = nullptr;
  j["counts"] = {{"times", r.n_times},
                 {"both_occupied", r.n_both_occupied},
                 {"cloudy_bins", r.n_cloudy_bins},
                 {"tp", r.occ_confusion.tp},
                 {"fp", r.occ_confusion.fp},
                 {"fn", r.occ_confusion.fn},
                 {"tn", r.occ_confusion.tn}};
  return j;
}

namespace {

// Shared-scale viridis-like ramp.
void colormap(double v, uint8_t& r, uint8_t& g, uint8_t& b) {
  v = std::clamp(v, 0.0, 1.0);
  static const double stops[5][3] = {{0.267, 0.005, 0.329},
                                     {0.229, 0.322, 0.546},
                                     {0.127, 0.566, 0.551},
                                     {0.369, 0.789, 0.383},
                                     {0.993, 0.906, 0.144}};
  double x = v * 4.0;
  int i = std::min(3, int(x));
  double f = x - i;
  r = uint8_t(255.0 * (stops[i][0] + f * (stops[i + 1][0] - stops[i][0])));
  g = uint8_t(255.0 * (stops[i][1] + f * (stops[i + 1][1] - stops[i][1])));
  b = uint8_t(255.0 * (stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
}

void write_time_height_png(const std::string& path, const RadarSeries& series, double vmax,
                           int width, int height) {
  std::vector<uint8_t> rgb(size_t(width) * height * 3, 255);
  const int nt = int(series.times.size()), nb = series.n_bins;
  if (nt > 0 && nb > 0) {
    for (int y = 0; y < height; ++y) {
      int bin = nb - 1 - (y * nb) / height;  // height increases upward
      for (int x = 0; x < width; ++x) {
        int t = (x * nt) / width;
        double v = vmax > 0 ? series.profiles[size_t(t)][size_t(bin)] / vmax : 0.0;
        uint8_t r, g, b;
        colormap(v, r, g, b);
        size_t i = (size_t(y) * width + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
      }
    }
  }
  io::write_png_rgb8_raw(path, width, height, rgb);
}

void write_lwp_series_png(const std::string& path, const RadarSeries& pred,
                          const RadarSeries& truth, int width, int height) {
  std::vector<uint8_t> rgb(size_t(width) * height * 3, 255);
  auto lwps = [](const RadarSeries& s) {
    std::vector<double> v;
    for (const auto& p : s.profiles) v.push_back(column_lwp(p, s.bin_m));
    return v;
  };
  std::vector<double> a = lwps(truth), b = lwps(pred);
  double vmax = 1e-9;
  for (double v : a) vmax = std::max(vmax, v);
  for (double v : b) vmax = std::max(vmax, v);
  auto plot = [&](const std::vector<double>& v, uint8_t r, uint8_t g, uint8_t bl) {
    if (v.size() < 2) return;
    for (int x = 0; x < width; ++x) {
      double ft = double(x) / (width - 1) * double(v.size() - 1);
      size_t i = size_t(ft);
      double f = ft - double(i);
      double val = v[i] * (1 - f) + v[std::min(i + 1, v.size() - 1)] * f;
      int y = height - 1 - int((height - 1) * (val / vmax));
      y = std::clamp(y, 0, height - 1);
      for (int dy = -1; dy <= 0; ++dy) {
        int yy = std::clamp(y + dy, 0, height - 1);
        size_t px = (size_t(yy) * width + x) * 3;
        rgb[px] = r;
        rgb[px + 1] = g;
        rgb[px + 2] = bl;
      }
    }
  };
  plot(a, 40, 40, 40);     // truth in gray
  plot(b, 220, 80, 30);    // prediction in orange
  io::write_png_rgb8_raw(path, width, height, rgb);
}

}  // namespace

void emit_report(const MetricsReport& report, const RadarSeries& pred, const RadarSeries& truth,
                 const std::string& out_dir, const FigureConfig& figures) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/metrics.json");
    require(out.good(), ErrorCode::io, "cannot write metrics.json under " + out_dir);
    out << metrics_to_json(report).dump(2) << "\n";
  }
  {
    // Versioned, fixed column order.
    std::ofstream out(out_dir + "/metrics.csv");
    require(out.good(), ErrorCode::io, "cannot write metrics.csv under " + out_dir);
    out << "schema_version,occ_f1,occ_precision,occ_recall,mae_lwc_g_m3,mae_lwp_kg_m2,"
           "mae_cbh_m,mae_cth_m,relative_error_lwc,n_times,n_both_occupied,n_cloudy_bins\n";
    char line[512];
    std::snprintf(line, sizeof(line), "1,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%s,%lld,%lld,%lld\n",
                  report.occ_f1, report.occ_precision, report.occ_recall, report.mae_lwc_g,
                  report.mae_lwp, report.mae_cbh, report.mae_cth,
                  report.relative_error_lwc
                      ? std::to_string(*report.relative_error_lwc).c_str()
                      : "",
                  (long long)report.n_times, (long long)report.n_both_occupied,
                  (long long)report.n_cloudy_bins);
    out << line;
  }
  if (figures.enabled) {
    int w = int(figures.dpi * figures.width_in), h = int(figures.dpi * figures.height_in);
    double vmax = 0;
    for (const auto& p : truth.profiles)
      for (double v : p) vmax = std::max(vmax, v);
    for (const auto& p : pred.profiles)
      for (double v : p) vmax = std::max(vmax, v);
    write_time_height_png(out_dir + "/lwc_truth.png", truth, vmax, w, h);
    write_time_height_png(out_dir + "/lwc_pred.png", pred, vmax, w, h);
    write_lwp_series_png(out_dir + "/lwp_series.png", pred, truth, w, h);
  }
}

}  // namespace cloudtomo::evalbench
