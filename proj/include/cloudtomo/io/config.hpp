#pragma once

#include <string>

#include "json.hpp"

#include "cloudtomo/cloudgen/cloudgen.hpp"
#include "cloudtomo/evalbench/evalbench.hpp"
#include "cloudtomo/layer2d/layer2d.hpp"
#include "cloudtomo/optics/optics.hpp"
#include "cloudtomo/refine3d/train2.hpp"
#include "cloudtomo/wind/wind.hpp"

namespace cloudtomo::io {

struct RigSynthetic {
  int cameras = 6;
  int image_width = 192, image_height = 144;
  double focal_px = 160.0;
  double radius_m = 3000.0;        // ring radius around the grid center
  double height_m = 2.0;           // camera altitude
  double look_at_height_m = 1200.0;
};

struct RigConfig {
  std::string path;  // non-empty overrides the synthetic ring
  RigSynthetic synthetic;
};

struct SceneConfig {
  cloudgen::SceneParams params;  // seed is filled from the global seed
  int frames = 20;
  double frame_spacing_s = 15.0;
  double advection_u = 5.0, advection_v = 0.0;
};

struct SunConfig {
  double azimuth_deg = 135.0, elevation_deg = 55.0;
  double sun_radiance = 50.0, sky_radiance = 1.0;
};

struct EvalConfig {
  double radar_x = -1.0, radar_y = -1.0;  // negative -> grid center
  double bin_m = 30.0, tick_s = 30.0;
  evalbench::FigureConfig figures;
};

struct WindConfig {
  wind::WindParams params;
  int level_stride = 4;
};

struct PipelineConfig {
  uint64_t seed = 7;
  std::string out_dir = "out";
  GridSpec grid;
  double sweep_start_m = 400.0, sweep_step_m = 200.0;
  int sweep_count = 18;
  RigConfig rig;
  SceneConfig scene;
  optics::OpticalParams optics;
  SunConfig sun;
  bool render_png_previews = false;
  featvol::EncoderConfig encoder;
  featvol::AdaLnConfig adaln;
  layer2d::Layer2DConfig layer2d;
  refine3d::RefineConfig refiner;
  layer2d::Stage1Config train1;
  refine3d::Stage2Config train2;
  WindConfig wind;
  EvalConfig eval;

  HeightSweep sweep() const { return HeightSweep::regular(sweep_start_m, sweep_step_m, sweep_count); }
  nlohmann::json resolved;  // the JSON this config was parsed from
};

// Defaults follow the published model configuration wherever one exists
// (25 m voxels, 18 sweep planes from 400 m, 16 feature channels, 0.1 loss
// weights, 5-slice sums, 20-frame / 15 s tracking, 25 seeds, 5 min buckets).
nlohmann::json default_config_json();

// Reduced desk-scale closed-loop setup (64^3 grid, small images).
nlohmann::json demo_overrides_json();

// Unknown keys are rejected with their full path; overrides deep-merge onto
// the base.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& overrides);
PipelineConfig config_from_json(const nlohmann::json& j);

// config_path may be empty (defaults); overrides may be null.
PipelineConfig load_config(const std::string& config_path, const nlohmann::json& overrides,
                           bool demo_defaults = false);

}  // namespace cloudtomo::io
