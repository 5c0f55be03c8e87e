#pragma once

#include "cloudtomo/featvol/featvol.hpp"

namespace cloudtomo::layer2d {

struct Layer2DConfig {
  int in_channels = 0;  // planes * d_f + 1 hit-count channel
  int base_channels = 64;
  int depth = 4;
  // Head output scales keeping raw activations near unit range.
  double lwp_scale = 0.1;    // kg/m^2
  double cbh_scale = 1000.0; // m
  double dh_scale = 200.0;   // m
};

struct MapsPrediction {
  nn::Var lwp, cbh, dh, occ_logit;  // [1, ny, nx] each, physical units
};

// Encoder-decoder trunk on the flattened feature volume with four heads.
struct Layer2DModel {
  Layer2DConfig cfg;
  nn::Conv2d in_proj;
  std::vector<nn::Conv2d> down_a, down_b;
  std::vector<nn::Conv2d> up_a, up_b;
  nn::Conv2d head_lwp, head_cbh, head_dh, head_occ;

  Layer2DModel() = default;
  Layer2DModel(nn::ParamStore& ps, const Layer2DConfig& cfg);
  MapsPrediction forward(const nn::Var& input) const;
};

struct Loss2DConfig {
  double lambda_cbh = 0.1;
  double lambda_dh = 0.1;
  bool occupancy_bce = true;  // mask-head extension, switchable off
  double bce_weight = 1.0;
};

struct Loss2DTerms {
  nn::Var total;
  double lwp = 0, cbh = 0, dh = 0, bce = 0;
};

// L1 on LWP everywhere; L1 on CBH/dh over GT-occupied columns only; optional
// occupancy BCE. No occupied columns -> the masked terms contribute zero.
Loss2DTerms loss_2d(const MapsPrediction& pred, const CloudMaps2p5D& target,
                    const Loss2DConfig& cfg);

// Full stage-1 stack: images -> features -> homography lift -> adaLN ->
// flatten (+hit channel) -> 2D trunk.
struct CloudLayerStack {
  featvol::ImageEncoder encoder;
  featvol::HeightConditioner conditioner;
  Layer2DModel omega;
  Rig rig;
  HeightSweep sweep;
  GridSpec spec;

  MapsPrediction forward(const std::vector<nn::Tensor>& view_images,
                         const std::vector<int>& active_views) const;
};

// Thresholded, clamped 2.5D maps from a prediction.
CloudMaps2p5D prediction_to_maps(const MapsPrediction& pred, const GridSpec& spec);

struct Stage1Sample {
  std::vector<optics::HdrImage> hdr_views;  // one per rig camera, linear HDR
  CloudMaps2p5D gt_maps;
};

struct Stage1Config {
  int steps = 5000;
  double lr = 3e-4;
  std::string schedule = "cosine";  // or "constant"
  uint64_t seed = 0;
  double grad_clip = 1.0;
  double beta1 = 0.9, beta2 = 0.999, weight_decay = 0.0;
  Loss2DConfig loss;
  bool view_dropping = true;       // uniformly drop 0..N-1 views
  bool photometric_augment = true;
  int log_every = 50;
};

struct Stage1Result {
  std::vector<double> loss_log;
  double initial_loss = 0, final_loss = 0;
  int steps_done = 0;
  bool aborted_nan = false;
};

// Deterministic in cfg.seed; batch size 1. On a non-finite loss the last
// finite-loss parameters are restored and training aborts.
Stage1Result train_stage1(CloudLayerStack& stack, nn::ParamStore& params,
                          const std::vector<Stage1Sample>& samples, const Stage1Config& cfg);

}  // namespace cloudtomo::layer2d
