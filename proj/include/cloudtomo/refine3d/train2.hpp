#pragma once

#include "cloudtomo/refine3d/refine3d.hpp"

namespace cloudtomo::refine3d {

// One frame of stage-2 training data. The stage-1 stack is frozen, so maps,
// tokens and targets are all precomputed constants.
struct Stage2Frame {
  SparseVoxelSet sparse;
  CloudMaps2p5D maps_pred;
  nn::Tensor tokens;                     // token_inputs(sparse)
  std::vector<double> target_at_tokens;  // GT density at token voxels
  std::vector<double> column_abs_gt;     // per column sum_z |GT|
  int nx = 0, ny = 0, nz = 0;
  double s_z = 0;
};

Stage2Frame make_stage2_frame(const CloudMaps2p5D& maps_pred, const LwcGrid& gt,
                              const std::vector<nn::Tensor>& view_features,
                              const std::vector<int>& active_views, const Rig& rig,
                              int token_budget);

struct Stage2Config {
  int steps = 2000;
  double lr = 1e-3;
  std::string schedule = "constant";
  uint64_t seed = 0;
  double grad_clip = 1.0;
  double beta1 = 0.9, beta2 = 0.999, weight_decay = 0.0;
  int crop = 24;  // column-window edge for training batches; 0 = full frame
  int log_every = 50;
};

struct Stage2Result {
  std::vector<double> loss_log;
  double initial_loss = 0, final_loss = 0;
  int steps_done = 0;
  bool aborted_nan = false;
};

// Trains only the refiner parameters (the stage-1 stack lives in a separate
// store and is never touched). Deterministic in cfg.seed.
Stage2Result train_stage2(RefineModel& model, nn::ParamStore& refine_params,
                          const std::vector<Stage2Frame>& frames, const Stage2Config& cfg);

}  // namespace cloudtomo::refine3d
