#pragma once

#include "cloudtomo/core/grid.hpp"
#include "cloudtomo/featvol/featvol.hpp"
#include "cloudtomo/nn/layers.hpp"

namespace cloudtomo::refine3d {

struct LiftDiagnostics {
  int dropped_nonpositive_dh = 0;   // occupied columns with dh <= 0
  int dropped_empty_interval = 0;   // (CBH, CBH+dh) contains no voxel level
};

// Initial density: (LWP/dh) * 2(z*s_z - CBH)/dh inside the open interval
// (CBH, CBH+dh), zero elsewhere, then an exact per-column rescale so the
// discrete sum integrates to LWP. z*s_z is measured from the grid origin.
LwcGrid lift_to_3d(const CloudMaps2p5D& maps, const GridSpec& spec,
                   LiftDiagnostics* diag = nullptr);

// Occupied voxels tokenized for attention: initial density, view-averaged
// image features, sinusoidal position code. Entries of one column are
// contiguous and z-sorted; columns run x-fastest.
struct SparseVoxelSet {
  std::vector<VoxelIndex> indices;
  std::vector<double> rho_init;
  nn::Tensor features;              // [M, C]
  nn::Tensor poscode;               // [M, 3 * 2 * freqs]
  std::vector<int> segment_offsets; // S+1 entries over tokens
  std::vector<int> segment_columns; // column id (ix + nx*iy) per segment

  int count() const { return int(indices.size()); }
  int segments() const { return int(segment_columns.size()); }
};

// Throws ErrorCode::budget when the voxel count exceeds token_budget.
SparseVoxelSet extract_sparse(const LwcGrid& init, const std::vector<nn::Tensor>& view_features,
                              const std::vector<int>& active_views, const Rig& rig,
                              int token_budget, int freqs_per_axis = 8);

// Position code alone (exposed for tests).
nn::Tensor voxel_position_code(const std::vector<VoxelIndex>& indices, const GridSpec& spec,
                               int freqs_per_axis);

struct RefineConfig {
  int width = 64;
  int blocks = 4;
  int heads = 4;
  int token_budget = 8192;
  int feature_channels = 16;  // d_f'
  int pos_dims = 48;
};

struct RefineModel {
  RefineConfig cfg;
  nn::Linear in_proj;
  std::vector<nn::AttentionBlock> blocks;
  nn::LayerNorm final_ln;
  nn::Linear head;

  RefineModel() = default;
  RefineModel(nn::ParamStore& ps, const RefineConfig& cfg);
  nn::Var logits(const nn::Var& tokens) const;  // [M]
};

// [M, 1 + C + pos_dims] rows: density, features, position code.
nn::Tensor token_inputs(const SparseVoxelSet& sparse);

// Column softmax over logits, scaled so each column integrates to the
// 2.5D LWP exactly. Returns per-token densities aligned with the set.
nn::Var refined_token_values(const RefineModel& model, const nn::Var& tokens,
                             const SparseVoxelSet& sparse, const CloudMaps2p5D& maps,
                             const GridSpec& spec);

// Inference path: final density grid (zero off-support).
LwcGrid refine(const RefineModel& model, const SparseVoxelSet& sparse, const CloudMaps2p5D& maps,
               const GridSpec& spec);

// Mean absolute error over all voxels.
double loss_3d(const LwcGrid& pred, const LwcGrid& target);

}  // namespace cloudtomo::refine3d
