#pragma once

#include "cloudtomo/core/geometry.hpp"
#include "cloudtomo/nn/layers.hpp"
#include "cloudtomo/optics/optics.hpp"

namespace cloudtomo::featvol {

nn::Tensor image_to_tensor(const optics::HdrImage& image);  // [3,H,W]

struct EncoderConfig {
  int in_channels = 3;
  int hidden_channels = 16;
  int feature_channels = 16;  // d_f
  int kernel = 5;             // 3 layers of k=5 -> ~13 px receptive field
};

// Small trainable stand-in for the frozen foundation backbone: full
// resolution in, d_f channels out.
struct ImageEncoder {
  EncoderConfig cfg;
  nn::Conv2d c1, c2, c3;

  ImageEncoder() = default;
  ImageEncoder(nn::ParamStore& ps, const EncoderConfig& cfg);
  nn::Var forward(const nn::Var& image) const;
};

// Plane-sweep lift: per plane h and column center, bilinear-sample every
// in-frustum view and average. Cells no view hits stay exactly zero.
struct LiftResult {
  nn::Var volume;     // [P, C, nx*ny]
  nn::Tensor counts;  // [P, nx*ny] view-hit counts
};

LiftResult lift_features(const std::vector<nn::Var>& view_features,
                         const std::vector<int>& active_views, const Rig& rig,
                         const HeightSweep& sweep, const GridSpec& spec);

// Plain (non-differentiable) sampling of per-view features at world points,
// averaged over in-frustum views. Used for sparse-voxel tokens.
nn::Tensor sample_point_features(const std::vector<nn::Tensor>& view_features,
                                 const std::vector<int>& active_views, const Rig& rig,
                                 const std::vector<Vec3>& points);

nn::Tensor sinusoidal_height_embedding(const std::vector<double>& heights, int dim);

struct AdaLnConfig {
  int embed_dim = 32;
  int hidden_dim = 64;
};

// adaLN over plane features: channel layer norm modulated by a small MLP of
// the plane-height embedding. Zero-initialized output projections make it
// the identity modulation at start. Unseen cells stay masked to zero.
struct HeightConditioner {
  AdaLnConfig cfg;
  int channels = 0;
  nn::Linear fc;
  nn::Var w_gamma, b_gamma, w_delta, b_delta;

  HeightConditioner() = default;
  HeightConditioner(nn::ParamStore& ps, const AdaLnConfig& cfg, int channels);

  // Pure function of the plane heights.
  std::pair<nn::Var, nn::Var> modulation(const std::vector<double>& heights) const;
  nn::Var forward(const nn::Var& volume, const nn::Tensor& counts,
                  const std::vector<double>& heights) const;
};

// [P, C, nx*ny] -> [P*C, ny, nx], plane-major channel order.
nn::Var flatten_volume(const nn::Var& volume, int nx, int ny);

// Mean hit fraction across planes as a single extra channel [1, ny, nx].
nn::Tensor hit_fraction_channel(const nn::Tensor& counts, int n_active_views, int nx, int ny);

}  // namespace cloudtomo::featvol
