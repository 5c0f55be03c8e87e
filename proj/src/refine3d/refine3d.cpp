#include "cloudtomo/refine3d/refine3d.hpp"

#include <cmath>

namespace cloudtomo::refine3d {

using nn::real;
using nn::Tensor;
using nn::Var;

LwcGrid lift_to_3d(const CloudMaps2p5D& maps, const GridSpec& spec, LiftDiagnostics* diag) {
  require(maps.nx == spec.nx && maps.ny == spec.ny, ErrorCode::invalid_argument,
          "lift_to_3d: map dims do not match grid spec");
  LwcGrid out(spec);
  LiftDiagnostics local;
  const double sz = spec.voxel.z;
  for (int iy = 0; iy < spec.ny; ++iy) {
    for (int ix = 0; ix < spec.nx; ++ix) {
      size_t mi = maps.index(ix, iy);
      if (!maps.occupancy[mi] || maps.lwp[mi] <= 0) continue;
      double lwp = maps.lwp[mi], cbh = maps.cbh[mi], dh = maps.dh[mi];
      if (dh <= 0) {
        ++local.dropped_nonpositive_dh;
        continue;
      }
      double raw_sum = 0;
      int z_lo = -1, z_hi = -1;
      for (int iz = 0; iz < spec.nz; ++iz) {
        double z_alt = spec.origin.z + iz * sz;
        if (z_alt > cbh && z_alt < cbh + dh) {
          if (z_lo < 0) z_lo = iz;
          z_hi = iz;
          raw_sum += (lwp / dh) * (2.0 * (z_alt - cbh) / dh);
        }
      }
      if (z_lo < 0 || raw_sum <= 0) {
        ++local.dropped_empty_interval;
        continue;
      }
      // Exact discrete conservation: scale so s_z * sum == LWP.
      double scale = lwp / (sz * raw_sum);
      for (int iz = z_lo; iz <= z_hi; ++iz) {
        double z_alt = spec.origin.z + iz * sz;
        out.at(ix, iy, iz) = scale * (lwp / dh) * (2.0 * (z_alt - cbh) / dh);
      }
    }
  }
  if (diag) *diag = local;
  return out;
}

Tensor voxel_position_code(const std::vector<VoxelIndex>& indices, const GridSpec& spec,
                           int freqs_per_axis) {
  const int per_axis = 2 * freqs_per_axis;
  Tensor out({int(indices.size()), 3 * per_axis});
  constexpr double kPi = 3.14159265358979323846;
  const int dims[3] = {spec.nx, spec.ny, spec.nz};
  for (size_t i = 0; i < indices.size(); ++i) {
    const int coords[3] = {indices[i].x, indices[i].y, indices[i].z};
    for (int axis = 0; axis < 3; ++axis) {
      for (int k = 0; k < freqs_per_axis; ++k) {
        double freq = std::ldexp(kPi / double(dims[axis]), k);  // 2^k * pi / N
        double arg = coords[axis] * freq;
        out.data[i * size_t(3 * per_axis) + axis * per_axis + 2 * k] = real(std::sin(arg));
        out.data[i * size_t(3 * per_axis) + axis * per_axis + 2 * k + 1] = real(std::cos(arg));
      }
    }
  }
  return out;
}

SparseVoxelSet extract_sparse(const LwcGrid& init, const std::vector<Tensor>& view_features,
                              const std::vector<int>& active_views, const Rig& rig,
                              int token_budget, int freqs_per_axis) {
  const GridSpec& spec = init.spec;
  SparseVoxelSet set;
  size_t positive = 0;
  for (double v : init.rho) positive += v > 0 ? 1 : 0;
  require(int64_t(positive) <= int64_t(token_budget), ErrorCode::budget,
          "sparse voxel count " + std::to_string(positive) + " exceeds the token budget " +
              std::to_string(token_budget) +
              "; pool the scene or reduce it before refining");

  set.indices.reserve(positive);
  set.rho_init.reserve(positive);
  set.segment_offsets.push_back(0);
  for (int iy = 0; iy < spec.ny; ++iy) {
    for (int ix = 0; ix < spec.nx; ++ix) {
      bool any = false;
      for (int iz = 0; iz < spec.nz; ++iz) {
        double v = init.at(ix, iy, iz);
        if (v > 0) {
          set.indices.push_back({ix, iy, iz});
          set.rho_init.push_back(v);
          any = true;
        }
      }
      if (any) {
        set.segment_offsets.push_back(int(set.indices.size()));
        set.segment_columns.push_back(ix + spec.nx * iy);
      }
    }
  }

  std::vector<Vec3> centers;
  centers.reserve(set.indices.size());
  for (const auto& idx : set.indices) centers.push_back(spec.voxel_center(idx));
  if (!set.indices.empty()) {
    set.features = featvol::sample_point_features(view_features, active_views, rig, centers);
    set.poscode = voxel_position_code(set.indices, spec, freqs_per_axis);
  } else {
    int c = active_views.empty() ? 0 : view_features[size_t(active_views[0])].dim(0);
    set.features = Tensor({0, c});
    set.poscode = Tensor({0, 3 * 2 * freqs_per_axis});
  }
  return set;
}

RefineModel::RefineModel(nn::ParamStore& ps, const RefineConfig& c) : cfg(c) {
  require(c.width % c.heads == 0, ErrorCode::config, "refiner width must divide heads");
  in_proj = nn::Linear(ps, "refiner.in", 1 + c.feature_channels + c.pos_dims, c.width);
  for (int b = 0; b < c.blocks; ++b)
    blocks.emplace_back(ps, "refiner.block" + std::to_string(b), c.width, c.heads);
  final_ln = nn::LayerNorm(ps, "refiner.ln", c.width);
  head = nn::Linear(ps, "refiner.head", c.width, 1, 0.1);
}

Var RefineModel::logits(const Var& tokens) const {
  Var x = in_proj.forward(tokens);
  for (const auto& block : blocks) x = block.forward(x);
  x = head.forward(final_ln.forward(x));
  return nn::reshape(x, {x->value.dim(0)});
}

Tensor token_inputs(const SparseVoxelSet& sparse) {
  const int M = sparse.count();
  const int C = sparse.features.rank() == 2 ? sparse.features.dim(1) : 0;
  const int P = sparse.poscode.rank() == 2 ? sparse.poscode.dim(1) : 0;
  Tensor out({M, 1 + C + P});
  for (int i = 0; i < M; ++i) {
    // Density in g/m^3 keeps the token inputs at unit scale.
    out.data[size_t(i) * (1 + C + P)] = real(sparse.rho_init[size_t(i)] * 1000.0);
    for (int c = 0; c < C; ++c)
      out.data[size_t(i) * (1 + C + P) + 1 + c] = sparse.features.data[size_t(i) * C + c];
    for (int p = 0; p < P; ++p)
      out.data[size_t(i) * (1 + C + P) + 1 + C + p] = sparse.poscode.data[size_t(i) * P + p];
  }
  return out;
}

Var refined_token_values(const RefineModel& model, const Var& tokens,
                         const SparseVoxelSet& sparse, const CloudMaps2p5D& maps,
                         const GridSpec& spec) {
  require(tokens->value.dim(0) == sparse.count(), ErrorCode::invalid_argument,
          "token tensor does not match sparse set");
  Var logit = model.logits(tokens);
  Var weights = nn::softmax_segments(logit, sparse.segment_offsets);
  Tensor scale({sparse.count()});
  for (int s = 0; s < sparse.segments(); ++s) {
    int col = sparse.segment_columns[size_t(s)];
    double lwp = maps.lwp[size_t(col)];
    require(lwp > 0 && maps.occupancy[size_t(col)], ErrorCode::invalid_argument,
            "sparse column without positive LWP");
    for (int i = sparse.segment_offsets[size_t(s)]; i < sparse.segment_offsets[size_t(s) + 1];
         ++i)
      scale.data[size_t(i)] = real(lwp / spec.voxel.z);
  }
  return nn::mul_const(weights, std::move(scale));
}

LwcGrid refine(const RefineModel& model, const SparseVoxelSet& sparse, const CloudMaps2p5D& maps,
               const GridSpec& spec) {
  LwcGrid out(spec);
  if (sparse.count() == 0) return out;
  Var tokens = nn::make_constant(token_inputs(sparse));
  Var logit = model.logits(tokens);

  // Column softmax in double so the conservation identity holds tightly.
  for (int s = 0; s < sparse.segments(); ++s) {
    int lo = sparse.segment_offsets[size_t(s)], hi = sparse.segment_offsets[size_t(s) + 1];
    int col = sparse.segment_columns[size_t(s)];
    double lwp = maps.lwp[size_t(col)];
    double mx = -1e300;
    for (int i = lo; i < hi; ++i) mx = std::max(mx, double(logit->value.data[size_t(i)]));
    double z = 0;
    for (int i = lo; i < hi; ++i) z += std::exp(double(logit->value.data[size_t(i)]) - mx);
    for (int i = lo; i < hi; ++i) {
      const auto& idx = sparse.indices[size_t(i)];
      double w = std::exp(double(logit->value.data[size_t(i)]) - mx) / z;
      out.at(idx.x, idx.y, idx.z) = w * lwp / spec.voxel.z;
    }
  }
  return out;
}

double loss_3d(const LwcGrid& pred, const LwcGrid& target) {
  require(pred.rho.size() == target.rho.size(), ErrorCode::invalid_argument,
          "loss_3d: grid size mismatch");
  double acc = 0;
  for (size_t i = 0; i < pred.rho.size(); ++i) acc += std::abs(pred.rho[i] - target.rho[i]);
  return acc / double(pred.rho.size());
}

}  // namespace cloudtomo::refine3d
