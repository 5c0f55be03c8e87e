#include "cloudtomo/refine3d/train2.hpp"

#include <cmath>

#include "cloudtomo/nn/optim.hpp"

namespace cloudtomo::refine3d {

using nn::Tensor;
using nn::Var;

Stage2Frame make_stage2_frame(const CloudMaps2p5D& maps_pred, const LwcGrid& gt,
                              const std::vector<Tensor>& view_features,
                              const std::vector<int>& active_views, const Rig& rig,
                              int token_budget) {
  Stage2Frame frame;
  frame.maps_pred = maps_pred;
  frame.nx = gt.spec.nx;
  frame.ny = gt.spec.ny;
  frame.nz = gt.spec.nz;
  frame.s_z = gt.spec.voxel.z;

  LwcGrid init = lift_to_3d(maps_pred, gt.spec);
  frame.sparse = extract_sparse(init, view_features, active_views, rig, token_budget);
  frame.tokens = token_inputs(frame.sparse);

  frame.target_at_tokens.reserve(frame.sparse.indices.size());
  for (const auto& idx : frame.sparse.indices)
    frame.target_at_tokens.push_back(gt.at(idx.x, idx.y, idx.z));

  frame.column_abs_gt.assign(size_t(frame.nx) * frame.ny, 0.0);
  for (int iy = 0; iy < frame.ny; ++iy)
    for (int ix = 0; ix < frame.nx; ++ix) {
      double acc = 0;
      for (int iz = 0; iz < frame.nz; ++iz) acc += std::abs(gt.at(ix, iy, iz));
      frame.column_abs_gt[size_t(ix) + size_t(frame.nx) * iy] = acc;
    }
  return frame;
}

namespace {

struct Stage2Batch {
  Tensor tokens;
  std::vector<int> seg_offsets;
  std::vector<double> seg_lwp;
  Tensor target;
  double off_support_abs = 0;
  double denom = 1;
};

// Gather the tokens of all columns inside the window [x0,x0+w) x [y0,y0+h).
Stage2Batch crop_batch(const Stage2Frame& frame, int x0, int y0, int w, int h) {
  Stage2Batch batch;
  const auto& sp = frame.sparse;
  const int D = frame.tokens.rank() == 2 ? frame.tokens.dim(1) : 0;
  std::vector<int> rows;
  batch.seg_offsets.push_back(0);
  double support_abs = 0;
  for (int s = 0; s < sp.segments(); ++s) {
    int col = sp.segment_columns[size_t(s)];
    int ix = col % frame.nx, iy = col / frame.nx;
    if (ix < x0 || ix >= x0 + w || iy < y0 || iy >= y0 + h) continue;
    for (int i = sp.segment_offsets[size_t(s)]; i < sp.segment_offsets[size_t(s) + 1]; ++i) {
      rows.push_back(i);
      support_abs += std::abs(frame.target_at_tokens[size_t(i)]);
    }
    batch.seg_offsets.push_back(int(rows.size()));
    batch.seg_lwp.push_back(frame.maps_pred.lwp[size_t(col)]);
  }
  batch.tokens = Tensor({int(rows.size()), D});
  batch.target = Tensor({int(rows.size())});
  for (size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(frame.tokens.ptr() + size_t(rows[r]) * D, D, batch.tokens.ptr() + r * D);
    batch.target.data[r] = nn::real(frame.target_at_tokens[size_t(rows[r])]);
  }
  double window_abs = 0;
  for (int iy = y0; iy < y0 + h; ++iy)
    for (int ix = x0; ix < x0 + w; ++ix)
      window_abs += frame.column_abs_gt[size_t(ix) + size_t(frame.nx) * iy];
  batch.off_support_abs = window_abs - support_abs;
  batch.denom = double(w) * h * frame.nz;
  return batch;
}

Var batch_loss(const RefineModel& model, const Stage2Batch& batch, double s_z) {
  Var tokens = nn::make_constant(batch.tokens);
  Var logits = model.logits(tokens);
  Var weights = nn::softmax_segments(logits, batch.seg_offsets);
  Tensor scale({batch.tokens.dim(0)});
  for (size_t s = 0; s + 1 < batch.seg_offsets.size(); ++s)
    for (int i = batch.seg_offsets[s]; i < batch.seg_offsets[s + 1]; ++i)
      scale.data[size_t(i)] = nn::real(batch.seg_lwp[s] / s_z);
  Var values = nn::mul_const(weights, std::move(scale));
  return nn::l1_sparse_dense(values, batch.target, batch.off_support_abs, batch.denom);
}

}  // namespace

Stage2Result train_stage2(RefineModel& model, nn::ParamStore& refine_params,
                          const std::vector<Stage2Frame>& frames, const Stage2Config& cfg) {
  require(!frames.empty(), ErrorCode::invalid_argument, "stage-2 dataset is empty");

  nn::AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.beta1 = cfg.beta1;
  acfg.beta2 = cfg.beta2;
  acfg.weight_decay = cfg.weight_decay;
  acfg.grad_clip = cfg.grad_clip;
  nn::Adam adam(acfg);

  CounterRng root(cfg.seed, CounterRng::hash("train-stage2"));
  Stage2Result result;
  std::map<std::string, Tensor> last_good;

  for (int step = 0; step < cfg.steps; ++step) {
    CounterRng rng = root.stream(uint64_t(step));
    const auto& frame = frames[size_t(rng.below(frames.size()))];
    if (frame.sparse.count() == 0) continue;

    Stage2Batch batch;
    if (cfg.crop > 0 && (frame.nx > cfg.crop || frame.ny > cfg.crop)) {
      int w = std::min(cfg.crop, frame.nx), h = std::min(cfg.crop, frame.ny);
      // Sample windows overlapping the occupied bounding box until one
      // actually contains tokens.
      int bx0 = frame.nx, bx1 = -1, by0 = frame.ny, by1 = -1;
      for (int col : frame.sparse.segment_columns) {
        int ix = col % frame.nx, iy = col / frame.nx;
        bx0 = std::min(bx0, ix);
        bx1 = std::max(bx1, ix);
        by0 = std::min(by0, iy);
        by1 = std::max(by1, iy);
      }
      for (int attempt = 0; attempt < 16; ++attempt) {
        int xlo = std::max(0, bx0 - w + 1), xhi = std::min(frame.nx - w, bx1);
        int ylo = std::max(0, by0 - h + 1), yhi = std::min(frame.ny - h, by1);
        int x0 = xlo + int(rng.below(uint64_t(std::max(1, xhi - xlo + 1))));
        int y0 = ylo + int(rng.below(uint64_t(std::max(1, yhi - ylo + 1))));
        batch = crop_batch(frame, x0, y0, w, h);
        if (batch.tokens.dim(0) > 0) break;
      }
      if (batch.tokens.dim(0) == 0) batch = crop_batch(frame, 0, 0, frame.nx, frame.ny);
    } else {
      batch = crop_batch(frame, 0, 0, frame.nx, frame.ny);
    }

    Var loss_var = batch_loss(model, batch, frame.s_z);
    double loss = nn::scalar_of(loss_var);
    if (!std::isfinite(loss)) {
      if (!last_good.empty())
        for (auto& [name, var] : refine_params.params) var->value = last_good.at(name);
      result.aborted_nan = true;
      break;
    }
    last_good.clear();
    for (const auto& [name, var] : refine_params.params) last_good.emplace(name, var->value);

    adam.zero_grad(refine_params);
    nn::backward(loss_var);
    double lr = cfg.lr * nn::schedule_multiplier(cfg.schedule, step, cfg.steps);
    adam.step(refine_params, lr);

    result.loss_log.push_back(loss);
    if (result.steps_done == 0) result.initial_loss = loss;
    result.final_loss = loss;
    ++result.steps_done;
  }
  return result;
}

}  // namespace cloudtomo::refine3d
