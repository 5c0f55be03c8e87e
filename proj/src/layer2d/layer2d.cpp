#include "cloudtomo/layer2d/layer2d.hpp"

#include <cmath>

#include "cloudtomo/nn/optim.hpp"

namespace cloudtomo::layer2d {

using nn::Tensor;
using nn::Var;

Layer2DModel::Layer2DModel(nn::ParamStore& ps, const Layer2DConfig& c) : cfg(c) {
  require(c.in_channels > 0, ErrorCode::config, "layer2d in_channels not set");
  require(c.depth >= 1, ErrorCode::config, "layer2d depth must be >= 1");
  const int C = c.base_channels;
  in_proj = nn::Conv2d(ps, "omega.in", c.in_channels, C, 1, 1, 0);
  for (int l = 0; l < c.depth; ++l) {
    down_a.emplace_back(ps, "omega.down" + std::to_string(l) + ".a", C, C, 3, 1, 1);
    down_b.emplace_back(ps, "omega.down" + std::to_string(l) + ".b", C, C, 3, 2, 1);
    up_a.emplace_back(ps, "omega.up" + std::to_string(l) + ".a", 2 * C, C, 3, 1, 1);
    up_b.emplace_back(ps, "omega.up" + std::to_string(l) + ".b", C, C, 3, 1, 1);
  }
  head_lwp = nn::Conv2d(ps, "omega.head_lwp", C, 1, 1, 1, 0, 0.5);
  head_cbh = nn::Conv2d(ps, "omega.head_cbh", C, 1, 1, 1, 0, 0.5);
  head_dh = nn::Conv2d(ps, "omega.head_dh", C, 1, 1, 1, 0, 0.5);
  head_occ = nn::Conv2d(ps, "omega.head_occ", C, 1, 1, 1, 0, 0.5);
}

MapsPrediction Layer2DModel::forward(const Var& input) const {
  Var cur = nn::relu(in_proj.forward(input));
  std::vector<Var> skips;
  for (size_t l = 0; l < down_a.size(); ++l) {
    Var a = nn::relu(down_a[l].forward(cur));
    skips.push_back(a);
    cur = nn::relu(down_b[l].forward(a));
  }
  for (size_t l = down_a.size(); l-- > 0;) {
    Var up = nn::upsample_nearest2(cur);
    const Var& skip = skips[l];
    up = nn::crop2d(up, 0, 0, skip->value.dim(1), skip->value.dim(2));
    cur = nn::relu(up_a[l].forward(nn::concat_axis0(up, skip)));
    cur = nn::relu(up_b[l].forward(cur));
  }
  MapsPrediction out;
  out.lwp = nn::mul_scalar(nn::softplus(head_lwp.forward(cur)), cfg.lwp_scale);
  out.cbh = nn::mul_scalar(head_cbh.forward(cur), cfg.cbh_scale);
  out.dh = nn::mul_scalar(nn::softplus(head_dh.forward(cur)), cfg.dh_scale);
  out.occ_logit = head_occ.forward(cur);
  return out;
}

namespace {

Tensor maps_channel(const CloudMaps2p5D& maps, const std::vector<double>& field) {
  Tensor t({1, maps.ny, maps.nx});
  for (size_t i = 0; i < field.size(); ++i) t.data[i] = nn::real(field[i]);
  return t;
}

Tensor occupancy_channel(const CloudMaps2p5D& maps) {
  Tensor t({1, maps.ny, maps.nx});
  for (size_t i = 0; i < maps.occupancy.size(); ++i)
    t.data[i] = maps.occupancy[i] ? 1.f : 0.f;
  return t;
}

}  // namespace

Loss2DTerms loss_2d(const MapsPrediction& pred, const CloudMaps2p5D& target,
                    const Loss2DConfig& cfg) {
  require(pred.lwp->value.dim(1) == target.ny && pred.lwp->value.dim(2) == target.nx,
          ErrorCode::invalid_argument, "loss_2d shape mismatch");
  Tensor occ = occupancy_channel(target);
  Var l_lwp = nn::l1_mean(pred.lwp, maps_channel(target, target.lwp));
  Var l_cbh = nn::l1_masked_mean(pred.cbh, maps_channel(target, target.cbh), occ);
  Var l_dh = nn::l1_masked_mean(pred.dh, maps_channel(target, target.dh), occ);

  Loss2DTerms terms;
  terms.lwp = nn::scalar_of(l_lwp);
  terms.cbh = nn::scalar_of(l_cbh);
  terms.dh = nn::scalar_of(l_dh);
  Var total = nn::add(l_lwp, nn::add(nn::mul_scalar(l_cbh, cfg.lambda_cbh),
                                     nn::mul_scalar(l_dh, cfg.lambda_dh)));
  if (cfg.occupancy_bce) {
    Var l_bce = nn::bce_with_logits_mean(pred.occ_logit, occ);
    terms.bce = nn::scalar_of(l_bce);
    total = nn::add(total, nn::mul_scalar(l_bce, cfg.bce_weight));
  }
  terms.total = total;
  return terms;
}

MapsPrediction CloudLayerStack::forward(const std::vector<Tensor>& view_images,
                                        const std::vector<int>& active_views) const {
  require(view_images.size() == size_t(rig.size()), ErrorCode::invalid_argument,
          "stack needs one image per rig camera");
  std::vector<Var> features(view_images.size());
  for (int v : active_views) {
    Var img = nn::make_constant(view_images[size_t(v)]);
    features[size_t(v)] = encoder.forward(img);
  }
  auto lifted = featvol::lift_features(features, active_views, rig, sweep, spec);
  Var conditioned = conditioner.forward(lifted.volume, lifted.counts, sweep.heights);
  Var flat = featvol::flatten_volume(conditioned, spec.nx, spec.ny);
  Var hits = nn::make_constant(
      featvol::hit_fraction_channel(lifted.counts, int(active_views.size()), spec.nx, spec.ny));
  Var input = nn::concat_axis0(flat, hits);
  return omega.forward(input);
}

CloudMaps2p5D prediction_to_maps(const MapsPrediction& pred, const GridSpec& spec) {
  const int ny = pred.lwp->value.dim(1), nx = pred.lwp->value.dim(2);
  CloudMaps2p5D maps(nx, ny);
  const double z_top = spec.nz * spec.voxel.z;  // relative to grid origin
  for (size_t i = 0; i < maps.num_columns(); ++i) {
    double occ_logit = pred.occ_logit->value.data[i];
    bool occupied = occ_logit >= 0.0;  // sigmoid >= 0.5
    double lwp = std::max(0.0, double(pred.lwp->value.data[i]));
    maps.lwp[i] = lwp;
    if (!occupied || lwp <= 0) continue;  // sentinel stays
    double cbh = std::clamp(double(pred.cbh->value.data[i]), 0.0, z_top);
    double dh = std::min(double(pred.dh->value.data[i]), z_top - cbh);
    if (dh <= 0) continue;  // degenerate prediction, leave unoccupied
    maps.cbh[i] = cbh;
    maps.dh[i] = dh;
    maps.occupancy[i] = 1;
  }
  return maps;
}

Stage1Result train_stage1(CloudLayerStack& stack, nn::ParamStore& params,
                          const std::vector<Stage1Sample>& samples, const Stage1Config& cfg) {
  require(!samples.empty(), ErrorCode::invalid_argument, "stage-1 dataset is empty");
  const int n_views = stack.rig.size();
  for (const auto& s : samples)
    require(s.hdr_views.size() == size_t(n_views), ErrorCode::invalid_argument,
            "sample view count does not match rig");

  nn::AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.beta1 = cfg.beta1;
  acfg.beta2 = cfg.beta2;
  acfg.weight_decay = cfg.weight_decay;
  acfg.grad_clip = cfg.grad_clip;
  nn::Adam adam(acfg);

  CounterRng root(cfg.seed, CounterRng::hash("train-stage1"));
  Stage1Result result;
  std::map<std::string, Tensor> last_good;

  for (int step = 0; step < cfg.steps; ++step) {
    CounterRng rng = root.stream(uint64_t(step));
    const auto& sample = samples[size_t(rng.below(samples.size()))];

    // Uniformly drop 0..N-1 views.
    std::vector<int> views(size_t(n_views), 0);
    for (int v = 0; v < n_views; ++v) views[size_t(v)] = v;
    int keep = n_views;
    if (cfg.view_dropping && n_views > 1) {
      int drop = int(rng.below(uint64_t(n_views)));  // 0..N-1
      for (int i = 0; i < n_views - 1; ++i) {
        int j = i + int(rng.below(uint64_t(n_views - i)));
        std::swap(views[size_t(i)], views[size_t(j)]);
      }
      keep = n_views - drop;
    }
    std::vector<int> active(views.begin(), views.begin() + keep);
    std::sort(active.begin(), active.end());

    std::vector<Tensor> images(size_t(n_views), Tensor{});
    for (int v : active) {
      optics::HdrImage processed =
          cfg.photometric_augment
              ? optics::augment(sample.hdr_views[size_t(v)], rng.next_u64())
              : optics::tonemap_neutral(sample.hdr_views[size_t(v)]);
      images[size_t(v)] = featvol::image_to_tensor(processed);
    }

    MapsPrediction pred = stack.forward(images, active);
    Loss2DTerms terms = loss_2d(pred, sample.gt_maps, cfg.loss);
    double loss = nn::scalar_of(terms.total);

    if (!std::isfinite(loss)) {
      if (!last_good.empty())
        for (auto& [name, var] : params.params) var->value = last_good.at(name);
      result.aborted_nan = true;
      break;
    }
    last_good.clear();
    for (const auto& [name, var] : params.params) last_good.emplace(name, var->value);

    adam.zero_grad(params);
    nn::backward(terms.total);
    double lr = cfg.lr * nn::schedule_multiplier(cfg.schedule, step, cfg.steps);
    adam.step(params, lr);

    result.loss_log.push_back(loss);
    if (step == 0) result.initial_loss = loss;
    result.final_loss = loss;
    result.steps_done = step + 1;
  }
  return result;
}

}  // namespace cloudtomo::layer2d
