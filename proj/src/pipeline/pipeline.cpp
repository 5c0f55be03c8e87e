#include "cloudtomo/pipeline/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cloudtomo/io/checkpoint.hpp"
#include "cloudtomo/io/gridfile.hpp"
#include "cloudtomo/io/image_io.hpp"
#include "cloudtomo/io/rig_io.hpp"
#include "cloudtomo/io/sha256.hpp"
#include "cloudtomo/refine3d/train2.hpp"

namespace cloudtomo::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string config_hash(const io::PipelineConfig& cfg) {
  std::string s = cfg.resolved.dump();
  return io::Sha256::of_bytes(s.data(), s.size());
}

std::string frame_name(int f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.grid", f);
  return buf;
}

std::string view_name(int f, int v, const char* ext) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "f%04d_v%02d.%s", f, v, ext);
  return buf;
}

json read_json_file(const std::string& path, const std::string& stage_hint) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::dependency,
          "missing artifact " + path + "; run `" + stage_hint + "` first");
  json j = json::parse(in, nullptr, false);
  require(!j.is_discarded(), ErrorCode::corrupt_file, "not valid JSON: " + path);
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path);
  out << "step,loss\n";
  for (size_t i = 0; i < losses.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof(line), "%zu,%.9g\n", i, losses[i]);
    out << line;
  }
}

struct LoadedScene {
  cloudgen::SceneSequence seq;
  json manifest;
};

LoadedScene load_scene(const io::PipelineConfig& cfg) {
  std::string dir = cfg.out_dir + "/scenes";
  LoadedScene scene;
  scene.manifest = read_json_file(dir + "/manifest.json", "gen");
  scene.seq.advection_u = scene.manifest.at("advection").at(0).get<double>();
  scene.seq.advection_v = scene.manifest.at("advection").at(1).get<double>();
  scene.seq.timestamps = scene.manifest.at("timestamps").get<std::vector<double>>();
  for (const auto& name : scene.manifest.at("frames"))
    scene.seq.frames.push_back(io::read_grid(dir + "/" + name.get<std::string>()).grid);
  scene.seq.validate();
  return scene;
}

struct Stage1Stack {
  nn::ParamStore params;
  layer2d::CloudLayerStack stack;

  Stage1Stack(const io::PipelineConfig& cfg, const Rig& rig) : params(cfg.seed) {
    stack.rig = rig;
    stack.sweep = cfg.sweep();
    stack.spec = cfg.grid;
    stack.encoder = featvol::ImageEncoder(params, cfg.encoder);
    stack.conditioner =
        featvol::HeightConditioner(params, cfg.adaln, cfg.encoder.feature_channels);
    layer2d::Layer2DConfig l2 = cfg.layer2d;
    l2.in_channels = cfg.sweep_count * cfg.encoder.feature_channels + 1;
    stack.omega = layer2d::Layer2DModel(params, l2);
  }
};

json arch_meta(const io::PipelineConfig& cfg) {
  return json{{"encoder", cfg.resolved.at("encoder")},
              {"adaln", cfg.resolved.at("adaln")},
              {"layer2d", cfg.resolved.at("layer2d")},
              {"refiner", cfg.resolved.at("refiner")},
              {"sweep", cfg.resolved.at("sweep")},
              {"grid", cfg.resolved.at("grid")}};
}

// Shared by train-refine and infer: neutral-tonemapped view tensors.
std::vector<nn::Tensor> load_view_tensors(const io::PipelineConfig& cfg, const json& renders,
                                          int frame) {
  std::vector<nn::Tensor> tensors;
  for (const auto& name : renders.at("files").at(size_t(frame))) {
    optics::HdrImage hdr =
        io::read_pfm(cfg.out_dir + "/renders/" + name.get<std::string>());
    tensors.push_back(featvol::image_to_tensor(optics::tonemap_neutral(hdr)));
  }
  return tensors;
}

std::vector<int> all_views(const Rig& rig) {
  std::vector<int> v(size_t(rig.size()));
  for (int i = 0; i < rig.size(); ++i) v[size_t(i)] = i;
  return v;
}

std::vector<nn::Tensor> encoder_features(const Stage1Stack& s1,
                                         const std::vector<nn::Tensor>& views) {
  std::vector<nn::Tensor> feats;
  for (const auto& img : views)
    feats.push_back(s1.stack.encoder.forward(nn::make_constant(img))->value);
  return feats;
}

}  // namespace

Rig make_inward_rig(const io::RigSynthetic& cfg, const GridSpec& spec) {
  require(cfg.cameras >= 1, ErrorCode::config, "synthetic rig needs >= 1 camera");
  const double cx = spec.origin.x + 0.5 * spec.extent_x();
  const double cy = spec.origin.y + 0.5 * spec.extent_y();
  Rig rig;
  for (int k = 0; k < cfg.cameras; ++k) {
    double angle = 2.0 * 3.14159265358979323846 * double(k) / double(cfg.cameras);
    Vec3 pos{cx + cfg.radius_m * std::cos(angle), cy + cfg.radius_m * std::sin(angle),
             cfg.height_m};
    Vec3 target{cx, cy, cfg.look_at_height_m};
    Vec3 fwd = (target - pos).normalized();
    Vec3 up{0, 0, 1};
    Vec3 right = fwd.cross(up);
    if (right.norm() < 1e-9) right = Vec3{1, 0, 0};
    right = right.normalized();
    Vec3 down = fwd.cross(right);

    CameraModel cam;
    for (int c = 0; c < 3; ++c) {
      cam.R(0, c) = (c == 0 ? right.x : c == 1 ? right.y : right.z);
      cam.R(1, c) = (c == 0 ? down.x : c == 1 ? down.y : down.z);
      cam.R(2, c) = (c == 0 ? fwd.x : c == 1 ? fwd.y : fwd.z);
    }
    cam.t = cam.R * (Vec3{0, 0, 0} - pos);
    cam.K = Mat3::identity();
    cam.K(0, 0) = cfg.focal_px;
    cam.K(1, 1) = cfg.focal_px;
    cam.K(0, 2) = 0.5 * (cfg.image_width - 1);
    cam.K(1, 2) = 0.5 * (cfg.image_height - 1);
    cam.width = cfg.image_width;
    cam.height = cfg.image_height;
    rig.cameras.push_back(cam);
  }
  rig.validate_against(spec);
  return rig;
}

Rig build_rig(const io::PipelineConfig& cfg) {
  if (!cfg.rig.path.empty()) return io::read_rig(cfg.rig.path);
  return make_inward_rig(cfg.rig.synthetic, cfg.grid);
}

void cmd_gen(const io::PipelineConfig& cfg) {
  std::string dir = cfg.out_dir + "/scenes";
  fs::create_directories(dir);

  Rig rig = build_rig(cfg);
  io::write_rig(cfg.out_dir + "/rig.json", rig);

  cloudgen::GenerationDiag diag;
  LwcGrid first = cloudgen::generate_scene(cfg.scene.params, cfg.grid, &diag);
  cloudgen::SceneSequence seq =
      cloudgen::make_sequence(first, cfg.scene.advection_u, cfg.scene.advection_v,
                              cfg.scene.frames, cfg.scene.frame_spacing_s);

  const std::string cfg_hash = config_hash(cfg);
  json frames = json::array(), hashes = json::array();
  for (int f = 0; f < seq.size(); ++f) {
    std::string name = frame_name(f);
    json meta{{"inputs", {{"config", cfg_hash}}},
              {"timestamp_s", seq.timestamps[size_t(f)]},
              {"scene_seed", cfg.scene.params.seed}};
    io::write_grid(dir + "/" + name, seq.frames[size_t(f)], meta);
    frames.push_back(name);
    hashes.push_back(io::Sha256::of_file(dir + "/" + name));
  }
  json manifest{{"seed", cfg.scene.params.seed},
                {"params", cfg.resolved.at("scene")},
                {"advection", {cfg.scene.advection_u, cfg.scene.advection_v}},
                {"timestamps", seq.timestamps},
                {"frames", frames},
                {"frame_sha256", hashes},
                {"achieved_coverage", diag.achieved_coverage},
                {"inputs", {{"config", cfg_hash}}}};
  write_json_file(dir + "/manifest.json", manifest);
}

void cmd_render(const io::PipelineConfig& cfg) {
  Rig rig = io::read_rig(cfg.out_dir + "/rig.json");
  LoadedScene scene = load_scene(cfg);
  std::string dir = cfg.out_dir + "/renders";
  fs::create_directories(dir);

  optics::SunModel sun = optics::SunModel::from_angles(cfg.sun.azimuth_deg, cfg.sun.elevation_deg,
                                                       cfg.sun.sky_radiance, cfg.sun.sun_radiance);

  json files = json::array(), warn = json::array();
  for (int f = 0; f < scene.seq.size(); ++f) {
    optics::ExtinctionGrid ext = optics::lwc_to_extinction(scene.seq.frames[size_t(f)], cfg.optics);
    json row = json::array();
    for (int v = 0; v < rig.size(); ++v) {
      optics::RenderResult r = optics::render(rig.cameras[size_t(v)], ext, sun, cfg.optics);
      std::string name = view_name(f, v, "pfm");
      io::write_pfm(dir + "/" + name, r.image);
      if (cfg.render_png_previews)
        io::write_png_rgb8(dir + "/" + view_name(f, v, "png"), optics::tonemap_neutral(r.image));
      row.push_back(name);
      if (r.camera_in_cloud) warn.push_back({{"frame", f}, {"view", v}});
    }
    files.push_back(row);
  }
  json manifest{{"files", files},
                {"timestamps", scene.seq.timestamps},
                {"camera_in_cloud", warn},
                {"inputs",
                 {{"config", config_hash(cfg)},
                  {"rig.json", io::Sha256::of_file(cfg.out_dir + "/rig.json")},
                  {"scenes/manifest.json",
                   io::Sha256::of_file(cfg.out_dir + "/scenes/manifest.json")}}}};
  write_json_file(dir + "/manifest.json", manifest);
}

void cmd_train_layer(const io::PipelineConfig& cfg) {
  Rig rig = io::read_rig(cfg.out_dir + "/rig.json");
  LoadedScene scene = load_scene(cfg);
  json renders = read_json_file(cfg.out_dir + "/renders/manifest.json", "render");

  std::vector<layer2d::Stage1Sample> samples;
  for (int f = 0; f < scene.seq.size(); ++f) {
    layer2d::Stage1Sample s;
    for (const auto& name : renders.at("files").at(size_t(f)))
      s.hdr_views.push_back(io::read_pfm(cfg.out_dir + "/renders/" + name.get<std::string>()));
    s.gt_maps = cloudgen::derive_maps(scene.seq.frames[size_t(f)]);
    samples.push_back(std::move(s));
  }

  Stage1Stack s1(cfg, rig);
  layer2d::Stage1Result result = layer2d::train_stage1(s1.stack, s1.params, samples, cfg.train1);

  fs::create_directories(cfg.out_dir + "/checkpoints");
  fs::create_directories(cfg.out_dir + "/logs");
  json meta{{"stage", 1},
            {"step", result.steps_done},
            {"seed", cfg.seed},
            {"arch", arch_meta(cfg)},
            {"inputs",
             {{"config", config_hash(cfg)},
              {"renders/manifest.json",
               io::Sha256::of_file(cfg.out_dir + "/renders/manifest.json")}}}};
  io::write_checkpoint(cfg.out_dir + "/checkpoints/layer.ckpt",
                       io::checkpoint_from_store(s1.params, meta));
  write_loss_csv(cfg.out_dir + "/logs/stage1_loss.csv", result.loss_log);
  write_json_file(cfg.out_dir + "/logs/stage1_result.json",
                  json{{"initial_loss", result.initial_loss},
                       {"final_loss", result.final_loss},
                       {"steps", result.steps_done},
                       {"aborted_nan", result.aborted_nan}});
  require(!result.aborted_nan, ErrorCode::runtime,
          "stage-1 training diverged; last finite-loss checkpoint written");
}

void cmd_train_refine(const io::PipelineConfig& cfg) {
  require(fs::exists(cfg.out_dir + "/checkpoints/layer.ckpt"), ErrorCode::dependency,
          "missing stage-1 checkpoint; run `train-layer` first");
  Rig rig = io::read_rig(cfg.out_dir + "/rig.json");
  LoadedScene scene = load_scene(cfg);
  json renders = read_json_file(cfg.out_dir + "/renders/manifest.json", "render");

  Stage1Stack s1(cfg, rig);
  io::load_into_store(io::read_checkpoint(cfg.out_dir + "/checkpoints/layer.ckpt"), s1.params);

  std::vector<int> active = all_views(rig);
  std::vector<refine3d::Stage2Frame> frames;
  for (int f = 0; f < scene.seq.size(); ++f) {
    auto views = load_view_tensors(cfg, renders, f);
    layer2d::MapsPrediction pred = s1.stack.forward(views, active);
    CloudMaps2p5D maps = layer2d::prediction_to_maps(pred, cfg.grid);
    auto feats = encoder_features(s1, views);
    refine3d::Stage2Frame frame = refine3d::make_stage2_frame(
        maps, scene.seq.frames[size_t(f)], feats, active, rig, cfg.refiner.token_budget);
    if (frame.sparse.count() > 0) frames.push_back(std::move(frame));
  }
  require(!frames.empty(), ErrorCode::runtime,
          "stage-1 predictions contain no occupied columns; nothing to refine");

  nn::ParamStore refine_params(cfg.seed);
  refine3d::RefineModel model(refine_params, cfg.refiner);
  refine3d::Stage2Result result =
      refine3d::train_stage2(model, refine_params, frames, cfg.train2);

  json meta{{"stage", 2},
            {"step", result.steps_done},
            {"seed", cfg.seed},
            {"arch", arch_meta(cfg)},
            {"inputs",
             {{"config", config_hash(cfg)},
              {"layer.ckpt", io::Sha256::of_file(cfg.out_dir + "/checkpoints/layer.ckpt")}}}};
  io::write_checkpoint(cfg.out_dir + "/checkpoints/refine.ckpt",
                       io::checkpoint_from_store(refine_params, meta));
  write_loss_csv(cfg.out_dir + "/logs/stage2_loss.csv", result.loss_log);
  write_json_file(cfg.out_dir + "/logs/stage2_result.json",
                  json{{"initial_loss", result.initial_loss},
                       {"final_loss", result.final_loss},
                       {"steps", result.steps_done},
                       {"aborted_nan", result.aborted_nan}});
  require(!result.aborted_nan, ErrorCode::runtime,
          "stage-2 training diverged; last finite-loss checkpoint written");
}

void cmd_infer(const io::PipelineConfig& cfg) {
  require(fs::exists(cfg.out_dir + "/checkpoints/layer.ckpt"), ErrorCode::dependency,
          "missing stage-1 checkpoint; run `train-layer` first");
  require(fs::exists(cfg.out_dir + "/checkpoints/refine.ckpt"), ErrorCode::dependency,
          "missing refiner checkpoint; run `train-refine` first");
  Rig rig = io::read_rig(cfg.out_dir + "/rig.json");
  json renders = read_json_file(cfg.out_dir + "/renders/manifest.json", "render");

  Stage1Stack s1(cfg, rig);
  io::load_into_store(io::read_checkpoint(cfg.out_dir + "/checkpoints/layer.ckpt"), s1.params);
  nn::ParamStore refine_params(cfg.seed);
  refine3d::RefineModel model(refine_params, cfg.refiner);
  io::load_into_store(io::read_checkpoint(cfg.out_dir + "/checkpoints/refine.ckpt"),
                      refine_params);

  std::string dir = cfg.out_dir + "/recon";
  fs::create_directories(dir);
  json inputs{{"config", config_hash(cfg)},
              {"layer.ckpt", io::Sha256::of_file(cfg.out_dir + "/checkpoints/layer.ckpt")},
              {"refine.ckpt", io::Sha256::of_file(cfg.out_dir + "/checkpoints/refine.ckpt")},
              {"renders/manifest.json",
               io::Sha256::of_file(cfg.out_dir + "/renders/manifest.json")}};

  std::vector<int> active = all_views(rig);
  const int n_frames = int(renders.at("files").size());
  json frames = json::array(), init_frames = json::array();
  for (int f = 0; f < n_frames; ++f) {
    auto views = load_view_tensors(cfg, renders, f);
    layer2d::MapsPrediction pred = s1.stack.forward(views, active);
    CloudMaps2p5D maps = layer2d::prediction_to_maps(pred, cfg.grid);
    refine3d::LiftDiagnostics diag;
    LwcGrid init = refine3d::lift_to_3d(maps, cfg.grid, &diag);
    auto feats = encoder_features(s1, views);
    refine3d::SparseVoxelSet sparse =
        refine3d::extract_sparse(init, feats, active, rig, cfg.refiner.token_budget);
    LwcGrid final = refine3d::refine(model, sparse, maps, cfg.grid);

    json meta{{"inputs", inputs},
              {"frame", f},
              {"lift_diag",
               {{"nonpositive_dh", diag.dropped_nonpositive_dh},
                {"empty_interval", diag.dropped_empty_interval}}}};
    std::string name = frame_name(f);
    io::write_grid(dir + "/" + name, final, meta);
    std::string init_name = "init_" + name;
    meta["baseline"] = true;
    io::write_grid(dir + "/" + init_name, init, meta);
    frames.push_back(name);
    init_frames.push_back(init_name);
  }
  write_json_file(dir + "/manifest.json",
                  json{{"frames", frames},
                       {"init_frames", init_frames},
                       {"timestamps", renders.at("timestamps")},
                       {"inputs", inputs}});
}

namespace {

cloudgen::SceneSequence load_recon(const io::PipelineConfig& cfg, const char* key,
                                   json* manifest_out = nullptr) {
  json manifest = read_json_file(cfg.out_dir + "/recon/manifest.json", "infer");
  cloudgen::SceneSequence seq;
  seq.timestamps = manifest.at("timestamps").get<std::vector<double>>();
  for (const auto& name : manifest.at(key))
    seq.frames.push_back(io::read_grid(cfg.out_dir + "/recon/" + name.get<std::string>()).grid);
  seq.validate();
  if (manifest_out) *manifest_out = manifest;
  return seq;
}

}  // namespace

void cmd_wind(const io::PipelineConfig& cfg) {
  cloudgen::SceneSequence recon = load_recon(cfg, "frames");
  fs::create_directories(cfg.out_dir + "/wind");

  std::vector<const LwcGrid*> grids;
  for (const auto& g : recon.frames) grids.push_back(&g);
  std::vector<int> levels;
  for (int z = cfg.wind.params.halfwidth; z + cfg.wind.params.halfwidth < cfg.grid.nz;
       z += cfg.wind.level_stride)
    levels.push_back(z);

  wind::WindProfile profile =
      wind::retrieve_wind(grids, recon.timestamps, levels, cfg.wind.params);
  wind::write_wind_csv(cfg.out_dir + "/wind/profile.csv", profile);

  json buckets = json::array();
  for (const auto& b : profile.buckets) {
    json jb{{"level", b.level},
            {"height_m", b.height_m},
            {"bucket_start_s", b.bucket_start_s},
            {"n_tracks", b.n_tracks}};
    if (b.wind) {
      jb["u_ms"] = b.wind->u;
      jb["v_ms"] = b.wind->v;
      jb["speed_ms"] = std::hypot(b.wind->u, b.wind->v);
      jb["bearing_deg"] = wind::bearing_deg(b.wind->u, b.wind->v);
    }
    buckets.push_back(jb);
  }
  write_json_file(cfg.out_dir + "/wind/summary.json",
                  json{{"buckets", buckets},
                       {"inputs",
                        {{"config", config_hash(cfg)},
                         {"recon/manifest.json",
                          io::Sha256::of_file(cfg.out_dir + "/recon/manifest.json")}}}});
}

void cmd_eval(const io::PipelineConfig& cfg) {
  LoadedScene truth = load_scene(cfg);
  cloudgen::SceneSequence pred = load_recon(cfg, "frames");
  cloudgen::SceneSequence init = load_recon(cfg, "init_frames");
  require(pred.size() == truth.seq.size(), ErrorCode::invalid_argument,
          "eval: reconstruction/truth frame count mismatch");

  double rx = cfg.eval.radar_x, ry = cfg.eval.radar_y;
  if (rx < 0) rx = cfg.grid.origin.x + 0.5 * cfg.grid.extent_x();
  if (ry < 0) ry = cfg.grid.origin.y + 0.5 * cfg.grid.extent_y();

  evalbench::RadarSeries radar_truth =
      evalbench::simulate_radar(truth.seq, rx, ry, cfg.eval.bin_m, cfg.eval.tick_s);
  evalbench::RadarSeries radar_pred =
      evalbench::simulate_radar(pred, rx, ry, cfg.eval.bin_m, cfg.eval.tick_s);
  evalbench::MetricsReport radar_report = evalbench::column_metrics(radar_pred, radar_truth);
  evalbench::emit_report(radar_report, radar_pred, radar_truth, cfg.out_dir + "/eval",
                         cfg.eval.figures);

  // Full-grid column metrics and the L1 comparison against the unrefined
  // baseline, averaged over frames.
  double f1 = 0, cbh = 0, lwp_cloudy = 0, lwp_all = 0, mean_cloudy = 0, prec = 0, rec = 0;
  double l3d_refined = 0, l3d_baseline = 0;
  int64_t both = 0;
  for (int f = 0; f < truth.seq.size(); ++f) {
    CloudMaps2p5D gt_maps = cloudgen::derive_maps(truth.seq.frames[size_t(f)]);
    CloudMaps2p5D pr_maps = cloudgen::derive_maps(pred.frames[size_t(f)]);
    evalbench::MapMetrics m = evalbench::map_metrics(pr_maps, gt_maps);
    f1 += m.occ_f1;
    prec += m.occ_precision;
    rec += m.occ_recall;
    cbh += m.mae_cbh;
    lwp_cloudy += m.mae_lwp_cloudy;
    lwp_all += m.mae_lwp_all;
    mean_cloudy += m.mean_cloudy_lwp;
    both += m.n_both_occupied;
    l3d_refined += refine3d::loss_3d(pred.frames[size_t(f)], truth.seq.frames[size_t(f)]);
    l3d_baseline += refine3d::loss_3d(init.frames[size_t(f)], truth.seq.frames[size_t(f)]);
  }
  const double n = double(truth.seq.size());
  json map_json{{"occ_f1", f1 / n},
                {"occ_precision", prec / n},
                {"occ_recall", rec / n},
                {"mae_cbh_m", cbh / n},
                {"mae_lwp_cloudy_kg_m2", lwp_cloudy / n},
                {"mae_lwp_all_kg_m2", lwp_all / n},
                {"mean_cloudy_lwp_kg_m2", mean_cloudy / n},
                {"n_both_occupied", both},
                {"l3d_refined", l3d_refined / n},
                {"l3d_baseline", l3d_baseline / n},
                {"frames", truth.seq.size()},
                {"inputs",
                 {{"config", config_hash(cfg)},
                  {"scenes/manifest.json",
                   io::Sha256::of_file(cfg.out_dir + "/scenes/manifest.json")},
                  {"recon/manifest.json",
                   io::Sha256::of_file(cfg.out_dir + "/recon/manifest.json")}}}};
  write_json_file(cfg.out_dir + "/eval/map_metrics.json", map_json);
}

void cmd_demo(const io::PipelineConfig& cfg) {
  using clock = std::chrono::steady_clock;
  json timings;
  auto timed = [&](const char* name, auto&& fn) {
    auto start = clock::now();
    fn();
    timings[name] = std::chrono::duration<double>(clock::now() - start).count();
  };
  timed("gen", [&] { cmd_gen(cfg); });
  timed("render", [&] { cmd_render(cfg); });
  timed("train_layer", [&] { cmd_train_layer(cfg); });
  timed("train_refine", [&] { cmd_train_refine(cfg); });
  timed("infer", [&] { cmd_infer(cfg); });
  timed("wind", [&] { cmd_wind(cfg); });
  timed("eval", [&] { cmd_eval(cfg); });

  json stage1 = read_json_file(cfg.out_dir + "/logs/stage1_result.json", "train-layer");
  json map_metrics = read_json_file(cfg.out_dir + "/eval/map_metrics.json", "eval");
  json wind_summary = read_json_file(cfg.out_dir + "/wind/summary.json", "wind");

  // Median-of-medians across cloud-bearing levels for the wind check.
  std::vector<double> us, vs;
  for (const auto& b : wind_summary.at("buckets"))
    if (b.contains("u_ms")) {
      us.push_back(b.at("u_ms").get<double>());
      vs.push_back(b.at("v_ms").get<double>());
    }
  auto median = [](std::vector<double> v) -> json {
    if (v.empty()) return nullptr;
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  double ratio = stage1.at("initial_loss").get<double>() > 0
                     ? stage1.at("final_loss").get<double>() / stage1.at("initial_loss").get<double>()
                     : 0.0;
  json summary{
      {"stage1",
       {{"initial_loss", stage1.at("initial_loss")},
        {"final_loss", stage1.at("final_loss")},
        {"loss_ratio", ratio}}},
      {"reconstruction",
       {{"occ_f1", map_metrics.at("occ_f1")},
        {"mae_cbh_m", map_metrics.at("mae_cbh_m")},
        {"l3d_refined", map_metrics.at("l3d_refined")},
        {"l3d_baseline", map_metrics.at("l3d_baseline")}}},
      {"wind",
       {{"true_advection", {cfg.scene.advection_u, cfg.scene.advection_v}},
        {"median_u_ms", median(us)},
        {"median_v_ms", median(vs)}}},
      {"timings_s", timings}};
  write_json_file(cfg.out_dir + "/demo_summary.json", summary);
}

void run_command(const io::PipelineConfig& cfg, const std::string& name) {
  if (name == "gen") return cmd_gen(cfg);
  if (name == "render") return cmd_render(cfg);
  if (name == "train-layer") return cmd_train_layer(cfg);
  if (name == "train-refine") return cmd_train_refine(cfg);
  if (name == "infer") return cmd_infer(cfg);
  if (name == "wind") return cmd_wind(cfg);
  if (name == "eval") return cmd_eval(cfg);
  if (name == "demo") return cmd_demo(cfg);
  fail(ErrorCode::invalid_argument, "unknown command: " + name);
}

}  // namespace cloudtomo::pipeline
