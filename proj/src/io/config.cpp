#include "cloudtomo/io/config.hpp"

#include <fstream>

namespace cloudtomo::io {

nlohmann::json default_config_json() {
  return nlohmann::json{
      {"seed", 7},
      {"out_dir", "out"},
      {"grid",
       {{"origin", {0.0, 0.0, 0.0}}, {"dims", {200, 200, 160}}, {"voxel_size", {25.0, 25.0, 25.0}}}},
      {"sweep", {{"start_m", 400.0}, {"step_m", 200.0}, {"count", 18}}},
      {"rig",
       {{"path", ""},
        {"synthetic",
         {{"cameras", 6},
          {"image_width", 192},
          {"image_height", 144},
          {"focal_px", 160.0},
          {"radius_m", 3000.0},
          {"height_m", 2.0},
          {"look_at_height_m", 1200.0}}}}},
      {"scene",
       {{"coverage_target", 0.3},
        {"base_height_range_m", {700.0, 1400.0}},
        {"thickness_range_m", {150.0, 400.0}},
        {"peak_lwc_range", {1e-4, 1.5e-3}},
        {"cell_count_range", {1, 2}},
        {"radius_jitter_range", {0.75, 1.05}},
        {"frames", 20},
        {"frame_spacing_s", 15.0},
        {"advection_ms", {5.0, 0.0}}}},
      {"optics",
       {{"droplet_radius_m", 20e-6},
        {"water_density", 1000.0},
        {"q_scat", 2.0},
        {"march_step_m", 12.5}}},
      {"sun",
       {{"azimuth_deg", 135.0},
        {"elevation_deg", 55.0},
        {"sun_radiance", 50.0},
        {"sky_radiance", 1.0}}},
      {"render_png_previews", false},
      {"encoder", {{"hidden_channels", 16}, {"feature_channels", 16}, {"kernel", 5}}},
      {"adaln", {{"embed_dim", 32}, {"hidden_dim", 64}}},
      {"layer2d",
       {{"base_channels", 64},
        {"depth", 4},
        {"lwp_scale", 0.1},
        {"cbh_scale", 1000.0},
        {"dh_scale", 200.0}}},
      {"refiner", {{"width", 64}, {"blocks", 4}, {"heads", 4}, {"token_budget", 8192}}},
      {"train_stage1",
       {{"steps", 5000},
        {"lr", 3e-4},
        {"schedule", "cosine"},
        {"grad_clip", 1.0},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"weight_decay", 0.0},
        {"batch_size", 1},
        {"lambda_cbh", 0.1},
        {"lambda_dh", 0.1},
        {"occupancy_bce", true},
        {"view_dropping", true},
        {"photometric_augment", true},
        {"log_every", 50}}},
      {"train_stage2",
       {{"steps", 2000},
        {"lr", 1e-3},
        {"schedule", "constant"},
        {"grad_clip", 1.0},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"weight_decay", 0.0},
        {"batch_size", 1},
        {"crop", 24},
        {"log_every", 50}}},
      {"wind",
       {{"patch", 21},
        {"search", 16},
        {"min_ncc", 0.5},
        {"seeds", 25},
        {"slice_halfwidth", 2},
        {"frames_per_bucket", 20},
        {"bucket_s", 300.0},
        {"pixel_size_m", 25.0},
        {"level_stride", 4}}},
      {"eval",
       {{"radar_xy_m", {-1.0, -1.0}},
        {"bin_m", 30.0},
        {"tick_s", 30.0},
        {"figures", false},
        {"fig_dpi", 100},
        {"fig_width_in", 8.0},
        {"fig_height_in", 3.0}}},
  };
}

nlohmann::json demo_overrides_json() {
  return nlohmann::json{
      {"grid", {{"dims", {64, 64, 64}}}},
      {"rig",
       {{"synthetic",
         {{"cameras", 6},
          {"image_width", 96},
          {"image_height", 96},
          {"focal_px", 110.0},
          {"radius_m", 1250.0},
          {"height_m", 2.0},
          {"look_at_height_m", 800.0}}}}},
      {"scene",
       {{"coverage_target", 0.2},
        {"base_height_range_m", {500.0, 800.0}},
        {"thickness_range_m", {120.0, 250.0}},
        {"cell_count_range", {1, 3}},
        {"radius_jitter_range", {0.8, 1.2}}}},
      {"layer2d", {{"base_channels", 32}, {"depth", 3}}},
      {"encoder", {{"hidden_channels", 8}}},
      {"refiner", {{"token_budget", 16384}}},
      {"train_stage2", {{"crop", 20}}},
  };
}

namespace {

void check_known_keys(const nlohmann::json& provided, const nlohmann::json& schema,
                      const std::string& path) {
  if (!provided.is_object()) return;
  require(schema.is_object(), ErrorCode::config, "config field is not an object: " + path);
  for (auto it = provided.begin(); it != provided.end(); ++it) {
    std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    require(schema.contains(it.key()), ErrorCode::config, "unknown config key: " + key_path);
    if (it.value().is_object()) check_known_keys(it.value(), schema.at(it.key()), key_path);
  }
}

void deep_merge(nlohmann::json& base, const nlohmann::json& overrides) {
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

template <typename T>
std::pair<T, T> pair_of(const nlohmann::json& j) {
  return {j.at(0).get<T>(), j.at(1).get<T>()};
}

}  // namespace

nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& overrides) {
  nlohmann::json out = base;
  if (!overrides.is_null()) {
    require(overrides.is_object(), ErrorCode::config, "config overrides must be an object");
    check_known_keys(overrides, default_config_json(), "");
    deep_merge(out, overrides);
  }
  return out;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  check_known_keys(j, default_config_json(), "");
  PipelineConfig cfg;
  cfg.resolved = j;
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.out_dir = j.at("out_dir").get<std::string>();

  const auto& jg = j.at("grid");
  cfg.grid.origin = {jg.at("origin").at(0).get<double>(), jg.at("origin").at(1).get<double>(),
                     jg.at("origin").at(2).get<double>()};
  cfg.grid.nx = jg.at("dims").at(0).get<int>();
  cfg.grid.ny = jg.at("dims").at(1).get<int>();
  cfg.grid.nz = jg.at("dims").at(2).get<int>();
  cfg.grid.voxel = {jg.at("voxel_size").at(0).get<double>(),
                    jg.at("voxel_size").at(1).get<double>(),
                    jg.at("voxel_size").at(2).get<double>()};
  cfg.grid.validate();

  cfg.sweep_start_m = j.at("sweep").at("start_m").get<double>();
  cfg.sweep_step_m = j.at("sweep").at("step_m").get<double>();
  cfg.sweep_count = j.at("sweep").at("count").get<int>();
  cfg.sweep().validate();

  const auto& jr = j.at("rig");
  cfg.rig.path = jr.at("path").get<std::string>();
  const auto& js = jr.at("synthetic");
  cfg.rig.synthetic.cameras = js.at("cameras").get<int>();
  cfg.rig.synthetic.image_width = js.at("image_width").get<int>();
  cfg.rig.synthetic.image_height = js.at("image_height").get<int>();
  cfg.rig.synthetic.focal_px = js.at("focal_px").get<double>();
  cfg.rig.synthetic.radius_m = js.at("radius_m").get<double>();
  cfg.rig.synthetic.height_m = js.at("height_m").get<double>();
  cfg.rig.synthetic.look_at_height_m = js.at("look_at_height_m").get<double>();

  const auto& jsc = j.at("scene");
  cfg.scene.params.seed = cfg.seed;
  cfg.scene.params.coverage_target = jsc.at("coverage_target").get<double>();
  cfg.scene.params.base_height_range = pair_of<double>(jsc.at("base_height_range_m"));
  cfg.scene.params.thickness_range = pair_of<double>(jsc.at("thickness_range_m"));
  cfg.scene.params.peak_lwc_range = pair_of<double>(jsc.at("peak_lwc_range"));
  cfg.scene.params.cell_count_range = pair_of<int>(jsc.at("cell_count_range"));
  cfg.scene.params.radius_jitter_range = pair_of<double>(jsc.at("radius_jitter_range"));
  cfg.scene.params.validate();
  cfg.scene.frames = jsc.at("frames").get<int>();
  cfg.scene.frame_spacing_s = jsc.at("frame_spacing_s").get<double>();
  cfg.scene.advection_u = jsc.at("advection_ms").at(0).get<double>();
  cfg.scene.advection_v = jsc.at("advection_ms").at(1).get<double>();

  const auto& jo = j.at("optics");
  cfg.optics.droplet_radius = jo.at("droplet_radius_m").get<double>();
  cfg.optics.water_density = jo.at("water_density").get<double>();
  cfg.optics.q_scat = jo.at("q_scat").get<double>();
  cfg.optics.march_step = jo.at("march_step_m").get<double>();
  cfg.optics.validate();

  const auto& jsun = j.at("sun");
  cfg.sun.azimuth_deg = jsun.at("azimuth_deg").get<double>();
  cfg.sun.elevation_deg = jsun.at("elevation_deg").get<double>();
  cfg.sun.sun_radiance = jsun.at("sun_radiance").get<double>();
  cfg.sun.sky_radiance = jsun.at("sky_radiance").get<double>();
  cfg.render_png_previews = j.at("render_png_previews").get<bool>();

  const auto& je = j.at("encoder");
  cfg.encoder.hidden_channels = je.at("hidden_channels").get<int>();
  cfg.encoder.feature_channels = je.at("feature_channels").get<int>();
  cfg.encoder.kernel = je.at("kernel").get<int>();

  cfg.adaln.embed_dim = j.at("adaln").at("embed_dim").get<int>();
  cfg.adaln.hidden_dim = j.at("adaln").at("hidden_dim").get<int>();

  const auto& jl = j.at("layer2d");
  cfg.layer2d.base_channels = jl.at("base_channels").get<int>();
  cfg.layer2d.depth = jl.at("depth").get<int>();
  cfg.layer2d.lwp_scale = jl.at("lwp_scale").get<double>();
  cfg.layer2d.cbh_scale = jl.at("cbh_scale").get<double>();
  cfg.layer2d.dh_scale = jl.at("dh_scale").get<double>();

  const auto& jref = j.at("refiner");
  cfg.refiner.width = jref.at("width").get<int>();
  cfg.refiner.blocks = jref.at("blocks").get<int>();
  cfg.refiner.heads = jref.at("heads").get<int>();
  cfg.refiner.token_budget = jref.at("token_budget").get<int>();
  cfg.refiner.feature_channels = cfg.encoder.feature_channels;

  const auto& jt1 = j.at("train_stage1");
  cfg.train1.steps = jt1.at("steps").get<int>();
  require(cfg.train1.steps >= 0 && cfg.train1.steps <= 60000, ErrorCode::config,
          "train_stage1.steps must be in [0, 60000]");
  cfg.train1.lr = jt1.at("lr").get<double>();
  cfg.train1.schedule = jt1.at("schedule").get<std::string>();
  require(cfg.train1.schedule == "cosine" || cfg.train1.schedule == "constant",
          ErrorCode::config, "train_stage1.schedule must be cosine or constant");
  cfg.train1.grad_clip = jt1.at("grad_clip").get<double>();
  cfg.train1.beta1 = jt1.at("beta1").get<double>();
  cfg.train1.beta2 = jt1.at("beta2").get<double>();
  cfg.train1.weight_decay = jt1.at("weight_decay").get<double>();
  require(jt1.at("batch_size").get<int>() == 1, ErrorCode::config,
          "train_stage1.batch_size is fixed at 1");
  cfg.train1.loss.lambda_cbh = jt1.at("lambda_cbh").get<double>();
  cfg.train1.loss.lambda_dh = jt1.at("lambda_dh").get<double>();
  cfg.train1.loss.occupancy_bce = jt1.at("occupancy_bce").get<bool>();
  cfg.train1.view_dropping = jt1.at("view_dropping").get<bool>();
  cfg.train1.photometric_augment = jt1.at("photometric_augment").get<bool>();
  cfg.train1.log_every = jt1.at("log_every").get<int>();
  cfg.train1.seed = cfg.seed;

  const auto& jt2 = j.at("train_stage2");
  cfg.train2.steps = jt2.at("steps").get<int>();
  require(cfg.train2.steps >= 0 && cfg.train2.steps <= 30000, ErrorCode::config,
          "train_stage2.steps must be in [0, 30000]");
  cfg.train2.lr = jt2.at("lr").get<double>();
  cfg.train2.schedule = jt2.at("schedule").get<std::string>();
  require(cfg.train2.schedule == "cosine" || cfg.train2.schedule == "constant",
          ErrorCode::config, "train_stage2.schedule must be cosine or constant");
  cfg.train2.grad_clip = jt2.at("grad_clip").get<double>();
  cfg.train2.beta1 = jt2.at("beta1").get<double>();
  cfg.train2.beta2 = jt2.at("beta2").get<double>();
  cfg.train2.weight_decay = jt2.at("weight_decay").get<double>();
  require(jt2.at("batch_size").get<int>() == 1, ErrorCode::config,
          "train_stage2.batch_size is fixed at 1");
  cfg.train2.crop = jt2.at("crop").get<int>();
  cfg.train2.log_every = jt2.at("log_every").get<int>();
  cfg.train2.seed = cfg.seed;

  const auto& jw = j.at("wind");
  cfg.wind.params.track.patch = jw.at("patch").get<int>();
  cfg.wind.params.track.search = jw.at("search").get<int>();
  cfg.wind.params.track.min_ncc = jw.at("min_ncc").get<double>();
  cfg.wind.params.seeds = jw.at("seeds").get<int>();
  cfg.wind.params.halfwidth = jw.at("slice_halfwidth").get<int>();
  cfg.wind.params.frames_per_bucket = jw.at("frames_per_bucket").get<int>();
  cfg.wind.params.bucket_s = jw.at("bucket_s").get<double>();
  cfg.wind.params.pixel_size_m = jw.at("pixel_size_m").get<double>();
  cfg.wind.params.seed = cfg.seed;
  cfg.wind.level_stride = jw.at("level_stride").get<int>();

  const auto& jev = j.at("eval");
  cfg.eval.radar_x = jev.at("radar_xy_m").at(0).get<double>();
  cfg.eval.radar_y = jev.at("radar_xy_m").at(1).get<double>();
  cfg.eval.bin_m = jev.at("bin_m").get<double>();
  cfg.eval.tick_s = jev.at("tick_s").get<double>();
  cfg.eval.figures.enabled = jev.at("figures").get<bool>();
  cfg.eval.figures.dpi = jev.at("fig_dpi").get<int>();
  cfg.eval.figures.width_in = jev.at("fig_width_in").get<double>();
  cfg.eval.figures.height_in = jev.at("fig_height_in").get<double>();
  return cfg;
}

PipelineConfig load_config(const std::string& config_path, const nlohmann::json& overrides,
                           bool demo_defaults) {
  nlohmann::json base = default_config_json();
  if (demo_defaults) base = merge_config(base, demo_overrides_json());
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    require(in.good(), ErrorCode::io, "cannot read config: " + config_path);
    nlohmann::json file = nlohmann::json::parse(in, nullptr, false);
    require(!file.is_discarded(), ErrorCode::config, "config is not valid JSON: " + config_path);
    base = merge_config(base, file);
  }
  base = merge_config(base, overrides);
  return config_from_json(base);
}

}  // namespace cloudtomo::io
