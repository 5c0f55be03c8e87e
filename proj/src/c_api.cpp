#include "cloudtomo/c_api.h"

#include <string>
#include <vector>

#include "cloudtomo/io/gridfile.hpp"
#include "cloudtomo/pipeline/pipeline.hpp"

using namespace cloudtomo;

struct ctomo_pipeline {
  io::PipelineConfig config;
  std::string config_json;
};

struct ctomo_grid {
  GridSpec spec;
  std::vector<float> data;
};

namespace {

thread_local std::string t_last_error;

ctomo_status set_error(const Error& e) {
  t_last_error = e.what();
  return ctomo_status(int(e.code()));
}

ctomo_status set_error(const std::exception& e) {
  t_last_error = e.what();
  return CTOMO_ERR_RUNTIME;
}

template <typename Fn>
ctomo_status guarded(Fn&& fn) {
  try {
    t_last_error.clear();
    fn();
    return CTOMO_OK;
  } catch (const Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

}  // namespace

extern "C" {

const char* ctomo_version(void) { return "1.0.0"; }

const char* ctomo_last_error(void) { return t_last_error.c_str(); }

const char* ctomo_default_config_json(void) {
  static const std::string json = io::default_config_json().dump(2);
  return json.c_str();
}

const char* ctomo_demo_overrides_json(void) {
  static const std::string json = io::demo_overrides_json().dump(2);
  return json.c_str();
}

ctomo_status ctomo_pipeline_create(const char* config_path, const char* overrides_json,
                                   int flags, ctomo_pipeline** out) {
  if (!out) {
    t_last_error = "out must not be null";
    return CTOMO_ERR_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] {
    nlohmann::json overrides;
    if (overrides_json && overrides_json[0]) {
      overrides = nlohmann::json::parse(overrides_json, nullptr, false);
      require(!overrides.is_discarded(), ErrorCode::config,
              "overrides are not valid JSON");
    }
    auto handle = std::make_unique<ctomo_pipeline>();
    handle->config = io::load_config(config_path ? config_path : "", overrides,
                                     (flags & CTOMO_CREATE_DEMO_BASE) != 0);
    handle->config_json = handle->config.resolved.dump(2);
    *out = handle.release();
  });
}

void ctomo_pipeline_destroy(ctomo_pipeline* pipeline) { delete pipeline; }

const char* ctomo_pipeline_config_json(const ctomo_pipeline* pipeline) {
  return pipeline ? pipeline->config_json.c_str() : "";
}

ctomo_status ctomo_pipeline_run(ctomo_pipeline* pipeline, const char* command) {
  if (!pipeline || !command) {
    t_last_error = "pipeline and command must not be null";
    return CTOMO_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] { pipeline::run_command(pipeline->config, command); });
}

ctomo_status ctomo_grid_read(const char* path, ctomo_grid** out) {
  if (!path || !out) {
    t_last_error = "path and out must not be null";
    return CTOMO_ERR_INVALID_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] {
    io::GridFile gf = io::read_grid(path);
    auto handle = std::make_unique<ctomo_grid>();
    handle->spec = gf.grid.spec;
    handle->data.assign(gf.grid.rho.begin(), gf.grid.rho.end());
    *out = handle.release();
  });
}

void ctomo_grid_destroy(ctomo_grid* grid) { delete grid; }

ctomo_status ctomo_grid_dims(const ctomo_grid* grid, int32_t dims[3]) {
  if (!grid || !dims) {
    t_last_error = "grid and dims must not be null";
    return CTOMO_ERR_INVALID_ARGUMENT;
  }
  dims[0] = grid->spec.nx;
  dims[1] = grid->spec.ny;
  dims[2] = grid->spec.nz;
  return CTOMO_OK;
}

ctomo_status ctomo_grid_voxel_size(const ctomo_grid* grid, double voxel[3]) {
  if (!grid || !voxel) {
    t_last_error = "grid and voxel must not be null";
    return CTOMO_ERR_INVALID_ARGUMENT;
  }
  voxel[0] = grid->spec.voxel.x;
  voxel[1] = grid->spec.voxel.y;
  voxel[2] = grid->spec.voxel.z;
  return CTOMO_OK;
}

const float* ctomo_grid_data(const ctomo_grid* grid) { return grid ? grid->data.data() : nullptr; }

}  // extern "C"
