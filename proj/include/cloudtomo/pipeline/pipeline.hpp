#pragma once

#include "cloudtomo/io/config.hpp"

namespace cloudtomo::pipeline {

// Inward-looking camera ring around the grid center.
Rig make_inward_rig(const io::RigSynthetic& cfg, const GridSpec& spec);
// Synthetic ring, or the rig file named in the config.
Rig build_rig(const io::PipelineConfig& cfg);

// Each command is idempotent for a fixed (config, seed): outputs are
// overwritten deterministically. Missing stage artifacts raise
// ErrorCode::dependency naming the stage to run first.
void cmd_gen(const io::PipelineConfig& cfg);
void cmd_render(const io::PipelineConfig& cfg);
void cmd_train_layer(const io::PipelineConfig& cfg);
void cmd_train_refine(const io::PipelineConfig& cfg);
void cmd_infer(const io::PipelineConfig& cfg);
void cmd_wind(const io::PipelineConfig& cfg);
void cmd_eval(const io::PipelineConfig& cfg);
void cmd_demo(const io::PipelineConfig& cfg);

void run_command(const io::PipelineConfig& cfg, const std::string& name);

}  // namespace cloudtomo::pipeline
