#pragma once

#include <string>
#include <vector>

#include "flownet/io_json.hpp"

namespace flownet {

// Each command reads the inputs named in the config, writes its outputs under
// config.out_dir, and returns the list of files it wrote. Errors are thrown;
// run_cli maps them to exit codes and always leaves a manifest behind.
std::vector<std::string> cmd_netstats(const PipelineConfig& cfg);
std::vector<std::string> cmd_communities(const PipelineConfig& cfg);
std::vector<std::string> cmd_fit_stage1(const PipelineConfig& cfg);
std::vector<std::string> cmd_gof(const PipelineConfig& cfg);
std::vector<std::string> cmd_predict(const PipelineConfig& cfg);
std::vector<std::string> cmd_fit_stage2(const PipelineConfig& cfg);
std::vector<std::string> cmd_simulate(const PipelineConfig& cfg);
std::vector<std::string> cmd_recovery(const PipelineConfig& cfg);
std::vector<std::string> cmd_robustness(const PipelineConfig& cfg);
std::vector<std::string> cmd_pipeline(const PipelineConfig& cfg);

int run_cli(int argc, char** argv);

}  // namespace flownet
