#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flownet/dyad_model.hpp"
#include "flownet/network.hpp"
#include "flownet/sampler.hpp"
#include "flownet/synthetic.hpp"
#include "flownet/two_stage.hpp"

namespace flownet {

inline constexpr const char* kProjectVersion = "flownet 0.1.0";

// --- flat-file table interfaces -------------------------------------------

NodeTable read_node_table(const std::string& path);
void write_node_table(const NodeTable& table, const std::string& path);

DyadTable read_dyad_table(const std::string& path);  // src,dst,distance_minutes,co_membership
void write_dyad_table(const DyadTable& table, const std::string& path);

std::pair<std::vector<std::string>, std::vector<EdgeCount>> read_edge_list(const std::string& path);
void write_edge_list(const DirectedCountNetwork& net, const std::string& path);

// Square travel-time matrix with a node-id header row and column.
std::pair<std::vector<std::string>, Eigen::MatrixXd> read_travel_matrix(const std::string& path);
void write_travel_matrix(const std::vector<std::string>& ids, const Eigen::MatrixXd& minutes, const std::string& path);

std::string summary_csv(const std::vector<ParameterSummaryRow>& rows);

// --- run configuration ------------------------------------------------------

struct PipelineConfig {
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string out_dir = "out";
    std::map<std::string, std::string> inputs;  // nodes, dyads, edges, travel, coordinates
    SrmSpec srm_spec;
    QualityModelSpec quality_spec;
    McmcConfig mcmc;
    bool emit_draws = false;
    std::vector<std::string> heatmap_filters = {"public-public", "private-private"};
    std::vector<double> thresholds_minutes = {20.0, 30.0, 40.0};
    double geo_threshold_minutes = 30.0;
    std::optional<SyntheticTruth> synthetic;
    bool synthetic_seed_explicit = false;
    int recovery_replicates = 20;
    int recovery_stage = 1;

    std::string config_hash;  // FNV-1a over the canonical JSON dump

    std::string input_path(const std::string& name) const;  // throws InputError when absent
    bool has_input(const std::string& name) const { return inputs.count(name) > 0; }
};

PipelineConfig parse_pipeline_config(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);

SyntheticTruth parse_synthetic_truth(const nlohmann::json& j, std::uint64_t default_seed);

// --- posterior draw persistence ---------------------------------------------

void write_stage1_outputs(const PosteriorSamples& samples, const DyadDesign& design, const std::string& out_dir,
                          bool emit_draws);
PosteriorSamples load_stage1_samples(const std::string& out_dir, const DyadDesign& design);

void write_predicted_transfers(const PredictedTransfers& that, const std::string& out_dir);
PredictedTransfers load_predicted_transfers(const std::string& out_dir);

// --- run manifest -------------------------------------------------------------

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string version = kProjectVersion;
    std::string compiler;
    double wall_time_seconds = 0.0;
    std::string status = "ok";  // ok | refused | input_error | numeric_error
    std::string message;
    std::vector<std::string> outputs;
};

void write_manifest(const RunManifest& manifest, const std::string& out_dir);

std::string fnv1a_hex(const std::string& text);

}  // namespace flownet
