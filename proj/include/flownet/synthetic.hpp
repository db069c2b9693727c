#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flownet/dyad_model.hpp"
#include "flownet/sampler.hpp"
#include "flownet/two_stage.hpp"

namespace flownet {

struct Stage2Truth {
    double intercept = 1.0;
    double xi = -0.012;                            // slope on the pairwise predicted transfers
    std::map<std::string, double> coefficients;    // by quality-design column name, original scale
    double sigma_u2 = 0.116;
    double sigma_eps2 = 0.074;
};

// Ground truth plus the covariate generation recipe for synthetic networks.
struct SyntheticTruth {
    int n_nodes = 145;
    std::uint64_t seed = 1;
    std::map<std::string, double> beta;  // by flow-design column name, original scale
    DyadCovarianceParams cov;

    int lha_count = 8;
    double mean_travel_minutes = 64.0;
    double geo_threshold_minutes = 30.0;
    double eta_clamp = 30.0;

    Stage2Truth stage2;
};

struct SimulatedStage1 {
    NodeTable nodes;
    DyadTable dyads;
    DirectedCountNetwork net;
    Eigen::MatrixXd true_fixed_mean;  // exp(x'beta) per ordered pair

    // Realized latent draws, row-aligned with the canonical ordered-pair
    // layout (useful for diagnostics against the implied moments).
    Eigen::VectorXd effects_a;
    Eigen::VectorXd effects_b;
    Eigen::VectorXd residuals_nu;
    std::vector<std::pair<int, int>> pair_rows;

    int clamp_saturated = 0;
    bool clamp_warning = false;  // set when > 0.1% of pairs hit the predictor clamp
};

SimulatedStage1 simulate_stage1(const SyntheticTruth& truth);

// Predicted transfers built from the simulation's own fixed-effect means;
// carries clean provenance by construction.
PredictedTransfers exogenous_transfers_from_truth(const SimulatedStage1& sim);

QualityMatrix simulate_stage2(const SyntheticTruth& truth, const PredictedTransfers& that, const NodeTable& nodes);

struct RecoveryParamReport {
    std::string name;
    double truth = 0.0;
    int covered = 0;
    int replicates = 0;
    double mean_bias = 0.0;
    double mean_ci_width = 0.0;
};

struct RecoveryReport {
    int replicates = 0;
    std::vector<RecoveryParamReport> params;
    // Range of per-block main-phase acceptance rates across replicates.
    std::map<std::string, double> min_acceptance;
    std::map<std::string, double> max_acceptance;

    const RecoveryParamReport& param(const std::string& name) const;
};

RecoveryReport recovery_experiment(const SyntheticTruth& truth, int replicates, const SrmSpec& spec,
                                   const McmcConfig& config, int threads = 1);

RecoveryReport recovery_experiment_stage2(const SyntheticTruth& truth, int replicates, const QualityModelSpec& spec,
                                          const McmcConfig& config, int threads = 1);

}  // namespace flownet
