#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flownet/dyad_model.hpp"
#include "flownet/sampler.hpp"

namespace flownet {

struct TransferProvenance {
    bool include_quality = true;     // must be false for stage-2 use
    bool effects_excluded = false;   // must be true for stage-2 use
    std::vector<std::string> excluded_covariates;
};

// Exogenous predicted flows: posterior mean of exp(x'beta), no random effects.
struct PredictedTransfers {
    std::vector<std::string> node_ids;
    Eigen::MatrixXd matrix;  // N x N, zero diagonal, positive off-diagonal
    TransferProvenance provenance;
};

// Refuses (ProvenanceError) when the stage-1 fit included quality covariates.
PredictedTransfers predict_transfers(const PosteriorSamples& stage1, const DyadDesign& design);

// Symmetric pairwise outcome W_ij = W_i + W_j from per-node adverse-outcome counts.
struct QualityMatrix {
    std::vector<std::string> node_ids;
    Eigen::MatrixXd w;  // symmetric, zero diagonal

    int size() const { return static_cast<int>(node_ids.size()); }
};

QualityMatrix overall_quality(const std::vector<std::string>& ids, const std::vector<long long>& node_counts);

struct QualityModelSpec {
    std::vector<std::string> pair_average_covariates = {"hd", "a", "f", "dw"};
    bool include_ownership = true;
    bool include_teach = true;
    bool include_mono = true;
    bool include_techno = true;
    bool interaction = false;  // predicted transfers x ownership
    bool standardize = true;
    bool log_discharges = true;
    double eta_clamp = 30.0;
    std::string outcome_column = "w_mortality";  // node-table column holding W_i
};

// One row per unordered pair. Reference levels: ownership public-public,
// teach/mono/techno "neither". The predicted-transfer column is the pair
// total that_ij + that_ji; interaction columns stay on the raw scale so the
// per-category slope is the base slope plus the interaction coefficient.
// A pair-average column decomposes as Z(q) = g_i + g_j - intercept_comp,
// which makes the u <-> coefficient ridge exactly invariant; the sampler
// sweeps those directions.
struct AdditiveNodeColumn {
    int column = 0;
    std::vector<double> node_values;  // g, aligned with node_ids
    double intercept_comp = 0.0;      // center/scale of the standardized column
};

struct QualityDesign {
    std::vector<std::string> node_ids;  // canonical order
    Eigen::MatrixXd Z;                  // P x k, standardized scale where flagged
    Eigen::VectorXd outcome;
    std::vector<int> pair_i;
    std::vector<int> pair_j;
    std::vector<std::vector<int>> pairs_of_node;
    std::vector<DesignColumn> columns;
    std::vector<AdditiveNodeColumn> additive_columns;
    double eta_clamp = 30.0;

    int pair_count() const { return static_cast<int>(Z.rows()); }
    int node_count() const { return static_cast<int>(node_ids.size()); }
    Eigen::VectorXd to_original_scale(const Eigen::VectorXd& theta_std) const;
};

QualityDesign assemble_quality_design(const QualityMatrix& w, const PredictedTransfers& that, const NodeTable& nodes,
                                      const QualityModelSpec& spec);

struct QualityPosterior {
    std::vector<std::string> names;  // coefficients (original scale) + sigma_u2, sigma_eps2
    Eigen::MatrixXd draws;
    Eigen::MatrixXd coef_std_draws;
    std::map<std::string, double> acceptance_rates;
    std::vector<std::string> node_ids;
    Eigen::MatrixXd fitted_mean;  // posterior mean of E(W_ij), symmetric
    bool interaction = false;

    int draw_count() const { return static_cast<int>(draws.rows()); }
    Eigen::Index param_index(const std::string& name) const;
    Eigen::VectorXd column(const std::string& name) const;
};

QualityPosterior fit_quality_model(const QualityMatrix& w, const PredictedTransfers& that, const NodeTable& nodes,
                                   const QualityModelSpec& spec, const McmcConfig& config);

// Percent reduction in the outcome per additional transfer: (1 - exp(xi)) * 100.
double effect_size(double xi);

// fit_quality_model with the interaction term enabled; requires every
// ownership category to be populated.
QualityPosterior ownership_interaction(const QualityMatrix& w, const PredictedTransfers& that, const NodeTable& nodes,
                                       QualityModelSpec spec, const McmcConfig& config);

// Per-draw marginal transfer slope by ownership category (original scale).
struct MarginalSlopes {
    std::vector<std::string> categories;
    Eigen::MatrixXd draws;  // draw_count x categories
};
MarginalSlopes ownership_marginal_slopes(const QualityPosterior& posterior);

struct HeatmapCell {
    std::string row_id;
    std::string col_id;
    double observed_transfers = 0.0;
    double predicted_outcome_per_discharge = 0.0;
    std::optional<double> log_value;  // ln(observed transfers); empty for zero cells
    bool is_zero = true;
};

// Cells in row-major order of nodes sorted by discharges (descending).
// filter: "all", "public-public", "private-private" or "public-private".
std::vector<HeatmapCell> heatmap_export(const QualityPosterior& posterior, const DirectedCountNetwork& observed,
                                        const NodeTable& nodes, const std::string& ownership_filter);

struct ThresholdRobustness {
    std::vector<double> thresholds;
    Eigen::MatrixXd correlation;                  // pairwise Pearson of predicted-transfer vectors
    std::vector<Eigen::VectorXd> predicted_flat;  // ordered-pair vector per threshold
};

// Refits the flow model per geographic-degree threshold and correlates the
// resulting predicted transfers.
ThresholdRobustness dc_threshold_robustness(const NodeTable& nodes, const DyadTable& dyads,
                                            const DirectedCountNetwork& net, const std::vector<double>& thresholds,
                                            const SrmSpec& spec, const McmcConfig& config, int threads = 1);

}  // namespace flownet
