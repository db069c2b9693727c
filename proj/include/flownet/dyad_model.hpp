#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flownet/network.hpp"

namespace flownet {

// Per-node covariates keyed by column name; rows aligned with ids.
struct NodeTable {
    std::vector<std::string> ids;
    std::map<std::string, std::vector<double>> columns;

    const std::vector<double>& column(const std::string& name) const;  // throws InputError
    bool has_column(const std::string& name) const { return columns.count(name) > 0; }
    int size() const { return static_cast<int>(ids.size()); }
};

// Dyadic covariates: pairwise travel time (minutes) and same-authority
// co-membership, stored dense and symmetric.
struct DyadTable {
    std::vector<std::string> ids;
    Eigen::MatrixXd distance;       // symmetric, zero diagonal
    Eigen::MatrixXd co_membership;  // symmetric 0/1

    void validate() const;
    int size() const { return static_cast<int>(ids.size()); }
};

// Model specification for the flow stage: which covariates enter and how.
struct SrmSpec {
    std::vector<std::string> node_covariates = {"hd", "dw", "a",      "f",      "dc", "bw", "teach",
                                                "mono", "techno", "public", "am", "ar", "bs", "bt"};
    std::vector<std::string> dyad_covariates = {"distance", "co_membership"};
    std::vector<std::string> quality_covariates = {"am", "ar"};
    bool include_quality = false;
    bool standardize = true;
    bool log_discharges = true;  // hd enters the predictor as log(discharges)
    double eta_clamp = 30.0;
};

struct DesignColumn {
    std::string name;
    double center = 0.0;
    double scale = 1.0;
    bool standardized = false;
};

// Undo column standardization on a coefficient vector; column 0 must be the
// intercept, which absorbs the centering shifts.
Eigen::VectorXd back_transform_coefficients(const std::vector<DesignColumn>& columns, const Eigen::VectorXd& beta_std);

// One row per ordered pair (zero flows included), canonical node order
// (sorted ids) so results are invariant to input row order.
struct DyadDesign {
    std::vector<std::string> node_ids;  // canonical order
    Eigen::MatrixXd X;                  // N(N-1) x p, standardized scale
    Eigen::VectorXd counts;
    std::vector<int> row_src;
    std::vector<int> row_dst;
    std::vector<std::pair<int, int>> pair_rows;      // unordered pair p -> (row ij, row ji), i < j
    std::vector<std::vector<int>> rows_as_sender;    // node -> rows where it is the origin
    std::vector<std::vector<int>> rows_as_receiver;  // node -> rows where it is the destination
    std::vector<DesignColumn> columns;
    bool include_quality = false;
    std::vector<std::string> excluded_covariates;
    double eta_clamp = 30.0;

    int node_count() const { return static_cast<int>(node_ids.size()); }
    int row_count() const { return static_cast<int>(X.rows()); }
    int column_count() const { return static_cast<int>(X.cols()); }
    int row_index(int src, int dst) const;

    // Maps standardized-scale coefficients back to the original covariate scale.
    Eigen::VectorXd to_original_scale(const Eigen::VectorXd& beta_std) const;
};

DyadDesign assemble_design(const NodeTable& nodes, const DyadTable& dyads, const DirectedCountNetwork& net,
                           const SrmSpec& spec);

// eta = X beta + a_src + b_dst + nu, clamped to +-design.eta_clamp.
Eigen::VectorXd linear_predictor(const DyadDesign& design, const Eigen::VectorXd& beta, const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& b, const Eigen::VectorXd& nu);

// sum of y*eta - exp(eta) - log(y!); counts must be non-negative integers.
double poisson_loglik(const Eigen::VectorXd& counts, const Eigen::VectorXd& eta);

// Variance components of the composite error a_i + b_j + nu_ij.
struct DyadCovarianceParams {
    double sigma_a2 = 0.0;
    double sigma_b2 = 0.0;
    double sigma_ab = 0.0;
    double sigma_nu2 = 0.0;
    double rho = 0.0;

    void validate() const;  // throws InputError on an invalid configuration
    Eigen::Matrix2d sigma_ab_matrix() const;
    Eigen::Matrix2d sigma_nu_matrix() const;
};

// The six second moments the error structure induces across dyads.
struct ImpliedMoments {
    double variance = 0.0;         // E(e_ij^2)
    double common_sender = 0.0;    // E(e_ij e_ik)
    double reciprocal = 0.0;       // E(e_ij e_ji)
    double common_receiver = 0.0;  // E(e_ij e_kj)
    double disjoint = 0.0;         // E(e_ij e_kl)
    double sender_receiver = 0.0;  // E(e_ij e_ki)
};

ImpliedMoments implied_moments(const DyadCovarianceParams& params);

}  // namespace flownet
