#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "flownet/dyad_model.hpp"
#include "flownet/rng.hpp"
#include "flownet/sampler.hpp"

namespace flownet {

// The three fit statistics of a count matrix: dispersion of row means,
// dispersion of column means, and within-dyad correlation.
struct GofTriple {
    double sd_row_means = 0.0;
    double sd_col_means = 0.0;
    std::optional<double> dyad_correlation;  // empty iff the pair collection has zero variance
};

// counts: square matrix, diagonal ignored; requires N >= 3.
GofTriple network_stat_triple(const Eigen::MatrixXd& counts);

struct GofReport {
    GofTriple observed;
    std::vector<GofTriple> replicates;
    // Posterior-predictive quantile of the observed value (mid-rank over replicates).
    double quantile_sd_row = 0.0;
    double quantile_sd_col = 0.0;
    std::optional<double> quantile_dyad;
};

// Simulates one replicate network per saved draw: fixed effects from the
// draw, node effects and dyadic residuals redrawn from their fitted law.
GofReport posterior_predictive_gof(const PosteriorSamples& samples, const DyadDesign& design,
                                   const DirectedCountNetwork& observed, Rng rng);

// Matrix of counts in the design's canonical node order.
Eigen::MatrixXd counts_matrix(const DirectedCountNetwork& net, const std::vector<std::string>& node_order);

}  // namespace flownet
