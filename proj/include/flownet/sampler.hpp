#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flownet/dyad_model.hpp"
#include "flownet/rng.hpp"

namespace flownet {

struct McmcConfig {
    int burn_in = 1000;
    int main_iterations = 10000;
    int thin = 25;
    std::uint64_t seed = 1;

    int adapt_window = 50;
    double target_accept_coef = 0.234;  // multivariate coefficient block
    double target_accept_pair = 0.44;   // scalar-like blocks

    double prior_beta_var = 100.0;   // beta ~ N(0, prior_beta_var * I)
    double prior_iw_df = 4.0;        // Sigma_ab and dyadic covariance priors
    double prior_iw_scale = 1.0;     // scale matrix = prior_iw_scale * I2
    double prior_ig_shape = 2.0;     // stage-2 variance priors
    double prior_ig_rate = 1.0;
    double rho_clamp = 0.995;

    bool store_effects = true;

    void validate() const;
    int draw_count() const { return main_iterations / thin; }
};

// Full sampler state for one sweep of the flow model.
struct EffectsState {
    Eigen::VectorXd beta;
    Eigen::VectorXd a;
    Eigen::VectorXd b;
    Eigen::VectorXd nu;  // one entry per ordered-pair design row
    Eigen::Matrix2d sigma_ab;
    double sigma_nu2 = 1.0;
    double rho = 0.0;
};

struct PosteriorSamples {
    std::vector<std::string> names;  // beta columns (original scale) then variance components
    Eigen::MatrixXd draws;           // draw_count x names.size()
    Eigen::MatrixXd beta_std_draws;  // draw_count x p, standardized design scale
    Eigen::MatrixXd sender_draws;    // draw_count x N when stored, else 0 x 0
    Eigen::MatrixXd receiver_draws;
    std::map<std::string, double> acceptance_rates;  // main-phase rates per block

    bool include_quality = false;
    std::vector<std::string> excluded_covariates;
    std::vector<std::string> node_ids;

    int draw_count() const { return static_cast<int>(draws.rows()); }
    Eigen::Index param_index(const std::string& name) const;  // throws InputError
    Eigen::VectorXd column(const std::string& name) const;
};

PosteriorSamples fit_srm(const DyadDesign& design, const McmcConfig& config);

struct ParameterSummaryRow {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double pseudo_p = 0.0;
    std::string stars;
};

std::vector<ParameterSummaryRow> summarize_draws(const std::vector<std::string>& names, const Eigen::MatrixXd& draws);
std::vector<ParameterSummaryRow> summarize_posterior(const PosteriorSamples& samples);

// Conjugate covariance updates.
Eigen::Matrix2d update_sigma_ab(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double prior_df,
                                const Eigen::Matrix2d& prior_scale, Rng& rng);
std::pair<double, double> update_dyad_cov(const std::vector<std::pair<double, double>>& nu_pairs, double prior_df,
                                          const Eigen::Matrix2d& prior_scale, double rho_clamp, Rng& rng);

// 2x2 Wishart / inverse-Wishart draws (Bartlett decomposition).
Eigen::Matrix2d wishart2(double df, const Eigen::Matrix2d& scale, Rng& rng);
Eigen::Matrix2d inverse_wishart2(double df, const Eigen::Matrix2d& scale, Rng& rng);

// Robbins-Monro log-scale adaptation toward a target acceptance rate.
// step(k) decays as the adaptation count grows; callers stop stepping after
// burn-in, which freezes the scale.
class AdaptiveScale {
  public:
    AdaptiveScale(double initial_scale, double target) : log_scale_(std::log(initial_scale)), target_(target) {}

    double scale() const { return std::exp(log_scale_); }
    void step(double observed_rate) {
        ++steps_;
        log_scale_ += gain(steps_) * (observed_rate - target_);
    }
    static double gain(long long k) { return std::min(0.3, 3.0 / std::sqrt(static_cast<double>(k))); }

  private:
    double log_scale_;
    double target_;
    long long steps_ = 0;
};

}  // namespace flownet
