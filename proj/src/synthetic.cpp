#include "flownet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "flownet/errors.hpp"
#include "flownet/network.hpp"
#include "flownet/parallel.hpp"
#include "flownet/rng.hpp"
#include "flownet/stats.hpp"

namespace flownet {

namespace {

std::vector<std::string> make_node_ids(int n) {
    int width = 1;
    for (int x = n; x >= 10; x /= 10) ++width;
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        std::string digits = std::to_string(i);
        while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
        ids.push_back("h" + digits);
    }
    return ids;
}

Eigen::VectorXd beta_from_names(const std::map<std::string, double>& truth_beta,
                                const std::vector<DesignColumn>& columns, const char* what) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(columns.size()));
    for (const auto& [name, value] : truth_beta) {
        bool found = false;
        for (std::size_t k = 0; k < columns.size(); ++k) {
            if (columns[k].name == name) {
                beta[static_cast<Eigen::Index>(k)] = value;
                found = true;
                break;
            }
        }
        if (!found) throw InputError(std::string(what) + ": unknown truth coefficient '" + name + "'");
    }
    return beta;
}

}  // namespace

SimulatedStage1 simulate_stage1(const SyntheticTruth& truth) {
    truth.cov.validate();
    const int n = truth.n_nodes;
    if (n < 3) throw InputError("synthetic network needs at least three nodes");
    Rng root = Rng(truth.seed).child("simulate_stage1");

    SimulatedStage1 out;
    const auto ids = make_node_ids(n);

    // Geometry: uniform points in the unit square, travel minutes scaled to
    // the requested mean; local-authority labels from nearest seeded centers.
    Rng geo_rng = root.child("geometry");
    std::vector<double> px(static_cast<std::size_t>(n)), py(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        px[static_cast<std::size_t>(i)] = geo_rng.uniform();
        py[static_cast<std::size_t>(i)] = geo_rng.uniform();
    }
    Eigen::MatrixXd travel = Eigen::MatrixXd::Zero(n, n);
    double mean_raw = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dx = px[static_cast<std::size_t>(i)] - px[static_cast<std::size_t>(j)];
            const double dy = py[static_cast<std::size_t>(i)] - py[static_cast<std::size_t>(j)];
            const double d = std::sqrt(dx * dx + dy * dy);
            travel(i, j) = travel(j, i) = d;
            mean_raw += 2.0 * d;
        }
    }
    mean_raw /= static_cast<double>(n) * static_cast<double>(n - 1);
    const double scale = truth.mean_travel_minutes / std::max(mean_raw, 1e-12);
    travel *= scale;

    const int n_lha = std::max(1, truth.lha_count);
    std::vector<double> cx(static_cast<std::size_t>(n_lha)), cy(static_cast<std::size_t>(n_lha));
    for (int c = 0; c < n_lha; ++c) {
        cx[static_cast<std::size_t>(c)] = geo_rng.uniform();
        cy[static_cast<std::size_t>(c)] = geo_rng.uniform();
    }
    std::vector<int> lha(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < n_lha; ++c) {
            const double dx = px[static_cast<std::size_t>(i)] - cx[static_cast<std::size_t>(c)];
            const double dy = py[static_cast<std::size_t>(i)] - cy[static_cast<std::size_t>(c)];
            const double d = dx * dx + dy * dy;
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        lha[static_cast<std::size_t>(i)] = best;
    }

    out.dyads.ids = ids;
    out.dyads.distance = travel;
    out.dyads.co_membership = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j && lha[static_cast<std::size_t>(i)] == lha[static_cast<std::size_t>(j)]) out.dyads.co_membership(i, j) = 1.0;
        }
    }

    // Node covariates in the ballpark of a regional acute-care system.
    Rng cov_rng = root.child("covariates");
    out.nodes.ids = ids;
    auto& cols = out.nodes.columns;
    const char* names[] = {"hd", "dw", "a", "f", "teach", "mono", "techno", "public", "bs", "bt", "am", "ar"};
    for (const char* c : names) cols[c].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        cols["hd"][k] = std::max(50.0, std::round(std::exp(cov_rng.normal(std::log(4000.0), 0.8))));
        cols["dw"][k] = std::max(0.3, cov_rng.normal(1.16, 0.24));
        cols["a"][k] = cov_rng.normal(62.4, 7.4);
        cols["f"][k] = std::clamp(cov_rng.normal(0.54, 0.10), 0.05, 0.95);
        cols["teach"][k] = cov_rng.bernoulli(0.15) ? 1.0 : 0.0;
        cols["mono"][k] = cov_rng.bernoulli(0.10) ? 1.0 : 0.0;
        cols["techno"][k] = cov_rng.bernoulli(0.30) ? 1.0 : 0.0;
        cols["public"][k] = cov_rng.bernoulli(0.60) ? 1.0 : 0.0;
        cols["bs"][k] = std::clamp(cov_rng.normal(72.0, 17.6), 5.0, 99.0);
        cols["bt"][k] = std::max(5.0, cov_rng.normal(40.6, 9.6));
        cols["am"][k] = std::max(0.0, cov_rng.normal(0.07, 0.04));
        cols["ar"][k] = std::max(0.0, cov_rng.normal(0.10, 0.04));
    }

    // Geographic degree and betweenness from the threshold network.
    const GeoNetwork geo = geo_threshold_network(ids, travel, truth.geo_threshold_minutes);
    const auto bw = betweenness_scores(geo.to_directed());
    cols["dc"].resize(static_cast<std::size_t>(n));
    cols["bw"].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        cols["dc"][static_cast<std::size_t>(i)] = static_cast<double>(geo.degree(i));
        cols["bw"][static_cast<std::size_t>(i)] = bw[static_cast<std::size_t>(i)];
    }

    // Node-level adverse outcome counts for the quality stage.
    Rng outcome_rng = root.child("outcomes");
    cols["w_mortality"].resize(static_cast<std::size_t>(n));
    cols["w_readmission"].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        cols["w_mortality"][k] = static_cast<double>(outcome_rng.poisson(cols["hd"][k] * cols["am"][k]));
        cols["w_readmission"][k] = static_cast<double>(outcome_rng.poisson(cols["hd"][k] * cols["ar"][k]));
    }

    // Fixed-effect predictor on the original covariate scale.
    SrmSpec gen_spec;
    gen_spec.include_quality = true;
    gen_spec.standardize = false;
    gen_spec.eta_clamp = truth.eta_clamp;
    const DirectedCountNetwork empty_net = build_network(ids, {});
    const DyadDesign design = assemble_design(out.nodes, out.dyads, empty_net, gen_spec);
    const Eigen::VectorXd beta = beta_from_names(truth.beta, design.columns, "simulate_stage1");
    const Eigen::VectorXd eta_fixed = design.X * beta;

    out.true_fixed_mean = Eigen::MatrixXd::Zero(n, n);
    for (int r = 0; r < design.row_count(); ++r) {
        out.true_fixed_mean(design.row_src[static_cast<std::size_t>(r)], design.row_dst[static_cast<std::size_t>(r)]) =
            std::exp(std::clamp(eta_fixed[r], -truth.eta_clamp, truth.eta_clamp));
    }

    // Random effects and counts.
    Rng eff_rng = root.child("effects");
    const Eigen::Matrix2d l_ab = cholesky2x2(truth.cov.sigma_ab_matrix());
    Eigen::VectorXd a(n), b(n);
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d e = l_ab * Eigen::Vector2d(eff_rng.normal(), eff_rng.normal());
        a[i] = e[0];
        b[i] = e[1];
    }
    const Eigen::Matrix2d l_nu = cholesky2x2(truth.cov.sigma_nu_matrix());
    Eigen::VectorXd nu(design.row_count());
    for (const auto& [r1, r2] : design.pair_rows) {
        const Eigen::Vector2d e = l_nu * Eigen::Vector2d(eff_rng.normal(), eff_rng.normal());
        nu[r1] = e[0];
        nu[r2] = e[1];
    }

    Rng count_rng = root.child("counts");
    std::vector<EdgeCount> edges;
    for (int r = 0; r < design.row_count(); ++r) {
        const int i = design.row_src[static_cast<std::size_t>(r)];
        const int j = design.row_dst[static_cast<std::size_t>(r)];
        const double eta_raw = eta_fixed[r] + a[i] + b[j] + nu[r];
        if (std::abs(eta_raw) > truth.eta_clamp) ++out.clamp_saturated;
        const double eta = std::clamp(eta_raw, -truth.eta_clamp, truth.eta_clamp);
        const long long c = count_rng.poisson(std::exp(eta));
        if (c > 0) edges.push_back({ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)], c});
    }
    out.clamp_warning = out.clamp_saturated * 1000 > design.row_count();
    out.net = build_network(ids, edges);
    out.effects_a = std::move(a);
    out.effects_b = std::move(b);
    out.residuals_nu = std::move(nu);
    out.pair_rows = design.pair_rows;
    return out;
}

PredictedTransfers exogenous_transfers_from_truth(const SimulatedStage1& sim) {
    PredictedTransfers that;
    that.node_ids = sim.nodes.ids;
    that.matrix = sim.true_fixed_mean;
    that.provenance.include_quality = false;
    that.provenance.effects_excluded = true;
    that.provenance.excluded_covariates = {"am", "ar"};
    return that;
}

QualityMatrix simulate_stage2(const SyntheticTruth& truth, const PredictedTransfers& that, const NodeTable& nodes) {
    if (!(truth.stage2.sigma_u2 >= 0.0) || !(truth.stage2.sigma_eps2 >= 0.0)) {
        throw InputError("stage-2 variance components must be non-negative");
    }
    QualityModelSpec gen_spec;
    gen_spec.standardize = false;
    gen_spec.eta_clamp = truth.eta_clamp;
    gen_spec.interaction = truth.stage2.coefficients.count("that_x_private_private") > 0 ||
                           truth.stage2.coefficients.count("that_x_public_private") > 0;
    const int n = nodes.size();
    QualityMatrix zero;
    zero.node_ids = nodes.ids;
    zero.w = Eigen::MatrixXd::Zero(n, n);
    const QualityDesign design = assemble_quality_design(zero, that, nodes, gen_spec);

    std::map<std::string, double> theta_map = truth.stage2.coefficients;
    theta_map["intercept"] = truth.stage2.intercept;
    theta_map["predicted_transfers"] = truth.stage2.xi;
    const Eigen::VectorXd theta = beta_from_names(theta_map, design.columns, "simulate_stage2");
    const Eigen::VectorXd eta_fixed = design.Z * theta;

    Rng rng = Rng(truth.seed).child("simulate_stage2");
    Eigen::VectorXd u(design.node_count());
    const double su = std::sqrt(truth.stage2.sigma_u2);
    for (int i = 0; i < design.node_count(); ++i) u[i] = su * rng.normal();
    const double se = std::sqrt(truth.stage2.sigma_eps2);

    QualityMatrix out;
    out.node_ids = design.node_ids;
    out.w = Eigen::MatrixXd::Zero(n, n);
    for (int q = 0; q < design.pair_count(); ++q) {
        const int i = design.pair_i[static_cast<std::size_t>(q)];
        const int j = design.pair_j[static_cast<std::size_t>(q)];
        const double eta = std::clamp(eta_fixed[q] + u[i] + u[j] + se * rng.normal(), -truth.eta_clamp, truth.eta_clamp);
        const double w = static_cast<double>(rng.poisson(std::exp(eta)));
        out.w(i, j) = out.w(j, i) = w;
    }
    return out;
}

const RecoveryParamReport& RecoveryReport::param(const std::string& name) const {
    for (const auto& p : params) {
        if (p.name == name) return p;
    }
    throw InputError("recovery report has no parameter '" + name + "'");
}

namespace {

struct TrackedParam {
    std::string name;
    double truth = 0.0;
};

RecoveryReport aggregate_recovery(const std::vector<TrackedParam>& tracked,
                                  const std::vector<std::vector<CredibleInterval>>& intervals,
                                  const std::vector<std::vector<double>>& means,
                                  const std::vector<std::map<std::string, double>>& acceptance, int replicates) {
    RecoveryReport report;
    report.replicates = replicates;
    for (const auto& rates : acceptance) {
        for (const auto& [name, rate] : rates) {
            auto [mn_it, inserted] = report.min_acceptance.emplace(name, rate);
            if (!inserted) mn_it->second = std::min(mn_it->second, rate);
            auto [mx_it, inserted2] = report.max_acceptance.emplace(name, rate);
            if (!inserted2) mx_it->second = std::max(mx_it->second, rate);
        }
    }
    for (std::size_t k = 0; k < tracked.size(); ++k) {
        RecoveryParamReport pr;
        pr.name = tracked[k].name;
        pr.truth = tracked[k].truth;
        pr.replicates = replicates;
        for (int r = 0; r < replicates; ++r) {
            const auto& ci = intervals[static_cast<std::size_t>(r)][k];
            if (ci.contains(pr.truth)) ++pr.covered;
            pr.mean_bias += means[static_cast<std::size_t>(r)][k] - pr.truth;
            pr.mean_ci_width += ci.width();
        }
        pr.mean_bias /= replicates;
        pr.mean_ci_width /= replicates;
        report.params.push_back(std::move(pr));
    }
    return report;
}

}  // namespace

RecoveryReport recovery_experiment(const SyntheticTruth& truth, int replicates, const SrmSpec& spec,
                                   const McmcConfig& config, int threads) {
    if (replicates < 1) throw InputError("recovery experiment needs at least one replicate");

    // Track the truth coefficients that survive the spec's covariate selection,
    // plus the variance components.
    std::vector<TrackedParam> tracked;
    {
        SyntheticTruth probe = truth;
        probe.n_nodes = std::min(probe.n_nodes, 10);
        const SimulatedStage1 sim = simulate_stage1(probe);
        const DyadDesign design = assemble_design(sim.nodes, sim.dyads, sim.net, spec);
        for (const auto& [name, value] : truth.beta) {
            for (const auto& col : design.columns) {
                if (col.name == name) {
                    tracked.push_back({name, value});
                    break;
                }
            }
        }
        tracked.push_back({"sigma_a2", truth.cov.sigma_a2});
        tracked.push_back({"sigma_ab", truth.cov.sigma_ab});
        tracked.push_back({"sigma_b2", truth.cov.sigma_b2});
        tracked.push_back({"sigma_nu2", truth.cov.sigma_nu2});
        tracked.push_back({"rho", truth.cov.rho});
    }

    std::vector<std::vector<CredibleInterval>> intervals(static_cast<std::size_t>(replicates));
    std::vector<std::vector<double>> means(static_cast<std::size_t>(replicates));
    std::vector<std::map<std::string, double>> acceptance(static_cast<std::size_t>(replicates));
    Rng root(truth.seed);
    parallel_for_index(replicates, threads, [&](int r) {
        SyntheticTruth rep_truth = truth;
        rep_truth.seed = root.child_indexed("replicate", static_cast<std::uint64_t>(r)).stream_seed();
        const SimulatedStage1 sim = simulate_stage1(rep_truth);
        const DyadDesign design = assemble_design(sim.nodes, sim.dyads, sim.net, spec);
        McmcConfig run = config;
        run.seed = root.child_indexed("fit", static_cast<std::uint64_t>(r)).stream_seed();
        run.store_effects = false;
        const PosteriorSamples samples = fit_srm(design, run);
        auto& ci_row = intervals[static_cast<std::size_t>(r)];
        auto& mean_row = means[static_cast<std::size_t>(r)];
        for (const auto& t : tracked) {
            const Eigen::VectorXd draws = samples.column(t.name);
            ci_row.push_back(credible_interval_95(draws));
            mean_row.push_back(draws.mean());
        }
        acceptance[static_cast<std::size_t>(r)] = samples.acceptance_rates;
    });
    return aggregate_recovery(tracked, intervals, means, acceptance, replicates);
}

RecoveryReport recovery_experiment_stage2(const SyntheticTruth& truth, int replicates, const QualityModelSpec& spec,
                                          const McmcConfig& config, int threads) {
    if (replicates < 1) throw InputError("recovery experiment needs at least one replicate");

    std::vector<TrackedParam> tracked;
    tracked.push_back({"predicted_transfers", truth.stage2.xi});
    {
        SyntheticTruth probe = truth;
        probe.n_nodes = std::min(probe.n_nodes, 10);
        const SimulatedStage1 sim = simulate_stage1(probe);
        const PredictedTransfers that = exogenous_transfers_from_truth(sim);
        QualityMatrix zero;
        zero.node_ids = sim.nodes.ids;
        zero.w = Eigen::MatrixXd::Zero(probe.n_nodes, probe.n_nodes);
        const QualityDesign design = assemble_quality_design(zero, that, sim.nodes, spec);
        for (const auto& [name, value] : truth.stage2.coefficients) {
            for (const auto& col : design.columns) {
                if (col.name == name) {
                    tracked.push_back({name, value});
                    break;
                }
            }
        }
    }
    tracked.push_back({"sigma_u2", truth.stage2.sigma_u2});
    tracked.push_back({"sigma_eps2", truth.stage2.sigma_eps2});

    std::vector<std::vector<CredibleInterval>> intervals(static_cast<std::size_t>(replicates));
    std::vector<std::vector<double>> means(static_cast<std::size_t>(replicates));
    std::vector<std::map<std::string, double>> acceptance(static_cast<std::size_t>(replicates));
    Rng root(truth.seed);
    parallel_for_index(replicates, threads, [&](int r) {
        SyntheticTruth rep_truth = truth;
        rep_truth.seed = root.child_indexed("replicate2", static_cast<std::uint64_t>(r)).stream_seed();
        const SimulatedStage1 sim = simulate_stage1(rep_truth);
        const PredictedTransfers that = exogenous_transfers_from_truth(sim);
        const QualityMatrix w = simulate_stage2(rep_truth, that, sim.nodes);
        McmcConfig run = config;
        run.seed = root.child_indexed("fit2", static_cast<std::uint64_t>(r)).stream_seed();
        const QualityPosterior post = fit_quality_model(w, that, sim.nodes, spec, run);
        auto& ci_row = intervals[static_cast<std::size_t>(r)];
        auto& mean_row = means[static_cast<std::size_t>(r)];
        for (const auto& t : tracked) {
            const Eigen::VectorXd draws = post.column(t.name);
            ci_row.push_back(credible_interval_95(draws));
            mean_row.push_back(draws.mean());
        }
        acceptance[static_cast<std::size_t>(r)] = post.acceptance_rates;
    });
    return aggregate_recovery(tracked, intervals, means, acceptance, replicates);
}

}  // namespace flownet
