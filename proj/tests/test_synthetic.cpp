#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flownet/dyad_model.hpp"
#include "flownet/errors.hpp"
#include "flownet/stats.hpp"
#include "flownet/synthetic.hpp"

using namespace flownet;

TEST_CASE("simulate_stage1 is deterministic and structurally sound") {
    SyntheticTruth truth;
    truth.n_nodes = 30;
    truth.seed = 12345;
    truth.beta = {{"intercept", -0.5}, {"distance", -0.03}, {"co_membership", 1.0}};
    truth.cov.sigma_a2 = 0.2;
    truth.cov.sigma_b2 = 0.2;
    truth.cov.sigma_ab = 0.05;
    truth.cov.sigma_nu2 = 0.4;
    truth.cov.rho = 0.5;

    const auto sim1 = simulate_stage1(truth);
    const auto sim2 = simulate_stage1(truth);
    CHECK(sim1.net.total_count() == sim2.net.total_count());
    CHECK(sim1.nodes.column("hd") == sim2.nodes.column("hd"));
    CHECK((sim1.dyads.distance - sim2.dyads.distance).cwiseAbs().maxCoeff() == 0.0);

    SUBCASE("distances are symmetric with the requested mean") {
        const int n = truth.n_nodes;
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                CHECK(sim1.dyads.distance(i, j) == sim1.dyads.distance(j, i));
                if (i != j) total += sim1.dyads.distance(i, j);
            }
        }
        CHECK(total / (n * (n - 1)) == doctest::Approx(truth.mean_travel_minutes).epsilon(1e-9));
    }

    SUBCASE("co-membership is a block indicator (an equivalence relation)") {
        const int n = truth.n_nodes;
        const auto& cm = sim1.dyads.co_membership;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                CHECK((cm(i, j) == 0.0 || cm(i, j) == 1.0));
                CHECK(cm(i, j) == cm(j, i));
                for (int k = 0; k < n; ++k) {
                    if (k == i || k == j) continue;
                    if (cm(i, j) == 1.0 && cm(j, k) == 1.0) CHECK(cm(i, k) == 1.0);
                }
            }
        }
    }

    SUBCASE("unknown truth coefficient is rejected") {
        SyntheticTruth bad = truth;
        bad.beta["no_such_column"] = 1.0;
        CHECK_THROWS_WITH_AS(simulate_stage1(bad), doctest::Contains("no_such_column"), InputError);
    }
}

TEST_CASE("zero-variance truth yields iid Poisson counts") {
    SyntheticTruth truth;
    truth.n_nodes = 101;  // 10100 ordered pairs
    truth.seed = 777;
    truth.beta = {{"intercept", std::log(2.0)}};
    truth.cov = DyadCovarianceParams{};  // all variances zero

    const auto sim = simulate_stage1(truth);
    const double n_pairs = static_cast<double>(truth.n_nodes) * (truth.n_nodes - 1);
    const double mean = static_cast<double>(sim.net.total_count()) / n_pairs;
    // Poisson(2): SE of the mean over 10100 draws.
    const double se = std::sqrt(2.0 / n_pairs);
    CHECK(std::abs(mean - 2.0) <= 3.0 * se);
    CHECK(sim.clamp_saturated == 0);
}

TEST_CASE("reciprocity of simulated residual pairs matches the implied moments") {
    SyntheticTruth truth;
    truth.n_nodes = 145;
    truth.seed = 31;
    truth.beta = {{"intercept", 0.3}};
    truth.cov.sigma_a2 = 0.3;
    truth.cov.sigma_b2 = 0.4;
    truth.cov.sigma_ab = 0.1;
    truth.cov.sigma_nu2 = 2.0;
    truth.cov.rho = 0.9;

    const auto sim = simulate_stage1(truth);
    const auto m = implied_moments(truth.cov);
    CHECK(m.reciprocal == doctest::Approx(0.9 * 2.0 + 0.2).epsilon(1e-12));

    // Realized composite errors per dyad, both directions.
    const int n = truth.n_nodes;
    const int n_pairs = n * (n - 1) / 2;
    Eigen::VectorXd e_fwd(n_pairs), e_rev(n_pairs);
    int q = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const auto [r1, r2] = sim.pair_rows[static_cast<std::size_t>(q)];
            e_fwd[q] = sim.effects_a[i] + sim.effects_b[j] + sim.residuals_nu[r1];
            e_rev[q] = sim.effects_a[j] + sim.effects_b[i] + sim.residuals_nu[r2];
            ++q;
        }
    }
    const auto corr = pearson_correlation(e_fwd, e_rev);
    REQUIRE(corr.has_value());
    const double r_theory = m.reciprocal / m.variance;
    const double se = (1.0 - r_theory * r_theory) / std::sqrt(static_cast<double>(n_pairs));
    CHECK(std::abs(*corr - r_theory) <= 3.0 * se);
}

TEST_CASE("extreme truths raise the clamp-saturation warning") {
    SyntheticTruth truth;
    truth.n_nodes = 20;
    truth.seed = 5;
    truth.beta = {{"intercept", 0.0}};
    truth.cov.sigma_a2 = 400.0;  // absurd variance pushes eta past the clamp
    truth.cov.sigma_b2 = 400.0;
    truth.cov.sigma_nu2 = 1.0;
    const auto sim = simulate_stage1(truth);
    CHECK(sim.clamp_saturated > 0);
    CHECK(sim.clamp_warning);
}

TEST_CASE("simulate_stage2 closed-form cases") {
    SyntheticTruth truth;
    truth.n_nodes = 60;
    truth.seed = 99;
    truth.beta = {{"intercept", 0.0}};
    truth.stage2.intercept = 1.0;
    truth.stage2.xi = 0.0;
    truth.stage2.sigma_u2 = 0.0;
    truth.stage2.sigma_eps2 = 0.0;

    const auto sim = simulate_stage1(truth);
    const auto that = exogenous_transfers_from_truth(sim);

    SUBCASE("xi = 0 with zero effects gives iid Poisson(exp(alpha))") {
        const auto w = simulate_stage2(truth, that, sim.nodes);
        double total = 0.0;
        int count = 0;
        for (int i = 0; i < truth.n_nodes; ++i) {
            for (int j = i + 1; j < truth.n_nodes; ++j) {
                total += w.w(i, j);
                ++count;
                CHECK(w.w(i, j) == w.w(j, i));
            }
        }
        const double mean = total / count;
        const double se = std::sqrt(std::exp(1.0) / count);
        CHECK(std::abs(mean - std::exp(1.0)) <= 3.0 * se);
    }

    SUBCASE("doubling transfers with negative xi lowers the outcome") {
        SyntheticTruth neg = truth;
        neg.stage2.xi = -0.05;
        auto that2 = that;
        that2.matrix *= 2.0;
        const auto w1 = simulate_stage2(neg, that, sim.nodes);
        const auto w2 = simulate_stage2(neg, that2, sim.nodes);
        CHECK(w2.w.sum() < w1.w.sum());
    }

    SUBCASE("seed determinism") {
        const auto w1 = simulate_stage2(truth, that, sim.nodes);
        const auto w2 = simulate_stage2(truth, that, sim.nodes);
        CHECK((w1.w - w2.w).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("recovery_experiment guards and smoke run") {
    SyntheticTruth truth;
    truth.n_nodes = 16;
    truth.seed = 2;
    truth.beta = {{"intercept", 0.0}, {"distance", -0.02}};
    truth.cov.sigma_a2 = 0.1;
    truth.cov.sigma_b2 = 0.1;
    truth.cov.sigma_nu2 = 0.3;
    truth.cov.rho = 0.3;

    SrmSpec spec;
    spec.node_covariates = {};
    spec.dyad_covariates = {"distance"};
    McmcConfig cfg;
    cfg.burn_in = 150;
    cfg.main_iterations = 400;
    cfg.thin = 10;

    CHECK_THROWS_AS(recovery_experiment(truth, 0, spec, cfg), InputError);

    const auto report = recovery_experiment(truth, 2, spec, cfg);
    CHECK(report.replicates == 2);
    CHECK(report.param("distance").truth == -0.02);
    CHECK(report.param("rho").truth == 0.3);
    for (const auto& p : report.params) {
        CHECK(p.covered >= 0);
        CHECK(p.covered <= 2);
        CHECK(p.mean_ci_width > 0.0);
    }
    CHECK_THROWS_AS(report.param("nope"), InputError);
}
