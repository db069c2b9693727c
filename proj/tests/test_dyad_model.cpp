#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flownet/dyad_model.hpp"
#include "flownet/errors.hpp"
#include "flownet/network.hpp"
#include "flownet/rng.hpp"
#include "flownet/stats.hpp"

using namespace flownet;

namespace {

// Small complete tables for three nodes.
NodeTable tiny_nodes() {
    NodeTable t;
    t.ids = {"x", "y", "z"};
    t.columns["hd"] = {1000, 2000, 4000};
    t.columns["dw"] = {1.0, 1.2, 1.4};
    t.columns["a"] = {60, 62, 64};
    t.columns["f"] = {0.5, 0.55, 0.6};
    t.columns["dc"] = {1, 2, 1};
    t.columns["bw"] = {0.0, 1.0, 0.5};
    t.columns["teach"] = {0, 1, 0};
    t.columns["mono"] = {0, 0, 1};
    t.columns["techno"] = {1, 0, 0};
    t.columns["public"] = {1, 1, 0};
    t.columns["am"] = {0.06, 0.07, 0.08};
    t.columns["ar"] = {0.09, 0.10, 0.11};
    t.columns["bs"] = {60, 70, 80};
    t.columns["bt"] = {35, 40, 45};
    return t;
}

DyadTable tiny_dyads() {
    DyadTable t;
    t.ids = {"x", "y", "z"};
    t.distance = Eigen::MatrixXd::Zero(3, 3);
    t.distance << 0, 10, 40, 10, 0, 25, 40, 25, 0;
    t.co_membership = Eigen::MatrixXd::Zero(3, 3);
    t.co_membership(0, 1) = t.co_membership(1, 0) = 1.0;
    return t;
}

DirectedCountNetwork tiny_net() {
    return build_network({"x", "y", "z"}, {{"x", "y", 3}, {"y", "x", 2}, {"z", "y", 1}});
}

}  // namespace

TEST_CASE("assemble_design shape and quality exclusion") {
    SrmSpec spec;
    spec.include_quality = true;
    const auto design = assemble_design(tiny_nodes(), tiny_dyads(), tiny_net(), spec);
    CHECK(design.row_count() == 6);  // N(N-1)
    CHECK(design.pair_rows.size() == 3);
    // intercept + 2 dyadic + 14 covariates x 2 roles
    CHECK(design.column_count() == 1 + 2 + 28);
    CHECK(design.include_quality);

    SrmSpec no_quality;
    no_quality.include_quality = false;
    const auto excl = assemble_design(tiny_nodes(), tiny_dyads(), tiny_net(), no_quality);
    for (const auto& col : excl.columns) {
        CHECK(col.name.find("am_") == std::string::npos);
        CHECK(col.name.find("ar_") == std::string::npos);
    }
    CHECK(excl.column_count() == 1 + 2 + 24);
    CHECK(excl.excluded_covariates == std::vector<std::string>{"am", "ar"});

    SUBCASE("counts line up with the network in canonical order") {
        const int xi = 0, yi = 1, zi = 2;  // sorted ids x,y,z
        CHECK(excl.counts[excl.row_index(xi, yi)] == 3.0);
        CHECK(excl.counts[excl.row_index(yi, xi)] == 2.0);
        CHECK(excl.counts[excl.row_index(zi, yi)] == 1.0);
        CHECK(excl.counts[excl.row_index(xi, zi)] == 0.0);
    }
}

TEST_CASE("standardized columns have mean zero and unit sd") {
    SrmSpec spec;
    spec.standardize = true;
    const auto design = assemble_design(tiny_nodes(), tiny_dyads(), tiny_net(), spec);
    for (int k = 0; k < design.column_count(); ++k) {
        if (!design.columns[static_cast<std::size_t>(k)].standardized) continue;
        const double mean = design.X.col(k).mean();
        const double sd = sample_sd(design.X.col(k));
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(sd - 1.0) < 1e-10);
    }
    // Binary columns are left alone.
    for (int k = 0; k < design.column_count(); ++k) {
        const auto& col = design.columns[static_cast<std::size_t>(k)];
        if (col.name.rfind("teach", 0) == 0 || col.name == "co_membership") CHECK_FALSE(col.standardized);
    }
}

TEST_CASE("assemble_design reports missing covariates by node and column") {
    auto nodes = tiny_nodes();
    nodes.columns["bs"][1] = std::nan("");
    SrmSpec spec;
    CHECK_THROWS_WITH_AS(assemble_design(nodes, tiny_dyads(), tiny_net(), spec), doctest::Contains("'bs'"), InputError);
    nodes = tiny_nodes();
    nodes.columns.erase("bt");
    CHECK_THROWS_WITH_AS(assemble_design(nodes, tiny_dyads(), tiny_net(), spec), doctest::Contains("'bt'"), InputError);
}

TEST_CASE("design assembly is invariant to input row order") {
    SrmSpec spec;
    const auto base = assemble_design(tiny_nodes(), tiny_dyads(), tiny_net(), spec);

    NodeTable shuffled = tiny_nodes();
    std::swap(shuffled.ids[0], shuffled.ids[2]);
    for (auto& [name, col] : shuffled.columns) std::swap(col[0], col[2]);
    const auto again = assemble_design(shuffled, tiny_dyads(), tiny_net(), spec);
    CHECK(base.node_ids == again.node_ids);
    CHECK((base.X - again.X).cwiseAbs().maxCoeff() == 0.0);
    CHECK((base.counts - again.counts).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear predictor assembles and clamps") {
    SrmSpec spec;
    spec.standardize = false;
    const auto design = assemble_design(tiny_nodes(), tiny_dyads(), tiny_net(), spec);
    const int p = design.column_count();

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(3), b = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(design.row_count());

    auto eta = linear_predictor(design, beta, a, b, nu);
    CHECK(eta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::exp(eta[0]) == 1.0);

    beta[0] = std::log(5.0);
    eta = linear_predictor(design, beta, a, b, nu);
    for (int r = 0; r < design.row_count(); ++r) CHECK(std::exp(eta[r]) == doctest::Approx(5.0).epsilon(1e-12));

    SUBCASE("component arithmetic") {
        // x'beta = 2 via the intercept, a_i = 0.5, b_j = -0.3, nu = 0.1 -> 2.3
        beta.setZero();
        beta[0] = 2.0;
        a[design.row_src[0]] = 0.5;
        b[design.row_dst[0]] = -0.3;
        nu[0] = 0.1;
        eta = linear_predictor(design, beta, a, b, nu);
        CHECK(eta[0] == doctest::Approx(2.3).epsilon(1e-12));
    }
    SUBCASE("clamp bound applies") {
        beta.setZero();
        beta[0] = 100.0;
        eta = linear_predictor(design, beta, a, b, nu);
        CHECK(eta.maxCoeff() == design.eta_clamp);
    }
    SUBCASE("dimension mismatch throws") {
        CHECK_THROWS_AS(linear_predictor(design, Eigen::VectorXd::Zero(p + 1), a, b, nu), InputError);
        CHECK_THROWS_AS(linear_predictor(design, beta, Eigen::VectorXd::Zero(2), b, nu), InputError);
    }
    SUBCASE("affine superposition in each argument") {
        Rng rng(33);
        Eigen::VectorXd b1 = Eigen::VectorXd::Zero(p), b2 = Eigen::VectorXd::Zero(p);
        for (int k = 0; k < p; ++k) {
            b1[k] = rng.normal() * 0.01;
            b2[k] = rng.normal() * 0.01;
        }
        const auto e1 = linear_predictor(design, b1, a, b, nu);
        const auto e2 = linear_predictor(design, b2, a, b, nu);
        const auto esum = linear_predictor(design, b1 + b2, a, b, nu);
        // Far from the clamp, the map is additive in beta.
        for (int r = 0; r < design.row_count(); ++r) {
            CHECK(esum[r] == doctest::Approx(e1[r] + e2[r] - 0.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("poisson log-likelihood closed forms") {
    Eigen::VectorXd y(1), eta(1);
    y << 0;
    eta << 0;
    CHECK(poisson_loglik(y, eta) == doctest::Approx(-1.0).epsilon(1e-12));

    // y = 2, eta = log 2: 2*log2 - 2 - log(2!) = log2 - 2
    y << 2;
    eta << std::log(2.0);
    CHECK(poisson_loglik(y, eta) == doctest::Approx(std::log(2.0) - 2.0).epsilon(1e-12));

    SUBCASE("additivity over independent pairs") {
        Eigen::VectorXd y2(2), eta2(2);
        y2 << 0, 2;
        eta2 << 0, std::log(2.0);
        Eigen::VectorXd ya(1), ea(1), yb(1), eb(1);
        ya << 0;
        ea << 0;
        yb << 2;
        eb << std::log(2.0);
        CHECK(poisson_loglik(y2, eta2) == doctest::Approx(poisson_loglik(ya, ea) + poisson_loglik(yb, eb)).epsilon(1e-12));
    }
    SUBCASE("non-integer counts rejected") {
        y << 1.5;
        CHECK_THROWS_AS(poisson_loglik(y, eta), InputError);
        y << -1;
        CHECK_THROWS_AS(poisson_loglik(y, eta), InputError);
    }
}

TEST_CASE("implied moments of the error structure") {
    DyadCovarianceParams p;
    p.sigma_a2 = 1.0;
    p.sigma_b2 = 2.0;
    p.sigma_ab = 0.25;
    p.sigma_nu2 = 2.0;
    p.rho = 0.5;
    const auto m = implied_moments(p);
    CHECK(m.variance == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(m.reciprocal == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(m.common_sender == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.common_receiver == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(m.disjoint == 0.0);
    CHECK(m.sender_receiver == doctest::Approx(0.25).epsilon(1e-15));

    DyadCovarianceParams zero;
    const auto mz = implied_moments(zero);
    CHECK(mz.variance == 0.0);
    CHECK(mz.reciprocal == 0.0);
    CHECK(mz.sender_receiver == 0.0);

    DyadCovarianceParams indep = p;
    indep.sigma_ab = 0.0;
    indep.rho = 0.0;
    const auto mi = implied_moments(indep);
    CHECK(mi.reciprocal == 0.0);
    CHECK(mi.sender_receiver == 0.0);

    SUBCASE("validation") {
        DyadCovarianceParams bad = p;
        bad.rho = 1.0;
        CHECK_THROWS_AS(bad.validate(), InputError);
        bad = p;
        bad.sigma_ab = 5.0;
        CHECK_THROWS_AS(bad.validate(), InputError);
        bad = p;
        bad.sigma_nu2 = -1.0;
        CHECK_THROWS_AS(bad.validate(), InputError);
    }
}

TEST_CASE("back-transform reproduces original-scale coefficients of a known linear map") {
    // A 10-node system so the design has full column rank (90 rows >> columns).
    const int n = 10;
    Rng rng(808);
    NodeTable nodes;
    DyadTable dyads;
    for (int i = 0; i < n; ++i) nodes.ids.push_back("m" + std::to_string(i));
    nodes.columns["hd"].resize(static_cast<std::size_t>(n));
    nodes.columns["dc"].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        nodes.columns["hd"][static_cast<std::size_t>(i)] = 500.0 + 4000.0 * rng.uniform();
        nodes.columns["dc"][static_cast<std::size_t>(i)] = static_cast<double>(rng.below(6));
    }
    dyads.ids = nodes.ids;
    dyads.distance = Eigen::MatrixXd::Zero(n, n);
    dyads.co_membership = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            dyads.distance(i, j) = dyads.distance(j, i) = rng.uniform(5.0, 120.0);
            const double cm = rng.bernoulli(0.3) ? 1.0 : 0.0;
            dyads.co_membership(i, j) = dyads.co_membership(j, i) = cm;
        }
    }
    const auto net = build_network(nodes.ids, {});

    SrmSpec spec;
    spec.node_covariates = {"hd", "dc"};
    spec.standardize = true;
    const auto design = assemble_design(nodes, dyads, net, spec);
    SrmSpec raw_spec = spec;
    raw_spec.standardize = false;
    const auto raw = assemble_design(nodes, dyads, net, raw_spec);
    REQUIRE(design.row_count() > design.column_count());

    // Truth on the original scale.
    Eigen::VectorXd beta_orig(raw.column_count());
    beta_orig << -2.0, -0.07, 1.787, 0.075, 0.088, 0.059, 0.046;
    const Eigen::VectorXd target = raw.X * beta_orig;

    // Fit the standardized design by least squares, then back-transform.
    const Eigen::VectorXd beta_std = design.X.colPivHouseholderQr().solve(target);
    const Eigen::VectorXd recovered = design.to_original_scale(beta_std);
    for (int k = 0; k < raw.column_count(); ++k) {
        CHECK(std::abs(recovered[k] - beta_orig[k]) < 1e-8);
    }
}

TEST_CASE("Monte Carlo agreement with the implied moments") {
    DyadCovarianceParams p;
    p.sigma_a2 = 1.0;
    p.sigma_b2 = 2.0;
    p.sigma_ab = 0.25;
    p.sigma_nu2 = 2.0;
    p.rho = 0.5;
    const auto m = implied_moments(p);

    // Clusters of four nodes i,j,k,l; each cluster yields one sample of every
    // cross-product the structure constrains.
    Rng rng(777);
    const int reps = 40000;
    const Eigen::Matrix2d l_ab = cholesky2x2(p.sigma_ab_matrix());
    const Eigen::Matrix2d l_nu = cholesky2x2(p.sigma_nu_matrix());

    Eigen::VectorXd s_var(reps), s_send(reps), s_recip(reps), s_recv(reps), s_disj(reps), s_sr(reps);
    for (int t = 0; t < reps; ++t) {
        Eigen::Vector2d ab[4];
        for (auto& e : ab) e = l_ab * Eigen::Vector2d(rng.normal(), rng.normal());
        auto nu_pair = [&]() -> Eigen::Vector2d { return l_nu * Eigen::Vector2d(rng.normal(), rng.normal()); };
        const auto nu_ij = nu_pair();  // components: (nu_ij, nu_ji)
        const auto nu_ik = nu_pair();  // components: (nu_ik, nu_ki)
        const auto nu_kj = nu_pair();
        const auto nu_kl = nu_pair();
        const double e_ij = ab[0][0] + ab[1][1] + nu_ij[0];
        const double e_ji = ab[1][0] + ab[0][1] + nu_ij[1];
        const double e_ik = ab[0][0] + ab[2][1] + nu_ik[0];
        const double e_ki = ab[2][0] + ab[0][1] + nu_ik[1];
        const double e_kj = ab[2][0] + ab[1][1] + nu_kj[0];
        const double e_kl = ab[2][0] + ab[3][1] + nu_kl[0];
        s_var[t] = e_ij * e_ij;
        s_send[t] = e_ij * e_ik;
        s_recip[t] = e_ij * e_ji;
        s_recv[t] = e_ij * e_kj;
        s_disj[t] = e_ij * e_kl;
        s_sr[t] = e_ij * e_ki;
    }
    auto check_moment = [&](const Eigen::VectorXd& samples, double expected) {
        const double mean = samples.mean();
        const double se = sample_sd(samples) / std::sqrt(static_cast<double>(reps));
        CHECK(std::abs(mean - expected) <= 3.0 * se);
    };
    check_moment(s_var, m.variance);
    check_moment(s_send, m.common_sender);
    check_moment(s_recip, m.reciprocal);
    check_moment(s_recv, m.common_receiver);
    check_moment(s_disj, m.disjoint);
    check_moment(s_sr, m.sender_receiver);
}
