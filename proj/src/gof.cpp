#include "flownet/gof.hpp"

#include <cmath>

#include "flownet/errors.hpp"
#include "flownet/stats.hpp"

namespace flownet {

Eigen::MatrixXd counts_matrix(const DirectedCountNetwork& net, const std::vector<std::string>& node_order) {
    const int n = static_cast<int>(node_order.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int ni = net.node_index(node_order[static_cast<std::size_t>(i)]);
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const int nj = net.node_index(node_order[static_cast<std::size_t>(j)]);
            m(i, j) = static_cast<double>(net.count(ni, nj));
        }
    }
    return m;
}

GofTriple network_stat_triple(const Eigen::MatrixXd& counts) {
    const int n = static_cast<int>(counts.rows());
    if (counts.cols() != n || n < 3) throw InputError("network statistics need a square matrix with N >= 3");
    Eigen::VectorXd row_means(n), col_means(n);
    for (int i = 0; i < n; ++i) {
        double rs = 0.0, cs = 0.0;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            rs += counts(i, j);
            cs += counts(j, i);
        }
        row_means[i] = rs / (n - 1);
        col_means[i] = cs / (n - 1);
    }
    GofTriple t;
    t.sd_row_means = sample_sd(row_means);
    t.sd_col_means = sample_sd(col_means);
    const int n_pairs = n * (n - 1);
    Eigen::VectorXd x(n_pairs), y(n_pairs);
    int r = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            x[r] = counts(i, j);
            y[r] = counts(j, i);
            ++r;
        }
    }
    t.dyad_correlation = pearson_correlation(x, y);
    return t;
}

namespace {

// Mid-rank fraction of replicate values at or below the observed value.
double midrank_quantile(const std::vector<double>& reps, double observed) {
    double below = 0.0, equal = 0.0;
    for (double v : reps) {
        if (v < observed) below += 1.0;
        else if (v == observed) equal += 1.0;
    }
    return reps.empty() ? 0.0 : (below + 0.5 * equal) / static_cast<double>(reps.size());
}

}  // namespace

GofReport posterior_predictive_gof(const PosteriorSamples& samples, const DyadDesign& design,
                                   const DirectedCountNetwork& observed, Rng rng) {
    if (samples.draw_count() == 0) throw InputError("posterior predictive check needs at least one draw");
    const int n = design.node_count();
    GofReport report;
    report.observed = network_stat_triple(counts_matrix(observed, design.node_ids));

    const Eigen::Index i_sa = samples.param_index("sigma_a2");
    const Eigen::Index i_sab = samples.param_index("sigma_ab");
    const Eigen::Index i_sb = samples.param_index("sigma_b2");
    const Eigen::Index i_sn = samples.param_index("sigma_nu2");
    const Eigen::Index i_rho = samples.param_index("rho");

    Eigen::MatrixXd rep(n, n);
    Eigen::VectorXd a(n), b(n);
    for (int d = 0; d < samples.draw_count(); ++d) {
        Rng draw_rng = rng.child_indexed("replicate", static_cast<std::uint64_t>(d));
        const Eigen::VectorXd xb = design.X * samples.beta_std_draws.row(d).transpose();

        Eigen::Matrix2d sigma_ab;
        sigma_ab << samples.draws(d, i_sa), samples.draws(d, i_sab), samples.draws(d, i_sab), samples.draws(d, i_sb);
        const Eigen::Matrix2d l_ab = cholesky2x2(sigma_ab);
        for (int i = 0; i < n; ++i) {
            const Eigen::Vector2d z(draw_rng.normal(), draw_rng.normal());
            const Eigen::Vector2d e = l_ab * z;
            a[i] = e[0];
            b[i] = e[1];
        }
        const double s2 = samples.draws(d, i_sn);
        const double rho = samples.draws(d, i_rho);
        Eigen::Matrix2d sigma_nu;
        sigma_nu << s2, rho * s2, rho * s2, s2;
        const Eigen::Matrix2d l_nu = cholesky2x2(sigma_nu);

        rep.setZero();
        for (const auto& [r1, r2] : design.pair_rows) {
            const Eigen::Vector2d z(draw_rng.normal(), draw_rng.normal());
            const Eigen::Vector2d nu = l_nu * z;
            const int i = design.row_src[static_cast<std::size_t>(r1)];
            const int j = design.row_dst[static_cast<std::size_t>(r1)];
            const double e1 = std::clamp(xb[r1] + a[i] + b[j] + nu[0], -design.eta_clamp, design.eta_clamp);
            const double e2 = std::clamp(xb[r2] + a[j] + b[i] + nu[1], -design.eta_clamp, design.eta_clamp);
            rep(i, j) = static_cast<double>(draw_rng.poisson(std::exp(e1)));
            rep(j, i) = static_cast<double>(draw_rng.poisson(std::exp(e2)));
        }
        report.replicates.push_back(network_stat_triple(rep));
    }

    std::vector<double> rows_v, cols_v, dyad_v;
    for (const auto& t : report.replicates) {
        rows_v.push_back(t.sd_row_means);
        cols_v.push_back(t.sd_col_means);
        if (t.dyad_correlation) dyad_v.push_back(*t.dyad_correlation);
    }
    report.quantile_sd_row = midrank_quantile(rows_v, report.observed.sd_row_means);
    report.quantile_sd_col = midrank_quantile(cols_v, report.observed.sd_col_means);
    if (report.observed.dyad_correlation && !dyad_v.empty()) {
        report.quantile_dyad = midrank_quantile(dyad_v, *report.observed.dyad_correlation);
    }
    return report;
}

}  // namespace flownet
