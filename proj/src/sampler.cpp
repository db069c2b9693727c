#include "flownet/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flownet/errors.hpp"
#include "flownet/stats.hpp"

namespace flownet {

void McmcConfig::validate() const {
    if (burn_in < 0) throw ConfigError("burn_in must be non-negative");
    if (main_iterations <= 0) throw ConfigError("main_iterations must be positive");
    if (thin <= 0 || main_iterations % thin != 0) throw ConfigError("thin must divide main_iterations");
    if (adapt_window <= 0) throw ConfigError("adapt_window must be positive");
    if (prior_beta_var <= 0.0) throw ConfigError("prior_beta_var must be positive");
    if (prior_iw_df <= 3.0) throw ConfigError("prior_iw_df must exceed 3 for a proper 2x2 prior");
    if (prior_iw_scale <= 0.0) throw ConfigError("prior_iw_scale must be positive");
    if (!(rho_clamp > 0.0 && rho_clamp < 1.0)) throw ConfigError("rho_clamp must lie in (0,1)");
}

Eigen::Index PosteriorSamples::param_index(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) return static_cast<Eigen::Index>(k);
    }
    throw InputError("no posterior parameter named '" + name + "'");
}

Eigen::VectorXd PosteriorSamples::column(const std::string& name) const { return draws.col(param_index(name)); }

Eigen::Matrix2d wishart2(double df, const Eigen::Matrix2d& scale, Rng& rng) {
    if (!(df > 1.0)) throw NumericError("Wishart df must exceed dimension - 1");
    Eigen::LLT<Eigen::Matrix2d> llt(scale);
    if (llt.info() != Eigen::Success) throw NumericError("degenerate scale matrix in Wishart draw");
    const Eigen::Matrix2d l = llt.matrixL();
    Eigen::Matrix2d bartlett = Eigen::Matrix2d::Zero();
    bartlett(0, 0) = std::sqrt(rng.chi_squared(df));
    bartlett(1, 0) = rng.normal();
    bartlett(1, 1) = std::sqrt(rng.chi_squared(df - 1.0));
    const Eigen::Matrix2d la = l * bartlett;
    return la * la.transpose();
}

Eigen::Matrix2d inverse_wishart2(double df, const Eigen::Matrix2d& scale, Rng& rng) {
    const double det = scale.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) throw NumericError("degenerate scale matrix in inverse-Wishart draw");
    const Eigen::Matrix2d w = wishart2(df, scale.inverse(), rng);
    const double wdet = w.determinant();
    if (!(wdet > 0.0)) throw NumericError("singular Wishart draw");
    return w.inverse();
}

Eigen::Matrix2d update_sigma_ab(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double prior_df,
                                const Eigen::Matrix2d& prior_scale, Rng& rng) {
    if (a.size() != b.size() || a.size() < 2) throw InputError("update_sigma_ab needs matched effects for >= 2 nodes");
    Eigen::Matrix2d s = prior_scale;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const Eigen::Vector2d v(a[i], b[i]);
        s += v * v.transpose();
    }
    return inverse_wishart2(prior_df + static_cast<double>(a.size()), s, rng);
}

std::pair<double, double> update_dyad_cov(const std::vector<std::pair<double, double>>& nu_pairs, double prior_df,
                                          const Eigen::Matrix2d& prior_scale, double rho_clamp, Rng& rng) {
    if (nu_pairs.empty()) throw InputError("update_dyad_cov needs at least one pair");
    Eigen::Matrix2d s = prior_scale;
    for (const auto& [x, y] : nu_pairs) {
        const Eigen::Vector2d v(x, y);
        s += v * v.transpose();
    }
    const Eigen::Matrix2d w = inverse_wishart2(prior_df + static_cast<double>(nu_pairs.size()), s, rng);
    const double sigma_nu2 = 0.5 * (w(0, 0) + w(1, 1));
    double rho = w(0, 1) / sigma_nu2;
    rho = std::clamp(rho, -rho_clamp, rho_clamp);
    return {sigma_nu2, rho};
}

namespace {

const char* star_string(double p) {
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "";
}

}  // namespace

std::vector<ParameterSummaryRow> summarize_draws(const std::vector<std::string>& names, const Eigen::MatrixXd& draws) {
    if (draws.rows() < 2) throw InputError("posterior summary needs at least two draws");
    if (draws.cols() != static_cast<Eigen::Index>(names.size())) throw InputError("names do not match draw columns");
    std::vector<ParameterSummaryRow> out;
    out.reserve(names.size());
    const double n = static_cast<double>(draws.rows());
    for (Eigen::Index k = 0; k < draws.cols(); ++k) {
        ParameterSummaryRow row;
        row.name = names[static_cast<std::size_t>(k)];
        row.mean = draws.col(k).mean();
        row.sd = std::sqrt((draws.col(k).array() - row.mean).square().sum() / (n - 1.0));
        const double frac_le = (draws.col(k).array() <= 0.0).count() / n;
        const double frac_ge = (draws.col(k).array() >= 0.0).count() / n;
        row.pseudo_p = std::min(1.0, 2.0 * std::min(frac_le, frac_ge));
        row.stars = star_string(row.pseudo_p);
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<ParameterSummaryRow> summarize_posterior(const PosteriorSamples& samples) {
    return summarize_draws(samples.names, samples.draws);
}

namespace {

// Dense caches for one chain. eta = clamp(xb + ab + nu), ex = exp(eta);
// log-likelihood terms drop the constant log(y!).
struct ChainWork {
    Eigen::VectorXd xb;   // X * beta
    Eigen::VectorXd ab;   // a[src] + b[dst]
    Eigen::VectorXd eta;  // clamped predictor
    Eigen::VectorXd ex;   // exp(eta)
};

double clamp_eta(double v, double c) { return v < -c ? -c : (v > c ? c : v); }

void rebuild_caches(const DyadDesign& design, const EffectsState& st, ChainWork& w) {
    w.xb = design.X * st.beta;
    const int rows = design.row_count();
    w.ab.resize(rows);
    w.eta.resize(rows);
    w.ex.resize(rows);
    for (int r = 0; r < rows; ++r) {
        w.ab[r] = st.a[design.row_src[static_cast<std::size_t>(r)]] + st.b[design.row_dst[static_cast<std::size_t>(r)]];
        w.eta[r] = clamp_eta(w.xb[r] + w.ab[r] + st.nu[r], design.eta_clamp);
        w.ex[r] = std::exp(w.eta[r]);
    }
}

double data_loglik(const DyadDesign& design, const ChainWork& w) {
    double ll = 0.0;
    for (int r = 0; r < design.row_count(); ++r) ll += design.counts[r] * w.eta[r] - w.ex[r];
    return ll;
}

// Draw from MVN(P^-1 lin, P^-1) given the precision matrix P.
Eigen::VectorXd sample_mvn(const Eigen::MatrixXd& prec, const Eigen::VectorXd& lin, Rng& rng) {
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericError("degenerate precision matrix in a group move");
    Eigen::VectorXd z(lin.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
    return llt.solve(lin) + llt.matrixU().solve(z);
}

[[noreturn]] void abort_non_finite(int iteration, const EffectsState& st) {
    std::ostringstream dump;
    dump << "non-finite likelihood at iteration " << iteration << "; state:"
         << " |beta|=" << st.beta.norm() << " |a|=" << st.a.norm() << " |b|=" << st.b.norm()
         << " sigma_a2=" << st.sigma_ab(0, 0) << " sigma_b2=" << st.sigma_ab(1, 1)
         << " sigma_ab=" << st.sigma_ab(0, 1) << " sigma_nu2=" << st.sigma_nu2 << " rho=" << st.rho;
    throw NumericError(dump.str());
}

}  // namespace

PosteriorSamples fit_srm(const DyadDesign& design, const McmcConfig& config) {
    config.validate();
    const int n = design.node_count();
    const int rows = design.row_count();
    const int p = design.column_count();
    const int n_pairs = static_cast<int>(design.pair_rows.size());
    const double clamp = design.eta_clamp;

    Rng rng = Rng(config.seed).child("fit_srm");

    EffectsState st;
    st.beta = Eigen::VectorXd::Zero(p);
    if (!design.columns.empty() && design.columns[0].name == "intercept") {
        st.beta[0] = std::log(design.counts.mean() + 1e-4);
    }
    st.a = Eigen::VectorXd::Zero(n);
    st.b = Eigen::VectorXd::Zero(n);
    st.nu = Eigen::VectorXd::Zero(rows);
    st.sigma_ab = 0.25 * Eigen::Matrix2d::Identity();
    st.sigma_nu2 = 1.0;
    st.rho = 0.0;

    ChainWork work;
    rebuild_caches(design, st, work);

    const Eigen::Matrix2d prior_scale = config.prior_iw_scale * Eigen::Matrix2d::Identity();

    AdaptiveScale beta_scale(2.38 / std::sqrt(static_cast<double>(p)), config.target_accept_coef);

    // Per-unit proposal scales, initialized from the local count information
    // (high-flow units have tight conditionals) and tuned individually
    // during burn-in.
    std::vector<double> pair_prop_scale(static_cast<std::size_t>(n_pairs));
    for (int q = 0; q < n_pairs; ++q) {
        const auto [r1, r2] = design.pair_rows[static_cast<std::size_t>(q)];
        pair_prop_scale[static_cast<std::size_t>(q)] = 1.0 / std::sqrt(1.0 + design.counts[r1] + design.counts[r2]);
    }
    std::vector<double> node_prop_scale(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double local = 0.0;
        for (int r : design.rows_as_sender[static_cast<std::size_t>(i)]) local += design.counts[r];
        for (int r : design.rows_as_receiver[static_cast<std::size_t>(i)]) local += design.counts[r];
        node_prop_scale[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(1.0 + 0.5 * local);
    }

    // Proposal shape for the coefficient block, refined from burn-in draws.
    Eigen::MatrixXd prop_chol = Eigen::MatrixXd::Identity(p, p);
    std::vector<Eigen::VectorXd> beta_history;
    beta_history.reserve(static_cast<std::size_t>(config.burn_in));

    Eigen::Matrix2d sigma_ab_inv = st.sigma_ab.inverse();

    // Static pieces of the group moves: which coefficients pair with sender
    // effects (intercept + origin terms), with receiver effects, and the
    // cross-products needed for the dyadic-residual sweep.
    std::vector<Eigen::Index> origin_cols, dest_cols;
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(design.columns.size()); ++k) {
        const auto& name = design.columns[static_cast<std::size_t>(k)].name;
        const bool is_intercept = name == "intercept";
        if (is_intercept || (name.size() > 7 && name.compare(name.size() - 7, 7, "_origin") == 0)) {
            origin_cols.push_back(k);
        }
        if (is_intercept || (name.size() > 12 && name.compare(name.size() - 12, 12, "_destination") == 0)) {
            dest_cols.push_back(k);
        }
    }
    Eigen::MatrixXd node_mat_a(n, static_cast<Eigen::Index>(origin_cols.size()));
    Eigen::MatrixXd node_mat_b(n, static_cast<Eigen::Index>(dest_cols.size()));
    for (int i = 0; i < n; ++i) {
        const int sender_row = design.rows_as_sender[static_cast<std::size_t>(i)].front();
        const int receiver_row = design.rows_as_receiver[static_cast<std::size_t>(i)].front();
        for (std::size_t k = 0; k < origin_cols.size(); ++k) {
            node_mat_a(i, static_cast<Eigen::Index>(k)) = design.X(sender_row, origin_cols[k]);
        }
        for (std::size_t k = 0; k < dest_cols.size(); ++k) {
            node_mat_b(i, static_cast<Eigen::Index>(k)) = design.X(receiver_row, dest_cols[k]);
        }
    }
    const Eigen::MatrixXd mtm_a = node_mat_a.transpose() * node_mat_a;
    const Eigen::MatrixXd mtm_b = node_mat_b.transpose() * node_mat_b;

    std::vector<int> sibling(static_cast<std::size_t>(rows));
    for (const auto& [r1, r2] : design.pair_rows) {
        sibling[static_cast<std::size_t>(r1)] = r2;
        sibling[static_cast<std::size_t>(r2)] = r1;
    }
    const Eigen::MatrixXd xtx = design.X.transpose() * design.X;
    Eigen::MatrixXd xtx_swap = Eigen::MatrixXd::Zero(p, p);
    for (const auto& [r1, r2] : design.pair_rows) {
        const Eigen::VectorXd x1 = design.X.row(r1).transpose();
        const Eigen::VectorXd x2 = design.X.row(r2).transpose();
        xtx_swap += x1 * x2.transpose() + x2 * x1.transpose();
    }

    Eigen::VectorXd beta_prop(p), xb_prop(rows), eta_prop(rows), ex_prop(rows), z(p);
    Eigen::VectorXd nu_swap_vec(rows);

    const int total_iterations = config.burn_in + config.main_iterations;
    const int n_draws = config.draw_count();

    PosteriorSamples samples;
    samples.include_quality = design.include_quality;
    samples.excluded_covariates = design.excluded_covariates;
    samples.node_ids = design.node_ids;
    for (const auto& col : design.columns) samples.names.push_back(col.name);
    samples.names.insert(samples.names.end(), {"sigma_a2", "sigma_ab", "sigma_b2", "sigma_nu2", "rho"});
    samples.draws.resize(n_draws, static_cast<Eigen::Index>(samples.names.size()));
    samples.beta_std_draws.resize(n_draws, p);
    if (config.store_effects) {
        samples.sender_draws.resize(n_draws, n);
        samples.receiver_draws.resize(n_draws, n);
    }

    long long main_beta_acc = 0, main_beta_prop = 0;
    long long main_pair_acc = 0, main_pair_prop = 0;
    long long main_node_acc = 0, main_node_prop = 0;
    int saved = 0;

    for (int it = 1; it <= total_iterations; ++it) {
        const bool adapting = it <= config.burn_in;
        const bool main_phase = !adapting;

        // (1) coefficient block: adaptive random-walk MH on the full data likelihood
        {
            for (int k = 0; k < p; ++k) z[k] = rng.normal();
            beta_prop = st.beta + beta_scale.scale() * (prop_chol * z);
            xb_prop.noalias() = design.X * beta_prop;
            double delta = 0.0;
            for (int r = 0; r < rows; ++r) {
                const double e_new = clamp_eta(xb_prop[r] + work.ab[r] + st.nu[r], clamp);
                const double x_new = std::exp(e_new);
                delta += design.counts[r] * (e_new - work.eta[r]) - x_new + work.ex[r];
                eta_prop[r] = e_new;
                ex_prop[r] = x_new;
            }
            delta += 0.5 * (st.beta.squaredNorm() - beta_prop.squaredNorm()) / config.prior_beta_var;
            const bool accept = std::isfinite(delta) && std::log(rng.uniform_pos()) < delta;
            if (accept) {
                st.beta.swap(beta_prop);
                work.xb.swap(xb_prop);
                work.eta.swap(eta_prop);
                work.ex.swap(ex_prop);
            }
            if (adapting) beta_scale.step(accept ? 1.0 : 0.0);
            if (main_phase) {
                ++main_beta_prop;
                if (accept) ++main_beta_acc;
            }
        }

        // (2) dyadic residual pairs: joint bivariate MH per unordered pair
        {
            const double gain = AdaptiveScale::gain(it);
            const double denom = st.sigma_nu2 * (1.0 - st.rho * st.rho);
            for (int q = 0; q < n_pairs; ++q) {
                const auto [r1, r2] = design.pair_rows[static_cast<std::size_t>(q)];
                const double s = pair_prop_scale[static_cast<std::size_t>(q)];
                const double v1 = st.nu[r1], v2 = st.nu[r2];
                const double w1 = v1 + s * rng.normal();
                const double w2 = v2 + s * rng.normal();
                const double e1 = clamp_eta(work.xb[r1] + work.ab[r1] + w1, clamp);
                const double e2 = clamp_eta(work.xb[r2] + work.ab[r2] + w2, clamp);
                const double x1 = std::exp(e1), x2 = std::exp(e2);
                double delta = design.counts[r1] * (e1 - work.eta[r1]) - x1 + work.ex[r1] +
                               design.counts[r2] * (e2 - work.eta[r2]) - x2 + work.ex[r2];
                const double quad_new = w1 * w1 + w2 * w2 - 2.0 * st.rho * w1 * w2;
                const double quad_old = v1 * v1 + v2 * v2 - 2.0 * st.rho * v1 * v2;
                delta -= 0.5 * (quad_new - quad_old) / denom;
                const bool accept = std::isfinite(delta) && std::log(rng.uniform_pos()) < delta;
                if (accept) {
                    st.nu[r1] = w1;
                    st.nu[r2] = w2;
                    work.eta[r1] = e1;
                    work.eta[r2] = e2;
                    work.ex[r1] = x1;
                    work.ex[r2] = x2;
                }
                if (adapting) {
                    pair_prop_scale[static_cast<std::size_t>(q)] *=
                        std::exp(gain * ((accept ? 1.0 : 0.0) - config.target_accept_pair));
                }
                if (main_phase) {
                    ++main_pair_prop;
                    if (accept) ++main_pair_acc;
                }
            }
        }

        // (3) node effects: joint bivariate MH on (a_i, b_i) against row i and column i
        {
            const double gain = AdaptiveScale::gain(it);
            for (int i = 0; i < n; ++i) {
                const double s = node_prop_scale[static_cast<std::size_t>(i)];
                const double ai = st.a[i], bi = st.b[i];
                const double aprop = ai + s * rng.normal();
                const double bprop = bi + s * rng.normal();
                const double da = aprop - ai, db = bprop - bi;
                double delta = 0.0;
                for (int r : design.rows_as_sender[static_cast<std::size_t>(i)]) {
                    const double e_new = clamp_eta(work.xb[r] + work.ab[r] + da + st.nu[r], clamp);
                    delta += design.counts[r] * (e_new - work.eta[r]) - std::exp(e_new) + work.ex[r];
                }
                for (int r : design.rows_as_receiver[static_cast<std::size_t>(i)]) {
                    const double e_new = clamp_eta(work.xb[r] + work.ab[r] + db + st.nu[r], clamp);
                    delta += design.counts[r] * (e_new - work.eta[r]) - std::exp(e_new) + work.ex[r];
                }
                const Eigen::Vector2d v_old(ai, bi), v_new(aprop, bprop);
                delta -= 0.5 * (v_new.dot(sigma_ab_inv * v_new) - v_old.dot(sigma_ab_inv * v_old));
                const bool accept = std::isfinite(delta) && std::log(rng.uniform_pos()) < delta;
                if (accept) {
                    st.a[i] = aprop;
                    st.b[i] = bprop;
                    for (int r : design.rows_as_sender[static_cast<std::size_t>(i)]) {
                        work.ab[r] += da;
                        work.eta[r] = clamp_eta(work.xb[r] + work.ab[r] + st.nu[r], clamp);
                        work.ex[r] = std::exp(work.eta[r]);
                    }
                    for (int r : design.rows_as_receiver[static_cast<std::size_t>(i)]) {
                        work.ab[r] += db;
                        work.eta[r] = clamp_eta(work.xb[r] + work.ab[r] + st.nu[r], clamp);
                        work.ex[r] = std::exp(work.eta[r]);
                    }
                }
                if (adapting) {
                    node_prop_scale[static_cast<std::size_t>(i)] *=
                        std::exp(gain * ((accept ? 1.0 : 0.0) - config.target_accept_pair));
                }
                if (main_phase) {
                    ++main_node_prop;
                    if (accept) ++main_node_acc;
                }
            }
        }

        // Group moves along likelihood-invariant directions. Shifting the
        // sender effects by M_a c while adding c to the matching origin
        // coefficients leaves every eta unchanged, so these directions are
        // ridges the coordinate blocks cross extremely slowly; each one is
        // sampled from its exact Gaussian prior conditional instead.
        if (!origin_cols.empty()) {
            const Eigen::VectorXd u_vec = sigma_ab_inv(0, 0) * st.a + sigma_ab_inv(0, 1) * st.b;
            Eigen::VectorXd lin = node_mat_a.transpose() * u_vec;
            Eigen::MatrixXd prec = sigma_ab_inv(0, 0) * mtm_a;
            for (std::size_t k = 0; k < origin_cols.size(); ++k) {
                lin[static_cast<Eigen::Index>(k)] -= st.beta[origin_cols[k]] / config.prior_beta_var;
                prec(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += 1.0 / config.prior_beta_var;
            }
            const Eigen::VectorXd shift = sample_mvn(prec, lin, rng);
            const Eigen::VectorXd node_shift = node_mat_a * shift;
            for (std::size_t k = 0; k < origin_cols.size(); ++k) st.beta[origin_cols[k]] += shift[static_cast<Eigen::Index>(k)];
            for (int i = 0; i < n; ++i) {
                st.a[i] -= node_shift[i];
                for (int r : design.rows_as_sender[static_cast<std::size_t>(i)]) {
                    work.xb[r] += node_shift[i];
                    work.ab[r] -= node_shift[i];
                }
            }
        }
        if (!dest_cols.empty()) {
            const Eigen::VectorXd u_vec = sigma_ab_inv(1, 1) * st.b + sigma_ab_inv(0, 1) * st.a;
            Eigen::VectorXd lin = node_mat_b.transpose() * u_vec;
            Eigen::MatrixXd prec = sigma_ab_inv(1, 1) * mtm_b;
            for (std::size_t k = 0; k < dest_cols.size(); ++k) {
                lin[static_cast<Eigen::Index>(k)] -= st.beta[dest_cols[k]] / config.prior_beta_var;
                prec(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) += 1.0 / config.prior_beta_var;
            }
            const Eigen::VectorXd shift = sample_mvn(prec, lin, rng);
            const Eigen::VectorXd node_shift = node_mat_b * shift;
            for (std::size_t k = 0; k < dest_cols.size(); ++k) st.beta[dest_cols[k]] += shift[static_cast<Eigen::Index>(k)];
            for (int i = 0; i < n; ++i) {
                st.b[i] -= node_shift[i];
                for (int r : design.rows_as_receiver[static_cast<std::size_t>(i)]) {
                    work.xb[r] += node_shift[i];
                    work.ab[r] -= node_shift[i];
                }
            }
        }
        {
            // nu <-> beta over the whole coefficient space: nu -= X c, beta += c.
            const double f = 1.0 / (st.sigma_nu2 * (1.0 - st.rho * st.rho));
            for (int r = 0; r < rows; ++r) nu_swap_vec[r] = st.nu[sibling[static_cast<std::size_t>(r)]];
            const Eigen::VectorXd xnu = design.X.transpose() * st.nu;
            const Eigen::VectorXd xnu_swap = design.X.transpose() * nu_swap_vec;
            Eigen::VectorXd lin = f * (xnu - st.rho * xnu_swap) - st.beta / config.prior_beta_var;
            Eigen::MatrixXd prec = f * (xtx - st.rho * xtx_swap);
            prec.diagonal().array() += 1.0 / config.prior_beta_var;
            const Eigen::VectorXd shift = sample_mvn(prec, lin, rng);
            const Eigen::VectorXd row_shift = design.X * shift;
            st.beta += shift;
            for (int r = 0; r < rows; ++r) {
                st.nu[r] -= row_shift[r];
                work.xb[r] += row_shift[r];
            }
        }

        // (4) Sigma_ab from its inverse-Wishart full conditional
        st.sigma_ab = update_sigma_ab(st.a, st.b, config.prior_iw_df, prior_scale, rng);
        sigma_ab_inv = st.sigma_ab.inverse();

        // (5) dyadic covariance with the equal-diagonal projection
        {
            std::vector<std::pair<double, double>> nu_pairs;
            nu_pairs.reserve(static_cast<std::size_t>(n_pairs));
            for (const auto& [r1, r2] : design.pair_rows) nu_pairs.push_back({st.nu[r1], st.nu[r2]});
            const auto [s2, rho] = update_dyad_cov(nu_pairs, config.prior_iw_df, prior_scale, config.rho_clamp, rng);
            st.sigma_nu2 = s2;
            st.rho = rho;
        }

        if (adapting) {
            beta_history.push_back(st.beta);
            if (it % config.adapt_window == 0) {
                // Refresh the coefficient proposal shape from the second half of burn-in.
                if (p > 1 && it >= config.burn_in / 2 && beta_history.size() >= static_cast<std::size_t>(4 * p)) {
                    const std::size_t start = beta_history.size() / 2;
                    const std::size_t m = beta_history.size() - start;
                    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
                    for (std::size_t t = start; t < beta_history.size(); ++t) mean += beta_history[t];
                    mean /= static_cast<double>(m);
                    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
                    for (std::size_t t = start; t < beta_history.size(); ++t) {
                        const Eigen::VectorXd d = beta_history[t] - mean;
                        cov += d * d.transpose();
                    }
                    cov /= static_cast<double>(m > 1 ? m - 1 : 1);
                    cov += 1e-9 * Eigen::MatrixXd::Identity(p, p);
                    Eigen::LLT<Eigen::MatrixXd> llt(cov);
                    if (llt.info() == Eigen::Success) prop_chol = llt.matrixL();
                }
            }
        }

        // Periodic exact recompute guards against cache drift and non-finite states.
        if (it % 200 == 0 || it == total_iterations) {
            rebuild_caches(design, st, work);
            if (!std::isfinite(data_loglik(design, work))) abort_non_finite(it, st);
        }

        if (main_phase) {
            const int main_it = it - config.burn_in;
            if (main_it % config.thin == 0) {
                const Eigen::VectorXd beta_orig = design.to_original_scale(st.beta);
                for (int k = 0; k < p; ++k) {
                    samples.draws(saved, k) = beta_orig[k];
                    samples.beta_std_draws(saved, k) = st.beta[k];
                }
                samples.draws(saved, p + 0) = st.sigma_ab(0, 0);
                samples.draws(saved, p + 1) = st.sigma_ab(0, 1);
                samples.draws(saved, p + 2) = st.sigma_ab(1, 1);
                samples.draws(saved, p + 3) = st.sigma_nu2;
                samples.draws(saved, p + 4) = st.rho;
                if (config.store_effects) {
                    for (int i = 0; i < n; ++i) {
                        samples.sender_draws(saved, i) = st.a[i];
                        samples.receiver_draws(saved, i) = st.b[i];
                    }
                }
                ++saved;
            }
        }
    }

    samples.acceptance_rates["beta"] = main_beta_prop ? static_cast<double>(main_beta_acc) / main_beta_prop : 0.0;
    samples.acceptance_rates["nu_pairs"] = main_pair_prop ? static_cast<double>(main_pair_acc) / main_pair_prop : 0.0;
    samples.acceptance_rates["node_effects"] = main_node_prop ? static_cast<double>(main_node_acc) / main_node_prop : 0.0;
    return samples;
}

}  // namespace flownet
