#include "flownet/two_stage.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>

#include "flownet/errors.hpp"
#include "flownet/network.hpp"
#include "flownet/parallel.hpp"
#include "flownet/stats.hpp"

namespace flownet {

PredictedTransfers predict_transfers(const PosteriorSamples& stage1, const DyadDesign& design) {
    if (stage1.include_quality) {
        throw ProvenanceError(
            "stage-1 fit included quality covariates; refit with include_quality=false before predicting transfers");
    }
    if (stage1.node_ids != design.node_ids) throw InputError("posterior and design disagree on node ids");
    if (stage1.beta_std_draws.cols() != design.X.cols()) throw InputError("posterior and design disagree on columns");
    const int n = design.node_count();
    const int n_draws = stage1.draw_count();
    if (n_draws == 0) throw InputError("predict_transfers needs at least one draw");

    PredictedTransfers out;
    out.node_ids = design.node_ids;
    out.matrix = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd accum = Eigen::VectorXd::Zero(design.row_count());
    for (int d = 0; d < n_draws; ++d) {
        const Eigen::VectorXd xb = design.X * stage1.beta_std_draws.row(d).transpose();
        for (int r = 0; r < design.row_count(); ++r) {
            accum[r] += std::exp(std::clamp(xb[r], -design.eta_clamp, design.eta_clamp));
        }
    }
    accum /= static_cast<double>(n_draws);
    for (int r = 0; r < design.row_count(); ++r) {
        out.matrix(design.row_src[static_cast<std::size_t>(r)], design.row_dst[static_cast<std::size_t>(r)]) = accum[r];
    }
    out.provenance.include_quality = false;
    out.provenance.effects_excluded = true;
    out.provenance.excluded_covariates = stage1.excluded_covariates;
    return out;
}

QualityMatrix overall_quality(const std::vector<std::string>& ids, const std::vector<long long>& node_counts) {
    if (ids.size() != node_counts.size()) throw InputError("overall_quality: ids and counts differ in length");
    for (std::size_t i = 0; i < node_counts.size(); ++i) {
        if (node_counts[i] < 0) throw InputError("negative outcome count for node '" + ids[i] + "'");
    }
    const int n = static_cast<int>(ids.size());
    QualityMatrix q;
    q.node_ids = ids;
    q.w = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j) {
                q.w(i, j) = static_cast<double>(node_counts[static_cast<std::size_t>(i)] +
                                                node_counts[static_cast<std::size_t>(j)]);
            }
        }
    }
    return q;
}

Eigen::VectorXd QualityDesign::to_original_scale(const Eigen::VectorXd& theta_std) const {
    return back_transform_coefficients(columns, theta_std);
}

namespace {

enum class PairCategory { Both, ExactlyOne, Neither };

PairCategory pair_category(double vi, double vj) {
    const int s = (vi != 0.0 ? 1 : 0) + (vj != 0.0 ? 1 : 0);
    return s == 2 ? PairCategory::Both : (s == 1 ? PairCategory::ExactlyOne : PairCategory::Neither);
}

std::string ownership_category(double pub_i, double pub_j) {
    const int s = (pub_i != 0.0 ? 1 : 0) + (pub_j != 0.0 ? 1 : 0);
    if (s == 2) return "public-public";
    if (s == 0) return "private-private";
    return "public-private";
}

}  // namespace

QualityDesign assemble_quality_design(const QualityMatrix& w, const PredictedTransfers& that, const NodeTable& nodes,
                                      const QualityModelSpec& spec) {
    const int n = nodes.size();
    if (n < 3) throw InputError("quality design requires at least three nodes");
    {
        std::set<std::string> a(nodes.ids.begin(), nodes.ids.end());
        std::set<std::string> b(w.node_ids.begin(), w.node_ids.end());
        std::set<std::string> c(that.node_ids.begin(), that.node_ids.end());
        if (a != b || a != c) throw InputError("quality inputs disagree on node ids");
    }

    QualityDesign design;
    design.node_ids = nodes.ids;
    std::sort(design.node_ids.begin(), design.node_ids.end());
    design.eta_clamp = spec.eta_clamp;

    auto position_in = [](const std::vector<std::string>& ids, const std::string& id) {
        return static_cast<int>(std::find(ids.begin(), ids.end(), id) - ids.begin());
    };
    std::vector<int> node_pos(static_cast<std::size_t>(n)), w_pos(static_cast<std::size_t>(n)), t_pos(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const auto& id = design.node_ids[static_cast<std::size_t>(k)];
        node_pos[static_cast<std::size_t>(k)] = position_in(nodes.ids, id);
        w_pos[static_cast<std::size_t>(k)] = position_in(w.node_ids, id);
        t_pos[static_cast<std::size_t>(k)] = position_in(that.node_ids, id);
    }

    const int n_pairs = n * (n - 1) / 2;
    design.outcome.resize(n_pairs);
    design.pair_i.resize(static_cast<std::size_t>(n_pairs));
    design.pair_j.resize(static_cast<std::size_t>(n_pairs));
    design.pairs_of_node.assign(static_cast<std::size_t>(n), {});

    std::vector<double> that_sym(static_cast<std::size_t>(n_pairs));
    int p = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            design.pair_i[static_cast<std::size_t>(p)] = i;
            design.pair_j[static_cast<std::size_t>(p)] = j;
            design.pairs_of_node[static_cast<std::size_t>(i)].push_back(p);
            design.pairs_of_node[static_cast<std::size_t>(j)].push_back(p);
            const double wij = w.w(w_pos[static_cast<std::size_t>(i)], w_pos[static_cast<std::size_t>(j)]);
            if (wij < 0.0 || std::floor(wij) != wij) throw InputError("quality outcome must hold non-negative counts");
            design.outcome[p] = wij;
            that_sym[static_cast<std::size_t>(p)] = that.matrix(t_pos[static_cast<std::size_t>(i)], t_pos[static_cast<std::size_t>(j)]) +
                                                    that.matrix(t_pos[static_cast<std::size_t>(j)], t_pos[static_cast<std::size_t>(i)]);
            ++p;
        }
    }

    struct RawColumn {
        std::string name;
        std::vector<double> values;
        bool continuous = false;
    };
    std::vector<RawColumn> cols;
    cols.push_back({"intercept", std::vector<double>(static_cast<std::size_t>(n_pairs), 1.0), false});
    cols.push_back({"predicted_transfers", that_sym, true});

    for (const auto& cov : spec.pair_average_covariates) {
        const auto& raw = nodes.column(cov);
        std::vector<double> per_node(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            double v = raw[static_cast<std::size_t>(node_pos[static_cast<std::size_t>(k)])];
            if (!std::isfinite(v)) {
                throw InputError("node '" + design.node_ids[static_cast<std::size_t>(k)] + "' missing value for column '" + cov + "'");
            }
            if (cov == "hd" && spec.log_discharges) {
                if (!(v > 0.0)) throw InputError("discharges must be positive for the log scale");
                v = std::log(v);
            }
            per_node[static_cast<std::size_t>(k)] = v;
        }
        RawColumn c{cov + "_pair", std::vector<double>(static_cast<std::size_t>(n_pairs)), true};
        for (int q = 0; q < n_pairs; ++q) {
            c.values[static_cast<std::size_t>(q)] = 0.5 * (per_node[static_cast<std::size_t>(design.pair_i[static_cast<std::size_t>(q)])] +
                                                           per_node[static_cast<std::size_t>(design.pair_j[static_cast<std::size_t>(q)])]);
        }
        cols.push_back(std::move(c));
    }

    auto dyadic_category_columns = [&](const std::string& cov, const std::string& prefix) {
        const auto& raw = nodes.column(cov);
        RawColumn both{prefix + "_both", std::vector<double>(static_cast<std::size_t>(n_pairs), 0.0), false};
        RawColumn one{prefix + "_one", std::vector<double>(static_cast<std::size_t>(n_pairs), 0.0), false};
        for (int q = 0; q < n_pairs; ++q) {
            const double vi = raw[static_cast<std::size_t>(node_pos[static_cast<std::size_t>(design.pair_i[static_cast<std::size_t>(q)])])];
            const double vj = raw[static_cast<std::size_t>(node_pos[static_cast<std::size_t>(design.pair_j[static_cast<std::size_t>(q)])])];
            switch (pair_category(vi, vj)) {
                case PairCategory::Both: both.values[static_cast<std::size_t>(q)] = 1.0; break;
                case PairCategory::ExactlyOne: one.values[static_cast<std::size_t>(q)] = 1.0; break;
                case PairCategory::Neither: break;
            }
        }
        cols.push_back(std::move(both));
        cols.push_back(std::move(one));
    };

    std::vector<double> own_priv_priv, own_pub_priv;
    if (spec.include_ownership || spec.interaction) {
        const auto& pub = nodes.column("public");
        own_priv_priv.assign(static_cast<std::size_t>(n_pairs), 0.0);
        own_pub_priv.assign(static_cast<std::size_t>(n_pairs), 0.0);
        int count_pub_pub = 0, count_priv_priv = 0, count_pub_priv = 0;
        for (int q = 0; q < n_pairs; ++q) {
            const double pi = pub[static_cast<std::size_t>(node_pos[static_cast<std::size_t>(design.pair_i[static_cast<std::size_t>(q)])])];
            const double pj = pub[static_cast<std::size_t>(node_pos[static_cast<std::size_t>(design.pair_j[static_cast<std::size_t>(q)])])];
            const std::string cat = ownership_category(pi, pj);
            if (cat == "private-private") {
                own_priv_priv[static_cast<std::size_t>(q)] = 1.0;
                ++count_priv_priv;
            } else if (cat == "public-private") {
                own_pub_priv[static_cast<std::size_t>(q)] = 1.0;
                ++count_pub_priv;
            } else {
                ++count_pub_pub;
            }
        }
        if (spec.interaction) {
            if (count_pub_pub == 0) throw InputError("ownership category 'public-public' has zero pairs");
            if (count_priv_priv == 0) throw InputError("ownership category 'private-private' has zero pairs");
            if (count_pub_priv == 0) throw InputError("ownership category 'public-private' has zero pairs");
        }
        if (spec.include_ownership) {
            cols.push_back({"own_private_private", own_priv_priv, false});
            cols.push_back({"own_public_private", own_pub_priv, false});
        }
    }
    if (spec.include_teach) dyadic_category_columns("teach", "teach");
    if (spec.include_mono) dyadic_category_columns("mono", "mono");
    if (spec.include_techno) dyadic_category_columns("techno", "techno");

    if (spec.interaction) {
        RawColumn ipp{"that_x_private_private", std::vector<double>(static_cast<std::size_t>(n_pairs), 0.0), false};
        RawColumn ipv{"that_x_public_private", std::vector<double>(static_cast<std::size_t>(n_pairs), 0.0), false};
        for (int q = 0; q < n_pairs; ++q) {
            ipp.values[static_cast<std::size_t>(q)] = that_sym[static_cast<std::size_t>(q)] * own_priv_priv[static_cast<std::size_t>(q)];
            ipv.values[static_cast<std::size_t>(q)] = that_sym[static_cast<std::size_t>(q)] * own_pub_priv[static_cast<std::size_t>(q)];
        }
        cols.push_back(std::move(ipp));
        cols.push_back(std::move(ipv));
    }

    const int k_cols = static_cast<int>(cols.size());
    design.Z.resize(n_pairs, k_cols);
    design.columns.resize(static_cast<std::size_t>(k_cols));
    for (int k = 0; k < k_cols; ++k) {
        auto& meta = design.columns[static_cast<std::size_t>(k)];
        meta.name = cols[static_cast<std::size_t>(k)].name;
        const auto& vals = cols[static_cast<std::size_t>(k)].values;
        if (spec.standardize && cols[static_cast<std::size_t>(k)].continuous) {
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= n_pairs;
            double ss = 0.0;
            for (double v : vals) ss += (v - mean) * (v - mean);
            const double sd = std::sqrt(ss / (n_pairs > 1 ? n_pairs - 1 : 1));
            if (sd > 1e-12) {
                meta.center = mean;
                meta.scale = sd;
                meta.standardized = true;
            }
        }
        for (int q = 0; q < n_pairs; ++q) {
            design.Z(q, k) = (vals[static_cast<std::size_t>(q)] - meta.center) / meta.scale;
        }
    }

    // Record the additive node decomposition of every pair-average column.
    for (const auto& cov : spec.pair_average_covariates) {
        const std::string col_name = cov + "_pair";
        for (int k = 0; k < k_cols; ++k) {
            if (design.columns[static_cast<std::size_t>(k)].name != col_name) continue;
            const auto& meta = design.columns[static_cast<std::size_t>(k)];
            const auto& raw = nodes.column(cov);
            AdditiveNodeColumn add;
            add.column = k;
            add.intercept_comp = meta.center / meta.scale;
            add.node_values.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                double v = raw[static_cast<std::size_t>(node_pos[static_cast<std::size_t>(i)])];
                if (cov == "hd" && spec.log_discharges) v = std::log(v);
                add.node_values[static_cast<std::size_t>(i)] = v / (2.0 * meta.scale);
            }
            design.additive_columns.push_back(std::move(add));
            break;
        }
    }
    return design;
}

Eigen::Index QualityPosterior::param_index(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) return static_cast<Eigen::Index>(k);
    }
    throw InputError("no posterior parameter named '" + name + "'");
}

Eigen::VectorXd QualityPosterior::column(const std::string& name) const { return draws.col(param_index(name)); }

namespace {

double clamp_eta(double v, double c) { return v < -c ? -c : (v > c ? c : v); }

}  // namespace

QualityPosterior fit_quality_model(const QualityMatrix& w, const PredictedTransfers& that, const NodeTable& nodes,
                                   const QualityModelSpec& spec, const McmcConfig& config) {
    if (!that.provenance.effects_excluded || that.provenance.include_quality) {
        throw ProvenanceError("predicted transfers lack a clean stage-1 lineage (quality excluded, effects excluded)");
    }
    config.validate();
    const QualityDesign design = assemble_quality_design(w, that, nodes, spec);
    const int n = design.node_count();
    const int n_pairs = design.pair_count();
    const int k = static_cast<int>(design.columns.size());
    const double clamp = design.eta_clamp;

    Rng rng = Rng(config.seed).child("fit_quality");

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
    theta[0] = std::log(design.outcome.mean() + 1e-4);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd eps = Eigen::VectorXd::Zero(n_pairs);
    double sigma_u2 = 0.5, sigma_eps2 = 0.5;

    Eigen::VectorXd zb = design.Z * theta;
    Eigen::VectorXd uu(n_pairs), eta(n_pairs), ex(n_pairs);
    auto rebuild = [&] {
        zb = design.Z * theta;
        for (int q = 0; q < n_pairs; ++q) {
            uu[q] = u[design.pair_i[static_cast<std::size_t>(q)]] + u[design.pair_j[static_cast<std::size_t>(q)]];
            eta[q] = clamp_eta(zb[q] + uu[q] + eps[q], clamp);
            ex[q] = std::exp(eta[q]);
        }
    };
    rebuild();

    AdaptiveScale coef_scale(2.38 / std::sqrt(static_cast<double>(k)), config.target_accept_coef);
    std::vector<double> eps_prop_scale(static_cast<std::size_t>(n_pairs));
    for (int q = 0; q < n_pairs; ++q) eps_prop_scale[static_cast<std::size_t>(q)] = 1.0 / std::sqrt(1.0 + design.outcome[q]);
    std::vector<double> u_prop_scale(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double local = 0.0;
        for (int q : design.pairs_of_node[static_cast<std::size_t>(i)]) local += design.outcome[q];
        u_prop_scale[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(1.0 + local);
    }
    Eigen::MatrixXd prop_chol = Eigen::MatrixXd::Identity(k, k);
    std::vector<Eigen::VectorXd> theta_history;
    const bool has_intercept = !design.columns.empty() && design.columns[0].name == "intercept";
    const Eigen::MatrixXd ztz = design.Z.transpose() * design.Z;

    const int n_draws = config.draw_count();
    QualityPosterior post;
    post.node_ids = design.node_ids;
    post.interaction = spec.interaction;
    for (const auto& col : design.columns) post.names.push_back(col.name);
    post.names.insert(post.names.end(), {"sigma_u2", "sigma_eps2"});
    post.draws.resize(n_draws, static_cast<Eigen::Index>(post.names.size()));
    post.coef_std_draws.resize(n_draws, k);
    Eigen::MatrixXd fitted_accum = Eigen::MatrixXd::Zero(n, n);

    Eigen::VectorXd theta_prop(k), zb_prop(n_pairs), eta_prop(n_pairs), ex_prop(n_pairs), z(k);
    long long acc_coef = 0, prop_coef = 0, acc_eps = 0, prop_eps = 0, acc_u = 0, prop_u = 0;
    int saved = 0;
    const int total = config.burn_in + config.main_iterations;

    for (int it = 1; it <= total; ++it) {
        const bool adapting = it <= config.burn_in;
        const bool main_phase = !adapting;

        // coefficients
        {
            for (int c = 0; c < k; ++c) z[c] = rng.normal();
            theta_prop = theta + coef_scale.scale() * (prop_chol * z);
            zb_prop.noalias() = design.Z * theta_prop;
            double delta = 0.0;
            for (int q = 0; q < n_pairs; ++q) {
                const double e_new = clamp_eta(zb_prop[q] + uu[q] + eps[q], clamp);
                const double x_new = std::exp(e_new);
                delta += design.outcome[q] * (e_new - eta[q]) - x_new + ex[q];
                eta_prop[q] = e_new;
                ex_prop[q] = x_new;
            }
            delta += 0.5 * (theta.squaredNorm() - theta_prop.squaredNorm()) / config.prior_beta_var;
            const bool accept = std::isfinite(delta) && std::log(rng.uniform_pos()) < delta;
            if (accept) {
                theta.swap(theta_prop);
                zb.swap(zb_prop);
                eta.swap(eta_prop);
                ex.swap(ex_prop);
            }
            if (adapting) coef_scale.step(accept ? 1.0 : 0.0);
            if (main_phase) {
                ++prop_coef;
                if (accept) ++acc_coef;
            }
        }

        // pair residuals
        {
            const double gain = AdaptiveScale::gain(it);
            for (int q = 0; q < n_pairs; ++q) {
                const double s = eps_prop_scale[static_cast<std::size_t>(q)];
                const double e_old = eps[q];
                const double e_new_val = e_old + s * rng.normal();
                const double eta_new = clamp_eta(zb[q] + uu[q] + e_new_val, clamp);
                const double x_new = std::exp(eta_new);
                double delta = design.outcome[q] * (eta_new - eta[q]) - x_new + ex[q];
                delta -= 0.5 * (e_new_val * e_new_val - e_old * e_old) / sigma_eps2;
                const bool accept = std::isfinite(delta) && std::log(rng.uniform_pos()) < delta;
                if (accept) {
                    eps[q] = e_new_val;
                    eta[q] = eta_new;
                    ex[q] = x_new;
                }
                if (adapting) {
                    eps_prop_scale[static_cast<std::size_t>(q)] *=
                        std::exp(gain * ((accept ? 1.0 : 0.0) - config.target_accept_pair));
                }
                if (main_phase) {
                    ++prop_eps;
                    if (accept) ++acc_eps;
                }
            }
        }

        // node effects
        {
            const double gain = AdaptiveScale::gain(it);
            for (int i = 0; i < n; ++i) {
                const double s = u_prop_scale[static_cast<std::size_t>(i)];
                const double u_old = u[i];
                const double u_new = u_old + s * rng.normal();
                const double du = u_new - u_old;
                double delta = 0.0;
                for (int q : design.pairs_of_node[static_cast<std::size_t>(i)]) {
                    const double e_new = clamp_eta(zb[q] + uu[q] + du + eps[q], clamp);
                    delta += design.outcome[q] * (e_new - eta[q]) - std::exp(e_new) + ex[q];
                }
                delta -= 0.5 * (u_new * u_new - u_old * u_old) / sigma_u2;
                const bool accept = std::isfinite(delta) && std::log(rng.uniform_pos()) < delta;
                if (accept) {
                    u[i] = u_new;
                    for (int q : design.pairs_of_node[static_cast<std::size_t>(i)]) {
                        uu[q] += du;
                        eta[q] = clamp_eta(zb[q] + uu[q] + eps[q], clamp);
                        ex[q] = std::exp(eta[q]);
                    }
                }
                if (adapting) {
                    u_prop_scale[static_cast<std::size_t>(i)] *=
                        std::exp(gain * ((accept ? 1.0 : 0.0) - config.target_accept_pair));
                }
                if (main_phase) {
                    ++prop_u;
                    if (accept) ++acc_u;
                }
            }
        }

        // Group moves along likelihood-invariant directions (see the notes in
        // the flow-model sampler): the node-effect mean and every additive
        // pair-average direction trade off against their coefficients, and
        // the pair residuals trade off against the whole coefficient space.
        if (has_intercept) {
            // u_i -> u_i - d, theta0 -> theta0 + 2d
            const double prec = static_cast<double>(n) / sigma_u2 + 4.0 / config.prior_beta_var;
            const double lin = u.sum() / sigma_u2 - 2.0 * theta[0] / config.prior_beta_var;
            const double shift = lin / prec + rng.normal() / std::sqrt(prec);
            u.array() -= shift;
            theta[0] += 2.0 * shift;
            for (int q = 0; q < n_pairs; ++q) {
                zb[q] += 2.0 * shift;
                uu[q] -= 2.0 * shift;
            }
        }
        if (has_intercept) {
            for (const auto& add : design.additive_columns) {
                // u_i -> u_i - d g_i, theta_col -> theta_col + d,
                // theta0 -> theta0 + d * intercept_comp
                double gg = 0.0, gu = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double g = add.node_values[static_cast<std::size_t>(i)];
                    gg += g * g;
                    gu += g * u[i];
                }
                const double comp = add.intercept_comp;
                const double prec = gg / sigma_u2 + (1.0 + comp * comp) / config.prior_beta_var;
                const double lin = gu / sigma_u2 - theta[add.column] / config.prior_beta_var -
                                   theta[0] * comp / config.prior_beta_var;
                const double shift = lin / prec + rng.normal() / std::sqrt(prec);
                theta[add.column] += shift;
                theta[0] += shift * comp;
                for (int i = 0; i < n; ++i) u[i] -= shift * add.node_values[static_cast<std::size_t>(i)];
                for (int q = 0; q < n_pairs; ++q) {
                    const double delta = shift * (add.node_values[static_cast<std::size_t>(design.pair_i[static_cast<std::size_t>(q)])] +
                                                  add.node_values[static_cast<std::size_t>(design.pair_j[static_cast<std::size_t>(q)])]);
                    zb[q] += delta;
                    uu[q] -= delta;
                }
            }
        }
        {
            // eps -> eps - Z c, theta -> theta + c over all columns.
            Eigen::VectorXd lin = (design.Z.transpose() * eps) / sigma_eps2 - theta / config.prior_beta_var;
            Eigen::MatrixXd prec = ztz / sigma_eps2;
            prec.diagonal().array() += 1.0 / config.prior_beta_var;
            Eigen::LLT<Eigen::MatrixXd> llt(prec);
            if (llt.info() == Eigen::Success) {
                Eigen::VectorXd zn(k);
                for (int c = 0; c < k; ++c) zn[c] = rng.normal();
                const Eigen::VectorXd shift = llt.solve(lin) + llt.matrixU().solve(zn);
                const Eigen::VectorXd row_shift = design.Z * shift;
                theta += shift;
                for (int q = 0; q < n_pairs; ++q) {
                    eps[q] -= row_shift[q];
                    zb[q] += row_shift[q];
                }
            }
        }

        // conjugate variance updates
        sigma_u2 = rng.inverse_gamma(config.prior_ig_shape + 0.5 * n, config.prior_ig_rate + 0.5 * u.squaredNorm());
        sigma_eps2 = rng.inverse_gamma(config.prior_ig_shape + 0.5 * n_pairs, config.prior_ig_rate + 0.5 * eps.squaredNorm());

        if (adapting) {
            theta_history.push_back(theta);
            if (it % config.adapt_window == 0) {
                if (k > 1 && it >= config.burn_in / 2 && theta_history.size() >= static_cast<std::size_t>(4 * k)) {
                    const std::size_t start = theta_history.size() / 2;
                    const std::size_t m = theta_history.size() - start;
                    Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
                    for (std::size_t t = start; t < theta_history.size(); ++t) mean += theta_history[t];
                    mean /= static_cast<double>(m);
                    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);
                    for (std::size_t t = start; t < theta_history.size(); ++t) {
                        const Eigen::VectorXd d = theta_history[t] - mean;
                        cov += d * d.transpose();
                    }
                    cov /= static_cast<double>(m > 1 ? m - 1 : 1);
                    cov += 1e-9 * Eigen::MatrixXd::Identity(k, k);
                    Eigen::LLT<Eigen::MatrixXd> llt(cov);
                    if (llt.info() == Eigen::Success) prop_chol = llt.matrixL();
                }
            }
        }

        if (it % 200 == 0 || it == total) {
            rebuild();
            double ll = 0.0;
            for (int q = 0; q < n_pairs; ++q) ll += design.outcome[q] * eta[q] - ex[q];
            if (!std::isfinite(ll)) {
                std::ostringstream dump;
                dump << "non-finite likelihood at iteration " << it << "; |theta|=" << theta.norm()
                     << " sigma_u2=" << sigma_u2 << " sigma_eps2=" << sigma_eps2;
                throw NumericError(dump.str());
            }
        }

        if (main_phase && (it - config.burn_in) % config.thin == 0) {
            const Eigen::VectorXd theta_orig = design.to_original_scale(theta);
            for (int c = 0; c < k; ++c) {
                post.draws(saved, c) = theta_orig[c];
                post.coef_std_draws(saved, c) = theta[c];
            }
            post.draws(saved, k) = sigma_u2;
            post.draws(saved, k + 1) = sigma_eps2;
            for (int q = 0; q < n_pairs; ++q) {
                fitted_accum(design.pair_i[static_cast<std::size_t>(q)], design.pair_j[static_cast<std::size_t>(q)]) += ex[q];
            }
            ++saved;
        }
    }

    fitted_accum /= static_cast<double>(n_draws);
    post.fitted_mean = fitted_accum + fitted_accum.transpose();
    post.acceptance_rates["coefficients"] = prop_coef ? static_cast<double>(acc_coef) / prop_coef : 0.0;
    post.acceptance_rates["pair_residuals"] = prop_eps ? static_cast<double>(acc_eps) / prop_eps : 0.0;
    post.acceptance_rates["node_effects"] = prop_u ? static_cast<double>(acc_u) / prop_u : 0.0;
    return post;
}

double effect_size(double xi) { return (1.0 - std::exp(xi)) * 100.0; }

QualityPosterior ownership_interaction(const QualityMatrix& w, const PredictedTransfers& that, const NodeTable& nodes,
                                       QualityModelSpec spec, const McmcConfig& config) {
    spec.interaction = true;
    spec.include_ownership = true;
    return fit_quality_model(w, that, nodes, spec, config);
}

MarginalSlopes ownership_marginal_slopes(const QualityPosterior& posterior) {
    MarginalSlopes out;
    out.categories = {"public-public", "private-private", "public-private"};
    const Eigen::VectorXd base = posterior.column("predicted_transfers");
    out.draws.resize(base.size(), 3);
    out.draws.col(0) = base;
    if (posterior.interaction) {
        out.draws.col(1) = base + posterior.column("that_x_private_private");
        out.draws.col(2) = base + posterior.column("that_x_public_private");
    } else {
        out.draws.col(1) = base;
        out.draws.col(2) = base;
    }
    return out;
}

std::vector<HeatmapCell> heatmap_export(const QualityPosterior& posterior, const DirectedCountNetwork& observed,
                                        const NodeTable& nodes, const std::string& ownership_filter) {
    if (ownership_filter != "all" && ownership_filter != "public-public" && ownership_filter != "private-private" &&
        ownership_filter != "public-private") {
        throw InputError("unknown ownership filter '" + ownership_filter + "'");
    }
    const auto& ids = posterior.node_ids;
    const int n = static_cast<int>(ids.size());
    const auto& hd = nodes.column("hd");
    const std::vector<double>* pub = nullptr;
    if (ownership_filter != "all") pub = &nodes.column("public");

    auto table_pos = [&](const std::string& id) {
        return static_cast<int>(std::find(nodes.ids.begin(), nodes.ids.end(), id) - nodes.ids.begin());
    };
    std::vector<int> pos(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pos[static_cast<std::size_t>(i)] = table_pos(ids[static_cast<std::size_t>(i)]);

    // Rows and columns sorted by discharges, largest first; ties break on id.
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int lhs, int rhs) {
        const double hl = hd[static_cast<std::size_t>(pos[static_cast<std::size_t>(lhs)])];
        const double hr = hd[static_cast<std::size_t>(pos[static_cast<std::size_t>(rhs)])];
        if (hl != hr) return hl > hr;
        return ids[static_cast<std::size_t>(lhs)] < ids[static_cast<std::size_t>(rhs)];
    });

    std::vector<HeatmapCell> cells;
    for (int oi = 0; oi < n; ++oi) {
        for (int oj = 0; oj < n; ++oj) {
            if (oi == oj) continue;
            const int i = order[static_cast<std::size_t>(oi)];
            const int j = order[static_cast<std::size_t>(oj)];
            if (pub != nullptr) {
                const std::string cat = ownership_category((*pub)[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])],
                                                           (*pub)[static_cast<std::size_t>(pos[static_cast<std::size_t>(j)])]);
                if (cat != ownership_filter) continue;
            }
            HeatmapCell cell;
            cell.row_id = ids[static_cast<std::size_t>(i)];
            cell.col_id = ids[static_cast<std::size_t>(j)];
            cell.observed_transfers = static_cast<double>(observed.count(observed.node_index(cell.row_id), observed.node_index(cell.col_id)));
            const double hd_pair = 0.5 * (hd[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])] +
                                          hd[static_cast<std::size_t>(pos[static_cast<std::size_t>(j)])]);
            cell.predicted_outcome_per_discharge = hd_pair > 0.0 ? posterior.fitted_mean(i, j) / hd_pair : 0.0;
            cell.is_zero = cell.observed_transfers == 0.0;
            if (!cell.is_zero) cell.log_value = std::log(cell.observed_transfers);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

ThresholdRobustness dc_threshold_robustness(const NodeTable& nodes, const DyadTable& dyads,
                                            const DirectedCountNetwork& net, const std::vector<double>& thresholds,
                                            const SrmSpec& spec, const McmcConfig& config, int threads) {
    if (thresholds.empty()) throw InputError("threshold list is empty");
    double max_distance = 0.0;
    for (int i = 0; i < dyads.size(); ++i) {
        for (int j = 0; j < dyads.size(); ++j) max_distance = std::max(max_distance, dyads.distance(i, j));
    }
    for (double t : thresholds) {
        if (!(t > 0.0) || t >= max_distance) throw InputError("thresholds must lie inside (0, max distance)");
    }

    ThresholdRobustness out;
    out.thresholds = thresholds;
    out.predicted_flat.resize(thresholds.size());

    Rng root(config.seed);
    parallel_for_index(static_cast<int>(thresholds.size()), threads, [&](int t_idx) {
        const double threshold = thresholds[static_cast<std::size_t>(t_idx)];
        const GeoNetwork geo = geo_threshold_network(dyads.ids, dyads.distance, threshold);
        NodeTable adjusted = nodes;
        auto& dc = adjusted.columns["dc"];
        dc.assign(adjusted.ids.size(), 0.0);
        for (std::size_t i = 0; i < adjusted.ids.size(); ++i) {
            const int gi = static_cast<int>(std::find(dyads.ids.begin(), dyads.ids.end(), adjusted.ids[i]) - dyads.ids.begin());
            dc[i] = static_cast<double>(geo.degree(gi));
        }
        const DyadDesign design = assemble_design(adjusted, dyads, net, spec);
        McmcConfig run = config;
        // Keyed by the threshold value, so duplicate thresholds rerun the
        // identical chain.
        std::uint64_t threshold_bits;
        static_assert(sizeof(threshold_bits) == sizeof(threshold));
        std::memcpy(&threshold_bits, &threshold, sizeof(threshold_bits));
        run.seed = root.child_indexed("threshold", threshold_bits).stream_seed();
        run.store_effects = false;
        const PosteriorSamples samples = fit_srm(design, run);
        const PredictedTransfers that = predict_transfers(samples, design);
        Eigen::VectorXd flat(design.row_count());
        for (int r = 0; r < design.row_count(); ++r) {
            flat[r] = that.matrix(design.row_src[static_cast<std::size_t>(r)], design.row_dst[static_cast<std::size_t>(r)]);
        }
        out.predicted_flat[static_cast<std::size_t>(t_idx)] = std::move(flat);
    });

    const int n_t = static_cast<int>(thresholds.size());
    out.correlation.resize(n_t, n_t);
    for (int s = 0; s < n_t; ++s) {
        for (int t = 0; t < n_t; ++t) {
            if (s == t) {
                out.correlation(s, t) = 1.0;
            } else {
                const auto r = pearson_correlation(out.predicted_flat[static_cast<std::size_t>(s)],
                                                   out.predicted_flat[static_cast<std::size_t>(t)]);
                out.correlation(s, t) = r ? *r : 0.0;
            }
        }
    }
    return out;
}

}  // namespace flownet
