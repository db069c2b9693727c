#include "flownet/dyad_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "flownet/errors.hpp"

namespace flownet {

namespace {

const std::set<std::string> kBinaryCovariates = {"teach", "mono", "techno", "public", "co_membership"};

bool is_binary_covariate(const std::string& name) { return kBinaryCovariates.count(name) > 0; }

}  // namespace

const std::vector<double>& NodeTable::column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) throw InputError("node table missing column '" + name + "'");
    if (it->second.size() != ids.size()) throw InputError("node table column '" + name + "' has wrong length");
    return it->second;
}

void DyadTable::validate() const {
    const int n = size();
    if (distance.rows() != n || distance.cols() != n || co_membership.rows() != n || co_membership.cols() != n) {
        throw InputError("dyad table matrices must be square and match the id list");
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (!(distance(i, j) >= 0.0)) throw InputError("dyad distance must be non-negative and present");
            if (std::abs(distance(i, j) - distance(j, i)) > 1e-9) throw InputError("dyad distance matrix asymmetric");
            const double cm = co_membership(i, j);
            if (cm != 0.0 && cm != 1.0) throw InputError("co-membership must be 0 or 1");
            if (cm != co_membership(j, i)) throw InputError("co-membership matrix asymmetric");
        }
    }
}

int DyadDesign::row_index(int src, int dst) const {
    const int n = node_count();
    return src * (n - 1) + (dst < src ? dst : dst - 1);
}

Eigen::VectorXd back_transform_coefficients(const std::vector<DesignColumn>& columns, const Eigen::VectorXd& beta_std) {
    if (beta_std.size() != static_cast<Eigen::Index>(columns.size())) {
        throw InputError("coefficient vector length does not match the design");
    }
    Eigen::VectorXd out = beta_std;
    double intercept_shift = 0.0;
    for (std::size_t k = 1; k < columns.size(); ++k) {
        const auto& col = columns[k];
        out[static_cast<Eigen::Index>(k)] = beta_std[static_cast<Eigen::Index>(k)] / col.scale;
        intercept_shift += beta_std[static_cast<Eigen::Index>(k)] * col.center / col.scale;
    }
    out[0] = beta_std[0] - intercept_shift;
    return out;
}

Eigen::VectorXd DyadDesign::to_original_scale(const Eigen::VectorXd& beta_std) const {
    return back_transform_coefficients(columns, beta_std);
}

namespace {

struct CovariateColumn {
    std::string name;
    std::vector<double> values;  // one per design row, original scale
};

void check_node_value(double v, const std::string& node, const std::string& col) {
    if (!std::isfinite(v)) throw InputError("node '" + node + "' missing value for column '" + col + "'");
    if (col == "f" && (v < 0.0 || v > 1.0)) throw InputError("node '" + node + "': share 'f' outside [0,1]");
    if (col == "bs" && (v < 0.0 || v > 100.0)) throw InputError("node '" + node + "': 'bs' outside [0,100]");
}

}  // namespace

DyadDesign assemble_design(const NodeTable& nodes, const DyadTable& dyads, const DirectedCountNetwork& net,
                           const SrmSpec& spec) {
    dyads.validate();
    const int n = nodes.size();
    if (n < 2) throw InputError("design requires at least two nodes");
    if (dyads.size() != n) throw InputError("node and dyad tables disagree on node count");
    {
        std::set<std::string> a(nodes.ids.begin(), nodes.ids.end());
        std::set<std::string> b(dyads.ids.begin(), dyads.ids.end());
        std::set<std::string> c(net.nodes().begin(), net.nodes().end());
        if (a.size() != nodes.ids.size()) throw InputError("duplicate node id in node table");
        if (a != b) throw InputError("node and dyad tables disagree on node ids");
        if (a != c) throw InputError("network and node table disagree on node ids");
    }

    DyadDesign design;
    design.node_ids = nodes.ids;
    std::sort(design.node_ids.begin(), design.node_ids.end());
    design.include_quality = spec.include_quality;
    design.eta_clamp = spec.eta_clamp;

    // Position of canonical node k in each source table.
    std::vector<int> node_pos(static_cast<std::size_t>(n));
    std::vector<int> dyad_pos(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const auto& id = design.node_ids[static_cast<std::size_t>(k)];
        node_pos[static_cast<std::size_t>(k)] =
            static_cast<int>(std::find(nodes.ids.begin(), nodes.ids.end(), id) - nodes.ids.begin());
        dyad_pos[static_cast<std::size_t>(k)] =
            static_cast<int>(std::find(dyads.ids.begin(), dyads.ids.end(), id) - dyads.ids.begin());
    }

    std::vector<std::string> selected_node_covs;
    for (const auto& cov : spec.node_covariates) {
        const bool is_quality =
            std::find(spec.quality_covariates.begin(), spec.quality_covariates.end(), cov) != spec.quality_covariates.end();
        if (is_quality && !spec.include_quality) {
            design.excluded_covariates.push_back(cov);
            continue;
        }
        selected_node_covs.push_back(cov);
    }

    const int rows = n * (n - 1);
    design.counts.resize(rows);
    design.row_src.resize(static_cast<std::size_t>(rows));
    design.row_dst.resize(static_cast<std::size_t>(rows));
    design.rows_as_sender.assign(static_cast<std::size_t>(n), {});
    design.rows_as_receiver.assign(static_cast<std::size_t>(n), {});

    std::vector<int> net_pos(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) net_pos[static_cast<std::size_t>(k)] = net.node_index(design.node_ids[static_cast<std::size_t>(k)]);

    int r = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            design.row_src[static_cast<std::size_t>(r)] = i;
            design.row_dst[static_cast<std::size_t>(r)] = j;
            design.counts[r] =
                static_cast<double>(net.count(net_pos[static_cast<std::size_t>(i)], net_pos[static_cast<std::size_t>(j)]));
            design.rows_as_sender[static_cast<std::size_t>(i)].push_back(r);
            design.rows_as_receiver[static_cast<std::size_t>(j)].push_back(r);
            ++r;
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            design.pair_rows.push_back({design.row_index(i, j), design.row_index(j, i)});
        }
    }

    // Assemble original-scale columns, then standardize in place.
    std::vector<CovariateColumn> cols;
    cols.push_back({"intercept", std::vector<double>(static_cast<std::size_t>(rows), 1.0)});

    for (const auto& cov : spec.dyad_covariates) {
        CovariateColumn c{cov, std::vector<double>(static_cast<std::size_t>(rows), 0.0)};
        const Eigen::MatrixXd* m = nullptr;
        if (cov == "distance") m = &dyads.distance;
        else if (cov == "co_membership") m = &dyads.co_membership;
        else throw InputError("unknown dyad covariate '" + cov + "'");
        for (int rr = 0; rr < rows; ++rr) {
            const int pi = dyad_pos[static_cast<std::size_t>(design.row_src[static_cast<std::size_t>(rr)])];
            const int pj = dyad_pos[static_cast<std::size_t>(design.row_dst[static_cast<std::size_t>(rr)])];
            c.values[static_cast<std::size_t>(rr)] = (*m)(pi, pj);
        }
        cols.push_back(std::move(c));
    }

    for (const auto& cov : selected_node_covs) {
        const auto& raw = nodes.column(cov);
        std::vector<double> per_node(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            double v = raw[static_cast<std::size_t>(node_pos[static_cast<std::size_t>(k)])];
            check_node_value(v, design.node_ids[static_cast<std::size_t>(k)], cov);
            if (cov == "hd" && spec.log_discharges) {
                if (!(v > 0.0)) throw InputError("node '" + design.node_ids[static_cast<std::size_t>(k)] +
                                                 "': discharges must be positive for the log scale");
                v = std::log(v);
            }
            per_node[static_cast<std::size_t>(k)] = v;
        }
        CovariateColumn origin{cov + "_origin", std::vector<double>(static_cast<std::size_t>(rows))};
        CovariateColumn dest{cov + "_destination", std::vector<double>(static_cast<std::size_t>(rows))};
        for (int rr = 0; rr < rows; ++rr) {
            origin.values[static_cast<std::size_t>(rr)] = per_node[static_cast<std::size_t>(design.row_src[static_cast<std::size_t>(rr)])];
            dest.values[static_cast<std::size_t>(rr)] = per_node[static_cast<std::size_t>(design.row_dst[static_cast<std::size_t>(rr)])];
        }
        cols.push_back(std::move(origin));
        cols.push_back(std::move(dest));
    }

    const int p = static_cast<int>(cols.size());
    design.X.resize(rows, p);
    design.columns.resize(static_cast<std::size_t>(p));
    for (int k = 0; k < p; ++k) {
        auto& meta = design.columns[static_cast<std::size_t>(k)];
        meta.name = cols[static_cast<std::size_t>(k)].name;
        const auto& vals = cols[static_cast<std::size_t>(k)].values;
        std::string base = meta.name;
        if (auto pos = base.rfind("_origin"); pos != std::string::npos && pos == base.size() - 7) base.resize(pos);
        if (auto pos = base.rfind("_destination"); pos != std::string::npos && pos == base.size() - 12) base.resize(pos);
        const bool continuous = k > 0 && !is_binary_covariate(base);
        if (spec.standardize && continuous) {
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= rows;
            double ss = 0.0;
            for (double v : vals) ss += (v - mean) * (v - mean);
            const double sd = std::sqrt(ss / (rows - 1));
            if (sd > 1e-12) {
                meta.center = mean;
                meta.scale = sd;
                meta.standardized = true;
            }
        }
        for (int rr = 0; rr < rows; ++rr) {
            design.X(rr, k) = (vals[static_cast<std::size_t>(rr)] - meta.center) / meta.scale;
        }
    }
    return design;
}

Eigen::VectorXd linear_predictor(const DyadDesign& design, const Eigen::VectorXd& beta, const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& b, const Eigen::VectorXd& nu) {
    const int n = design.node_count();
    if (beta.size() != design.X.cols() || a.size() != n || b.size() != n || nu.size() != design.X.rows()) {
        throw InputError("linear predictor dimension mismatch");
    }
    Eigen::VectorXd eta = design.X * beta + nu;
    for (int r = 0; r < design.row_count(); ++r) {
        eta[r] += a[design.row_src[static_cast<std::size_t>(r)]] + b[design.row_dst[static_cast<std::size_t>(r)]];
        eta[r] = std::clamp(eta[r], -design.eta_clamp, design.eta_clamp);
    }
    return eta;
}

double poisson_loglik(const Eigen::VectorXd& counts, const Eigen::VectorXd& eta) {
    if (counts.size() != eta.size()) throw InputError("poisson_loglik dimension mismatch");
    double ll = 0.0;
    for (Eigen::Index r = 0; r < counts.size(); ++r) {
        const double y = counts[r];
        if (y < 0.0 || std::floor(y) != y) throw InputError("counts must be non-negative integers");
        ll += y * eta[r] - std::exp(eta[r]) - std::lgamma(y + 1.0);
    }
    return ll;
}

void DyadCovarianceParams::validate() const {
    if (sigma_a2 < 0.0 || sigma_b2 < 0.0 || sigma_nu2 < 0.0) throw InputError("variance components must be non-negative");
    if (sigma_ab * sigma_ab > sigma_a2 * sigma_b2 + 1e-12) throw InputError("sigma_ab incompatible with sigma_a2, sigma_b2");
    if (!(std::abs(rho) < 1.0)) throw InputError("|rho| must be < 1");
}

Eigen::Matrix2d DyadCovarianceParams::sigma_ab_matrix() const {
    Eigen::Matrix2d m;
    m << sigma_a2, sigma_ab, sigma_ab, sigma_b2;
    return m;
}

Eigen::Matrix2d DyadCovarianceParams::sigma_nu_matrix() const {
    Eigen::Matrix2d m;
    m << sigma_nu2, rho * sigma_nu2, rho * sigma_nu2, sigma_nu2;
    return m;
}

ImpliedMoments implied_moments(const DyadCovarianceParams& params) {
    ImpliedMoments m;
    m.variance = params.sigma_a2 + params.sigma_b2 + params.sigma_nu2;
    m.common_sender = params.sigma_a2;
    m.reciprocal = params.rho * params.sigma_nu2 + 2.0 * params.sigma_ab;
    m.common_receiver = params.sigma_b2;
    m.disjoint = 0.0;
    m.sender_receiver = params.sigma_ab;
    return m;
}

}  // namespace flownet
