#include "flownet/io_json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "flownet/csv.hpp"
#include "flownet/errors.hpp"

namespace flownet {

using nlohmann::json;

NodeTable read_node_table(const std::string& path) {
    const CsvTable csv = read_csv(path);
    const std::size_t id_col = csv.column("id");
    NodeTable table;
    for (const auto& row : csv.rows) table.ids.push_back(row[id_col]);
    for (std::size_t c = 0; c < csv.header.size(); ++c) {
        if (c == id_col) continue;
        auto& col = table.columns[csv.header[c]];
        col.reserve(csv.rows.size());
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            col.push_back(parse_double(csv.rows[r][c], path + " row " + std::to_string(r + 2) + " column " + csv.header[c]));
        }
    }
    return table;
}

void write_node_table(const NodeTable& table, const std::string& path) {
    std::ostringstream out;
    out << "id";
    for (const auto& [name, col] : table.columns) out << ',' << name;
    out << '\n';
    for (std::size_t r = 0; r < table.ids.size(); ++r) {
        out << table.ids[r];
        for (const auto& [name, col] : table.columns) out << ',' << format_double(col[r]);
        out << '\n';
    }
    atomic_write_file(path, out.str());
}

DyadTable read_dyad_table(const std::string& path) {
    const CsvTable csv = read_csv(path);
    const std::size_t src_c = csv.column("src");
    const std::size_t dst_c = csv.column("dst");
    const std::size_t dist_c = csv.column("distance_minutes");
    const std::size_t cm_c = csv.column("co_membership");

    std::vector<std::string> ids;
    std::map<std::string, int> index;
    for (const auto& row : csv.rows) {
        for (const auto& id : {row[src_c], row[dst_c]}) {
            if (index.emplace(id, 0).second) ids.push_back(id);
        }
    }
    std::sort(ids.begin(), ids.end());
    for (std::size_t k = 0; k < ids.size(); ++k) index[ids[k]] = static_cast<int>(k);

    const int n = static_cast<int>(ids.size());
    DyadTable table;
    table.ids = ids;
    table.distance = Eigen::MatrixXd::Constant(n, n, -1.0);
    table.co_membership = Eigen::MatrixXd::Constant(n, n, -1.0);
    table.distance.diagonal().setZero();
    table.co_membership.diagonal().setZero();
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        const std::string ctx = path + " row " + std::to_string(r + 2);
        const int i = index.at(row[src_c]);
        const int j = index.at(row[dst_c]);
        if (i == j) throw InputError(ctx + ": dyad table row with src == dst");
        const double d = parse_double(row[dist_c], ctx);
        const double cm = parse_double(row[cm_c], ctx);
        table.distance(i, j) = d;
        table.co_membership(i, j) = cm;
        if (table.distance(j, i) < 0.0) {
            table.distance(j, i) = d;
            table.co_membership(j, i) = cm;
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j && table.distance(i, j) < 0.0) {
                throw InputError(path + ": missing dyad row for pair (" + ids[static_cast<std::size_t>(i)] + "," +
                                 ids[static_cast<std::size_t>(j)] + ")");
            }
        }
    }
    table.validate();
    return table;
}

void write_dyad_table(const DyadTable& table, const std::string& path) {
    std::ostringstream out;
    out << "src,dst,distance_minutes,co_membership\n";
    for (int i = 0; i < table.size(); ++i) {
        for (int j = 0; j < table.size(); ++j) {
            if (i == j) continue;
            out << table.ids[static_cast<std::size_t>(i)] << ',' << table.ids[static_cast<std::size_t>(j)] << ','
                << format_double(table.distance(i, j)) << ',' << format_double(table.co_membership(i, j)) << '\n';
        }
    }
    atomic_write_file(path, out.str());
}

std::pair<std::vector<std::string>, std::vector<EdgeCount>> read_edge_list(const std::string& path) {
    const CsvTable csv = read_csv(path);
    const std::size_t src_c = csv.column("src");
    const std::size_t dst_c = csv.column("dst");
    const std::size_t count_c = csv.column("count");
    std::vector<std::string> ids;
    std::set<std::string> seen;
    std::vector<EdgeCount> edges;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        const std::string ctx = path + " row " + std::to_string(r + 2);
        for (const auto& id : {row[src_c], row[dst_c]}) {
            if (seen.insert(id).second) ids.push_back(id);
        }
        edges.push_back({row[src_c], row[dst_c], parse_count(row[count_c], ctx)});
    }
    std::sort(ids.begin(), ids.end());
    return {std::move(ids), std::move(edges)};
}

void write_edge_list(const DirectedCountNetwork& net, const std::string& path) {
    std::ostringstream out;
    out << "src,dst,count\n";
    for (int i = 0; i < net.size(); ++i) {
        for (int j : net.out_neighbors(i)) {
            out << net.nodes()[static_cast<std::size_t>(i)] << ',' << net.nodes()[static_cast<std::size_t>(j)] << ','
                << net.count(i, j) << '\n';
        }
    }
    atomic_write_file(path, out.str());
}

std::pair<std::vector<std::string>, Eigen::MatrixXd> read_travel_matrix(const std::string& path) {
    const CsvTable csv = read_csv(path);
    if (csv.header.size() < 2) throw InputError(path + ": travel matrix needs a node-id header");
    std::vector<std::string> ids(csv.header.begin() + 1, csv.header.end());
    const int n = static_cast<int>(ids.size());
    if (csv.rows.size() != ids.size()) throw InputError(path + ": travel matrix is not square");
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r) {
        const auto& row = csv.rows[static_cast<std::size_t>(r)];
        if (row[0] != ids[static_cast<std::size_t>(r)]) {
            throw InputError(path + ": row/column id order mismatch at '" + row[0] + "'");
        }
        for (int c = 0; c < n; ++c) {
            m(r, c) = parse_double(row[static_cast<std::size_t>(c + 1)], path + " row " + std::to_string(r + 2));
        }
    }
    return {std::move(ids), std::move(m)};
}

void write_travel_matrix(const std::vector<std::string>& ids, const Eigen::MatrixXd& minutes, const std::string& path) {
    std::ostringstream out;
    out << "id";
    for (const auto& id : ids) out << ',' << id;
    out << '\n';
    for (int r = 0; r < static_cast<int>(ids.size()); ++r) {
        out << ids[static_cast<std::size_t>(r)];
        for (int c = 0; c < static_cast<int>(ids.size()); ++c) out << ',' << format_double(minutes(r, c));
        out << '\n';
    }
    atomic_write_file(path, out.str());
}

std::string summary_csv(const std::vector<ParameterSummaryRow>& rows) {
    std::ostringstream out;
    out << "parameter,mean,sd,pseudo_p,stars\n";
    for (const auto& row : rows) {
        out << row.name << ',' << format_double(row.mean) << ',' << format_double(row.sd) << ','
            << format_double(row.pseudo_p) << ',' << row.stars << '\n';
    }
    return out.str();
}

std::string PipelineConfig::input_path(const std::string& name) const {
    auto it = inputs.find(name);
    if (it == inputs.end()) throw InputError("config is missing required input path '" + name + "'");
    return it->second;
}

namespace {

void parse_srm_spec(const json& j, SrmSpec& spec) {
    if (j.contains("node_covariates")) spec.node_covariates = j.at("node_covariates").get<std::vector<std::string>>();
    if (j.contains("dyad_covariates")) spec.dyad_covariates = j.at("dyad_covariates").get<std::vector<std::string>>();
    if (j.contains("quality_covariates")) spec.quality_covariates = j.at("quality_covariates").get<std::vector<std::string>>();
    if (j.contains("include_quality")) spec.include_quality = j.at("include_quality").get<bool>();
    if (j.contains("standardize")) spec.standardize = j.at("standardize").get<bool>();
    if (j.contains("log_discharges")) spec.log_discharges = j.at("log_discharges").get<bool>();
    if (j.contains("eta_clamp")) spec.eta_clamp = j.at("eta_clamp").get<double>();
}

void parse_quality_spec(const json& j, QualityModelSpec& spec) {
    if (j.contains("pair_average_covariates")) {
        spec.pair_average_covariates = j.at("pair_average_covariates").get<std::vector<std::string>>();
    }
    if (j.contains("include_ownership")) spec.include_ownership = j.at("include_ownership").get<bool>();
    if (j.contains("include_teach")) spec.include_teach = j.at("include_teach").get<bool>();
    if (j.contains("include_mono")) spec.include_mono = j.at("include_mono").get<bool>();
    if (j.contains("include_techno")) spec.include_techno = j.at("include_techno").get<bool>();
    if (j.contains("interaction")) spec.interaction = j.at("interaction").get<bool>();
    if (j.contains("standardize")) spec.standardize = j.at("standardize").get<bool>();
    if (j.contains("log_discharges")) spec.log_discharges = j.at("log_discharges").get<bool>();
    if (j.contains("eta_clamp")) spec.eta_clamp = j.at("eta_clamp").get<double>();
    if (j.contains("outcome_column")) spec.outcome_column = j.at("outcome_column").get<std::string>();
}

void parse_mcmc(const json& j, McmcConfig& cfg) {
    if (j.contains("burn_in")) cfg.burn_in = j.at("burn_in").get<int>();
    if (j.contains("main_iterations")) cfg.main_iterations = j.at("main_iterations").get<int>();
    if (j.contains("thin")) cfg.thin = j.at("thin").get<int>();
    if (j.contains("adapt_window")) cfg.adapt_window = j.at("adapt_window").get<int>();
    if (j.contains("target_accept_coef")) cfg.target_accept_coef = j.at("target_accept_coef").get<double>();
    if (j.contains("target_accept_pair")) cfg.target_accept_pair = j.at("target_accept_pair").get<double>();
    if (j.contains("prior_beta_var")) cfg.prior_beta_var = j.at("prior_beta_var").get<double>();
    if (j.contains("prior_iw_df")) cfg.prior_iw_df = j.at("prior_iw_df").get<double>();
    if (j.contains("prior_iw_scale")) cfg.prior_iw_scale = j.at("prior_iw_scale").get<double>();
    if (j.contains("prior_ig_shape")) cfg.prior_ig_shape = j.at("prior_ig_shape").get<double>();
    if (j.contains("prior_ig_rate")) cfg.prior_ig_rate = j.at("prior_ig_rate").get<double>();
    if (j.contains("rho_clamp")) cfg.rho_clamp = j.at("rho_clamp").get<double>();
    if (j.contains("store_effects")) cfg.store_effects = j.at("store_effects").get<bool>();
}

}  // namespace

SyntheticTruth parse_synthetic_truth(const json& j, std::uint64_t default_seed) {
    SyntheticTruth truth;
    truth.seed = default_seed;
    if (j.contains("n_nodes")) truth.n_nodes = j.at("n_nodes").get<int>();
    if (j.contains("seed")) truth.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("beta")) {
        for (const auto& [name, value] : j.at("beta").items()) truth.beta[name] = value.get<double>();
    }
    if (j.contains("cov")) {
        const auto& c = j.at("cov");
        if (c.contains("sigma_a2")) truth.cov.sigma_a2 = c.at("sigma_a2").get<double>();
        if (c.contains("sigma_b2")) truth.cov.sigma_b2 = c.at("sigma_b2").get<double>();
        if (c.contains("sigma_ab")) truth.cov.sigma_ab = c.at("sigma_ab").get<double>();
        if (c.contains("sigma_nu2")) truth.cov.sigma_nu2 = c.at("sigma_nu2").get<double>();
        if (c.contains("rho")) truth.cov.rho = c.at("rho").get<double>();
    }
    if (j.contains("lha_count")) truth.lha_count = j.at("lha_count").get<int>();
    if (j.contains("mean_travel_minutes")) truth.mean_travel_minutes = j.at("mean_travel_minutes").get<double>();
    if (j.contains("geo_threshold_minutes")) truth.geo_threshold_minutes = j.at("geo_threshold_minutes").get<double>();
    if (j.contains("eta_clamp")) truth.eta_clamp = j.at("eta_clamp").get<double>();
    if (j.contains("stage2")) {
        const auto& s = j.at("stage2");
        if (s.contains("intercept")) truth.stage2.intercept = s.at("intercept").get<double>();
        if (s.contains("xi")) truth.stage2.xi = s.at("xi").get<double>();
        if (s.contains("coefficients")) {
            for (const auto& [name, value] : s.at("coefficients").items()) truth.stage2.coefficients[name] = value.get<double>();
        }
        if (s.contains("sigma_u2")) truth.stage2.sigma_u2 = s.at("sigma_u2").get<double>();
        if (s.contains("sigma_eps2")) truth.stage2.sigma_eps2 = s.at("sigma_eps2").get<double>();
    }
    return truth;
}

PipelineConfig parse_pipeline_config(const json& j) {
    PipelineConfig cfg;
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("inputs")) {
        for (const auto& [name, value] : j.at("inputs").items()) cfg.inputs[name] = value.get<std::string>();
    }
    if (j.contains("srm_spec")) parse_srm_spec(j.at("srm_spec"), cfg.srm_spec);
    if (j.contains("quality_spec")) parse_quality_spec(j.at("quality_spec"), cfg.quality_spec);
    if (j.contains("mcmc")) parse_mcmc(j.at("mcmc"), cfg.mcmc);
    if (j.contains("emit_draws")) cfg.emit_draws = j.at("emit_draws").get<bool>();
    if (j.contains("heatmap_filters")) cfg.heatmap_filters = j.at("heatmap_filters").get<std::vector<std::string>>();
    if (j.contains("thresholds_minutes")) cfg.thresholds_minutes = j.at("thresholds_minutes").get<std::vector<double>>();
    if (j.contains("geo_threshold_minutes")) cfg.geo_threshold_minutes = j.at("geo_threshold_minutes").get<double>();
    if (j.contains("synthetic")) {
        cfg.synthetic = parse_synthetic_truth(j.at("synthetic"), cfg.seed.value_or(0));
        cfg.synthetic_seed_explicit = j.at("synthetic").contains("seed");
    }
    if (j.contains("recovery")) {
        const auto& r = j.at("recovery");
        if (r.contains("replicates")) cfg.recovery_replicates = r.at("replicates").get<int>();
        if (r.contains("stage")) cfg.recovery_stage = r.at("stage").get<int>();
    }
    cfg.config_hash = fnv1a_hex(j.dump());
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    try {
        return parse_pipeline_config(j);
    } catch (const json::exception& e) {
        throw ConfigError("config field error in " + path + ": " + e.what());
    }
}

void write_stage1_outputs(const PosteriorSamples& samples, const DyadDesign& design, const std::string& out_dir,
                          bool emit_draws) {
    namespace fs = std::filesystem;
    atomic_write_file((fs::path(out_dir) / "stage1_summary.csv").string(), summary_csv(summarize_posterior(samples)));

    // Internal-scale draws, consumed by the gof and predict commands.
    {
        std::ostringstream out;
        out << "draw";
        for (const auto& name : samples.names) out << ',' << name;
        out << '\n';
        const int p = static_cast<int>(samples.beta_std_draws.cols());
        for (int d = 0; d < samples.draw_count(); ++d) {
            out << d;
            for (int k = 0; k < p; ++k) out << ',' << format_double(samples.beta_std_draws(d, k));
            for (int k = p; k < static_cast<int>(samples.names.size()); ++k) out << ',' << format_double(samples.draws(d, k));
            out << '\n';
        }
        atomic_write_file((fs::path(out_dir) / "stage1_draws_std.csv").string(), out.str());
    }
    if (emit_draws) {
        std::ostringstream out;
        out << "draw";
        for (const auto& name : samples.names) out << ',' << name;
        out << '\n';
        for (int d = 0; d < samples.draw_count(); ++d) {
            out << d;
            for (Eigen::Index k = 0; k < samples.draws.cols(); ++k) out << ',' << format_double(samples.draws(d, k));
            out << '\n';
        }
        atomic_write_file((fs::path(out_dir) / "stage1_draws.csv").string(), out.str());
    }

    json meta;
    meta["include_quality"] = samples.include_quality;
    meta["excluded_covariates"] = samples.excluded_covariates;
    meta["node_ids"] = samples.node_ids;
    meta["draw_count"] = samples.draw_count();
    json cols = json::array();
    for (const auto& col : design.columns) {
        cols.push_back({{"name", col.name}, {"center", col.center}, {"scale", col.scale}, {"standardized", col.standardized}});
    }
    meta["columns"] = cols;
    json acc;
    for (const auto& [name, rate] : samples.acceptance_rates) acc[name] = rate;
    meta["acceptance_rates"] = acc;
    atomic_write_file((fs::path(out_dir) / "stage1_meta.json").string(), meta.dump(2) + "\n");
}

PosteriorSamples load_stage1_samples(const std::string& out_dir, const DyadDesign& design) {
    namespace fs = std::filesystem;
    const std::string meta_path = (fs::path(out_dir) / "stage1_meta.json").string();
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw InputError("missing stage-1 fit output: " + meta_path);
    json meta;
    meta_in >> meta;

    PosteriorSamples samples;
    samples.include_quality = meta.at("include_quality").get<bool>();
    samples.excluded_covariates = meta.at("excluded_covariates").get<std::vector<std::string>>();
    samples.node_ids = meta.at("node_ids").get<std::vector<std::string>>();
    if (samples.node_ids != design.node_ids) throw InputError("stage-1 fit and current inputs disagree on node ids");
    if (samples.include_quality != design.include_quality) {
        throw InputError("stage-1 fit and current spec disagree on include_quality");
    }
    const auto cols = meta.at("columns");
    if (cols.size() != design.columns.size()) throw InputError("stage-1 fit and current design disagree on columns");
    for (std::size_t k = 0; k < design.columns.size(); ++k) {
        if (cols[k].at("name").get<std::string>() != design.columns[k].name) {
            throw InputError("stage-1 fit and current design disagree on column '" + design.columns[k].name + "'");
        }
    }

    const std::string draws_path = (fs::path(out_dir) / "stage1_draws_std.csv").string();
    const CsvTable csv = read_csv(draws_path);
    samples.names.assign(csv.header.begin() + 1, csv.header.end());
    const int p = design.column_count();
    if (static_cast<int>(samples.names.size()) != p + 5) throw InputError("unexpected column count in " + draws_path);
    const int n_draws = static_cast<int>(csv.rows.size());
    samples.beta_std_draws.resize(n_draws, p);
    samples.draws.resize(n_draws, p + 5);
    for (int d = 0; d < n_draws; ++d) {
        Eigen::VectorXd beta_std(p);
        for (int k = 0; k < p; ++k) {
            beta_std[k] = parse_double(csv.rows[static_cast<std::size_t>(d)][static_cast<std::size_t>(k + 1)], draws_path);
        }
        samples.beta_std_draws.row(d) = beta_std.transpose();
        samples.draws.row(d).head(p) = design.to_original_scale(beta_std).transpose();
        for (int k = p; k < p + 5; ++k) {
            samples.draws(d, k) = parse_double(csv.rows[static_cast<std::size_t>(d)][static_cast<std::size_t>(k + 1)], draws_path);
        }
    }
    return samples;
}

void write_predicted_transfers(const PredictedTransfers& that, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::ostringstream out;
    out << "src,dst,predicted\n";
    const int n = static_cast<int>(that.node_ids.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            out << that.node_ids[static_cast<std::size_t>(i)] << ',' << that.node_ids[static_cast<std::size_t>(j)] << ','
                << format_double(that.matrix(i, j)) << '\n';
        }
    }
    atomic_write_file((fs::path(out_dir) / "predicted_transfers.csv").string(), out.str());

    json meta;
    meta["include_quality"] = that.provenance.include_quality;
    meta["effects_excluded"] = that.provenance.effects_excluded;
    meta["excluded_covariates"] = that.provenance.excluded_covariates;
    atomic_write_file((fs::path(out_dir) / "predicted_transfers_meta.json").string(), meta.dump(2) + "\n");
}

PredictedTransfers load_predicted_transfers(const std::string& out_dir) {
    namespace fs = std::filesystem;
    const std::string meta_path = (fs::path(out_dir) / "predicted_transfers_meta.json").string();
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw InputError("missing predicted-transfer output: " + meta_path);
    json meta;
    meta_in >> meta;

    PredictedTransfers that;
    that.provenance.include_quality = meta.at("include_quality").get<bool>();
    that.provenance.effects_excluded = meta.at("effects_excluded").get<bool>();
    if (meta.contains("excluded_covariates")) {
        that.provenance.excluded_covariates = meta.at("excluded_covariates").get<std::vector<std::string>>();
    }

    const std::string csv_path = (fs::path(out_dir) / "predicted_transfers.csv").string();
    const CsvTable csv = read_csv(csv_path);
    const std::size_t src_c = csv.column("src");
    const std::size_t dst_c = csv.column("dst");
    const std::size_t val_c = csv.column("predicted");
    std::set<std::string> id_set;
    for (const auto& row : csv.rows) {
        id_set.insert(row[src_c]);
        id_set.insert(row[dst_c]);
    }
    that.node_ids.assign(id_set.begin(), id_set.end());
    std::map<std::string, int> index;
    for (std::size_t k = 0; k < that.node_ids.size(); ++k) index[that.node_ids[k]] = static_cast<int>(k);
    const int n = static_cast<int>(that.node_ids.size());
    that.matrix = Eigen::MatrixXd::Zero(n, n);
    for (const auto& row : csv.rows) {
        that.matrix(index.at(row[src_c]), index.at(row[dst_c])) = parse_double(row[val_c], csv_path);
    }
    return that;
}

void write_manifest(const RunManifest& manifest, const std::string& out_dir) {
    namespace fs = std::filesystem;
    json j;
    j["command"] = manifest.command;
    j["config_hash"] = manifest.config_hash;
    j["seed"] = manifest.seed;
    j["version"] = manifest.version;
    j["compiler"] = manifest.compiler;
    j["wall_time_seconds"] = manifest.wall_time_seconds;
    j["status"] = manifest.status;
    j["message"] = manifest.message;
    j["outputs"] = manifest.outputs;
    atomic_write_file((fs::path(out_dir) / "run_manifest.json").string(), j.dump(2) + "\n");
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace flownet
