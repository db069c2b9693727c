#include "flownet/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flownet/csv.hpp"
#include "flownet/errors.hpp"
#include "flownet/gof.hpp"
#include "flownet/stats.hpp"

namespace flownet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t require_seed(const PipelineConfig& cfg) {
    if (!cfg.seed) throw ConfigError("a seed is mandatory; set it in the config or pass --seed");
    return *cfg.seed;
}

std::uint64_t stream_seed(const PipelineConfig& cfg, std::string_view name) {
    return Rng(require_seed(cfg)).child(name).stream_seed();
}

DirectedCountNetwork load_network(const PipelineConfig& cfg) {
    auto [edge_ids, edges] = read_edge_list(cfg.input_path("edges"));
    if (cfg.has_input("nodes")) {
        // The node table is authoritative for the node set, so isolated
        // hospitals with no transfers still appear.
        NodeTable nodes = read_node_table(cfg.input_path("nodes"));
        std::vector<std::string> ids = nodes.ids;
        std::sort(ids.begin(), ids.end());
        return build_network(std::move(ids), edges);
    }
    return build_network(std::move(edge_ids), edges);
}

std::string fpath(const PipelineConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

}  // namespace

std::vector<std::string> cmd_netstats(const PipelineConfig& cfg) {
    const DirectedCountNetwork net = load_network(cfg);

    struct Group {
        std::string name;
        std::vector<int> members;
    };
    std::vector<Group> groups;
    {
        std::vector<int> all(static_cast<std::size_t>(net.size()));
        for (int i = 0; i < net.size(); ++i) all[static_cast<std::size_t>(i)] = i;
        groups.push_back({"overall", std::move(all)});
    }
    if (cfg.has_input("nodes")) {
        const NodeTable nodes = read_node_table(cfg.input_path("nodes"));
        if (nodes.has_column("public")) {
            const auto& pub = nodes.column("public");
            Group public_group{"public", {}}, private_group{"private", {}};
            for (int i = 0; i < net.size(); ++i) {
                const auto& id = net.nodes()[static_cast<std::size_t>(i)];
                const auto it = std::find(nodes.ids.begin(), nodes.ids.end(), id);
                if (it == nodes.ids.end()) throw InputError("node '" + id + "' missing from node table");
                const std::size_t k = static_cast<std::size_t>(it - nodes.ids.begin());
                (pub[k] != 0.0 ? public_group : private_group).members.push_back(i);
            }
            groups.push_back(std::move(public_group));
            groups.push_back(std::move(private_group));
        }
    }

    std::ostringstream nodes_out, graph_out;
    nodes_out << "group,node,in_degree,out_degree,in_strength,out_strength,in_closeness,out_closeness,betweenness\n";
    graph_out << "group,n_nodes,positive_pairs,total_transfers,in_centralization,out_centralization\n";
    for (const auto& group : groups) {
        const DirectedCountNetwork sub = group.name == "overall" ? net : net.induced(group.members);
        const auto deg_in = degree_scores(sub, Direction::In);
        const auto deg_out = degree_scores(sub, Direction::Out);
        const auto str_in = strength_scores(sub, Direction::In);
        const auto str_out = strength_scores(sub, Direction::Out);
        const auto clo_in = closeness_scores(sub, Direction::In);
        const auto clo_out = closeness_scores(sub, Direction::Out);
        const auto btw = betweenness_scores(sub);
        for (int i = 0; i < sub.size(); ++i) {
            const std::size_t k = static_cast<std::size_t>(i);
            nodes_out << group.name << ',' << sub.nodes()[k] << ',' << deg_in.scores[k] << ',' << deg_out.scores[k] << ','
                      << str_in[k] << ',' << str_out[k] << ',' << format_double(clo_in[k]) << ','
                      << format_double(clo_out[k]) << ',' << format_double(btw[k]) << '\n';
        }
        graph_out << group.name << ',' << sub.size() << ',' << sub.positive_pair_count() << ',' << sub.total_count()
                  << ',' << format_double(deg_in.centralization) << ',' << format_double(deg_out.centralization) << '\n';
    }
    atomic_write_file(fpath(cfg, "netstats_nodes.csv"), nodes_out.str());
    atomic_write_file(fpath(cfg, "netstats_graph.csv"), graph_out.str());
    std::vector<std::string> outputs = {"netstats_nodes.csv", "netstats_graph.csv"};

    // With a travel-time matrix available, also emit the geographic
    // covariates (threshold degree and rescaled betweenness).
    if (cfg.has_input("travel")) {
        auto [geo_ids, minutes] = read_travel_matrix(cfg.input_path("travel"));
        const GeoNetwork geo = geo_threshold_network(geo_ids, minutes, cfg.geo_threshold_minutes);
        const auto bw = betweenness_scores(geo.to_directed());
        std::ostringstream geo_out;
        geo_out << "node,dc,bw\n";
        for (int i = 0; i < geo.size(); ++i) {
            geo_out << geo_ids[static_cast<std::size_t>(i)] << ',' << geo.degree(i) << ','
                    << format_double(bw[static_cast<std::size_t>(i)]) << '\n';
        }
        atomic_write_file(fpath(cfg, "geo_covariates.csv"), geo_out.str());
        outputs.push_back("geo_covariates.csv");
    }
    return outputs;
}

std::vector<std::string> cmd_communities(const PipelineConfig& cfg) {
    const DirectedCountNetwork net = load_network(cfg);
    const CommunityPartition partition = louvain_communities(net, stream_seed(cfg, "communities"));

    std::map<std::string, std::pair<double, double>> coords;
    bool with_coords = false;
    if (cfg.has_input("coordinates")) {
        const CsvTable csv = read_csv(cfg.input_path("coordinates"));
        const std::size_t id_c = csv.column("id");
        const std::size_t x_c = csv.column("x");
        const std::size_t y_c = csv.column("y");
        for (const auto& row : csv.rows) {
            coords[row[id_c]] = {parse_double(row[x_c], "coordinates"), parse_double(row[y_c], "coordinates")};
        }
        with_coords = true;
    }

    std::ostringstream out;
    out << (with_coords ? "node,community,x,y\n" : "node,community\n");
    for (int i = 0; i < net.size(); ++i) {
        const auto& id = net.nodes()[static_cast<std::size_t>(i)];
        out << id << ',' << partition.assignment[static_cast<std::size_t>(i)];
        if (with_coords) {
            const auto it = coords.find(id);
            if (it == coords.end()) throw InputError("coordinates missing for node '" + id + "'");
            out << ',' << format_double(it->second.first) << ',' << format_double(it->second.second);
        }
        out << '\n';
    }
    atomic_write_file(fpath(cfg, "partition.csv"), out.str());

    json summary;
    summary["modularity"] = partition.modularity;
    summary["community_count"] = partition.community_count();
    atomic_write_file(fpath(cfg, "communities_summary.json"), summary.dump(2) + "\n");
    return {"partition.csv", "communities_summary.json"};
}

namespace {

DyadDesign build_stage1_design(const PipelineConfig& cfg, NodeTable* nodes_out = nullptr,
                               DyadTable* dyads_out = nullptr, DirectedCountNetwork* net_out = nullptr) {
    NodeTable nodes = read_node_table(cfg.input_path("nodes"));
    DyadTable dyads = read_dyad_table(cfg.input_path("dyads"));
    auto [edge_ids, edges] = read_edge_list(cfg.input_path("edges"));
    std::vector<std::string> ids = nodes.ids;
    std::sort(ids.begin(), ids.end());
    DirectedCountNetwork net = build_network(ids, edges);
    DyadDesign design = assemble_design(nodes, dyads, net, cfg.srm_spec);
    if (nodes_out) *nodes_out = std::move(nodes);
    if (dyads_out) *dyads_out = std::move(dyads);
    if (net_out) *net_out = std::move(net);
    return design;
}

}  // namespace

std::vector<std::string> cmd_fit_stage1(const PipelineConfig& cfg) {
    const DyadDesign design = build_stage1_design(cfg);
    McmcConfig mcmc = cfg.mcmc;
    mcmc.seed = stream_seed(cfg, "stage1");
    const PosteriorSamples samples = fit_srm(design, mcmc);
    write_stage1_outputs(samples, design, cfg.out_dir, cfg.emit_draws);
    std::vector<std::string> outputs = {"stage1_summary.csv", "stage1_draws_std.csv", "stage1_meta.json"};
    if (cfg.emit_draws) outputs.push_back("stage1_draws.csv");
    return outputs;
}

std::vector<std::string> cmd_gof(const PipelineConfig& cfg) {
    DirectedCountNetwork net;
    const DyadDesign design = build_stage1_design(cfg, nullptr, nullptr, &net);
    const PosteriorSamples samples = load_stage1_samples(cfg.out_dir, design);
    const GofReport report = posterior_predictive_gof(samples, design, net, Rng(stream_seed(cfg, "gof")));

    json j;
    auto triple_json = [](const GofTriple& t) {
        json o;
        o["sd_row_means"] = t.sd_row_means;
        o["sd_col_means"] = t.sd_col_means;
        if (t.dyad_correlation) o["dyad_correlation"] = *t.dyad_correlation;
        else o["dyad_correlation"] = nullptr;
        return o;
    };
    j["observed"] = triple_json(report.observed);
    j["quantiles"]["sd_row_means"] = report.quantile_sd_row;
    j["quantiles"]["sd_col_means"] = report.quantile_sd_col;
    if (report.quantile_dyad) j["quantiles"]["dyad_correlation"] = *report.quantile_dyad;
    else j["quantiles"]["dyad_correlation"] = nullptr;
    json reps = json::array();
    for (const auto& t : report.replicates) reps.push_back(triple_json(t));
    j["replicates"] = reps;
    atomic_write_file(fpath(cfg, "gof_report.json"), j.dump(2) + "\n");

    auto write_hist = [&](const std::string& name, const std::function<std::optional<double>(const GofTriple&)>& get) {
        std::ostringstream out;
        out << "draw,value\n";
        for (std::size_t d = 0; d < report.replicates.size(); ++d) {
            const auto v = get(report.replicates[d]);
            if (v) out << d << ',' << format_double(*v) << '\n';
        }
        atomic_write_file(fpath(cfg, "gof_hist_" + name + ".csv"), out.str());
    };
    write_hist("sd_row_means", [](const GofTriple& t) { return std::optional<double>(t.sd_row_means); });
    write_hist("sd_col_means", [](const GofTriple& t) { return std::optional<double>(t.sd_col_means); });
    write_hist("dyad_correlation", [](const GofTriple& t) { return t.dyad_correlation; });
    return {"gof_report.json", "gof_hist_sd_row_means.csv", "gof_hist_sd_col_means.csv", "gof_hist_dyad_correlation.csv"};
}

std::vector<std::string> cmd_predict(const PipelineConfig& cfg) {
    const DyadDesign design = build_stage1_design(cfg);
    const PosteriorSamples samples = load_stage1_samples(cfg.out_dir, design);
    const PredictedTransfers that = predict_transfers(samples, design);
    write_predicted_transfers(that, cfg.out_dir);
    return {"predicted_transfers.csv", "predicted_transfers_meta.json"};
}

std::vector<std::string> cmd_fit_stage2(const PipelineConfig& cfg) {
    const NodeTable nodes = read_node_table(cfg.input_path("nodes"));
    const PredictedTransfers that = load_predicted_transfers(cfg.out_dir);
    if (that.provenance.include_quality || !that.provenance.effects_excluded) {
        throw ProvenanceError(
            "stage-2 refuses these predicted transfers: the stage-1 fit must exclude quality covariates and random effects");
    }

    const auto& outcome = nodes.column(cfg.quality_spec.outcome_column);
    std::vector<long long> w_counts;
    w_counts.reserve(outcome.size());
    for (std::size_t i = 0; i < outcome.size(); ++i) {
        const double v = outcome[i];
        if (v < 0.0 || std::floor(v) != v) {
            throw InputError("outcome column '" + cfg.quality_spec.outcome_column + "' must hold non-negative counts");
        }
        w_counts.push_back(static_cast<long long>(v));
    }
    const QualityMatrix w = overall_quality(nodes.ids, w_counts);

    McmcConfig mcmc = cfg.mcmc;
    mcmc.seed = stream_seed(cfg, "stage2");
    const QualityPosterior post = fit_quality_model(w, that, nodes, cfg.quality_spec, mcmc);

    auto rows = summarize_draws(post.names, post.draws);
    {
        // Effect size of the transfer slope, summarized over draws.
        const Eigen::VectorXd xi = post.column("predicted_transfers");
        Eigen::MatrixXd es(xi.size(), 1);
        for (Eigen::Index d = 0; d < xi.size(); ++d) es(d, 0) = effect_size(xi[d]);
        const auto es_rows = summarize_draws({"effect_size_pct_per_transfer"}, es);
        rows.push_back(es_rows.front());
    }
    atomic_write_file(fpath(cfg, "stage2_summary.csv"), summary_csv(rows));

    {
        std::ostringstream notes;
        notes << "Effect size: percent reduction in the expected pairwise outcome per additional\n"
              << "predicted transfer, computed from the coefficient xi as (1 - exp(xi)) * 100.\n"
              << "Examples: xi = -0.012 -> 1.193%; xi = -0.013 -> 1.292%.\n"
              << "Note: percentage effects near 1.9%/2.2% sometimes quoted for coefficients of\n"
              << "this magnitude do not follow from the closed form above; this artifact reports\n"
              << "the closed-form percentage next to the raw coefficient and leaves the\n"
              << "discrepancy visible rather than matching the quoted numbers.\n";
        atomic_write_file(fpath(cfg, "stage2_notes.txt"), notes.str());
    }

    json diag;
    for (const auto& [name, rate] : post.acceptance_rates) diag["acceptance_rates"][name] = rate;
    diag["draw_count"] = post.draw_count();
    diag["interaction"] = post.interaction;
    atomic_write_file(fpath(cfg, "stage2_diagnostics.json"), diag.dump(2) + "\n");

    std::vector<std::string> outputs = {"stage2_summary.csv", "stage2_notes.txt", "stage2_diagnostics.json"};

    if (cfg.has_input("edges")) {
        const DirectedCountNetwork net = load_network(cfg);
        for (const auto& filter : cfg.heatmap_filters) {
            const auto cells = heatmap_export(post, net, nodes, filter);
            std::ostringstream out;
            out << "row_id,col_id,observed_transfers,predicted_outcome_per_discharge,log_value,is_zero\n";
            for (const auto& c : cells) {
                out << c.row_id << ',' << c.col_id << ',' << format_double(c.observed_transfers) << ','
                    << format_double(c.predicted_outcome_per_discharge) << ','
                    << (c.log_value ? format_double(*c.log_value) : std::string("NA")) << ',' << (c.is_zero ? 1 : 0)
                    << '\n';
            }
            const std::string name = "heatmap_" + filter + ".csv";
            atomic_write_file(fpath(cfg, name), out.str());
            outputs.push_back(name);
        }
    }

    if (post.interaction) {
        const MarginalSlopes slopes = ownership_marginal_slopes(post);
        atomic_write_file(fpath(cfg, "stage2_marginal_slopes.csv"),
                          summary_csv(summarize_draws(slopes.categories, slopes.draws)));
        outputs.push_back("stage2_marginal_slopes.csv");
    }
    return outputs;
}

namespace {

// The truth seed flows from the run seed through a named substream unless
// the config pinned it explicitly.
SyntheticTruth resolve_truth(const PipelineConfig& cfg) {
    if (!cfg.synthetic) throw ConfigError("this command needs a 'synthetic' block in the config");
    SyntheticTruth truth = *cfg.synthetic;
    if (!cfg.synthetic_seed_explicit) truth.seed = stream_seed(cfg, "truth");
    return truth;
}

}  // namespace

std::vector<std::string> cmd_simulate(const PipelineConfig& cfg) {
    const SyntheticTruth truth = resolve_truth(cfg);
    const SimulatedStage1 sim = simulate_stage1(truth);
    if (sim.clamp_warning) {
        std::cerr << "warning: " << sim.clamp_saturated << " simulated pairs hit the predictor clamp; the truth may be too extreme\n";
    }
    write_node_table(sim.nodes, fpath(cfg, "nodes.csv"));
    write_dyad_table(sim.dyads, fpath(cfg, "dyads.csv"));
    write_edge_list(sim.net, fpath(cfg, "edges.csv"));
    write_travel_matrix(sim.dyads.ids, sim.dyads.distance, fpath(cfg, "travel.csv"));
    json meta;
    meta["n_nodes"] = truth.n_nodes;
    meta["clamp_saturated"] = sim.clamp_saturated;
    meta["clamp_warning"] = sim.clamp_warning;
    meta["total_transfers"] = sim.net.total_count();
    atomic_write_file(fpath(cfg, "simulation_meta.json"), meta.dump(2) + "\n");
    return {"nodes.csv", "dyads.csv", "edges.csv", "travel.csv", "simulation_meta.json"};
}

std::vector<std::string> cmd_recovery(const PipelineConfig& cfg) {
    const SyntheticTruth truth = resolve_truth(cfg);
    McmcConfig mcmc = cfg.mcmc;
    mcmc.seed = stream_seed(cfg, "recovery");
    RecoveryReport report;
    if (cfg.recovery_stage == 1) {
        report = recovery_experiment(truth, cfg.recovery_replicates, cfg.srm_spec, mcmc, cfg.threads);
    } else if (cfg.recovery_stage == 2) {
        report = recovery_experiment_stage2(truth, cfg.recovery_replicates, cfg.quality_spec, mcmc, cfg.threads);
    } else {
        throw ConfigError("recovery stage must be 1 or 2");
    }
    json j;
    j["replicates"] = report.replicates;
    j["stage"] = cfg.recovery_stage;
    json params = json::array();
    for (const auto& p : report.params) {
        params.push_back({{"name", p.name},
                          {"truth", p.truth},
                          {"covered", p.covered},
                          {"replicates", p.replicates},
                          {"mean_bias", p.mean_bias},
                          {"mean_ci_width", p.mean_ci_width}});
    }
    j["parameters"] = params;
    atomic_write_file(fpath(cfg, "recovery_report.json"), j.dump(2) + "\n");
    return {"recovery_report.json"};
}

std::vector<std::string> cmd_robustness(const PipelineConfig& cfg) {
    NodeTable nodes;
    DyadTable dyads;
    DirectedCountNetwork net;
    build_stage1_design(cfg, &nodes, &dyads, &net);  // validates inputs
    McmcConfig mcmc = cfg.mcmc;
    mcmc.seed = stream_seed(cfg, "robustness");
    const ThresholdRobustness rob =
        dc_threshold_robustness(nodes, dyads, net, cfg.thresholds_minutes, cfg.srm_spec, mcmc, cfg.threads);
    std::ostringstream out;
    out << "threshold";
    for (double t : rob.thresholds) out << ',' << format_double(t);
    out << '\n';
    for (std::size_t s = 0; s < rob.thresholds.size(); ++s) {
        out << format_double(rob.thresholds[s]);
        for (std::size_t t = 0; t < rob.thresholds.size(); ++t) {
            out << ',' << format_double(rob.correlation(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)));
        }
        out << '\n';
    }
    atomic_write_file(fpath(cfg, "threshold_correlations.csv"), out.str());
    return {"threshold_correlations.csv"};
}

std::vector<std::string> cmd_pipeline(const PipelineConfig& cfg) {
    std::vector<std::string> outputs;
    for (auto* step : {&cmd_netstats, &cmd_communities, &cmd_fit_stage1, &cmd_gof, &cmd_predict, &cmd_fit_stage2}) {
        const auto step_outputs = (*step)(cfg);
        outputs.insert(outputs.end(), step_outputs.begin(), step_outputs.end());
    }
    return outputs;
}

namespace {

int run_command(const std::string& name, const PipelineConfig& cfg,
                const std::function<std::vector<std::string>(const PipelineConfig&)>& body) {
    RunManifest manifest;
    manifest.command = name;
    manifest.config_hash = cfg.config_hash;
    manifest.seed = cfg.seed.value_or(0);
    manifest.compiler = __VERSION__;
    const auto start = std::chrono::steady_clock::now();
    int code = kExitOk;
    try {
        require_seed(cfg);
        manifest.outputs = body(cfg);
    } catch (const ProvenanceError& e) {
        manifest.status = "refused";
        manifest.message = e.what();
        code = kExitProvenance;
    } catch (const InputError& e) {
        manifest.status = "input_error";
        manifest.message = e.what();
        code = kExitInput;
    } catch (const NumericError& e) {
        manifest.status = "numeric_error";
        manifest.message = e.what();
        code = kExitNumeric;
    }
    manifest.wall_time_seconds =
        std::chrono::duration_cast<std::chrono::duration<double>>(std::chrono::steady_clock::now() - start).count();
    try {
        write_manifest(manifest, cfg.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "failed to write manifest: " << e.what() << '\n';
        if (code == kExitOk) code = kExitInput;
    }
    if (code != kExitOk) std::cerr << "error: " << manifest.message << '\n';
    return code;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Dyadic transfer-network modeling: descriptive statistics, Bayesian flow model, fit checks, and the two-stage quality analysis"};
    app.require_subcommand(1);

    struct SubcommandSpec {
        const char* name;
        const char* help;
        std::function<std::vector<std::string>(const PipelineConfig&)> body;
    };
    const std::vector<SubcommandSpec> subs = {
        {"netstats", "per-node and graph-level centrality tables", cmd_netstats},
        {"communities", "modularity community detection", cmd_communities},
        {"fit-stage1", "fit the flow model", cmd_fit_stage1},
        {"gof", "posterior-predictive fit checks for the flow model", cmd_gof},
        {"predict", "exogenous predicted transfers from a clean stage-1 fit", cmd_predict},
        {"fit-stage2", "fit the pairwise quality model on predicted transfers", cmd_fit_stage2},
        {"simulate", "generate synthetic tables from a ground truth", cmd_simulate},
        {"recovery", "parameter-recovery experiment on synthetic data", cmd_recovery},
        {"robustness", "refit across geographic-degree thresholds and correlate predictions", cmd_robustness},
        {"pipeline", "run the full chain end to end", cmd_pipeline},
    };

    struct Options {
        std::string config_path;
        std::string out_override;
        std::uint64_t seed_override = 0;
        bool seed_set = false;
        int threads_override = 0;
    };
    std::map<std::string, Options> opts;
    for (const auto& sub : subs) {
        CLI::App* s = app.add_subcommand(sub.name, sub.help);
        auto& o = opts[sub.name];
        s->add_option("--config", o.config_path, "path to the JSON run configuration")->required();
        s->add_option("--seed", o.seed_override, "override the config seed")->each([&o](const std::string&) { o.seed_set = true; });
        s->add_option("--out", o.out_override, "override the output directory");
        s->add_option("--threads", o.threads_override, "worker threads for replicate-level parallelism");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    }

    for (const auto& sub : subs) {
        if (!app.got_subcommand(sub.name)) continue;
        const auto& o = opts[sub.name];
        PipelineConfig cfg;
        try {
            cfg = load_pipeline_config(o.config_path);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitInput;
        }
        if (o.seed_set) cfg.seed = o.seed_override;
        if (!o.out_override.empty()) cfg.out_dir = o.out_override;
        if (o.threads_override > 0) cfg.threads = o.threads_override;
        return run_command(sub.name, cfg, sub.body);
    }
    return kExitInput;
}

}  // namespace flownet
