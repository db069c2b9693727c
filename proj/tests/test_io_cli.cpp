#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flownet/commands.hpp"
#include "flownet/csv.hpp"
#include "flownet/errors.hpp"
#include "flownet/io_json.hpp"

using namespace flownet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("flownet_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& name = "") const { return (name.empty() ? path : path / name).string(); }
};

int run_cli_process(const std::string& args) {
    const std::string cmd = std::string(FLOWNET_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) { atomic_write_file(path, content); }

json make_small_synthetic_config(const TempDir& dir, std::uint64_t seed) {
    json j;
    j["seed"] = seed;
    j["out_dir"] = dir.str("out");
    j["synthetic"] = {
        {"n_nodes", 16},
        {"beta", {{"intercept", -0.2}, {"distance", -0.04}, {"co_membership", 1.0}}},
        {"cov", {{"sigma_a2", 0.1}, {"sigma_b2", 0.1}, {"sigma_ab", 0.02}, {"sigma_nu2", 0.3}, {"rho", 0.4}}},
        {"lha_count", 3},
        {"stage2", {{"intercept", 2.0}, {"xi", -0.03}, {"sigma_u2", 0.05}, {"sigma_eps2", 0.05}}},
    };
    j["inputs"] = {{"nodes", dir.str("out/nodes.csv")},
                   {"dyads", dir.str("out/dyads.csv")},
                   {"edges", dir.str("out/edges.csv")},
                   {"travel", dir.str("out/travel.csv")}};
    j["srm_spec"] = {{"node_covariates", {"hd", "dc"}}, {"include_quality", false}};
    j["quality_spec"] = {{"pair_average_covariates", {"hd"}},
                         {"include_teach", false},
                         {"include_mono", false},
                         {"include_techno", false},
                         {"outcome_column", "w_mortality"}};
    j["mcmc"] = {{"burn_in", 150}, {"main_iterations", 400}, {"thin", 10}};
    return j;
}

}  // namespace

TEST_CASE("csv parsing reports line numbers and missing columns") {
    CHECK_THROWS_WITH_AS(parse_csv("a,b\n1\n", "test.csv"), doctest::Contains("test.csv:2"), InputError);
    CHECK_THROWS_AS(parse_csv("", "empty.csv"), InputError);
    const auto t = parse_csv("a,b\n1,2\n", "t.csv");
    CHECK(t.column("b") == 1);
    CHECK_THROWS_AS(t.column("c"), InputError);
    CHECK_THROWS_AS(read_csv("/does/not/exist.csv"), InputError);
}

TEST_CASE("table writers round-trip through their readers") {
    TempDir dir("roundtrip");

    NodeTable nodes;
    nodes.ids = {"a", "b", "c"};
    nodes.columns["hd"] = {100.5, 200.25, 300.125};
    nodes.columns["public"] = {1, 0, 1};
    write_node_table(nodes, dir.str("nodes.csv"));
    const auto nodes2 = read_node_table(dir.str("nodes.csv"));
    CHECK(nodes2.ids == nodes.ids);
    CHECK(nodes2.column("hd") == nodes.columns["hd"]);

    DyadTable dyads;
    dyads.ids = {"a", "b", "c"};
    dyads.distance = Eigen::MatrixXd::Zero(3, 3);
    dyads.distance << 0, 12.5, 33.25, 12.5, 0, 21.0, 33.25, 21.0, 0;
    dyads.co_membership = Eigen::MatrixXd::Zero(3, 3);
    dyads.co_membership(0, 1) = dyads.co_membership(1, 0) = 1;
    write_dyad_table(dyads, dir.str("dyads.csv"));
    const auto dyads2 = read_dyad_table(dir.str("dyads.csv"));
    CHECK((dyads2.distance - dyads.distance).cwiseAbs().maxCoeff() == 0.0);
    CHECK((dyads2.co_membership - dyads.co_membership).cwiseAbs().maxCoeff() == 0.0);

    const auto net = build_network({"a", "b", "c"}, {{"a", "b", 4}, {"c", "a", 2}});
    write_edge_list(net, dir.str("edges.csv"));
    auto [ids, edges] = read_edge_list(dir.str("edges.csv"));
    const auto net2 = build_network({"a", "b", "c"}, edges);
    CHECK(net2.count(0, 1) == 4);
    CHECK(net2.count(2, 0) == 2);
    CHECK(net2.total_count() == net.total_count());

    write_travel_matrix(dyads.ids, dyads.distance, dir.str("travel.csv"));
    auto [tids, tm] = read_travel_matrix(dir.str("travel.csv"));
    CHECK(tids == dyads.ids);
    CHECK((tm - dyads.distance).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("atomic write leaves no temp files and config hash is stable") {
    TempDir dir("atomic");
    atomic_write_file(dir.str("x.txt"), "hello");
    CHECK(slurp(dir.str("x.txt")) == "hello");
    CHECK_FALSE(fs::exists(dir.str("x.txt.tmp")));

    const json a = {{"seed", 1}, {"out_dir", "o"}};
    const json b = {{"out_dir", "o"}, {"seed", 1}};  // same content, different order
    CHECK(parse_pipeline_config(a).config_hash == parse_pipeline_config(b).config_hash);
    CHECK(fnv1a_hex("x") != fnv1a_hex("y"));
}

TEST_CASE("cli: simulate then netstats and communities agree with the library") {
    TempDir dir("cli_smoke");
    const json cfg = make_small_synthetic_config(dir, 31);
    write_file(dir.str("config.json"), cfg.dump(2));

    REQUIRE(run_cli_process("simulate --config " + dir.str("config.json")) == 0);
    CHECK(fs::exists(dir.str("out/nodes.csv")));
    CHECK(fs::exists(dir.str("out/edges.csv")));
    CHECK(fs::exists(dir.str("out/run_manifest.json")));

    REQUIRE(run_cli_process("netstats --config " + dir.str("config.json")) == 0);
    const auto stats = read_csv(dir.str("out/netstats_nodes.csv"));
    CHECK(stats.has_column("in_degree"));
    CHECK(stats.has_column("betweenness"));

    // The file contents equal the library outputs.
    auto [ids, edges] = read_edge_list(dir.str("out/edges.csv"));
    const auto nodes_tbl = read_node_table(dir.str("out/nodes.csv"));
    std::vector<std::string> all_ids = nodes_tbl.ids;
    std::sort(all_ids.begin(), all_ids.end());
    const auto net = build_network(all_ids, edges);
    const auto deg_in = degree_scores(net, Direction::In);
    const std::size_t node_c = stats.column("node");
    const std::size_t group_c = stats.column("group");
    const std::size_t in_c = stats.column("in_degree");
    int checked = 0;
    for (const auto& row : stats.rows) {
        if (row[group_c] != "overall") continue;
        const int idx = net.node_index(row[node_c]);
        CHECK(parse_count(row[in_c], "deg") == deg_in.scores[static_cast<std::size_t>(idx)]);
        ++checked;
    }
    CHECK(checked == net.size());

    REQUIRE(run_cli_process("communities --config " + dir.str("config.json")) == 0);
    const auto part = read_csv(dir.str("out/partition.csv"));
    CHECK(part.rows.size() == static_cast<std::size_t>(net.size()));
}

TEST_CASE("cli: fit, gof, predict, stage-2 chain runs and reruns byte-identically") {
    TempDir dir("cli_chain");
    json cfg = make_small_synthetic_config(dir, 77);
    write_file(dir.str("config.json"), cfg.dump(2));
    REQUIRE(run_cli_process("simulate --config " + dir.str("config.json")) == 0);

    for (const char* sub : {"fit-stage1", "gof", "predict", "fit-stage2"}) {
        INFO("subcommand ", sub);
        REQUIRE(run_cli_process(std::string(sub) + " --config " + dir.str("config.json")) == 0);
    }
    CHECK(fs::exists(dir.str("out/stage1_summary.csv")));
    CHECK(fs::exists(dir.str("out/gof_report.json")));
    CHECK(fs::exists(dir.str("out/predicted_transfers.csv")));
    CHECK(fs::exists(dir.str("out/stage2_summary.csv")));
    CHECK(fs::exists(dir.str("out/stage2_notes.txt")));
    CHECK(fs::exists(dir.str("out/heatmap_public-public.csv")));

    // The stage-2 summary includes the effect-size row, and the notes spell
    // out the closed-form percentage and its known discrepancy.
    CHECK(slurp(dir.str("out/stage2_summary.csv")).find("effect_size_pct_per_transfer") != std::string::npos);
    const std::string notes = slurp(dir.str("out/stage2_notes.txt"));
    CHECK(notes.find("1.193") != std::string::npos);
    CHECK(notes.find("1.9%") != std::string::npos);

    // Rerun the chained stages into a second directory with the same seed:
    // numeric outputs must match byte for byte (the manifest carries timing).
    TempDir dir2("cli_chain_second");
    json cfg2 = cfg;
    cfg2["out_dir"] = dir2.str("out");
    cfg2["inputs"] = {{"nodes", dir2.str("out/nodes.csv")},
                      {"dyads", dir2.str("out/dyads.csv")},
                      {"edges", dir2.str("out/edges.csv")},
                      {"travel", dir2.str("out/travel.csv")}};
    write_file(dir2.str("config.json"), cfg2.dump(2));
    REQUIRE(run_cli_process("simulate --config " + dir2.str("config.json")) == 0);
    for (const char* sub : {"fit-stage1", "gof", "predict", "fit-stage2"}) {
        REQUIRE(run_cli_process(std::string(sub) + " --config " + dir2.str("config.json")) == 0);
    }
    for (const char* name : {"nodes.csv", "edges.csv", "stage1_summary.csv", "stage1_draws_std.csv", "gof_report.json",
                             "predicted_transfers.csv", "stage2_summary.csv"}) {
        INFO("comparing ", name);
        CHECK(slurp(dir.str(std::string("out/") + name)) == slurp(dir2.str(std::string("out/") + name)));
    }
}

TEST_CASE("cli: provenance refusal carries exit code 3 and a manifest") {
    TempDir dir("cli_refusal");
    json cfg = make_small_synthetic_config(dir, 55);
    cfg["srm_spec"]["include_quality"] = true;
    cfg["srm_spec"]["node_covariates"] = {"hd", "dc", "am", "ar"};
    write_file(dir.str("config.json"), cfg.dump(2));

    REQUIRE(run_cli_process("simulate --config " + dir.str("config.json")) == 0);
    REQUIRE(run_cli_process("fit-stage1 --config " + dir.str("config.json")) == 0);

    // predict must refuse the quality-contaminated stage-1 fit.
    CHECK(run_cli_process("predict --config " + dir.str("config.json")) == kExitProvenance);
    json manifest = json::parse(slurp(dir.str("out/run_manifest.json")));
    CHECK(manifest["status"] == "refused");

    // A forged predicted-transfers lineage is refused by stage 2 as well.
    write_file(dir.str("out/predicted_transfers.csv"), "src,dst,predicted\na,b,1\nb,a,1\n");
    write_file(dir.str("out/predicted_transfers_meta.json"),
               json({{"include_quality", true}, {"effects_excluded", true}}).dump());
    CHECK(run_cli_process("fit-stage2 --config " + dir.str("config.json")) == kExitProvenance);
    manifest = json::parse(slurp(dir.str("out/run_manifest.json")));
    CHECK(manifest["status"] == "refused");
}

TEST_CASE("cli: input errors exit with code 2 and name the path") {
    TempDir dir("cli_errors");
    json cfg = make_small_synthetic_config(dir, 9);
    write_file(dir.str("config.json"), cfg.dump(2));

    // No simulate ran, so the edge file is missing.
    CHECK(run_cli_process("netstats --config " + dir.str("config.json")) == kExitInput);
    const json manifest = json::parse(slurp(dir.str("out/run_manifest.json")));
    CHECK(manifest["status"] == "input_error");
    const std::string message = manifest["message"].get<std::string>();
    CHECK(message.find("edges.csv") != std::string::npos);

    // Seed is mandatory.
    json no_seed = cfg;
    no_seed.erase("seed");
    write_file(dir.str("noseed.json"), no_seed.dump(2));
    CHECK(run_cli_process("netstats --config " + dir.str("noseed.json")) == kExitInput);

    // Unknown flag and missing config are argument errors.
    CHECK(run_cli_process("netstats") != 0);
    CHECK(run_cli_process("nope --config " + dir.str("config.json")) != 0);
}

TEST_CASE("cli: an empty ownership subgroup still yields a well-formed section") {
    TempDir dir("cli_subgroup");
    fs::create_directories(dir.str("out"));
    write_file(dir.str("out/edges.csv"), "src,dst,count\na,b,2\nb,c,1\n");
    write_file(dir.str("out/nodes.csv"), "id,public\na,1\nb,1\nc,1\n");
    json cfg;
    cfg["seed"] = 4;
    cfg["out_dir"] = dir.str("out");
    cfg["inputs"] = {{"nodes", dir.str("out/nodes.csv")}, {"edges", dir.str("out/edges.csv")}};
    write_file(dir.str("config.json"), cfg.dump(2));
    REQUIRE(run_cli_process("netstats --config " + dir.str("config.json")) == 0);

    const auto nodes_csv = read_csv(dir.str("out/netstats_nodes.csv"));
    const std::size_t group_c = nodes_csv.column("group");
    int private_rows = 0, public_rows = 0;
    for (const auto& row : nodes_csv.rows) {
        if (row[group_c] == "private") ++private_rows;
        if (row[group_c] == "public") ++public_rows;
    }
    CHECK(private_rows == 0);  // empty subgroup: header only, no rows
    CHECK(public_rows == 3);

    const auto graph_csv = read_csv(dir.str("out/netstats_graph.csv"));
    bool saw_private = false;
    const std::size_t g_c = graph_csv.column("group");
    const std::size_t n_c = graph_csv.column("n_nodes");
    for (const auto& row : graph_csv.rows) {
        if (row[g_c] == "private") {
            saw_private = true;
            CHECK(row[n_c] == "0");
        }
    }
    CHECK(saw_private);
}

TEST_CASE("cli: malformed csv input is a line-numbered input error") {
    TempDir dir("cli_badcsv");
    json cfg = make_small_synthetic_config(dir, 12);
    write_file(dir.str("config.json"), cfg.dump(2));
    fs::create_directories(dir.str("out"));
    write_file(dir.str("out/edges.csv"), "src,dst,count\na,b\n");
    CHECK(run_cli_process("netstats --config " + dir.str("config.json")) == kExitInput);
    const json manifest = json::parse(slurp(dir.str("out/run_manifest.json")));
    const std::string message = manifest["message"].get<std::string>();
    CHECK(message.find(":2") != std::string::npos);
}
