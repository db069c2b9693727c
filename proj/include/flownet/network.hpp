#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace flownet {

enum class Direction { In, Out };

struct EdgeCount {
    std::string src;
    std::string dst;
    long long count = 0;
};

// Directed network of non-negative integer flows, no self-loops. Immutable
// after construction; all statistics below are pure functions of it.
class DirectedCountNetwork {
  public:
    DirectedCountNetwork() = default;

    int size() const { return static_cast<int>(nodes_.size()); }
    const std::vector<std::string>& nodes() const { return nodes_; }
    int node_index(const std::string& id) const;  // throws InputError on unknown id
    long long count(int i, int j) const;
    long long total_count() const { return total_; }
    std::size_t positive_pair_count() const { return n_positive_pairs_; }

    // Distinct counterparts with positive flow, sorted by index.
    const std::vector<int>& out_neighbors(int i) const { return out_adj_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& in_neighbors(int i) const { return in_adj_[static_cast<std::size_t>(i)]; }

    friend DirectedCountNetwork build_network(std::vector<std::string> nodes, const std::vector<EdgeCount>& edges);

    // Induced subnetwork on a node subset (used for ownership subgroups).
    DirectedCountNetwork induced(const std::vector<int>& keep) const;

  private:
    std::vector<std::string> nodes_;
    std::unordered_map<std::string, int> index_;
    std::unordered_map<std::uint64_t, long long> counts_;  // key = i * N + j
    std::vector<std::vector<int>> out_adj_;
    std::vector<std::vector<int>> in_adj_;
    long long total_ = 0;
    std::size_t n_positive_pairs_ = 0;
};

DirectedCountNetwork build_network(std::vector<std::string> nodes, const std::vector<EdgeCount>& edges);

struct DegreeScores {
    std::vector<long long> scores;  // aligned with net.nodes()
    double centralization = 0.0;    // Freeman, denominator (N-1)^2
};

DegreeScores degree_scores(const DirectedCountNetwork& net, Direction direction);
std::vector<long long> strength_scores(const DirectedCountNetwork& net, Direction direction);

// Closeness on unweighted step counts with the reachable-set convention:
// c(v) = (R/(N-1)) * (R / sum of distances to the R reachable nodes),
// 0 for nodes reaching nothing.
std::vector<double> closeness_scores(const DirectedCountNetwork& net, Direction direction);

// Directed shortest-path betweenness, affinely rescaled to [0, 1]
// (constant scores map to all zeros).
std::vector<double> betweenness_scores(const DirectedCountNetwork& net);
std::vector<double> betweenness_raw(const DirectedCountNetwork& net);

struct CommunityPartition {
    std::vector<int> assignment;  // node index -> dense community label 0..K-1
    double modularity = 0.0;
    int community_count() const;
};

// Newman modularity on the symmetrized weights w_ij = T_ij + T_ji.
double modularity(const DirectedCountNetwork& net, const std::vector<int>& assignment);

// Multilevel greedy modularity optimization (seeded shuffled sweep order,
// first strictly-improving move). Runs `restarts` seeded starts and keeps
// the best partition; fully deterministic given the seed.
CommunityPartition louvain_communities(const DirectedCountNetwork& net, std::uint64_t seed, int restarts = 8);

// Symmetric travel-time threshold graph; node degree on it is the
// geographic-degree covariate.
class GeoNetwork {
  public:
    GeoNetwork() = default;
    GeoNetwork(std::vector<std::string> nodes, std::vector<char> linked);

    int size() const { return static_cast<int>(nodes_.size()); }
    const std::vector<std::string>& nodes() const { return nodes_; }
    bool linked(int i, int j) const;
    int degree(int i) const;

    // Unit-count digraph with arcs both ways, for path-based statistics.
    DirectedCountNetwork to_directed() const;

  private:
    std::vector<std::string> nodes_;
    std::vector<char> linked_;  // row-major N x N
};

GeoNetwork geo_threshold_network(const std::vector<std::string>& nodes, const Eigen::MatrixXd& travel_minutes,
                                 double threshold_minutes);

}  // namespace flownet
