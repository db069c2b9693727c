#include "flownet/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>

#include "flownet/errors.hpp"
#include "flownet/rng.hpp"

namespace flownet {

namespace {

std::uint64_t pair_key(int i, int j, int n) {
    return static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(j);
}

}  // namespace

int DirectedCountNetwork::node_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InputError("unknown node id: '" + id + "'");
    return it->second;
}

long long DirectedCountNetwork::count(int i, int j) const {
    auto it = counts_.find(pair_key(i, j, size()));
    return it == counts_.end() ? 0 : it->second;
}

DirectedCountNetwork build_network(std::vector<std::string> nodes, const std::vector<EdgeCount>& edges) {
    DirectedCountNetwork net;
    net.nodes_ = std::move(nodes);
    const int n = net.size();
    for (int i = 0; i < n; ++i) {
        if (!net.index_.emplace(net.nodes_[static_cast<std::size_t>(i)], i).second) {
            throw InputError("duplicate node id: '" + net.nodes_[static_cast<std::size_t>(i)] + "'");
        }
    }
    for (const auto& e : edges) {
        if (e.count < 0) throw InputError("negative count on edge " + e.src + "->" + e.dst);
        const int i = net.node_index(e.src);
        const int j = net.node_index(e.dst);
        if (i == j) throw InputError("self-loop on node '" + e.src + "'");
        if (e.count == 0) continue;
        net.counts_[pair_key(i, j, n)] += e.count;
        net.total_ += e.count;
    }
    // Drop entries that summed to zero (possible only via zero inputs, already skipped).
    net.out_adj_.assign(static_cast<std::size_t>(n), {});
    net.in_adj_.assign(static_cast<std::size_t>(n), {});
    for (const auto& [key, c] : net.counts_) {
        const int i = static_cast<int>(key / static_cast<std::uint64_t>(n));
        const int j = static_cast<int>(key % static_cast<std::uint64_t>(n));
        net.out_adj_[static_cast<std::size_t>(i)].push_back(j);
        net.in_adj_[static_cast<std::size_t>(j)].push_back(i);
    }
    for (auto& v : net.out_adj_) std::sort(v.begin(), v.end());
    for (auto& v : net.in_adj_) std::sort(v.begin(), v.end());
    net.n_positive_pairs_ = net.counts_.size();
    return net;
}

DirectedCountNetwork DirectedCountNetwork::induced(const std::vector<int>& keep) const {
    std::vector<std::string> sub_nodes;
    sub_nodes.reserve(keep.size());
    std::vector<int> old_to_new(static_cast<std::size_t>(size()), -1);
    for (int old : keep) {
        old_to_new[static_cast<std::size_t>(old)] = static_cast<int>(sub_nodes.size());
        sub_nodes.push_back(nodes_[static_cast<std::size_t>(old)]);
    }
    std::vector<EdgeCount> sub_edges;
    for (const auto& [key, c] : counts_) {
        const int i = static_cast<int>(key / static_cast<std::uint64_t>(size()));
        const int j = static_cast<int>(key % static_cast<std::uint64_t>(size()));
        if (old_to_new[static_cast<std::size_t>(i)] >= 0 && old_to_new[static_cast<std::size_t>(j)] >= 0) {
            sub_edges.push_back({nodes_[static_cast<std::size_t>(i)], nodes_[static_cast<std::size_t>(j)], c});
        }
    }
    return build_network(std::move(sub_nodes), sub_edges);
}

DegreeScores degree_scores(const DirectedCountNetwork& net, Direction direction) {
    const int n = net.size();
    DegreeScores out;
    out.scores.resize(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        const auto& adj = direction == Direction::Out ? net.out_neighbors(v) : net.in_neighbors(v);
        out.scores[static_cast<std::size_t>(v)] = static_cast<long long>(adj.size());
    }
    if (n < 2) {
        out.centralization = 0.0;
        return out;
    }
    const long long max_score = *std::max_element(out.scores.begin(), out.scores.end());
    long long spread = 0;
    for (long long s : out.scores) spread += max_score - s;
    out.centralization = static_cast<double>(spread) / (static_cast<double>(n - 1) * static_cast<double>(n - 1));
    return out;
}

std::vector<long long> strength_scores(const DirectedCountNetwork& net, Direction direction) {
    const int n = net.size();
    std::vector<long long> out(static_cast<std::size_t>(n), 0);
    for (int v = 0; v < n; ++v) {
        const auto& adj = direction == Direction::Out ? net.out_neighbors(v) : net.in_neighbors(v);
        long long s = 0;
        for (int u : adj) s += direction == Direction::Out ? net.count(v, u) : net.count(u, v);
        out[static_cast<std::size_t>(v)] = s;
    }
    return out;
}

namespace {

// BFS step distances from src along the chosen arc direction; -1 = unreachable.
std::vector<int> bfs_distances(const DirectedCountNetwork& net, int src, Direction direction) {
    std::vector<int> dist(static_cast<std::size_t>(net.size()), -1);
    dist[static_cast<std::size_t>(src)] = 0;
    std::deque<int> queue{src};
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        const auto& adj = direction == Direction::Out ? net.out_neighbors(v) : net.in_neighbors(v);
        for (int u : adj) {
            if (dist[static_cast<std::size_t>(u)] < 0) {
                dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
                queue.push_back(u);
            }
        }
    }
    return dist;
}

}  // namespace

std::vector<double> closeness_scores(const DirectedCountNetwork& net, Direction direction) {
    const int n = net.size();
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    if (n < 2) return out;
    for (int v = 0; v < n; ++v) {
        const auto dist = bfs_distances(net, v, direction);
        long long reach = 0, total = 0;
        for (int u = 0; u < n; ++u) {
            if (u == v || dist[static_cast<std::size_t>(u)] < 0) continue;
            ++reach;
            total += dist[static_cast<std::size_t>(u)];
        }
        if (reach > 0) {
            const double r = static_cast<double>(reach);
            out[static_cast<std::size_t>(v)] = (r / static_cast<double>(n - 1)) * (r / static_cast<double>(total));
        }
    }
    return out;
}

std::vector<double> betweenness_raw(const DirectedCountNetwork& net) {
    // Brandes accumulation on the unweighted digraph.
    const int n = net.size();
    std::vector<double> score(static_cast<std::size_t>(n), 0.0);
    std::vector<int> dist(static_cast<std::size_t>(n));
    std::vector<double> sigma(static_cast<std::size_t>(n));
    std::vector<double> delta(static_cast<std::size_t>(n));
    std::vector<std::vector<int>> preds(static_cast<std::size_t>(n));
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        std::fill(dist.begin(), dist.end(), -1);
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        for (auto& p : preds) p.clear();
        order.clear();
        dist[static_cast<std::size_t>(s)] = 0;
        sigma[static_cast<std::size_t>(s)] = 1.0;
        std::deque<int> queue{s};
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop_front();
            order.push_back(v);
            for (int u : net.out_neighbors(v)) {
                if (dist[static_cast<std::size_t>(u)] < 0) {
                    dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
                    queue.push_back(u);
                }
                if (dist[static_cast<std::size_t>(u)] == dist[static_cast<std::size_t>(v)] + 1) {
                    sigma[static_cast<std::size_t>(u)] += sigma[static_cast<std::size_t>(v)];
                    preds[static_cast<std::size_t>(u)].push_back(v);
                }
            }
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const int w = *it;
            for (int v : preds[static_cast<std::size_t>(w)]) {
                delta[static_cast<std::size_t>(v)] += sigma[static_cast<std::size_t>(v)] /
                                                      sigma[static_cast<std::size_t>(w)] *
                                                      (1.0 + delta[static_cast<std::size_t>(w)]);
            }
            if (w != s) score[static_cast<std::size_t>(w)] += delta[static_cast<std::size_t>(w)];
        }
    }
    return score;
}

std::vector<double> betweenness_scores(const DirectedCountNetwork& net) {
    auto score = betweenness_raw(net);
    if (score.empty()) return score;
    const auto [mn_it, mx_it] = std::minmax_element(score.begin(), score.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx - mn <= 0.0) {
        std::fill(score.begin(), score.end(), 0.0);
        return score;
    }
    for (double& s : score) s = (s - mn) / (mx - mn);
    return score;
}

int CommunityPartition::community_count() const {
    return assignment.empty() ? 0 : 1 + *std::max_element(assignment.begin(), assignment.end());
}

namespace {

// Symmetric weighted graph with self-loops, the working representation for
// the multilevel optimization. strength(i) counts the self-loop once and each
// incident edge weight once; 2m = sum of strengths.
struct SymGraph {
    std::vector<std::vector<std::pair<int, double>>> adj;  // neighbors j != i
    std::vector<double> self_loop;
    std::vector<double> strength;
    double two_m = 0.0;
    int size() const { return static_cast<int>(adj.size()); }
};

SymGraph symmetrize(const DirectedCountNetwork& net) {
    const int n = net.size();
    SymGraph g;
    g.adj.assign(static_cast<std::size_t>(n), {});
    g.self_loop.assign(static_cast<std::size_t>(n), 0.0);
    g.strength.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        std::set<int> partners;
        for (int j : net.out_neighbors(i)) partners.insert(j);
        for (int j : net.in_neighbors(i)) partners.insert(j);
        for (int j : partners) {
            const double w = static_cast<double>(net.count(i, j) + net.count(j, i));
            g.adj[static_cast<std::size_t>(i)].push_back({j, w});
            g.strength[static_cast<std::size_t>(i)] += w;
        }
    }
    for (int i = 0; i < n; ++i) g.two_m += g.strength[static_cast<std::size_t>(i)];
    return g;
}

// One level of local moving followed by aggregation.
struct LevelResult {
    std::vector<int> assignment;  // node -> community on this level
    SymGraph condensed;
    bool moved = false;
};

LevelResult local_move_level(const SymGraph& g, Rng& rng) {
    const int n = g.size();
    std::vector<int> community(static_cast<std::size_t>(n));
    std::iota(community.begin(), community.end(), 0);
    std::vector<double> tot(g.strength);  // total strength per community

    std::vector<int> sweep(static_cast<std::size_t>(n));
    std::iota(sweep.begin(), sweep.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        std::swap(sweep[static_cast<std::size_t>(i)], sweep[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
    }

    const double m = g.two_m / 2.0;
    bool any_move = false;
    bool improved = true;
    std::vector<double> weight_to(static_cast<std::size_t>(n), 0.0);
    while (improved) {
        improved = false;
        for (int v : sweep) {
            const int old_c = community[static_cast<std::size_t>(v)];
            const double k_v = g.strength[static_cast<std::size_t>(v)];

            std::vector<int> touched;
            for (const auto& [u, w] : g.adj[static_cast<std::size_t>(v)]) {
                const int c = community[static_cast<std::size_t>(u)];
                if (weight_to[static_cast<std::size_t>(c)] == 0.0) touched.push_back(c);
                weight_to[static_cast<std::size_t>(c)] += w;
            }
            std::sort(touched.begin(), touched.end());

            tot[static_cast<std::size_t>(old_c)] -= k_v;
            const double gain_stay = weight_to[static_cast<std::size_t>(old_c)] / m -
                                     tot[static_cast<std::size_t>(old_c)] * k_v / (2.0 * m * m);
            int dest = old_c;
            for (int c : touched) {
                if (c == old_c) continue;
                const double gain = weight_to[static_cast<std::size_t>(c)] / m -
                                    tot[static_cast<std::size_t>(c)] * k_v / (2.0 * m * m);
                if (gain > gain_stay + 1e-12) {
                    dest = c;
                    break;  // first strictly-improving move
                }
            }
            tot[static_cast<std::size_t>(dest)] += k_v;
            if (dest != old_c) {
                community[static_cast<std::size_t>(v)] = dest;
                improved = true;
                any_move = true;
            }
            for (int c : touched) weight_to[static_cast<std::size_t>(c)] = 0.0;
        }
    }

    // Compress labels in node order.
    std::vector<int> remap(static_cast<std::size_t>(n), -1);
    int next = 0;
    for (int v = 0; v < n; ++v) {
        int& r = remap[static_cast<std::size_t>(community[static_cast<std::size_t>(v)])];
        if (r < 0) r = next++;
        community[static_cast<std::size_t>(v)] = r;
    }

    // Aggregate.
    SymGraph cg;
    cg.adj.assign(static_cast<std::size_t>(next), {});
    cg.self_loop.assign(static_cast<std::size_t>(next), 0.0);
    cg.strength.assign(static_cast<std::size_t>(next), 0.0);
    std::vector<std::unordered_map<int, double>> acc(static_cast<std::size_t>(next));
    for (int v = 0; v < n; ++v) {
        const int cv = community[static_cast<std::size_t>(v)];
        cg.self_loop[static_cast<std::size_t>(cv)] += g.self_loop[static_cast<std::size_t>(v)];
        for (const auto& [u, w] : g.adj[static_cast<std::size_t>(v)]) {
            const int cu = community[static_cast<std::size_t>(u)];
            if (cu == cv) {
                cg.self_loop[static_cast<std::size_t>(cv)] += w / 2.0;  // each internal edge seen twice
            } else {
                acc[static_cast<std::size_t>(cv)][cu] += w;
            }
        }
    }
    for (int c = 0; c < next; ++c) {
        std::vector<std::pair<int, double>> ns(acc[static_cast<std::size_t>(c)].begin(), acc[static_cast<std::size_t>(c)].end());
        std::sort(ns.begin(), ns.end());
        cg.adj[static_cast<std::size_t>(c)] = std::move(ns);
        double s = 2.0 * cg.self_loop[static_cast<std::size_t>(c)];
        for (const auto& [u, w] : cg.adj[static_cast<std::size_t>(c)]) s += w;
        cg.strength[static_cast<std::size_t>(c)] = s;
        cg.two_m += s;
    }
    return {std::move(community), std::move(cg), any_move};
}

std::vector<int> louvain_single_run(const DirectedCountNetwork& net, Rng rng) {
    SymGraph g = symmetrize(net);
    const int n = net.size();
    std::vector<int> assignment(static_cast<std::size_t>(n));
    std::iota(assignment.begin(), assignment.end(), 0);
    int level = 0;
    for (;;) {
        Rng level_rng = rng.child_indexed("level", static_cast<std::uint64_t>(level++));
        LevelResult res = local_move_level(g, level_rng);
        if (!res.moved) break;
        for (int v = 0; v < n; ++v) {
            assignment[static_cast<std::size_t>(v)] =
                res.assignment[static_cast<std::size_t>(assignment[static_cast<std::size_t>(v)])];
        }
        if (res.condensed.size() == g.size()) break;
        g = std::move(res.condensed);
    }
    // Canonical labels by first appearance in node order.
    std::vector<int> remap(static_cast<std::size_t>(n), -1);
    int next = 0;
    for (int v = 0; v < n; ++v) {
        int& r = remap[static_cast<std::size_t>(assignment[static_cast<std::size_t>(v)])];
        if (r < 0) r = next++;
        assignment[static_cast<std::size_t>(v)] = r;
    }
    return assignment;
}

}  // namespace

double modularity(const DirectedCountNetwork& net, const std::vector<int>& assignment) {
    const int n = net.size();
    if (assignment.size() != static_cast<std::size_t>(n)) {
        throw InputError("partition does not cover all nodes");
    }
    for (int c : assignment) {
        if (c < 0) throw InputError("partition has negative community label");
    }
    SymGraph g = symmetrize(net);
    if (g.two_m <= 0.0) throw InputError("empty network has undefined modularity");
    const int n_comms = 1 + *std::max_element(assignment.begin(), assignment.end());
    std::vector<double> internal(static_cast<std::size_t>(n_comms), 0.0);
    std::vector<double> tot(static_cast<std::size_t>(n_comms), 0.0);
    for (int v = 0; v < n; ++v) {
        const int cv = assignment[static_cast<std::size_t>(v)];
        tot[static_cast<std::size_t>(cv)] += g.strength[static_cast<std::size_t>(v)];
        internal[static_cast<std::size_t>(cv)] += 2.0 * g.self_loop[static_cast<std::size_t>(v)];
        for (const auto& [u, w] : g.adj[static_cast<std::size_t>(v)]) {
            if (assignment[static_cast<std::size_t>(u)] == cv) internal[static_cast<std::size_t>(cv)] += w;
        }
    }
    double q = 0.0;
    for (int c = 0; c < n_comms; ++c) {
        const double frac_in = internal[static_cast<std::size_t>(c)] / g.two_m;
        const double frac_tot = tot[static_cast<std::size_t>(c)] / g.two_m;
        q += frac_in - frac_tot * frac_tot;
    }
    return q;
}

CommunityPartition louvain_communities(const DirectedCountNetwork& net, std::uint64_t seed, int restarts) {
    if (net.total_count() <= 0) throw InputError("community detection requires at least one positive count");
    Rng root(seed);
    CommunityPartition best;
    bool have = false;
    for (int r = 0; r < std::max(1, restarts); ++r) {
        auto assignment = louvain_single_run(net, root.child_indexed("restart", static_cast<std::uint64_t>(r)));
        const double q = modularity(net, assignment);
        if (!have || q > best.modularity + 1e-15) {
            best.assignment = std::move(assignment);
            best.modularity = q;
            have = true;
        }
    }
    return best;
}

GeoNetwork::GeoNetwork(std::vector<std::string> nodes, std::vector<char> linked)
    : nodes_(std::move(nodes)), linked_(std::move(linked)) {}

bool GeoNetwork::linked(int i, int j) const {
    return linked_[static_cast<std::size_t>(i) * static_cast<std::size_t>(size()) + static_cast<std::size_t>(j)] != 0;
}

int GeoNetwork::degree(int i) const {
    int d = 0;
    for (int j = 0; j < size(); ++j) {
        if (j != i && linked(i, j)) ++d;
    }
    return d;
}

DirectedCountNetwork GeoNetwork::to_directed() const {
    std::vector<EdgeCount> edges;
    for (int i = 0; i < size(); ++i) {
        for (int j = 0; j < size(); ++j) {
            if (i != j && linked(i, j)) edges.push_back({nodes_[static_cast<std::size_t>(i)], nodes_[static_cast<std::size_t>(j)], 1});
        }
    }
    return build_network(nodes_, edges);
}

GeoNetwork geo_threshold_network(const std::vector<std::string>& nodes, const Eigen::MatrixXd& travel_minutes,
                                 double threshold_minutes) {
    const int n = static_cast<int>(nodes.size());
    if (travel_minutes.rows() != n || travel_minutes.cols() != n) {
        throw InputError("travel-time matrix must be square and match the node list");
    }
    if (!(threshold_minutes > 0.0)) throw InputError("threshold must be positive");
    for (int i = 0; i < n; ++i) {
        if (travel_minutes(i, i) != 0.0) throw InputError("travel-time matrix must have zero diagonal");
        for (int j = 0; j < n; ++j) {
            if (travel_minutes(i, j) < 0.0) throw InputError("travel-time matrix must be non-negative");
            if (std::abs(travel_minutes(i, j) - travel_minutes(j, i)) > 1e-9) {
                throw InputError("travel-time matrix asymmetric at (" + nodes[static_cast<std::size_t>(i)] + "," +
                                 nodes[static_cast<std::size_t>(j)] + ")");
            }
        }
    }
    std::vector<char> linked(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j && travel_minutes(i, j) < threshold_minutes) {
                linked[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] = 1;
            }
        }
    }
    return GeoNetwork(nodes, std::move(linked));
}

}  // namespace flownet
