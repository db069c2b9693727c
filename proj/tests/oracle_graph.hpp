#pragma once

// Brute-force oracles for the graph statistics, kept independent of the
// library implementations: Floyd-Warshall distances, recursive shortest-path
// counting, and exhaustive partition search for modularity.

#include <algorithm>
#include <cstdint>
#include <vector>

namespace oracle {

using CountMatrix = std::vector<std::vector<long long>>;  // counts[i][j], zero diagonal

inline std::vector<std::vector<int>> all_pairs_distances(const CountMatrix& counts) {
    const int n = static_cast<int>(counts.size());
    const int inf = 1 << 28;
    std::vector<std::vector<int>> d(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), inf));
    for (int i = 0; i < n; ++i) {
        d[i][i] = 0;
        for (int j = 0; j < n; ++j) {
            if (i != j && counts[i][j] > 0) d[i][j] = 1;
        }
    }
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
            }
        }
    }
    for (auto& row : d) {
        for (auto& v : row) {
            if (v >= inf) v = -1;
        }
    }
    return d;
}

// Number of shortest paths from s to t, by recursion over first hops.
inline double count_shortest_paths(const CountMatrix& counts, const std::vector<std::vector<int>>& d, int s, int t) {
    if (s == t) return 1.0;
    if (d[s][t] < 0) return 0.0;
    double total = 0.0;
    const int n = static_cast<int>(counts.size());
    for (int u = 0; u < n; ++u) {
        if (u != s && counts[s][u] > 0 && d[u][t] >= 0 && 1 + d[u][t] == d[s][t]) {
            total += count_shortest_paths(counts, d, u, t);
        }
    }
    return total;
}

inline std::vector<double> betweenness(const CountMatrix& counts) {
    const int n = static_cast<int>(counts.size());
    const auto d = all_pairs_distances(counts);
    std::vector<double> b(static_cast<std::size_t>(n), 0.0);
    for (int s = 0; s < n; ++s) {
        for (int t = 0; t < n; ++t) {
            if (s == t || d[s][t] < 0) continue;
            const double sigma_st = count_shortest_paths(counts, d, s, t);
            if (sigma_st <= 0.0) continue;
            for (int v = 0; v < n; ++v) {
                if (v == s || v == t) continue;
                if (d[s][v] >= 0 && d[v][t] >= 0 && d[s][v] + d[v][t] == d[s][t]) {
                    b[static_cast<std::size_t>(v)] +=
                        count_shortest_paths(counts, d, s, v) * count_shortest_paths(counts, d, v, t) / sigma_st;
                }
            }
        }
    }
    return b;
}

inline std::vector<double> rescale_unit(std::vector<double> v) {
    if (v.empty()) return v;
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    const double lo = *mn, hi = *mx;
    if (hi - lo <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        return v;
    }
    for (auto& x : v) x = (x - lo) / (hi - lo);
    return v;
}

// Reachable-set closeness with the (R/(N-1)) * (R/total) scaling.
inline std::vector<double> closeness(const CountMatrix& counts, bool outward) {
    const int n = static_cast<int>(counts.size());
    const auto d = all_pairs_distances(counts);
    std::vector<double> c(static_cast<std::size_t>(n), 0.0);
    if (n < 2) return c;
    for (int v = 0; v < n; ++v) {
        long long reach = 0, total = 0;
        for (int u = 0; u < n; ++u) {
            if (u == v) continue;
            const int dist = outward ? d[v][u] : d[u][v];
            if (dist >= 0) {
                ++reach;
                total += dist;
            }
        }
        if (reach > 0) {
            c[static_cast<std::size_t>(v)] =
                (static_cast<double>(reach) / (n - 1)) * (static_cast<double>(reach) / static_cast<double>(total));
        }
    }
    return c;
}

inline std::vector<long long> degrees(const CountMatrix& counts, bool outward) {
    const int n = static_cast<int>(counts.size());
    std::vector<long long> deg(static_cast<std::size_t>(n), 0);
    for (int v = 0; v < n; ++v) {
        for (int u = 0; u < n; ++u) {
            if (u == v) continue;
            const long long c = outward ? counts[v][u] : counts[u][v];
            if (c > 0) ++deg[static_cast<std::size_t>(v)];
        }
    }
    return deg;
}

inline std::vector<long long> strengths(const CountMatrix& counts, bool outward) {
    const int n = static_cast<int>(counts.size());
    std::vector<long long> s(static_cast<std::size_t>(n), 0);
    for (int v = 0; v < n; ++v) {
        for (int u = 0; u < n; ++u) {
            if (u != v) s[static_cast<std::size_t>(v)] += outward ? counts[v][u] : counts[u][v];
        }
    }
    return s;
}

inline double modularity_direct(const CountMatrix& counts, const std::vector<int>& assignment) {
    const int n = static_cast<int>(counts.size());
    std::vector<std::vector<double>> w(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    double two_m = 0.0;
    std::vector<double> k(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            w[i][j] = static_cast<double>(counts[i][j] + counts[j][i]);
            k[static_cast<std::size_t>(i)] += w[i][j];
            two_m += w[i][j];
        }
    }
    double q = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (assignment[static_cast<std::size_t>(i)] != assignment[static_cast<std::size_t>(j)]) continue;
            q += (i == j ? 0.0 : w[i][j]) - k[static_cast<std::size_t>(i)] * k[static_cast<std::size_t>(j)] / two_m;
        }
    }
    return q / two_m;
}

// Exhaustive modularity optimum over all set partitions (restricted growth
// strings); feasible for n <= 10. Weights are precomputed once and Q is
// evaluated in a single O(n^2) pass per partition.
inline double best_partition_modularity(const CountMatrix& counts) {
    const int n = static_cast<int>(counts.size());
    std::vector<double> w(static_cast<std::size_t>(n * n), 0.0);
    std::vector<double> k(static_cast<std::size_t>(n), 0.0);
    double two_m = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double wij = static_cast<double>(counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +
                                                   counts[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]);
            w[static_cast<std::size_t>(i * n + j)] = wij;
            k[static_cast<std::size_t>(i)] += wij;
            two_m += wij;
        }
    }
    if (two_m <= 0.0) return 0.0;

    std::vector<int> a(static_cast<std::size_t>(n), 0);
    double best = -1.0;
    for (;;) {
        double q = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (a[static_cast<std::size_t>(i)] != a[static_cast<std::size_t>(j)]) continue;
                q += (i == j ? 0.0 : w[static_cast<std::size_t>(i * n + j)]) -
                     k[static_cast<std::size_t>(i)] * k[static_cast<std::size_t>(j)] / two_m;
            }
        }
        best = std::max(best, q / two_m);

        int i = n - 1;
        for (; i > 0; --i) {
            int max_prefix = 0;
            for (int j = 0; j < i; ++j) max_prefix = std::max(max_prefix, a[static_cast<std::size_t>(j)]);
            if (a[static_cast<std::size_t>(i)] < max_prefix + 1) {
                ++a[static_cast<std::size_t>(i)];
                for (int j = i + 1; j < n; ++j) a[static_cast<std::size_t>(j)] = 0;
                break;
            }
        }
        if (i == 0) break;
    }
    return best;
}

}  // namespace oracle
