#include "fedpub/partition.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "fedpub/rng.hpp"
#include "json.hpp"

namespace fedpub {

std::string to_string(PartitionMode m) {
    switch (m) {
        case PartitionMode::Disjoint: return "disjoint";
        case PartitionMode::Overlapping: return "overlapping";
        case PartitionMode::Random: return "random";
        case PartitionMode::Imbalanced: return "imbalanced";
    }
    return "disjoint";
}

PartitionMode partition_mode_from_string(const std::string& s) {
    if (s == "disjoint") return PartitionMode::Disjoint;
    if (s == "overlapping") return PartitionMode::Overlapping;
    if (s == "random") return PartitionMode::Random;
    if (s == "imbalanced") return PartitionMode::Imbalanced;
    throw std::invalid_argument("unknown partition mode: " + s);
}

namespace {

Partition from_assignment(const std::vector<int>& part_of_node, int k, PartitionMode mode) {
    Partition p;
    p.mode = mode;
    p.client_nodes.assign(k, {});
    for (int v = 0; v < static_cast<int>(part_of_node.size()); ++v)
        p.client_nodes[part_of_node[v]].push_back(v);
    return p;
}

// Greedy seed spreading: walk nodes in descending degree and skip anything
// within two hops of an already chosen seed; relax to one hop, then to any
// unchosen node, if the stricter rule cannot fill k seeds.
std::vector<int> spread_seeds(const std::vector<std::vector<int>>& adj, int k, Rng& rng) {
    const int n = static_cast<int>(adj.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);  // tie-break among equal degrees
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return adj[a].size() > adj[b].size(); });

    std::vector<int> seeds;
    // hop[v]: 0 = is seed, 1 = neighbor of seed, 2 = two hops from seed
    std::vector<int> hop(n, 3);
    auto mark = [&](int s) {
        hop[s] = 0;
        for (int u : adj[s]) {
            hop[u] = std::min(hop[u], 1);
            for (int w : adj[u]) hop[w] = std::min(hop[w], 2);
        }
    };
    for (int min_hop = 3; min_hop >= 1 && static_cast<int>(seeds.size()) < k; --min_hop)
        for (int v : order) {
            if (static_cast<int>(seeds.size()) == k) break;
            if (hop[v] >= min_hop) {
                seeds.push_back(v);
                mark(v);
            }
        }
    return seeds;
}

// One sweep of boundary refinement: move nodes to the neighboring part with
// the largest cut gain, subject to the balance cap and non-empty source.
// Returns the number of applied moves.
int refine_pass(const std::vector<std::vector<int>>& adj, std::vector<int>& part_of_node, int k,
                std::vector<int>& part_size, int cap) {
    const int n = static_cast<int>(part_of_node.size());
    int moves = 0;
    std::vector<int> nbr_count(k, 0);
    for (int v = 0; v < n; ++v) {
        if (adj[v].empty()) continue;
        const int cur = part_of_node[v];
        if (part_size[cur] <= 1) continue;
        std::vector<int> touched;
        for (int u : adj[v]) {
            if (nbr_count[part_of_node[u]]++ == 0) touched.push_back(part_of_node[u]);
        }
        int best = cur, best_gain = 0;
        for (int c : touched) {
            if (c == cur || part_size[c] + 1 > cap) continue;
            const int gain = nbr_count[c] - nbr_count[cur];
            if (gain > best_gain || (gain == best_gain && gain > 0 && c < best)) {
                best = c;
                best_gain = gain;
            }
        }
        for (int c : touched) nbr_count[c] = 0;
        if (best != cur) {
            part_of_node[v] = best;
            --part_size[cur];
            ++part_size[best];
            ++moves;
        }
    }
    return moves;
}

}  // namespace

Partition partition_balanced(const Graph& g, int k, uint64_t seed) {
    const int n = g.num_nodes;
    if (k < 1 || k > n) throw std::invalid_argument("k must lie in [1, num_nodes]");
    if (k == 1) {
        std::vector<int> all(n, 0);
        return from_assignment(all, 1, PartitionMode::Disjoint);
    }

    const auto adj = g.adjacency_lists();
    Rng rng(seed);
    const std::vector<int> seeds = spread_seeds(adj, k, rng);

    std::vector<int> part_of_node(n, -1), part_size(k, 0);
    const int grow_cap = (n + k - 1) / k;
    const int cap = static_cast<int>(std::ceil(1.3 * static_cast<double>(n) / k));

    std::vector<std::deque<int>> frontier(k);
    for (int i = 0; i < k; ++i) {
        part_of_node[seeds[i]] = i;
        part_size[i] = 1;
        for (int u : adj[seeds[i]]) frontier[i].push_back(u);
    }

    // Grow fronts smallest-part-first so sizes stay even while frontiers last.
    int assigned = k;
    while (assigned < n) {
        int best = -1;
        for (int i = 0; i < k; ++i) {
            while (!frontier[i].empty() && part_of_node[frontier[i].front()] != -1)
                frontier[i].pop_front();
            if (frontier[i].empty() || part_size[i] >= grow_cap) continue;
            if (best == -1 || part_size[i] < part_size[best]) best = i;
        }
        if (best == -1) break;  // disconnected remainder or all fronts capped
        const int v = frontier[best].front();
        frontier[best].pop_front();
        part_of_node[v] = best;
        ++part_size[best];
        ++assigned;
        for (int u : adj[v])
            if (part_of_node[u] == -1) frontier[best].push_back(u);
    }
    // Leftovers (other components, capped fronts) go to the smallest parts.
    for (int v = 0; v < n; ++v) {
        if (part_of_node[v] != -1) continue;
        const int smallest =
            static_cast<int>(std::min_element(part_size.begin(), part_size.end()) -
                             part_size.begin());
        part_of_node[v] = smallest;
        ++part_size[smallest];
    }

    for (int pass = 0; pass < 10; ++pass)
        if (refine_pass(adj, part_of_node, k, part_size, cap) == 0) break;

    return from_assignment(part_of_node, k, PartitionMode::Disjoint);
}

namespace {

// Weighted aggregate graph for the Louvain levels. A self-loop of weight w
// contributes 2w to its node's degree and 2w to the adjacency sum.
struct LevelGraph {
    std::vector<std::vector<std::pair<int, double>>> adj;  // no self entries
    std::vector<double> loop;
    double total_weight = 0.0;  // m

    int size() const { return static_cast<int>(adj.size()); }
    double degree(int v) const {
        double d = 2.0 * loop[v];
        for (auto [u, w] : adj[v]) d += w;
        return d;
    }
};

// One local-moving phase. Returns true if any node moved.
bool louvain_one_level(const LevelGraph& lg, std::vector<int>& comm, Rng& rng,
                       const Graph* orig, const std::vector<std::vector<int>>* level_to_orig,
                       std::vector<double>* pass_modularity) {
    const int n = lg.size();
    const double m = lg.total_weight;
    std::vector<double> deg(n), comm_degree(n, 0.0);
    for (int v = 0; v < n; ++v) deg[v] = lg.degree(v);
    for (int v = 0; v < n; ++v) comm_degree[comm[v]] += deg[v];

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    bool any_move = false;
    bool moved = true;
    std::vector<double> w_to(n, 0.0);
    while (moved) {
        moved = false;
        for (int v : order) {
            const int old_c = comm[v];
            std::vector<int> touched{old_c};
            for (auto [u, w] : lg.adj[v]) {
                const int c = comm[u];
                if (w_to[c] == 0.0 && c != old_c) touched.push_back(c);
                w_to[c] += w;
            }
            comm_degree[old_c] -= deg[v];
            int best_c = old_c;
            double best_gain = w_to[old_c] - deg[v] * comm_degree[old_c] / (2.0 * m);
            for (int c : touched) {
                if (c == old_c) continue;
                const double gain = w_to[c] - deg[v] * comm_degree[c] / (2.0 * m);
                if (gain > best_gain + 1e-12) {
                    best_gain = gain;
                    best_c = c;
                }
            }
            comm[v] = best_c;
            comm_degree[best_c] += deg[v];
            for (int c : touched) w_to[c] = 0.0;
            w_to[old_c] = 0.0;
            if (best_c != old_c) {
                moved = true;
                any_move = true;
            }
        }
        if (pass_modularity && orig && level_to_orig) {
            std::vector<int> assign(orig->num_nodes);
            for (int lv = 0; lv < n; ++lv)
                for (int ov : (*level_to_orig)[lv]) assign[ov] = comm[lv];
            pass_modularity->push_back(modularity(*orig, assign));
        }
    }
    return any_move;
}

}  // namespace

double modularity(const Graph& g, const std::vector<int>& community_of_node) {
    const double m = static_cast<double>(g.num_edges());
    if (m == 0.0) return 0.0;
    const int nc = 1 + *std::max_element(community_of_node.begin(), community_of_node.end());
    std::vector<double> e_c(nc, 0.0), d_c(nc, 0.0);
    for (auto [u, v] : g.edges) {
        d_c[community_of_node[u]] += 1.0;
        d_c[community_of_node[v]] += 1.0;
        if (community_of_node[u] == community_of_node[v]) e_c[community_of_node[u]] += 1.0;
    }
    double q = 0.0;
    for (int c = 0; c < nc; ++c) {
        const double frac = d_c[c] / (2.0 * m);
        q += e_c[c] / m - frac * frac;
    }
    return q;
}

std::vector<int> louvain_communities(const Graph& g, uint64_t seed,
                                     std::vector<double>* pass_modularity) {
    const int n = g.num_nodes;
    std::vector<int> node_comm(n);
    std::iota(node_comm.begin(), node_comm.end(), 0);
    if (g.edges.empty()) return node_comm;

    LevelGraph lg;
    lg.adj.resize(n);
    lg.loop.assign(n, 0.0);
    for (auto [u, v] : g.edges) {
        lg.adj[u].emplace_back(v, 1.0);
        lg.adj[v].emplace_back(u, 1.0);
    }
    lg.total_weight = static_cast<double>(g.num_edges());

    std::vector<std::vector<int>> level_to_orig(n);
    for (int v = 0; v < n; ++v) level_to_orig[v] = {v};

    Rng rng(seed);
    while (true) {
        std::vector<int> comm(lg.size());
        std::iota(comm.begin(), comm.end(), 0);
        const bool improved =
            louvain_one_level(lg, comm, rng, &g, &level_to_orig, pass_modularity);
        if (!improved) break;

        // Renumber communities densely.
        std::vector<int> renum(lg.size(), -1);
        int nc = 0;
        for (int v = 0; v < lg.size(); ++v)
            if (renum[comm[v]] == -1) renum[comm[v]] = nc++;
        for (int v = 0; v < lg.size(); ++v) comm[v] = renum[comm[v]];

        for (int ov = 0; ov < n; ++ov) node_comm[ov] = comm[node_comm[ov]];
        if (nc == lg.size()) break;

        // Aggregate.
        LevelGraph next;
        next.adj.resize(nc);
        next.loop.assign(nc, 0.0);
        next.total_weight = lg.total_weight;
        std::vector<std::unordered_map<int, double>> acc(nc);
        for (int v = 0; v < lg.size(); ++v) {
            next.loop[comm[v]] += lg.loop[v];
            for (auto [u, w] : lg.adj[v]) {
                if (comm[u] == comm[v]) {
                    if (u > v) continue;
                    next.loop[comm[v]] += w;  // intra edge becomes loop weight
                } else {
                    acc[comm[v]][comm[u]] += w;
                }
            }
        }
        for (int c = 0; c < nc; ++c) {
            std::vector<std::pair<int, double>> row(acc[c].begin(), acc[c].end());
            std::sort(row.begin(), row.end());
            next.adj[c] = std::move(row);
        }
        std::vector<std::vector<int>> next_map(nc);
        for (int ov = 0; ov < n; ++ov) next_map[node_comm[ov]].push_back(ov);
        level_to_orig = std::move(next_map);
        lg = std::move(next);
    }
    return node_comm;
}

Partition partition_louvain(const Graph& g, int k, uint64_t seed) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (k > g.num_nodes) throw std::invalid_argument("k exceeds node count");
    std::vector<int> comm = louvain_communities(g, seed);
    int nc = 1 + *std::max_element(comm.begin(), comm.end());

    std::vector<std::vector<int>> sets(nc);
    for (int v = 0; v < g.num_nodes; ++v) sets[comm[v]].push_back(v);

    // Merge the two smallest sets until only k remain.
    while (static_cast<int>(sets.size()) > k) {
        size_t s1 = 0, s2 = 1;
        if (sets[s2].size() < sets[s1].size()) std::swap(s1, s2);
        for (size_t i = 2; i < sets.size(); ++i) {
            if (sets[i].size() < sets[s1].size()) {
                s2 = s1;
                s1 = i;
            } else if (sets[i].size() < sets[s2].size()) {
                s2 = i;
            }
        }
        if (s1 > s2) std::swap(s1, s2);
        sets[s1].insert(sets[s1].end(), sets[s2].begin(), sets[s2].end());
        std::sort(sets[s1].begin(), sets[s1].end());
        sets.erase(sets.begin() + s2);
    }
    // Split the largest set until k sets exist.
    int split_round = 0;
    while (static_cast<int>(sets.size()) < k) {
        const size_t largest =
            static_cast<size_t>(std::max_element(sets.begin(), sets.end(),
                                                 [](const auto& a, const auto& b) {
                                                     return a.size() < b.size();
                                                 }) -
                                sets.begin());
        if (sets[largest].size() < 2)
            throw std::invalid_argument("cannot split singleton sets to reach k");
        const Graph sub = induced_subgraph(g, sets[largest]);
        const Partition halves =
            partition_balanced(sub, 2, derive_seed(seed, "louvain-split", split_round++));
        std::vector<int> a, b;
        for (int j : halves.client_nodes[0]) a.push_back(sets[largest][j]);
        for (int j : halves.client_nodes[1]) b.push_back(sets[largest][j]);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        sets[largest] = std::move(a);
        sets.push_back(std::move(b));
    }

    Partition p;
    p.mode = PartitionMode::Disjoint;
    p.client_nodes = std::move(sets);
    for (auto& s : p.client_nodes) std::sort(s.begin(), s.end());
    return p;
}

Partition partition_random(const Graph& g, int k, uint64_t seed) {
    if (k < 1 || k > g.num_nodes) throw std::invalid_argument("k must lie in [1, num_nodes]");
    std::vector<int> order(g.num_nodes);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<int> part_of_node(g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) part_of_node[order[i]] = i % k;
    Partition p = from_assignment(part_of_node, k, PartitionMode::Random);
    return p;
}

Partition make_overlapping(const Graph& g, int base_parts, int samples_per_part, double node_frac,
                           uint64_t seed) {
    if (base_parts < 1 || samples_per_part < 1)
        throw std::invalid_argument("base_parts and samples_per_part must be >= 1");
    if (!(node_frac > 0.0 && node_frac <= 1.0))
        throw std::invalid_argument("node_frac must lie in (0, 1]");
    const Partition base = partition_balanced(g, base_parts, derive_seed(seed, "overlap-base"));

    Partition p;
    p.mode = PartitionMode::Overlapping;
    for (int b = 0; b < base_parts; ++b) {
        const auto& part = base.client_nodes[b];
        const int take = static_cast<int>(std::llround(node_frac * part.size()));
        if (take < 1) throw std::invalid_argument("node_frac yields an empty sampled subset");
        for (int s = 0; s < samples_per_part; ++s) {
            Rng rng(derive_seed(seed, "overlap-sample", b, s));
            std::vector<int> picked =
                rng.sample_without_replacement(static_cast<int>(part.size()), take);
            std::vector<int> nodes;
            nodes.reserve(picked.size());
            for (int idx : picked) nodes.push_back(part[idx]);
            p.client_nodes.push_back(std::move(nodes));
        }
    }
    return p;
}

Partition make_imbalanced(const Graph& g, int fine_parts, const std::vector<int>& group_sizes,
                          uint64_t seed) {
    int total = 0;
    for (int s : group_sizes) {
        if (s < 1) throw std::invalid_argument("group sizes must be >= 1");
        total += s;
    }
    if (total > fine_parts) throw std::invalid_argument("group sizes exceed fine_parts");
    const Partition fine = partition_balanced(g, fine_parts, seed);

    Partition p;
    p.mode = PartitionMode::Imbalanced;
    int next = 0;
    for (int s : group_sizes) {
        std::vector<int> merged;
        for (int i = 0; i < s; ++i) {
            const auto& part = fine.client_nodes[next++];
            merged.insert(merged.end(), part.begin(), part.end());
        }
        std::sort(merged.begin(), merged.end());
        p.client_nodes.push_back(std::move(merged));
    }
    for (; next < fine_parts; ++next) p.client_nodes.push_back(fine.client_nodes[next]);
    return p;
}

MissingEdgeMatrix missing_edges(const Graph& g, const Partition& p) {
    const int k = p.num_clients();
    MissingEdgeMatrix M;
    M.k = k;
    M.counts.assign(static_cast<size_t>(k) * k, 0);
    std::vector<std::vector<uint8_t>> member(k, std::vector<uint8_t>(g.num_nodes, 0));
    for (int i = 0; i < k; ++i)
        for (int v : p.client_nodes[i]) member[i][v] = 1;

    for (auto [u, v] : g.edges)
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j) {
                const bool crosses = (member[i][u] && member[j][v]) || (member[i][v] && member[j][u]);
                if (!crosses) continue;
                // An edge both clients already see locally is not missing.
                const bool in_i = member[i][u] && member[i][v];
                const bool in_j = member[j][u] && member[j][v];
                if (in_i && in_j) continue;
                ++M.at(i, j);
                ++M.at(j, i);
            }
    return M;
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("distribution size mismatch");
    auto h = [](double x) { return x > 0.0 ? -x * std::log2(x) : 0.0; };
    double hm = 0.0, hp = 0.0, hq = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        hm += h(0.5 * (p[i] + q[i]));
        hp += h(p[i]);
        hq += h(q[i]);
    }
    return hm - 0.5 * (hp + hq);
}

double heterogeneity(const Partition& p, const std::vector<int>& labels, int num_classes) {
    const int k = p.num_clients();
    if (k < 2) throw std::invalid_argument("heterogeneity needs at least two clients");
    std::vector<std::vector<double>> dist(k, std::vector<double>(num_classes, 0.0));
    for (int i = 0; i < k; ++i) {
        for (int v : p.client_nodes[i]) dist[i][labels[v]] += 1.0;
        for (double& x : dist[i]) x /= static_cast<double>(p.client_nodes[i].size());
    }
    std::vector<double> js;
    js.reserve(static_cast<size_t>(k) * (k - 1) / 2);
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) js.push_back(js_divergence(dist[i], dist[j]));
    std::sort(js.begin(), js.end());
    const size_t m = js.size();
    return m % 2 == 1 ? js[m / 2] : 0.5 * (js[m / 2 - 1] + js[m / 2]);
}

double clustering_coefficient(const Graph& g) {
    if (g.num_nodes == 0) return 0.0;
    const auto adj = g.adjacency_lists();
    std::vector<double> local(g.num_nodes, 0.0);
#pragma omp parallel for schedule(dynamic, 16)
    for (int v = 0; v < g.num_nodes; ++v) {
        const auto& nbrs = adj[v];
        const size_t d = nbrs.size();
        if (d < 2) continue;
        long closed = 0;
        for (size_t i = 0; i < d; ++i)
            for (size_t j = i + 1; j < d; ++j)
                if (std::binary_search(adj[nbrs[i]].begin(), adj[nbrs[i]].end(), nbrs[j]))
                    ++closed;
        local[v] = 2.0 * static_cast<double>(closed) / (static_cast<double>(d) * (d - 1));
    }
    double sum = 0.0;
    for (double x : local) sum += x;
    return sum / g.num_nodes;
}

void save_partition(const Partition& p, const std::string& path) {
    nlohmann::json j;
    j["mode"] = to_string(p.mode);
    j["clients"] = p.client_nodes;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write partition file: " + path);
    out << j.dump() << "\n";
}

Partition load_partition(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open partition file: " + path);
    nlohmann::json j;
    in >> j;
    Partition p;
    p.mode = partition_mode_from_string(j.at("mode").get<std::string>());
    p.client_nodes = j.at("clients").get<std::vector<std::vector<int>>>();
    for (const auto& s : p.client_nodes)
        if (s.empty()) throw std::invalid_argument("partition has an empty client set");
    return p;
}

}  // namespace fedpub
