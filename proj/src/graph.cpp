#include "fedpub/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "fedpub/rng.hpp"
#include "json.hpp"

namespace fedpub {

namespace {

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
}

Matrix normal_features(int n, int d, Rng& rng) {
    Matrix X(n, d);
    for (double& v : X.a) v = rng.normal();
    return X;
}

}  // namespace

std::vector<std::vector<int>> Graph::adjacency_lists() const {
    std::vector<std::vector<int>> adj(num_nodes);
    for (auto [u, v] : edges) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
    return adj;
}

void Graph::validate() const {
    if (features.rows != num_nodes) throw std::invalid_argument("feature row count != num_nodes");
    if (static_cast<int>(labels.size()) != num_nodes)
        throw std::invalid_argument("label count != num_nodes");
    for (size_t i = 0; i < edges.size(); ++i) {
        auto [u, v] = edges[i];
        if (u >= v) throw std::invalid_argument("edge not stored as u < v");
        if (u < 0 || v >= num_nodes) throw std::invalid_argument("edge endpoint out of range");
        if (i > 0 && !(edges[i - 1] < edges[i]))
            throw std::invalid_argument("edge list not sorted/unique");
    }
    for (int l : labels)
        if (l < 0 || l >= num_classes) throw std::invalid_argument("label out of range");
}

Graph generate_sbm(int num_blocks, int nodes_per_block, double p_in, double p_out, int feat_dim,
                   uint64_t seed) {
    check_probability(p_in, "p_in");
    check_probability(p_out, "p_out");
    if (p_out > p_in) throw std::invalid_argument("p_out must not exceed p_in");
    if (num_blocks < 1 || nodes_per_block < 1) throw std::invalid_argument("block counts must be >= 1");
    if (feat_dim < 1) throw std::invalid_argument("feat_dim must be >= 1");

    Graph g;
    g.num_nodes = num_blocks * nodes_per_block;
    g.num_classes = num_blocks;
    g.labels.resize(g.num_nodes);
    for (int v = 0; v < g.num_nodes; ++v) g.labels[v] = v / nodes_per_block;

    Rng rng(seed);
    for (int u = 0; u < g.num_nodes; ++u)
        for (int v = u + 1; v < g.num_nodes; ++v) {
            const double p = g.labels[u] == g.labels[v] ? p_in : p_out;
            if (rng.uniform() < p) g.edges.emplace_back(u, v);
        }
    g.features = normal_features(g.num_nodes, feat_dim, rng);
    return g;
}

Graph generate_er(int num_nodes, double p, int feat_dim, uint64_t seed) {
    check_probability(p, "p");
    if (num_nodes < 1) throw std::invalid_argument("num_nodes must be >= 1");
    if (feat_dim < 1) throw std::invalid_argument("feat_dim must be >= 1");

    Graph g;
    g.num_nodes = num_nodes;
    g.num_classes = 1;
    g.labels.assign(num_nodes, 0);
    Rng rng(seed);
    for (int u = 0; u < num_nodes; ++u)
        for (int v = u + 1; v < num_nodes; ++v)
            if (rng.uniform() < p) g.edges.emplace_back(u, v);
    g.features = normal_features(num_nodes, feat_dim, rng);
    return g;
}

Graph generate_single_node(int feat_dim, uint64_t seed) {
    if (feat_dim < 1) throw std::invalid_argument("feat_dim must be >= 1");
    Graph g;
    g.num_nodes = 1;
    g.num_classes = 1;
    g.labels = {0};
    Rng rng(seed);
    g.features = normal_features(1, feat_dim, rng);
    return g;
}

Graph generate_community_sbm(const std::vector<int>& clients_per_community, int nodes_per_client,
                             double p_intra, double p_inter, int feat_dim, uint64_t seed) {
    check_probability(p_intra, "p_intra");
    check_probability(p_inter, "p_inter");
    if (clients_per_community.empty()) throw std::invalid_argument("need at least one community");
    for (int c : clients_per_community)
        if (c < 1) throw std::invalid_argument("clients per community must be >= 1");
    if (nodes_per_client < 1) throw std::invalid_argument("nodes_per_client must be >= 1");
    if (feat_dim < 1) throw std::invalid_argument("feat_dim must be >= 1");

    Graph g;
    g.num_classes = static_cast<int>(clients_per_community.size());
    std::vector<int> community_of_node;
    for (int c = 0; c < g.num_classes; ++c) {
        const int nodes = clients_per_community[c] * nodes_per_client;
        community_of_node.insert(community_of_node.end(), nodes, c);
    }
    g.num_nodes = static_cast<int>(community_of_node.size());
    g.labels = community_of_node;

    Rng rng(seed);
    for (int u = 0; u < g.num_nodes; ++u)
        for (int v = u + 1; v < g.num_nodes; ++v) {
            const double p = community_of_node[u] == community_of_node[v] ? p_intra : p_inter;
            if (rng.uniform() < p) g.edges.emplace_back(u, v);
        }
    g.features = normal_features(g.num_nodes, feat_dim, rng);
    return g;
}

NormalizedAdjacency normalized_adjacency(const Graph& g) {
    const int n = g.num_nodes;
    std::vector<double> deg(n, 1.0);  // self-loop added
    for (auto [u, v] : g.edges) {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    for (int v = 0; v < n; ++v) rows[v].emplace_back(v, 1.0 / deg[v]);
    for (auto [u, v] : g.edges) {
        const double w = 1.0 / std::sqrt(deg[u] * deg[v]);
        rows[u].emplace_back(v, w);
        rows[v].emplace_back(u, w);
    }
    NormalizedAdjacency S;
    S.n = n;
    S.row_ptr.assign(n + 1, 0);
    for (int v = 0; v < n; ++v) {
        std::sort(rows[v].begin(), rows[v].end());
        S.row_ptr[v + 1] = S.row_ptr[v] + static_cast<int>(rows[v].size());
        for (auto [c, w] : rows[v]) {
            S.col.push_back(c);
            S.val.push_back(w);
        }
    }
    return S;
}

Graph induced_subgraph(const Graph& g, const std::vector<int>& ids) {
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (int id : sorted)
        if (id < 0 || id >= g.num_nodes) throw std::invalid_argument("node id out of range");

    Graph sub;
    sub.num_nodes = static_cast<int>(sorted.size());
    sub.num_classes = g.num_classes;
    sub.features = Matrix(sub.num_nodes, g.feat_dim());
    sub.labels.resize(sub.num_nodes);
    sub.node_ids.resize(sub.num_nodes);

    std::unordered_map<int, int> remap;
    remap.reserve(sorted.size());
    for (int j = 0; j < sub.num_nodes; ++j) {
        const int orig = sorted[j];
        remap[orig] = j;
        sub.labels[j] = g.labels[orig];
        sub.node_ids[j] = g.node_ids.empty() ? orig : g.node_ids[orig];
        for (int c = 0; c < g.feat_dim(); ++c) sub.features(j, c) = g.features(orig, c);
    }
    for (auto [u, v] : g.edges) {
        auto iu = remap.find(u), iv = remap.find(v);
        if (iu != remap.end() && iv != remap.end())
            sub.edges.emplace_back(std::min(iu->second, iv->second),
                                   std::max(iu->second, iv->second));
    }
    std::sort(sub.edges.begin(), sub.edges.end());
    return sub;
}

Split split_nodes(const Graph& g, double train_frac, double val_frac, uint64_t seed) {
    if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
        throw std::invalid_argument("split fractions must be non-negative with sum <= 1");
    std::vector<int> order(g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const int n_train = static_cast<int>(std::llround(train_frac * g.num_nodes));
    const int n_val = static_cast<int>(std::llround(val_frac * g.num_nodes));
    Split s;
    s.train_ids.assign(order.begin(), order.begin() + n_train);
    s.val_ids.assign(order.begin() + n_train,
                     order.begin() + std::min<long>(g.num_nodes, n_train + n_val));
    s.test_ids.assign(order.begin() + std::min<long>(g.num_nodes, n_train + n_val), order.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
    std::sort(s.val_ids.begin(), s.val_ids.end());
    std::sort(s.test_ids.begin(), s.test_ids.end());
    return s;
}

Graph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file: " + path);
    nlohmann::json j;
    in >> j;

    Graph g;
    g.num_nodes = j.at("num_nodes").get<int>();
    const int feat_dim = j.at("feat_dim").get<int>();
    g.num_classes = j.at("num_classes").get<int>();
    g.features = Matrix(g.num_nodes, feat_dim);
    const auto& feats = j.at("features");
    if (static_cast<int>(feats.size()) != g.num_nodes)
        throw std::invalid_argument("features row count mismatch in " + path);
    for (int i = 0; i < g.num_nodes; ++i) {
        const auto& row = feats[i];
        if (static_cast<int>(row.size()) != feat_dim)
            throw std::invalid_argument("feature row width mismatch in " + path);
        for (int c = 0; c < feat_dim; ++c) g.features(i, c) = row[c].get<double>();
    }
    g.labels = j.at("labels").get<std::vector<int>>();
    for (const auto& e : j.at("edges")) {
        int u = e.at(0).get<int>(), v = e.at(1).get<int>();
        if (u == v) continue;  // explicit self-loops dropped; normalization re-adds them
        g.edges.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    g.validate();
    return g;
}

void save_graph(const Graph& g, const std::string& path) {
    nlohmann::json j;
    j["num_nodes"] = g.num_nodes;
    j["feat_dim"] = g.feat_dim();
    j["num_classes"] = g.num_classes;
    auto edges = nlohmann::json::array();
    for (auto [u, v] : g.edges) edges.push_back({u, v});
    j["edges"] = std::move(edges);
    auto feats = nlohmann::json::array();
    for (int i = 0; i < g.num_nodes; ++i) {
        auto row = nlohmann::json::array();
        for (int c = 0; c < g.feat_dim(); ++c) row.push_back(g.features(i, c));
        feats.push_back(std::move(row));
    }
    j["features"] = std::move(feats);
    j["labels"] = g.labels;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write graph file: " + path);
    out << j.dump() << "\n";
}

}  // namespace fedpub
