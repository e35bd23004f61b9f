#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedpub/matrix.hpp"

namespace fedpub {

/// Immutable undirected graph with dense node features and integer labels.
/// Edges are stored once with u < v, sorted, no self-loops, no duplicates.
struct Graph {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> edges;
    Matrix features;          // num_nodes x feat_dim
    std::vector<int> labels;  // class ids in [0, num_classes)
    int num_classes = 0;
    std::vector<int> node_ids;  // original ids for induced subgraphs; empty = identity

    int feat_dim() const { return features.cols; }
    long num_edges() const { return static_cast<long>(edges.size()); }

    /// Sorted neighbor lists (no self-loops).
    std::vector<std::vector<int>> adjacency_lists() const;

    void validate() const;  // throws std::invalid_argument on broken invariants
};

/// Disjoint train/val/test node-id sets.
struct Split {
    std::vector<int> train_ids, val_ids, test_ids;
};

Graph generate_sbm(int num_blocks, int nodes_per_block, double p_in, double p_out, int feat_dim,
                   uint64_t seed);

Graph generate_er(int num_nodes, double p, int feat_dim, uint64_t seed);

Graph generate_single_node(int feat_dim, uint64_t seed);

/// Block-structured graph for the community experiments: clients are
/// consecutive chunks of `nodes_per_client` nodes, communities group
/// `clients_per_community[c]` consecutive clients, edge probability depends
/// only on community co-membership and labels equal the community index.
Graph generate_community_sbm(const std::vector<int>& clients_per_community, int nodes_per_client,
                             double p_intra, double p_inter, int feat_dim, uint64_t seed);

NormalizedAdjacency normalized_adjacency(const Graph& g);

/// Nodes relabeled 0..|ids|-1 preserving sorted order of the originals;
/// keeps exactly the edges with both endpoints in ids.
Graph induced_subgraph(const Graph& g, const std::vector<int>& ids);

Split split_nodes(const Graph& g, double train_frac, double val_frac, uint64_t seed);

Graph load_graph(const std::string& path);
void save_graph(const Graph& g, const std::string& path);

}  // namespace fedpub
