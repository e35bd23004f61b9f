#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpub/graph.hpp"

namespace fedpub {

enum class PartitionMode { Disjoint, Overlapping, Random, Imbalanced };

std::string to_string(PartitionMode m);
PartitionMode partition_mode_from_string(const std::string& s);

/// Assignment of node-id sets over a global graph to K clients. In disjoint,
/// random and imbalanced modes the sets are pairwise disjoint and cover all
/// nodes; in overlapping mode they may intersect. Sets are sorted and non-empty.
struct Partition {
    PartitionMode mode = PartitionMode::Disjoint;
    std::vector<std::vector<int>> client_nodes;

    int num_clients() const { return static_cast<int>(client_nodes.size()); }
};

/// K x K symmetric counts of global edges cut between client pairs.
struct MissingEdgeMatrix {
    int k = 0;
    std::vector<long> counts;  // row-major k x k

    long& at(int i, int j) { return counts[static_cast<size_t>(i) * k + j]; }
    long at(int i, int j) const { return counts[static_cast<size_t>(i) * k + j]; }
};

/// Balanced k-way partitioner standing in for METIS: k BFS fronts grown from
/// degree-spread seeds, then boundary refinement minimizing the edge cut
/// subject to max part size <= ceil(1.3 n / k). Deterministic per seed.
Partition partition_balanced(const Graph& g, int k, uint64_t seed);

/// Louvain modularity communities, merged (two smallest first) or split
/// (largest via partition_balanced) until exactly k sets remain.
Partition partition_louvain(const Graph& g, int k, uint64_t seed);

Partition partition_random(const Graph& g, int k, uint64_t seed);

/// Balanced split into base_parts, then samples_per_part random node subsets
/// of size round(node_frac * |part|) per base part; K = base_parts * samples_per_part.
Partition make_overlapping(const Graph& g, int base_parts, int samples_per_part, double node_frac,
                           uint64_t seed);

/// Balanced split into fine_parts, consecutive groups merged per group_sizes;
/// leftover fine parts stay their own clients.
Partition make_imbalanced(const Graph& g, int fine_parts, const std::vector<int>& group_sizes,
                          uint64_t seed);

MissingEdgeMatrix missing_edges(const Graph& g, const Partition& p);

/// Median pairwise Jensen-Shannon divergence (base 2) of client label
/// distributions.
double heterogeneity(const Partition& p, const std::vector<int>& labels, int num_classes);

double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

/// Average over all nodes of 2 T(v) / (deg(v) (deg(v)-1)), zero for deg < 2.
double clustering_coefficient(const Graph& g);

/// Newman modularity of a disjoint partition (used by Louvain and as an oracle
/// in tests): Q = sum_c [e_c/m - (d_c/2m)^2].
double modularity(const Graph& g, const std::vector<int>& community_of_node);

/// Louvain community detection; pass_modularity, when given, receives the
/// modularity after every completed local-moving sweep.
std::vector<int> louvain_communities(const Graph& g, uint64_t seed,
                                     std::vector<double>* pass_modularity = nullptr);

void save_partition(const Partition& p, const std::string& path);
Partition load_partition(const std::string& path);

}  // namespace fedpub
