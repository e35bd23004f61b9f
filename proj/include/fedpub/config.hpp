#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedpub {

enum class StrategyKind { FedPub, FedAvg, FedProx, FedPer, Local, Oracle };
enum class SimilaritySource { Functional, Parameter, Gradient, Label };
enum class CommunityMode { Implicit, Explicit };
enum class ProbeVariant { Sbm, Er, One, Feature };
enum class TaskKind { NodeClassification, LinkPrediction };
enum class EmbeddingSource { Hidden, Logits };

std::string to_string(StrategyKind k);
StrategyKind strategy_kind_from_string(const std::string& s);

struct SyntheticSpec {
    std::string kind = "sbm";  // sbm | er | one | community_sbm
    int blocks = 5;
    int nodes_per_block = 100;
    double p_in = 0.1;
    double p_out = 0.01;
    int er_nodes = 500;
    double er_p = 0.1;
    std::vector<int> clients_per_community;  // community_sbm
    int nodes_per_client = 30;
    double p_intra = 0.5;
    double p_inter = 0.1;
    int feat_dim = 128;
};

struct PartitionSpec {
    std::string mode = "disjoint";  // disjoint | louvain | random | overlapping | imbalanced | blocks
    int k = 10;
    int base_parts = 2;
    int samples_per_part = 5;
    double node_frac = 0.5;
    int fine_parts = 20;
    std::vector<int> group_sizes;
};

struct ModelSpec {
    int hidden = 128;
    bool mask_classifier = true;
};

struct TrainingSpec {
    int rounds = 100;
    int local_epochs = 1;
    double lr = 0.001;
    double lambda1 = 0.001;
    double lambda2 = 0.001;
    double mask_threshold = 0.5;
    double fedprox_mu = 0.01;
    double train_frac = 0.2;
    double val_frac = 0.35;
};

struct StrategySpec {
    StrategyKind kind = StrategyKind::FedPub;
    std::optional<double> tau;  // default depends on partition mode: 5 overlapping, 3 disjoint
    SimilaritySource similarity_source = SimilaritySource::Functional;
    CommunityMode community_mode = CommunityMode::Implicit;
    double explicit_threshold = 0.5;
    EmbeddingSource embedding_source = EmbeddingSource::Hidden;
};

struct ProbeSpec {
    ProbeVariant variant = ProbeVariant::Sbm;
    int blocks = 5;
    int nodes_per_block = 100;
    double p_in = 0.1;
    double p_out = 0.01;
};

struct RunConfig {
    std::string graph_file;      // one of graph_file / synthetic
    std::optional<SyntheticSpec> synthetic;
    PartitionSpec partition;
    ModelSpec model;
    TrainingSpec training;
    StrategySpec strategy;
    ProbeSpec probe;
    TaskKind task = TaskKind::NodeClassification;
    uint64_t seed = 1;
    std::string output_dir = "run";
    std::vector<int> similarity_rounds;
    std::vector<double> lambda1_grid;  // expanded into sibling run directories

    double resolved_tau() const;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

}  // namespace fedpub
