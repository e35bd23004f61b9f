#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedpub/config.hpp"
#include "fedpub/graph.hpp"
#include "fedpub/nn.hpp"
#include "fedpub/partition.hpp"

namespace fedpub {

/// The shared random graph fed to every client model for functional
/// embeddings. Feature-variant probes swap in per-client features over the
/// same structure.
struct ProbeContext {
    Graph graph;
    NormalizedAdjacency adj;
    std::vector<Matrix> per_client_features;  // only for the feature variant
};

/// One client's transmission to the server.
struct ClientPayload {
    ParamSet params;  // thresholded effective weights for fedpub, raw weights otherwise
    std::vector<double> embedding;
    std::vector<double> label_dist;  // only consulted by the label similarity source
    long train_count = 0;
    long nonzero = 0;
    bool classifier_transmitted = true;  // false for fedper
};

struct ClientState {
    int client_id = 0;
    Graph subgraph;
    NormalizedAdjacency adj;
    Split split;
    ParamSet params;
    ParamSet masks;
    AdamState adam_params;
    AdamState adam_masks;  // separate accumulator for the masks
    ParamSet last_anchor;
    // link prediction data: positive edges per split, fixed evaluation negatives
    std::vector<std::pair<int, int>> train_pos, val_pos, test_pos;
    std::vector<std::pair<int, int>> val_neg, test_neg;
};

struct ServerState {
    int round = 0;  // completed rounds
    ParamSet init_params;
    ProbeContext probe;
    std::vector<ClientPayload> bank;
    std::vector<ParamSet> last_dispatch;  // what each client received this round
    Matrix similarity;                    // K x K, unit diagonal
    Matrix alphas;                        // K x K row-stochastic
};

/// Per-client metrics row; column order matches the metrics CSV exactly.
struct RoundRecord {
    int round = 0;
    int client_id = 0;
    std::string strategy;
    double train_loss = 0.0;
    double task_loss = 0.0;
    double l1_term = 0.0;
    double prox_term = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
    double sparsity = 0.0;
    long params_sent = 0;
    long params_received = 0;
};

std::string round_record_header();
std::string to_csv_row(const RoundRecord& r);

/// Mean over probe nodes of the final hidden representation (or of the
/// logits, when so configured).
std::vector<double> functional_embedding(const ParamSet& params, const ParamSet* masks,
                                         const NormalizedAdjacency& probe_adj,
                                         const Matrix& probe_features,
                                         EmbeddingSource source = EmbeddingSource::Hidden);

/// Cosine similarity; a zero-norm side yields 0 with a warning.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

double parameter_similarity(const ParamSet& a, const ParamSet& b);
double gradient_similarity(const ParamSet& delta_a, const ParamSet& delta_b);

struct AggregationMode {
    CommunityMode community = CommunityMode::Implicit;
    double explicit_threshold = 0.5;
};

/// Softmax(tau * sim_row) with max-subtraction; in explicit mode entries with
/// similarity below the threshold are dropped first (self always kept).
std::vector<double> aggregation_weights(const std::vector<double>& sim_row, int self_index,
                                        double tau, const AggregationMode& mode = {});

std::vector<ParamSet> aggregate_personalized(const std::vector<ParamSet>& bank,
                                             const Matrix& alphas);

ParamSet fedavg_aggregate(const std::vector<ParamSet>& bank, const std::vector<long>& train_counts);

struct LocalUpdateResult {
    std::optional<ClientPayload> payload;
    RoundRecord record;
};

/// One client round: absorb the incoming parameters per strategy, run the
/// local epochs, evaluate, and build the transmission payload.
LocalUpdateResult local_update(ClientState& client, const ParamSet* incoming, int epochs,
                               const RunConfig& cfg, const ProbeContext& probe, int round);

std::vector<RoundRecord> run_round(ServerState& server, std::vector<ClientState>& clients,
                                   const RunConfig& cfg);

struct ExperimentResult {
    std::vector<RoundRecord> records;
    std::vector<ClientState> clients;
    ServerState server;
    std::string run_dir;
};

using RoundObserver =
    std::function<void(int round, const ServerState&, const std::vector<ClientState>&,
                       const std::vector<RoundRecord>&)>;

/// Full experiment: build graph/partition/clients, write the manifest, run
/// all rounds emitting metrics + snapshots + checkpoints under cfg.output_dir.
ExperimentResult run_experiment(const RunConfig& cfg, const RoundObserver& observer = nullptr);

// Deterministic experiment setup, shared with the report tooling.
Graph build_graph(const RunConfig& cfg);
Partition build_partition(const RunConfig& cfg, const Graph& g);
std::vector<ClientState> build_clients(const RunConfig& cfg, const Graph& g, const Partition& p);
ProbeContext build_probe(const RunConfig& cfg, const std::vector<ClientState>& clients,
                         int feat_dim);

void save_checkpoint(const ParamSet& params, const ParamSet* masks, const std::string& path);
void load_checkpoint(const std::string& path, ParamSet& params, ParamSet* masks);

}  // namespace fedpub
