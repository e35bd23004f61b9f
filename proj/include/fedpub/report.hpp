#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedpub/federated.hpp"
#include "fedpub/matrix.hpp"
#include "fedpub/partition.hpp"

namespace fedpub {

/// K x K matrix of 1 - JS(p_i, p_j) over client label distributions.
Matrix label_similarity(const Partition& p, const std::vector<int>& labels, int num_classes);

/// Pearson correlation over strictly-upper-triangular entries; nullopt when
/// either side has zero variance.
std::optional<double> similarity_label_correlation(const Matrix& S, const Matrix& L);

struct NeighborEntry {
    int client_id = 0;
    int neighbor_id = -1;  // -1: no cut edges, entry skipped
    double local_acc = 0.0;
    double neighbor_acc = 0.0;
};

struct NeighborReport {
    std::vector<NeighborEntry> entries;
};

/// For each client, the neighbor with the most missing edges, the client's
/// own test accuracy, and its model's accuracy on that neighbor's test split.
/// eval_params[i] is the evaluation view of client i's model (mask applied).
NeighborReport neighbor_evaluation(const std::vector<ClientState>& clients,
                                   const std::vector<ParamSet>& eval_params,
                                   const MissingEdgeMatrix& missing);

/// Fraction of parameter positions where both masks survive the threshold.
double mask_overlap(const ParamSet& masks_i, const ParamSet& masks_j, double threshold);

struct CommunicationSummary {
    std::string strategy;
    long total_sent = 0;
    long total_received = 0;
    double relative_cost_pct = 0.0;  // vs a dense fedavg baseline = 100%
    double mean_sparsity = 0.0;
};

/// Per-strategy transmission totals; the 100% baseline is what fedavg would
/// transmit for the same run (dense parameters both directions every round).
std::vector<CommunicationSummary> communication_summary(const std::vector<RoundRecord>& records,
                                                        long total_params);

void write_matrix_csv(const Matrix& m, const std::string& path);
Matrix read_matrix_csv(const std::string& path);

/// 8-bit grayscale PGM, min-max normalized; the quantization range is
/// documented in the header comment.
void write_matrix_pgm(const Matrix& m, const std::string& path);

std::vector<RoundRecord> read_metrics_csv(const std::string& path);

/// The `report <run-dir>` entry point: emits similarity_round_<r>.csv/.pgm,
/// label_similarity.csv, neighbor_report.csv, comm_summary.csv and
/// correlation.txt under <run-dir>/report/.
void write_run_report(const std::string& run_dir);

}  // namespace fedpub
