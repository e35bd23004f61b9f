#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedpub/graph.hpp"
#include "fedpub/matrix.hpp"

namespace fedpub {

/// The six trainable tensors of the 2-layer GCN + linear classifier:
/// w1 (d x h), b1 (1 x h), w2 (h x h), b2 (1 x h), wc (h x C), bc (1 x C).
/// Also reused for masks, gradients and Adam moments, which share the shapes.
struct ParamSet {
    Matrix w1, b1, w2, b2, wc, bc;

    static constexpr int kNumTensors = 6;
    static const char* tensor_name(int t);

    Matrix& tensor(int t);
    const Matrix& tensor(int t) const;

    static ParamSet like(const ParamSet& other, double fill = 0.0);
    static ParamSet shaped(int feat_dim, int hidden, int num_classes, double fill = 0.0);

    bool same_shapes(const ParamSet& o) const;
    long total_params() const;
    long nonzero_count() const;
    std::vector<double> flatten() const;
    bool all_finite() const;
};

using ModelParams = ParamSet;
using MaskParams = ParamSet;

ParamSet glorot_init(int feat_dim, int hidden, int num_classes, uint64_t seed);

/// Adam accumulators for one ParamSet.
struct AdamState {
    ParamSet m, v;
    long step = 0;

    static AdamState like(const ParamSet& p) { return {ParamSet::like(p), ParamSet::like(p), 0}; }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads, double lr,
               const AdamConfig& cfg = {});

struct LossBreakdown {
    double task_loss = 0.0;
    double l1_term = 0.0;    // raw sum |mu|
    double prox_term = 0.0;  // raw ||theta_eff - anchor||^2
    double total = 0.0;      // task + lambda1 * l1 + lambda2 * prox
};

enum class Task { NodeClassification, LinkPrediction };

struct ForwardResult {
    Matrix z1, h1, z2, h, logits;
};

/// Effective weights are params (elementwise-times masks when given); H is the
/// final hidden representation ReLU(S ReLU(S X W1 + b1) W2 + b2), logits = H Wc + bc.
ForwardResult forward(const ParamSet& params, const ParamSet* masks,
                      const NormalizedAdjacency& adj, const Matrix& X);

struct LossInputs {
    const NormalizedAdjacency* adj = nullptr;
    const Matrix* X = nullptr;
    const std::vector<int>* labels = nullptr;     // node_clf
    const std::vector<int>* train_ids = nullptr;  // node_clf
    Task task = Task::NodeClassification;
    // link_pred: positive edges plus equally many sampled negatives
    const std::vector<std::pair<int, int>>* pos_edges = nullptr;
    const std::vector<std::pair<int, int>>* neg_edges = nullptr;
};

struct LossAndGrads {
    LossBreakdown loss;
    ParamSet grad_params;
    ParamSet grad_masks;  // zero when no masks were given
};

/// Loss of the composite objective task + lambda1 |mu|_1 + lambda2 |theta_eff - anchor|^2,
/// with gradients for params and masks chained through theta_eff = params (*) masks.
/// The l1 subgradient uses sign(mu) with sign(0) = 0.
LossAndGrads loss_and_grads(const ParamSet& params, const ParamSet* masks, const ParamSet& anchor,
                            const LossInputs& in, double lambda1, double lambda2);

struct ThresholdResult {
    ParamSet params;  // params (*) masks with |mu| below threshold zeroed
    double sparsity = 0.0;
};

ThresholdResult apply_mask_threshold(const ParamSet& params, const ParamSet& masks,
                                     double threshold);

double predict_accuracy(const ParamSet& params, const ParamSet* masks,
                        const NormalizedAdjacency& adj, const Matrix& X,
                        const std::vector<int>& labels, const std::vector<int>& ids);

/// Mann-Whitney ROC-AUC with ties counted 0.5. Labels must contain both classes.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Edge score sigma(h_u . h_v) for every listed edge.
std::vector<double> edge_scores(const Matrix& H, const std::vector<std::pair<int, int>>& edges);

}  // namespace fedpub
