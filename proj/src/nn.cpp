#include "fedpub/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedpub/rng.hpp"

namespace fedpub {

const char* ParamSet::tensor_name(int t) {
    static const char* names[kNumTensors] = {"w1", "b1", "w2", "b2", "wc", "bc"};
    return names[t];
}

Matrix& ParamSet::tensor(int t) {
    switch (t) {
        case 0: return w1;
        case 1: return b1;
        case 2: return w2;
        case 3: return b2;
        case 4: return wc;
        default: return bc;
    }
}

const Matrix& ParamSet::tensor(int t) const {
    return const_cast<ParamSet*>(this)->tensor(t);
}

ParamSet ParamSet::like(const ParamSet& other, double fill) {
    ParamSet p;
    for (int t = 0; t < kNumTensors; ++t)
        p.tensor(t) = Matrix(other.tensor(t).rows, other.tensor(t).cols, fill);
    return p;
}

ParamSet ParamSet::shaped(int feat_dim, int hidden, int num_classes, double fill) {
    ParamSet p;
    p.w1 = Matrix(feat_dim, hidden, fill);
    p.b1 = Matrix(1, hidden, fill);
    p.w2 = Matrix(hidden, hidden, fill);
    p.b2 = Matrix(1, hidden, fill);
    p.wc = Matrix(hidden, num_classes, fill);
    p.bc = Matrix(1, num_classes, fill);
    return p;
}

bool ParamSet::same_shapes(const ParamSet& o) const {
    for (int t = 0; t < kNumTensors; ++t)
        if (!tensor(t).same_shape(o.tensor(t))) return false;
    return true;
}

long ParamSet::total_params() const {
    long n = 0;
    for (int t = 0; t < kNumTensors; ++t) n += static_cast<long>(tensor(t).size());
    return n;
}

long ParamSet::nonzero_count() const {
    long n = 0;
    for (int t = 0; t < kNumTensors; ++t)
        for (double v : tensor(t).a)
            if (v != 0.0) ++n;
    return n;
}

std::vector<double> ParamSet::flatten() const {
    std::vector<double> out;
    out.reserve(total_params());
    for (int t = 0; t < kNumTensors; ++t)
        out.insert(out.end(), tensor(t).a.begin(), tensor(t).a.end());
    return out;
}

bool ParamSet::all_finite() const {
    for (int t = 0; t < kNumTensors; ++t)
        for (double v : tensor(t).a)
            if (!std::isfinite(v)) return false;
    return true;
}

ParamSet glorot_init(int feat_dim, int hidden, int num_classes, uint64_t seed) {
    ParamSet p = ParamSet::shaped(feat_dim, hidden, num_classes);
    Rng rng(seed);
    for (int t = 0; t < ParamSet::kNumTensors; ++t) {
        Matrix& w = p.tensor(t);
        const double limit = std::sqrt(6.0 / (w.rows + w.cols));
        for (double& v : w.a) v = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return p;
}

void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads, double lr,
               const AdamConfig& cfg) {
    if (!params.same_shapes(grads)) throw std::invalid_argument("adam: grad shape mismatch");
    if (!grads.all_finite()) throw std::runtime_error("adam: non-finite gradient");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (int t = 0; t < ParamSet::kNumTensors; ++t) {
        auto& w = params.tensor(t).a;
        auto& m = state.m.tensor(t).a;
        auto& v = state.v.tensor(t).a;
        const auto& g = grads.tensor(t).a;
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

namespace {

ParamSet effective_params(const ParamSet& params, const ParamSet* masks) {
    if (!masks) return params;
    if (!params.same_shapes(*masks)) throw std::invalid_argument("mask shape mismatch");
    ParamSet eff = params;
    for (int t = 0; t < ParamSet::kNumTensors; ++t) {
        auto& w = eff.tensor(t).a;
        const auto& mu = masks->tensor(t).a;
        for (size_t i = 0; i < w.size(); ++i) w[i] *= mu[i];
    }
    return eff;
}

void check_finite_matrix(const Matrix& X, const char* what) {
    for (double v : X.a)
        if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite input: ") + what);
}

double stable_log_sigmoid(double x) {
    // log sigma(x) = -log(1 + e^-x), computed without overflow
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

ForwardResult forward(const ParamSet& params, const ParamSet* masks,
                      const NormalizedAdjacency& adj, const Matrix& X) {
    const ParamSet eff = effective_params(params, masks);
    check_shape(X.cols == eff.w1.rows, "forward: feature dim vs w1");
    check_shape(adj.n == X.rows, "forward: adjacency vs features");
    check_finite_matrix(X, "features");

    ForwardResult r;
    r.z1 = spmm(adj, matmul(X, eff.w1));
    add_row_vector(r.z1, eff.b1);
    r.h1 = relu(r.z1);
    r.z2 = spmm(adj, matmul(r.h1, eff.w2));
    add_row_vector(r.z2, eff.b2);
    r.h = relu(r.z2);
    r.logits = matmul(r.h, eff.wc);
    add_row_vector(r.logits, eff.bc);
    return r;
}

LossAndGrads loss_and_grads(const ParamSet& params, const ParamSet* masks, const ParamSet& anchor,
                            const LossInputs& in, double lambda1, double lambda2) {
    if (!params.same_shapes(anchor)) throw std::invalid_argument("anchor shape mismatch");
    const ParamSet eff = effective_params(params, masks);
    const ForwardResult fwd = forward(params, masks, *in.adj, *in.X);
    const int n = in.X->rows;
    const int hidden = eff.w2.cols;
    const int classes = eff.wc.cols;

    LossAndGrads out;
    out.grad_params = ParamSet::like(params);
    out.grad_masks = ParamSet::like(params);

    Matrix dlogits(n, classes);
    Matrix dH(n, hidden);

    if (in.task == Task::NodeClassification) {
        const auto& ids = *in.train_ids;
        if (ids.empty()) throw std::invalid_argument("empty train set");
        double loss = 0.0;
        const double inv = 1.0 / static_cast<double>(ids.size());
        for (int i : ids) {
            double mx = fwd.logits(i, 0);
            for (int c = 1; c < classes; ++c) mx = std::max(mx, fwd.logits(i, c));
            double z = 0.0;
            for (int c = 0; c < classes; ++c) z += std::exp(fwd.logits(i, c) - mx);
            const int y = (*in.labels)[i];
            loss += (std::log(z) - (fwd.logits(i, y) - mx)) * inv;
            for (int c = 0; c < classes; ++c) {
                const double p = std::exp(fwd.logits(i, c) - mx) / z;
                dlogits(i, c) = (p - (c == y ? 1.0 : 0.0)) * inv;
            }
        }
        out.loss.task_loss = loss;
        dH = matmul_a_bt(dlogits, eff.wc);
    } else {
        const auto& pos = *in.pos_edges;
        const auto& neg = *in.neg_edges;
        if (pos.empty() || neg.empty())
            throw std::invalid_argument("link prediction needs positive and negative edges");
        const double inv = 1.0 / static_cast<double>(pos.size() + neg.size());
        double loss = 0.0;
        auto accumulate = [&](const std::vector<std::pair<int, int>>& edges, double y) {
            for (auto [u, v] : edges) {
                double x = 0.0;
                for (int c = 0; c < hidden; ++c) x += fwd.h(u, c) * fwd.h(v, c);
                loss -= (y * stable_log_sigmoid(x) + (1.0 - y) * stable_log_sigmoid(-x)) * inv;
                const double s = 1.0 / (1.0 + std::exp(-x));
                const double dz = (s - y) * inv;
                for (int c = 0; c < hidden; ++c) {
                    dH(u, c) += dz * fwd.h(v, c);
                    dH(v, c) += dz * fwd.h(u, c);
                }
            }
        };
        accumulate(pos, 1.0);
        accumulate(neg, 0.0);
        out.loss.task_loss = loss;
        // classifier unused by the decoder; dlogits stays zero
    }

    // Backprop through the GCN stack; gradients land on the effective weights.
    ParamSet geff = ParamSet::like(params);
    geff.wc = matmul_at_b(fwd.h, dlogits);
    geff.bc = column_sums(dlogits);

    const Matrix dz2 = relu_backward(dH, fwd.z2);
    geff.b2 = column_sums(dz2);
    const Matrix dp2 = spmm(*in.adj, dz2);
    geff.w2 = matmul_at_b(fwd.h1, dp2);
    const Matrix dh1 = matmul_a_bt(dp2, eff.w2);

    const Matrix dz1 = relu_backward(dh1, fwd.z1);
    geff.b1 = column_sums(dz1);
    const Matrix dp1 = spmm(*in.adj, dz1);
    geff.w1 = matmul_at_b(*in.X, dp1);

    // Proximal term on the effective weights.
    double prox = 0.0;
    for (int t = 0; t < ParamSet::kNumTensors; ++t) {
        const auto& e = eff.tensor(t).a;
        const auto& a = anchor.tensor(t).a;
        auto& ge = geff.tensor(t).a;
        for (size_t i = 0; i < e.size(); ++i) {
            const double diff = e[i] - a[i];
            prox += diff * diff;
            ge[i] += 2.0 * lambda2 * diff;
        }
    }
    out.loss.prox_term = prox;

    // Chain rule through theta_eff = params (*) masks, plus the l1 subgradient.
    double l1 = 0.0;
    for (int t = 0; t < ParamSet::kNumTensors; ++t) {
        const auto& ge = geff.tensor(t).a;
        const auto& th = params.tensor(t).a;
        auto& gp = out.grad_params.tensor(t).a;
        auto& gm = out.grad_masks.tensor(t).a;
        if (masks) {
            const auto& mu = masks->tensor(t).a;
            for (size_t i = 0; i < ge.size(); ++i) {
                gp[i] = ge[i] * mu[i];
                const double sign = mu[i] > 0.0 ? 1.0 : (mu[i] < 0.0 ? -1.0 : 0.0);
                gm[i] = ge[i] * th[i] + lambda1 * sign;
                l1 += std::fabs(mu[i]);
            }
        } else {
            for (size_t i = 0; i < ge.size(); ++i) gp[i] = ge[i];
        }
    }
    out.loss.l1_term = l1;
    out.loss.total = out.loss.task_loss + lambda1 * out.loss.l1_term + lambda2 * out.loss.prox_term;
    return out;
}

ThresholdResult apply_mask_threshold(const ParamSet& params, const ParamSet& masks,
                                     double threshold) {
    if (threshold < 0.0) throw std::invalid_argument("threshold must be >= 0");
    if (!params.same_shapes(masks)) throw std::invalid_argument("mask shape mismatch");
    ThresholdResult r;
    r.params = params;
    long zeroed = 0, total = 0;
    for (int t = 0; t < ParamSet::kNumTensors; ++t) {
        auto& w = r.params.tensor(t).a;
        const auto& mu = masks.tensor(t).a;
        for (size_t i = 0; i < w.size(); ++i) {
            ++total;
            if (std::fabs(mu[i]) < threshold || mu[i] == 0.0) {
                w[i] = 0.0;
                ++zeroed;
            } else {
                w[i] *= mu[i];
            }
        }
    }
    r.sparsity = total == 0 ? 0.0 : static_cast<double>(zeroed) / static_cast<double>(total);
    return r;
}

double predict_accuracy(const ParamSet& params, const ParamSet* masks,
                        const NormalizedAdjacency& adj, const Matrix& X,
                        const std::vector<int>& labels, const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("empty evaluation set");
    const ForwardResult fwd = forward(params, masks, adj, X);
    long correct = 0;
    for (int i : ids) {
        int best = 0;
        for (int c = 1; c < fwd.logits.cols; ++c)
            if (fwd.logits(i, c) > fwd.logits(i, best)) best = c;
        if (best == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ids.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels size mismatch");
    const size_t n = scores.size();
    long n_pos = 0;
    for (int y : labels) n_pos += y != 0 ? 1 : 0;
    const long n_neg = static_cast<long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc requires both classes present");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t t = i; t <= j; ++t)
            if (labels[order[t]] != 0) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<double> edge_scores(const Matrix& H, const std::vector<std::pair<int, int>>& edges) {
    std::vector<double> s;
    s.reserve(edges.size());
    for (auto [u, v] : edges) {
        double x = 0.0;
        for (int c = 0; c < H.cols; ++c) x += H(u, c) * H(v, c);
        s.push_back(1.0 / (1.0 + std::exp(-x)));
    }
    return s;
}

}  // namespace fedpub
