#include "fedpub/federated.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "fedpub/report.hpp"
#include "fedpub/rng.hpp"
#include "json.hpp"

namespace fedpub {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

std::vector<double> label_distribution(const Graph& g) {
    std::vector<double> d(g.num_classes, 0.0);
    for (int l : g.labels) d[l] += 1.0;
    if (g.num_nodes > 0)
        for (double& x : d) x /= static_cast<double>(g.num_nodes);
    return d;
}

ParamSet weighted_sum(const std::vector<const ParamSet*>& sets, const std::vector<double>& w) {
    ParamSet out = ParamSet::like(*sets[0]);
    for (size_t j = 0; j < sets.size(); ++j) {
        if (!sets[j]->same_shapes(out))
            throw std::runtime_error("parameter bank has inconsistent shapes");
        for (int t = 0; t < ParamSet::kNumTensors; ++t) {
            auto& o = out.tensor(t).a;
            const auto& s = sets[j]->tensor(t).a;
            for (size_t i = 0; i < o.size(); ++i) o[i] += w[j] * s[i];
        }
    }
    return out;
}

ParamSet param_delta(const ParamSet& before, const ParamSet& after) {
    ParamSet d = before;
    for (int t = 0; t < ParamSet::kNumTensors; ++t) {
        auto& x = d.tensor(t).a;
        const auto& y = after.tensor(t).a;
        for (size_t i = 0; i < x.size(); ++i) x[i] -= y[i];
    }
    return d;
}

}  // namespace

std::string round_record_header() {
    return "round,client_id,strategy,train_loss,task_loss,l1_term,prox_term,train_acc,val_acc,"
           "test_acc,sparsity,params_sent,params_received";
}

std::string to_csv_row(const RoundRecord& r) {
    std::string s;
    s += std::to_string(r.round) + "," + std::to_string(r.client_id) + "," + r.strategy;
    for (double v : {r.train_loss, r.task_loss, r.l1_term, r.prox_term, r.train_acc, r.val_acc,
                     r.test_acc, r.sparsity})
        s += "," + fmt(v);
    s += "," + std::to_string(r.params_sent) + "," + std::to_string(r.params_received);
    return s;
}

std::vector<double> functional_embedding(const ParamSet& params, const ParamSet* masks,
                                         const NormalizedAdjacency& probe_adj,
                                         const Matrix& probe_features, EmbeddingSource source) {
    if (probe_features.cols != params.w1.rows)
        throw std::invalid_argument("probe feature dimension does not match model input");
    const ForwardResult fwd = forward(params, masks, probe_adj, probe_features);
    const Matrix means = column_means(source == EmbeddingSource::Hidden ? fwd.h : fwd.logits);
    return means.a;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("similarity: length mismatch");
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) {
        std::fprintf(stderr, "warning: zero-norm vector in similarity, returning 0\n");
        return 0.0;
    }
    return dot(a, b) / (na * nb);
}

double parameter_similarity(const ParamSet& a, const ParamSet& b) {
    if (!a.same_shapes(b)) throw std::invalid_argument("parameter_similarity: shape mismatch");
    return cosine_similarity(a.flatten(), b.flatten());
}

double gradient_similarity(const ParamSet& delta_a, const ParamSet& delta_b) {
    return parameter_similarity(delta_a, delta_b);
}

std::vector<double> aggregation_weights(const std::vector<double>& sim_row, int self_index,
                                        double tau, const AggregationMode& mode) {
    const int k = static_cast<int>(sim_row.size());
    if (k < 1) throw std::invalid_argument("aggregation_weights: empty row");
    if (tau < 0.0) throw std::invalid_argument("aggregation_weights: tau must be >= 0");
    if (self_index < 0 || self_index >= k)
        throw std::invalid_argument("aggregation_weights: self index out of range");

    std::vector<uint8_t> keep(k, 1);
    if (mode.community == CommunityMode::Explicit)
        for (int j = 0; j < k; ++j)
            if (j != self_index && sim_row[j] < mode.explicit_threshold) keep[j] = 0;

    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j)
        if (keep[j]) mx = std::max(mx, tau * sim_row[j]);

    std::vector<double> w(k, 0.0);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
        if (!keep[j]) continue;
        w[j] = std::exp(tau * sim_row[j] - mx);
        sum += w[j];
    }
    for (int j = 0; j < k; ++j) w[j] /= sum;
    return w;
}

std::vector<ParamSet> aggregate_personalized(const std::vector<ParamSet>& bank,
                                             const Matrix& alphas) {
    const int k = static_cast<int>(bank.size());
    if (alphas.rows != k || alphas.cols != k)
        throw std::runtime_error("aggregate_personalized: alpha shape mismatch");
    std::vector<const ParamSet*> ptrs(k);
    for (int j = 0; j < k; ++j) ptrs[j] = &bank[j];
    std::vector<ParamSet> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        std::vector<double> row(k);
        for (int j = 0; j < k; ++j) row[j] = alphas(i, j);
        out.push_back(weighted_sum(ptrs, row));
    }
    return out;
}

ParamSet fedavg_aggregate(const std::vector<ParamSet>& bank,
                          const std::vector<long>& train_counts) {
    if (bank.empty() || bank.size() != train_counts.size())
        throw std::invalid_argument("fedavg_aggregate: bank/count mismatch");
    long total = 0;
    for (long c : train_counts) {
        if (c <= 0) throw std::invalid_argument("fedavg_aggregate: counts must be positive");
        total += c;
    }
    std::vector<const ParamSet*> ptrs(bank.size());
    std::vector<double> w(bank.size());
    for (size_t j = 0; j < bank.size(); ++j) {
        ptrs[j] = &bank[j];
        w[j] = static_cast<double>(train_counts[j]) / static_cast<double>(total);
    }
    return weighted_sum(ptrs, w);
}

namespace {

std::vector<std::pair<int, int>> sample_negative_edges(const Graph& g, size_t count, Rng& rng) {
    std::set<std::pair<int, int>> existing(g.edges.begin(), g.edges.end());
    std::vector<std::pair<int, int>> neg;
    neg.reserve(count);
    const long max_attempts = 1000 + 200 * static_cast<long>(count);
    long attempts = 0;
    while (neg.size() < count) {
        if (++attempts > max_attempts)
            throw std::invalid_argument("graph too dense for negative edge sampling");
        int u = static_cast<int>(rng.integer(g.num_nodes));
        int v = static_cast<int>(rng.integer(g.num_nodes));
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        if (existing.count({u, v})) continue;
        neg.emplace_back(u, v);
    }
    return neg;
}

double acc_or_nan(const ParamSet& params, const ParamSet* masks, const NormalizedAdjacency& adj,
                  const Matrix& X, const std::vector<int>& labels, const std::vector<int>& ids) {
    if (ids.empty()) return nan_value();
    return predict_accuracy(params, masks, adj, X, labels, ids);
}

double auc_or_nan(const ForwardResult& fwd, const std::vector<std::pair<int, int>>& pos,
                  const std::vector<std::pair<int, int>>& neg) {
    if (pos.empty() || neg.empty()) return nan_value();
    std::vector<double> scores = edge_scores(fwd.h, pos);
    const std::vector<double> sneg = edge_scores(fwd.h, neg);
    scores.insert(scores.end(), sneg.begin(), sneg.end());
    std::vector<int> labels(pos.size(), 1);
    labels.insert(labels.end(), neg.size(), 0);
    return roc_auc(scores, labels);
}

}  // namespace

LocalUpdateResult local_update(ClientState& c, const ParamSet* incoming, int epochs,
                               const RunConfig& cfg, const ProbeContext& probe, int round) {
    const StrategyKind kind = cfg.strategy.kind;
    if (incoming) {
        if (!incoming->all_finite())
            throw std::runtime_error("client " + std::to_string(c.client_id) +
                                     ": non-finite incoming parameters");
        if (kind == StrategyKind::FedPer) {
            // personalized classifier layers are never overwritten
            for (int t = 0; t < 4; ++t) c.params.tensor(t) = incoming->tensor(t);
        } else {
            c.params = *incoming;
        }
        c.last_anchor = *incoming;
    }

    const bool use_masks = kind == StrategyKind::FedPub;
    // lambda1 = 0 turns the sparse-mask component off entirely, so the masks
    // stay at their all-ones initialization.
    const bool train_masks = use_masks && cfg.training.lambda1 > 0.0;
    const double lambda1 = use_masks ? cfg.training.lambda1 : 0.0;
    double lambda2 = 0.0;
    if (kind == StrategyKind::FedPub) lambda2 = cfg.training.lambda2;
    if (kind == StrategyKind::FedProx) lambda2 = 0.5 * cfg.training.fedprox_mu;

    LossInputs in;
    in.adj = &c.adj;
    in.X = &c.subgraph.features;
    in.labels = &c.subgraph.labels;
    in.train_ids = &c.split.train_ids;
    in.task = cfg.task == TaskKind::LinkPrediction ? Task::LinkPrediction
                                                   : Task::NodeClassification;
    in.pos_edges = &c.train_pos;

    for (int e = 0; e < epochs; ++e) {
        std::vector<std::pair<int, int>> train_neg;
        if (in.task == Task::LinkPrediction) {
            Rng rng(derive_seed(cfg.seed, "negsample", c.client_id,
                                static_cast<int64_t>(round) * 10000 + e));
            train_neg = sample_negative_edges(c.subgraph, c.train_pos.size(), rng);
            in.neg_edges = &train_neg;
        }
        // Proximal gradient step on the composite objective: Adam on the
        // smooth terms, then the exact l1 shrinkage operator on the masks.
        // Coupling the l1 subgradient into Adam instead would normalize
        // lambda1 away and lose its control over sparsity.
        const LossAndGrads lg = loss_and_grads(c.params, use_masks ? &c.masks : nullptr,
                                               c.last_anchor, in, 0.0, lambda2);
        adam_step(c.adam_params, c.params, lg.grad_params, cfg.training.lr);
        if (train_masks) {
            ParamSet gm = lg.grad_masks;
            if (!cfg.model.mask_classifier) {
                gm.wc.fill(0.0);
                gm.bc.fill(0.0);
            }
            adam_step(c.adam_masks, c.masks, gm, cfg.training.lr);
            const double shrink = cfg.training.lr * lambda1;
            for (int t = 0; t < ParamSet::kNumTensors; ++t) {
                if (!cfg.model.mask_classifier && t >= 4) continue;
                for (double& mu : c.masks.tensor(t).a) {
                    const double mag = std::fabs(mu) - shrink;
                    mu = mag > 0.0 ? (mu > 0.0 ? mag : -mag) : 0.0;
                }
            }
        }
    }

    LocalUpdateResult out;
    RoundRecord& rec = out.record;
    rec.round = round;
    rec.client_id = c.client_id;
    rec.strategy = to_string(kind);
    rec.params_received =
        (incoming && kind != StrategyKind::Local) ? incoming->nonzero_count() : 0;

    // Evaluation view of the model: fedpub predicts with the thresholded
    // effective weights, everything else with the raw weights.
    ParamSet eval_params;
    if (use_masks) {
        ThresholdResult thr =
            apply_mask_threshold(c.params, c.masks, cfg.training.mask_threshold);
        rec.sparsity = thr.sparsity;
        eval_params = std::move(thr.params);
    } else {
        eval_params = c.params;
    }

    if (in.task == Task::NodeClassification) {
        rec.train_acc = acc_or_nan(eval_params, nullptr, c.adj, c.subgraph.features,
                                   c.subgraph.labels, c.split.train_ids);
        rec.val_acc = acc_or_nan(eval_params, nullptr, c.adj, c.subgraph.features,
                                 c.subgraph.labels, c.split.val_ids);
        rec.test_acc = acc_or_nan(eval_params, nullptr, c.adj, c.subgraph.features,
                                  c.subgraph.labels, c.split.test_ids);
    } else {
        const ForwardResult fwd = forward(eval_params, nullptr, c.adj, c.subgraph.features);
        Rng rng(derive_seed(cfg.seed, "negeval", c.client_id, round));
        const auto train_eval_neg = sample_negative_edges(c.subgraph, c.train_pos.size(), rng);
        rec.train_acc = auc_or_nan(fwd, c.train_pos, train_eval_neg);
        rec.val_acc = auc_or_nan(fwd, c.val_pos, c.val_neg);
        rec.test_acc = auc_or_nan(fwd, c.test_pos, c.test_neg);
    }

    {
        std::vector<std::pair<int, int>> loss_neg;
        if (in.task == Task::LinkPrediction) {
            Rng rng(derive_seed(cfg.seed, "negloss", c.client_id, round));
            loss_neg = sample_negative_edges(c.subgraph, c.train_pos.size(), rng);
            in.neg_edges = &loss_neg;
        }
        const LossAndGrads lg = loss_and_grads(c.params, use_masks ? &c.masks : nullptr,
                                               c.last_anchor, in, lambda1, lambda2);
        rec.train_loss = lg.loss.total;
        rec.task_loss = lg.loss.task_loss;
        rec.l1_term = lg.loss.l1_term;
        rec.prox_term = lg.loss.prox_term;
    }

    if (kind == StrategyKind::Local || kind == StrategyKind::Oracle) {
        rec.params_sent = 0;
        return out;
    }

    ClientPayload payload;
    if (use_masks) {
        payload.params = eval_params;  // thresholded effective weights
    } else if (kind == StrategyKind::FedPer) {
        payload.params = c.params;
        payload.params.wc.fill(0.0);
        payload.params.bc.fill(0.0);
        payload.classifier_transmitted = false;
    } else {
        payload.params = c.params;
    }
    payload.train_count = in.task == Task::NodeClassification
                              ? static_cast<long>(c.split.train_ids.size())
                              : static_cast<long>(c.train_pos.size());
    payload.nonzero = payload.params.nonzero_count();
    const Matrix& probe_feats = probe.per_client_features.empty()
                                    ? probe.graph.features
                                    : probe.per_client_features[c.client_id];
    payload.embedding = functional_embedding(payload.params, nullptr, probe.adj, probe_feats,
                                             cfg.strategy.embedding_source);
    payload.label_dist = label_distribution(c.subgraph);
    rec.params_sent = payload.nonzero;
    out.payload = std::move(payload);
    return out;
}

namespace {

Matrix compute_similarity_matrix(const ServerState& server, const RunConfig& cfg) {
    const int k = static_cast<int>(server.bank.size());
    Matrix S(k, k);
    std::vector<ParamSet> deltas;
    if (cfg.strategy.similarity_source == SimilaritySource::Gradient) {
        deltas.reserve(k);
        for (int i = 0; i < k; ++i)
            deltas.push_back(param_delta(server.last_dispatch[i], server.bank[i].params));
    }
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) pairs.emplace_back(i, j);

#pragma omp parallel for schedule(dynamic)
    for (long p = 0; p < static_cast<long>(pairs.size()); ++p) {
        const auto [i, j] = pairs[p];
        double s = 0.0;
        switch (cfg.strategy.similarity_source) {
            case SimilaritySource::Functional:
                s = cosine_similarity(server.bank[i].embedding, server.bank[j].embedding);
                break;
            case SimilaritySource::Parameter:
                s = parameter_similarity(server.bank[i].params, server.bank[j].params);
                break;
            case SimilaritySource::Gradient:
                s = gradient_similarity(deltas[i], deltas[j]);
                break;
            case SimilaritySource::Label:
                s = 1.0 - js_divergence(server.bank[i].label_dist, server.bank[j].label_dist);
                break;
        }
        S(i, j) = s;
        S(j, i) = s;
    }
    for (int i = 0; i < k; ++i) S(i, i) = 1.0;
    return S;
}

}  // namespace

std::vector<RoundRecord> run_round(ServerState& server, std::vector<ClientState>& clients,
                                   const RunConfig& cfg) {
    const int k = static_cast<int>(clients.size());
    const int round = server.round + 1;
    const StrategyKind kind = cfg.strategy.kind;

    std::vector<std::optional<ParamSet>> dispatch(k);
    if (round == 1) {
        for (int i = 0; i < k; ++i) dispatch[i] = server.init_params;
    } else if (kind == StrategyKind::FedPub) {
        std::vector<ParamSet> bank_params;
        bank_params.reserve(k);
        for (const auto& p : server.bank) bank_params.push_back(p.params);
        std::vector<ParamSet> agg = aggregate_personalized(bank_params, server.alphas);
        for (int i = 0; i < k; ++i) dispatch[i] = std::move(agg[i]);
    } else if (kind == StrategyKind::FedAvg || kind == StrategyKind::FedProx ||
               kind == StrategyKind::FedPer) {
        std::vector<ParamSet> bank_params;
        std::vector<long> counts;
        for (const auto& p : server.bank) {
            bank_params.push_back(p.params);
            counts.push_back(p.train_count);
        }
        const ParamSet global = fedavg_aggregate(bank_params, counts);
        for (int i = 0; i < k; ++i) dispatch[i] = global;
    }
    // Local: nothing dispatched after round 1.

    server.last_dispatch.clear();
    for (int i = 0; i < k; ++i)
        server.last_dispatch.push_back(dispatch[i] ? *dispatch[i] : clients[i].params);

    std::vector<RoundRecord> records(k);
    std::vector<std::optional<ClientPayload>> payloads(k);
    std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < k; ++i) {
        try {
            LocalUpdateResult res =
                local_update(clients[i], dispatch[i] ? &*dispatch[i] : nullptr,
                             cfg.training.local_epochs, cfg, server.probe, round);
            records[i] = std::move(res.record);
            payloads[i] = std::move(res.payload);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    if (kind != StrategyKind::Local && kind != StrategyKind::Oracle) {
        server.bank.clear();
        for (int i = 0; i < k; ++i) server.bank.push_back(std::move(*payloads[i]));
        server.similarity = compute_similarity_matrix(server, cfg);
        server.alphas = Matrix(k, k);
        const double tau = cfg.resolved_tau();
        AggregationMode mode{cfg.strategy.community_mode, cfg.strategy.explicit_threshold};
        for (int i = 0; i < k; ++i) {
            std::vector<double> row(k);
            for (int j = 0; j < k; ++j) row[j] = server.similarity(i, j);
            const std::vector<double> w = aggregation_weights(row, i, tau, mode);
            for (int j = 0; j < k; ++j) server.alphas(i, j) = w[j];
        }
    }
    server.round = round;
    return records;
}

Graph build_graph(const RunConfig& cfg) {
    if (!cfg.graph_file.empty()) return load_graph(cfg.graph_file);
    const SyntheticSpec& s = *cfg.synthetic;
    const uint64_t seed = derive_seed(cfg.seed, "graph");
    if (s.kind == "sbm")
        return generate_sbm(s.blocks, s.nodes_per_block, s.p_in, s.p_out, s.feat_dim, seed);
    if (s.kind == "er") return generate_er(s.er_nodes, s.er_p, s.feat_dim, seed);
    if (s.kind == "one") return generate_single_node(s.feat_dim, seed);
    if (s.kind == "community_sbm") {
        if (s.clients_per_community.empty())
            throw std::invalid_argument("community_sbm requires clients_per_community");
        return generate_community_sbm(s.clients_per_community, s.nodes_per_client, s.p_intra,
                                      s.p_inter, s.feat_dim, seed);
    }
    throw std::invalid_argument("unknown synthetic kind: " + s.kind);
}

Partition build_partition(const RunConfig& cfg, const Graph& g) {
    const uint64_t seed = derive_seed(cfg.seed, "partition");
    const PartitionSpec& p = cfg.partition;
    if (p.mode == "disjoint") return partition_balanced(g, p.k, seed);
    if (p.mode == "louvain") return partition_louvain(g, p.k, seed);
    if (p.mode == "random") return partition_random(g, p.k, seed);
    if (p.mode == "overlapping")
        return make_overlapping(g, p.base_parts, p.samples_per_part, p.node_frac, seed);
    if (p.mode == "imbalanced") return make_imbalanced(g, p.fine_parts, p.group_sizes, seed);
    if (p.mode == "blocks") {
        if (!cfg.synthetic || cfg.synthetic->kind != "community_sbm")
            throw std::invalid_argument("partition mode 'blocks' requires a community_sbm graph");
        const int per = cfg.synthetic->nodes_per_client;
        if (g.num_nodes % per != 0)
            throw std::invalid_argument("blocks partition: node count not divisible");
        Partition out;
        out.mode = PartitionMode::Disjoint;
        for (int start = 0; start < g.num_nodes; start += per) {
            std::vector<int> set(per);
            for (int i = 0; i < per; ++i) set[i] = start + i;
            out.client_nodes.push_back(std::move(set));
        }
        return out;
    }
    throw std::invalid_argument("unknown partition mode: " + p.mode);
}

std::vector<ClientState> build_clients(const RunConfig& cfg, const Graph& g, const Partition& p) {
    const int k = p.num_clients();
    std::vector<ClientState> clients(k);
    for (int i = 0; i < k; ++i) {
        ClientState& c = clients[i];
        c.client_id = i;
        c.subgraph = induced_subgraph(g, p.client_nodes[i]);
        c.adj = normalized_adjacency(c.subgraph);
        c.split = split_nodes(c.subgraph, cfg.training.train_frac, cfg.training.val_frac,
                              derive_seed(cfg.seed, "split", i));
        c.params = ParamSet::shaped(g.feat_dim(), cfg.model.hidden, g.num_classes);
        c.masks = ParamSet::like(c.params, 1.0);
        c.adam_params = AdamState::like(c.params);
        c.adam_masks = AdamState::like(c.params);
        c.last_anchor = ParamSet::like(c.params);
        if (cfg.task == TaskKind::LinkPrediction) {
            std::vector<int> order(c.subgraph.edges.size());
            for (size_t e = 0; e < order.size(); ++e) order[e] = static_cast<int>(e);
            Rng rng(derive_seed(cfg.seed, "edgesplit", i));
            rng.shuffle(order);
            const long m = static_cast<long>(order.size());
            const long n_train = std::llround(cfg.training.train_frac * m);
            const long n_val = std::llround(cfg.training.val_frac * m);
            for (long e = 0; e < m; ++e) {
                const auto& edge = c.subgraph.edges[order[e]];
                if (e < n_train)
                    c.train_pos.push_back(edge);
                else if (e < std::min(m, n_train + n_val))
                    c.val_pos.push_back(edge);
                else
                    c.test_pos.push_back(edge);
            }
            Rng neg_rng(derive_seed(cfg.seed, "negfixed", i));
            if (!c.val_pos.empty())
                c.val_neg = sample_negative_edges(c.subgraph, c.val_pos.size(), neg_rng);
            if (!c.test_pos.empty())
                c.test_neg = sample_negative_edges(c.subgraph, c.test_pos.size(), neg_rng);
        }
    }
    return clients;
}

ProbeContext build_probe(const RunConfig& cfg, const std::vector<ClientState>& clients,
                         int feat_dim) {
    ProbeContext probe;
    const uint64_t seed = derive_seed(cfg.seed, "probe");
    const ProbeSpec& ps = cfg.probe;
    switch (ps.variant) {
        case ProbeVariant::Sbm:
        case ProbeVariant::Feature:
            probe.graph =
                generate_sbm(ps.blocks, ps.nodes_per_block, ps.p_in, ps.p_out, feat_dim, seed);
            break;
        case ProbeVariant::Er:
            probe.graph = generate_er(ps.blocks * ps.nodes_per_block, ps.p_in, feat_dim, seed);
            break;
        case ProbeVariant::One:
            probe.graph = generate_single_node(feat_dim, seed);
            break;
    }
    probe.adj = normalized_adjacency(probe.graph);
    if (ps.variant == ProbeVariant::Feature) {
        // same structure for everyone, node features replaced by the client's
        // mean feature vector tiled over all probe nodes
        probe.per_client_features.reserve(clients.size());
        for (const ClientState& c : clients) {
            const Matrix mean = column_means(c.subgraph.features);
            Matrix tiled(probe.graph.num_nodes, feat_dim);
            for (int r = 0; r < tiled.rows; ++r)
                for (int j = 0; j < feat_dim; ++j) tiled(r, j) = mean.a[j];
            probe.per_client_features.push_back(std::move(tiled));
        }
    }
    return probe;
}

void save_checkpoint(const ParamSet& params, const ParamSet* masks, const std::string& path) {
    nlohmann::json j;
    auto dump_set = [](const ParamSet& p) {
        auto arr = nlohmann::json::array();
        for (int t = 0; t < ParamSet::kNumTensors; ++t) {
            const Matrix& m = p.tensor(t);
            arr.push_back({{"name", ParamSet::tensor_name(t)},
                           {"shape", {m.rows, m.cols}},
                           {"values", m.a}});
        }
        return arr;
    };
    j["params"] = dump_set(params);
    if (masks) j["masks"] = dump_set(*masks);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

void load_checkpoint(const std::string& path, ParamSet& params, ParamSet* masks) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    auto read_set = [](const nlohmann::json& arr, ParamSet& p) {
        for (int t = 0; t < ParamSet::kNumTensors; ++t) {
            const auto& e = arr.at(t);
            if (e.at("name").get<std::string>() != ParamSet::tensor_name(t))
                throw std::runtime_error("checkpoint tensor order mismatch");
            Matrix m(e.at("shape").at(0).get<int>(), e.at("shape").at(1).get<int>());
            m.a = e.at("values").get<std::vector<double>>();
            if (m.a.size() != static_cast<size_t>(m.rows) * m.cols)
                throw std::runtime_error("checkpoint tensor size mismatch");
            p.tensor(t) = std::move(m);
        }
    };
    read_set(j.at("params"), params);
    if (masks && j.contains("masks")) read_set(j.at("masks"), *masks);
}

namespace {

void write_manifest(const RunConfig& cfg, const std::string& path) {
    nlohmann::json j;
    RunConfig resolved = cfg;
    if (!resolved.graph_file.empty())
        resolved.graph_file = fs::absolute(resolved.graph_file).string();
    j["config"] = nlohmann::json::parse(serialize_config(resolved));
    j["version"] = "0.1.0";
    const auto now = std::chrono::system_clock::now();
    j["wall_clock_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    j["seeds"] = {{"graph", derive_seed(cfg.seed, "graph")},
                  {"partition", derive_seed(cfg.seed, "partition")},
                  {"init", derive_seed(cfg.seed, "init")},
                  {"probe", derive_seed(cfg.seed, "probe")},
                  {"split_base", derive_seed(cfg.seed, "split")}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

std::string client_checkpoint_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "client_%03d.json", i);
    return buf;
}

// The oracle trains one model on the global graph (union of the clients'
// train nodes as supervision) and is evaluated per client, with the global
// adjacency, on each client's split.
std::vector<RoundRecord> run_oracle_experiment(const RunConfig& cfg, const Graph& g,
                                               std::vector<ClientState>& clients,
                                               ServerState& server, std::ofstream& metrics,
                                               const RoundObserver& observer) {
    if (cfg.task == TaskKind::LinkPrediction)
        throw std::invalid_argument("oracle strategy supports node_clf only");
    const NormalizedAdjacency adj = normalized_adjacency(g);
    std::vector<int> global_train;
    std::vector<std::vector<int>> train_g(clients.size()), val_g(clients.size()),
        test_g(clients.size());
    for (size_t i = 0; i < clients.size(); ++i) {
        const ClientState& c = clients[i];
        auto to_global = [&](const std::vector<int>& ids) {
            std::vector<int> out;
            out.reserve(ids.size());
            for (int v : ids) out.push_back(c.subgraph.node_ids[v]);
            std::sort(out.begin(), out.end());
            return out;
        };
        train_g[i] = to_global(c.split.train_ids);
        val_g[i] = to_global(c.split.val_ids);
        test_g[i] = to_global(c.split.test_ids);
        global_train.insert(global_train.end(), train_g[i].begin(), train_g[i].end());
    }
    std::sort(global_train.begin(), global_train.end());
    global_train.erase(std::unique(global_train.begin(), global_train.end()),
                       global_train.end());

    ParamSet params = server.init_params;
    AdamState adam = AdamState::like(params);
    LossInputs in;
    in.adj = &adj;
    in.X = &g.features;
    in.labels = &g.labels;
    in.train_ids = &global_train;

    std::vector<RoundRecord> all;
    for (int round = 1; round <= cfg.training.rounds; ++round) {
        LossBreakdown last_loss;
        for (int e = 0; e < cfg.training.local_epochs; ++e) {
            const LossAndGrads lg = loss_and_grads(params, nullptr, params, in, 0.0, 0.0);
            adam_step(adam, params, lg.grad_params, cfg.training.lr);
            last_loss = lg.loss;
        }
        const ForwardResult fwd = forward(params, nullptr, adj, g.features);
        auto acc_on = [&](const std::vector<int>& ids) {
            if (ids.empty()) return nan_value();
            long ok = 0;
            for (int v : ids) {
                int best = 0;
                for (int c = 1; c < fwd.logits.cols; ++c)
                    if (fwd.logits(v, c) > fwd.logits(v, best)) best = c;
                if (best == g.labels[v]) ++ok;
            }
            return static_cast<double>(ok) / static_cast<double>(ids.size());
        };
        std::vector<RoundRecord> recs(clients.size());
        for (size_t i = 0; i < clients.size(); ++i) {
            RoundRecord& r = recs[i];
            r.round = round;
            r.client_id = static_cast<int>(i);
            r.strategy = "oracle";
            r.train_loss = last_loss.total;
            r.task_loss = last_loss.task_loss;
            r.train_acc = acc_on(train_g[i]);
            r.val_acc = acc_on(val_g[i]);
            r.test_acc = acc_on(test_g[i]);
            metrics << to_csv_row(r) << "\n";
        }
        metrics.flush();
        server.round = round;
        if (observer) observer(round, server, clients, recs);
        all.insert(all.end(), recs.begin(), recs.end());
    }
    save_checkpoint(params, nullptr,
                    (fs::path(cfg.output_dir) / "checkpoints" / "oracle.json").string());
    return all;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, const RoundObserver& observer) {
    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir / "checkpoints");
    fs::create_directories(out_dir / "similarity");
    fs::create_directories(out_dir / "report");

    Graph g = build_graph(cfg);
    Partition part = build_partition(cfg, g);
    std::vector<ClientState> clients = build_clients(cfg, g, part);

    ServerState server;
    server.init_params =
        glorot_init(g.feat_dim(), cfg.model.hidden, g.num_classes, derive_seed(cfg.seed, "init"));
    server.probe = build_probe(cfg, clients, g.feat_dim());

    write_manifest(cfg, (out_dir / "manifest.json").string());
    save_partition(part, (out_dir / "partition.json").string());
    save_checkpoint(server.init_params, nullptr, (out_dir / "checkpoints" / "init.json").string());

    std::ofstream metrics(out_dir / "metrics.csv");
    if (!metrics) throw std::runtime_error("cannot write metrics.csv in " + cfg.output_dir);
    metrics << round_record_header() << "\n";

    ExperimentResult result;
    result.run_dir = cfg.output_dir;

    if (cfg.strategy.kind == StrategyKind::Oracle) {
        result.records = run_oracle_experiment(cfg, g, clients, server, metrics, observer);
        result.clients = std::move(clients);
        result.server = std::move(server);
        return result;
    }

    for (int round = 1; round <= cfg.training.rounds; ++round) {
        std::vector<RoundRecord> recs = run_round(server, clients, cfg);
        for (const RoundRecord& r : recs) metrics << to_csv_row(r) << "\n";
        metrics.flush();
        if (std::find(cfg.similarity_rounds.begin(), cfg.similarity_rounds.end(), round) !=
                cfg.similarity_rounds.end() &&
            server.similarity.rows > 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "similarity_round_%d", round);
            write_matrix_csv(server.similarity,
                             (out_dir / "similarity" / (std::string(name) + ".csv")).string());
            write_matrix_pgm(server.similarity,
                             (out_dir / "similarity" / (std::string(name) + ".pgm")).string());
        }
        if (observer) observer(round, server, clients, recs);
        result.records.insert(result.records.end(), recs.begin(), recs.end());
    }
    if (cfg.training.rounds > 0) {
        for (const ClientState& c : clients)
            save_checkpoint(c.params, &c.masks,
                            (out_dir / "checkpoints" / client_checkpoint_name(c.client_id))
                                .string());
    }
    result.clients = std::move(clients);
    result.server = std::move(server);
    return result;
}

}  // namespace fedpub
