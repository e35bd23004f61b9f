#include "fedpub/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "fedpub/config.hpp"
#include "json.hpp"

namespace fedpub {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

Matrix label_similarity(const Partition& p, const std::vector<int>& labels, int num_classes) {
    const int k = p.num_clients();
    if (k < 2) throw std::invalid_argument("label_similarity needs at least two clients");
    std::vector<std::vector<double>> dist(k, std::vector<double>(num_classes, 0.0));
    for (int i = 0; i < k; ++i) {
        for (int v : p.client_nodes[i]) dist[i][labels[v]] += 1.0;
        for (double& x : dist[i]) x /= static_cast<double>(p.client_nodes[i].size());
    }
    Matrix L(k, k);
    for (int i = 0; i < k; ++i) {
        L(i, i) = 1.0;
        for (int j = i + 1; j < k; ++j) {
            const double s = 1.0 - js_divergence(dist[i], dist[j]);
            L(i, j) = s;
            L(j, i) = s;
        }
    }
    return L;
}

std::optional<double> similarity_label_correlation(const Matrix& S, const Matrix& L) {
    if (!S.same_shape(L)) throw std::invalid_argument("correlation: shape mismatch");
    if (S.rows < 3) throw std::invalid_argument("correlation needs K >= 3");
    std::vector<double> x, y;
    for (int i = 0; i < S.rows; ++i)
        for (int j = i + 1; j < S.cols; ++j) {
            x.push_back(S(i, j));
            y.push_back(L(i, j));
        }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

NeighborReport neighbor_evaluation(const std::vector<ClientState>& clients,
                                   const std::vector<ParamSet>& eval_params,
                                   const MissingEdgeMatrix& missing) {
    const int k = static_cast<int>(clients.size());
    if (k < 2) throw std::invalid_argument("neighbor_evaluation needs K >= 2");
    NeighborReport rep;
    for (int i = 0; i < k; ++i) {
        NeighborEntry e;
        e.client_id = i;
        long best = 0;
        for (int j = 0; j < k; ++j) {
            if (j == i) continue;
            if (missing.at(i, j) > best) {
                best = missing.at(i, j);
                e.neighbor_id = j;
            } else if (missing.at(i, j) == best && best > 0 && j < e.neighbor_id) {
                e.neighbor_id = j;
            }
        }
        const ClientState& self = clients[i];
        if (!self.split.test_ids.empty())
            e.local_acc = predict_accuracy(eval_params[i], nullptr, self.adj,
                                           self.subgraph.features, self.subgraph.labels,
                                           self.split.test_ids);
        if (e.neighbor_id >= 0) {
            const ClientState& nb = clients[e.neighbor_id];
            if (!nb.split.test_ids.empty())
                e.neighbor_acc =
                    predict_accuracy(eval_params[i], nullptr, nb.adj, nb.subgraph.features,
                                     nb.subgraph.labels, nb.split.test_ids);
        }
        rep.entries.push_back(e);
    }
    return rep;
}

double mask_overlap(const ParamSet& masks_i, const ParamSet& masks_j, double threshold) {
    if (!masks_i.same_shapes(masks_j)) throw std::invalid_argument("mask_overlap: shape mismatch");
    long both = 0, total = 0;
    for (int t = 0; t < ParamSet::kNumTensors; ++t) {
        const auto& a = masks_i.tensor(t).a;
        const auto& b = masks_j.tensor(t).a;
        for (size_t i = 0; i < a.size(); ++i) {
            ++total;
            const bool ai = std::fabs(a[i]) >= threshold && a[i] != 0.0;
            const bool bi = std::fabs(b[i]) >= threshold && b[i] != 0.0;
            if (ai && bi) ++both;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(total);
}

std::vector<CommunicationSummary> communication_summary(const std::vector<RoundRecord>& records,
                                                        long total_params) {
    if (records.empty()) throw std::invalid_argument("communication_summary: no records");
    struct Acc {
        long sent = 0, received = 0, rows = 0;
        double sparsity = 0.0;
        int max_round = 0;
        std::map<int, int> clients_per_round;
    };
    std::map<std::string, Acc> acc;
    for (const RoundRecord& r : records) {
        Acc& a = acc[r.strategy];
        a.sent += r.params_sent;
        a.received += r.params_received;
        a.sparsity += r.sparsity;
        ++a.rows;
        a.max_round = std::max(a.max_round, r.round);
        a.clients_per_round[r.round] += 1;
    }
    std::vector<CommunicationSummary> out;
    for (auto& [name, a] : acc) {
        CommunicationSummary s;
        s.strategy = name;
        s.total_sent = a.sent;
        s.total_received = a.received;
        s.mean_sparsity = a.sparsity / static_cast<double>(a.rows);
        // fedavg transmits every parameter both directions for every client
        // in every round; that total is the 100% reference.
        const double baseline = 2.0 * static_cast<double>(total_params) * a.rows;
        s.relative_cost_pct = 100.0 * static_cast<double>(a.sent + a.received) / baseline;
        out.push_back(std::move(s));
    }
    return out;
}

void write_matrix_csv(const Matrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) {
            if (j) out << ",";
            out << fmt(m(i, j));
        }
        out << "\n";
    }
}

Matrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return Matrix();
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) m(i, j) = rows[i][j];
    return m;
}

void write_matrix_pgm(const Matrix& m, const std::string& path) {
    double lo = m.a.empty() ? 0.0 : m.a[0], hi = lo;
    for (double v : m.a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P2\n";
    out << "# min=" << fmt(lo) << " max=" << fmt(hi)
        << " linear 8-bit quantization, 255 = max\n";
    out << m.cols << " " << m.rows << "\n255\n";
    const double span = hi - lo;
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) {
            const int v =
                span == 0.0
                    ? 0
                    : static_cast<int>(std::lround(255.0 * (m(i, j) - lo) / span));
            if (j) out << " ";
            out << v;
        }
        out << "\n";
    }
}

std::vector<RoundRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty metrics file: " + path);
    if (line != round_record_header())
        throw std::runtime_error("unexpected metrics header in " + path);
    std::vector<RoundRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 13) throw std::runtime_error("bad metrics row: " + line);
        RoundRecord r;
        r.round = std::stoi(cells[0]);
        r.client_id = std::stoi(cells[1]);
        r.strategy = cells[2];
        r.train_loss = std::stod(cells[3]);
        r.task_loss = std::stod(cells[4]);
        r.l1_term = std::stod(cells[5]);
        r.prox_term = std::stod(cells[6]);
        r.train_acc = std::stod(cells[7]);
        r.val_acc = std::stod(cells[8]);
        r.test_acc = std::stod(cells[9]);
        r.sparsity = std::stod(cells[10]);
        r.params_sent = std::stol(cells[11]);
        r.params_received = std::stol(cells[12]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_run_report(const std::string& run_dir) {
    const fs::path dir(run_dir);
    const fs::path report_dir = dir / "report";
    fs::create_directories(report_dir);

    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("no manifest.json in " + run_dir);
    nlohmann::json manifest;
    mf >> manifest;
    RunConfig cfg = parse_config(manifest.at("config").dump());

    const Graph g = build_graph(cfg);
    const Partition part = load_partition((dir / "partition.json").string());
    std::vector<ClientState> clients = build_clients(cfg, g, part);

    // label similarity + copies of the stored functional-similarity snapshots
    Matrix label_sim;
    if (part.num_clients() >= 2) {
        label_sim = label_similarity(part, g.labels, g.num_classes);
        write_matrix_csv(label_sim, (report_dir / "label_similarity.csv").string());
    }
    std::vector<std::pair<int, Matrix>> snapshots;
    if (fs::exists(dir / "similarity")) {
        for (const auto& entry : fs::directory_iterator(dir / "similarity")) {
            const std::string name = entry.path().filename().string();
            int round = 0;
            if (name.size() > 4 && name.substr(name.size() - 4) == ".csv" &&
                std::sscanf(name.c_str(), "similarity_round_%d", &round) == 1) {
                Matrix m = read_matrix_csv(entry.path().string());
                write_matrix_csv(m, (report_dir / name).string());
                write_matrix_pgm(
                    m, (report_dir / (name.substr(0, name.size() - 4) + ".pgm")).string());
                snapshots.emplace_back(round, std::move(m));
            }
        }
    }
    std::sort(snapshots.begin(), snapshots.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // correlation between functional similarity and label similarity
    {
        std::ofstream out(report_dir / "correlation.txt");
        if (snapshots.empty()) {
            out << "no similarity snapshots recorded\n";
        } else {
            for (const auto& [round, S] : snapshots) {
                out << "round " << round << ": ";
                if (label_sim.rows != S.rows || S.rows < 3) {
                    out << "undefined (needs K >= 3 and matching label matrix)\n";
                    continue;
                }
                const auto corr = similarity_label_correlation(S, label_sim);
                if (corr)
                    out << fmt(*corr) << "\n";
                else
                    out << "undefined (zero variance)\n";
            }
        }
    }

    // neighbor evaluation from the final checkpoints
    {
        std::vector<ParamSet> eval_params;
        bool have_all = part.num_clients() >= 2;
        for (int i = 0; i < part.num_clients() && have_all; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "client_%03d.json", i);
            const fs::path path = dir / "checkpoints" / name;
            if (!fs::exists(path)) {
                have_all = false;
                break;
            }
            ParamSet params = ParamSet::shaped(g.feat_dim(), cfg.model.hidden, g.num_classes);
            ParamSet masks = ParamSet::like(params, 1.0);
            load_checkpoint(path.string(), params, &masks);
            if (cfg.strategy.kind == StrategyKind::FedPub) {
                eval_params.push_back(
                    apply_mask_threshold(params, masks, cfg.training.mask_threshold).params);
            } else {
                eval_params.push_back(std::move(params));
            }
        }
        if (have_all) {
            const MissingEdgeMatrix missing = missing_edges(g, part);
            const NeighborReport rep = neighbor_evaluation(clients, eval_params, missing);
            std::ofstream out(report_dir / "neighbor_report.csv");
            out << "client_id,neighbor_id,local_acc,neighbor_acc,note\n";
            for (const NeighborEntry& e : rep.entries) {
                out << e.client_id << "," << e.neighbor_id << "," << fmt(e.local_acc) << ","
                    << fmt(e.neighbor_acc) << ","
                    << (e.neighbor_id < 0 ? "no cut edges; skipped" : "") << "\n";
            }
        }
    }

    // communication summary
    {
        const std::vector<RoundRecord> records = read_metrics_csv((dir / "metrics.csv").string());
        if (!records.empty()) {
            const long total_params =
                ParamSet::shaped(g.feat_dim(), cfg.model.hidden, g.num_classes).total_params();
            const auto summary = communication_summary(records, total_params);
            std::ofstream out(report_dir / "comm_summary.csv");
            out << "strategy,total_params_sent,total_params_received,relative_cost_pct,"
                   "mean_sparsity\n";
            for (const CommunicationSummary& s : summary)
                out << s.strategy << "," << s.total_sent << "," << s.total_received << ","
                    << fmt(s.relative_cost_pct) << "," << fmt(s.mean_sparsity) << "\n";
        }
    }
}

}  // namespace fedpub
