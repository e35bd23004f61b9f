#include "fedpub/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fedpub {

using nlohmann::json;

std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::FedPub: return "fedpub";
        case StrategyKind::FedAvg: return "fedavg";
        case StrategyKind::FedProx: return "fedprox";
        case StrategyKind::FedPer: return "fedper";
        case StrategyKind::Local: return "local";
        case StrategyKind::Oracle: return "oracle";
    }
    return "fedpub";
}

StrategyKind strategy_kind_from_string(const std::string& s) {
    if (s == "fedpub") return StrategyKind::FedPub;
    if (s == "fedavg") return StrategyKind::FedAvg;
    if (s == "fedprox") return StrategyKind::FedProx;
    if (s == "fedper") return StrategyKind::FedPer;
    if (s == "local") return StrategyKind::Local;
    if (s == "oracle") return StrategyKind::Oracle;
    throw std::invalid_argument("unknown strategy kind: " + s +
                                " (valid: fedpub fedavg fedprox fedper local oracle)");
}

double RunConfig::resolved_tau() const {
    if (strategy.tau) return *strategy.tau;
    return partition.mode == "overlapping" ? 5.0 : 3.0;
}

namespace {

void check_known_keys(const json& j, const std::string& where,
                      const std::vector<std::string>& valid) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(valid.begin(), valid.end(), it.key()) == valid.end()) {
            std::ostringstream msg;
            msg << "unknown key \"" << it.key() << "\" in " << where << "; valid keys:";
            for (const auto& k : valid) msg << " " << k;
            throw std::invalid_argument(msg.str());
        }
    }
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

template <typename T>
void read_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

SimilaritySource similarity_source_from_string(const std::string& s) {
    if (s == "functional") return SimilaritySource::Functional;
    if (s == "parameter") return SimilaritySource::Parameter;
    if (s == "gradient") return SimilaritySource::Gradient;
    if (s == "label") return SimilaritySource::Label;
    throw std::invalid_argument("unknown similarity_source: " + s +
                                " (valid: functional parameter gradient label)");
}

std::string to_string(SimilaritySource s) {
    switch (s) {
        case SimilaritySource::Functional: return "functional";
        case SimilaritySource::Parameter: return "parameter";
        case SimilaritySource::Gradient: return "gradient";
        case SimilaritySource::Label: return "label";
    }
    return "functional";
}

ProbeVariant probe_variant_from_string(const std::string& s) {
    if (s == "sbm") return ProbeVariant::Sbm;
    if (s == "er") return ProbeVariant::Er;
    if (s == "one") return ProbeVariant::One;
    if (s == "feature") return ProbeVariant::Feature;
    throw std::invalid_argument("unknown probe variant: " + s + " (valid: sbm er one feature)");
}

std::string to_string(ProbeVariant v) {
    switch (v) {
        case ProbeVariant::Sbm: return "sbm";
        case ProbeVariant::Er: return "er";
        case ProbeVariant::One: return "one";
        case ProbeVariant::Feature: return "feature";
    }
    return "sbm";
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("malformed config document: ") + e.what());
    }
    RunConfig cfg;
    check_known_keys(j, "config",
                     {"graph", "partition", "model", "training", "strategy", "probe", "task",
                      "seed", "output_dir", "similarity_rounds", "lambda1_grid"});

    if (j.contains("graph")) {
        const json& g = j.at("graph");
        check_known_keys(g, "graph", {"file", "synthetic"});
        require(!(g.contains("file") && g.contains("synthetic")),
                "graph: give either file or synthetic, not both");
        read_to(g, "file", cfg.graph_file);
        if (g.contains("synthetic")) {
            const json& s = g.at("synthetic");
            check_known_keys(s, "graph.synthetic",
                             {"kind", "blocks", "nodes_per_block", "p_in", "p_out", "er_nodes",
                              "er_p", "clients_per_community", "nodes_per_client", "p_intra",
                              "p_inter", "feat_dim"});
            SyntheticSpec spec;
            read_to(s, "kind", spec.kind);
            require(spec.kind == "sbm" || spec.kind == "er" || spec.kind == "one" ||
                        spec.kind == "community_sbm",
                    "graph.synthetic.kind must be one of sbm, er, one, community_sbm");
            read_to(s, "blocks", spec.blocks);
            read_to(s, "nodes_per_block", spec.nodes_per_block);
            read_to(s, "p_in", spec.p_in);
            read_to(s, "p_out", spec.p_out);
            read_to(s, "er_nodes", spec.er_nodes);
            read_to(s, "er_p", spec.er_p);
            read_to(s, "clients_per_community", spec.clients_per_community);
            read_to(s, "nodes_per_client", spec.nodes_per_client);
            read_to(s, "p_intra", spec.p_intra);
            read_to(s, "p_inter", spec.p_inter);
            read_to(s, "feat_dim", spec.feat_dim);
            require(spec.feat_dim >= 1, "graph.synthetic.feat_dim must be >= 1");
            cfg.synthetic = spec;
        }
    }
    if (cfg.graph_file.empty() && !cfg.synthetic) cfg.synthetic = SyntheticSpec{};

    if (j.contains("partition")) {
        const json& p = j.at("partition");
        check_known_keys(p, "partition",
                         {"mode", "k", "base_parts", "samples_per_part", "node_frac", "fine_parts",
                          "group_sizes"});
        read_to(p, "mode", cfg.partition.mode);
        require(cfg.partition.mode == "disjoint" || cfg.partition.mode == "louvain" ||
                    cfg.partition.mode == "random" || cfg.partition.mode == "overlapping" ||
                    cfg.partition.mode == "imbalanced" || cfg.partition.mode == "blocks",
                "partition.mode must be one of disjoint, louvain, random, overlapping, "
                "imbalanced, blocks");
        read_to(p, "k", cfg.partition.k);
        require(cfg.partition.k >= 1, "partition.k must be >= 1");
        read_to(p, "base_parts", cfg.partition.base_parts);
        read_to(p, "samples_per_part", cfg.partition.samples_per_part);
        read_to(p, "node_frac", cfg.partition.node_frac);
        require(cfg.partition.node_frac > 0.0 && cfg.partition.node_frac <= 1.0,
                "partition.node_frac must lie in (0, 1]");
        read_to(p, "fine_parts", cfg.partition.fine_parts);
        read_to(p, "group_sizes", cfg.partition.group_sizes);
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_known_keys(m, "model", {"hidden", "mask_classifier"});
        read_to(m, "hidden", cfg.model.hidden);
        require(cfg.model.hidden >= 1, "model.hidden must be >= 1");
        read_to(m, "mask_classifier", cfg.model.mask_classifier);
    }

    if (j.contains("training")) {
        const json& t = j.at("training");
        check_known_keys(t, "training",
                         {"rounds", "local_epochs", "lr", "lambda1", "lambda2", "mask_threshold",
                          "fedprox_mu", "train_frac", "val_frac"});
        read_to(t, "rounds", cfg.training.rounds);
        require(cfg.training.rounds >= 0, "training.rounds must be >= 0");
        read_to(t, "local_epochs", cfg.training.local_epochs);
        require(cfg.training.local_epochs >= 0, "training.local_epochs must be >= 0");
        read_to(t, "lr", cfg.training.lr);
        require(cfg.training.lr > 0.0, "training.lr must be > 0");
        read_to(t, "lambda1", cfg.training.lambda1);
        require(cfg.training.lambda1 >= 0.0, "training.lambda1 must be >= 0");
        read_to(t, "lambda2", cfg.training.lambda2);
        require(cfg.training.lambda2 >= 0.0, "training.lambda2 must be >= 0");
        read_to(t, "mask_threshold", cfg.training.mask_threshold);
        require(cfg.training.mask_threshold >= 0.0, "training.mask_threshold must be >= 0");
        read_to(t, "fedprox_mu", cfg.training.fedprox_mu);
        require(cfg.training.fedprox_mu >= 0.0, "training.fedprox_mu must be >= 0");
        read_to(t, "train_frac", cfg.training.train_frac);
        read_to(t, "val_frac", cfg.training.val_frac);
        require(cfg.training.train_frac >= 0.0 && cfg.training.val_frac >= 0.0 &&
                    cfg.training.train_frac + cfg.training.val_frac <= 1.0,
                "training split fractions must be non-negative with sum <= 1");
    }

    if (j.contains("strategy")) {
        const json& s = j.at("strategy");
        check_known_keys(s, "strategy",
                         {"kind", "tau", "similarity_source", "community_mode",
                          "explicit_threshold", "embedding_source"});
        if (s.contains("kind")) cfg.strategy.kind = strategy_kind_from_string(s.at("kind"));
        if (s.contains("tau")) {
            const double tau = s.at("tau").get<double>();
            require(tau >= 0.0, "strategy.tau must be >= 0");
            cfg.strategy.tau = tau;
        }
        if (s.contains("similarity_source"))
            cfg.strategy.similarity_source =
                similarity_source_from_string(s.at("similarity_source"));
        if (s.contains("community_mode")) {
            const std::string m = s.at("community_mode");
            require(m == "implicit" || m == "explicit",
                    "strategy.community_mode must be implicit or explicit");
            cfg.strategy.community_mode =
                m == "implicit" ? CommunityMode::Implicit : CommunityMode::Explicit;
        }
        read_to(s, "explicit_threshold", cfg.strategy.explicit_threshold);
        if (s.contains("embedding_source")) {
            const std::string e = s.at("embedding_source");
            require(e == "hidden" || e == "logits",
                    "strategy.embedding_source must be hidden or logits");
            cfg.strategy.embedding_source =
                e == "hidden" ? EmbeddingSource::Hidden : EmbeddingSource::Logits;
        }
    }

    if (j.contains("probe")) {
        const json& p = j.at("probe");
        check_known_keys(p, "probe", {"variant", "blocks", "nodes_per_block", "p_in", "p_out"});
        if (p.contains("variant")) cfg.probe.variant = probe_variant_from_string(p.at("variant"));
        read_to(p, "blocks", cfg.probe.blocks);
        read_to(p, "nodes_per_block", cfg.probe.nodes_per_block);
        read_to(p, "p_in", cfg.probe.p_in);
        read_to(p, "p_out", cfg.probe.p_out);
        require(cfg.probe.p_in >= 0.0 && cfg.probe.p_in <= 1.0 && cfg.probe.p_out >= 0.0 &&
                    cfg.probe.p_out <= cfg.probe.p_in,
                "probe probabilities must satisfy 0 <= p_out <= p_in <= 1");
    }

    if (j.contains("task")) {
        const std::string t = j.at("task");
        require(t == "node_clf" || t == "link_pred", "task must be node_clf or link_pred");
        cfg.task = t == "node_clf" ? TaskKind::NodeClassification : TaskKind::LinkPrediction;
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    read_to(j, "output_dir", cfg.output_dir);
    read_to(j, "similarity_rounds", cfg.similarity_rounds);
    if (j.contains("lambda1_grid")) {
        cfg.lambda1_grid = j.at("lambda1_grid").get<std::vector<double>>();
        for (double v : cfg.lambda1_grid) require(v >= 0.0, "lambda1_grid values must be >= 0");
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
    json j;
    if (!cfg.graph_file.empty()) {
        j["graph"]["file"] = cfg.graph_file;
    } else if (cfg.synthetic) {
        const SyntheticSpec& s = *cfg.synthetic;
        json js;
        js["kind"] = s.kind;
        js["blocks"] = s.blocks;
        js["nodes_per_block"] = s.nodes_per_block;
        js["p_in"] = s.p_in;
        js["p_out"] = s.p_out;
        js["er_nodes"] = s.er_nodes;
        js["er_p"] = s.er_p;
        js["clients_per_community"] = s.clients_per_community;
        js["nodes_per_client"] = s.nodes_per_client;
        js["p_intra"] = s.p_intra;
        js["p_inter"] = s.p_inter;
        js["feat_dim"] = s.feat_dim;
        j["graph"]["synthetic"] = std::move(js);
    }
    j["partition"] = {{"mode", cfg.partition.mode},
                      {"k", cfg.partition.k},
                      {"base_parts", cfg.partition.base_parts},
                      {"samples_per_part", cfg.partition.samples_per_part},
                      {"node_frac", cfg.partition.node_frac},
                      {"fine_parts", cfg.partition.fine_parts},
                      {"group_sizes", cfg.partition.group_sizes}};
    j["model"] = {{"hidden", cfg.model.hidden}, {"mask_classifier", cfg.model.mask_classifier}};
    j["training"] = {{"rounds", cfg.training.rounds},
                     {"local_epochs", cfg.training.local_epochs},
                     {"lr", cfg.training.lr},
                     {"lambda1", cfg.training.lambda1},
                     {"lambda2", cfg.training.lambda2},
                     {"mask_threshold", cfg.training.mask_threshold},
                     {"fedprox_mu", cfg.training.fedprox_mu},
                     {"train_frac", cfg.training.train_frac},
                     {"val_frac", cfg.training.val_frac}};
    json st;
    st["kind"] = to_string(cfg.strategy.kind);
    if (cfg.strategy.tau) st["tau"] = *cfg.strategy.tau;
    st["similarity_source"] = to_string(cfg.strategy.similarity_source);
    st["community_mode"] =
        cfg.strategy.community_mode == CommunityMode::Implicit ? "implicit" : "explicit";
    st["explicit_threshold"] = cfg.strategy.explicit_threshold;
    st["embedding_source"] =
        cfg.strategy.embedding_source == EmbeddingSource::Hidden ? "hidden" : "logits";
    j["strategy"] = std::move(st);
    j["probe"] = {{"variant", to_string(cfg.probe.variant)},
                  {"blocks", cfg.probe.blocks},
                  {"nodes_per_block", cfg.probe.nodes_per_block},
                  {"p_in", cfg.probe.p_in},
                  {"p_out", cfg.probe.p_out}};
    j["task"] = cfg.task == TaskKind::NodeClassification ? "node_clf" : "link_pred";
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["similarity_rounds"] = cfg.similarity_rounds;
    j["lambda1_grid"] = cfg.lambda1_grid;
    return j.dump(2);
}

}  // namespace fedpub
