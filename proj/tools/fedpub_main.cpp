#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fedpub/config.hpp"
#include "fedpub/federated.hpp"
#include "fedpub/gradcheck.hpp"
#include "fedpub/graph.hpp"
#include "fedpub/nn.hpp"
#include "fedpub/partition.hpp"
#include "fedpub/report.hpp"
#include "fedpub/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fedpub;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

int cmd_gen(const std::string& kind, int blocks, int nodes_per_block, double p_in, double p_out,
            int nodes, double p, const std::string& communities, int nodes_per_client,
            double p_intra, double p_inter, int feat_dim, uint64_t seed, const std::string& out) {
    Graph g;
    if (kind == "sbm") {
        g = generate_sbm(blocks, nodes_per_block, p_in, p_out, feat_dim, seed);
    } else if (kind == "er") {
        g = generate_er(nodes, p, feat_dim, seed);
    } else if (kind == "one") {
        g = generate_single_node(feat_dim, seed);
    } else if (kind == "community") {
        g = generate_community_sbm(parse_int_list(communities), nodes_per_client, p_intra, p_inter,
                                   feat_dim, seed);
    } else {
        throw std::invalid_argument("unknown kind: " + kind + " (valid: sbm er one community)");
    }
    save_graph(g, out);
    std::printf("wrote %s: %d nodes, %ld edges, %d classes\n", out.c_str(), g.num_nodes,
                g.num_edges(), g.num_classes);
    return 0;
}

int cmd_partition(const std::string& graph_path, const std::string& mode, int k, int base_parts,
                  int samples_per_part, double node_frac, int fine_parts,
                  const std::string& group_sizes, uint64_t seed, const std::string& out,
                  const std::string& metrics_out) {
    const Graph g = load_graph(graph_path);
    Partition p;
    if (mode == "balanced")
        p = partition_balanced(g, k, seed);
    else if (mode == "louvain")
        p = partition_louvain(g, k, seed);
    else if (mode == "random")
        p = partition_random(g, k, seed);
    else if (mode == "overlapping")
        p = make_overlapping(g, base_parts, samples_per_part, node_frac, seed);
    else if (mode == "imbalanced")
        p = make_imbalanced(g, fine_parts, parse_int_list(group_sizes), seed);
    else
        throw std::invalid_argument("unknown mode: " + mode +
                                    " (valid: balanced louvain random overlapping imbalanced)");
    save_partition(p, out);

    const MissingEdgeMatrix missing = missing_edges(g, p);
    Matrix mm(missing.k, missing.k);
    for (int i = 0; i < missing.k; ++i)
        for (int j = 0; j < missing.k; ++j) mm(i, j) = static_cast<double>(missing.at(i, j));
    const std::string missing_path = out + ".missing_edges.csv";
    write_matrix_csv(mm, missing_path);

    nlohmann::json sidecar;
    sidecar["num_clients"] = p.num_clients();
    sidecar["mode"] = to_string(p.mode);
    std::vector<size_t> sizes;
    std::vector<double> ccs;
    for (const auto& nodes : p.client_nodes) {
        sizes.push_back(nodes.size());
        ccs.push_back(clustering_coefficient(induced_subgraph(g, nodes)));
    }
    sidecar["client_sizes"] = sizes;
    sidecar["client_clustering_coefficients"] = ccs;
    sidecar["global_clustering_coefficient"] = clustering_coefficient(g);
    if (p.num_clients() >= 2)
        sidecar["heterogeneity"] = heterogeneity(p, g.labels, g.num_classes);
    sidecar["missing_edges_csv"] = missing_path;
    std::ofstream sout(metrics_out);
    if (!sout) throw std::runtime_error("cannot write " + metrics_out);
    sout << sidecar.dump(2) << "\n";
    std::printf("wrote %s (%d clients) and %s\n", out.c_str(), p.num_clients(),
                metrics_out.c_str());
    return 0;
}

RunConfig load_config_or_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    auto j = nlohmann::json::parse(buf.str());
    if (j.contains("config")) return parse_config(j.at("config").dump());  // manifest replay
    return parse_config(buf.str());
}

int cmd_run(const std::string& config_path, int workers, const std::string& output_dir) {
    if (workers > 0) omp_set_num_threads(workers);
    RunConfig cfg = load_config_or_manifest(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;

    std::vector<RunConfig> runs;
    if (cfg.lambda1_grid.empty()) {
        runs.push_back(cfg);
    } else {
        for (double l1 : cfg.lambda1_grid) {
            RunConfig sub = cfg;
            sub.lambda1_grid.clear();
            sub.training.lambda1 = l1;
            char tag[32];
            std::snprintf(tag, sizeof(tag), "lambda1_%g", l1);
            sub.output_dir = (fs::path(cfg.output_dir) / tag).string();
            runs.push_back(std::move(sub));
        }
    }
    for (const RunConfig& r : runs) {
        const ExperimentResult result = run_experiment(r);
        double mean_test = 0.0;
        long n = 0;
        for (const RoundRecord& rec : result.records)
            if (rec.round == r.training.rounds && std::isfinite(rec.test_acc)) {
                mean_test += rec.test_acc;
                ++n;
            }
        std::printf("run %s: %d rounds, %zu clients%s\n", r.output_dir.c_str(),
                    r.training.rounds, result.clients.size(),
                    n > 0 ? (", final mean test metric " + std::to_string(mean_test / n)).c_str()
                          : "");
    }
    return 0;
}

int cmd_report(const std::string& run_dir) {
    write_run_report(run_dir);
    std::printf("report written under %s/report\n", run_dir.c_str());
    return 0;
}

int cmd_gradcheck(int instances, uint64_t seed) {
    const double worst = gradcheck_max_rel_error(instances, seed, false);
    std::printf("max relative error: %.6g over %d instances\n", worst, instances);
    return worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated subgraph learning simulator"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic graph file");
    std::string gen_kind = "sbm", gen_out = "graph.json", gen_comm = "5,5,40";
    int gen_blocks = 5, gen_npb = 100, gen_nodes = 500, gen_npc = 30, gen_feat = 128;
    double gen_pin = 0.1, gen_pout = 0.01, gen_p = 0.1, gen_pintra = 0.5, gen_pinter = 0.1;
    uint64_t gen_seed = 1;
    gen->add_option("--kind", gen_kind, "sbm | er | one | community");
    gen->add_option("--blocks", gen_blocks);
    gen->add_option("--nodes-per-block", gen_npb);
    gen->add_option("--p-in", gen_pin);
    gen->add_option("--p-out", gen_pout);
    gen->add_option("--nodes", gen_nodes, "er node count");
    gen->add_option("--p", gen_p, "er edge probability");
    gen->add_option("--clients-per-community", gen_comm, "community: comma list, e.g. 5,5,40");
    gen->add_option("--nodes-per-client", gen_npc);
    gen->add_option("--p-intra", gen_pintra);
    gen->add_option("--p-inter", gen_pinter);
    gen->add_option("--feat-dim", gen_feat);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out);

    // partition
    auto* part = app.add_subcommand("partition", "partition a graph file into client node sets");
    std::string part_graph, part_mode = "balanced", part_out = "partition.json",
                part_metrics, part_groups = "5,3,2,2,2";
    int part_k = 10, part_base = 2, part_samples = 5, part_fine = 20;
    double part_frac = 0.5;
    uint64_t part_seed = 1;
    part->add_option("--graph", part_graph)->required();
    part->add_option("--mode", part_mode, "balanced | louvain | random | overlapping | imbalanced");
    part->add_option("--k", part_k);
    part->add_option("--base-parts", part_base);
    part->add_option("--samples-per-part", part_samples);
    part->add_option("--node-frac", part_frac);
    part->add_option("--fine-parts", part_fine);
    part->add_option("--group-sizes", part_groups, "imbalanced: comma list, e.g. 5,3,2,2,2");
    part->add_option("--seed", part_seed);
    part->add_option("--out", part_out);
    part->add_option("--metrics-out", part_metrics, "defaults to <out>.metrics.json");

    // run
    auto* run = app.add_subcommand("run", "execute an experiment from a config (or manifest)");
    std::string run_config, run_outdir;
    int run_workers = 0;
    run->add_option("--config", run_config)->required();
    run->add_option("--workers", run_workers, "OpenMP worker count; does not affect results");
    run->add_option("--output-dir", run_outdir, "override the config's output_dir");

    // report
    auto* rep = app.add_subcommand("report", "post-hoc analyses over a finished run directory");
    std::string rep_dir;
    rep->add_option("run_dir", rep_dir)->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
    int gc_instances = 20;
    uint64_t gc_seed = 7;
    gc->add_option("--instances", gc_instances);
    gc->add_option("--seed", gc_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen(gen_kind, gen_blocks, gen_npb, gen_pin, gen_pout, gen_nodes, gen_p,
                           gen_comm, gen_npc, gen_pintra, gen_pinter, gen_feat, gen_seed, gen_out);
        if (part->parsed()) {
            if (part_metrics.empty()) part_metrics = part_out + ".metrics.json";
            return cmd_partition(part_graph, part_mode, part_k, part_base, part_samples, part_frac,
                                 part_fine, part_groups, part_seed, part_out, part_metrics);
        }
        if (run->parsed()) return cmd_run(run_config, run_workers, run_outdir);
        if (rep->parsed()) return cmd_report(rep_dir);
        if (gc->parsed()) return cmd_gradcheck(gc_instances, gc_seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
