// End-to-end coverage for the less-traveled configuration axes: probe
// variants, similarity sources, explicit community aggregation, the link
// prediction task and the alternate synthetic graph sources.
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fedpub/federated.hpp"
#include "fedpub/rng.hpp"

using namespace fedpub;
namespace fs = std::filesystem;

namespace {

RunConfig base_config() {
    RunConfig cfg;
    cfg.synthetic = SyntheticSpec{};
    cfg.synthetic->kind = "community_sbm";
    cfg.synthetic->clients_per_community = {2, 2};
    cfg.synthetic->nodes_per_client = 14;
    cfg.synthetic->p_intra = 0.5;
    cfg.synthetic->p_inter = 0.05;
    cfg.synthetic->feat_dim = 6;
    cfg.partition.mode = "blocks";
    cfg.model.hidden = 8;
    cfg.training.rounds = 2;
    cfg.training.local_epochs = 1;
    cfg.strategy.tau = 5.0;
    cfg.probe.blocks = 2;
    cfg.probe.nodes_per_block = 8;
    cfg.seed = 21;
    return cfg;
}

struct Bed {
    Graph g;
    std::vector<ClientState> clients;
    ServerState server;
};

Bed make_bed(const RunConfig& cfg) {
    Bed bed;
    bed.g = build_graph(cfg);
    const Partition part = build_partition(cfg, bed.g);
    bed.clients = build_clients(cfg, bed.g, part);
    bed.server.init_params = glorot_init(bed.g.feat_dim(), cfg.model.hidden, bed.g.num_classes,
                                         derive_seed(cfg.seed, "init"));
    bed.server.probe = build_probe(cfg, bed.clients, bed.g.feat_dim());
    return bed;
}

void check_server_invariants(const ServerState& server, int k) {
    REQUIRE(server.similarity.rows == k);
    for (int i = 0; i < k; ++i) {
        CHECK(server.similarity(i, i) == 1.0);
        double row = 0.0;
        for (int j = 0; j < k; ++j) {
            CHECK(server.similarity(i, j) == server.similarity(j, i));
            CHECK(std::isfinite(server.similarity(i, j)));
            row += server.alphas(i, j);
        }
        CHECK(std::fabs(row - 1.0) <= 1e-9);
    }
}

}  // namespace

TEST_CASE("probe variants all produce usable embeddings") {
    for (ProbeVariant variant :
         {ProbeVariant::Sbm, ProbeVariant::Er, ProbeVariant::One, ProbeVariant::Feature}) {
        RunConfig cfg = base_config();
        cfg.probe.variant = variant;
        Bed bed = make_bed(cfg);
        if (variant == ProbeVariant::Feature)
            REQUIRE(bed.server.probe.per_client_features.size() == bed.clients.size());
        run_round(bed.server, bed.clients, cfg);
        run_round(bed.server, bed.clients, cfg);
        check_server_invariants(bed.server, static_cast<int>(bed.clients.size()));
        for (const ClientPayload& p : bed.server.bank)
            CHECK(p.embedding.size() == static_cast<size_t>(cfg.model.hidden));
    }
}

TEST_CASE("logit embeddings have classifier width") {
    RunConfig cfg = base_config();
    cfg.strategy.embedding_source = EmbeddingSource::Logits;
    Bed bed = make_bed(cfg);
    run_round(bed.server, bed.clients, cfg);
    for (const ClientPayload& p : bed.server.bank)
        CHECK(p.embedding.size() == static_cast<size_t>(bed.g.num_classes));
}

TEST_CASE("similarity sources: parameter, gradient, label") {
    for (SimilaritySource source : {SimilaritySource::Parameter, SimilaritySource::Gradient,
                                    SimilaritySource::Label}) {
        RunConfig cfg = base_config();
        cfg.strategy.similarity_source = source;
        Bed bed = make_bed(cfg);
        run_round(bed.server, bed.clients, cfg);
        run_round(bed.server, bed.clients, cfg);
        check_server_invariants(bed.server, static_cast<int>(bed.clients.size()));
    }
    // label similarity of identical label distributions is exactly 1
    RunConfig cfg = base_config();
    cfg.strategy.similarity_source = SimilaritySource::Label;
    Bed bed = make_bed(cfg);
    run_round(bed.server, bed.clients, cfg);
    CHECK(bed.server.similarity(0, 1) == doctest::Approx(1.0));  // same-community clients
}

TEST_CASE("explicit community aggregation zeroes sub-threshold entries") {
    RunConfig cfg = base_config();
    cfg.strategy.community_mode = CommunityMode::Explicit;
    cfg.strategy.explicit_threshold = 2.0;  // nothing but self survives
    Bed bed = make_bed(cfg);
    run_round(bed.server, bed.clients, cfg);
    const int k = static_cast<int>(bed.clients.size());
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            CHECK(bed.server.alphas(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("link prediction trains and reports AUC metrics") {
    RunConfig cfg = base_config();
    cfg.task = TaskKind::LinkPrediction;
    cfg.synthetic->nodes_per_client = 20;
    cfg.training.local_epochs = 2;
    Bed bed = make_bed(cfg);
    const auto recs = run_round(bed.server, bed.clients, cfg);
    for (const RoundRecord& r : recs) {
        CHECK(std::isfinite(r.train_loss));
        if (std::isfinite(r.test_acc)) {
            CHECK(r.test_acc >= 0.0);
            CHECK(r.test_acc <= 1.0);
        }
    }
}

TEST_CASE("fedprox run stays close to the dispatched parameters") {
    // the proximal pull only acts from the second local step onward, since
    // the first step starts exactly at the anchor
    RunConfig cfg = base_config();
    cfg.strategy.kind = StrategyKind::FedProx;
    cfg.training.local_epochs = 5;
    cfg.training.fedprox_mu = 1000.0;  // pin hard to the anchor
    Bed bed = make_bed(cfg);
    run_round(bed.server, bed.clients, cfg);
    RunConfig loose = cfg;
    loose.training.fedprox_mu = 0.0;
    Bed bed2 = make_bed(loose);
    run_round(bed2.server, bed2.clients, loose);

    auto drift = [&](const Bed& b) {
        double d = 0.0;
        const ParamSet& init = b.server.init_params;
        for (int t = 0; t < ParamSet::kNumTensors; ++t)
            for (size_t i = 0; i < init.tensor(t).a.size(); ++i)
                d += std::fabs(b.clients[0].params.tensor(t).a[i] - init.tensor(t).a[i]);
        return d;
    };
    CHECK(drift(bed) < drift(bed2));
}

TEST_CASE("er and single-node graph sources build experiments") {
    RunConfig cfg = base_config();
    cfg.synthetic->kind = "er";
    cfg.synthetic->er_nodes = 40;
    cfg.synthetic->er_p = 0.2;
    cfg.partition.mode = "disjoint";
    cfg.partition.k = 4;
    const Graph g = build_graph(cfg);
    CHECK(g.num_nodes == 40);
    const Partition p = build_partition(cfg, g);
    CHECK(p.num_clients() == 4);

    RunConfig one = base_config();
    one.synthetic->kind = "one";
    CHECK(build_graph(one).num_nodes == 1);
}

TEST_CASE("louvain and imbalanced partition modes run end to end") {
    RunConfig cfg = base_config();
    cfg.synthetic->kind = "sbm";
    cfg.synthetic->blocks = 3;
    cfg.synthetic->nodes_per_block = 20;
    cfg.synthetic->p_in = 0.4;
    cfg.synthetic->p_out = 0.02;
    cfg.partition.mode = "louvain";
    cfg.partition.k = 3;
    cfg.output_dir = (fs::temp_directory_path() / "fedpub_louvain_run").string();
    fs::remove_all(cfg.output_dir);
    const ExperimentResult res = run_experiment(cfg);
    CHECK(res.records.size() == 2 * 3);
    fs::remove_all(cfg.output_dir);

    RunConfig imb = cfg;
    imb.partition.mode = "imbalanced";
    imb.partition.fine_parts = 6;
    imb.partition.group_sizes = {3, 3};
    imb.output_dir = (fs::temp_directory_path() / "fedpub_imb_run").string();
    fs::remove_all(imb.output_dir);
    const ExperimentResult res2 = run_experiment(imb);
    CHECK(res2.clients.size() == 2);
    fs::remove_all(imb.output_dir);
}
