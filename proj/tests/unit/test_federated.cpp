#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fedpub/federated.hpp"
#include "fedpub/rng.hpp"

using namespace fedpub;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(StrategyKind kind, uint64_t seed = 5) {
    RunConfig cfg;
    cfg.synthetic = SyntheticSpec{};
    cfg.synthetic->kind = "community_sbm";
    cfg.synthetic->clients_per_community = {2, 2};
    cfg.synthetic->nodes_per_client = 12;
    cfg.synthetic->p_intra = 0.5;
    cfg.synthetic->p_inter = 0.05;
    cfg.synthetic->feat_dim = 6;
    cfg.partition.mode = "blocks";
    cfg.model.hidden = 8;
    cfg.training.rounds = 3;
    cfg.training.local_epochs = 1;
    cfg.strategy.kind = kind;
    cfg.strategy.tau = 5.0;
    cfg.probe.blocks = 2;
    cfg.probe.nodes_per_block = 10;
    cfg.seed = seed;
    return cfg;
}

struct TestBed {
    Graph g;
    Partition part;
    std::vector<ClientState> clients;
    ServerState server;
    RunConfig cfg;
};

TestBed make_bed(RunConfig cfg) {
    TestBed bed;
    bed.cfg = cfg;
    bed.g = build_graph(cfg);
    bed.part = build_partition(cfg, bed.g);
    bed.clients = build_clients(cfg, bed.g, bed.part);
    bed.server.init_params = glorot_init(bed.g.feat_dim(), cfg.model.hidden, bed.g.num_classes,
                                         derive_seed(cfg.seed, "init"));
    bed.server.probe = build_probe(cfg, bed.clients, bed.g.feat_dim());
    return bed;
}

bool same_params(const ParamSet& a, const ParamSet& b, double tol = 0.0) {
    if (!a.same_shapes(b)) return false;
    for (int t = 0; t < ParamSet::kNumTensors; ++t)
        for (size_t i = 0; i < a.tensor(t).a.size(); ++i)
            if (std::fabs(a.tensor(t).a[i] - b.tensor(t).a[i]) > tol) return false;
    return true;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("functional embedding: identity, zeros, and the mean oracle") {
    RunConfig cfg = tiny_config(StrategyKind::FedPub);
    TestBed bed = make_bed(cfg);
    const ParamSet p = bed.server.init_params;

    const auto e1 = functional_embedding(p, nullptr, bed.server.probe.adj,
                                         bed.server.probe.graph.features);
    const auto e2 = functional_embedding(p, nullptr, bed.server.probe.adj,
                                         bed.server.probe.graph.features);
    CHECK(e1 == e2);

    const ParamSet zeros = ParamSet::like(p);
    const auto ez = functional_embedding(zeros, nullptr, bed.server.probe.adj,
                                         bed.server.probe.graph.features);
    for (double v : ez) CHECK(v == 0.0);

    // column means of the forward hidden output
    const ForwardResult fwd =
        forward(p, nullptr, bed.server.probe.adj, bed.server.probe.graph.features);
    const Matrix mean = column_means(fwd.h);
    REQUIRE(static_cast<int>(e1.size()) == mean.cols);
    for (int j = 0; j < mean.cols; ++j) CHECK(e1[j] == doctest::Approx(mean.a[j]));

    Matrix wrong(3, p.w1.rows + 1);
    NormalizedAdjacency tiny;
    tiny.n = 3;
    tiny.row_ptr = {0, 0, 0, 0};
    CHECK_THROWS_AS(functional_embedding(p, nullptr, tiny, wrong), std::invalid_argument);
}

TEST_CASE("cosine similarity") {
    const std::vector<double> v{1.0, 2.0, -3.0};
    CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
    CHECK(cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
    CHECK(cosine_similarity({1.0, 2.0}, {2.0, 1.0}) == doctest::Approx(0.8));
    CHECK(cosine_similarity({0.0, 0.0}, {1.0, 1.0}) == 0.0);  // degenerate, warns
}

TEST_CASE("parameter similarity: scale invariance and flatten oracle") {
    ParamSet a = glorot_init(3, 4, 2, 1);
    CHECK(parameter_similarity(a, a) == doctest::Approx(1.0));
    ParamSet b = a;
    for (int t = 0; t < ParamSet::kNumTensors; ++t)
        for (double& x : b.tensor(t).a) x *= 2.0;
    CHECK(parameter_similarity(a, b) == doctest::Approx(1.0));

    const ParamSet c = glorot_init(3, 4, 2, 2);
    const auto fa = a.flatten();
    const auto fc = c.flatten();
    double num = 0.0, na = 0.0, nc = 0.0;
    for (size_t i = 0; i < fa.size(); ++i) {
        num += fa[i] * fc[i];
        na += fa[i] * fa[i];
        nc += fc[i] * fc[i];
    }
    CHECK(parameter_similarity(a, c) ==
          doctest::Approx(num / std::sqrt(na * nc)).epsilon(1e-12));
}

TEST_CASE("aggregation weights: closed forms") {
    const auto uniform = aggregation_weights({0.9, 0.1, 0.4}, 0, 0.0);
    for (double w : uniform) CHECK(w == doctest::Approx(1.0 / 3.0));

    CHECK(aggregation_weights({0.7}, 0, 5.0) == std::vector<double>{1.0});

    const auto w = aggregation_weights({1.0, 0.0}, 0, 5.0);
    CHECK(w[0] == doctest::Approx(0.993307).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(0.006693).epsilon(1e-4));
}

TEST_CASE("aggregation weights: row sums, positivity, shift invariance, tau monotonicity") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 1 + static_cast<int>(rng.integer(8));
        std::vector<double> row(k);
        for (double& v : row) v = 2.0 * rng.uniform() - 1.0;
        const int self = static_cast<int>(rng.integer(k));
        const double tau = 10.0 * rng.uniform();
        const auto w = aggregation_weights(row, self, tau);
        double sum = 0.0;
        for (double x : w) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
        CHECK(w[self] > 0.0);

        std::vector<double> shifted = row;
        for (double& v : shifted) v += 0.37;
        const auto ws = aggregation_weights(shifted, self, tau);
        for (int j = 0; j < k; ++j) CHECK(std::fabs(ws[j] - w[j]) < 1e-12);
    }

    // unique-max entry is non-decreasing in tau
    const std::vector<double> row{0.9, 0.2, 0.5};
    double prev = 0.0;
    for (double tau : {0.0, 1.0, 2.0, 5.0, 10.0}) {
        const auto w = aggregation_weights(row, 0, tau);
        CHECK(w[0] >= prev - 1e-15);
        prev = w[0];
    }
}

TEST_CASE("aggregation weights: explicit community mode") {
    AggregationMode explicit_mode{CommunityMode::Explicit, 0.5};
    const auto w = aggregation_weights({1.0, 0.8, 0.2}, 0, 2.0, explicit_mode);
    CHECK(w[2] == 0.0);
    CHECK(w[0] + w[1] == doctest::Approx(1.0));

    // self survives even below the threshold
    const auto self_only = aggregation_weights({0.1, 0.2, 0.3}, 0, 2.0, explicit_mode);
    CHECK(self_only[0] > 0.0);

    // threshold -1 admits every cosine value: identical to implicit
    AggregationMode lax{CommunityMode::Explicit, -1.0};
    const std::vector<double> row{0.9, -1.0, 0.3, -0.2};
    const auto a = aggregation_weights(row, 1, 3.0, lax);
    const auto b = aggregation_weights(row, 1, 3.0);
    for (size_t j = 0; j < row.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-15));
}

TEST_CASE("aggregate_personalized and fedavg_aggregate") {
    std::vector<ParamSet> bank;
    bank.push_back(ParamSet::shaped(1, 1, 1, 0.0));
    bank.push_back(ParamSet::shaped(1, 1, 1, 4.0));

    Matrix identity(2, 2);
    identity(0, 0) = 1.0;
    identity(1, 1) = 1.0;
    const auto keep = aggregate_personalized(bank, identity);
    CHECK(same_params(keep[0], bank[0]));
    CHECK(same_params(keep[1], bank[1]));

    Matrix alphas(2, 2);
    alphas(0, 0) = 0.75;
    alphas(0, 1) = 0.25;
    alphas(1, 0) = 0.25;
    alphas(1, 1) = 0.75;
    const auto mix = aggregate_personalized(bank, alphas);
    CHECK(mix[0].w1(0, 0) == doctest::Approx(1.0));

    // uniform alphas with equal counts equals the fedavg mean exactly
    Matrix uniform(2, 2, 0.5);
    const auto up = aggregate_personalized(bank, uniform);
    const ParamSet avg = fedavg_aggregate(bank, {3, 3});
    CHECK(same_params(up[0], avg));
    CHECK(same_params(up[1], avg));

    CHECK(fedavg_aggregate(bank, {1, 3}).w1(0, 0) == doctest::Approx(3.0));
    CHECK(same_params(fedavg_aggregate({bank[1]}, {7}), bank[1]));
    CHECK_THROWS_AS(fedavg_aggregate(bank, {0, 1}), std::invalid_argument);
}

TEST_CASE("local update: zero epochs only applies the incoming parameters") {
    RunConfig cfg = tiny_config(StrategyKind::FedPub);
    TestBed bed = make_bed(cfg);
    ClientState& c = bed.clients[0];
    const ParamSet incoming = bed.server.init_params;
    const LocalUpdateResult r = local_update(c, &incoming, 0, cfg, bed.server.probe, 1);
    CHECK(same_params(c.params, incoming));
    CHECK(same_params(c.last_anchor, incoming));
    CHECK(same_params(c.masks, ParamSet::like(c.masks, 1.0)));
    REQUIRE(r.payload.has_value());
    // threshold 0.5 keeps all-ones masks, so the payload is the exact product
    CHECK(same_params(r.payload->params, incoming));
    CHECK(std::isfinite(r.record.train_loss));
}

TEST_CASE("local update: fedper keeps the classifier personal") {
    RunConfig cfg = tiny_config(StrategyKind::FedPer);
    TestBed bed = make_bed(cfg);
    ClientState& c = bed.clients[0];
    c.params = glorot_init(bed.g.feat_dim(), cfg.model.hidden, bed.g.num_classes, 123);
    const Matrix my_wc = c.params.wc;
    ParamSet incoming = bed.server.init_params;
    const LocalUpdateResult r = local_update(c, &incoming, 0, cfg, bed.server.probe, 1);
    CHECK(c.params.wc.a == my_wc.a);  // classifier untouched by receipt
    CHECK(c.params.w1.a == incoming.w1.a);
    REQUIRE(r.payload.has_value());
    for (double v : r.payload->params.wc.a) CHECK(v == 0.0);  // never transmitted
    CHECK_FALSE(r.payload->classifier_transmitted);
    CHECK(r.payload->nonzero < c.params.total_params());
}

TEST_CASE("local update: one fedpub epoch decreases the loss in >= 19/20 trials") {
    int successes = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        RunConfig cfg = tiny_config(StrategyKind::FedPub, seed);
        TestBed bed = make_bed(cfg);
        ClientState& c = bed.clients[0];
        const ParamSet incoming = bed.server.init_params;

        // loss at the incoming parameters before any step
        LossInputs in;
        in.adj = &c.adj;
        in.X = &c.subgraph.features;
        in.labels = &c.subgraph.labels;
        in.train_ids = &c.split.train_ids;
        const ParamSet ones = ParamSet::like(incoming, 1.0);
        const double before = loss_and_grads(incoming, &ones, incoming, in,
                                             cfg.training.lambda1, cfg.training.lambda2)
                                  .loss.total;
        const LocalUpdateResult r = local_update(c, &incoming, 1, cfg, bed.server.probe, 1);
        if (r.record.train_loss < before) ++successes;
    }
    CHECK(successes >= 19);
}

TEST_CASE("run_round: K=1 fedpub with inert knobs behaves exactly like local") {
    RunConfig base = tiny_config(StrategyKind::FedPub, 9);
    base.synthetic->clients_per_community = {1};
    base.synthetic->nodes_per_client = 16;
    base.training.lambda1 = 0.0;
    base.training.lambda2 = 0.0;
    base.training.mask_threshold = 0.0;
    base.training.rounds = 4;

    RunConfig local_cfg = base;
    local_cfg.strategy.kind = StrategyKind::Local;

    TestBed a = make_bed(base);
    TestBed b = make_bed(local_cfg);
    for (int r = 0; r < 4; ++r) {
        const auto ra = run_round(a.server, a.clients, a.cfg);
        const auto rb = run_round(b.server, b.clients, b.cfg);
        CHECK(a.server.alphas(0, 0) == 1.0);
        CHECK(ra[0].test_acc == rb[0].test_acc);
        CHECK(ra[0].task_loss == rb[0].task_loss);
        CHECK(same_params(a.clients[0].params, b.clients[0].params));
    }
}

TEST_CASE("run_round: transmission accounting with inert masks is the full model") {
    RunConfig cfg = tiny_config(StrategyKind::FedPub, 3);
    cfg.training.lambda1 = 0.0;
    cfg.training.mask_threshold = 0.0;
    TestBed bed = make_bed(cfg);
    const long total = bed.server.init_params.total_params();
    const auto recs = run_round(bed.server, bed.clients, bed.cfg);
    for (size_t i = 0; i < recs.size(); ++i) {
        CHECK(recs[i].params_sent == bed.server.bank[i].params.nonzero_count());
        CHECK(recs[i].params_sent == total);
        CHECK(recs[i].params_received == bed.server.init_params.nonzero_count());
    }
}

TEST_CASE("run_round: results do not depend on the worker count") {
    const int saved = omp_get_max_threads();
    RunConfig cfg = tiny_config(StrategyKind::FedPub, 8);

    omp_set_num_threads(1);
    TestBed a = make_bed(cfg);
    std::vector<RoundRecord> ra;
    for (int r = 0; r < 3; ++r) {
        auto recs = run_round(a.server, a.clients, a.cfg);
        ra.insert(ra.end(), recs.begin(), recs.end());
    }

    omp_set_num_threads(4);
    TestBed b = make_bed(cfg);
    std::vector<RoundRecord> rb;
    for (int r = 0; r < 3; ++r) {
        auto recs = run_round(b.server, b.clients, b.cfg);
        rb.insert(rb.end(), recs.begin(), recs.end());
    }
    omp_set_num_threads(saved);

    REQUIRE(ra.size() == rb.size());
    for (size_t i = 0; i < ra.size(); ++i) {
        CHECK(to_csv_row(ra[i]) == to_csv_row(rb[i]));
    }
    for (size_t i = 0; i < a.clients.size(); ++i)
        CHECK(same_params(a.clients[i].params, b.clients[i].params));
}

TEST_CASE("server state invariants after a round") {
    RunConfig cfg = tiny_config(StrategyKind::FedPub, 12);
    TestBed bed = make_bed(cfg);
    run_round(bed.server, bed.clients, bed.cfg);
    const Matrix& S = bed.server.similarity;
    const Matrix& A = bed.server.alphas;
    REQUIRE(S.rows == bed.part.num_clients());
    for (int i = 0; i < S.rows; ++i) {
        CHECK(S(i, i) == 1.0);
        double row = 0.0;
        for (int j = 0; j < S.cols; ++j) {
            CHECK(S(i, j) == S(j, i));
            row += A(i, j);
        }
        CHECK(std::fabs(row - 1.0) <= 1e-9);
        CHECK(A(i, i) > 0.0);
    }
}

TEST_CASE("run_experiment: R=0 writes only the initialization checkpoint") {
    RunConfig cfg = tiny_config(StrategyKind::FedPub, 2);
    cfg.training.rounds = 0;
    cfg.output_dir = (fs::temp_directory_path() / "fedpub_r0_run").string();
    fs::remove_all(cfg.output_dir);
    const ExperimentResult res = run_experiment(cfg);
    CHECK(res.records.empty());
    CHECK(fs::exists(fs::path(cfg.output_dir) / "manifest.json"));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "checkpoints" / "init.json"));
    int checkpoints = 0;
    for (const auto& e : fs::directory_iterator(fs::path(cfg.output_dir) / "checkpoints"))
        (void)e, ++checkpoints;
    CHECK(checkpoints == 1);
    const std::string metrics = slurp((fs::path(cfg.output_dir) / "metrics.csv").string());
    CHECK(metrics == round_record_header() + "\n");
    fs::remove_all(cfg.output_dir);
}

TEST_CASE("run_experiment: identical config and seed give byte-identical metrics") {
    RunConfig cfg = tiny_config(StrategyKind::FedPub, 4);
    cfg.training.rounds = 3;
    cfg.output_dir = (fs::temp_directory_path() / "fedpub_det_a").string();
    fs::remove_all(cfg.output_dir);
    run_experiment(cfg);
    const std::string a = slurp((fs::path(cfg.output_dir) / "metrics.csv").string());

    RunConfig cfg2 = cfg;
    cfg2.output_dir = (fs::temp_directory_path() / "fedpub_det_b").string();
    fs::remove_all(cfg2.output_dir);
    run_experiment(cfg2);
    const std::string b = slurp((fs::path(cfg2.output_dir) / "metrics.csv").string());
    CHECK(a == b);
    CHECK(!a.empty());
    fs::remove_all(cfg.output_dir);
    fs::remove_all(cfg2.output_dir);
}

TEST_CASE("run_experiment: a manifest replays to byte-identical metrics") {
    RunConfig cfg = tiny_config(StrategyKind::FedAvg, 6);
    cfg.training.rounds = 2;
    cfg.output_dir = (fs::temp_directory_path() / "fedpub_replay_a").string();
    fs::remove_all(cfg.output_dir);
    run_experiment(cfg);
    const std::string first = slurp((fs::path(cfg.output_dir) / "metrics.csv").string());

    // re-parse the config embedded in the manifest and run it elsewhere
    const std::string manifest = slurp((fs::path(cfg.output_dir) / "manifest.json").string());
    const auto key = manifest.find("\"config\"");
    REQUIRE(key != std::string::npos);
    const auto open = manifest.find('{', key);
    size_t depth = 0, close = open;
    for (size_t i = open; i < manifest.size(); ++i) {
        if (manifest[i] == '{') ++depth;
        if (manifest[i] == '}' && --depth == 0) {
            close = i;
            break;
        }
    }
    RunConfig replay = parse_config(manifest.substr(open, close - open + 1));
    replay.output_dir = (fs::temp_directory_path() / "fedpub_replay_b").string();
    fs::remove_all(replay.output_dir);
    run_experiment(replay);
    const std::string second = slurp((fs::path(replay.output_dir) / "metrics.csv").string());
    CHECK(first == second);
    CHECK(!first.empty());
    fs::remove_all(cfg.output_dir);
    fs::remove_all(replay.output_dir);
}

TEST_CASE("checkpoint round trip") {
    const ParamSet p = glorot_init(3, 4, 2, 55);
    ParamSet masks = ParamSet::like(p, 1.0);
    masks.w1(0, 0) = 0.25;
    const std::string path = (fs::temp_directory_path() / "fedpub_ckpt.json").string();
    save_checkpoint(p, &masks, path);
    ParamSet p2 = ParamSet::shaped(3, 4, 2);
    ParamSet m2 = ParamSet::shaped(3, 4, 2);
    load_checkpoint(path, p2, &m2);
    CHECK(same_params(p, p2));
    CHECK(same_params(masks, m2));
    fs::remove(path);
}
