// Throughput comparison between the serial reference kernels and their
// OpenMP variants, plus a whole-round figure for the client fan-out.
#include <omp.h>

#include <chrono>
#include <cstdio>

#include "fedpub/config.hpp"
#include "fedpub/federated.hpp"
#include "fedpub/graph.hpp"
#include "fedpub/matrix.hpp"
#include "fedpub/rng.hpp"

using namespace fedpub;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix random_matrix(int r, int c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.a) v = rng.normal();
    return m;
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = Clock::now();
        f();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

}  // namespace

int main() {
    std::printf("threads: %d\n\n", omp_get_max_threads());
    Rng rng(42);

    {
        const int n = 512;
        const Matrix A = random_matrix(n, n, rng);
        const Matrix B = random_matrix(n, n, rng);
        volatile double sink = 0.0;
        const double ts = time_best_of(3, [&] { sink = matmul_serial(A, B)(0, 0); });
        const double tp = time_best_of(3, [&] { sink = matmul(A, B)(0, 0); });
        const double gflop = 2.0 * n * n * n / 1e9;
        std::printf("matmul %dx%d        serial %.3fs (%.2f GF/s)   omp %.3fs (%.2f GF/s)\n", n,
                    n, ts, gflop / ts, tp, gflop / tp);
        (void)sink;
    }

    {
        const Graph g = generate_sbm(5, 400, 0.05, 0.005, 1, 7);
        const NormalizedAdjacency S = normalized_adjacency(g);
        const Matrix X = random_matrix(g.num_nodes, 128, rng);
        volatile double sink = 0.0;
        const double ts = time_best_of(3, [&] { sink = spmm_serial(S, X)(0, 0); });
        const double tp = time_best_of(3, [&] { sink = spmm(S, X)(0, 0); });
        std::printf("spmm %d nnz x 128   serial %.3fs              omp %.3fs\n",
                    static_cast<int>(S.val.size()), ts, tp);
        (void)sink;
    }

    {
        RunConfig cfg;
        cfg.synthetic = SyntheticSpec{};
        cfg.synthetic->kind = "community_sbm";
        cfg.synthetic->clients_per_community = {4, 4};
        cfg.synthetic->nodes_per_client = 30;
        cfg.synthetic->feat_dim = 32;
        cfg.partition.mode = "blocks";
        cfg.model.hidden = 64;
        cfg.training.rounds = 1;
        cfg.training.local_epochs = 3;
        cfg.strategy.kind = StrategyKind::FedPub;
        cfg.strategy.tau = 10.0;
        cfg.probe.nodes_per_block = 40;

        const Graph g = build_graph(cfg);
        const Partition part = build_partition(cfg, g);
        std::vector<ClientState> clients = build_clients(cfg, g, part);
        ServerState server;
        server.init_params = glorot_init(g.feat_dim(), cfg.model.hidden, g.num_classes,
                                         derive_seed(cfg.seed, "init"));
        server.probe = build_probe(cfg, clients, g.feat_dim());

        const auto t0 = Clock::now();
        int rounds = 0;
        while (seconds_since(t0) < 2.0) {
            run_round(server, clients, cfg);
            ++rounds;
        }
        std::printf("fan-out: %d clients x 3 epochs -> %.1f rounds/s\n", part.num_clients(),
                    rounds / seconds_since(t0));
    }
    return 0;
}
