#include "fedpub/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fedpub/graph.hpp"
#include "fedpub/nn.hpp"
#include "fedpub/rng.hpp"

namespace fedpub {

double gradcheck_max_rel_error(int instances, uint64_t seed, bool verbose) {
    double worst = 0.0;
    for (int inst = 0; inst < instances; ++inst) {
        Rng rng(derive_seed(seed, "gradcheck", inst));
        const int n = 4 + static_cast<int>(rng.integer(7));  // <= 10 nodes
        const int d = 2 + static_cast<int>(rng.integer(4));
        const int h = 2 + static_cast<int>(rng.integer(7));  // <= 8
        const int classes = 2 + static_cast<int>(rng.integer(2));
        Graph g = generate_er(n, 0.5, d, derive_seed(seed, "gc-graph", inst));
        for (int& l : g.labels) l = static_cast<int>(rng.integer(classes));
        g.num_classes = classes;
        if (g.edges.empty()) g.edges.emplace_back(0, 1);
        const NormalizedAdjacency adj = normalized_adjacency(g);

        ParamSet params = ParamSet::shaped(d, h, classes);
        ParamSet masks = ParamSet::like(params);
        ParamSet anchor = ParamSet::like(params);
        for (int t = 0; t < ParamSet::kNumTensors; ++t) {
            for (double& v : params.tensor(t).a) v = rng.normal() * 0.5 + 0.2;
            for (double& v : masks.tensor(t).a) v = rng.normal() * 0.3 + 1.0;
            for (double& v : anchor.tensor(t).a) v = rng.normal() * 0.5;
        }
        std::vector<int> train_ids;
        for (int v = 0; v < n; ++v)
            if (rng.uniform() < 0.7) train_ids.push_back(v);
        if (train_ids.empty()) train_ids.push_back(0);

        std::vector<std::pair<int, int>> neg;
        for (int u = 0; u < n && neg.size() < g.edges.size(); ++u)
            for (int v = u + 1; v < n && neg.size() < g.edges.size(); ++v)
                if (!std::binary_search(g.edges.begin(), g.edges.end(), std::make_pair(u, v)))
                    neg.emplace_back(u, v);
        if (neg.empty()) neg.emplace_back(0, std::min(1, n - 1));

        for (const Task task : {Task::NodeClassification, Task::LinkPrediction}) {
            LossInputs in;
            in.adj = &adj;
            in.X = &g.features;
            in.labels = &g.labels;
            in.train_ids = &train_ids;
            in.task = task;
            in.pos_edges = &g.edges;
            in.neg_edges = &neg;
            const double l1 = 0.001, l2 = 0.001;
            const LossAndGrads lg = loss_and_grads(params, &masks, anchor, in, l1, l2);

            auto fd_check = [&](ParamSet& target, const ParamSet& analytic) {
                const double step = 1e-6;
                for (int t = 0; t < ParamSet::kNumTensors; ++t) {
                    auto& vals = target.tensor(t).a;
                    for (size_t i = 0; i < vals.size(); ++i) {
                        const double orig = vals[i];
                        vals[i] = orig + step;
                        const double up =
                            loss_and_grads(params, &masks, anchor, in, l1, l2).loss.total;
                        vals[i] = orig - step;
                        const double dn =
                            loss_and_grads(params, &masks, anchor, in, l1, l2).loss.total;
                        vals[i] = orig;
                        const double fd = (up - dn) / (2.0 * step);
                        const double an = analytic.tensor(t).a[i];
                        const double rel =
                            std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-5});
                        worst = std::max(worst, rel);
                    }
                }
            };
            fd_check(params, lg.grad_params);
            fd_check(masks, lg.grad_masks);
        }
        if (verbose) std::printf("instance %d done, running max rel error %.3g\n", inst, worst);
    }
    return worst;
}

}  // namespace fedpub
