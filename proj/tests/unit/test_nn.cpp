#include <cmath>

#include "doctest.h"
#include "fedpub/gradcheck.hpp"
#include "fedpub/graph.hpp"
#include "fedpub/nn.hpp"
#include "fedpub/rng.hpp"

using namespace fedpub;

namespace {

ParamSet random_params(int d, int h, int c, uint64_t seed, double scale = 0.5) {
    ParamSet p = ParamSet::shaped(d, h, c);
    Rng rng(seed);
    for (int t = 0; t < ParamSet::kNumTensors; ++t)
        for (double& v : p.tensor(t).a) v = rng.normal() * scale;
    return p;
}

Graph path3() {
    Graph g;
    g.num_nodes = 3;
    g.num_classes = 2;
    g.labels = {0, 1, 0};
    g.features = Matrix(3, 2);
    g.features(0, 0) = 1.0;
    g.features(1, 1) = -0.5;
    g.features(2, 0) = 0.3;
    g.features(2, 1) = 0.8;
    g.edges = {{0, 1}, {1, 2}};
    return g;
}

// plain nested-loop reimplementation of the model for oracle comparison
Matrix oracle_forward_hidden(const ParamSet& p, const Matrix& dense_adj, const Matrix& X) {
    auto mm = [](const Matrix& A, const Matrix& B) {
        Matrix C(A.rows, B.cols);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < B.cols; ++j)
                for (int k = 0; k < A.cols; ++k) C(i, j) += A(i, k) * B(k, j);
        return C;
    };
    auto act = [](Matrix m, const Matrix& bias) {
        for (int i = 0; i < m.rows; ++i)
            for (int j = 0; j < m.cols; ++j) {
                m(i, j) += bias.a[j];
                if (m(i, j) < 0.0) m(i, j) = 0.0;
            }
        return m;
    };
    const Matrix h1 = act(mm(dense_adj, mm(X, p.w1)), p.b1);
    return act(mm(dense_adj, mm(h1, p.w2)), p.b2);
}

Matrix densify(const NormalizedAdjacency& S) {
    Matrix D(S.n, S.n);
    for (int i = 0; i < S.n; ++i)
        for (int q = S.row_ptr[i]; q < S.row_ptr[i + 1]; ++q) D(i, S.col[q]) = S.val[q];
    return D;
}

}  // namespace

TEST_CASE("forward: zero inputs and zero masks give zero logits") {
    const Graph one = generate_single_node(3, 1);
    const NormalizedAdjacency adj = normalized_adjacency(one);
    Matrix zeroX(1, 3);
    ParamSet p = random_params(3, 4, 2, 5);
    p.b1.fill(0.0);
    p.b2.fill(0.0);
    p.bc.fill(0.0);
    const ForwardResult r = forward(p, nullptr, adj, zeroX);
    for (double v : r.logits.a) CHECK(v == 0.0);

    const Graph g = path3();
    const NormalizedAdjacency adj3 = normalized_adjacency(g);
    ParamSet q = random_params(2, 4, 2, 6);
    q.b1.fill(0.0);
    q.b2.fill(0.0);
    q.bc.fill(0.0);
    const ParamSet zero_masks = ParamSet::like(q);
    const ForwardResult rm = forward(q, &zero_masks, adj3, g.features);
    for (double v : rm.logits.a) CHECK(v == 0.0);
}

TEST_CASE("forward: matches the straight-line oracle") {
    const Graph g = path3();
    const NormalizedAdjacency adj = normalized_adjacency(g);
    const ParamSet p = random_params(2, 5, 2, 7);
    const ForwardResult r = forward(p, nullptr, adj, g.features);
    const Matrix H = oracle_forward_hidden(p, densify(adj), g.features);
    REQUIRE(r.h.same_shape(H));
    for (size_t i = 0; i < H.a.size(); ++i)
        CHECK(r.h.a[i] == doctest::Approx(H.a[i]).epsilon(1e-10));
}

TEST_CASE("forward: all-ones mask is bit-identical to no mask") {
    const Graph g = path3();
    const NormalizedAdjacency adj = normalized_adjacency(g);
    const ParamSet p = random_params(2, 6, 2, 8);
    const ParamSet ones = ParamSet::like(p, 1.0);
    const ForwardResult a = forward(p, nullptr, adj, g.features);
    const ForwardResult b = forward(p, &ones, adj, g.features);
    CHECK(a.logits.a == b.logits.a);
    CHECK(a.h.a == b.h.a);
}

TEST_CASE("forward: non-finite input raises a numeric error") {
    const Graph g = path3();
    const NormalizedAdjacency adj = normalized_adjacency(g);
    const ParamSet p = random_params(2, 4, 2, 9);
    Matrix bad = g.features;
    bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(forward(p, nullptr, adj, bad), std::runtime_error);
}

TEST_CASE("loss: l1 and prox trivial values, breakdown identity") {
    const Graph g = path3();
    const NormalizedAdjacency adj = normalized_adjacency(g);
    const ParamSet p = random_params(2, 4, 2, 10);
    const ParamSet ones = ParamSet::like(p, 1.0);
    const std::vector<int> train{0, 1, 2};
    LossInputs in;
    in.adj = &adj;
    in.X = &g.features;
    in.labels = &g.labels;
    in.train_ids = &train;

    const LossAndGrads lg = loss_and_grads(p, &ones, p, in, 0.001, 0.001);
    CHECK(lg.loss.l1_term == doctest::Approx(static_cast<double>(p.total_params())));
    CHECK(lg.loss.prox_term == doctest::Approx(0.0));  // params == anchor with ones mask
    CHECK(lg.loss.total ==
          doctest::Approx(lg.loss.task_loss + 0.001 * lg.loss.l1_term + 0.001 * lg.loss.prox_term)
              .epsilon(1e-12));

    const std::vector<int> empty;
    LossInputs bad = in;
    bad.train_ids = &empty;
    CHECK_THROWS_AS(loss_and_grads(p, &ones, p, bad, 0.001, 0.001), std::invalid_argument);
}

TEST_CASE("loss: mask gradient equals effective gradient times parameter") {
    const Graph g = path3();
    const NormalizedAdjacency adj = normalized_adjacency(g);
    const ParamSet p = random_params(2, 4, 2, 11);
    const ParamSet ones = ParamSet::like(p, 1.0);
    const ParamSet anchor = random_params(2, 4, 2, 12);
    const std::vector<int> train{0, 2};
    LossInputs in;
    in.adj = &adj;
    in.X = &g.features;
    in.labels = &g.labels;
    in.train_ids = &train;

    // with mu = 1 the parameter gradient IS the effective gradient, so
    // grad_mask must equal grad_eff * theta (no l1 when lambda1 = 0)
    const LossAndGrads lg = loss_and_grads(p, &ones, anchor, in, 0.0, 0.5);
    for (int t = 0; t < ParamSet::kNumTensors; ++t)
        for (size_t i = 0; i < p.tensor(t).a.size(); ++i)
            CHECK(lg.grad_masks.tensor(t).a[i] ==
                  doctest::Approx(lg.grad_params.tensor(t).a[i] * p.tensor(t).a[i])
                      .epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences on small instances") {
    CHECK(gradcheck_max_rel_error(4, 21) < 1e-4);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    ParamSet p = random_params(2, 3, 2, 13);
    const ParamSet before = p;
    AdamState st = AdamState::like(p);
    adam_step(st, p, ParamSet::like(p), 0.001);
    for (int t = 0; t < ParamSet::kNumTensors; ++t) CHECK(p.tensor(t).a == before.tensor(t).a);
    CHECK(st.step == 1);
}

TEST_CASE("adam: closed-form first step") {
    ParamSet p = ParamSet::shaped(1, 1, 1);
    p.w1(0, 0) = 0.0;
    AdamState st = AdamState::like(p);
    ParamSet g = ParamSet::like(p);
    g.w1(0, 0) = 1.0;
    adam_step(st, p, g, 0.001);
    // first-step update = -lr * 1 / (1 + eps)
    CHECK(p.w1(0, 0) == doctest::Approx(-0.000999999).epsilon(1e-6));
}

TEST_CASE("adam: descends a 1-d quadratic") {
    ParamSet p = ParamSet::shaped(1, 1, 1);
    p.w1(0, 0) = 2.0;
    AdamState st = AdamState::like(p);
    auto loss = [&] { return (p.w1(0, 0) - 0.5) * (p.w1(0, 0) - 0.5); };
    const double start = loss();
    for (int i = 0; i < 100; ++i) {
        ParamSet g = ParamSet::like(p);
        g.w1(0, 0) = 2.0 * (p.w1(0, 0) - 0.5);
        adam_step(st, p, g, 0.01);
    }
    CHECK(loss() < start);

    ParamSet bad = ParamSet::like(p);
    bad.w1(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(adam_step(st, p, bad, 0.01), std::runtime_error);
}

TEST_CASE("mask thresholding") {
    const ParamSet p = random_params(2, 3, 2, 14);
    const ParamSet ones = ParamSet::like(p, 1.0);
    CHECK(apply_mask_threshold(p, ones, 0.5).sparsity == 0.0);
    const ParamSet zeros = ParamSet::like(p, 0.0);
    const ThresholdResult z = apply_mask_threshold(p, zeros, 0.5);
    CHECK(z.sparsity == 1.0);
    for (int t = 0; t < ParamSet::kNumTensors; ++t)
        for (double v : z.params.tensor(t).a) CHECK(v == 0.0);

    // threshold zero: exact product, sparsity = fraction of exactly-zero mu
    ParamSet mixed = ParamSet::like(p, 1.0);
    mixed.w1(0, 0) = 0.0;
    mixed.w2(1, 1) = -0.25;
    const ThresholdResult m = apply_mask_threshold(p, mixed, 0.0);
    CHECK(m.sparsity ==
          doctest::Approx(1.0 / static_cast<double>(p.total_params())));
    CHECK(m.params.w1(0, 0) == 0.0);
    CHECK(m.params.w2(1, 1) == p.w2(1, 1) * -0.25);

    CHECK_THROWS_AS(apply_mask_threshold(p, ones, -0.1), std::invalid_argument);
}

TEST_CASE("predict accuracy: argmax ties resolve to the lowest class") {
    const Graph g = path3();
    const NormalizedAdjacency adj = normalized_adjacency(g);
    ParamSet constant = ParamSet::shaped(2, 4, 2);  // all-zero weights: constant logits
    std::vector<int> ids{0, 1, 2};
    const std::vector<int> zeros_labels{0, 0, 0};
    CHECK(predict_accuracy(constant, nullptr, adj, g.features, zeros_labels, ids) == 1.0);
    CHECK(predict_accuracy(constant, nullptr, adj, g.features, g.labels, ids) ==
          doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(predict_accuracy(constant, nullptr, adj, g.features, g.labels, {}),
                    std::invalid_argument);
}

TEST_CASE("predict accuracy: equals per-node brute force on a random instance") {
    const Graph g = generate_er(20, 0.3, 4, 33);
    const NormalizedAdjacency adj = normalized_adjacency(g);
    ParamSet p = random_params(4, 6, 3, 15);
    std::vector<int> labels(20);
    Rng rng(3);
    for (int& l : labels) l = static_cast<int>(rng.integer(3));
    std::vector<int> ids(20);
    for (int i = 0; i < 20; ++i) ids[i] = i;

    const ForwardResult fwd = forward(p, nullptr, adj, g.features);
    long correct = 0;
    for (int i : ids) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (fwd.logits(i, c) > fwd.logits(i, best)) best = c;
        if (best == labels[i]) ++correct;
    }
    CHECK(predict_accuracy(p, nullptr, adj, g.features, labels, ids) ==
          doctest::Approx(static_cast<double>(correct) / 20.0));
}

TEST_CASE("roc auc: known values") {
    CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
    CHECK(roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
}

TEST_CASE("roc auc: brute-force pair counting and monotone invariance") {
    Rng rng(44);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 5 + static_cast<int>(rng.integer(20));
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) {
            scores[i] = std::floor(rng.uniform() * 8.0) / 8.0;  // force some ties
            labels[i] = rng.uniform() < 0.5 ? 0 : 1;
        }
        labels[0] = 0;
        labels[1] = 1;

        double wins = 0.0;
        long pairs = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (labels[i] != 1 || labels[j] != 0) continue;
                ++pairs;
                if (scores[i] > scores[j])
                    wins += 1.0;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
        const double expected = wins / static_cast<double>(pairs);
        CHECK(roc_auc(scores, labels) == doctest::Approx(expected).epsilon(1e-12));

        std::vector<double> transformed(n);
        for (int i = 0; i < n; ++i) transformed[i] = std::exp(3.0 * scores[i]) + 1.0;
        CHECK(roc_auc(transformed, labels) == doctest::Approx(expected).epsilon(1e-12));
    }
}
