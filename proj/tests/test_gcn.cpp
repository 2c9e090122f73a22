#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace fbgcn;
using fbgcn::testing::central_difference;
using fbgcn::testing::random_dense;
using fbgcn::testing::rel_err;

namespace {

struct Small {
    Dataset d;
    SparseSym a;
    CsrMatrix x;
    std::vector<std::int64_t> mask;
};

Small small_graph(std::int64_t n, std::uint64_t seed) {
    Small s;
    s.d = fbgcn::testing::planted_partition(n, 2, 3, 0.7, 0.2, 0.1, seed);
    s.a = renormalize_adjacency(s.d.adjacency);
    s.x = row_normalize_features(s.d.features);
    for (std::int64_t i = 0; i < n; ++i)
        if (i % 3 != 2) s.mask.push_back(i);
    return s;
}

}  // namespace

TEST(Glorot, BoundsDeterminismAndVariance) {
    Dense one = glorot_init(1, 1, 3u);
    EXPECT_LE(std::abs(one(0, 0)), std::sqrt(3.0));
    EXPECT_EQ(glorot_init(5, 4, 9u), glorot_init(5, 4, 9u));
    Dense w = glorot_init(100, 100, 1u);
    EXPECT_LE(w.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 200.0));
    const double var = (w.array() - w.mean()).square().sum() / (w.size() - 1);
    EXPECT_LT(std::abs(var - 2.0 / 200.0) / (2.0 / 200.0), 0.10);
    EXPECT_THROW(glorot_init(0, 3, 1u), UsageError);
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
    auto s = small_graph(8, 1);
    GcnModel m;
    m.W1 = Dense::Zero(s.x.cols(), 4);
    m.W2 = Dense::Zero(4, 2);
    auto c = forward(m, s.x, Propagator(s.a));
    EXPECT_EQ(c.logits, Dense(Dense::Zero(8, 2)));
    EXPECT_NEAR(masked_xent(c.logits, s.d.labels, s.mask), std::log(2.0), 1e-15);
}

TEST(Forward, PathGraphMatchesDenseOracle) {
    auto p = synthetic_graph(GraphKind::path, 4, 0);
    SparseSym a = renormalize_adjacency(p.adjacency);
    std::mt19937_64 rng(2);
    GcnModel m = make_model(4, 5, 2, rng);
    Dense ad = a.to_dense(), xd = p.features.to_dense();
    Dense expect = ad * (ad * xd * m.W1).cwiseMax(0.0) * m.W2;
    EXPECT_LT((forward(m, p.features, Propagator(a)).logits - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, EvaluationModeIgnoresDropout) {
    auto s = small_graph(10, 2);
    std::mt19937_64 rng(3);
    GcnModel m = make_model(s.x.cols(), 4, 2, rng);
    auto eval = forward(m, s.x, Propagator(s.a));
    auto masks = sample_dropout(s.x, 4, 0.0, rng);
    EXPECT_EQ(forward(m, s.x, Propagator(s.a), &masks).logits, eval.logits);
}

TEST(Xent, Examples) {
    std::vector<int> labels(3, 4);
    std::vector<std::int64_t> mask{0, 1, 2};
    EXPECT_NEAR(masked_xent(Dense::Zero(3, 7), labels, mask), std::log(7.0), 1e-15);
    EXPECT_NEAR(std::log(7.0), 1.9459, 1e-4);

    Dense sure = Dense::Zero(3, 7);
    sure.col(4).setConstant(800.0);
    EXPECT_EQ(masked_xent(sure, labels, mask), 0.0);
    EXPECT_THROW(masked_xent(sure, labels, {}), UsageError);
}

TEST(Xent, MatchesNaiveSummation) {
    std::mt19937_64 rng(4);
    Dense logits = random_dense(5, 3, rng);
    std::vector<int> labels{0, 2, 1, 1, 0};
    std::vector<std::int64_t> mask{0, 1, 3, 4};
    double naive = 0.0;
    for (auto i : mask) naive -= std::log(std::exp(logits(i, labels[i])) / logits.row(i).array().exp().sum());
    EXPECT_NEAR(masked_xent(logits, labels, mask), naive / 4.0, 1e-12);
}

TEST(Backward, MatchesFiniteDifferences) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto s = small_graph(6, seed);
        std::mt19937_64 rng(seed);
        GcnModel m = make_model(s.x.cols(), 4, 2, rng);
        m.W1 *= 3.0;
        auto masks = sample_dropout(s.x, 4, 0.25, rng);
        Propagator prop(s.a);
        auto c = forward(m, s.x, prop, &masks);
        auto g = backward(m, c, prop, s.d.labels, s.mask);
        EXPECT_FALSE(g.delta.has_value());
        for (int layer = 1; layer <= 2; ++layer) {
            const Dense& w = layer == 1 ? m.W1 : m.W2;
            const Dense& gw = layer == 1 ? g.W1 : g.W2;
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                const double fd = central_difference(
                    [&](double h) {
                        GcnModel q = m;
                        (layer == 1 ? q.W1 : q.W2).data()[i] += h;
                        return masked_xent(forward(q, s.x, prop, &masks).logits, s.d.labels, s.mask);
                    },
                    1e-6);
                EXPECT_LE(rel_err(gw.data()[i], fd, 1e-7), 1e-6) << "seed " << seed << " layer " << layer << " i " << i;
            }
        }
    }
}

TEST(Backward, FullPipelineIncludingSpectralShape) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto r = fbgcn::testing::pipeline_gradient_check(10, seed);
        EXPECT_LE(r.w1, 1e-5) << seed;
        EXPECT_LE(r.w2, 1e-5) << seed;
        EXPECT_LE(r.xi, 1e-5) << seed;
    }
}

TEST(Backward, PerfectFitGivesVanishingGradients) {
    auto s = small_graph(6, 5);
    std::mt19937_64 rng(5);
    GcnModel m = make_model(s.x.cols(), 4, 2, rng);
    auto c = forward(m, s.x, Propagator(s.a));
    Dense sure = Dense::Zero(6, 2);
    for (int i = 0; i < 6; ++i) sure(i, s.d.labels[i]) = 800.0;
    auto g = backward_from_logits(m, c, Propagator(s.a), masked_xent_grad(sure, s.d.labels, s.mask));
    EXPECT_LT(g.W1.cwiseAbs().maxCoeff(), 1e-300);
    EXPECT_LT(g.W2.cwiseAbs().maxCoeff(), 1e-300);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
    Dense w = Dense::Zero(2, 2), g{{0.5, -2.0}, {1e-3, 0.0}};
    AdamState st = AdamState::zeros_like(w);
    adam_step(w, st, g, 0.01);
    EXPECT_NEAR(w(0, 0), -0.01, 1e-9);
    EXPECT_NEAR(w(0, 1), 0.01, 1e-9);
    EXPECT_NEAR(w(1, 0), -0.01, 1e-7);
    EXPECT_EQ(w(1, 1), 0.0);
    EXPECT_EQ(st.t, 1);
}

TEST(Adam, ZeroGradientLeavesWeights) {
    std::mt19937_64 rng(1);
    Dense w = random_dense(3, 3, rng), before = w;
    AdamState st = AdamState::zeros_like(w);
    adam_step(w, st, Dense::Zero(3, 3), 0.01);
    EXPECT_EQ(w, before);
}

TEST(Adam, WeightDecayOnFirstLayerOnly) {
    std::mt19937_64 rng(2);
    GcnModel m = make_model(3, 2, 2, rng);
    GcnModel before = m;
    Gradients g{Dense::Zero(3, 2), Dense::Zero(2, 2), std::nullopt};
    adam_step(m, g, 0.01, 5e-4);
    EXPECT_NE(m.W1, before.W1);
    EXPECT_EQ(m.W2, before.W2);
}

TEST(Adam, DeterministicOverTenSteps) {
    auto run = [] {
        auto s = small_graph(12, 7);
        std::mt19937_64 rng(7);
        GcnModel m = make_model(s.x.cols(), 4, 2, rng);
        for (int step = 0; step < 10; ++step) {
            auto masks = sample_dropout(s.x, 4, 0.5, rng);
            auto c = forward(m, s.x, Propagator(s.a), &masks);
            adam_step(m, backward(m, c, Propagator(s.a), s.d.labels, s.mask), 0.01, 5e-4);
        }
        return m;
    };
    auto a = run(), b = run();
    EXPECT_EQ(a.W1, b.W1);
    EXPECT_EQ(a.W2, b.W2);
}

TEST(Dropout, PreservesExpectation) {
    auto s = small_graph(20, 8);
    std::mt19937_64 rng(8);
    const double rate = 0.5;
    std::vector<double> input_mean(static_cast<std::size_t>(s.x.nnz()), 0.0);
    Dense hidden_mean = Dense::Zero(20, 3);
    const int draws = 10000;
    for (int t = 0; t < draws; ++t) {
        auto m = sample_dropout(s.x, 3, rate, rng);
        for (std::size_t p = 0; p < input_mean.size(); ++p) input_mean[p] += m.input[p] / draws;
        hidden_mean += m.hidden / draws;
        for (double v : m.input) ASSERT_TRUE(v == 0.0 || v == 2.0);
    }
    double worst = std::abs(hidden_mean.mean() - 1.0);
    double avg = 0.0;
    for (double v : input_mean) avg += v / static_cast<double>(input_mean.size());
    worst = std::max(worst, std::abs(avg - 1.0));
    EXPECT_LT(worst, 0.02);
    EXPECT_THROW(sample_dropout(s.x, 3, 1.0, rng), UsageError);
}

TEST(Features, RowNormalization) {
    auto x = CsrMatrix::from_triplets(3, 3, {{0, 0, 1.0}, {0, 2, 3.0}, {2, 1, 5.0}});
    Dense n = row_normalize_features(x).to_dense();
    EXPECT_DOUBLE_EQ(n(0, 0), 0.25);
    EXPECT_DOUBLE_EQ(n(0, 2), 0.75);
    EXPECT_EQ(n.row(1).sum(), 0.0);
    EXPECT_EQ(n(2, 1), 1.0);
}

TEST(Accuracy, ShiftInvariantAndPerfect) {
    std::mt19937_64 rng(9);
    Dense logits = random_dense(6, 3, rng);
    std::vector<int> labels{0, 1, 2, 0, 1, 2};
    std::vector<std::int64_t> mask{0, 1, 2, 3, 4, 5};
    Dense shifted = logits;
    shifted.row(2).array() += 10.0;
    EXPECT_EQ(accuracy(logits, labels, mask), accuracy(shifted, labels, mask));
    Dense perfect = Dense::Zero(6, 3);
    for (int i = 0; i < 6; ++i) perfect(i, labels[i]) = 1.0;
    EXPECT_EQ(accuracy(perfect, labels, mask), 1.0);
}
