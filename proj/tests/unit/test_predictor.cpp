#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../common/gradcheck.hpp"
#include "plu/augment.hpp"
#include "plu/checkpoint.hpp"
#include "plu/predictor.hpp"

namespace {

std::vector<double> flat(const plu::Mlp& net) {
    std::vector<double> out;
    for (const auto& L : net.layers()) {
        out.insert(out.end(), L.w.begin(), L.w.end());
        out.insert(out.end(), L.b.begin(), L.b.end());
    }
    return out;
}

std::vector<double> flat(const plu::Gradients& g) {
    std::vector<double> out;
    for (const auto& L : g.layers) {
        out.insert(out.end(), L.w.begin(), L.w.end());
        out.insert(out.end(), L.b.begin(), L.b.end());
    }
    return out;
}

} // namespace

TEST(Init, DeterministicWithZeroBiases) {
    const auto a = plu::init_predictor(32, 64, 32, 3);
    const auto b = plu::init_predictor(32, 64, 32, 3);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, plu::init_predictor(32, 64, 32, 4));
    for (const auto& L : a.layers())
        for (double v : L.b) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(a.output_dim(), 2);
    EXPECT_EQ(a.parameter_count(), 32u * 64 + 64 + 64 * 32 + 32 + 32 * 2 + 2);
}

TEST(Init, GlorotBoundsAndMean) {
    const auto net = plu::init_predictor(100, 100, 100, 17);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& L : net.layers()) {
        const double a = std::sqrt(6.0 / (L.in + L.out));
        for (double v : L.w) {
            EXPECT_LE(std::abs(v), a);
            sum += v;
            ++n;
        }
    }
    ASSERT_GE(n, 10000u);
    EXPECT_LT(std::abs(sum / static_cast<double>(n)), 0.02);
}

TEST(Forward, ZeroNetworkGivesZeroLogits) {
    const plu::Mlp net({3, 4, 2, 2});
    const std::vector<double> x{1.5, -2.0, 7.0};
    EXPECT_EQ(net.forward(x), (std::vector<double>{0.0, 0.0}));
}

TEST(Forward, PureFunction) {
    const auto net = plu::init_predictor(5, 7, 3, 1);
    const std::vector<double> x{0.1, -0.3, 0.5, 2.0, -1.0};
    EXPECT_EQ(net.forward(x), net.forward(x));
}

TEST(Forward, HandBuiltTwoLayerNetwork) {
    plu::Mlp net({2, 2, 2});
    auto& L = net.layers();
    L[0].w = {1, 1, 1, 1};
    L[0].b = {0.5, -0.25};
    L[1].w = {1, 1, 1, 1};
    L[1].b = {0.1, -0.2};
    const std::vector<double> x{0.3, 0.7};
    // h = (0.3+0.7+0.5, 0.3+0.7-0.25) = (1.5, 0.75), both positive
    // z = (1.5+0.75+0.1, 1.5+0.75-0.2) = (2.35, 2.05)
    const auto z = net.forward(x);
    EXPECT_NEAR(z[0], 2.35, 1e-12);
    EXPECT_NEAR(z[1], 2.05, 1e-12);
}

TEST(Forward, ReluClipsNegativeHidden) {
    plu::Mlp net({1, 1, 1});
    net.layers()[0].w = {1.0};
    net.layers()[1].w = {2.0};
    net.layers()[1].b = {0.5};
    const std::vector<double> neg{-3.0}, pos{3.0};
    EXPECT_DOUBLE_EQ(net.forward(neg)[0], 0.5);
    EXPECT_DOUBLE_EQ(net.forward(pos)[0], 6.5);
}

TEST(Forward, DimensionMismatchIsShapeError) {
    const plu::Mlp net({3, 2});
    const std::vector<double> x{1.0, 2.0};
    EXPECT_THROW(net.forward(x), plu::ShapeError);
}

TEST(Softmax, StableAndMasked) {
    const std::vector<double> z{1000.0, 1000.0};
    const auto p = plu::softmax(z);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    const std::vector<double> z3{1.0, 2.0, 3.0};
    const std::vector<char> active{1, 0, 1};
    const auto q = plu::softmax(z3, active);
    EXPECT_EQ(q[1], 0.0);
    EXPECT_NEAR(q[0], 1.0 / (1.0 + std::exp(2.0)), 1e-15);
    EXPECT_NEAR(plu::cross_entropy(z3, 2, active), std::log(1.0 + std::exp(-2.0)), 1e-15);
}

TEST(Backward, ConfidentCorrectHasTinyLoss) {
    plu::Mlp net({1, 2});
    net.layers()[0].b = {0.0, 20.0};
    const std::vector<double> x{0.0};
    const std::vector<plu::Sample> batch{{x, 1, 1.0}};
    EXPECT_LT(plu::backward(net, batch).loss, 1e-8);
}

TEST(Backward, ZeroInitLossIsLn2) {
    const plu::Mlp net({4, 3, 3, 2});
    const std::vector<double> x{1, 2, 3, 4};
    for (int label : {0, 1}) {
        const std::vector<plu::Sample> batch{{x, label, 1.0}};
        EXPECT_NEAR(plu::backward(net, batch).loss, std::log(2.0), 1e-12);
    }
}

TEST(Backward, EmptyBatchThrows) {
    const plu::Mlp net({2, 2});
    EXPECT_THROW(plu::backward(net, {}), plu::InvalidInput);
}

TEST(Backward, AllMaskedGivesZero) {
    const auto net = plu::init_predictor(3, 4, 4, 2);
    const std::vector<double> x{1, 2, 3};
    const std::vector<plu::Sample> batch{{x, 1, 0.0}, {x, 0, 0.0}};
    const auto r = plu::backward(net, batch);
    EXPECT_EQ(r.loss, 0.0);
    for (double v : flat(r.grads)) EXPECT_EQ(v, 0.0);
}

TEST(Backward, MatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto c = gradcheck::random_case(seed);
        const auto r = gradcheck::check(c.net, c.batch);
        EXPECT_GT(r.checked, 0u);
        EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
    }
}

TEST(Backward, GradcheckCasesStayClearOfReluKinks) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const auto c = gradcheck::random_case(seed * 7919);
        EXPECT_GE(gradcheck::kink_margin(c.net, c.batch), 1e-3) << "seed " << seed;
    }
    // hand case: one hidden unit exactly at zero
    plu::Mlp net({1, 1, 1, 2});
    net.layers()[0].w = {1.0};
    const std::vector<double> x{0.0};
    EXPECT_EQ(gradcheck::kink_margin(net, {{x, 1, 1.0}}), 0.0);
}

TEST(Backward, MaskingEqualsRemoval) {
    auto c = gradcheck::random_case(42);
    std::vector<plu::Sample> masked = c.batch;
    masked[3].weight = 0.0;
    std::vector<plu::Sample> removed;
    for (std::size_t i = 0; i < c.batch.size(); ++i)
        if (i != 3) removed.push_back(c.batch[i]);
    const auto a = plu::backward(c.net, masked);
    const auto b = plu::backward(c.net, removed);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    const auto ga = flat(a.grads), gb = flat(b.grads);
    ASSERT_EQ(ga.size(), gb.size());
    for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(ga[i], gb[i], 1e-12);
}

TEST(Backward, LossNeverNegative) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto c = gradcheck::random_case(seed);
        EXPECT_GE(plu::backward(c.net, c.batch).loss, 0.0);
    }
}

TEST(Sgd, ZeroLearningRateLeavesParameters) {
    auto net = plu::init_predictor(3, 4, 4, 5);
    const auto before = net;
    auto g = net.zero_gradients();
    for (auto& L : g.layers)
        for (auto& v : L.w) v = 1.0;
    plu::OptimState opt{0.0, 0.9, {}};
    plu::sgd_step(net, g, opt);
    EXPECT_EQ(net, before);
}

TEST(Sgd, UnitStepSubtractsOne) {
    auto net = plu::init_predictor(3, 4, 4, 5);
    const auto before = flat(net);
    auto g = net.zero_gradients();
    for (auto& L : g.layers) {
        std::fill(L.w.begin(), L.w.end(), 1.0);
        std::fill(L.b.begin(), L.b.end(), 1.0);
    }
    plu::OptimState opt{1.0, 0.0, {}};
    plu::sgd_step(net, g, opt);
    const auto after = flat(net);
    for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i], before[i] - 1.0);
}

TEST(Sgd, MomentumAccumulates) {
    plu::Mlp net({1, 1});
    auto g = net.zero_gradients();
    g.layers[0].w = {2.0};
    plu::OptimState opt{0.5, 0.5, {}};
    plu::sgd_step(net, g, opt);  // v = 2, w = -1
    plu::sgd_step(net, g, opt);  // v = 3, w = -2.5
    EXPECT_DOUBLE_EQ(net.layers()[0].w[0], -2.5);
    EXPECT_DOUBLE_EQ(opt.velocity.layers[0].w[0], 3.0);
}

TEST(Sgd, NonFiniteGradientIsNumericalError) {
    auto net = plu::init_predictor(2, 2, 2, 1);
    auto g = net.zero_gradients();
    g.layers[1].b[0] = std::nan("");
    plu::OptimState opt;
    try {
        plu::sgd_step(net, g, opt);
        FAIL();
    } catch (const plu::NumericalError& e) {
        EXPECT_EQ(e.exit_code(), plu::ExitCode::numerical_failure);
    }
}

TEST(Sgd, ShapeMismatchIsShapeError) {
    auto net = plu::init_predictor(2, 2, 2, 1);
    const auto other = plu::init_predictor(3, 2, 2, 1);
    plu::OptimState opt;
    EXPECT_THROW(plu::sgd_step(net, other.zero_gradients(), opt), plu::ShapeError);
}

TEST(Sgd, SeparableBlobsReachFullAccuracy) {
    std::mt19937_64 g(8);
    std::normal_distribution<double> nrm(0.0, 0.3);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 100; ++i) {
        const int y = i % 2;
        xs.push_back({(y ? 1.5 : -1.5) + nrm(g), (y ? 1.0 : -1.0) + nrm(g)});
        ys.push_back(y);
    }
    auto net = plu::init_predictor(2, 8, 8, 3);
    plu::OptimState opt{0.1, 0.9, {}};
    std::vector<plu::Sample> batch;
    for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({xs[i], ys[i], 1.0});
    for (int step = 0; step < 200; ++step) plu::sgd_step(net, plu::backward(net, batch).grads, opt);
    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto z = net.forward(xs[i]);
        correct += (z[1] > z[0]) == (ys[i] == 1);
    }
    EXPECT_EQ(correct, 100);
}

TEST(Augment, NullAugmentationIsIdentity) {
    const std::vector<double> x{0.5, -1.0, 2.0};
    EXPECT_EQ(plu::weak_augment(x, 3, 0.0), x);
    EXPECT_EQ(plu::strong_augment(x, 3, 0.0, 0.0), x);
}

TEST(Augment, DeterministicGivenSeed) {
    const std::vector<double> x{0.5, -1.0, 2.0};
    EXPECT_EQ(plu::weak_augment(x, 3), plu::weak_augment(x, 3));
    EXPECT_EQ(plu::strong_augment(x, 3), plu::strong_augment(x, 3));
    EXPECT_NE(plu::strong_augment(x, 3), plu::strong_augment(x, 4));
}

TEST(Augment, StrongPreservesMean) {
    const std::vector<double> x{1.0, -0.5, 0.25, 2.0, 0.0};
    double nx = 0.0;
    for (double v : x) nx += v * v;
    nx = std::sqrt(nx);
    std::vector<double> mean(x.size(), 0.0);
    const int n = 10000;
    for (int s = 0; s < n; ++s) {
        const auto y = plu::strong_augment(x, static_cast<std::uint64_t>(s) + 1);
        for (std::size_t i = 0; i < x.size(); ++i) mean[i] += y[i] / n;
    }
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(std::abs(mean[i] - x[i]), 0.02 * nx) << i;
}

TEST(Augment, WeakPerturbsLessThanStrong) {
    const std::vector<double> x{1.0, -0.5, 0.25, 2.0, 0.0, 0.7, -1.2, 0.3};
    auto dist = [&](const std::vector<double>& y) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (y[i] - x[i]) * (y[i] - x[i]);
        return std::sqrt(s);
    };
    double weak = 0.0, strong = 0.0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        weak += dist(plu::weak_augment(x, s));
        strong += dist(plu::strong_augment(x, s));
    }
    EXPECT_LT(weak, strong);
}

TEST(Checkpoint, RoundTripIsExact) {
    auto c = gradcheck::random_case(5);
    plu::OptimState opt{0.01, 0.9, {}};
    plu::sgd_step(c.net, plu::backward(c.net, c.batch).grads, opt);
    const std::string path = ::testing::TempDir() + "plu_ckpt.json";
    plu::save_checkpoint(c.net, opt, path);
    const auto back = plu::load_checkpoint(path);
    EXPECT_EQ(back.net, c.net);
    EXPECT_EQ(back.opt, opt);
}

TEST(Checkpoint, RejectsForeignJson) {
    EXPECT_THROW(plu::checkpoint_from(nlohmann::json{{"kind", "other"}}), plu::SchemaError);
}
