#include <gtest/gtest.h>

#include <cmath>

#include "../common/oracles.hpp"
#include "plu/metrics.hpp"

using plu::BBox;
using plu::Detection;
using plu::kUnknownLabel;
using plu::SceneTruth;

namespace {

const BBox kA{0.0, 0.0, 0.2, 0.2};
const BBox kB{0.5, 0.5, 0.7, 0.7};
const BBox kU{0.1, 0.6, 0.3, 0.9};
const BBox kNowhere{0.8, 0.0, 0.95, 0.15};

SceneTruth one_scene() { return {1, {{0, kA}, {0, kB}}, {kU}}; }

} // namespace

TEST(PrCurve, PerfectDetector) {
    const std::vector<SceneTruth> t{{1, {{0, kA}}, {}}};
    const std::vector<Detection> d{{1, 0, kA, 0.9}};
    const auto c = plu::pr_curve(d, t, 0);
    ASSERT_EQ(c.points.size(), 1u);
    EXPECT_EQ(c.points[0], (plu::PrPoint{1.0, 1.0}));
    EXPECT_DOUBLE_EQ(plu::average_precision(c), 1.0);
}

TEST(PrCurve, DuplicateIsFalsePositive) {
    const std::vector<SceneTruth> t{{1, {{0, kA}}, {}}};
    const std::vector<Detection> d{{1, 0, kA, 0.9}, {1, 0, kA, 0.9}};
    const auto c = plu::pr_curve(d, t, 0);
    ASSERT_EQ(c.points.size(), 2u);
    EXPECT_EQ(c.points[0], (plu::PrPoint{1.0, 1.0}));
    EXPECT_EQ(c.points[1], (plu::PrPoint{0.5, 1.0}));
}

TEST(PrCurve, OtherClassAndOtherSceneDoNotMatch) {
    const std::vector<SceneTruth> t{{1, {{0, kA}}, {}}, {2, {{1, kA}}, {}}};
    const std::vector<Detection> d{{2, 0, kA, 0.9}, {1, 1, kA, 0.8}};
    const auto c = plu::pr_curve(d, t, 0);
    ASSERT_EQ(c.points.size(), 1u);
    EXPECT_EQ(c.points[0].precision, 0.0);
}

TEST(PrCurve, NoGroundTruthIsFlagged) {
    const std::vector<SceneTruth> t{{1, {{0, kA}}, {}}};
    const std::vector<Detection> d{{1, 3, kA, 0.9}};
    const auto c = plu::pr_curve(d, t, 3);
    EXPECT_TRUE(c.flagged);
    EXPECT_EQ(plu::average_precision(c), 0.0);
}

TEST(PrCurve, MatchesPrefixEnumerationOracle) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto f = oracle::random_fixture(seed);
        for (int c : f.known) {
            const auto mine = plu::pr_curve(f.dets, f.truths, c);
            if (mine.flagged) continue;
            const auto ref = oracle::pr_points(f.dets, f.truths, c);
            ASSERT_EQ(mine.points.size(), ref.size());
            for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_EQ(mine.points[k], ref[k]) << seed << "/" << c << "/" << k;
            EXPECT_NEAR(plu::average_precision(mine), oracle::envelope_ap(ref), 1e-12);
        }
    }
}

TEST(Ap, HandIntegratedEnvelope) {
    plu::PrCurve c;
    c.points = {{1.0, 0.5}, {0.5, 1.0}};
    EXPECT_DOUBLE_EQ(plu::average_precision(c), 0.75);
    c.points.clear();
    EXPECT_EQ(plu::average_precision(c), 0.0);
}

TEST(Ap, EnvelopeFillsDips) {
    plu::PrCurve c;
    // precision dips then recovers at higher recall
    c.points = {{1.0, 0.25}, {0.5, 0.25}, {0.667, 0.5}, {0.5, 0.5}};
    EXPECT_NEAR(plu::average_precision(c), 0.25 * 1.0 + 0.25 * 0.667, 1e-12);
}

TEST(Ap, ElevenPoint) {
    plu::PrCurve c;
    c.points = {{1.0, 0.5}, {0.5, 1.0}};
    EXPECT_NEAR(plu::average_precision(c, plu::ApMode::eleven_point), (6 * 1.0 + 5 * 0.5) / 11.0, 1e-12);
}

TEST(Ap, InUnitIntervalOnRandomFixtures) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto f = oracle::random_fixture(seed);
        for (int c : f.known) {
            const double ap = plu::average_precision(plu::pr_curve(f.dets, f.truths, c));
            EXPECT_GE(ap, 0.0);
            EXPECT_LE(ap, 1.0);
        }
    }
}

TEST(Wi, DirectArithmetic) {
    EXPECT_NEAR(plu::wilderness_impact_from_precisions(0.8, 0.64), 0.25, 1e-12);
    EXPECT_EQ(plu::wilderness_impact_from_precisions(0.5, 0.5), 0.0);
}

TEST(Wi, NoConfusionIsZero) {
    const std::vector<SceneTruth> t{one_scene()};
    const std::vector<Detection> d{{1, 0, kA, 0.9}, {1, 0, kB, 0.8}, {1, 0, kNowhere, 0.7}};
    const std::vector<int> known{0};
    const auto r = plu::wilderness_impact(d, t, known);
    EXPECT_EQ(r.wi, 0.0);
    EXPECT_TRUE(r.reached);
    EXPECT_EQ(r.a_ose, 0u);
}

TEST(Wi, HandFixtureWithOneOpenSetHit) {
    const std::vector<SceneTruth> t{one_scene()};
    const std::vector<Detection> d{
        {1, 0, kA, 0.9}, {1, 0, kU, 0.8}, {1, 0, kB, 0.7}, {1, 0, kNowhere, 0.6}};
    const std::vector<int> known{0};
    const auto r = plu::wilderness_impact(d, t, known, 0.8);
    // recall 0.8 of 2 GTs needs both: operating set is the first three
    EXPECT_EQ(r.operating_count, 3u);
    EXPECT_EQ(r.tp, 2u);
    EXPECT_EQ(r.fp_open, 1u);
    EXPECT_EQ(r.fp_closed, 0u);
    EXPECT_DOUBLE_EQ(r.p_known, 1.0);
    EXPECT_DOUBLE_EQ(r.p_known_unknown, 2.0 / 3.0);
    EXPECT_NEAR(r.wi, 0.5, 1e-12);
    EXPECT_EQ(r.a_ose, 1u);
    EXPECT_DOUBLE_EQ(r.threshold, 0.7);
    // at recall 0.5 only the first detection counts
    const auto half = plu::wilderness_impact(d, t, known, 0.5);
    EXPECT_EQ(half.operating_count, 1u);
    EXPECT_EQ(half.wi, 0.0);
}

TEST(Wi, UnreachableRecallIsFlaggedAtMaxRecall) {
    const std::vector<SceneTruth> t{one_scene()};
    const std::vector<Detection> d{{1, 0, kU, 0.9}, {1, 0, kA, 0.8}, {1, 0, kNowhere, 0.7}};
    const std::vector<int> known{0};
    const auto r = plu::wilderness_impact(d, t, known, 0.8);
    EXPECT_FALSE(r.reached);
    EXPECT_TRUE(r.flagged);
    EXPECT_EQ(r.operating_count, 2u);
    EXPECT_DOUBLE_EQ(r.operating_recall, 0.5);
    EXPECT_NEAR(r.wi, 1.0, 1e-12);
}

TEST(Wi, AtLeastMinusOneAndA_OseOracle) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto f = oracle::random_fixture(seed);
        const auto r = plu::wilderness_impact(f.dets, f.truths, f.known);
        EXPECT_GE(r.wi, -1.0);
        EXPECT_EQ(r.a_ose, oracle::a_ose(f.dets, f.truths, f.known)) << "seed " << seed;
        EXPECT_EQ(plu::a_ose(f.dets, f.truths, f.known), r.a_ose);
    }
}

TEST(URecall, CountsCoveredUnknowns) {
    const BBox u2{0.6, 0.1, 0.8, 0.3}, u3{0.3, 0.3, 0.45, 0.45}, u4{0.05, 0.3, 0.25, 0.5};
    const std::vector<SceneTruth> t{{1, {}, {kU, u2, u3, u4}}};
    std::vector<Detection> d{{1, kUnknownLabel, kU, 0.5}, {1, kUnknownLabel, u2, 0.5}, {1, 0, u3, 0.9}};
    EXPECT_DOUBLE_EQ(*plu::u_recall(d, t), 0.5);
    d.push_back({1, kUnknownLabel, u3, 0.1});
    d.push_back({1, kUnknownLabel, u4, 0.1});
    EXPECT_DOUBLE_EQ(*plu::u_recall(d, t), 1.0);
}

TEST(URecall, AbsentWithoutUnknowns) {
    const std::vector<SceneTruth> t{{1, {{0, kA}}, {}}};
    const std::vector<Detection> d{{1, kUnknownLabel, kA, 0.5}};
    EXPECT_FALSE(plu::u_recall(d, t).has_value());
}

TEST(URecall, MatchesAllPairsOracle) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto f = oracle::random_fixture(seed);
        const auto mine = plu::u_recall(f.dets, f.truths);
        const double ref = oracle::u_recall(f.dets, f.truths);
        if (ref < 0) {
            EXPECT_FALSE(mine.has_value());
        } else {
            ASSERT_TRUE(mine.has_value());
            EXPECT_EQ(*mine, ref) << "seed " << seed;
        }
    }
}

TEST(AOse, SingleErrorAndNone) {
    const std::vector<SceneTruth> t{one_scene()};
    const std::vector<int> known{0};
    const std::vector<Detection> clean{{1, 0, kA, 0.9}, {1, 0, kB, 0.9}};
    EXPECT_EQ(plu::a_ose(clean, t, known), 0u);
    EXPECT_EQ(plu::count_open_set_errors(clean, t, known), 0u);
    const std::vector<Detection> one{{1, 0, kA, 0.9}, {1, 0, kU, 0.85}, {1, 0, kB, 0.8}};
    EXPECT_EQ(plu::a_ose(one, t, known), 1u);
    EXPECT_EQ(plu::count_open_set_errors(one, t, known), 1u);
    // unknown-labelled detections are never open-set errors
    const std::vector<Detection> unk{{1, kUnknownLabel, kU, 0.9}};
    EXPECT_EQ(plu::count_open_set_errors(unk, t, known), 0u);
}

TEST(Invariance, ConfidenceScalingChangesNothing) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const auto f = oracle::random_fixture(seed);
        auto scaled = f.dets;
        for (auto& d : scaled) d.confidence *= 0.37;
        const std::vector<int> prev{0}, cur{1, 2};
        const auto a = plu::evaluate(f.dets, f.truths, prev, cur, true);
        const auto b = plu::evaluate(scaled, f.truths, prev, cur, true);
        EXPECT_EQ(a.per_class_ap, b.per_class_ap);
        EXPECT_EQ(a.wi, b.wi);
        EXPECT_EQ(a.u_recall, b.u_recall);
        EXPECT_EQ(a.a_ose, b.a_ose);
    }
}

TEST(Invariance, StrayDetectionNeverRaisesAp) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        auto f = oracle::random_fixture(seed);
        for (int c : f.known) {
            const auto base = plu::pr_curve(f.dets, f.truths, c);
            if (base.flagged) continue;
            auto more = f.dets;
            // a box overlapping nothing in any scene
            more.push_back({f.truths[0].scene_id, c, {0.999, 0.999, 1.0, 1.0}, 0.55});
            EXPECT_LE(plu::average_precision(plu::pr_curve(more, f.truths, c)), plu::average_precision(base) + 1e-15);
        }
    }
}

TEST(Invariance, OpenSetHitAboveThresholdNeverLowersAOse) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        auto f = oracle::random_fixture(seed);
        const auto base = plu::wilderness_impact(f.dets, f.truths, f.known);
        for (const auto& t : f.truths) {
            if (t.unknown_objects.empty()) continue;
            auto more = f.dets;
            more.push_back({t.scene_id, 0, t.unknown_objects[0], 1.0});
            EXPECT_GE(plu::wilderness_impact(more, f.truths, f.known).a_ose, base.a_ose) << seed;
            break;
        }
    }
}

TEST(Evaluate, SectionsFollowTaskShape) {
    const std::vector<SceneTruth> t{one_scene()};
    const std::vector<Detection> d{{1, 0, kA, 0.9}, {1, kUnknownLabel, kU, 0.5}};
    const std::vector<int> none, cur{0};
    const auto first = plu::evaluate(d, t, none, cur, true);
    EXPECT_FALSE(first.map_previous.has_value());
    EXPECT_TRUE(first.map_current.has_value());
    EXPECT_TRUE(first.wi.has_value());
    EXPECT_DOUBLE_EQ(*first.u_recall, 1.0);
    EXPECT_EQ(first.n_unknown_detections, 1u);
    EXPECT_EQ(first.n_known_detections, 1u);
    const auto last = plu::evaluate(d, t, cur, none, false);
    EXPECT_TRUE(last.map_previous.has_value());
    EXPECT_FALSE(last.map_current.has_value());
    EXPECT_FALSE(last.wi.has_value());
    EXPECT_FALSE(last.u_recall.has_value());
    EXPECT_FALSE(last.a_ose.has_value());
}

TEST(Evaluate, MeanApSkipsClassesWithoutGroundTruth) {
    const std::vector<SceneTruth> t{{1, {{0, kA}}, {}}};
    const std::vector<Detection> d{{1, 0, kA, 0.9}};
    const std::vector<int> none, cur{0, 1};
    const auto r = plu::evaluate(d, t, none, cur, false);
    EXPECT_EQ(r.flagged_classes, (std::vector<int>{1}));
    EXPECT_DOUBLE_EQ(*r.map_current, 1.0);
}
