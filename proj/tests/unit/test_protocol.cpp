#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "plu/experiment.hpp"

namespace {

plu::RunConfig small_config(std::uint64_t seed = 11) {
    plu::RunConfig cfg;
    cfg.protocol.train_scenes = 40;
    cfg.protocol.test_scenes = 15;
    cfg.plu.train_samples = 1024;
    cfg.protocol.finetune_samples = 256;
    cfg.protocol.head.epochs = 5;
    cfg.protocol.head_finetune.epochs = 3;
    cfg.run.seed = seed;
    return cfg;
}

std::set<int> as_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

std::string reports_text(const plu::RunState& st) {
    std::ostringstream out;
    plu::write_reports_csv(out, st.reports);
    return out.str();
}

} // namespace

TEST(MakeTasks, IntroducedClassesPartitionTheKnownSets) {
    auto cfg = small_config();
    cfg.protocol.never_annotated = 3;
    const auto b = plu::build_benchmark(cfg);
    ASSERT_EQ(b.header.tasks.size(), 4u);
    const std::size_t world = b.header.classes.size();
    EXPECT_EQ(world, 4u * 5u + 3u);

    std::set<int> seen;
    std::size_t prev_known = 0;
    for (const auto& t : b.header.tasks) {
        EXPECT_EQ(t.introduced.size(), 5u);
        for (int c : t.introduced) EXPECT_TRUE(seen.insert(c).second) << "class " << c << " introduced twice";
        EXPECT_EQ(as_set(t.known), seen);
        EXPECT_GT(t.known.size(), prev_known);
        prev_known = t.known.size();

        EXPECT_EQ(t.unknown.size(), world - t.known.size());
        for (int c : t.unknown) EXPECT_FALSE(seen.count(c));
        EXPECT_EQ(t.previous().size(), t.known.size() - t.introduced.size());
    }
    for (std::size_t i = 1; i < b.header.tasks.size(); ++i)
        EXPECT_EQ(b.header.tasks[i - 1].unknown.size() - b.header.tasks[i].unknown.size(), 5u);
    EXPECT_EQ(b.header.tasks.back().unknown.size(), 3u);
}

TEST(MakeTasks, SingleTaskLeavesOnlyNeverAnnotatedUnknown) {
    auto cfg = small_config();
    cfg.protocol.n_tasks = 1;
    cfg.protocol.classes_per_task = 4;
    cfg.protocol.never_annotated = 6;
    const auto b = plu::build_benchmark(cfg);
    ASSERT_EQ(b.header.tasks.size(), 1u);
    const auto& t = b.header.tasks[0];
    EXPECT_EQ(t.known.size(), 4u);
    EXPECT_EQ(t.unknown.size(), 6u);
    EXPECT_TRUE(t.previous().empty());
}

TEST(MakeTasks, InfeasiblePartitionIsAConfigError) {
    auto cfg = small_config();
    const auto world = plu::generate_world(3, 2, cfg.world.d, {1.0, 2.0}, 1, cfg.world.spread);
    EXPECT_THROW(plu::make_tasks(world, cfg.world, cfg.protocol, 1), plu::ConfigError);
}

TEST(MakeTasks, SceneIdsAreDisjointAcrossSplitsAndTasks) {
    const auto b = plu::build_benchmark(small_config());
    std::set<int> ids;
    for (const auto& t : b.header.tasks) {
        EXPECT_EQ(t.train_ids.size(), 40u);
        EXPECT_EQ(t.test_ids.size(), 15u);
        for (int id : t.train_ids) EXPECT_TRUE(ids.insert(id).second);
        for (int id : t.test_ids) EXPECT_TRUE(ids.insert(id).second);
    }
    EXPECT_EQ(ids.size(), b.scenes.size());
}

TEST(MakeTasks, AnnotationsCoverExactlyTheKnownObjects) {
    const auto b = plu::build_benchmark(small_config());
    for (const auto& t : b.header.tasks) {
        const auto known = as_set(t.known);
        for (int id : t.train_ids) {
            const auto& s = b.scene(id);
            std::size_t known_objects = 0;
            for (const auto& o : s.objects) known_objects += known.count(o.class_id);
            EXPECT_EQ(s.gt.size(), known_objects);
            for (const auto& g : s.gt) EXPECT_TRUE(known.count(g.class_id));
        }
    }
}

TEST(RunTask, OutOfOrderIsAProtocolError) {
    const auto cfg = small_config();
    const auto b = plu::build_benchmark(cfg);
    auto st = plu::fresh_state(b, cfg.plu, cfg.protocol, cfg.run.seed);
    EXPECT_THROW(plu::run_task(st, b, b.header.tasks[1], cfg.plu, cfg.protocol, cfg.select, cfg.metrics, 1,
                               plu::compared_selectors()),
                 plu::ProtocolError);
    EXPECT_EQ(st.completed_tasks, 0);
}

TEST(RunTask, RepeatingATaskIsAProtocolError) {
    const auto cfg = small_config();
    const auto b = plu::build_benchmark(cfg);
    auto r = plu::run_protocol(b, cfg, 1);
    EXPECT_THROW(plu::run_task(r.state, b, b.header.tasks[0], cfg.plu, cfg.protocol, cfg.select, cfg.metrics, 1,
                               plu::compared_selectors()),
                 plu::ProtocolError);
}

class FullRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        cfg_ = new plu::RunConfig(small_config());
        bench_ = new plu::Benchmark(plu::build_benchmark(*cfg_));
        result_ = new plu::RunResult(plu::run_protocol(*bench_, *cfg_));
    }
    static void TearDownTestSuite() {
        delete result_;
        delete bench_;
        delete cfg_;
    }
    static plu::RunConfig* cfg_;
    static plu::Benchmark* bench_;
    static plu::RunResult* result_;
};
plu::RunConfig* FullRun::cfg_ = nullptr;
plu::Benchmark* FullRun::bench_ = nullptr;
plu::RunResult* FullRun::result_ = nullptr;

TEST_F(FullRun, OneReportPerTaskAndSelector) {
    ASSERT_EQ(result_->state.reports.size(), 8u);
    EXPECT_EQ(result_->state.completed_tasks, 4);
    for (std::size_t i = 0; i < result_->state.reports.size(); ++i) {
        const auto& r = result_->state.reports[i];
        EXPECT_EQ(r.task_id, static_cast<int>(i / 2) + 1);
        EXPECT_EQ(r.selector, i % 2 == 0 ? "topk" : "plu");
    }
}

TEST_F(FullRun, MetricPresenceFollowsTheTaskShape) {
    for (const auto& r : result_->state.reports) {
        EXPECT_EQ(r.map_previous.has_value(), r.task_id > 1) << "task " << r.task_id;
        EXPECT_TRUE(r.map_current.has_value());
        EXPECT_TRUE(r.map_both.has_value());
        EXPECT_EQ(r.wi.has_value(), r.task_id < 4) << "task " << r.task_id;
        EXPECT_EQ(r.u_recall.has_value(), r.task_id < 4) << "task " << r.task_id;
    }
}

TEST_F(FullRun, LabelAuditSawOnlyKnownClasses) {
    const auto& audit = result_->state.audit;
    EXPECT_EQ(audit.violations(), 0u);
    EXPECT_GT(audit.total_reads(), 0u);
    const auto all_known = as_set(bench_->header.tasks.back().known);
    for (const auto& [c, n] : audit.by_class()) EXPECT_TRUE(all_known.count(c)) << "read of class " << c;
}

TEST_F(FullRun, StageLogNamesThreeStagesPerTask) {
    EXPECT_EQ(result_->state.stage_log.size(), 12u);
    for (std::size_t i = 0; i < result_->state.stage_log.size(); ++i) {
        const auto& line = result_->state.stage_log[i];
        EXPECT_NE(line.find("stage " + std::to_string(i % 3 + 1)), std::string::npos) << line;
    }
}

TEST_F(FullRun, RerunIsIdentical) {
    const auto again = plu::run_protocol(*bench_, *cfg_);
    EXPECT_EQ(reports_text(again.state), reports_text(result_->state));
    EXPECT_EQ(again.state.predictor, result_->state.predictor);
    EXPECT_EQ(again.state.head.net, result_->state.head.net);
}

TEST(Audit, UnknownReadIsCaughtByRunTask) {
    plu::LabelAudit audit;
    audit.set_allowed({3, 1});
    audit.record(1);
    audit.record(3);
    EXPECT_EQ(audit.violations(), 0u);
    audit.record(2);
    EXPECT_EQ(audit.violations(), 1u);
    EXPECT_EQ(audit.reads(1), 1u);
    EXPECT_EQ(audit.total_reads(), 3u);
}

TEST(Finetune, ZeroFractionLeavesTheStateUnchanged) {
    auto cfg = small_config();
    cfg.protocol.finetune_fraction = 0.0;
    const auto b = plu::build_benchmark(cfg);
    auto r = plu::run_protocol(b, cfg, 1);
    const auto& t2 = b.header.tasks[1];
    EXPECT_TRUE(plu::finetune_subset(b, t2, 0.0, 5).empty());
    auto st = r.state;
    plu::finetune(st, b, t2, cfg.plu, cfg.protocol, 5);
    EXPECT_EQ(st.predictor, r.state.predictor);
    EXPECT_EQ(st.head.net, r.state.head.net);
    EXPECT_EQ(st.audit.total_reads(), r.state.audit.total_reads());
}

TEST(Finetune, SubsetIsBalancedOverKnownClasses) {
    const auto cfg = small_config();
    const auto b = plu::build_benchmark(cfg);
    const auto& t2 = b.header.tasks[1];
    const auto ids = plu::finetune_subset(b, t2, 0.25, 9);
    EXPECT_EQ(ids.size(), 10u);
    EXPECT_EQ(as_set(ids).size(), ids.size());

    std::set<int> eligible;
    for (const auto& t : b.header.tasks)
        if (t.task_id <= 2) eligible.insert(t.train_ids.begin(), t.train_ids.end());
    std::set<int> covered;
    for (int id : ids) {
        EXPECT_TRUE(eligible.count(id)) << "scene " << id;
        for (const auto& g : b.scene(id).gt) covered.insert(g.class_id);
    }
    for (int c : t2.known) EXPECT_TRUE(covered.count(c)) << "class " << c << " missing from the fine-tune split";
    EXPECT_EQ(plu::finetune_subset(b, t2, 0.25, 9), ids);
}

TEST(Finetune, ReadsOnlyKnownAnnotations) {
    const auto cfg = small_config();
    const auto b = plu::build_benchmark(cfg);
    auto r = plu::run_protocol(b, cfg, 1);
    auto st = r.state;
    const auto& t2 = b.header.tasks[1];
    st.audit = {};
    st.audit.set_allowed(t2.known);
    st.head.activate(t2.known);
    plu::finetune(st, b, t2, cfg.plu, cfg.protocol, 5);
    EXPECT_GT(st.audit.total_reads(), 0u);
    EXPECT_EQ(st.audit.violations(), 0u);
    EXPECT_NE(st.predictor, r.state.predictor);
}

TEST(Protocol, FinetuneOffSkipsStageThree) {
    auto cfg = small_config();
    cfg.protocol.finetune = false;
    const auto b = plu::build_benchmark(cfg);
    const auto r = plu::run_protocol(b, cfg, 2);
    EXPECT_NE(r.state.stage_log.back().find("disabled"), std::string::npos);
}
