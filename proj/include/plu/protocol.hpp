#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "plu/dataset_io.hpp"
#include "plu/error.hpp"
#include "plu/known_head.hpp"
#include "plu/labels.hpp"
#include "plu/metrics.hpp"
#include "plu/predictor.hpp"
#include "plu/selection.hpp"
#include "plu/tasks.hpp"
#include "plu/uda.hpp"
#include "plu/world.hpp"

namespace plu {

struct ProtocolConfig {
    int n_tasks = 4;
    int classes_per_task = 5;
    int never_annotated = 0;
    int train_scenes = 200;  // per task
    int test_scenes = 50;    // per task
    // Sampling weight of earlier-task classes in a task's training scenes.
    double prev_class_weight = 0.0;
    bool finetune = true;
    double finetune_fraction = 0.10;
    int finetune_samples = 1024;
    int head_h1 = 64;
    int head_h2 = 32;
    HeadTrainConfig head{20, 32, 0.05, 0.9};
    HeadTrainConfig head_finetune{10, 32, 0.01, 0.9};

    void validate() const {
        if (n_tasks < 1) throw ConfigError("protocol.n_tasks must be >= 1");
        if (classes_per_task < 1) throw ConfigError("protocol.classes_per_task must be >= 1");
        if (never_annotated < 0) throw ConfigError("protocol.never_annotated must be >= 0");
        if (train_scenes < 1 || test_scenes < 1) throw ConfigError("protocol scene counts must be >= 1");
        if (prev_class_weight < 0.0) throw ConfigError("protocol.prev_class_weight must be >= 0");
        if (finetune_fraction < 0.0 || finetune_fraction > 1.0) throw ConfigError("protocol.finetune_fraction must lie in [0, 1]");
        if (finetune_samples < 0) throw ConfigError("protocol.finetune_samples must be >= 0");
        if (head_h1 < 1 || head_h2 < 1) throw ConfigError("protocol head sizes must be >= 1");
    }
};

struct SelectConfig {
    int topk_k = -1;  // -1: mean true unknown count per scene
    double fg_threshold = 0.5;

    void validate() const {
        if (topk_k < -1) throw ConfigError("select.topk_k must be >= 0 or -1 (auto)");
        if (!(fg_threshold > 0.0 && fg_threshold < 1.0)) throw ConfigError("select.fg_threshold must lie in (0, 1)");
    }
};

// World, task splits and every generated scene.
struct Benchmark {
    DatasetHeader header;
    std::vector<Scene> scenes;
    std::unordered_map<int, std::size_t> by_id;

    void index() {
        by_id.clear();
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            if (!by_id.emplace(scenes[i].scene_id, i).second)
                throw DataError("duplicate scene id " + std::to_string(scenes[i].scene_id));
        }
    }
    const Scene& scene(int id) const {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("missing scene id " + std::to_string(id));
        return scenes[it->second];
    }
    std::vector<Scene> scenes_of(std::span<const int> ids) const {
        std::vector<Scene> out;
        out.reserve(ids.size());
        for (int id : ids) out.push_back(scene(id));
        return out;
    }
    DatasetFile to_file() const { return {header, scenes}; }
    static Benchmark from_file(DatasetFile f) {
        Benchmark b{std::move(f.header), std::move(f.scenes), {}};
        b.index();
        return b;
    }
};

// World for an incremental run: the first task's classes sit on the unit
// sphere, every later or never-annotated class is shifted away from them.
inline std::vector<ClassSpec> protocol_world(const WorldParams& wp, const ProtocolConfig& pc, std::uint64_t seed) {
    const int n_unknown = (pc.n_tasks - 1) * pc.classes_per_task + pc.never_annotated;
    return generate_world(pc.classes_per_task, n_unknown, wp.d, {wp.shift_min, wp.shift_max}, seed, wp.spread);
}

inline Benchmark make_tasks(const std::vector<ClassSpec>& world, const WorldParams& wp, const ProtocolConfig& pc,
                            std::uint64_t seed) {
    wp.validate();
    pc.validate();
    if (static_cast<std::size_t>(pc.n_tasks) * static_cast<std::size_t>(pc.classes_per_task) > world.size())
        throw ConfigError("make_tasks: " + std::to_string(pc.n_tasks) + " tasks x " + std::to_string(pc.classes_per_task) +
                          " classes exceeds the " + std::to_string(world.size()) + "-class world");

    Benchmark b;
    b.header.d = wp.d;
    b.header.seed = seed;
    b.header.params = wp;
    b.header.classes = world;

    std::vector<int> all;
    for (const auto& c : world) all.push_back(c.class_id);

    int next_scene = 0;
    std::vector<int> known;
    for (int t = 1; t <= pc.n_tasks; ++t) {
        TaskSplit ts;
        ts.task_id = t;
        for (int k = 0; k < pc.classes_per_task; ++k) {
            const int c = all[static_cast<std::size_t>((t - 1) * pc.classes_per_task + k)];
            ts.introduced.push_back(c);
            known.push_back(c);
        }
        ts.known = known;
        for (int c : all) if (std::find(known.begin(), known.end(), c) == known.end()) ts.unknown.push_back(c);

        ClassPool train_pool;
        for (int c : all) {
            const bool intro = std::find(ts.introduced.begin(), ts.introduced.end(), c) != ts.introduced.end();
            const bool prev = !intro && std::find(known.begin(), known.end(), c) != known.end();
            const double w = prev ? pc.prev_class_weight : 1.0;
            if (w > 0.0) {
                train_pool.class_ids.push_back(c);
                train_pool.weights.push_back(w);
            }
        }
        const ClassPool test_pool = ClassPool::uniform(world);

        std::size_t unknown_objects = 0;
        for (int i = 0; i < pc.train_scenes; ++i) {
            const int id = next_scene++;
            auto s = generate_scene(world, ts.known, wp, id, derive_seed(seed, {stream::tasks}), train_pool);
            for (const auto& o : s.objects)
                if (std::find(known.begin(), known.end(), o.class_id) == known.end()) ++unknown_objects;
            ts.train_ids.push_back(id);
            b.scenes.push_back(std::move(s));
        }
        for (int i = 0; i < pc.test_scenes; ++i) {
            const int id = next_scene++;
            b.scenes.push_back(generate_scene(world, ts.known, wp, id, derive_seed(seed, {stream::tasks}), test_pool));
            ts.test_ids.push_back(id);
        }
        ts.mean_unknown_objects = static_cast<double>(unknown_objects) / static_cast<double>(pc.train_scenes);
        b.header.tasks.push_back(std::move(ts));
    }
    b.index();
    return b;
}

// Everything carried from one task to the next.
struct RunState {
    Predictor predictor;
    OptimState predictor_opt;
    KnownHead head;
    int completed_tasks = 0;
    LabelAudit audit;
    std::vector<EvalReport> reports;
    std::vector<std::string> stage_log;
};

inline RunState fresh_state(const Benchmark& b, const PluConfig& plu, const ProtocolConfig& pc, std::uint64_t seed) {
    RunState st;
    st.predictor = init_predictor(b.header.d, plu.h1, plu.h2, seed);
    st.predictor_opt = {plu.lr, plu.momentum, {}};
    st.head = KnownHead::create(b.header.d, pc.head_h1, pc.head_h2, static_cast<int>(b.header.classes.size()), seed);
    return st;
}

// Balanced exemplar subset: round-robin over the known classes, each turn
// taking one not-yet-chosen training scene (from any task so far) that
// annotates the class.
inline std::vector<int> finetune_subset(const Benchmark& b, const TaskSplit& task, double fraction, std::uint64_t seed) {
    const auto budget = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(task.train_ids.size())));
    if (budget == 0) return {};
    std::map<int, std::vector<int>> candidates;
    for (const auto& t : b.header.tasks) {
        if (t.task_id > task.task_id) break;
        for (int id : t.train_ids)
            for (const auto& g : b.scene(id).gt) {
                auto& v = candidates[g.class_id];
                if (v.empty() || v.back() != id) v.push_back(id);
            }
    }
    for (auto& [c, v] : candidates) {
        Rng rng(derive_seed(seed, {stream::finetune, static_cast<std::uint64_t>(c)}));
        std::shuffle(v.begin(), v.end(), rng.engine());
    }
    std::vector<int> chosen;
    std::map<int, std::size_t> cursor;
    bool progress = true;
    while (chosen.size() < budget && progress) {
        progress = false;
        for (int c : task.known) {
            if (chosen.size() >= budget) break;
            auto& v = candidates[c];
            auto& k = cursor[c];
            while (k < v.size() && std::find(chosen.begin(), chosen.end(), v[k]) != chosen.end()) ++k;
            if (k < v.size()) {
                chosen.push_back(v[k++]);
                progress = true;
            }
        }
    }
    return chosen;
}

// Source-only continuation of the predictor and the known head on a small
// class-balanced split of known-class scenes.
inline void finetune(RunState& st, const Benchmark& b, const TaskSplit& task, const PluConfig& plu,
                     const ProtocolConfig& pc, std::uint64_t seed) {
    const auto ids = finetune_subset(b, task, pc.finetune_fraction, seed);
    if (ids.empty()) return;
    const auto scenes = b.scenes_of(ids);

    PluConfig src_only = plu;
    src_only.use_target = false;
    src_only.train_samples = pc.finetune_samples;
    src_only.batch_size = std::min<int>(plu.batch_size, static_cast<int>(scenes.size()));
    train_plu(st.predictor, st.predictor_opt, scenes, src_only, derive_seed(seed, {stream::finetune, 1}), &st.audit);

    std::vector<HeadSample> samples;
    for (const auto& s : scenes) {
        auto hs = head_samples(s, &st.audit);
        samples.insert(samples.end(), hs.begin(), hs.end());
    }
    train_head(st.head, samples, pc.head_finetune, derive_seed(seed, {stream::finetune, 2}));
}

enum class SelectorKind { topk, plu, oracle };

inline std::string selector_name(SelectorKind k) {
    switch (k) {
        case SelectorKind::topk: return "topk";
        case SelectorKind::plu: return "plu";
        case SelectorKind::oracle: return "oracle";
    }
    return "?";
}

inline std::size_t topk_budget(const TaskSplit& task, const SelectConfig& sc) {
    if (sc.topk_k >= 0) return static_cast<std::size_t>(sc.topk_k);
    return static_cast<std::size_t>(std::llround(task.mean_unknown_objects));
}

struct TaskEvaluation {
    EvalReport report;
    std::vector<UnknownSelection> selections;
    std::vector<Detection> detections;
};

// Unknown detections straight from the selector; every other proposal goes
// through the known head and is emitted when it wins a known class.
inline TaskEvaluation evaluate_task(const RunState& st, const Benchmark& b, const TaskSplit& task, SelectorKind kind,
                                    const SelectConfig& sc, const MetricsConfig& mc) {
    TaskEvaluation ev;
    std::vector<SceneTruth> truths;
    const std::size_t k = topk_budget(task, sc);
    for (int id : task.test_ids) {
        const auto& scene = b.scene(id);
        const auto part = match_proposals(scene.proposal_boxes(), scene.gt_boxes(), mc.iou_threshold);
        UnknownSelection sel;
        switch (kind) {
            case SelectorKind::topk: sel = topk_select(scene, part, k); break;
            case SelectorKind::plu: sel = plu_select(scene, part, st.predictor, sc.fg_threshold); break;
            case SelectorKind::oracle: sel = oracle_select(scene, part, task.known); break;
        }
        std::vector<char> claimed(scene.proposals.size(), 0);
        for (std::size_t i = 0; i < sel.chosen.size(); ++i) {
            claimed[sel.chosen[i]] = 1;
            ev.detections.push_back({id, kUnknownLabel, scene.proposals[sel.chosen[i]].box, std::clamp(sel.scores[i], 0.0, 1.0)});
        }
        for (std::size_t p = 0; p < scene.proposals.size(); ++p) {
            if (claimed[p]) continue;
            const auto [cls, prob] = st.head.classify(scene.proposals[p].feature);
            if (cls >= 0) ev.detections.push_back({id, cls, scene.proposals[p].box, prob});
        }
        truths.push_back(scene_truth(scene, task.known));
        ev.selections.push_back(std::move(sel));
    }
    const auto prev = task.previous();
    ev.report = evaluate(ev.detections, truths, prev, task.introduced, !task.unknown.empty(), mc);
    ev.report.task_id = task.task_id;
    ev.report.selector = selector_name(kind);
    return ev;
}

struct TaskOutputs {
    TrainLog train_log;
    std::vector<TaskEvaluation> evaluations;  // one per selector, in request order
};

// Stage 1 (backbone) is a no-op: features come from the generator.
// Stage 2 trains the predictor with the UDA loss and the known head on the
// task's annotations; stage 3 fine-tunes on a balanced known-class split.
inline TaskOutputs run_task(RunState& st, const Benchmark& b, const TaskSplit& task, const PluConfig& plu,
                            const ProtocolConfig& pc, const SelectConfig& sc, const MetricsConfig& mc,
                            std::uint64_t seed, std::span<const SelectorKind> selectors) {
    if (task.task_id != st.completed_tasks + 1)
        throw ProtocolError("run_task: expected task " + std::to_string(st.completed_tasks + 1) + ", got " +
                            std::to_string(task.task_id));
    const std::uint64_t tseed = derive_seed(seed, {static_cast<std::uint64_t>(task.task_id)});
    st.audit.set_allowed(task.known);
    st.head.activate(task.known);

    TaskOutputs out;
    st.stage_log.push_back("task " + std::to_string(task.task_id) + " stage 1: backbone pretraining skipped, features are generator-given");

    const auto train = b.scenes_of(task.train_ids);
    out.train_log = train_plu(st.predictor, st.predictor_opt, train, plu, derive_seed(tseed, {stream::domains}), &st.audit);
    std::vector<HeadSample> samples;
    for (const auto& s : train) {
        auto hs = head_samples(s, &st.audit);
        samples.insert(samples.end(), hs.begin(), hs.end());
    }
    train_head(st.head, samples, pc.head, derive_seed(tseed, {stream::head}));
    st.stage_log.push_back("task " + std::to_string(task.task_id) + " stage 2: " + std::to_string(out.train_log.entries.size()) +
                           " predictor steps, " + std::to_string(samples.size()) + " head samples");

    if (pc.finetune && pc.finetune_fraction > 0.0) {
        finetune(st, b, task, plu, pc, derive_seed(tseed, {stream::finetune}));
        st.stage_log.push_back("task " + std::to_string(task.task_id) + " stage 3: fine-tuned on a balanced known split");
    } else {
        st.stage_log.push_back("task " + std::to_string(task.task_id) + " stage 3: fine-tuning disabled");
    }
    if (st.audit.violations() != 0) throw ProtocolError("label hygiene violated: annotation of an unknown class was read");

    for (auto kind : selectors) {
        out.evaluations.push_back(evaluate_task(st, b, task, kind, sc, mc));
        st.reports.push_back(out.evaluations.back().report);
    }
    ++st.completed_tasks;
    return out;
}

} // namespace plu
