#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "plu/augment.hpp"
#include "plu/csv.hpp"
#include "plu/error.hpp"
#include "plu/geometry.hpp"
#include "plu/labels.hpp"
#include "plu/predictor.hpp"
#include "plu/rng.hpp"
#include "plu/world.hpp"

namespace plu {

enum class TargetNorm { unmasked, all };
// Which samples count against the training budget.
enum class SampleCount { both, source, target };

struct PluConfig {
    double epsilon = 0.9;
    double lambda = 1.0;
    double fg_bg_ratio = 1.0;  // background samples per foreground sample
    int batch_size = 8;        // DomainBatch units per optimizer step
    int train_samples = 4096;
    double lr = 0.01;
    double momentum = 0.9;
    int h1 = 64;
    int h2 = 32;
    TargetNorm target_norm = TargetNorm::unmasked;
    SampleCount sample_count = SampleCount::both;
    AugmentParams augment;
    bool use_target = true;  // false: source-only training (L_T disabled)

    void validate() const {
        if (!(epsilon > 0.5 && epsilon < 1.0)) throw ConfigError("plu.epsilon must lie in (0.5, 1)");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("plu.lambda must be >= 0");
        if (!(fg_bg_ratio > 0.0) || !std::isfinite(fg_bg_ratio)) throw ConfigError("plu.fg_bg_ratio must be > 0");
        if (batch_size < 1) throw ConfigError("plu.batch_size must be >= 1");
        if (train_samples < 0) throw ConfigError("plu.train_samples must be >= 0");
        if (!(lr >= 0.0)) throw ConfigError("plu.lr must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("plu.momentum must lie in [0, 1)");
        if (h1 < 1 || h2 < 1) throw ConfigError("plu hidden sizes must be >= 1");
        augment.validate();
    }
};

struct SourceEntry {
    Feature feature;
    int label = 0;  // 1 = FG, 0 = BG
    std::size_t proposal = 0;
};

struct TargetEntry {
    Feature feature;
    std::size_t proposal = 0;
};

// One scene's labelled source domain and unlabelled target domain.
struct DomainBatch {
    int scene_id = 0;
    std::vector<SourceEntry> source;
    std::vector<TargetEntry> target;
    bool skipped = false;  // scene had no annotations

    std::size_t fg_count() const {
        return static_cast<std::size_t>(std::count_if(source.begin(), source.end(), [](const SourceEntry& e) { return e.label == 1; }));
    }
    std::size_t bg_count() const { return source.size() - fg_count(); }
    bool empty() const { return source.empty() && target.empty(); }
};

// Source: one FG entry per annotation (best-IoU proposal) plus the
// round(ratio * n_fg) lowest-objectness unmatched proposals as BG.
// Target: a uniform sample of the remaining unmatched proposals, as large as
// the source when supply permits.
inline DomainBatch form_domains(const Scene& scene, const MatchPartition& partition, const PluConfig& cfg,
                                std::uint64_t seed, LabelAudit* audit = nullptr) {
    DomainBatch db;
    db.scene_id = scene.scene_id;
    if (scene.gt.empty()) {
        db.skipped = true;
        return db;
    }

    std::vector<char> used(scene.proposals.size(), 0);
    for (const auto& g : scene.gt) {
        if (audit) audit->record(g.class_id);
        double best = -1.0;
        std::size_t best_p = scene.proposals.size();
        for (std::size_t p = 0; p < scene.proposals.size(); ++p) {
            if (used[p]) continue;
            const double v = iou(scene.proposals[p].box, g.box);
            if (v > best) {
                best = v;
                best_p = p;
            }
        }
        if (best_p == scene.proposals.size()) continue;
        used[best_p] = 1;
        db.source.push_back({scene.proposals[best_p].feature, 1, best_p});
    }
    const std::size_t n_fg = db.source.size();

    std::vector<std::size_t> pool;
    for (auto p : partition.unmatched) {
        if (p >= scene.proposals.size()) throw InvalidInput("form_domains: partition does not belong to scene");
        if (!used[p]) pool.push_back(p);
    }
    std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        const double oa = scene.proposals[a].objectness;
        const double ob = scene.proposals[b].objectness;
        return oa != ob ? oa < ob : a < b;
    });
    const auto n_bg = std::min(pool.size(), static_cast<std::size_t>(std::llround(cfg.fg_bg_ratio * static_cast<double>(n_fg))));
    for (std::size_t i = 0; i < n_bg; ++i) db.source.push_back({scene.proposals[pool[i]].feature, 0, pool[i]});

    std::vector<std::size_t> rest(pool.begin() + static_cast<std::ptrdiff_t>(n_bg), pool.end());
    std::sort(rest.begin(), rest.end());
    const std::size_t n_target = std::min(db.source.size(), rest.size());
    Rng rng(seed);
    // Partial Fisher-Yates: the first n_target slots become the sample.
    for (std::size_t i = 0; i < n_target; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i), static_cast<int>(rest.size() - 1)));
        std::swap(rest[i], rest[j]);
    }
    rest.resize(n_target);
    std::sort(rest.begin(), rest.end());
    for (auto p : rest) db.target.push_back({scene.proposals[p].feature, p});
    return db;
}

inline std::optional<int> pseudo_label(std::span<const double> weak_logits, double epsilon) {
    const auto p = softmax(weak_logits);
    const auto it = std::max_element(p.begin(), p.end());
    if (*it > epsilon) return static_cast<int>(it - p.begin());
    return std::nullopt;
}

struct PluLosses {
    double target = 0.0;  // L_T
    double source = 0.0;  // L_S
    double total = 0.0;   // L_uda = L_T + lambda * L_S
    double mask_rate = 0.0;
    double fg_pseudo_fraction = 0.0;
    std::size_t n_target = 0;
    std::size_t n_pseudo = 0;
    std::size_t n_source = 0;
};

struct PluObjective {
    PluLosses losses;
    Gradients grads;
};

inline std::uint64_t augment_seed(std::uint64_t seed, std::uint64_t which, int scene_id, std::size_t proposal) {
    return derive_seed(seed, {which, static_cast<std::uint64_t>(scene_id), static_cast<std::uint64_t>(proposal)});
}

// FixMatch objective over a mini-batch of domain batches: the weak view of
// each target proposal yields a pseudo-label when confident enough, and the
// strong view is trained against it; source proposals train against their
// 0/1 labels.
inline PluObjective plu_objective(const Predictor& net, std::span<const DomainBatch> batches, const PluConfig& cfg,
                                  std::uint64_t seed) {
    std::vector<Sample> src;
    std::vector<std::vector<double>> strong_views;
    std::vector<int> pseudo;
    std::size_t n_target = 0;
    std::size_t n_fg_pseudo = 0;

    for (const auto& db : batches) {
        for (const auto& s : db.source) src.push_back({s.feature, s.label, 1.0});
        if (!cfg.use_target) continue;
        for (const auto& t : db.target) {
            ++n_target;
            const auto weak = weak_augment(t.feature, augment_seed(seed, stream::weak, db.scene_id, t.proposal),
                                           cfg.augment.weak_sigma);
            const auto pl = pseudo_label(net.forward(weak), cfg.epsilon);
            if (!pl) continue;
            if (*pl == kForegroundLogit) ++n_fg_pseudo;
            strong_views.push_back(strong_augment(t.feature, augment_seed(seed, stream::strong, db.scene_id, t.proposal),
                                                  cfg.augment.strong_sigma, cfg.augment.strong_drop));
            pseudo.push_back(*pl);
        }
    }
    if (src.empty() && n_target == 0) throw InvalidInput("plu_objective: empty source and target");

    PluObjective out{{}, net.zero_gradients()};
    auto& L = out.losses;
    L.n_source = src.size();
    L.n_target = n_target;
    L.n_pseudo = pseudo.size();
    L.mask_rate = n_target ? static_cast<double>(pseudo.size()) / static_cast<double>(n_target) : 0.0;
    L.fg_pseudo_fraction = pseudo.empty() ? 0.0 : static_cast<double>(n_fg_pseudo) / static_cast<double>(pseudo.size());

    if (!pseudo.empty()) {
        std::vector<Sample> tgt;
        for (std::size_t i = 0; i < pseudo.size(); ++i) tgt.push_back({strong_views[i], pseudo[i], 1.0});
        auto t = backward(net, tgt);
        if (cfg.target_norm == TargetNorm::all) {
            const double s = static_cast<double>(pseudo.size()) / static_cast<double>(n_target);
            t.loss *= s;
            t.grads.scale(s);
        }
        L.target = t.loss;
        out.grads.add_scaled(t.grads, 1.0);
    }
    if (!src.empty()) {
        auto s = backward(net, src);
        L.source = s.loss;
        out.grads.add_scaled(s.grads, cfg.lambda);
    }
    L.total = L.target + cfg.lambda * L.source;
    return out;
}

inline PluLosses plu_losses(const Predictor& net, std::span<const DomainBatch> batches, const PluConfig& cfg,
                            std::uint64_t seed) {
    return plu_objective(net, batches, cfg, seed).losses;
}

struct TrainLogEntry {
    int step = 0;
    double loss_target = 0.0;
    double loss_source = 0.0;
    double loss_uda = 0.0;
    double mask_rate = 0.0;
    double fg_pseudo_fraction = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    std::size_t consumed = 0;
    std::size_t skipped_scenes = 0;
};

inline void write_training_log_csv(std::ostream& out, const TrainLog& log) {
    out << "step,L_T,L_S,L_uda,mask_rate,fg_pseudo_fraction\n";
    for (const auto& e : log.entries) {
        out << csv::join({std::to_string(e.step), csv::num(e.loss_target), csv::num(e.loss_source),
                          csv::num(e.loss_uda), csv::num(e.mask_rate), csv::num(e.fg_pseudo_fraction)})
            << '\n';
    }
}

inline std::size_t counted_samples(const DomainBatch& db, const PluConfig& cfg) {
    switch (cfg.sample_count) {
        case SampleCount::source: return db.source.size();
        case SampleCount::target: return cfg.use_target ? db.target.size() : db.source.size();
        case SampleCount::both: break;
    }
    return db.source.size() + (cfg.use_target ? db.target.size() : 0);
}

// Self-training loop: seeded shuffled passes over the scenes, mini-batches of
// cfg.batch_size domain batches, one SGD step on grad L_uda per mini-batch,
// until cfg.train_samples samples have been consumed.
inline TrainLog train_plu(Predictor& net, OptimState& opt, std::span<const Scene> scenes, const PluConfig& cfg,
                          std::uint64_t seed, LabelAudit* audit = nullptr) {
    cfg.validate();
    TrainLog log;
    if (cfg.train_samples == 0) return log;
    if (scenes.empty()) throw InvalidInput("train_plu: empty dataset");
    opt.lr = cfg.lr;
    opt.momentum = cfg.momentum;

    std::vector<MatchPartition> partitions;
    partitions.reserve(scenes.size());
    for (const auto& s : scenes) partitions.push_back(match_proposals(s.proposal_boxes(), s.gt_boxes()));

    std::vector<DomainBatch> pending;
    int step = 0;
    const auto budget = static_cast<std::size_t>(cfg.train_samples);
    for (std::uint64_t epoch = 0; log.consumed < budget; ++epoch) {
        std::vector<std::size_t> order(scenes.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(seed, {stream::shuffle, epoch}));
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

        bool any = false;
        for (auto idx : order) {
            const auto& scene = scenes[idx];
            auto db = form_domains(scene, partitions[idx], cfg,
                                   derive_seed(seed, {stream::domains, static_cast<std::uint64_t>(scene.scene_id), epoch}),
                                   audit);
            if (db.skipped || db.empty()) {
                if (epoch == 0) ++log.skipped_scenes;
                continue;
            }
            any = true;
            pending.push_back(std::move(db));
            if (static_cast<int>(pending.size()) < cfg.batch_size) continue;

            auto obj = plu_objective(net, pending, cfg, derive_seed(seed, {epoch, static_cast<std::uint64_t>(step)}));
            if (!std::isfinite(obj.losses.total)) {
                throw NumericalError("train_plu: loss diverged at step " + std::to_string(step));
            }
            try {
                sgd_step(net, obj.grads, opt);
            } catch (const NumericalError& e) {
                throw NumericalError("train_plu: step " + std::to_string(step) + ": " + e.what());
            }
            for (const auto& b : pending) log.consumed += counted_samples(b, cfg);
            log.entries.push_back({step, obj.losses.target, obj.losses.source, obj.losses.total, obj.losses.mask_rate,
                                   obj.losses.fg_pseudo_fraction});
            ++step;
            pending.clear();
            if (log.consumed >= budget) break;
        }
        if (!any) break;
    }
    return log;
}

} // namespace plu
