#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "plu/geometry.hpp"
#include "plu/selection.hpp"
#include "plu/world.hpp"

namespace plu {

inline constexpr double kLowObjectnessGate = 0.99;

struct LowObjectnessAudit {
    double mean_bg_fraction = 0.0;  // per-scene fraction, averaged
    std::size_t scenes = 0;
    bool pass = false;
};

// Among unmatched proposals, how pure is the bottom objectness decile?
inline LowObjectnessAudit audit_low_objectness(std::span<const Scene> scenes, double gate = kLowObjectnessGate) {
    LowObjectnessAudit a;
    double sum = 0.0;
    for (const auto& s : scenes) {
        auto pool = match_proposals(s.proposal_boxes(), s.gt_boxes()).unmatched;
        if (pool.empty()) continue;
        std::stable_sort(pool.begin(), pool.end(), [&](std::size_t x, std::size_t y) {
            return s.proposals[x].objectness < s.proposals[y].objectness;
        });
        const std::size_t n = std::max<std::size_t>(1, pool.size() / 10);
        std::size_t bg = 0;
        for (std::size_t k = 0; k < n; ++k) bg += s.proposals[pool[k]].truth.is_foreground() ? 0 : 1;
        sum += static_cast<double>(bg) / static_cast<double>(n);
        ++a.scenes;
    }
    a.mean_bg_fraction = a.scenes ? sum / static_cast<double>(a.scenes) : 1.0;
    a.pass = a.mean_bg_fraction >= gate;
    return a;
}

struct SelectionAudit {
    double unknown_recall = 0.0;  // unknown objects hit by a chosen proposal (IoU >= 0.5)
    double background_fraction = 0.0;  // chosen proposals with background truth
    std::size_t chosen = 0;
    std::size_t unknown_objects = 0;
};

// Scores a selector against hidden truth, per scene.
template <class Selector>
SelectionAudit audit_selection(std::span<const Scene> scenes, std::span<const int> known_ids, Selector&& select) {
    SelectionAudit a;
    std::size_t covered = 0;
    std::size_t bg = 0;
    auto is_known = [&](int c) { return std::find(known_ids.begin(), known_ids.end(), c) != known_ids.end(); };
    for (const auto& s : scenes) {
        const auto part = match_proposals(s.proposal_boxes(), s.gt_boxes());
        const UnknownSelection sel = select(s, part);
        for (auto p : sel.chosen) bg += s.proposals[p].truth.is_foreground() ? 0 : 1;
        a.chosen += sel.chosen.size();
        for (const auto& o : s.objects) {
            if (is_known(o.class_id)) continue;
            ++a.unknown_objects;
            bool hit = false;
            for (auto p : sel.chosen) hit = hit || iou(s.proposals[p].box, o.box) >= 0.5;
            covered += hit ? 1 : 0;
        }
    }
    a.unknown_recall = a.unknown_objects ? static_cast<double>(covered) / static_cast<double>(a.unknown_objects) : 0.0;
    a.background_fraction = a.chosen ? static_cast<double>(bg) / static_cast<double>(a.chosen) : 0.0;
    return a;
}

struct BiasAudit {
    SelectionAudit topk;
    SelectionAudit oracle;
    bool pass = false;  // top-k strictly below the oracle partition
};

inline BiasAudit audit_bias(std::span<const Scene> scenes, std::span<const int> known_ids, std::size_t k) {
    BiasAudit b;
    b.topk = audit_selection(scenes, known_ids, [&](const Scene& s, const MatchPartition& p) { return topk_select(s, p, k); });
    b.oracle = audit_selection(scenes, known_ids,
                               [&](const Scene& s, const MatchPartition& p) { return oracle_select(s, p, known_ids); });
    b.pass = b.topk.unknown_recall < b.oracle.unknown_recall;
    return b;
}

} // namespace plu
