#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "plu/csv.hpp"
#include "plu/geometry.hpp"
#include "plu/predictor.hpp"
#include "plu/world.hpp"

namespace plu {

// Unmatched proposals pseudo-labelled "unknown" in one scene.
struct UnknownSelection {
    int scene_id = 0;
    std::vector<std::size_t> chosen;
    std::vector<double> scores;
};

// The k highest-objectness unmatched proposals, ties to the lower index.
inline UnknownSelection topk_select(const Scene& scene, const MatchPartition& partition, std::size_t k) {
    std::vector<std::size_t> pool(partition.unmatched.begin(), partition.unmatched.end());
    std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        const double oa = scene.proposals[a].objectness;
        const double ob = scene.proposals[b].objectness;
        return oa != ob ? oa > ob : a < b;
    });
    pool.resize(std::min(k, pool.size()));
    UnknownSelection sel{scene.scene_id, pool, {}};
    for (auto p : pool) sel.scores.push_back(scene.proposals[p].objectness);
    return sel;
}

// Scores an unmatched proposal with a foreground probability.
using ForegroundScorer = std::function<double(const Scene&, std::size_t)>;

inline UnknownSelection threshold_select(const Scene& scene, const MatchPartition& partition,
                                         const ForegroundScorer& score, double fg_threshold) {
    UnknownSelection sel;
    sel.scene_id = scene.scene_id;
    for (auto p : partition.unmatched) {
        const double s = score(scene, p);
        if (s > fg_threshold) {
            sel.chosen.push_back(p);
            sel.scores.push_back(s);
        }
    }
    return sel;
}

// Unmatched proposals the predictor calls foreground.
inline UnknownSelection plu_select(const Scene& scene, const MatchPartition& partition, const Predictor& net,
                                   double fg_threshold = 0.5) {
    return threshold_select(
        scene, partition,
        [&](const Scene& s, std::size_t p) { return foreground_probability(net, s.proposals[p].feature); },
        fg_threshold);
}

// Upper bound: hidden truth says which unmatched proposals are unknown objects.
inline UnknownSelection oracle_select(const Scene& scene, const MatchPartition& partition,
                                      std::span<const int> known_ids) {
    return threshold_select(
        scene, partition,
        [&](const Scene& s, std::size_t p) {
            const auto& t = s.proposals[p].truth;
            const bool known = std::find(known_ids.begin(), known_ids.end(), t.class_id) != known_ids.end();
            return t.is_foreground() && !known ? 1.0 : 0.0;
        },
        0.5);
}

inline void write_selections_csv(std::ostream& out, std::span<const UnknownSelection> selections,
                                 const std::string& selector, bool header = true) {
    if (header) out << "scene_id,proposal_index,selector,score\n";
    for (const auto& s : selections) {
        for (std::size_t i = 0; i < s.chosen.size(); ++i) {
            out << csv::join({std::to_string(s.scene_id), std::to_string(s.chosen[i]), selector, csv::num(s.scores[i])})
                << '\n';
        }
    }
}

} // namespace plu
