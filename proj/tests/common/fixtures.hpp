#pragma once

#include <numeric>
#include <vector>

#include "plu/uda.hpp"
#include "plu/world.hpp"

namespace fixture {

inline std::vector<int> ids_upto(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// Hand-made scene: 1-d features, boxes laid out on a row so that only the
// explicit GT copies overlap anything.
inline plu::Scene row_scene(int n_gt, const std::vector<double>& unmatched_objectness, int scene_id = 0) {
    plu::Scene s;
    s.scene_id = scene_id;
    const double cell = 1.0 / static_cast<double>(n_gt + static_cast<int>(unmatched_objectness.size()) + 1);
    int slot = 0;
    for (int g = 0; g < n_gt; ++g, ++slot) {
        const plu::BBox b{slot * cell, 0.0, (slot + 0.9) * cell, 0.5};
        s.gt.push_back({0, b});
        s.objects.push_back({0, b});
        s.proposals.push_back({b, {1.0 + g}, 0.95, {plu::Truth::Kind::foreground, 0, g}});
    }
    for (double o : unmatched_objectness) {
        const plu::BBox b{slot * cell, 0.5, (slot + 0.9) * cell, 1.0};
        s.proposals.push_back({b, {-static_cast<double>(slot)}, o, {}});
        ++slot;
    }
    return s;
}

inline plu::DomainBatch domains_of(const plu::Scene& s, const plu::PluConfig& cfg, std::uint64_t seed) {
    return plu::form_domains(s, plu::match_proposals(s.proposal_boxes(), s.gt_boxes()), cfg, seed);
}

} // namespace fixture
