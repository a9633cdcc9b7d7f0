#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "plu/error.hpp"

namespace plu {

// Closed axis-aligned rectangle in normalized image coordinates.
struct BBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    bool valid() const {
        auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
        return in_unit(x1) && in_unit(y1) && in_unit(x2) && in_unit(y2) && x1 < x2 && y1 < y2;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

inline void require_valid(const BBox& b) {
    if (!b.valid()) {
        throw InvalidInput("invalid box (" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " +
                           std::to_string(b.x2) + ", " + std::to_string(b.y2) + ")");
    }
}

inline double iou(const BBox& a, const BBox& b) {
    require_valid(a);
    require_valid(b);
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

struct Match {
    std::size_t proposal = 0;
    std::size_t gt = 0;
    double iou = 0.0;

    friend bool operator==(const Match&, const Match&) = default;
};

// Matched proposals (best GT at or above threshold) and the rest.
struct MatchPartition {
    std::vector<Match> matched;
    std::vector<std::size_t> unmatched;
};

inline constexpr double kDefaultMatchThreshold = 0.5;

inline MatchPartition match_proposals(std::span<const BBox> proposals, std::span<const BBox> gts,
                                      double threshold = kDefaultMatchThreshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw InvalidInput("match threshold must lie in (0, 1)");
    }
    for (const auto& g : gts) require_valid(g);

    MatchPartition out;
    for (std::size_t p = 0; p < proposals.size(); ++p) {
        double best = -1.0;
        std::size_t best_gt = 0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double v = iou(proposals[p], gts[g]);
            if (v > best) {  // strict: ties keep the lowest GT index
                best = v;
                best_gt = g;
            }
        }
        if (!gts.empty() && best >= threshold) {
            out.matched.push_back({p, best_gt, best});
        } else {
            require_valid(proposals[p]);
            out.unmatched.push_back(p);
        }
    }
    return out;
}

} // namespace plu
