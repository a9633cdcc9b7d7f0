#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "plu/error.hpp"
#include "plu/geometry.hpp"
#include "plu/world.hpp"

namespace plu {

inline constexpr int kUnknownLabel = -1;

struct Detection {
    int scene_id = 0;
    int label = kUnknownLabel;  // known class id or kUnknownLabel
    BBox box;
    double confidence = 0.0;
};

// Evaluator's view of one test scene.
struct SceneTruth {
    int scene_id = 0;
    std::vector<Annotation> known_gt;
    std::vector<BBox> unknown_objects;
};

inline SceneTruth scene_truth(const Scene& scene, std::span<const int> known_ids) {
    auto known = [&](int c) { return std::find(known_ids.begin(), known_ids.end(), c) != known_ids.end(); };
    SceneTruth t{scene.scene_id, {}, {}};
    for (const auto& g : scene.gt) if (known(g.class_id)) t.known_gt.push_back(g);
    for (const auto& o : scene.objects) if (!known(o.class_id)) t.unknown_objects.push_back(o.box);
    return t;
}

struct PrPoint {
    double precision = 0.0;
    double recall = 0.0;
    friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

struct PrCurve {
    std::vector<PrPoint> points;
    std::size_t n_gt = 0;
    bool flagged = false;  // class has no ground truth: AP defined as 0
};

enum class ApMode { all_point, eleven_point };

namespace detail {

inline std::unordered_map<int, std::size_t> scene_index(std::span<const SceneTruth> truths) {
    std::unordered_map<int, std::size_t> idx;
    for (std::size_t i = 0; i < truths.size(); ++i) idx.emplace(truths[i].scene_id, i);
    return idx;
}

// Detection indices by descending confidence, then scene id, then input order.
inline std::vector<std::size_t> confidence_order(std::span<const Detection> dets, const std::vector<std::size_t>& subset) {
    std::vector<std::size_t> order = subset;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].confidence != dets[b].confidence) return dets[a].confidence > dets[b].confidence;
        return dets[a].scene_id < dets[b].scene_id;
    });
    return order;
}

// Greedy one-to-one assignment of detections (visited in the given order) to
// unclaimed GTs of the detection's own label. Returns TP flags in visit order.
inline std::vector<char> greedy_match(std::span<const Detection> dets, const std::vector<std::size_t>& order,
                                      std::span<const SceneTruth> truths, double iou_thresh) {
    const auto idx = scene_index(truths);
    std::vector<std::vector<char>> claimed(truths.size());
    for (std::size_t s = 0; s < truths.size(); ++s) claimed[s].assign(truths[s].known_gt.size(), 0);

    std::vector<char> tp(order.size(), 0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& d = dets[order[k]];
        auto it = idx.find(d.scene_id);
        if (it == idx.end()) continue;
        const auto& gts = truths[it->second].known_gt;
        double best = -1.0;
        std::size_t best_g = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (claimed[it->second][g] || gts[g].class_id != d.label) continue;
            const double v = iou(d.box, gts[g].box);
            if (v > best) {
                best = v;
                best_g = g;
            }
        }
        if (best_g < gts.size() && best >= iou_thresh) {
            claimed[it->second][best_g] = 1;
            tp[k] = 1;
        }
    }
    return tp;
}

} // namespace detail

inline PrCurve pr_curve(std::span<const Detection> dets, std::span<const SceneTruth> truths, int class_id,
                        double iou_thresh = 0.5) {
    PrCurve curve;
    for (const auto& t : truths)
        for (const auto& g : t.known_gt) if (g.class_id == class_id) ++curve.n_gt;
    if (curve.n_gt == 0) {
        curve.flagged = true;
        return curve;
    }
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < dets.size(); ++i) if (dets[i].label == class_id) subset.push_back(i);
    const auto order = detail::confidence_order(dets, subset);
    const auto tp = detail::greedy_match(dets, order, truths, iou_thresh);
    std::size_t ntp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        ntp += tp[k] ? 1 : 0;
        curve.points.push_back({static_cast<double>(ntp) / static_cast<double>(k + 1),
                                static_cast<double>(ntp) / static_cast<double>(curve.n_gt)});
    }
    return curve;
}

// Area under the precision envelope (precision replaced by the max precision
// at any recall >= r).
inline double average_precision(const PrCurve& curve, ApMode mode = ApMode::all_point) {
    const auto& pts = curve.points;
    if (pts.empty()) return 0.0;
    std::vector<double> rec{0.0};
    std::vector<double> prec{0.0};
    for (const auto& p : pts) {
        rec.push_back(p.recall);
        prec.push_back(p.precision);
    }
    if (mode == ApMode::eleven_point) {
        double ap = 0.0;
        for (int i = 0; i <= 10; ++i) {
            const double r = i / 10.0;
            double m = 0.0;
            for (std::size_t k = 1; k < rec.size(); ++k) if (rec[k] >= r) m = std::max(m, prec[k]);
            ap += m / 11.0;
        }
        return ap;
    }
    rec.push_back(1.0);
    prec.push_back(0.0);
    for (std::size_t k = prec.size() - 1; k-- > 0;) prec[k] = std::max(prec[k], prec[k + 1]);
    double ap = 0.0;
    for (std::size_t k = 1; k < rec.size(); ++k) ap += (rec[k] - rec[k - 1]) * prec[k];
    return std::clamp(ap, 0.0, 1.0);
}

inline double wilderness_impact_from_precisions(double p_known, double p_known_unknown) {
    if (!(p_known_unknown > 0.0)) throw InvalidInput("wilderness impact: P_{K u U} must be > 0");
    return p_known / p_known_unknown - 1.0;
}

namespace detail {

// Best overlap over known GTs and unknown objects belongs to an unknown
// object and reaches the threshold.
inline bool lands_on_unknown(const Detection& d, const SceneTruth& t, double iou_thresh) {
    double best_known = 0.0;
    for (const auto& g : t.known_gt) best_known = std::max(best_known, iou(d.box, g.box));
    double best_unknown = 0.0;
    for (const auto& u : t.unknown_objects) best_unknown = std::max(best_unknown, iou(d.box, u));
    return best_unknown >= iou_thresh && best_unknown > best_known;
}

} // namespace detail

struct WildernessResult {
    double wi = 0.0;
    double p_known = 0.0;          // P_K: open-set hits excluded
    double p_known_unknown = 0.0;  // P_{K u U}: open-set hits counted as false positives
    double operating_recall = 0.0;
    double threshold = 0.0;        // confidence of the last detection kept
    std::size_t operating_count = 0;
    std::size_t tp = 0;
    std::size_t fp_closed = 0;
    std::size_t fp_open = 0;
    std::size_t a_ose = 0;
    std::size_t n_known_gt = 0;
    bool reached = false;  // recall_point attained
    bool flagged = false;  // recall point unreachable or no true positives
};

// Wilderness impact at the operating point where pooled known-class recall
// first reaches recall_point, sweeping detections by descending confidence.
inline WildernessResult wilderness_impact(std::span<const Detection> dets, std::span<const SceneTruth> truths,
                                          std::span<const int> known_ids, double recall_point = 0.8,
                                          double iou_thresh = 0.5) {
    if (!(recall_point > 0.0 && recall_point <= 1.0)) throw InvalidInput("wilderness_impact: recall point in (0, 1]");
    auto known = [&](int c) { return std::find(known_ids.begin(), known_ids.end(), c) != known_ids.end(); };
    WildernessResult r;
    for (const auto& t : truths)
        for (const auto& g : t.known_gt) if (known(g.class_id)) ++r.n_known_gt;

    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < dets.size(); ++i) if (known(dets[i].label)) subset.push_back(i);
    const auto order = detail::confidence_order(dets, subset);
    const auto tp = detail::greedy_match(dets, order, truths, iou_thresh);

    // Operating prefix length.
    std::size_t stop = order.size();
    std::size_t ntp = 0;
    std::size_t best_tp = 0;
    std::size_t best_at = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        ntp += tp[k] ? 1 : 0;
        if (ntp > best_tp) {
            best_tp = ntp;
            best_at = k + 1;
        }
        if (r.n_known_gt > 0 && static_cast<double>(ntp) >= recall_point * static_cast<double>(r.n_known_gt)) {
            stop = k + 1;
            r.reached = true;
            break;
        }
    }
    if (!r.reached) stop = best_at;

    const auto idx = detail::scene_index(truths);
    for (std::size_t k = 0; k < stop; ++k) {
        const auto& d = dets[order[k]];
        auto it = idx.find(d.scene_id);
        const bool open = it != idx.end() && detail::lands_on_unknown(d, truths[it->second], iou_thresh);
        if (open) ++r.a_ose;
        if (tp[k]) ++r.tp;
        else if (open) ++r.fp_open;
        else ++r.fp_closed;
        r.threshold = d.confidence;
    }
    r.operating_count = stop;
    r.operating_recall = r.n_known_gt ? static_cast<double>(r.tp) / static_cast<double>(r.n_known_gt) : 0.0;
    if (r.tp == 0) {
        r.flagged = true;
        return r;
    }
    r.p_known = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp_closed);
    r.p_known_unknown = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp_closed + r.fp_open);
    r.wi = wilderness_impact_from_precisions(r.p_known, r.p_known_unknown);
    r.flagged = !r.reached;
    return r;
}

// Fraction of unknown objects covered by at least one UNKNOWN detection;
// absent when there are no unknown objects.
inline std::optional<double> u_recall(std::span<const Detection> dets, std::span<const SceneTruth> truths,
                                      double iou_thresh = 0.5) {
    const auto idx = detail::scene_index(truths);
    std::vector<std::vector<char>> covered(truths.size());
    std::size_t total = 0;
    for (std::size_t s = 0; s < truths.size(); ++s) {
        covered[s].assign(truths[s].unknown_objects.size(), 0);
        total += truths[s].unknown_objects.size();
    }
    if (total == 0) return std::nullopt;
    for (const auto& d : dets) {
        if (d.label != kUnknownLabel) continue;
        auto it = idx.find(d.scene_id);
        if (it == idx.end()) continue;
        const auto& objs = truths[it->second].unknown_objects;
        for (std::size_t o = 0; o < objs.size(); ++o)
            if (iou(d.box, objs[o]) >= iou_thresh) covered[it->second][o] = 1;
    }
    std::size_t n = 0;
    for (const auto& c : covered) n += static_cast<std::size_t>(std::count(c.begin(), c.end(), 1));
    return static_cast<double>(n) / static_cast<double>(total);
}

// Known-labelled detections whose best overlap is an unknown object, over
// every detection given.
inline std::size_t count_open_set_errors(std::span<const Detection> dets, std::span<const SceneTruth> truths,
                                         std::span<const int> known_ids, double iou_thresh = 0.5) {
    auto known = [&](int c) { return std::find(known_ids.begin(), known_ids.end(), c) != known_ids.end(); };
    const auto idx = detail::scene_index(truths);
    std::size_t n = 0;
    for (const auto& d : dets) {
        if (!known(d.label)) continue;
        auto it = idx.find(d.scene_id);
        if (it != idx.end() && detail::lands_on_unknown(d, truths[it->second], iou_thresh)) ++n;
    }
    return n;
}

// Absolute open-set error at the wilderness-impact operating point.
inline std::size_t a_ose(std::span<const Detection> dets, std::span<const SceneTruth> truths,
                         std::span<const int> known_ids, double recall_point = 0.8, double iou_thresh = 0.5) {
    return wilderness_impact(dets, truths, known_ids, recall_point, iou_thresh).a_ose;
}

struct MetricsConfig {
    double iou_threshold = 0.5;
    double wi_recall = 0.8;
    ApMode ap_mode = ApMode::all_point;

    void validate() const {
        if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ConfigError("metrics.iou_threshold must lie in (0, 1)");
        if (!(wi_recall > 0.0 && wi_recall <= 1.0)) throw ConfigError("metrics.wi_recall must lie in (0, 1]");
    }
};

struct EvalReport {
    int task_id = 0;
    std::string selector;
    std::map<int, double> per_class_ap;
    std::vector<int> flagged_classes;  // no ground truth, excluded from mAP
    std::optional<double> map_previous;
    std::optional<double> map_current;
    std::optional<double> map_both;
    std::optional<double> wi;
    std::optional<double> u_recall;
    std::optional<std::size_t> a_ose;
    WildernessResult wi_detail;
    std::size_t n_unknown_detections = 0;
    std::size_t n_known_detections = 0;
};

inline std::optional<double> mean_ap(const std::map<int, double>& ap, std::span<const int> ids,
                                     const std::vector<int>& flagged) {
    double s = 0.0;
    std::size_t n = 0;
    for (int c : ids) {
        if (std::find(flagged.begin(), flagged.end(), c) != flagged.end()) continue;
        auto it = ap.find(c);
        if (it == ap.end()) continue;
        s += it->second;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

// previous_ids: known before this task; current_ids: introduced this task.
inline EvalReport evaluate(std::span<const Detection> dets, std::span<const SceneTruth> truths,
                           std::span<const int> previous_ids, std::span<const int> current_ids, bool has_unknown,
                           const MetricsConfig& cfg = {}) {
    EvalReport rep;
    std::vector<int> known(previous_ids.begin(), previous_ids.end());
    known.insert(known.end(), current_ids.begin(), current_ids.end());
    std::sort(known.begin(), known.end());

    for (int c : known) {
        const auto curve = pr_curve(dets, truths, c, cfg.iou_threshold);
        if (curve.flagged) rep.flagged_classes.push_back(c);
        rep.per_class_ap[c] = average_precision(curve, cfg.ap_mode);
    }
    if (!previous_ids.empty()) rep.map_previous = mean_ap(rep.per_class_ap, previous_ids, rep.flagged_classes);
    rep.map_current = mean_ap(rep.per_class_ap, current_ids, rep.flagged_classes);
    rep.map_both = mean_ap(rep.per_class_ap, known, rep.flagged_classes);

    for (const auto& d : dets) {
        if (d.label == kUnknownLabel) ++rep.n_unknown_detections;
        else ++rep.n_known_detections;
    }
    if (has_unknown) {
        rep.wi_detail = wilderness_impact(dets, truths, known, cfg.wi_recall, cfg.iou_threshold);
        rep.wi = rep.wi_detail.wi;
        rep.a_ose = rep.wi_detail.a_ose;
        rep.u_recall = u_recall(dets, truths, cfg.iou_threshold);
    }
    return rep;
}

} // namespace plu
