#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plu/csv.hpp"
#include "plu/metrics.hpp"

namespace plu {

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {
        "task", "selector", "map_previous", "map_current", "map_both", "wi", "u_recall", "a_ose",
        "wi_operating_recall", "wi_reached", "n_unknown_detections", "n_known_detections"};
    return cols;
}

// Metrics plotted and summarised by the report command.
inline const std::vector<std::string>& report_metrics() {
    static const std::vector<std::string> m = {"wi", "u_recall", "a_ose", "map_previous", "map_current", "map_both"};
    return m;
}

inline std::vector<std::string> report_row(const EvalReport& r) {
    const bool has_wi = r.wi.has_value();
    return {std::to_string(r.task_id),
            r.selector,
            csv::opt(r.map_previous),
            csv::opt(r.map_current),
            csv::opt(r.map_both),
            csv::opt(r.wi),
            csv::opt(r.u_recall),
            r.a_ose ? std::to_string(*r.a_ose) : std::string{},
            has_wi ? csv::num(r.wi_detail.operating_recall) : std::string{},
            has_wi ? std::string(r.wi_detail.reached ? "1" : "0") : std::string{},
            std::to_string(r.n_unknown_detections),
            std::to_string(r.n_known_detections)};
}

inline void write_reports_csv(std::ostream& out, std::span<const EvalReport> reports) {
    out << csv::join(report_columns()) << '\n';
    for (const auto& r : reports) out << csv::join(report_row(r)) << '\n';
}

inline nlohmann::json report_json(const EvalReport& r) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json ap = json::object();
    for (const auto& [c, v] : r.per_class_ap) ap[std::to_string(c)] = v;
    json j = {{"task", r.task_id},
              {"selector", r.selector},
              {"per_class_ap", ap},
              {"flagged_classes", r.flagged_classes},
              {"map_previous", opt(r.map_previous)},
              {"map_current", opt(r.map_current)},
              {"map_both", opt(r.map_both)},
              {"wi", opt(r.wi)},
              {"u_recall", opt(r.u_recall)},
              {"a_ose", r.a_ose ? json(*r.a_ose) : json(nullptr)},
              {"n_unknown_detections", r.n_unknown_detections},
              {"n_known_detections", r.n_known_detections}};
    if (r.wi) {
        const auto& w = r.wi_detail;
        j["wi_operating_point"] = {{"recall", w.operating_recall},
                                   {"threshold", w.threshold},
                                   {"detections", w.operating_count},
                                   {"tp", w.tp},
                                   {"fp_closed_set", w.fp_closed},
                                   {"fp_open_set", w.fp_open},
                                   {"p_known", w.p_known},
                                   {"p_known_unknown", w.p_known_unknown},
                                   {"recall_reached", w.reached}};
    }
    j["notes"] = json::array(
        {"WI = P_K / P_KuU - 1 at the first operating point where pooled known-class recall reaches the target; "
         "if unreachable, at the point of maximum recall (recall_reached = false).",
         "A-OSE counts known-labelled detections, above the WI operating threshold, whose best overlap (IoU >= 0.5) "
         "is an unknown object."});
    return j;
}

// Minimal grouped bar chart: one group per task, one bar per selector.
inline std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& groups,
                                 const std::vector<std::string>& series,
                                 const std::map<std::pair<std::string, std::string>, double>& values) {
    const int width = 640;
    const int height = 360;
    const int left = 60, right = 20, top = 40, bottom = 50;
    double vmax = 0.0;
    for (const auto& [k, v] : values) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const double group_w = groups.empty() ? plot_w : plot_w / static_cast<double>(groups.size());
    const double bar_w = series.empty() ? group_w : 0.8 * group_w / static_cast<double>(series.size());
    static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"};

    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", v);
        return std::string(buf);
    };
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + std::to_string(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         title + "</text>\n";
    s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top) + "\" x2=\"" + std::to_string(left) +
         "\" y2=\"" + std::to_string(height - bottom) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(height - bottom) + "\" x2=\"" +
         std::to_string(width - right) + "\" y2=\"" + std::to_string(height - bottom) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(top + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(vmax) + "</text>\n";
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double gx = left + group_w * static_cast<double>(g) + 0.1 * group_w;
        for (std::size_t k = 0; k < series.size(); ++k) {
            auto it = values.find({groups[g], series[k]});
            if (it == values.end()) continue;
            const double h = plot_h * it->second / vmax;
            const double x = gx + bar_w * static_cast<double>(k);
            s += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(height - bottom - h) + "\" width=\"" + fmt(bar_w * 0.9) +
                 "\" height=\"" + fmt(h) + "\" fill=\"" + palette[k % 5] + "\"><title>" + series[k] + " " +
                 groups[g] + ": " + fmt(it->second) + "</title></rect>\n";
        }
        s += "<text x=\"" + fmt(left + group_w * (static_cast<double>(g) + 0.5)) + "\" y=\"" +
             std::to_string(height - bottom + 18) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
             groups[g] + "</text>\n";
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const int y = height - 14;
        const int x = left + static_cast<int>(k) * 110;
        s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y - 10) + "\" width=\"10\" height=\"10\" fill=\"" +
             palette[k % 5] + "\"/>\n";
        s += "<text x=\"" + std::to_string(x + 14) + "\" y=\"" + std::to_string(y) +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + series[k] + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

} // namespace plu
