#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "plu/audit.hpp"
#include "plu/checkpoint.hpp"
#include "plu/config.hpp"
#include "plu/csv.hpp"
#include "plu/dataset_io.hpp"
#include "plu/protocol.hpp"
#include "plu/report.hpp"

namespace plu {

namespace fs = std::filesystem;

inline Benchmark build_benchmark(const RunConfig& cfg) {
    cfg.validate();
    const auto world = protocol_world(cfg.world, cfg.protocol, cfg.run.seed);
    return make_tasks(world, cfg.world, cfg.protocol, cfg.run.seed);
}

// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    unsigned workers = jobs > 0 ? static_cast<unsigned>(jobs) : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline nlohmann::json config_json(const RunConfig& cfg) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : config_detail::fields()) j[f.key] = f.get(cfg);
    return j;
}

// ---------------------------------------------------------------- generate

struct TaskAudit {
    int task_id = 0;
    LowObjectnessAudit low_objectness;
    BiasAudit bias;
    std::size_t topk_k = 0;
};

struct GenerateSummary {
    std::string dataset_path;
    std::size_t scenes = 0;
    std::map<int, std::size_t> annotated_per_class;
    std::map<int, std::size_t> objects_per_class;
    std::vector<TaskAudit> audits;

    bool all_pass() const {
        for (const auto& a : audits) {
            if (!a.low_objectness.pass) return false;
            if (!a.bias.pass && a.bias.oracle.unknown_objects > 0) return false;
        }
        return true;
    }
};

inline std::vector<TaskAudit> audit_benchmark(const Benchmark& b, const SelectConfig& sc) {
    std::vector<TaskAudit> out;
    for (const auto& t : b.header.tasks) {
        const auto scenes = b.scenes_of(t.train_ids);
        TaskAudit a;
        a.task_id = t.task_id;
        a.low_objectness = audit_low_objectness(scenes);
        a.topk_k = topk_budget(t, sc);
        a.bias = audit_bias(scenes, t.known, a.topk_k);
        out.push_back(a);
    }
    return out;
}

inline std::string format_generate_summary(const GenerateSummary& s) {
    std::ostringstream o;
    o << "dataset: " << s.dataset_path << " (" << s.scenes << " scenes)\n";
    o << "class  annotated  objects\n";
    for (const auto& [c, n] : s.objects_per_class) {
        auto it = s.annotated_per_class.find(c);
        char line[64];
        std::snprintf(line, sizeof line, "%5d  %9zu  %7zu\n", c, it == s.annotated_per_class.end() ? 0 : it->second, n);
        o << line;
    }
    for (const auto& a : s.audits) {
        char line[256];
        std::snprintf(line, sizeof line,
                      "task %d: low-objectness gate %s (bottom decile %.4f background, %zu scenes); "
                      "bias audit %s (top-%zu unknown recall %.4f vs oracle %.4f, top-k background %.4f)\n",
                      a.task_id, a.low_objectness.pass ? "PASS" : "FAIL", a.low_objectness.mean_bg_fraction,
                      a.low_objectness.scenes,
                      a.bias.oracle.unknown_objects == 0 ? "n/a" : (a.bias.pass ? "PASS" : "FAIL"), a.topk_k, a.bias.topk.unknown_recall,
                      a.bias.oracle.unknown_recall, a.bias.topk.background_fraction);
        o << line;
    }
    return o.str();
}

inline GenerateSummary cmd_generate(const RunConfig& cfg) {
    const auto b = build_benchmark(cfg);
    GenerateSummary s;
    s.dataset_path = cfg.run.dataset_path();
    s.scenes = b.scenes.size();
    for (const auto& sc : b.scenes) {
        for (const auto& g : sc.gt) ++s.annotated_per_class[g.class_id];
        for (const auto& o : sc.objects) ++s.objects_per_class[o.class_id];
    }
    s.audits = audit_benchmark(b, cfg.select);

    const fs::path path(s.dataset_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_dataset(b.to_file(), s.dataset_path);
    return s;
}

// ---------------------------------------------------------------- run

inline const std::vector<SelectorKind>& compared_selectors() {
    static const std::vector<SelectorKind> k = {SelectorKind::topk, SelectorKind::plu};
    return k;
}

struct RunResult {
    RunState state;
    std::vector<TaskOutputs> tasks;
};

inline RunResult run_protocol(const Benchmark& b, const RunConfig& cfg, int max_tasks = -1,
                              std::span<const SelectorKind> selectors = compared_selectors()) {
    cfg.validate();
    RunResult r{fresh_state(b, cfg.plu, cfg.protocol, cfg.run.seed), {}};
    int done = 0;
    for (const auto& t : b.header.tasks) {
        if (max_tasks >= 0 && done >= max_tasks) break;
        r.tasks.push_back(run_task(r.state, b, t, cfg.plu, cfg.protocol, cfg.select, cfg.metrics, cfg.run.seed, selectors));
        ++done;
    }
    return r;
}

inline RunResult cmd_run(const RunConfig& cfg) {
    const auto dataset = cfg.run.dataset_path();
    if (!fs::exists(dataset)) throw DataError("dataset not found: " + dataset + " (run `generate` first)");
    const auto b = Benchmark::from_file(load_dataset(dataset));
    auto result = run_protocol(b, cfg);

    const fs::path out(cfg.run.out);
    fs::create_directories(out);
    nlohmann::json manifest = {{"kind", "plu-run"},
                               {"schema_version", 1},
                               {"config", config_json(cfg)},
                               {"seed", cfg.run.seed},
                               {"dataset", dataset},
                               {"dataset_hash", hex64(file_hash(dataset))},
                               {"n_tasks", b.header.tasks.size()},
                               {"reports_csv", "reports.csv"}};
    nlohmann::json tasks = nlohmann::json::array();
    std::ostringstream reports_csv;
    write_reports_csv(reports_csv, result.state.reports);
    write_text(out / "reports.csv", reports_csv.str());

    for (std::size_t i = 0; i < result.tasks.size(); ++i) {
        const auto& to = result.tasks[i];
        const int t = b.header.tasks[i].task_id;
        const std::string ts = std::to_string(t);
        nlohmann::json entry = {{"task", t}};
        {
            std::ostringstream log;
            write_training_log_csv(log, to.train_log);
            write_text(out / ("train_log_t" + ts + ".csv"), log.str());
            entry["train_log"] = "train_log_t" + ts + ".csv";
        }
        std::ostringstream sel;
        bool header = true;
        nlohmann::json reps = nlohmann::json::array();
        for (const auto& ev : to.evaluations) {
            write_selections_csv(sel, ev.selections, ev.report.selector, header);
            header = false;
            const std::string name = "report_t" + ts + "_" + ev.report.selector + ".json";
            write_text(out / name, report_json(ev.report).dump(2) + "\n");
            reps.push_back(name);
        }
        write_text(out / ("selections_t" + ts + ".csv"), sel.str());
        entry["selections"] = "selections_t" + ts + ".csv";
        entry["reports"] = reps;
        tasks.push_back(entry);
    }
    save_checkpoint(result.state.predictor, result.state.predictor_opt, (out / "predictor.json").string());
    save_checkpoint(result.state.head.net, result.state.head.opt, (out / "known_head.json").string());
    manifest["tasks"] = tasks;
    manifest["checkpoints"] = {"predictor.json", "known_head.json"};
    std::string stages;
    for (const auto& l : result.state.stage_log) stages += l + "\n";
    write_text(out / "stages.txt", stages);
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    return result;
}

// ---------------------------------------------------------------- ablate

inline const std::vector<std::string>& ablation_axes() {
    static const std::vector<std::string> a = {"ratio", "lambda", "epsilon", "finetune"};
    return a;
}

inline std::vector<std::string> ablation_values(const std::string& axis) {
    if (axis == "ratio") return {"1:1", "1:2", "1:5", "1:10"};
    if (axis == "lambda") return {"1", "0.7", "0.5", "0.2"};
    if (axis == "epsilon") return {"0.6", "0.7", "0.8", "0.9", "0.95"};
    if (axis == "finetune") return {"on", "off"};
    throw ConfigError("unknown ablation axis '" + axis + "' (expected ratio|lambda|epsilon|finetune)");
}

inline void apply_ablation(RunConfig& cfg, const std::string& axis, const std::string& value) {
    if (axis == "ratio") set_config_value(cfg, "plu.fg_bg_ratio", value);
    else if (axis == "lambda") set_config_value(cfg, "plu.lambda", value);
    else if (axis == "epsilon") set_config_value(cfg, "plu.epsilon", value);
    else if (axis == "finetune") cfg.protocol.finetune = value == "on";
    else throw ConfigError("unknown ablation axis '" + axis + "'");
}

struct AblationRow {
    std::string axis;
    std::string value;
    std::uint64_t seed = 0;
    EvalReport report;  // task-2 report of the PLU selector
};

inline constexpr int kAblationTask = 2;

inline std::vector<AblationRow> ablate(const RunConfig& base, const std::string& axis) {
    const auto values = ablation_values(axis);
    if (base.protocol.n_tasks < kAblationTask) throw ConfigError("ablation needs protocol.n_tasks >= 2");
    std::vector<AblationRow> rows(values.size() * static_cast<std::size_t>(base.run.seeds));
    const int jobs = base.run.deterministic ? 1 : base.run.jobs;
    const std::vector<SelectorKind> plu_only = {SelectorKind::plu};
    parallel_for(rows.size(), jobs, [&](std::size_t i) {
        const auto& value = values[i / static_cast<std::size_t>(base.run.seeds)];
        RunConfig cfg = base;
        cfg.run.seed = base.run.seed + i % static_cast<std::size_t>(base.run.seeds);
        apply_ablation(cfg, axis, value);
        const auto b = build_benchmark(cfg);
        auto r = run_protocol(b, cfg, kAblationTask, plu_only);
        rows[i] = {axis, value, cfg.run.seed, r.tasks.back().evaluations.front().report};
    });
    return rows;
}

inline const std::vector<std::string>& ablation_columns() {
    static const std::vector<std::string> c = {"axis", "value", "seed", "wi", "u_recall", "a_ose",
                                               "map_previous", "map_current", "map_both"};
    return c;
}

inline void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
    out << csv::join(ablation_columns()) << '\n';
    for (const auto& r : rows) {
        const auto& e = r.report;
        out << csv::join({r.axis, r.value, std::to_string(r.seed), csv::opt(e.wi), csv::opt(e.u_recall),
                          e.a_ose ? std::to_string(*e.a_ose) : std::string{}, csv::opt(e.map_previous),
                          csv::opt(e.map_current), csv::opt(e.map_both)})
            << '\n';
    }
}

struct CellStats {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
};

inline CellStats cell_stats(const std::vector<double>& xs) {
    CellStats s;
    s.n = xs.size();
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double v = 0.0;
        for (double x : xs) v += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(v / static_cast<double>(xs.size() - 1));
    }
    return s;
}

inline void cmd_ablate(const RunConfig& cfg, const std::string& axis) {
    const auto rows = ablate(cfg, axis);
    const fs::path out(cfg.run.out);
    fs::create_directories(out);
    std::ostringstream all;
    write_ablation_csv(all, rows);
    write_text(out / ("ablation_" + axis + ".csv"), all.str());

    std::ostringstream sum;
    sum << "axis,value,n,wi_mean,wi_sd,u_recall_mean,u_recall_sd,map_previous_mean,map_previous_sd,"
           "map_current_mean,map_current_sd,map_both_mean,map_both_sd\n";
    std::map<std::pair<std::string, std::string>, double> plot_wi, plot_ur, plot_map;
    const auto values = ablation_values(axis);
    for (const auto& v : values) {
        std::vector<double> wi, ur, mp, mc, mb;
        for (const auto& r : rows) {
            if (r.value != v) continue;
            if (r.report.wi) wi.push_back(*r.report.wi);
            if (r.report.u_recall) ur.push_back(*r.report.u_recall);
            if (r.report.map_previous) mp.push_back(*r.report.map_previous);
            if (r.report.map_current) mc.push_back(*r.report.map_current);
            if (r.report.map_both) mb.push_back(*r.report.map_both);
        }
        const auto a = cell_stats(wi), b = cell_stats(ur), c = cell_stats(mp), d = cell_stats(mc), e = cell_stats(mb);
        sum << csv::join({axis, v, std::to_string(cfg.run.seeds), csv::num(a.mean), csv::num(a.sd), csv::num(b.mean),
                          csv::num(b.sd), csv::num(c.mean), csv::num(c.sd), csv::num(d.mean), csv::num(d.sd),
                          csv::num(e.mean), csv::num(e.sd)})
            << '\n';
        plot_wi[{v, "plu"}] = a.mean;
        plot_ur[{v, "plu"}] = b.mean;
        plot_map[{v, "plu"}] = e.mean;
    }
    write_text(out / ("ablation_" + axis + "_summary.csv"), sum.str());
    const std::vector<std::string> series = {"plu"};
    write_text(out / ("ablation_" + axis + "_wi.svg"), bar_chart_svg("WI vs " + axis, values, series, plot_wi));
    write_text(out / ("ablation_" + axis + "_u_recall.svg"), bar_chart_svg("U-Recall vs " + axis, values, series, plot_ur));
    write_text(out / ("ablation_" + axis + "_map_both.svg"), bar_chart_svg("known mAP vs " + axis, values, series, plot_map));
}

// ---------------------------------------------------------------- report

struct ReportOutcome {
    bool nothing = false;
    std::vector<std::string> written;
    std::vector<std::string> missing;
    std::string summary;
};

inline ReportOutcome cmd_report(const std::string& run_dir) {
    ReportOutcome res;
    const fs::path dir(run_dir);
    const fs::path csv_path = dir / "reports.csv";
    if (!fs::exists(csv_path)) {
        res.nothing = true;
        return res;
    }
    std::ifstream in(csv_path);
    const auto table = csv::parse(in);
    if (table.rows.empty()) {
        res.nothing = true;
        return res;
    }
    for (const auto& col : report_columns())
        if (table.column(col) < 0) throw DataError("reports.csv: missing column " + col);

    int expected_tasks = 0;
    if (fs::exists(dir / "manifest.json")) {
        std::ifstream m(dir / "manifest.json");
        try {
            expected_tasks = nlohmann::json::parse(m).value("n_tasks", 0);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("manifest.json: ") + e.what());
        }
    } else {
        res.missing.push_back("manifest.json");
    }

    const int c_task = table.column("task");
    const int c_sel = table.column("selector");
    std::vector<std::string> tasks, selectors;
    for (const auto& row : table.rows) {
        if (std::find(tasks.begin(), tasks.end(), row[c_task]) == tasks.end()) tasks.push_back(row[c_task]);
        if (std::find(selectors.begin(), selectors.end(), row[c_sel]) == selectors.end()) selectors.push_back(row[c_sel]);
    }
    for (int t = 1; t <= expected_tasks; ++t)
        if (std::find(tasks.begin(), tasks.end(), std::to_string(t)) == tasks.end())
            res.missing.push_back("task " + std::to_string(t) + " reports");

    std::ostringstream md;
    md << "# Run summary\n\n| task | selector |";
    for (const auto& m : report_metrics()) md << ' ' << m << " |";
    md << "\n|---|---|";
    for (std::size_t i = 0; i < report_metrics().size(); ++i) md << "---|";
    md << '\n';
    for (const auto& row : table.rows) {
        md << "| " << row[c_task] << " | " << row[c_sel] << " |";
        for (const auto& m : report_metrics()) {
            const auto& cell = row[static_cast<std::size_t>(table.column(m))];
            md << ' ' << (cell.empty() ? "-" : cell) << " |";
        }
        md << '\n';
    }
    if (!res.missing.empty()) {
        md << "\nMissing:\n";
        for (const auto& m : res.missing) md << "- " << m << '\n';
    }
    res.summary = md.str();
    write_text(dir / "summary.md", res.summary);
    res.written.push_back("summary.md");

    for (const auto& metric : report_metrics()) {
        std::map<std::pair<std::string, std::string>, double> values;
        const int c = table.column(metric);
        for (const auto& row : table.rows) {
            const auto& cell = row[static_cast<std::size_t>(c)];
            if (!cell.empty()) values[{"T" + row[c_task], row[c_sel]}] = std::strtod(cell.c_str(), nullptr);
        }
        std::vector<std::string> groups;
        for (const auto& t : tasks) groups.push_back("T" + t);
        const std::string name = metric + ".svg";
        write_text(dir / name, bar_chart_svg(metric, groups, selectors, values));
        res.written.push_back(name);
    }
    return res;
}

} // namespace plu
