#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "plu/csv.hpp"
#include "plu/error.hpp"
#include "plu/metrics.hpp"
#include "plu/protocol.hpp"
#include "plu/uda.hpp"
#include "plu/world.hpp"

namespace plu {

struct RunOptions {
    std::uint64_t seed = 7;
    int seeds = 5;  // ablation replicates
    std::string out = "plu_out";
    std::string dataset;  // empty: <out>/dataset.jsonl
    bool deterministic = false;
    int jobs = 0;  // 0: hardware concurrency

    std::string dataset_path() const { return dataset.empty() ? out + "/dataset.jsonl" : dataset; }
};

// Every tunable, addressable by a dotted key such as "plu.epsilon".
struct RunConfig {
    WorldParams world;
    ProtocolConfig protocol;
    PluConfig plu;
    SelectConfig select;
    MetricsConfig metrics;
    RunOptions run;

    void validate() const {
        world.validate();
        protocol.validate();
        plu.validate();
        select.validate();
        metrics.validate();
        if (run.seeds < 1) throw ConfigError("run.seeds must be >= 1");
        if (run.jobs < 0) throw ConfigError("run.jobs must be >= 0");
    }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    T out{};
    in >> out;
    if (!in || !(in >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

// "1:10" -> 10 (BG per FG); a bare number is taken as the BG share directly.
inline double parse_ratio(const std::string& key, const std::string& v) {
    const auto colon = v.find(':');
    if (colon == std::string::npos) return parse_number<double>(key, v);
    const double fg = parse_number<double>(key, trim(v.substr(0, colon)));
    const double bg = parse_number<double>(key, trim(v.substr(colon + 1)));
    if (!(fg > 0.0) || !(bg > 0.0)) throw ConfigError(key + ": ratio terms must be > 0");
    return bg / fg;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define PLU_NUM_FIELD(KEY, MEMBER, TYPE)                                                                   \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_number<TYPE>(KEY, v); },          \
          [](const RunConfig& c) {                                                                         \
              if constexpr (std::is_floating_point_v<TYPE>) return csv::num(c.MEMBER);                     \
              else return std::to_string(c.MEMBER);                                                        \
          }}
#define PLU_BOOL_FIELD(KEY, MEMBER)                                                                        \
    Field{KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_bool(KEY, v); },                  \
          [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }}

inline const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        PLU_NUM_FIELD("world.d", world.d, int),
        PLU_NUM_FIELD("world.spread", world.spread, double),
        PLU_NUM_FIELD("world.sigma_bg", world.sigma_bg, double),
        PLU_NUM_FIELD("world.noise", world.noise, double),
        PLU_NUM_FIELD("world.n_bg_proposals", world.n_bg_proposals, int),
        PLU_NUM_FIELD("world.objects_min", world.objects_min, int),
        PLU_NUM_FIELD("world.objects_max", world.objects_max, int),
        PLU_NUM_FIELD("world.jitter", world.jitter, double),
        PLU_NUM_FIELD("world.copies_min", world.copies_min, int),
        PLU_NUM_FIELD("world.copies_max", world.copies_max, int),
        PLU_NUM_FIELD("world.shift_min", world.shift_min, double),
        PLU_NUM_FIELD("world.shift_max", world.shift_max, double),
        PLU_NUM_FIELD("world.object_size_min", world.object_size_min, double),
        PLU_NUM_FIELD("world.object_size_max", world.object_size_max, double),
        PLU_NUM_FIELD("world.bg_size_min", world.bg_size_min, double),
        PLU_NUM_FIELD("world.bg_size_max", world.bg_size_max, double),

        PLU_NUM_FIELD("protocol.n_tasks", protocol.n_tasks, int),
        PLU_NUM_FIELD("protocol.classes_per_task", protocol.classes_per_task, int),
        PLU_NUM_FIELD("protocol.never_annotated", protocol.never_annotated, int),
        PLU_NUM_FIELD("protocol.train_scenes", protocol.train_scenes, int),
        PLU_NUM_FIELD("protocol.test_scenes", protocol.test_scenes, int),
        PLU_NUM_FIELD("protocol.prev_class_weight", protocol.prev_class_weight, double),
        PLU_BOOL_FIELD("protocol.finetune", protocol.finetune),
        PLU_NUM_FIELD("protocol.finetune_fraction", protocol.finetune_fraction, double),
        PLU_NUM_FIELD("protocol.finetune_samples", protocol.finetune_samples, int),
        PLU_NUM_FIELD("protocol.head_h1", protocol.head_h1, int),
        PLU_NUM_FIELD("protocol.head_h2", protocol.head_h2, int),
        PLU_NUM_FIELD("protocol.head_epochs", protocol.head.epochs, int),
        PLU_NUM_FIELD("protocol.head_batch", protocol.head.batch, int),
        PLU_NUM_FIELD("protocol.head_lr", protocol.head.lr, double),
        PLU_NUM_FIELD("protocol.head_finetune_epochs", protocol.head_finetune.epochs, int),
        PLU_NUM_FIELD("protocol.head_finetune_lr", protocol.head_finetune.lr, double),

        PLU_NUM_FIELD("plu.epsilon", plu.epsilon, double),
        PLU_NUM_FIELD("plu.lambda", plu.lambda, double),
        Field{"plu.fg_bg_ratio",
              [](RunConfig& c, const std::string& v) { c.plu.fg_bg_ratio = parse_ratio("plu.fg_bg_ratio", v); },
              [](const RunConfig& c) { return "1:" + csv::num(c.plu.fg_bg_ratio); }},
        PLU_NUM_FIELD("plu.batch_size", plu.batch_size, int),
        PLU_NUM_FIELD("plu.train_samples", plu.train_samples, int),
        PLU_NUM_FIELD("plu.lr", plu.lr, double),
        PLU_NUM_FIELD("plu.momentum", plu.momentum, double),
        PLU_NUM_FIELD("plu.h1", plu.h1, int),
        PLU_NUM_FIELD("plu.h2", plu.h2, int),
        Field{"plu.target_norm",
              [](RunConfig& c, const std::string& v) {
                  if (v == "unmasked") c.plu.target_norm = TargetNorm::unmasked;
                  else if (v == "all") c.plu.target_norm = TargetNorm::all;
                  else throw ConfigError("plu.target_norm: expected unmasked|all");
              },
              [](const RunConfig& c) { return std::string(c.plu.target_norm == TargetNorm::all ? "all" : "unmasked"); }},
        Field{"plu.sample_count",
              [](RunConfig& c, const std::string& v) {
                  if (v == "both") c.plu.sample_count = SampleCount::both;
                  else if (v == "source") c.plu.sample_count = SampleCount::source;
                  else if (v == "target") c.plu.sample_count = SampleCount::target;
                  else throw ConfigError("plu.sample_count: expected both|source|target");
              },
              [](const RunConfig& c) {
                  switch (c.plu.sample_count) {
                      case SampleCount::source: return std::string("source");
                      case SampleCount::target: return std::string("target");
                      case SampleCount::both: break;
                  }
                  return std::string("both");
              }},
        PLU_NUM_FIELD("plu.weak_sigma", plu.augment.weak_sigma, double),
        PLU_NUM_FIELD("plu.strong_sigma", plu.augment.strong_sigma, double),
        PLU_NUM_FIELD("plu.strong_drop", plu.augment.strong_drop, double),

        PLU_NUM_FIELD("select.topk_k", select.topk_k, int),
        PLU_NUM_FIELD("select.fg_threshold", select.fg_threshold, double),

        PLU_NUM_FIELD("metrics.iou_threshold", metrics.iou_threshold, double),
        PLU_NUM_FIELD("metrics.wi_recall", metrics.wi_recall, double),
        Field{"metrics.ap_mode",
              [](RunConfig& c, const std::string& v) {
                  if (v == "all_point") c.metrics.ap_mode = ApMode::all_point;
                  else if (v == "eleven_point") c.metrics.ap_mode = ApMode::eleven_point;
                  else throw ConfigError("metrics.ap_mode: expected all_point|eleven_point");
              },
              [](const RunConfig& c) {
                  return std::string(c.metrics.ap_mode == ApMode::all_point ? "all_point" : "eleven_point");
              }},

        PLU_NUM_FIELD("run.seed", run.seed, std::uint64_t),
        PLU_NUM_FIELD("run.seeds", run.seeds, int),
        Field{"run.out", [](RunConfig& c, const std::string& v) { c.run.out = v; },
              [](const RunConfig& c) { return c.run.out; }},
        Field{"run.dataset", [](RunConfig& c, const std::string& v) { c.run.dataset = v; },
              [](const RunConfig& c) { return c.run.dataset; }},
        PLU_BOOL_FIELD("run.deterministic", run.deterministic),
        PLU_NUM_FIELD("run.jobs", run.jobs, int),
    };
    return table;
}

#undef PLU_NUM_FIELD
#undef PLU_BOOL_FIELD

} // namespace config_detail

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : config_detail::fields()) {
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

// Lines of "key = value"; '#' starts a comment.
inline RunConfig parse_config(std::istream& in, RunConfig cfg = {}) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = config_detail::trim(line.substr(0, eq));
        const auto value = config_detail::trim(line.substr(eq + 1));
        try {
            set_config_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    return parse_config(in);
}

inline std::string config_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : config_detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

} // namespace plu
