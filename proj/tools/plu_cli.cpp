#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "plu/plu.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "config file (key = value lines)");
    cmd->add_option("--seed", c.seed, "base seed");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_flag("--deterministic", c.deterministic, "single-threaded, bit-reproducible run");
}

plu::RunConfig resolve(const Common& c) {
    plu::RunConfig cfg = c.config.empty() ? plu::RunConfig{} : plu::load_config(c.config);
    if (c.seed) cfg.run.seed = *c.seed;
    if (c.out) cfg.run.out = *c.out;
    if (c.deterministic) {
        cfg.run.deterministic = true;
        cfg.run.jobs = 1;
    }
    cfg.validate();
    return cfg;
}

void print_report_lines(const plu::RunResult& r) {
    for (const auto& rep : r.state.reports) {
        auto fmt = [](const std::optional<double>& v) {
            char b[32];
            if (!v) return std::string("-");
            std::snprintf(b, sizeof b, "%.4f", *v);
            return std::string(b);
        };
        std::printf("task %d %-6s mAP(prev) %s  mAP(cur) %s  mAP(both) %s  WI %s  U-Recall %s  A-OSE %s\n",
                    rep.task_id, rep.selector.c_str(), fmt(rep.map_previous).c_str(), fmt(rep.map_current).c_str(),
                    fmt(rep.map_both).c_str(), fmt(rep.wi).c_str(), fmt(rep.u_recall).c_str(),
                    rep.a_ose ? std::to_string(*rep.a_ose).c_str() : "-");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Proposal-level domain adaptation for open-world pseudo-labels"};
    app.require_subcommand(1);

    Common gen_opts, run_opts, abl_opts;
    std::string axis;
    std::string report_dir = "plu_out";

    auto* gen = app.add_subcommand("generate", "build the synthetic benchmark and audit it");
    add_common(gen, gen_opts);
    auto* run = app.add_subcommand("run", "run every task with top-k and PLU selection");
    add_common(run, run_opts);
    auto* abl = app.add_subcommand("ablate", "sweep one hyper-parameter over T1->T2");
    add_common(abl, abl_opts);
    abl->add_option("--axis", axis, "ratio|lambda|epsilon|finetune")->required();
    auto* rep = app.add_subcommand("report", "summarize a run directory");
    rep->add_option("--out", report_dir, "run directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(plu::ExitCode::config_error);
    }

    try {
        if (*gen) {
            const auto s = plu::cmd_generate(resolve(gen_opts));
            std::cout << plu::format_generate_summary(s);
        } else if (*run) {
            const auto cfg = resolve(run_opts);
            const auto r = plu::cmd_run(cfg);
            print_report_lines(r);
            std::cout << "wrote " << cfg.run.out << "/manifest.json\n";
        } else if (*abl) {
            const auto cfg = resolve(abl_opts);
            plu::ablation_values(axis);
            plu::cmd_ablate(cfg, axis);
            std::cout << "wrote " << cfg.run.out << "/ablation_" << axis << "_summary.csv\n";
        } else if (*rep) {
            const auto r = plu::cmd_report(report_dir);
            if (r.nothing) {
                std::cerr << "nothing to report in " << report_dir << "\n";
                return static_cast<int>(plu::ExitCode::data_error);
            }
            std::cout << r.summary;
            for (const auto& m : r.missing) std::cerr << "missing: " << m << "\n";
        }
    } catch (const plu::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(plu::ExitCode::data_error);
    }
    return 0;
}
