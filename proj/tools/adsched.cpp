// adsched: profile | run | bench | analyze

#include <iostream>

#include <CLI11.hpp>

#include "adsched/cli.hpp"

namespace {

using namespace adsched;
using namespace adsched::cli;

// Flags shared by profile, run and bench.
void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option_function<std::string>("--caps-mem", [&o](const std::string& v) { o.caps_mem = v; },
                                          "Memory cap in bytes, K/M/G/T suffixes allowed");
    cmd->add_option_function<int>("--caps-cpu", [&o](int v) { o.caps_cpu = v; }, "Logical cores available");
    cmd->add_option_function<std::string>("--policy", [&o](const std::string& v) { o.policy = v; },
                                          "adaptive | fixed | two-stage");
    cmd->add_option_function<Rows>("--b", [&o](Rows v) { o.b = v; }, "Batch rows (fixed policy)");
    cmd->add_option_function<int>("--k", [&o](int v) { o.k = v; }, "Workers (fixed policy)");
    cmd->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t v) { o.seed = v; }, "Random seed");
    cmd->add_option_function<std::string>("--backend", [&o](const std::string& v) { o.backend = v; },
                                          "auto | inmem | taskpool | sim");
    cmd->add_option_function<std::string>("--out-dir", [&o](const std::string& v) { o.out_dir = v; },
                                          "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive batch scheduling for tabular diffs"};
    app.require_subcommand(1);

    Overrides flags;
    std::string config_path;

    auto* profile = app.add_subcommand("profile", "Sample a job and write its pre-flight profile");
    profile->add_option("config", config_path, "Job config (JSON)")->required();
    add_overrides(profile, flags);

    auto* run = app.add_subcommand("run", "Diff a job under a batching policy");
    run->add_option("config", config_path, "Job config (JSON)")->required();
    add_overrides(run, flags);

    auto* bench = app.add_subcommand("bench", "Run a scenario matrix and emit the report tables");
    bench->add_option("matrix", config_path, "Scenario matrix (JSON)")->required();
    add_overrides(bench, flags);

    AnalyzeOptions analyze_opts;
    bool lenient = false;
    std::string analyze_out;
    auto* analyze = app.add_subcommand("analyze", "Recompute summaries and tables from telemetry logs");
    analyze->add_option("logs", analyze_opts.paths, "Log files or directories")->required();
    analyze->add_flag("--lenient", lenient, "Skip malformed lines instead of failing");
    analyze->add_option("--out-dir", analyze_out, "Also write tables.txt and summaries.csv here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*analyze) {
            analyze_opts.mode = lenient ? ReadMode::lenient : ReadMode::strict;
            analyze_opts.out_dir = analyze_out;
            return cmd_analyze(analyze_opts, std::cout, std::cerr);
        }
        if (*bench) return cmd_bench(load_bench_config(config_path, flags), std::cout, std::cerr);
        const JobConfig job = load_job_config(config_path, flags);
        return *profile ? cmd_profile(job, std::cout, std::cerr) : cmd_run(job, std::cout, std::cerr);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}
