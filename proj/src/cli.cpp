#include "adsched/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <unistd.h>

namespace adsched::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("malformed config " + path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw DataError("cannot write " + path.string());
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return base / p;
}

double caps_mem_value(const json& v) {
    return v.is_string() ? parse_bytes(v.get<std::string>()) : v.get<double>();
}

// File values, then environment, then flags.
void apply_caps(ResourceCaps& caps, const json& file, const Overrides& flags) {
    if (file.contains("mem")) caps.mem_cap = caps_mem_value(file.at("mem"));
    if (file.contains("cpu")) caps.cpu_cap = file.at("cpu").get<int>();
    if (const char* env = std::getenv("ADSCHED_CAPS_MEM"); env && *env) caps.mem_cap = parse_bytes(env);
    if (const char* env = std::getenv("ADSCHED_CAPS_CPU"); env && *env) {
        try {
            caps.cpu_cap = std::stoi(env);
        } catch (const std::exception&) {
            throw UsageError(std::string("ADSCHED_CAPS_CPU is not an integer: ") + env);
        }
    }
    if (flags.caps_mem) caps.mem_cap = parse_bytes(*flags.caps_mem);
    if (flags.caps_cpu) caps.cpu_cap = *flags.caps_cpu;
    try {
        caps.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::vector<BatchConfig> grid_from_json(const json& j) {
    std::vector<BatchConfig> grid;
    for (const auto& g : j) grid.push_back({g.at("b").get<Rows>(), g.at("k").get<int>()});
    return grid;
}

json grid_to_json(const std::vector<BatchConfig>& grid) {
    json out = json::array();
    for (const auto& c : grid) out.push_back({{"b", c.b}, {"k", c.k}});
    return out;
}

// Geometric ladder from b_min and k in {1, cpu/2, cpu} for the two-stage
// heuristic when the config names no grid.
std::vector<BatchConfig> default_grid(Rows total, const ResourceCaps& caps, const PolicyParams& policy) {
    std::vector<Rows> bs;
    for (Rows b = policy.b_min; b <= std::max(policy.b_min, total / 4); b *= 4) bs.push_back(b);
    std::vector<int> ks{1};
    if (caps.cpu_cap / 2 > 1) ks.push_back(caps.cpu_cap / 2);
    if (caps.cpu_cap > 1) ks.push_back(caps.cpu_cap);
    std::vector<BatchConfig> grid;
    for (Rows b : bs)
        for (int k : ks) grid.push_back({b, k});
    return grid;
}

std::string fmt_bytes(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v << " B";
    if (v >= 1024.0 * 1024) s << " (" << std::fixed << std::setprecision(1) << v / (1024.0 * 1024) << " MiB)";
    return s.str();
}

std::shared_ptr<const PreparedJob> prepare(const JobConfig& c) {
    const auto schema = [](const fs::path& csv, const fs::path& explicit_schema) {
        return explicit_schema.empty() ? schema_sidecar(csv) : explicit_schema;
    };
    if (c.source.empty() || c.target.empty()) throw UsageError("config needs both 'source' and 'target'");
    auto a = std::make_shared<const Table>(load_csv(c.source, schema(c.source, c.source_schema), c.normalize));
    auto b = std::make_shared<const Table>(load_csv(c.target, schema(c.target, c.target_schema), c.normalize));
    return std::make_shared<const PreparedJob>(JobSpec{a, b, c.mapping, c.tolerances, c.normalize});
}

void print_profile(const PreflightProfile& p, std::ostream& out) {
    out << "bytes/row (W): " << std::setprecision(6) << p.bytes_per_row << "\n";
    out << "read bandwidth (B_read): " << p.read_bandwidth << " B/s\n";
    out << "sample rows: " << p.sample_rows << "\n";
    for (const auto& [kind, cost] : p.delta_cost_per_type)
        out << "compare cost " << to_string(kind) << ": " << cost << " s/row\n";
}

PolicyKind policy_from_flag(const std::string& name) {
    try {
        return policy_kind_from_string(name);
    } catch (const std::invalid_argument&) {
        throw UsageError("--policy must be adaptive, fixed or two-stage, not '" + name + "'");
    }
}

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const InfeasibleJob& e) {
        err << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}

}  // namespace

double parse_bytes(const std::string& text) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        throw UsageError("not a byte count: '" + text + "'");
    }
    std::string suffix = text.substr(used);
    std::transform(suffix.begin(), suffix.end(), suffix.begin(), [](unsigned char c) { return std::toupper(c); });
    if (suffix.size() > 1 && (suffix.ends_with("IB") || suffix.ends_with("B"))) suffix = suffix.substr(0, 1);
    if (suffix == "B") suffix.clear();
    const std::map<std::string, double> scale{{"", 1.0}, {"K", 1024.0}, {"M", 1024.0 * 1024}, {"G", 1024.0 * 1024 * 1024},
                                              {"T", 1024.0 * 1024 * 1024 * 1024}};
    const auto it = scale.find(suffix);
    if (it == scale.end() || !(value > 0) || !std::isfinite(value))
        throw UsageError("not a byte count: '" + text + "'");
    return value * it->second;
}

ResourceCaps detected_caps() {
    ResourceCaps caps;
    caps.cpu_cap = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    const long pages = sysconf(_SC_PHYS_PAGES);
    const long page = sysconf(_SC_PAGE_SIZE);
    caps.mem_cap = pages > 0 && page > 0 ? 0.8 * static_cast<double>(pages) * static_cast<double>(page) : 4e9;
    return caps;
}

json to_json(const SimModel& s) {
    return json{{"bytes_per_row", s.bytes_per_row},
                {"read_bandwidth", s.read_bandwidth},
                {"prep_per_row", s.prep_per_row},
                {"delta_per_row", s.delta_per_row},
                {"overhead_fixed", s.overhead_fixed},
                {"overhead_per_worker", s.overhead_per_worker},
                {"contention", s.contention},
                {"beta0", s.beta0},
                {"beta1", s.beta1},
                {"beta2", s.beta2},
                {"cpu_per_worker", s.cpu_per_worker},
                {"sigma", s.sigma},
                {"straggler_prob", s.straggler_prob},
                {"straggler_factor", s.straggler_factor},
                {"seed", s.seed}};
}

SimModel sim_from_json(const json& j, SimModel s) {
    const auto set = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    set("bytes_per_row", s.bytes_per_row);
    set("read_bandwidth", s.read_bandwidth);
    set("prep_per_row", s.prep_per_row);
    set("delta_per_row", s.delta_per_row);
    set("overhead_fixed", s.overhead_fixed);
    set("overhead_per_worker", s.overhead_per_worker);
    set("contention", s.contention);
    set("beta0", s.beta0);
    set("beta1", s.beta1);
    set("beta2", s.beta2);
    set("cpu_per_worker", s.cpu_per_worker);
    set("sigma", s.sigma);
    set("straggler_prob", s.straggler_prob);
    set("straggler_factor", s.straggler_factor);
    set("seed", s.seed);
    return s;
}

json to_json(const PreflightProfile& p) {
    json costs = json::object();
    for (const auto& [kind, cost] : p.delta_cost_per_type) costs[std::string(to_string(kind))] = cost;
    return json{{"bytes_per_row", p.bytes_per_row},
                {"read_bandwidth", p.read_bandwidth},
                {"delta_cost_per_type", costs},
                {"sample_rows", p.sample_rows}};
}

PreflightProfile profile_from_json(const json& j) {
    PreflightProfile p;
    try {
        p.bytes_per_row = j.at("bytes_per_row").get<double>();
        p.read_bandwidth = j.at("read_bandwidth").get<double>();
        p.sample_rows = j.value("sample_rows", Rows{0});
        if (j.contains("delta_cost_per_type"))
            for (const auto& [name, cost] : j.at("delta_cost_per_type").items())
                p.delta_cost_per_type[column_kind_from_string(name)] = cost.get<double>();
    } catch (const std::exception& e) {
        throw DataError(std::string("malformed profile: ") + e.what());
    }
    if (!(p.bytes_per_row > 0) || !(p.read_bandwidth > 0)) throw DataError("profile needs positive W and B_read");
    return p;
}

JobConfig load_job_config(const fs::path& path, const Overrides& flags) {
    const json j = read_json(path);
    const fs::path base = path.parent_path();
    JobConfig c;
    c.caps = detected_caps();
    c.out_dir = base / "adsched-out";
    try {
        c.name = j.value("name", path.stem().string());
        c.source = resolve(base, j.value("source", std::string()));
        c.target = resolve(base, j.value("target", std::string()));
        c.source_schema = resolve(base, j.value("source_schema", std::string()));
        c.target_schema = resolve(base, j.value("target_schema", std::string()));
        c.profile = resolve(base, j.value("profile", std::string()));
        if (j.contains("mapping"))
            for (const auto& m : j.at("mapping"))
                c.mapping.push_back({m.at("source").get<std::string>(), m.at("target").get<std::string>()});
        c.tolerances = j.value("tolerances", c.tolerances);
        if (j.contains("normalize")) {
            const auto& n = j.at("normalize");
            c.normalize.trim_trailing_whitespace = n.value("trim_trailing_whitespace", true);
            c.normalize.datetime_granularity_s = n.value("datetime_granularity_s", std::int64_t{1});
        }
        if (j.contains("policy")) c.policy = policy_from_json(j.at("policy"));
        if (j.contains("scheduler")) {
            const auto& s = j.at("scheduler");
            c.scheduler.kind = policy_kind_from_string(s.value("kind", std::string("adaptive")));
            c.scheduler.fixed = {s.value("b", Rows{0}), s.value("k", 0)};
            if (s.contains("grid")) c.scheduler.grid = grid_from_json(s.at("grid"));
            c.scheduler.warmup_fraction = s.value("warmup_fraction", 0.1);
            c.min_waves = s.value("min_waves", c.min_waves);
        }
        if (j.contains("gate")) {
            c.gate.alpha_rep = j.at("gate").value("alpha", c.gate.alpha_rep);
            c.gate.beta_fixed = j.at("gate").value("beta", c.gate.beta_fixed);
        }
        c.backend = j.value("backend", c.backend);
        c.seed = j.value("seed", c.seed);
        if (j.contains("sim")) c.sim = sim_from_json(j.at("sim"));
        if (j.contains("out_dir")) c.out_dir = resolve(base, j.at("out_dir").get<std::string>());
        apply_caps(c.caps, j.value("caps", json::object()), flags);
    } catch (const json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }

    if (flags.policy) c.scheduler.kind = policy_from_flag(*flags.policy);
    if (flags.b) c.scheduler.fixed.b = *flags.b;
    if (flags.k) c.scheduler.fixed.k = *flags.k;
    if (flags.seed) c.seed = *flags.seed;
    if (flags.backend) c.backend = *flags.backend;
    if (flags.out_dir) c.out_dir = *flags.out_dir;
    c.sim.seed = c.seed;

    if (c.backend != "auto" && c.backend != "inmem" && c.backend != "taskpool" && c.backend != "sim")
        throw UsageError("backend must be auto, inmem, taskpool or sim, not '" + c.backend + "'");
    if (c.scheduler.kind == PolicyKind::fixed && (c.scheduler.fixed.b < 1 || c.scheduler.fixed.k < 1))
        throw UsageError("fixed policy needs b >= 1 and k >= 1 (--b, --k)");
    if (c.min_waves < 1) throw UsageError("min_waves must be >= 1");
    return c;
}

json to_json(const JobConfig& c) {
    json mapping = json::array();
    for (const auto& m : c.mapping) mapping.push_back({{"source", m.source}, {"target", m.target}});
    json scheduler{{"kind", c.scheduler.kind == PolicyKind::adaptive    ? "adaptive"
                            : c.scheduler.kind == PolicyKind::fixed ? "fixed"
                                                                    : "two-stage"},
                   {"min_waves", c.min_waves},
                   {"warmup_fraction", c.scheduler.warmup_fraction}};
    if (c.scheduler.kind == PolicyKind::fixed) {
        scheduler["b"] = c.scheduler.fixed.b;
        scheduler["k"] = c.scheduler.fixed.k;
    }
    if (!c.scheduler.grid.empty()) scheduler["grid"] = grid_to_json(c.scheduler.grid);
    return json{{"name", c.name},
                {"source", c.source.string()},
                {"target", c.target.string()},
                {"mapping", mapping},
                {"tolerances", c.tolerances},
                {"normalize",
                 {{"trim_trailing_whitespace", c.normalize.trim_trailing_whitespace},
                  {"datetime_granularity_s", c.normalize.datetime_granularity_s}}},
                {"caps", {{"mem", c.caps.mem_cap}, {"cpu", c.caps.cpu_cap}}},
                {"policy", to_json(c.policy)},
                {"scheduler", scheduler},
                {"gate", {{"alpha", c.gate.alpha_rep}, {"beta", c.gate.beta_fixed}}},
                {"backend", c.backend},
                {"seed", c.seed},
                {"sim", to_json(c.sim)},
                {"out_dir", c.out_dir.string()}};
}

int cmd_profile(const JobConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto job = prepare(config);
        const auto profile = preflight_profile(*job);
        print_profile(profile, out);
        fs::create_directories(config.out_dir);
        const auto path = config.out_dir / "profile.json";
        write_text(path, to_json(profile).dump(2) + "\n");
        out << "profile written to " << path.string() << "\n";
        return static_cast<int>(kOk);
    });
}

int cmd_run(const JobConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto job = prepare(config);
        const auto profile =
            config.profile.empty() ? preflight_profile(*job) : profile_from_json(read_json(config.profile));

        GateInputs gate = config.gate;
        gate.rows_a = job->spec().source->row_count();
        gate.rows_b = job->spec().target->row_count();
        const double ws = estimate_working_set(gate, profile);
        const BackendKind gated = select_backend(ws, config.caps, config.policy);
        out << "gate: working set " << fmt_bytes(ws) << " vs kappa*M_cap " << fmt_bytes(config.policy.kappa * config.caps.mem_cap)
            << " -> " << to_string(gated) << "\n";
        BackendKind backend = gated;
        if (config.backend != "auto") {
            backend = backend_kind_from_string(config.backend);
        }
        out << "backend: " << to_string(backend) << (backend != gated ? " (forced)" : "") << "\n";

        PolicyChoice choice = config.scheduler;
        if (choice.kind == PolicyKind::two_stage && choice.grid.empty())
            choice.grid = default_grid(job->aligned_rows(), config.caps, config.policy);

        for (const auto& c : choice.kind == PolicyKind::fixed ? std::vector<BatchConfig>{choice.fixed} : choice.grid)
            if (c.k > config.caps.cpu_cap)
                throw UsageError("k=" + std::to_string(c.k) + " exceeds the cpu cap of " +
                                 std::to_string(config.caps.cpu_cap) + " (--caps-cpu)");

        SchedulerModels models = models_from_profile(*job, profile);
        std::unique_ptr<ConfigPolicy> policy;
        if (choice.kind == PolicyKind::adaptive) {
            policy = std::make_unique<AdaptiveScheduler>(models, config.caps, config.policy, backend, config.min_waves);
        } else if (choice.kind == PolicyKind::fixed) {
            if (!is_safe(choice.fixed.b, choice.fixed.k, models.mem, profile, config.caps, config.policy))
                err << "warning: fixed (b=" << choice.fixed.b << ", k=" << choice.fixed.k
                    << ") exceeds the predicted memory envelope\n";
            policy = std::make_unique<FixedPolicy>(choice.fixed);
        } else {
            policy = std::make_unique<TwoStagePolicy>(choice.grid, choice.warmup_fraction);
        }

        ExecOptions exec;
        exec.cpu_cap = config.caps.cpu_cap;
        exec.k_min = config.policy.k_min;
        auto runner = make_backend(backend, job, 1, exec, config.sim, config.caps.mem_cap);
        const auto outcome = run_job(*runner, job->aligned_rows(), *policy, {});

        fs::create_directories(config.out_dir);
        const auto records = records_from_outcome(outcome);
        JobMeta meta{config.name, config.name, choice.label(), 0, backend,
                     std::max(gate.rows_a, gate.rows_b)};
        json effective = to_json(config);
        effective["gate"]["working_set"] = ws;
        effective["gate"]["threshold"] = config.policy.kappa * config.caps.mem_cap;
        effective["gate"]["selected"] = std::string(to_string(gated));
        effective["backend_used"] = std::string(to_string(backend));
        effective["profile"] = to_json(profile);
        const auto log = config.out_dir / "telemetry.jsonl";
        if (!write_run_log(log, meta, effective, records)) err << "warning: some telemetry lines were dropped\n";

        const auto summary = job_summary(records, config.policy);
        std::ostringstream csv;
        export_summaries({{meta, summary}}, csv);
        write_text(config.out_dir / "summary.csv", csv.str());
        if (!outcome.failed) export_verdicts(outcome.result, config.out_dir / "verdicts.jsonl");

        out << "rows: " << outcome.rows << "  batches: " << outcome.batches.size() << "\n";
        out << "verdicts: equal " << outcome.result.count(VerdictKind::equal) << ", changed "
            << outcome.result.count(VerdictKind::changed) << ", added " << outcome.result.count(VerdictKind::added)
            << ", removed " << outcome.result.count(VerdictKind::removed) << "\n";
        out << "p95: " << summary.job_p95 << " s  peak rss: " << fmt_bytes(summary.peak_rss)
            << "  throughput: " << summary.throughput << " rows/s\n";
        out << "reconfigs: " << outcome.reconfig_count << "  oom events: " << outcome.oom_events << "\n";
        out << "final config: b=" << outcome.final_config.b << " k=" << outcome.final_config.k << "\n";
        out << "outputs: " << config.out_dir.string() << "\n";
        if (outcome.failed) {
            err << "error: job aborted after a simulated out-of-memory event\n";
            return static_cast<int>(kData);
        }
        return static_cast<int>(kOk);
    });
}

BenchConfig load_bench_config(const fs::path& path, const Overrides& flags) {
    if (flags.policy || flags.b || flags.k)
        throw UsageError("bench runs every policy; --policy, --b and --k apply to run only");
    const json j = read_json(path);
    BenchConfig c;
    c.sim = desk_noisy_sim();
    c.out_dir = path.parent_path() / "adsched-bench";
    try {
        c.request = scenario_request_from_json(j);
        c.repetitions = j.value("repetitions", c.repetitions);
        c.fixed_grid = j.value("fixed_grid", c.fixed_grid);
        c.heuristic = j.value("heuristic", c.heuristic);
        c.backend = j.value("backend", c.backend);
        if (c.backend != "sim") c.caps = detected_caps();
        if (j.contains("sim")) c.sim = sim_from_json(j.at("sim"), c.sim);
        if (j.contains("out_dir")) c.out_dir = resolve(path.parent_path(), j.at("out_dir").get<std::string>());
        if (j.contains("seed")) {
            c.request.base.seed = j.at("seed").get<std::uint64_t>();
            c.sim.seed = c.request.base.seed;
        }
        apply_caps(c.caps, j.value("caps", json::object()), flags);
        if (!j.contains("cpu_cap")) c.request.cpu_cap = c.caps.cpu_cap;
    } catch (const json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
    if (flags.caps_cpu) c.request.cpu_cap = *flags.caps_cpu;
    if (flags.seed) {
        c.request.base.seed = *flags.seed;
        c.sim.seed = *flags.seed;
    }
    if (flags.backend) c.backend = *flags.backend;
    if (flags.out_dir) c.out_dir = *flags.out_dir;
    if (c.backend != "auto" && c.backend != "inmem" && c.backend != "taskpool" && c.backend != "sim")
        throw UsageError("backend must be auto, inmem, taskpool or sim, not '" + c.backend + "'");
    if (c.repetitions < 3) throw UsageError("bench needs at least 3 repetitions per cell");
    return c;
}

int cmd_bench(const BenchConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto matrix = scenario_matrix(config.request);
        const auto make_cell = [&](const Scenario& sc) {
            if (config.backend == "sim") return sim_cell(sc, config.sim, config.caps);
            BenchCell cell;
            cell.workload = sc.name;
            cell.rows_per_side = sc.workload.rows_per_side;
            const auto pair = generate_pair(sc.workload);
            cell.job = std::make_shared<const PreparedJob>(JobSpec{pair.source, pair.target, {}, {}, {}});
            cell.total_rows = cell.job->aligned_rows();
            const auto profile = preflight_profile(*cell.job);
            cell.models = models_from_profile(*cell.job, profile);
            cell.caps = config.caps;
            cell.policy = sc.policy;
            cell.exec = config.exec;
            cell.exec.k_min = sc.policy.k_min;
            if (config.backend == "auto") {
                const GateInputs gate{1.0, 0.0, cell.job->spec().source->row_count(),
                                      cell.job->spec().target->row_count()};
                cell.backend = select_backend(estimate_working_set(gate, profile), config.caps, sc.policy);
            } else {
                cell.backend = backend_kind_from_string(config.backend);
            }
            cell.sim = config.sim;
            return cell;
        };
        SuiteOptions options;
        options.repetitions = config.repetitions;
        options.fixed_grid = config.fixed_grid;
        options.heuristic = config.heuristic;
        options.log_dir = config.out_dir / "logs";
        fs::create_directories(options.log_dir);
        const auto suite = run_suite(matrix, make_cell, options);

        std::string text = render_tables(suite.report);
        if (!suite.ablations.empty()) text += "\n" + render_ablations(suite.ablations);
        std::string deltas;
        try {
            deltas = export_deltas(compare_policies(suite.report));
        } catch (const std::invalid_argument& e) {
            err << "warning: no policy comparison: " << e.what() << "\n";
        }
        write_text(config.out_dir / "report.txt", text);
        write_text(config.out_dir / "report.csv", export_report(suite.report));
        if (!deltas.empty()) write_text(config.out_dir / "deltas.csv", deltas);
        out << text;
        if (!deltas.empty()) out << "\n" << deltas;
        out << "\nlogs: " << suite.logs.size() << " in " << options.log_dir.string() << "\n";
        if (suite.failed_runs > 0) out << "failed runs: " << suite.failed_runs << " (cells marked)\n";
        return static_cast<int>(kOk);
    });
}

int cmd_analyze(const AnalyzeOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        if (options.paths.empty()) throw UsageError("analyze needs at least one log file or directory");
        std::vector<fs::path> files;
        for (const auto& p : options.paths) {
            if (fs::is_directory(p)) {
                std::vector<fs::path> in_dir;
                for (const auto& e : fs::directory_iterator(p))
                    if (e.is_regular_file() && e.path().extension() == ".jsonl") in_dir.push_back(e.path());
                std::sort(in_dir.begin(), in_dir.end());
                files.insert(files.end(), in_dir.begin(), in_dir.end());
            } else if (fs::exists(p)) {
                files.push_back(p);
            } else {
                throw DataError("cannot open " + p.string());
            }
        }
        if (files.empty()) throw DataError("no .jsonl logs found");

        std::vector<LogContents> baseline, ablation;
        std::vector<std::pair<JobMeta, JobSummary>> summaries;
        PolicyParams policy;
        bool have_policy = false;
        for (const auto& f : files) {
            LogContents log;
            try {
                log = read_log(f, options.mode);
            } catch (const LogVersionError& e) {
                err << f.string() << ": log schema version " << e.found << ", reader supports " << e.expected << "\n";
                return kData;
            } catch (const LogFormatError& e) {
                err << f.string() << ": " << e.what() << "\n";
                return kData;
            }
            for (const auto& issue : log.skipped)
                err << "warning: " << f.string() << ": line " << issue.line << " skipped: " << issue.message << "\n";
            const auto& cfg = log.header.config;
            const PolicyParams own =
                cfg.is_object() && cfg.contains("policy") ? policy_from_json(cfg.at("policy")) : PolicyParams{};
            if (!have_policy) {
                policy = own;
                have_policy = true;
            }
            summaries.emplace_back(log.header.job, job_summary(log.records, own));
            const std::string axis = cfg.is_object() ? cfg.value("axis", std::string("baseline")) : "baseline";
            (axis == "baseline" ? baseline : ablation).push_back(std::move(log));
        }

        std::ostringstream text;
        text << render_tables(report_from_logs(baseline, policy));
        if (!ablation.empty()) text << "\n" << render_ablations(report_from_logs(ablation, policy).cells);
        std::ostringstream csv;
        export_summaries(summaries, csv);
        out << text.str() << "\nJob summaries\n" << csv.str();
        if (!options.out_dir.empty()) {
            fs::create_directories(options.out_dir);
            write_text(options.out_dir / "tables.txt", text.str());
            write_text(options.out_dir / "summaries.csv", csv.str());
        }
        return kOk;
    });
}

}  // namespace adsched::cli
