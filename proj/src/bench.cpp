#include "adsched/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace adsched {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ReportCell blank_cell(const std::string& workload, Rows rows_per_side, const std::string& policy,
                      BackendKind backend) {
    ReportCell c;
    c.workload = workload;
    c.rows_per_side = rows_per_side;
    c.policy = policy;
    c.backend = backend;
    c.p95 = c.peak_rss = {kNaN, kNaN};
    c.throughput = c.reconfigs = kNaN;
    return c;
}

bool is_fixed(const std::string& policy) { return policy.rfind("fixed", 0) == 0; }

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* pattern, double a, double b = 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, a, b);
    return buf;
}

std::string interval_text(const Interval& i, double scale) {
    if (!std::isfinite(i.mean)) return "n/a";
    return fmt("%.1f ± %.1f", i.mean * scale, i.half_width * scale);
}

std::string count_text(double v) {
    if (!std::isfinite(v)) return "-";
    return std::abs(v - std::round(v)) < 1e-9 ? fmt("%.0f", v) : fmt("%.1f", v);
}

// Columns padded to the widest entry; the first is left-aligned.
std::string layout(const std::string& title, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    const auto display = [](const std::string& s) {
        std::size_t n = 0;
        for (unsigned char c : s) n += (c & 0xC0) != 0x80;
        return n;
    };
    for (const auto& r : rows) {
        width.resize(std::max(width.size(), r.size()), 0);
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], display(r[i]));
    }
    std::ostringstream out;
    out << title << '\n';
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
        const auto& r = rows[ri];
        for (std::size_t i = 0; i < r.size(); ++i) {
            const std::string pad(width[i] - display(r[i]), ' ');
            out << (i ? "  " : "") << (i == 0 ? r[i] + pad : pad + r[i]);
        }
        out << '\n';
        if (ri == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w;
            out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
        }
    }
    return out.str();
}

}  // namespace

// ------------------------------------------------------------------ policies

FixedPolicy::FixedPolicy(BatchConfig config) : config_(config) {
    if (config.b < 1 || config.k < 1) throw std::invalid_argument("fixed policy needs b >= 1 and k >= 1");
}

std::string FixedPolicy::name() const {
    return "fixed:b=" + std::to_string(config_.b) + ",k=" + std::to_string(config_.k);
}

ControlDecision FixedPolicy::on_completion(const BatchMetrics&, Rows) {
    ControlDecision d;
    d.new_b = config_.b;
    d.new_k = config_.k;
    d.reason = "fixed";
    return d;
}

TwoStagePolicy::TwoStagePolicy(std::vector<BatchConfig> grid, double warmup_fraction)
    : grid_(std::move(grid)), warmup_fraction_(warmup_fraction) {
    if (grid_.empty()) throw std::invalid_argument("two-stage policy needs a grid");
    if (!(warmup_fraction_ >= 0.0 && warmup_fraction_ <= 1.0))
        throw std::invalid_argument("warm-up fraction must lie in [0, 1]");
}

BatchConfig TwoStagePolicy::start(Rows total_rows) {
    warmup_rows_ = static_cast<Rows>(std::ceil(warmup_fraction_ * static_cast<double>(total_rows)));
    done_rows_ = 0;
    index_ = 0;
    locked_ = false;
    scores_.clear();
    return grid_[0];
}

ControlDecision TwoStagePolicy::on_completion(const BatchMetrics& completed, Rows) {
    ControlDecision d;
    if (!locked_) {
        const auto it = std::find(grid_.begin(), grid_.end(), completed.config);
        if (it != grid_.end() && completed.rows > 0)
            scores_[static_cast<std::size_t>(it - grid_.begin())].push_back(
                completed.latency / static_cast<double>(completed.rows) / completed.config.k);
        done_rows_ += completed.rows;
        if (done_rows_ >= warmup_rows_ && !scores_.empty()) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [i, s] : scores_) {
                const double p95 = windowed_percentile(s, 0.95);
                if (p95 < best) {
                    best = p95;
                    index_ = i;
                }
            }
            locked_ = true;
            d.action = Action::hold;
            d.reason = "locked best warm-up configuration";
        } else {
            index_ = (index_ + 1) % grid_.size();
            d.reason = "warm-up";
        }
    } else {
        d.reason = "locked";
    }
    d.new_b = grid_[index_].b;
    d.new_k = grid_[index_].k;
    return d;
}

std::string PolicyChoice::label() const {
    switch (kind) {
        case PolicyKind::adaptive: return "adaptive";
        case PolicyKind::two_stage: return "two-stage";
        case PolicyKind::fixed:
            return "fixed:b=" + std::to_string(fixed.b) + ",k=" + std::to_string(fixed.k);
    }
    return "adaptive";
}

PolicyKind policy_kind_from_string(std::string_view name) {
    if (name == "adaptive") return PolicyKind::adaptive;
    if (name == "fixed") return PolicyKind::fixed;
    if (name == "two-stage" || name == "heuristic") return PolicyKind::two_stage;
    throw std::invalid_argument("unknown policy " + std::string(name));
}

// ------------------------------------------------------------------ models

SchedulerModels models_from_sim(const SimModel& sim) {
    SchedulerModels m;
    m.profile.bytes_per_row = sim.bytes_per_row;
    m.profile.read_bandwidth = sim.read_bandwidth;
    m.cost.prep_per_row = sim.prep_per_row;
    m.cost.delta_per_row = sim.delta_per_row;
    m.cost.overhead_fixed = sim.overhead_fixed;
    m.cost.overhead_per_worker = sim.overhead_per_worker;
    m.mem.beta0 = sim.beta0;
    m.mem.beta1 = sim.beta1;
    m.mem.beta2 = sim.beta2;
    return m;
}

SchedulerModels models_from_profile(const PreparedJob& job, const PreflightProfile& profile) {
    SchedulerModels m;
    m.profile = profile;
    for (const auto& c : job.compared()) {
        const auto it = profile.delta_cost_per_type.find(c.kind);
        if (it != profile.delta_cost_per_type.end()) m.cost.delta_per_row += it->second;
    }
    m.cost.overhead_fixed = 1e-4;
    m.mem.beta0 = 32.0 * 1024 * 1024;
    m.mem.beta1 = 4.0;  // parsed cells and verdicts outweigh the encoded bytes
    return m;
}

// ------------------------------------------------------------------ running

std::unique_ptr<ConfigPolicy> make_policy(const PolicyChoice& choice, const BenchCell& cell) {
    switch (choice.kind) {
        case PolicyKind::fixed: return std::make_unique<FixedPolicy>(choice.fixed);
        case PolicyKind::two_stage: return std::make_unique<TwoStagePolicy>(choice.grid, choice.warmup_fraction);
        case PolicyKind::adaptive: break;
    }
    return std::make_unique<AdaptiveScheduler>(cell.models, cell.caps, cell.policy, cell.backend, cell.min_waves);
}

RunRecord run_once(const BenchCell& cell, const PolicyChoice& choice, int repetition) {
    RunRecord rec;
    rec.repetition = repetition;
    SimModel sim = cell.sim;
    sim.seed = cell.sim.seed + static_cast<std::uint64_t>(repetition);
    ExecOptions exec = cell.exec;
    exec.cpu_cap = cell.caps.cpu_cap;
    const Rows total = cell.job ? cell.job->aligned_rows() : cell.total_rows;
    try {
        auto policy = make_policy(choice, cell);
        auto backend = make_backend(cell.backend, cell.job, 1, exec, sim, cell.caps.mem_cap);
        const auto outcome = run_job(*backend, total, *policy, cell.run);
        rec.records = records_from_outcome(outcome);
        if (outcome.failed) {
            rec.failed = true;
            rec.error = "out of memory";
        }
    } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
    }
    if (!rec.records.empty()) rec.summary = job_summary(rec.records, cell.policy);
    return rec;
}

std::vector<RunRecord> run_policy(const BenchCell& cell, const PolicyChoice& choice, int repetitions) {
    if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
    std::vector<RunRecord> runs;
    for (int r = 0; r < repetitions; ++r) runs.push_back(run_once(cell, choice, r));
    return runs;
}

SimModel desk_sim(double sigma, std::uint64_t seed) {
    SimModel sim;
    sim.bytes_per_row = 200;
    sim.read_bandwidth = 1e9;
    sim.delta_per_row = 2e-4;
    sim.overhead_fixed = 0.05;
    sim.overhead_per_worker = 0.002;
    sim.contention = 0.01;
    sim.beta0 = 64e6;
    sim.beta1 = 500;  // 100 kB per row in flight
    sim.cpu_per_worker = 0.9;
    sim.sigma = sigma;
    sim.seed = seed;
    return sim;
}

SimModel desk_noisy_sim(std::uint64_t seed) {
    SimModel sim = desk_sim(0.1, seed);
    sim.straggler_prob = 0.05;
    sim.straggler_factor = 3.0;
    return sim;
}

ResourceCaps desk_caps() { return {8e9, 16}; }

BenchCell sim_cell(const Scenario& scenario, const SimModel& sim, const ResourceCaps& caps) {
    BenchCell cell;
    cell.workload = scenario.name;
    cell.rows_per_side = scenario.workload.rows_per_side;
    cell.total_rows = scenario.workload.rows_per_side;
    cell.backend = BackendKind::simulated;
    cell.sim = sim;
    cell.models = models_from_sim(sim);
    cell.caps = caps;
    cell.policy = scenario.policy;
    cell.min_waves = 8;
    return cell;
}

bool write_run_log(const std::filesystem::path& path, const JobMeta& meta, const nlohmann::json& config,
                   const std::vector<TelemetryRecord>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    LogHeader header;
    header.job = meta;
    header.config = config;
    TelemetryWriter writer(path, header);
    for (const auto& r : records) writer.append(r);
    return writer.ok();
}

// ------------------------------------------------------------------ reports

const ReportCell* ExperimentReport::find(const std::string& workload, const std::string& policy) const {
    for (const auto& c : cells)
        if (c.workload == workload && c.policy == policy) return &c;
    return nullptr;
}

std::vector<std::string> ExperimentReport::workloads() const {
    std::vector<std::pair<Rows, std::string>> seen;
    for (const auto& c : cells) {
        const bool known = std::any_of(seen.begin(), seen.end(), [&](const auto& p) { return p.second == c.workload; });
        if (!known) seen.emplace_back(c.rows_per_side, c.workload);
    }
    std::stable_sort(seen.begin(), seen.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    for (auto& [_, w] : seen) out.push_back(w);
    return out;
}

ReportCell summarize_cell(const std::string& workload, Rows rows_per_side, const std::string& policy,
                          BackendKind backend, const std::vector<JobSummary>& summaries, int failed) {
    if (summaries.size() < 3) throw std::invalid_argument("a reported cell needs at least 3 repetitions");
    ReportCell c = blank_cell(workload, rows_per_side, policy, backend);
    std::vector<double> p95, rss, thr, reconf;
    for (const auto& s : summaries) {
        p95.push_back(s.job_p95);
        rss.push_back(s.peak_rss);
        thr.push_back(s.throughput);
        reconf.push_back(s.reconfig_count);
        c.oom_events += s.oom_events;
    }
    c.p95 = confidence_interval(p95);
    c.peak_rss = confidence_interval(rss);
    c.throughput = mean_of(thr);
    c.reconfigs = mean_of(reconf);
    c.failed = failed;
    c.repetitions = static_cast<int>(summaries.size()) + failed;
    return c;
}

ReportCell summarize_runs(const BenchCell& cell, const std::string& policy, const std::vector<RunRecord>& runs) {
    std::vector<JobSummary> ok;
    int failed = 0;
    int ooms = 0;
    for (const auto& r : runs) {
        ooms += r.summary.oom_events;
        if (r.failed) ++failed;
        else ok.push_back(r.summary);
    }
    if (ok.size() >= 3) {
        auto c = summarize_cell(cell.workload, cell.rows_per_side, policy, cell.backend, ok, failed);
        c.oom_events = ooms;
        return c;
    }
    ReportCell c = blank_cell(cell.workload, cell.rows_per_side, policy, cell.backend);
    c.oom_events = ooms;
    c.failed = failed;
    c.repetitions = static_cast<int>(runs.size());
    return c;
}

ExperimentReport report_from_logs(const std::vector<LogContents>& logs, const PolicyParams& policy) {
    struct Group {
        JobMeta meta;
        std::vector<JobSummary> summaries;
        int failed = 0;
        int ooms = 0;
    };
    std::vector<Group> groups;
    for (const auto& log : logs) {
        const auto& meta = log.header.job;
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
            return g.meta.workload == meta.workload && g.meta.policy == meta.policy;
        });
        if (it == groups.end()) {
            groups.push_back({meta, {}, 0, 0});
            it = groups.end() - 1;
        }
        // Bench runs abort on the first OOM, so any OOM record marks a failed run.
        if (log.records.empty()) {
            ++it->failed;
            continue;
        }
        const auto s = job_summary(log.records, policy);
        it->ooms += s.oom_events;
        if (s.oom_events > 0) ++it->failed;
        else it->summaries.push_back(s);
    }
    ExperimentReport report;
    for (const auto& g : groups) {
        ReportCell c;
        if (g.summaries.size() >= 3) {
            c = summarize_cell(g.meta.workload, g.meta.rows_per_side, g.meta.policy, g.meta.backend, g.summaries,
                               g.failed);
        } else {
            c = blank_cell(g.meta.workload, g.meta.rows_per_side, g.meta.policy, g.meta.backend);
            c.failed = g.failed;
            c.repetitions = static_cast<int>(g.summaries.size()) + g.failed;
        }
        c.oom_events = g.ooms;
        report.cells.push_back(c);
    }
    std::stable_sort(report.cells.begin(), report.cells.end(),
                     [](const ReportCell& a, const ReportCell& b) { return a.rows_per_side < b.rows_per_side; });
    return report;
}

const ReportCell* best_fixed(const ExperimentReport& report, const std::string& workload) {
    const ReportCell* best = nullptr;
    for (const auto& c : report.cells) {
        if (c.workload != workload || !is_fixed(c.policy) || !std::isfinite(c.p95.mean)) continue;
        if (!best || c.p95.mean < best->p95.mean) best = &c;
    }
    return best;
}

double median_fixed_p95(const ExperimentReport& report, const std::string& workload) {
    std::vector<double> v;
    for (const auto& c : report.cells)
        if (c.workload == workload && is_fixed(c.policy) && std::isfinite(c.p95.mean)) v.push_back(c.p95.mean);
    return median_of(v);
}

SuiteResult run_suite(const ScenarioMatrix& matrix, const std::function<BenchCell(const Scenario&)>& make_cell,
                      const SuiteOptions& options) {
    SuiteResult out;
    const auto run = [&](const Scenario& sc, const BenchCell& cell, const PolicyChoice& choice) {
        const auto runs = run_policy(cell, choice, options.repetitions);
        for (const auto& r : runs) {
            if (r.failed) ++out.failed_runs;
            if (options.log_dir.empty()) continue;
            JobMeta meta{sc.name + "/" + choice.label() + "/r" + std::to_string(r.repetition), cell.workload,
                         choice.label(), r.repetition, cell.backend, cell.rows_per_side};
            nlohmann::json config{{"policy", to_json(cell.policy)},
                                  {"caps", {{"mem", cell.caps.mem_cap}, {"cpu", cell.caps.cpu_cap}}},
                                  {"workload", to_json(sc.workload)},
                                  {"axis", sc.axis},
                                  {"axis_value", sc.axis_value}};
            if (choice.kind == PolicyKind::fixed) config["fixed"] = {{"b", choice.fixed.b}, {"k", choice.fixed.k}};
            std::string file = meta.job_id;
            std::replace_if(file.begin(), file.end(), [](char c) { return c == '/' || c == ':' || c == ','; }, '_');
            const auto path = options.log_dir / (file + ".jsonl");
            write_run_log(path, meta, config, r.records);
            out.logs.push_back(path);
        }
        return summarize_runs(cell, choice.label(), runs);
    };

    for (const auto& sc : matrix.scenarios) {
        const BenchCell cell = make_cell(sc);
        if (sc.axis != "baseline") {
            out.ablations.push_back(run(sc, cell, {PolicyKind::adaptive, {}, {}, 0.1}));
            continue;
        }
        if (options.fixed_grid)
            for (const auto& c : matrix.fixed_grid) out.report.cells.push_back(run(sc, cell, {PolicyKind::fixed, c, {}, 0.1}));
        if (options.heuristic)
            out.report.cells.push_back(run(sc, cell, {PolicyKind::two_stage, {}, matrix.fixed_grid, 0.1}));
        out.report.cells.push_back(run(sc, cell, {PolicyKind::adaptive, {}, {}, 0.1}));
    }
    return out;
}

std::string render_ablations(const std::vector<ReportCell>& cells) {
    std::vector<std::vector<std::string>> t{{"Scenario", "p95 (s)", "Peak memory (GB)", "Reconfigs", "OOM"}};
    for (const auto& c : cells)
        t.push_back({c.workload, interval_text(c.p95, 1.0), interval_text(c.peak_rss, 1e-9), count_text(c.reconfigs),
                     fmt("%.0f", c.oom_events)});
    return layout("Ablations (adaptive)", t);
}

double improvement(double baseline, double adaptive) {
    if (baseline == 0.0) return 0.0;
    return (baseline - adaptive) / baseline * 100.0;
}

std::vector<PolicyDelta> compare_policies(const ExperimentReport& report) {
    std::set<std::string> adaptive, heuristic, fixed;
    for (const auto& c : report.cells) {
        if (c.policy == "adaptive") adaptive.insert(c.workload);
        else if (c.policy == "two-stage") heuristic.insert(c.workload);
        else if (is_fixed(c.policy)) fixed.insert(c.workload);
    }
    const auto workloads = report.workloads();
    if (adaptive.size() != workloads.size()) throw std::invalid_argument("every workload needs an adaptive cell");
    if (!heuristic.empty() && heuristic != adaptive)
        throw std::invalid_argument("heuristic cells cover a different workload set");
    if (!fixed.empty() && fixed != adaptive) throw std::invalid_argument("fixed cells cover a different workload set");

    std::vector<PolicyDelta> out;
    for (const auto& w : workloads) {
        const ReportCell& a = *report.find(w, "adaptive");
        const auto delta = [&](const std::string& name, double p95, double mem, double thr) {
            out.push_back({w, name, improvement(p95, a.p95.mean), improvement(mem, a.peak_rss.mean),
                           thr != 0.0 ? (a.throughput - thr) / thr * 100.0 : 0.0});
        };
        if (const auto* h = report.find(w, "two-stage")) delta("two-stage", h->p95.mean, h->peak_rss.mean, h->throughput);
        if (const auto* f = best_fixed(report, w)) {
            delta("best-fixed", f->p95.mean, f->peak_rss.mean, f->throughput);
            std::vector<double> mem, thr;
            for (const auto& c : report.cells)
                if (c.workload == w && is_fixed(c.policy) && std::isfinite(c.p95.mean)) {
                    mem.push_back(c.peak_rss.mean);
                    thr.push_back(c.throughput);
                }
            delta("median-fixed", median_fixed_p95(report, w), median_of(mem), median_of(thr));
        }
    }
    return out;
}

std::string render_tables(const ExperimentReport& report) {
    const auto workloads = report.workloads();
    struct Row {
        std::string name;
        const ReportCell* fixed;
        const ReportCell* heuristic;
        const ReportCell* adaptive;
    };
    std::vector<Row> rows;
    for (const auto& w : workloads)
        rows.push_back({w, best_fixed(report, w), report.find(w, "two-stage"), report.find(w, "adaptive")});
    const auto backend = [](const Row& r) {
        const ReportCell* c = r.adaptive ? r.adaptive : r.heuristic ? r.heuristic : r.fixed;
        return c ? std::string(to_string(c->backend)) : std::string("-");
    };
    const auto cell = [](const ReportCell* c, auto get) { return c ? get(*c) : std::string("-"); };

    std::vector<std::vector<std::string>> t1{{"Workload", "Fixed", "Heuristic", "Adaptive", "Backend"}};
    std::vector<std::vector<std::string>> t2{{"Workload", "Fixed", "Heuristic", "Adaptive"}};
    std::vector<std::vector<std::string>> t3{{"Workload", "Fixed", "Heuristic", "Adaptive", "Reconfigs"}};
    // NaN means fewer than 3 usable repetitions: "failed" when runs failed,
    // "n/a" when the logs simply hold fewer.
    const auto missing = [](const ReportCell& c) { return std::string(c.failed > 0 ? "failed" : "n/a"); };
    const auto p95 = [&](const ReportCell& c) {
        return std::isfinite(c.p95.mean) ? interval_text(c.p95, 1.0) : missing(c);
    };
    const auto mem = [&](const ReportCell& c) {
        return std::isfinite(c.peak_rss.mean) ? interval_text(c.peak_rss, 1e-9) : missing(c);
    };
    const auto thr = [&](const ReportCell& c) {
        return std::isfinite(c.throughput) ? fmt("%.1f", c.throughput / 1000.0) : missing(c);
    };
    for (const auto& r : rows) {
        t1.push_back({r.name, cell(r.fixed, p95), cell(r.heuristic, p95), cell(r.adaptive, p95), backend(r)});
        t2.push_back({r.name, cell(r.fixed, mem), cell(r.heuristic, mem), cell(r.adaptive, mem)});
        t3.push_back({r.name, cell(r.fixed, thr), cell(r.heuristic, thr), cell(r.adaptive, thr),
                      r.adaptive ? count_text(r.adaptive->reconfigs) : std::string("-")});
    }
    return layout("p95 latency (s), mean ± 95% CI", t1) + "\n" +
           layout("Peak memory (GB), mean ± 95% CI", t2) + "\n" +
           layout("Throughput (k rows/s) and stability (reconfigs/job)", t3);
}

std::string export_report(const ExperimentReport& report) {
    std::ostringstream out;
    out << "workload,rows_per_side,policy,backend,p95_mean_s,p95_ci_s,peak_rss_mean_bytes,peak_rss_ci_bytes,"
           "throughput_rows_s,reconfigs,oom_events,failed,repetitions\n";
    out.precision(10);
    for (const auto& c : report.cells)
        out << c.workload << ',' << c.rows_per_side << ',' << c.policy << ',' << to_string(c.backend) << ','
            << c.p95.mean << ',' << c.p95.half_width << ',' << c.peak_rss.mean << ',' << c.peak_rss.half_width
            << ',' << c.throughput << ',' << c.reconfigs << ',' << c.oom_events << ',' << c.failed << ','
            << c.repetitions << '\n';
    return out.str();
}

std::string export_deltas(const std::vector<PolicyDelta>& deltas) {
    std::ostringstream out;
    out << "workload,baseline,p95_improvement_pct,memory_reduction_pct,throughput_gain_pct\n";
    out.precision(6);
    for (const auto& d : deltas)
        out << d.workload << ',' << d.baseline << ',' << d.p95_improvement << ',' << d.memory_reduction << ','
            << d.throughput_gain << '\n';
    return out.str();
}

}  // namespace adsched
