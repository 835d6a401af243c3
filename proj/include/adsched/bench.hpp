#pragma once

// Baseline policies, repeated runs, aggregated reports and the rendered
// p95 / memory / throughput tables.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "adsched/controller.hpp"
#include "adsched/exec.hpp"
#include "adsched/telemetry.hpp"
#include "adsched/workload.hpp"

namespace adsched {

// Never changes (b, k).
class FixedPolicy : public ConfigPolicy {
public:
    explicit FixedPolicy(BatchConfig config);

    std::string name() const override;
    BatchConfig start(Rows) override { return config_; }
    ControlDecision on_completion(const BatchMetrics&, Rows) override;
    int reconfig_count() const override { return 0; }

private:
    BatchConfig config_;
};

// Cycles through `grid` until `warmup_fraction` of the rows have completed,
// then locks the configuration with the lowest p95 of latency per row per
// worker. The lock is its single counted reconfiguration.
class TwoStagePolicy : public ConfigPolicy {
public:
    TwoStagePolicy(std::vector<BatchConfig> grid, double warmup_fraction = 0.1);

    std::string name() const override { return "two-stage"; }
    BatchConfig start(Rows total_rows) override;
    ControlDecision on_completion(const BatchMetrics& completed, Rows remaining_rows) override;
    int reconfig_count() const override { return locked_ ? 1 : 0; }

    bool locked() const { return locked_; }
    BatchConfig current() const { return grid_[index_]; }

private:
    std::vector<BatchConfig> grid_;
    double warmup_fraction_;
    Rows warmup_rows_ = 0;
    Rows done_rows_ = 0;
    std::size_t index_ = 0;
    bool locked_ = false;
    std::map<std::size_t, std::vector<double>> scores_;
};

enum class PolicyKind { adaptive, fixed, two_stage };

struct PolicyChoice {
    PolicyKind kind = PolicyKind::adaptive;
    BatchConfig fixed;               // fixed only
    std::vector<BatchConfig> grid;   // two-stage only
    double warmup_fraction = 0.1;

    // "adaptive", "two-stage", "fixed:b=<b>,k=<k>"
    std::string label() const;
};

PolicyKind policy_kind_from_string(std::string_view name);

// Controller models that match the simulator's ground truth exactly.
SchedulerModels models_from_sim(const SimModel& sim);
// Starting models for real data: measured profile, per-type comparator cost
// summed over compared columns, and a generic memory model that the online
// bias correction refines.
SchedulerModels models_from_profile(const PreparedJob& job, const PreflightProfile& profile);

// Everything needed to execute one job repeatedly.
struct BenchCell {
    std::string workload;
    Rows rows_per_side = 0;
    Rows total_rows = 0;  // aligned rows; the simulator needs no data
    std::shared_ptr<const PreparedJob> job;
    BackendKind backend = BackendKind::simulated;
    SimModel sim;
    SchedulerModels models;
    ResourceCaps caps;
    PolicyParams policy;
    int min_waves = 4;  // adaptive only
    ExecOptions exec;
    RunOptions run;
};

struct RunRecord {
    int repetition = 0;
    JobSummary summary;
    std::vector<TelemetryRecord> records;
    bool failed = false;
    std::string error;
};

std::unique_ptr<ConfigPolicy> make_policy(const PolicyChoice& choice, const BenchCell& cell);

// One run; repetition r reseeds the simulator with sim.seed + r.
RunRecord run_once(const BenchCell& cell, const PolicyChoice& choice, int repetition);

// Failures are recorded per repetition and the remaining ones still run.
std::vector<RunRecord> run_policy(const BenchCell& cell, const PolicyChoice& choice, int repetitions);

// Simulator calibration for the default desk matrix. Every fixed-grid point
// fits in memory, so comparisons turn on batch granularity and parallelism.
SimModel desk_sim(double sigma = 0.0, std::uint64_t seed = 1);
// desk_sim with lognormal noise and occasional stragglers, the setting where
// tail triggers actually fire.
SimModel desk_noisy_sim(std::uint64_t seed = 1);
ResourceCaps desk_caps();
BenchCell sim_cell(const Scenario& scenario, const SimModel& sim, const ResourceCaps& caps);

// Writes one telemetry log; returns false if any line was dropped.
bool write_run_log(const std::filesystem::path& path, const JobMeta& meta, const nlohmann::json& config,
                   const std::vector<TelemetryRecord>& records);

struct ReportCell {
    std::string workload;
    Rows rows_per_side = 0;
    std::string policy;
    BackendKind backend = BackendKind::simulated;
    Interval p95;       // seconds
    Interval peak_rss;  // bytes
    double throughput = 0.0;  // rows/s, mean
    double reconfigs = 0.0;   // mean per job
    int oom_events = 0;
    int failed = 0;
    int repetitions = 0;
};

struct ExperimentReport {
    std::vector<ReportCell> cells;

    const ReportCell* find(const std::string& workload, const std::string& policy) const;
    std::vector<std::string> workloads() const;  // ordered by rows_per_side
};

// Requires at least 3 summaries; failed runs count toward `failed` only.
ReportCell summarize_cell(const std::string& workload, Rows rows_per_side, const std::string& policy,
                          BackendKind backend, const std::vector<JobSummary>& summaries, int failed = 0);

ReportCell summarize_runs(const BenchCell& cell, const std::string& policy, const std::vector<RunRecord>& runs);

// Groups log contents by (workload, policy) from their headers.
ExperimentReport report_from_logs(const std::vector<LogContents>& logs, const PolicyParams& policy = {});

// The fixed cell with the lowest mean p95, and the median of fixed means.
const ReportCell* best_fixed(const ExperimentReport& report, const std::string& workload);
double median_fixed_p95(const ExperimentReport& report, const std::string& workload);

struct SuiteOptions {
    int repetitions = 3;
    bool fixed_grid = true;
    bool heuristic = true;
    std::filesystem::path log_dir;  // empty: no logs
};

struct SuiteResult {
    ExperimentReport report;           // baseline scenarios, every policy
    std::vector<ReportCell> ablations;  // adaptive only, one per ablation scenario
    std::vector<std::filesystem::path> logs;
    int failed_runs = 0;
};

// Baseline scenarios run the fixed grid, the two-stage heuristic and the
// adaptive controller; ablation scenarios run the adaptive controller only.
SuiteResult run_suite(const ScenarioMatrix& matrix, const std::function<BenchCell(const Scenario&)>& make_cell,
                      const SuiteOptions& options);

std::string render_ablations(const std::vector<ReportCell>& cells);

struct PolicyDelta {
    std::string workload;
    std::string baseline;  // two-stage, best-fixed, median-fixed
    double p95_improvement = 0.0;     // percent, positive is better
    double memory_reduction = 0.0;    // percent
    double throughput_gain = 0.0;     // percent
};

// Relative improvement of `adaptive` over `baseline`, in percent.
double improvement(double baseline, double adaptive);

// Throws std::invalid_argument when a workload lacks an adaptive cell or
// when policies cover different workload sets.
std::vector<PolicyDelta> compare_policies(const ExperimentReport& report);

// Three text tables (p95, memory, throughput with reconfigs) with a backend
// column; the fixed column shows the best fixed cell per workload.
std::string render_tables(const ExperimentReport& report);
// One delimited row per cell.
std::string export_report(const ExperimentReport& report);
std::string export_deltas(const std::vector<PolicyDelta>& deltas);

}  // namespace adsched
