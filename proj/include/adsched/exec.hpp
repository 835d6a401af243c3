#pragma once

// Execution backends sharing one contract: batches go in through submit(),
// completions come out of next() with metrics attached. Two run diff_batch
// on real threads; the simulated one advances a virtual clock instead.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "adsched/controller.hpp"
#include "adsched/diffcore.hpp"
#include "adsched/types.hpp"

namespace adsched {

// A batch failed more often than the retry budget allows.
class ExecutionError : public std::runtime_error {
public:
    ExecutionError(std::int64_t batch_id, const std::string& what)
        : std::runtime_error("batch " + std::to_string(batch_id) + ": " + what), batch_id(batch_id) {}
    std::int64_t batch_id;
};

// Called before every attempt; throwing simulates a worker crash.
using FaultHook = std::function<void(const BatchDescriptor&, int attempt)>;

struct ExecOptions {
    int k_min = 1;
    int cpu_cap = 1;
    int max_retries = 2;
    double sample_interval_s = 0.05;
    double task_overhead_s = 0.005;  // taskpool only
    FaultHook fault;
};

struct Completion {
    std::int64_t ticket = 0;
    BatchDescriptor batch;
    DiffResult result;
    BatchMetrics metrics;
    int attempts = 1;
};

struct RunningInfo {
    std::int64_t ticket = 0;
    BatchDescriptor batch;
    double runtime = 0.0;
};

class Backend {
public:
    virtual ~Backend() = default;

    virtual BackendKind kind() const = 0;
    virtual int workers() const = 0;
    // Applies to batches started afterwards; in-flight ones are untouched.
    virtual void resize_workers(int k) = 0;
    // `urgent` batches jump the submission queue (straggler mitigations).
    virtual std::int64_t submit(const BatchDescriptor& batch, BatchConfig config, bool urgent = false) = 0;
    // Blocks until a batch completes; nullopt once nothing is outstanding.
    // Throws ExecutionError when a batch exhausts its retries.
    virtual std::optional<Completion> next() = 0;
    // Drops a queued or running batch; a running one's result is discarded.
    virtual void cancel(std::int64_t ticket) = 0;
    virtual std::vector<RunningInfo> running() const = 0;
    virtual int active() const = 0;
    virtual int pending() const = 0;
    // Seconds since the backend was created (virtual for the simulator).
    virtual double now() const = 0;
};

// Nearest-rank p95 over utilization samples; max over RSS samples.
struct SampleSummary {
    double rss_peak = 0.0;
    double cpu_p95 = 0.0;
};
SampleSummary summarize_samples(const std::vector<double>& rss, const std::vector<double>& cpu);

// Bytes of key and compared cells touched by a batch, both sides.
double batch_bytes(const PreparedJob& job, const BatchDescriptor& batch);

// Threaded backends over a shared heap (inmem) or with per-task accounting
// and a fixed dispatch overhead (taskpool).
class ThreadBackend : public Backend {
public:
    ThreadBackend(BackendKind kind, std::shared_ptr<const PreparedJob> job, int k, ExecOptions options);
    ~ThreadBackend() override;

    BackendKind kind() const override { return kind_; }
    int workers() const override;
    void resize_workers(int k) override;
    std::int64_t submit(const BatchDescriptor& batch, BatchConfig config, bool urgent = false) override;
    std::optional<Completion> next() override;
    void cancel(std::int64_t ticket) override;
    std::vector<RunningInfo> running() const override;
    int active() const override;
    int pending() const override;
    double now() const override;

private:
    struct Task {
        std::int64_t ticket = 0;
        BatchDescriptor batch;
        BatchConfig config;
        double submitted = 0.0;
        int queue_depth = 0;
        int attempt = 0;
    };
    struct Live {
        Task task;
        double start = 0.0;
        int worker = 0;
        bool cancelled = false;
        std::vector<double> rss;
        std::vector<double> cpu;
    };

    void worker_loop(int worker_id);
    void sampler_loop();

    BackendKind kind_;
    std::shared_ptr<const PreparedJob> job_;
    ExecOptions options_;
    std::chrono::steady_clock::time_point epoch_;
    double baseline_rss_ = 0.0;

    mutable std::mutex mu_;
    std::condition_variable work_cv_;
    std::condition_variable done_cv_;
    std::condition_variable sampler_cv_;
    int k_ = 1;
    bool stop_ = false;
    std::int64_t next_ticket_ = 0;
    std::deque<Task> queue_;
    std::map<std::int64_t, Live> live_;
    std::deque<Completion> done_;
    std::optional<ExecutionError> failure_;
    std::vector<std::thread> threads_;
    std::thread sampler_;
};

// Ground truth for the simulator: the model's latency shape with a contention
// term for shared bandwidth, affine per-worker memory, and multiplicative
// lognormal noise plus occasional stragglers.
struct SimModel {
    double bytes_per_row = 100.0;
    double read_bandwidth = 1e9;
    double prep_per_row = 0.0;
    double delta_per_row = 1e-6;
    double overhead_fixed = 0.01;
    double overhead_per_worker = 0.0;
    double contention = 0.0;  // per extra worker, slows the per-row part
    double beta0 = 64e6;
    double beta1 = 1.0;
    double beta2 = 0.0;
    double cpu_per_worker = 0.9;  // core-equivalents while busy
    double sigma = 0.1;
    double straggler_prob = 0.0;
    double straggler_factor = 4.0;
    std::uint64_t seed = 1;

    double true_latency(Rows b, int k) const;
    double true_rss(Rows b) const;  // per worker
};

struct SimDraw {
    double latency = 0.0;
    double rss = 0.0;  // per worker
    bool straggler = false;
};

// Deterministic in (seed, batch_id, b, k, attempt).
SimDraw simulate_draw(const SimModel& sim, Rows b, int k, std::int64_t batch_id, int attempt = 0);

// Metrics for one batch run alone at (b, k), starting at t = 0.
BatchMetrics simulate_batch(const SimModel& sim, Rows b, int k, std::int64_t batch_id);

// Discrete-event backend. When given a job it still computes the real
// verdicts so results match the threaded backends; timing comes from the
// model. Concurrent per-worker memory above mem_cap marks the batch as OOM.
class SimBackend : public Backend {
public:
    SimBackend(SimModel sim, std::shared_ptr<const PreparedJob> job, int k, ExecOptions options,
               double mem_cap);

    BackendKind kind() const override { return BackendKind::simulated; }
    int workers() const override { return k_; }
    void resize_workers(int k) override;
    std::int64_t submit(const BatchDescriptor& batch, BatchConfig config, bool urgent = false) override;
    std::optional<Completion> next() override;
    void cancel(std::int64_t ticket) override;
    std::vector<RunningInfo> running() const override;
    int active() const override { return static_cast<int>(live_.size()); }
    int pending() const override { return static_cast<int>(queue_.size()); }
    double now() const override { return now_; }

private:
    struct Task {
        std::int64_t ticket = 0;
        BatchDescriptor batch;
        BatchConfig config;
        double submitted = 0.0;
        int queue_depth = 0;
        int attempt = 0;
        int copy = 0;
    };
    struct Live {
        Task task;
        double start = 0.0;
        double end = 0.0;
        int worker = 0;
        SimDraw draw;
        bool oom = false;
        double rss_seen = 0.0;  // max concurrent total while running
    };

    void start_ready();
    int free_worker() const;

    SimModel sim_;
    std::shared_ptr<const PreparedJob> job_;
    ExecOptions options_;
    double mem_cap_;
    int k_;
    double now_ = 0.0;
    std::int64_t next_ticket_ = 0;
    std::deque<Task> queue_;
    std::map<std::int64_t, Live> live_;
    std::map<std::int64_t, int> copies_;
};

std::unique_ptr<Backend> make_backend(BackendKind kind, std::shared_ptr<const PreparedJob> job, int k,
                                      const ExecOptions& options, const SimModel& sim = {},
                                      double mem_cap = 0.0);

// Per-batch hook for telemetry: the completion that fed the policy, the
// decision it produced and whether that decision counted as a reconfiguration.
using BatchObserver = std::function<void(const BatchMetrics&, const ControlDecision&, bool)>;

struct RunOptions {
    int queue_ahead = 0;           // extra batches queued beyond k
    bool stop_on_oom = true;
    BatchObserver observer;
};

struct JobOutcome {
    DiffResult result;
    std::vector<BatchMetrics> batches;  // completions seen by the policy
    std::vector<ControlDecision> decisions;
    std::vector<bool> reconfigured;  // parallel to decisions
    int reconfig_count = 0;
    int oom_events = 0;
    int mitigations = 0;
    bool failed = false;
    Rows rows = 0;
    double wall_clock = 0.0;
    BatchConfig final_config;
};

// Listing-style driver: start from the policy, keep k batches in flight,
// consult the policy on every completion, mitigate stragglers, and merge
// exactly one result per key range.
JobOutcome run_job(Backend& backend, Rows total_rows, ConfigPolicy& policy, const RunOptions& options = {});

}  // namespace adsched
