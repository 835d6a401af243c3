#include "adsched/exec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numbers>

#include <unistd.h>

namespace adsched {

namespace {

double process_rss_bytes() {
    std::ifstream statm("/proc/self/statm");
    long pages_total = 0;
    long pages_resident = 0;
    if (!(statm >> pages_total >> pages_resident)) return 0.0;
    return static_cast<double>(pages_resident) * static_cast<double>(sysconf(_SC_PAGESIZE));
}

double clock_seconds(clockid_t id) {
    timespec ts{};
    clock_gettime(id, &ts);
    return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
}

std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit(std::uint64_t& state) {
    return (static_cast<double>(splitmix(state) >> 11) + 0.5) * 0x1.0p-53;
}

void check_range(int k, const ExecOptions& options) {
    if (k < options.k_min || k > options.cpu_cap)
        throw std::out_of_range("worker count " + std::to_string(k) + " outside [" +
                                std::to_string(options.k_min) + ", " + std::to_string(options.cpu_cap) + "]");
}

}  // namespace

SampleSummary summarize_samples(const std::vector<double>& rss, const std::vector<double>& cpu) {
    SampleSummary s;
    if (!rss.empty()) s.rss_peak = *std::max_element(rss.begin(), rss.end());
    if (!cpu.empty()) s.cpu_p95 = windowed_percentile(cpu, 0.95);
    return s;
}

double batch_bytes(const PreparedJob& job, const BatchDescriptor& batch) {
    const auto& src = *job.spec().source;
    const auto& dst = *job.spec().target;
    std::vector<std::size_t> src_cols = job.source_keys();
    std::vector<std::size_t> dst_cols;
    for (const auto& name : dst.schema.key_columns) dst_cols.push_back(*dst.schema.index_of(name));
    for (const auto& c : job.compared()) {
        src_cols.push_back(c.source_index);
        dst_cols.push_back(c.target_index);
    }
    double bytes = 0;
    for (Rows pos = batch.begin; pos < batch.end; ++pos) {
        const auto& e = job.aligned()[static_cast<std::size_t>(pos)];
        if (e.source_row >= 0)
            for (auto c : src_cols) bytes += static_cast<double>(encoded_bytes(src.rows[static_cast<std::size_t>(e.source_row)][c]));
        if (e.target_row >= 0)
            for (auto c : dst_cols) bytes += static_cast<double>(encoded_bytes(dst.rows[static_cast<std::size_t>(e.target_row)][c]));
    }
    return bytes;
}

// ---------------------------------------------------------------- threads

ThreadBackend::ThreadBackend(BackendKind kind, std::shared_ptr<const PreparedJob> job, int k, ExecOptions options)
    : kind_(kind), job_(std::move(job)), options_(std::move(options)) {
    if (kind_ == BackendKind::simulated) throw std::invalid_argument("ThreadBackend cannot simulate");
    if (!job_) throw std::invalid_argument("ThreadBackend needs a prepared job");
    check_range(k, options_);
    k_ = k;
    epoch_ = std::chrono::steady_clock::now();
    baseline_rss_ = process_rss_bytes();
    for (int i = 0; i < options_.cpu_cap; ++i) threads_.emplace_back([this, i] { worker_loop(i); });
    sampler_ = std::thread([this] { sampler_loop(); });
}

ThreadBackend::~ThreadBackend() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
        queue_.clear();
    }
    work_cv_.notify_all();
    sampler_cv_.notify_all();
    for (auto& t : threads_) t.join();
    sampler_.join();
}

double ThreadBackend::now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
}

int ThreadBackend::workers() const {
    std::lock_guard lk(mu_);
    return k_;
}

void ThreadBackend::resize_workers(int k) {
    check_range(k, options_);
    {
        std::lock_guard lk(mu_);
        k_ = k;
    }
    work_cv_.notify_all();
}

std::int64_t ThreadBackend::submit(const BatchDescriptor& batch, BatchConfig config, bool urgent) {
    std::int64_t ticket;
    {
        std::lock_guard lk(mu_);
        ticket = next_ticket_++;
        Task task{ticket, batch, config, now(), static_cast<int>(queue_.size()), 0};
        if (urgent) queue_.push_front(task);
        else queue_.push_back(task);
    }
    work_cv_.notify_all();
    return ticket;
}

void ThreadBackend::worker_loop(int worker_id) {
    std::unique_lock lk(mu_);
    while (true) {
        work_cv_.wait(lk, [&] {
            return stop_ || (!queue_.empty() && static_cast<int>(live_.size()) < k_);
        });
        if (stop_) return;
        Task task = queue_.front();
        queue_.pop_front();
        const double start = now();
        live_[task.ticket] = Live{task, start, worker_id, false, {}, {}};
        lk.unlock();

        const double cpu0 = clock_seconds(CLOCK_THREAD_CPUTIME_ID);
        std::optional<DiffResult> result;
        std::string error;
        double bytes = 0;
        try {
            if (kind_ == BackendKind::taskpool && options_.task_overhead_s > 0)
                std::this_thread::sleep_for(std::chrono::duration<double>(options_.task_overhead_s));
            if (options_.fault) options_.fault(task.batch, task.attempt);
            result = diff_batch(*job_, task.batch);
            bytes = batch_bytes(*job_, task.batch);
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double thread_cpu = clock_seconds(CLOCK_THREAD_CPUTIME_ID) - cpu0;
        const double rss_now = process_rss_bytes();

        lk.lock();
        auto node = live_.extract(task.ticket);
        Live& live = node.mapped();
        const int concurrent = static_cast<int>(live_.size()) + 1;
        if (live.cancelled) {
        } else if (!result) {
            if (task.attempt < options_.max_retries) {
                ++task.attempt;
                queue_.push_front(task);
            } else if (!failure_) {
                failure_.emplace(task.batch.batch_id, "failed after " + std::to_string(task.attempt + 1) +
                                                          " attempts: " + error);
            }
        } else {
            Completion c;
            c.ticket = task.ticket;
            c.batch = task.batch;
            c.attempts = task.attempt + 1;
            auto& m = c.metrics;
            m.batch_id = task.batch.batch_id;
            m.submitted = task.submitted;
            m.start = live.start;
            m.end = std::max(now(), live.start);
            m.latency = m.end - m.start;
            m.bytes_read = bytes;
            m.queue_depth_at_submit = task.queue_depth;
            m.worker_id = worker_id;
            m.rows = task.batch.rows();
            m.config = task.config;
            live.rss.push_back(rss_now);
            const auto summary = summarize_samples(live.rss, live.cpu);
            const double k = static_cast<double>(std::max(1, task.config.k));
            if (kind_ == BackendKind::inmem) {
                m.rss_peak = summary.rss_peak / k;
                m.rss_attributed = true;
            } else {
                m.rss_peak = baseline_rss_ / k + bytes;
            }
            m.cpu_p95 = !live.cpu.empty() ? summary.cpu_p95
                                          : (m.latency > 0 ? thread_cpu / m.latency * concurrent : 0.0);
            c.result = std::move(*result);
            done_.push_back(std::move(c));
        }
        work_cv_.notify_all();
        done_cv_.notify_all();
    }
}

void ThreadBackend::sampler_loop() {
    double last_t = now();
    double last_cpu = clock_seconds(CLOCK_PROCESS_CPUTIME_ID);
    std::unique_lock lk(mu_);
    while (!stop_) {
        sampler_cv_.wait_for(lk, std::chrono::duration<double>(options_.sample_interval_s), [&] { return stop_; });
        if (stop_) return;
        lk.unlock();
        const double t = now();
        const double cpu = clock_seconds(CLOCK_PROCESS_CPUTIME_ID);
        const double rss = process_rss_bytes();
        const double util = t > last_t ? (cpu - last_cpu) / (t - last_t) : 0.0;
        last_t = t;
        last_cpu = cpu;
        lk.lock();
        for (auto& [_, live] : live_) {
            live.rss.push_back(rss);
            live.cpu.push_back(util);
        }
    }
}

std::optional<Completion> ThreadBackend::next() {
    std::unique_lock lk(mu_);
    const auto outstanding = [&] {
        if (!queue_.empty()) return true;
        return std::any_of(live_.begin(), live_.end(), [](const auto& kv) { return !kv.second.cancelled; });
    };
    done_cv_.wait(lk, [&] { return !done_.empty() || failure_ || !outstanding(); });
    if (failure_) {
        ExecutionError e = *failure_;
        failure_.reset();
        throw e;
    }
    if (done_.empty()) return std::nullopt;
    Completion c = std::move(done_.front());
    done_.pop_front();
    return c;
}

void ThreadBackend::cancel(std::int64_t ticket) {
    {
        std::lock_guard lk(mu_);
        std::erase_if(queue_, [&](const Task& t) { return t.ticket == ticket; });
        if (auto it = live_.find(ticket); it != live_.end()) it->second.cancelled = true;
        std::erase_if(done_, [&](const Completion& c) { return c.ticket == ticket; });
    }
    done_cv_.notify_all();
}

std::vector<RunningInfo> ThreadBackend::running() const {
    std::lock_guard lk(mu_);
    std::vector<RunningInfo> out;
    const double t = now();
    for (const auto& [ticket, live] : live_)
        if (!live.cancelled) out.push_back({ticket, live.task.batch, t - live.start});
    return out;
}

int ThreadBackend::active() const {
    std::lock_guard lk(mu_);
    return static_cast<int>(live_.size());
}

int ThreadBackend::pending() const {
    std::lock_guard lk(mu_);
    return static_cast<int>(queue_.size());
}

// -------------------------------------------------------------- simulator

double SimModel::true_latency(Rows b, int k) const {
    const double rows = static_cast<double>(b);
    const double slow = 1.0 + contention * static_cast<double>(std::max(0, k - 1));
    const double per_row = bytes_per_row / read_bandwidth + prep_per_row + delta_per_row;
    return rows * per_row * slow + overhead_fixed + overhead_per_worker * static_cast<double>(k);
}

double SimModel::true_rss(Rows b) const {
    const double rows = static_cast<double>(b);
    return beta0 + beta1 * rows * bytes_per_row + beta2 * rows;
}

SimDraw simulate_draw(const SimModel& sim, Rows b, int k, std::int64_t batch_id, int attempt) {
    std::uint64_t state = sim.seed;
    for (std::uint64_t v : {static_cast<std::uint64_t>(batch_id), static_cast<std::uint64_t>(b),
                            static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(attempt)}) {
        state ^= splitmix(state) + v;
    }
    const auto gaussian = [&] {
        const double u1 = unit(state);
        const double u2 = unit(state);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    };
    SimDraw d;
    const double z_lat = gaussian();
    const double z_mem = gaussian();
    d.straggler = unit(state) < sim.straggler_prob;
    d.latency = sim.true_latency(b, k) * std::exp(sim.sigma * z_lat) * (d.straggler ? sim.straggler_factor : 1.0);
    d.rss = sim.true_rss(b) * std::exp(sim.sigma * z_mem);
    return d;
}

BatchMetrics simulate_batch(const SimModel& sim, Rows b, int k, std::int64_t batch_id) {
    const SimDraw d = simulate_draw(sim, b, k, batch_id);
    BatchMetrics m;
    m.batch_id = batch_id;
    m.end = d.latency;
    m.latency = d.latency;
    m.rss_peak = d.rss;
    m.cpu_p95 = sim.cpu_per_worker * k;
    m.bytes_read = static_cast<double>(b) * sim.bytes_per_row;
    m.rows = b;
    m.config = {b, k};
    return m;
}

SimBackend::SimBackend(SimModel sim, std::shared_ptr<const PreparedJob> job, int k, ExecOptions options,
                       double mem_cap)
    : sim_(sim), job_(std::move(job)), options_(std::move(options)), mem_cap_(mem_cap), k_(k) {
    check_range(k, options_);
}

void SimBackend::resize_workers(int k) {
    check_range(k, options_);
    k_ = k;
}

std::int64_t SimBackend::submit(const BatchDescriptor& batch, BatchConfig config, bool urgent) {
    Task task{next_ticket_++, batch, config, now_, static_cast<int>(queue_.size()), 0, copies_[batch.batch_id]++};
    if (urgent) queue_.push_front(task);
    else queue_.push_back(task);
    return task.ticket;
}

int SimBackend::free_worker() const {
    std::vector<bool> used(live_.size() + 1, false);
    for (const auto& [_, l] : live_)
        if (l.worker < static_cast<int>(used.size())) used[static_cast<std::size_t>(l.worker)] = true;
    return static_cast<int>(std::find(used.begin(), used.end(), false) - used.begin());
}

void SimBackend::start_ready() {
    while (!queue_.empty() && static_cast<int>(live_.size()) < k_) {
        Task task = queue_.front();
        queue_.pop_front();
        if (options_.fault) {
            try {
                options_.fault(task.batch, task.attempt);
            } catch (const std::exception& e) {
                if (task.attempt >= options_.max_retries)
                    throw ExecutionError(task.batch.batch_id, "failed after " + std::to_string(task.attempt + 1) +
                                                                  " attempts: " + e.what());
                ++task.attempt;
                queue_.push_front(task);
                continue;
            }
        }
        // Duplicates of a batch draw fresh noise.
        const int salt = task.attempt + 16 * task.copy;
        Live live{task, now_, 0.0, free_worker(), {}, false, 0.0};
        live.draw = simulate_draw(sim_, task.batch.rows(), task.config.k, task.batch.batch_id, salt);
        live.end = now_ + live.draw.latency;
        live_.emplace(task.ticket, live);
        double total = 0;
        for (const auto& [_, l] : live_) total += l.draw.rss;
        for (auto& [_, l] : live_) {
            l.rss_seen = std::max(l.rss_seen, total);
            if (mem_cap_ > 0 && total > mem_cap_) l.oom = true;
        }
    }
}

std::optional<Completion> SimBackend::next() {
    start_ready();
    if (live_.empty()) return std::nullopt;
    auto it = std::min_element(live_.begin(), live_.end(), [](const auto& a, const auto& b) {
        return std::tie(a.second.end, a.first) < std::tie(b.second.end, b.first);
    });
    Live live = it->second;
    const int concurrent = static_cast<int>(live_.size());
    live_.erase(it);
    now_ = std::max(now_, live.end);

    Completion c;
    c.ticket = live.task.ticket;
    c.batch = live.task.batch;
    c.attempts = live.task.attempt + 1;
    if (job_) c.result = diff_batch(*job_, live.task.batch);
    auto& m = c.metrics;
    m.batch_id = live.task.batch.batch_id;
    m.submitted = live.task.submitted;
    m.start = live.start;
    m.end = live.end;
    m.latency = live.end - live.start;
    m.rss_peak = live.draw.rss;
    m.cpu_p95 = sim_.cpu_per_worker * std::max(concurrent, 1);
    m.bytes_read = static_cast<double>(live.task.batch.rows()) * sim_.bytes_per_row;
    m.queue_depth_at_submit = live.task.queue_depth;
    m.worker_id = live.worker;
    m.rows = live.task.batch.rows();
    m.config = live.task.config;
    m.oom = live.oom;
    start_ready();
    return c;
}

void SimBackend::cancel(std::int64_t ticket) {
    std::erase_if(queue_, [&](const Task& t) { return t.ticket == ticket; });
    live_.erase(ticket);
}

std::vector<RunningInfo> SimBackend::running() const {
    std::vector<RunningInfo> out;
    for (const auto& [ticket, l] : live_) out.push_back({ticket, l.task.batch, now_ - l.start});
    return out;
}

std::unique_ptr<Backend> make_backend(BackendKind kind, std::shared_ptr<const PreparedJob> job, int k,
                                      const ExecOptions& options, const SimModel& sim, double mem_cap) {
    if (kind == BackendKind::simulated) return std::make_unique<SimBackend>(sim, std::move(job), k, options, mem_cap);
    return std::make_unique<ThreadBackend>(kind, std::move(job), k, options);
}

// ----------------------------------------------------------------- driver

JobOutcome run_job(Backend& backend, Rows total_rows, ConfigPolicy& policy, const RunOptions& options) {
    struct Group {
        BatchDescriptor batch;
        std::vector<std::int64_t> tickets;
        std::array<std::optional<BatchResult>, 2> halves;
        bool resolved = false;
        bool mitigated = false;
    };
    struct Owner {
        std::int64_t group = 0;
        int role = -1;  // -1 whole batch, 0/1 split half
    };

    JobOutcome out;
    BatchConfig cfg = policy.start(total_rows);
    backend.resize_workers(cfg.k);
    BatchCarver carver(total_rows);
    std::int64_t next_id = 0;
    std::map<std::int64_t, Group> groups;
    std::map<std::int64_t, Owner> owner;
    std::vector<BatchResult> parts;

    const auto outstanding = [&] { return backend.active() + backend.pending(); };
    const auto submit_new = [&] {
        auto d = *carver.next(cfg.b);
        d.batch_id = next_id++;
        const auto ticket = backend.submit(d, cfg);
        groups[d.batch_id] = Group{d, {ticket}, {}, false, false};
        owner[ticket] = {d.batch_id, -1};
    };
    const auto fill = [&] {
        const Admission gate = policy.admission();
        while (gate == Admission::open && !carver.done() && outstanding() < cfg.k + options.queue_ahead)
            submit_new();
        if (!carver.done() && outstanding() == 0) {
            if (gate == Admission::infeasible)
                throw InfeasibleJob("memory envelope admits no configuration mid-job");
            submit_new();
        }
    };
    const auto cancel_group = [&](Group& g, std::int64_t except) {
        for (auto t : g.tickets) {
            if (t == except) continue;
            backend.cancel(t);
            owner.erase(t);
        }
    };

    fill();
    while (auto c = backend.next()) {
        const auto own = owner.find(c->ticket);
        if (own == owner.end()) continue;
        const Owner who = own->second;
        owner.erase(own);
        Group& g = groups.at(who.group);
        if (g.resolved) continue;
        if (who.role < 0) {
            g.resolved = true;
            cancel_group(g, c->ticket);
            parts.push_back({g.batch, std::move(c->result)});
        } else {
            g.halves[static_cast<std::size_t>(who.role)] = BatchResult{c->batch, std::move(c->result)};
            if (g.halves[0] && g.halves[1]) {
                g.resolved = true;
                cancel_group(g, c->ticket);
                parts.push_back(std::move(*g.halves[0]));
                parts.push_back(std::move(*g.halves[1]));
            }
        }
        if (g.resolved) out.rows += g.batch.rows();

        const BatchMetrics& m = c->metrics;
        out.batches.push_back(m);
        if (m.oom) {
            ++out.oom_events;
            if (options.stop_on_oom) {
                ControlDecision abort;
                abort.new_b = cfg.b;
                abort.new_k = cfg.k;
                abort.reason = "out of memory";
                out.decisions.push_back(abort);
                out.reconfigured.push_back(false);
                if (options.observer) options.observer(m, abort, false);
                out.failed = true;
                for (const auto& [t, _] : owner) backend.cancel(t);
                owner.clear();
                break;
            }
        }
        const int before = policy.reconfig_count();
        const ControlDecision decision = policy.on_completion(m, carver.remaining());
        const bool changed = policy.reconfig_count() != before;
        out.decisions.push_back(decision);
        out.reconfigured.push_back(changed);
        if (options.observer) options.observer(m, decision, changed);
        if (decision.new_k != cfg.k) backend.resize_workers(decision.new_k);
        cfg = {decision.new_b, decision.new_k};

        for (const auto& r : backend.running()) {
            const auto o = owner.find(r.ticket);
            if (o == owner.end() || o->second.role >= 0) continue;
            Group& rg = groups.at(o->second.group);
            if (rg.resolved || rg.mitigated) continue;
            const auto action = policy.on_running({r.runtime, r.batch.rows(), false});
            if (action == StragglerAction::none) continue;
            rg.mitigated = true;
            ++out.mitigations;
            if (action == StragglerAction::split) {
                const Rows mid = rg.batch.begin + rg.batch.rows() / 2;
                const BatchDescriptor halves[2] = {{next_id, rg.batch.begin, mid, mid - rg.batch.begin},
                                                   {next_id + 1, mid, rg.batch.end, rg.batch.end - mid}};
                next_id += 2;
                for (int h = 1; h >= 0; --h) {
                    const auto t = backend.submit(halves[h], cfg, true);
                    rg.tickets.push_back(t);
                    owner[t] = {o->second.group, h};
                }
            } else {
                const auto t = backend.submit(rg.batch, cfg, true);
                rg.tickets.push_back(t);
                owner[t] = {o->second.group, -1};
            }
        }
        fill();
    }

    out.reconfig_count = policy.reconfig_count();
    out.final_config = cfg;
    out.wall_clock = backend.now();
    if (!out.failed) {
        if (out.rows != total_rows) throw std::logic_error("job finished with rows unaccounted for");
        out.result = merge_results(std::move(parts));
    }
    return out;
}

}  // namespace adsched
