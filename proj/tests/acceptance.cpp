// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1 for ctest).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "adsched/cli.hpp"

using namespace adsched;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict2 {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

bool rel_eq(double got, double want, double tol = 1e-9) {
    return std::abs(got - want) <= tol * std::max(1.0, std::abs(want));
}

// ------------------------------------------------------------ shared inputs

// Randomized jobs up to 1e4 rows per side, integer and string keys.
std::vector<WorkloadSpec> random_jobs() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<Rows> rows(50, 10'000);
    std::uniform_real_distribution<double> change(0.0, 0.3), edge(0.0, 0.1);
    std::vector<WorkloadSpec> jobs;
    for (int i = 0; i < 20; ++i) {
        WorkloadSpec s;
        s.rows_per_side = i == 0 ? 10'000 : rows(rng);
        s.key_kind = i % 2 ? ColumnKind::string : ColumnKind::integer;
        s.change_rate = change(rng);
        s.add_rate = edge(rng);
        s.remove_rate = edge(rng);
        s.seed = static_cast<std::uint64_t>(100 + i);
        jobs.push_back(s);
    }
    return jobs;
}

// Straight from the tables: key maps on both sides, same-name non-key
// columns, float tolerance from the source schema.
DiffResult naive_diff(const Table& a, const Table& b) {
    const auto key_of = [](const Table& t, const std::vector<Cell>& row) {
        std::vector<std::pair<Cell, std::string>> key;
        for (const auto& name : t.schema.key_columns) {
            const auto i = *t.schema.index_of(name);
            key.emplace_back(row[i], render_cell(row[i], t.schema.columns[i].kind));
        }
        return key;
    };
    using Key = std::vector<std::pair<Cell, std::string>>;
    std::map<Key, const std::vector<Cell>*> left, right;
    for (const auto& r : a.rows) left[key_of(a, r)] = &r;
    for (const auto& r : b.rows) right[key_of(b, r)] = &r;
    std::map<Key, int> keys;
    for (const auto& [k, _] : left) keys[k] |= 1;
    for (const auto& [k, _] : right) keys[k] |= 2;

    std::vector<std::string> compared;
    for (const auto& c : a.schema.columns) {
        const bool is_key = std::find(a.schema.key_columns.begin(), a.schema.key_columns.end(), c.name) !=
                            a.schema.key_columns.end();
        if (!is_key && b.schema.index_of(c.name)) compared.push_back(c.name);
    }
    DiffResult out;
    for (const auto& [k, sides] : keys) {
        std::vector<std::string> rendered;
        for (const auto& part : k) rendered.push_back(part.second);
        if (sides == 1) {
            out.add({rendered, std::nullopt, VerdictKind::removed, std::nullopt, std::nullopt});
            continue;
        }
        if (sides == 2) {
            out.add({rendered, std::nullopt, VerdictKind::added, std::nullopt, std::nullopt});
            continue;
        }
        for (const auto& name : compared) {
            const auto ia = *a.schema.index_of(name);
            const auto ib = *b.schema.index_of(name);
            const auto& spec = a.schema.columns[ia];
            const Cell& x = (*left[k])[ia];
            const Cell& y = (*right[k])[ib];
            bool same = x == y;
            if (spec.kind == ColumnKind::floating && std::holds_alternative<double>(x) &&
                std::holds_alternative<double>(y))
                same = std::abs(std::get<double>(x) - std::get<double>(y)) <= spec.tolerance;
            if (same)
                out.add({rendered, name, VerdictKind::equal, std::nullopt, std::nullopt});
            else
                out.add({rendered, name, VerdictKind::changed, render_cell(x, spec.kind), render_cell(y, spec.kind)});
        }
    }
    return out;
}

std::vector<adsched::Verdict> sorted(std::vector<adsched::Verdict> v) {
    std::sort(v.begin(), v.end());
    return v;
}

// One-sided 95% Clopper-Pearson upper bound for x events in n trials.
double binomial_upper95(int x, int n) {
    if (x >= n) return 1.0;
    const auto cdf = [&](double p) {
        double s = 0.0;
        for (int i = 0; i <= x; ++i)
            s += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * std::log(p) +
                          (n - i) * std::log1p(-p));
        return s;
    };
    double lo = static_cast<double>(x) / n, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (cdf(mid) > 0.05 ? lo : hi) = mid;
    }
    return hi;
}

ScenarioMatrix default_matrix() { return scenario_matrix(ScenarioRequest{}); }

std::vector<Scenario> baselines(const ScenarioMatrix& m) {
    std::vector<Scenario> out;
    for (const auto& s : m.scenarios)
        if (s.axis == "baseline") out.push_back(s);
    return out;
}

// ------------------------------------------------------------ criteria

Verdict2 determinism() {
    const auto t0 = Clock::now();
    int runs = 0, mismatches = 0, jobs = 0;
    for (const auto& spec : random_jobs()) {
        const auto pair = generate_pair(spec);
        auto job = std::make_shared<const PreparedJob>(JobSpec{pair.source, pair.target, {}, {}, {}});
        const Rows n = job->aligned_rows();
        const auto reference = diff_batch(*job, {0, 0, n, n});
        ++jobs;
        for (Rows b : {Rows{7}, Rows{64}, Rows{1000}, n}) {
            for (int k : {1, 2, 4}) {
                for (auto kind : {BackendKind::inmem, BackendKind::taskpool, BackendKind::simulated}) {
                    ExecOptions exec;
                    exec.cpu_cap = 4;
                    exec.task_overhead_s = 0.0002;
                    auto backend = make_backend(kind, job, k, exec, desk_sim(0.1, spec.seed), 1e15);
                    FixedPolicy policy({b, k});
                    const auto out = run_job(*backend, n, policy);
                    ++runs;
                    if (out.failed || !(out.result == reference)) ++mismatches;
                }
            }
        }
    }
    const double elapsed = seconds_since(t0);
    return {mismatches == 0 && jobs >= 20 && elapsed < 120.0,
            fmt("%d jobs, %d runs over b in {7,64,1000,n} x k in {1,2,4} x 3 backends, %d mismatches, %.1f s (limit 120 s)",
                jobs, runs, mismatches, elapsed)};
}

Verdict2 oracle_equivalence() {
    std::vector<WorkloadSpec> specs = random_jobs();
    for (const auto& s : baselines(default_matrix())) {
        WorkloadSpec w = s.workload;
        w.change_rate = 0.05;
        w.add_rate = 0.02;
        w.remove_rate = 0.02;
        specs.push_back(w);
    }
    int pairs = 0, vs_truth = 0, vs_naive = 0;
    for (const auto& spec : specs) {
        const auto pair = generate_pair(spec);
        PreparedJob job(JobSpec{pair.source, pair.target, {}, {}, {}});
        const auto diff = diff_batch(job, {0, 0, job.aligned_rows(), job.aligned_rows()});
        ++pairs;
        if (!(diff == pair.ground_truth)) ++vs_truth;
        const auto naive = naive_diff(*pair.source, *pair.target);
        if (sorted(diff.verdicts) != sorted(naive.verdicts) || diff.counts != naive.counts) ++vs_naive;
    }
    return {vs_truth == 0 && vs_naive == 0,
            fmt("%d pairs, %d differ from ground truth, %d differ from the naive differ", pairs, vs_truth, vs_naive)};
}

Verdict2 safety() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<Rows> rows(10'000, 200'000);
    std::uniform_real_distribution<double> cap(0.6e9, 4e9);
    const PolicyParams policy;
    int jobs = 0, oom_jobs = 0, infeasible = 0, enacted = 0, violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const Rows n = rows(rng);
        const ResourceCaps caps{cap(rng), 16};
        const SimModel sim = desk_sim(0.1, 5000 + static_cast<std::uint64_t>(i));
        AdaptiveScheduler sched(models_from_sim(sim), caps, policy, BackendKind::simulated, 8);
        ExecOptions exec;
        exec.cpu_cap = caps.cpu_cap;
        SimBackend backend(sim, nullptr, 1, exec, caps.mem_cap);
        std::optional<BatchConfig> current;
        RunOptions opt;
        opt.observer = [&](const BatchMetrics& m, const ControlDecision& d, bool) {
            if (!current) current = m.config;  // the start configuration, checked below
            if (d.reason == "out of memory") return;
            const BatchConfig next{d.new_b, d.new_k};
            if (next == *current) return;
            ++enacted;
            const auto& models = sched.models();
            if (!is_safe(next.b, next.k, models.mem, models.profile, caps, policy, d.delta_m)) ++violations;
            current = next;
        };
        ++jobs;
        try {
            const auto start_models = models_from_sim(sim);
            const auto out = run_job(backend, n, sched, opt);
            if (current) {
                // safe_start sizes against the cold prior half-width.
                ++enacted;
                if (!is_safe(out.batches.front().config.b, out.batches.front().config.k, start_models.mem,
                             start_models.profile, caps, policy, policy.delta_m_prior))
                    ++violations;
            }
            if (out.oom_events > 0) ++oom_jobs;
        } catch (const InfeasibleJob&) {
            ++infeasible;
        }
    }
    const int judged = jobs - infeasible;
    const double upper = binomial_upper95(oom_jobs, judged);
    const double elapsed = seconds_since(t0);
    return {violations == 0 && upper <= 0.05 && elapsed < 300.0,
            fmt("%d jobs (%d infeasible at start), %d enacted decisions, %d envelope violations, OOM jobs %d "
                "(rate %.4f, 95%% upper bound %.4f, limit 0.05), %.1f s (limit 300 s)",
                jobs, infeasible, enacted, violations, oom_jobs, judged ? double(oom_jobs) / judged : 0.0, upper,
                elapsed)};
}

Verdict2 optimality_gap() {
    const auto t0 = Clock::now();
    const auto matrix = default_matrix();
    bool pass = true;
    std::string detail;
    for (const auto& sc : baselines(matrix)) {
        const auto cell = sim_cell(sc, desk_sim(0.0), desk_caps());
        std::vector<double> fixed;
        for (const auto& c : matrix.fixed_grid) {
            const auto r = run_once(cell, {PolicyKind::fixed, c, {}, 0.1}, 0);
            if (!r.failed) fixed.push_back(r.summary.job_p95);
        }
        const auto a = run_once(cell, {PolicyKind::adaptive, {}, {}, 0.1}, 0);
        if (a.failed || fixed.empty()) {
            pass = false;
            detail += sc.name + " failed; ";
            continue;
        }
        std::sort(fixed.begin(), fixed.end());
        const std::size_t n = fixed.size();
        const double best = fixed.front();
        const double median = n % 2 ? fixed[n / 2] : 0.5 * (fixed[n / 2 - 1] + fixed[n / 2]);
        const double p = a.summary.job_p95;
        const bool ok = p <= 1.10 * best && p <= 0.85 * median;
        pass = pass && ok;
        detail += fmt("%s adaptive/best %.3f, gain vs median %.1f%%; ", sc.name.c_str(), p / best,
                      improvement(median, p));
    }
    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < 600.0;
    return {pass, detail + fmt("limits: ratio <= 1.10, gain >= 15%%, %.1f s (limit 600 s)", elapsed)};
}

double mean_p95(const BenchCell& cell, const PolicyChoice& choice, int reps) {
    double sum = 0.0;
    for (const auto& r : run_policy(cell, choice, reps)) sum += r.failed ? INFINITY : r.summary.job_p95;
    return sum / reps;
}

Verdict2 heuristic_ordering() {
    const auto matrix = default_matrix();
    double adaptive = 0.0, heuristic = 0.0;
    for (const auto& sc : baselines(matrix)) {
        const auto cell = sim_cell(sc, desk_noisy_sim(), desk_caps());
        adaptive += mean_p95(cell, {PolicyKind::adaptive, {}, {}, 0.1}, 3);
        heuristic += mean_p95(cell, {PolicyKind::two_stage, {}, matrix.fixed_grid, 0.1}, 3);
    }
    return {adaptive <= heuristic,
            fmt("sum over workloads of mean job p95 (3 reps, noisy sim): adaptive %.3f s, two-stage %.3f s", adaptive,
                heuristic)};
}

Verdict2 hysteresis() {
    const auto matrix = default_matrix();
    std::vector<double> means;
    for (int m : {1, 2, 3}) {
        int total = 0, n = 0;
        for (auto sc : baselines(matrix)) {
            sc.policy.hysteresis_m = m;
            const auto cell = sim_cell(sc, desk_noisy_sim(), desk_caps());
            for (const auto& r : run_policy(cell, {PolicyKind::adaptive, {}, {}, 0.1}, 10)) {
                total += r.summary.reconfig_count;
                ++n;
            }
        }
        means.push_back(static_cast<double>(total) / n);
    }
    return {means[0] >= means[1] && means[1] >= means[2],
            fmt("mean reconfigs/job over 4 sizes x 10 reps, noisy sim: m=1 %.3f, m=2 %.3f, m=3 %.3f", means[0],
                means[1], means[2])};
}

Verdict2 model_fit() {
    const PolicyParams policy;
    PreflightProfile profile;
    profile.bytes_per_row = 80;
    profile.read_bandwidth = 2e8;

    // Exact metrics from the memory model, fitted intercept starting at 0.
    const MemModel truth{32e6, 1.4, 6.0};
    CostModel cost;
    MemModel fitted{0.0, truth.beta1, truth.beta2};
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<Rows> rows(1000, 200'000);
    std::uniform_int_distribution<int> workers(1, 16);
    for (int i = 0; i < 50; ++i) {
        const Rows b = rows(rng);
        const int k = workers(rng);
        BatchMetrics m;
        m.latency = 0.1;
        m.rss_peak = predict_memory(truth, profile, b, k) / k;
        m.config = {b, k};
        fit_models_online(cost, fitted, profile, m, b, k, policy);
    }
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const Rows b = rows(rng);
        const int k = workers(rng);
        const double want = predict_memory(truth, profile, b, k);
        worst = std::max(worst, std::abs(predict_memory(fitted, profile, b, k) - want) / want);
    }

    // Constant injected bias on latency and memory, exact models otherwise.
    CostModel c0;
    c0.delta_per_row = 1e-6;
    c0.overhead_fixed = 0.01;
    MemModel m0{64e6, 1.0, 0.0};
    const Rows b = 50'000;
    const int k = 4;
    const double base_t = predict_latency(c0, profile, b, k);
    const double base_m = predict_memory(m0, profile, b, k);
    const double lat_bias = 0.5, mem_bias = 100e6;
    CostModel c = c0;
    MemModel mm = m0;
    int lat_steps = -1, mem_steps = -1;
    for (int i = 1; i <= 40; ++i) {
        BatchMetrics m;
        m.latency = base_t + lat_bias;
        m.rss_peak = (base_m + mem_bias) / k;
        m.config = {b, k};
        fit_models_online(c, mm, profile, m, b, k, policy);
        if (lat_steps < 0 && predict_latency(c, profile, b, k) - base_t >= 0.99 * lat_bias) lat_steps = i;
        if (mem_steps < 0 && predict_memory(mm, profile, b, k) - base_m >= 0.99 * mem_bias) mem_steps = i;
    }
    const bool pass = worst <= 0.01 && lat_steps > 0 && lat_steps <= 21 && mem_steps > 0 && mem_steps <= 21;
    return {pass, fmt("memory prediction error after 50 exact batches %.2e (limit 1e-2); 99%% of injected bias "
                      "after %d latency / %d memory updates at rho=0.2 (limit 21)",
                      worst, lat_steps, mem_steps)};
}

Verdict2 formula_checks() {
    int checks = 0, failed = 0;
    std::string which;
    const auto check = [&](bool ok, const char* name) {
        ++checks;
        if (!ok) {
            ++failed;
            which += std::string(" ") + name;
        }
    };
    PreflightProfile p200;
    p200.bytes_per_row = 200;
    p200.read_bandwidth = 1e9;
    check(rel_eq(estimate_working_set({1.0, 0.0, 5'000'000, 5'000'000}, p200), 2e9), "ws-a");
    PreflightProfile p100 = p200;
    p100.bytes_per_row = 100;
    check(rel_eq(estimate_working_set({1.2, 0.0, 1'000'000, 1'000'000}, p100), 2.4e8), "ws-b");
    PolicyParams policy;
    check(select_backend(2.0e9, {4.0 * 1024 * 1024 * 1024, 8}, policy) == BackendKind::inmem, "gate");

    ResourceCaps caps{1e9, 8};
    auto state = ControllerState::initial({1000, 1}, BackendKind::inmem, policy);
    state.smoothed_rss_p95.update(0.45 * policy.eta * caps.mem_cap);
    state.smoothed_cpu_p95.update(0.0);
    check(rel_eq(compute_headrooms(state, caps, policy).h_mem, 0.55), "headroom");

    const SafeLimits wide{10'000'000, 32, true};
    auto s1 = ControllerState::initial({100'000, 4}, BackendKind::inmem, policy);
    const auto d1 = propose_step(s1, {0.5, 0.1}, wide, policy);
    check(d1.action == Action::increase_b && d1.new_b == 110'000 && d1.new_k == 4, "step-b");
    auto s2 = ControllerState::initial({100'000, 8}, BackendKind::inmem, policy);
    const auto d2 = propose_step(s2, {0.05, 0.3}, wide, policy);
    check(d2.action == Action::increase_k && d2.new_k == 9 && d2.new_b == 100'000, "step-k");

    auto s3 = ControllerState::initial({100'000, 8}, BackendKind::inmem, policy);
    Triggers tail;
    tail.tail = true;
    const auto first = apply_decrease(s3, tail, policy);
    const auto second = apply_decrease(s3, tail, policy);
    check(first.action == Action::hold && second.new_b == 60'000 && second.new_k == 8, "backoff");
    auto s4 = ControllerState::initial({50'000, 6}, BackendKind::inmem, policy);
    Triggers cpu;
    cpu.cpu = true;
    PolicyParams m1 = policy;
    m1.hysteresis_m = 1;
    const auto d4 = apply_decrease(s4, cpu, m1);
    check(d4.action == Action::decrease_k && d4.new_k == 5 && d4.new_b == 50'000, "cpu-first");
    return {failed == 0, fmt("%d/%d examples hold", checks - failed, checks) + (failed ? ", failing:" + which : "")};
}

std::vector<std::string> row_cells(const std::string& text, const std::string& title, const std::string& workload) {
    const auto at = text.find(title);
    if (at == std::string::npos) return {};
    std::istringstream in(text.substr(at));
    std::string line;
    while (std::getline(in, line) && !line.empty()) {
        std::istringstream cells(line);
        std::vector<std::string> out;
        for (std::string c; cells >> c;) out.push_back(c);
        if (!out.empty() && out[0] == workload) return out;
    }
    return {};
}

Verdict2 golden_fixture() {
    std::ostringstream out, err;
    const int code = cli::cmd_analyze({{fs::path(ADSCHED_FIXTURE_DIR) / "logs"}, ReadMode::strict, {}}, out, err);
    if (code != cli::kOk) return {false, "analyze exited " + std::to_string(code) + ": " + err.str()};
    const std::vector<std::string> names{"1M", "5M", "10M", "20M"};
    const std::vector<std::string> p95{"13.9", "53.8", "115.6", "242.7"};
    const std::vector<std::string> mem{"7.1", "23.9", "28.6", "39.7"};
    const std::vector<std::string> rec{"5", "7", "9", "10"};
    std::string got_p95, got_mem, got_rec;
    bool pass = true;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto t1 = row_cells(out.str(), "p95 latency (s)", names[i]);
        const auto t2 = row_cells(out.str(), "Peak memory (GB)", names[i]);
        const auto t3 = row_cells(out.str(), "Throughput (k rows/s)", names[i]);
        const std::string a = t1.size() > 7 ? t1[7] : "?";
        const std::string b = t2.size() > 7 ? t2[7] : "?";
        const std::string c = t3.size() > 4 ? t3[4] : "?";
        pass = pass && a == p95[i] && b == mem[i] && c == rec[i];
        got_p95 += " " + a;
        got_mem += " " + b;
        got_rec += " " + c;
    }
    return {pass, "adaptive p95" + got_p95 + "; memory" + got_mem + "; reconfigs" + got_rec};
}

Verdict2 overhead() {
    const SimModel sim = desk_noisy_sim();
    AdaptiveScheduler sched(models_from_sim(sim), desk_caps(), PolicyParams{}, BackendKind::simulated, 8);
    BatchConfig cfg = sched.start(1'000'000'000);
    constexpr int kCycles = 10'000;
    std::vector<double> times;
    times.reserve(kCycles);
    for (int i = 0; i < kCycles; ++i) {
        BatchMetrics m = simulate_batch(sim, cfg.b, cfg.k, i);
        const auto t0 = Clock::now();
        const auto d = sched.on_completion(m, 1'000'000'000);
        times.push_back(seconds_since(t0));
        cfg = {d.new_b, d.new_k};
    }
    double sum = 0.0;
    for (double t : times) sum += t;
    std::sort(times.begin(), times.end());
    const double mean = sum / kCycles;
    return {mean < 1e-3, fmt("%d cycles: mean %.2f us, p99 %.2f us, max %.2f us (limit 1000 us mean)", kCycles,
                             mean * 1e6, times[kCycles * 99 / 100] * 1e6, times.back() * 1e6)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Verdict2()>>> criteria{
        {"determinism", determinism},
        {"oracle-equivalence", oracle_equivalence},
        {"safety", safety},
        {"optimality-gap", optimality_gap},
        {"heuristic-ordering", heuristic_ordering},
        {"hysteresis-direction", hysteresis},
        {"model-fit-recovery", model_fit},
        {"formula-spot-checks", formula_checks},
        {"golden-fixture", golden_fixture},
        {"controller-overhead", overhead},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Verdict2 v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        if (!v.pass) ++failed;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
