#include "adsched/telemetry.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace adsched;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "adsched_telemetry_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

TelemetryRecord random_record(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0, 1);
    TelemetryRecord r;
    auto& m = r.metrics;
    m.batch_id = static_cast<std::int64_t>(rng() % 100000);
    m.submitted = u(rng);
    m.start = m.submitted + u(rng);
    m.end = m.start + u(rng) * 10;
    m.latency = m.end - m.start;
    m.rss_peak = u(rng) * 1e10;
    m.cpu_p95 = u(rng) * 16;
    m.bytes_read = std::floor(u(rng) * 1e9);
    m.queue_depth_at_submit = static_cast<int>(rng() % 10);
    m.worker_id = static_cast<int>(rng() % 16);
    m.rows = static_cast<Rows>(rng() % 100000);
    m.config = {static_cast<Rows>(rng() % 100000 + 1), static_cast<int>(rng() % 16 + 1)};
    m.rss_attributed = rng() % 2;
    m.oom = rng() % 7 == 0;
    auto& d = r.decision;
    d.action = static_cast<Action>(rng() % 7);
    d.reason = "reason \"quoted\" " + std::to_string(rng() % 100);
    d.new_b = static_cast<Rows>(rng() % 100000);
    d.new_k = static_cast<int>(rng() % 16);
    d.headrooms = {u(rng) * 2 - 1, u(rng) * 2 - 1};
    d.triggers = {rng() % 2 == 0, rng() % 2 == 0, rng() % 2 == 0};
    d.delta_m = u(rng) * 1e9;
    r.reconfig = rng() % 2;
    return r;
}

bool same(const TelemetryRecord& a, const TelemetryRecord& b) {
    return to_json(a) == to_json(b);
}

TelemetryRecord at(double end, Rows rows, double rss = 0) {
    TelemetryRecord r;
    r.metrics.end = end;
    r.metrics.latency = end;
    r.metrics.rows = rows;
    r.metrics.rss_peak = rss;
    return r;
}

double nearest_rank(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace

TEST(Telemetry, RandomizedRoundTrip) {
    std::mt19937_64 rng(5);
    const auto path = scratch("roundtrip.jsonl");
    LogHeader header;
    header.job = {"job-1", "w", "adaptive", 2, BackendKind::taskpool, 1234};
    header.config = {{"eta", 0.9}};
    std::vector<TelemetryRecord> written;
    {
        TelemetryWriter w(path, header);
        for (int i = 0; i < 500; ++i) {
            auto r = random_record(rng);
            r.seq = i;
            written.push_back(r);
            ASSERT_TRUE(w.append(r));
        }
        EXPECT_TRUE(w.ok());
    }
    const auto back = read_log(path);
    EXPECT_EQ(back.header.job.job_id, "job-1");
    EXPECT_EQ(back.header.job.backend, BackendKind::taskpool);
    EXPECT_EQ(back.header.job.rows_per_side, 1234);
    EXPECT_EQ(back.header.config["eta"], 0.9);
    EXPECT_EQ(back.header.fields, record_fields());
    ASSERT_EQ(back.records.size(), written.size());
    for (std::size_t i = 0; i < written.size(); ++i) EXPECT_TRUE(same(back.records[i], written[i])) << i;
}

TEST(Telemetry, BulkAppendPreservesOrder) {
    const auto path = scratch("bulk.jsonl");
    {
        TelemetryWriter w(path, {});
        for (int i = 0; i < 100'000; ++i) {
            TelemetryRecord r;
            r.metrics.batch_id = i;
            w.append(r);
        }
        EXPECT_EQ(w.written(), 100'000);
    }
    const auto back = read_log(path);
    ASSERT_EQ(back.records.size(), 100'000u);
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        ASSERT_EQ(back.records[i].seq, static_cast<std::int64_t>(i));
        ASSERT_EQ(back.records[i].metrics.batch_id, static_cast<std::int64_t>(i));
    }
}

TEST(Telemetry, MalformedLineHandling) {
    const auto path = scratch("corrupt.jsonl");
    {
        TelemetryWriter w(path, {});
        for (int i = 0; i < 3; ++i) w.append({});
    }
    {
        std::ofstream out(path, std::ios::app);
        out << "{not json\n";
    }
    {
        std::ofstream out(path, std::ios::app);
        TelemetryRecord r;
        r.seq = 10;
        out << to_json(r).dump() << "\n";
    }
    const auto lenient = read_log(path, ReadMode::lenient);
    EXPECT_EQ(lenient.records.size(), 4u);
    ASSERT_EQ(lenient.skipped.size(), 1u);
    EXPECT_EQ(lenient.skipped[0].line, 5u);
    try {
        read_log(path, ReadMode::strict);
        ADD_FAILURE();
    } catch (const LogFormatError& e) {
        EXPECT_EQ(e.line, 5u);
    }
}

TEST(Telemetry, VersionMismatchReportsBoth) {
    const auto path = scratch("v2.jsonl");
    auto header = to_json(LogHeader{});
    header["version"] = 2;
    std::ofstream(path) << header.dump() << "\n";
    try {
        read_log(path);
        ADD_FAILURE();
    } catch (const LogVersionError& e) {
        EXPECT_EQ(e.found, 2);
        EXPECT_EQ(e.expected, kLogVersion);
        EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
    }
}

TEST(Telemetry, UnwritableLogDoesNotThrow) {
    TelemetryWriter w("/nonexistent-dir/x/log.jsonl", {});
    EXPECT_FALSE(w.append({}));
    EXPECT_FALSE(w.ok());
    EXPECT_GE(w.dropped(), 1);
}

TEST(Telemetry, SummaryConstantLatency) {
    std::vector<TelemetryRecord> recs;
    for (int i = 0; i < 57; ++i) recs.push_back(at(3.5, 10 + i));
    const auto s = job_summary(recs, PolicyParams{});
    EXPECT_DOUBLE_EQ(s.job_p95, 3.5);
    EXPECT_DOUBLE_EQ(s.job_p50, 3.5);
}

TEST(Telemetry, SummarySingleWindowIsNearestRank) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 100);
    for (int n = 1; n <= 20; ++n) {
        std::vector<TelemetryRecord> recs;
        std::vector<double> ends;
        for (int i = 0; i < n; ++i) {
            ends.push_back(u(rng));
            recs.push_back(at(ends.back(), 1 + i));
        }
        EXPECT_DOUBLE_EQ(job_summary(recs, PolicyParams{}).job_p95, nearest_rank(ends, 0.95)) << n;
    }
}

TEST(Telemetry, SummaryRowWeightedWindows) {
    PolicyParams p;
    p.percentile_window = 4;
    std::vector<TelemetryRecord> recs;
    const double ends[] = {1, 2, 3, 4, 10, 20, 30, 40, 7};
    const Rows rows[] = {1, 1, 1, 1, 2, 2, 2, 2, 5};
    for (int i = 0; i < 9; ++i) recs.push_back(at(ends[i], rows[i]));
    const auto s = job_summary(recs, p);
    EXPECT_NEAR(s.job_p95, (4 * 4.0 + 8 * 40.0 + 5 * 7.0) / 17.0, 1e-12);
    EXPECT_NEAR(s.job_p50, (4 * 2.0 + 8 * 20.0 + 5 * 7.0) / 17.0, 1e-12);
    EXPECT_EQ(s.rows, 17);
    EXPECT_DOUBLE_EQ(s.wall_clock, 40);
    EXPECT_DOUBLE_EQ(s.throughput, 17 / 40.0);
}

TEST(Telemetry, SummaryWithinWindowPermutationInvariant) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 100);
    std::vector<TelemetryRecord> recs;
    for (int i = 0; i < 60; ++i) recs.push_back(at(u(rng), 1 + static_cast<Rows>(rng() % 50)));
    const auto base = job_summary(recs, PolicyParams{});
    for (int trial = 0; trial < 10; ++trial) {
        auto shuffled = recs;
        for (std::size_t lo = 0; lo < shuffled.size(); lo += 20)
            std::shuffle(shuffled.begin() + static_cast<long>(lo), shuffled.begin() + static_cast<long>(lo + 20), rng);
        const auto s = job_summary(shuffled, PolicyParams{});
        EXPECT_DOUBLE_EQ(s.job_p95, base.job_p95);
        EXPECT_DOUBLE_EQ(s.job_p50, base.job_p50);
    }
}

TEST(Telemetry, SummaryPeakAndCounts) {
    std::vector<TelemetryRecord> recs{at(1, 1, 1e9), at(2, 1, 3e9), at(3, 1, 2e9)};
    recs[1].reconfig = true;
    recs[2].metrics.oom = true;
    const auto s = job_summary(recs, PolicyParams{});
    EXPECT_DOUBLE_EQ(s.peak_rss, 3e9);
    EXPECT_EQ(s.reconfig_count, 1);
    EXPECT_EQ(s.oom_events, 1);
    EXPECT_THROW(job_summary({}, PolicyParams{}), std::invalid_argument);
}

TEST(Telemetry, ConfidenceIntervals) {
    auto ci = confidence_interval({10, 10, 10});
    EXPECT_DOUBLE_EQ(ci.mean, 10);
    EXPECT_DOUBLE_EQ(ci.half_width, 0);
    ci = confidence_interval({12, 14, 16});
    EXPECT_DOUBLE_EQ(ci.mean, 14);
    EXPECT_NEAR(ci.half_width, 4.303 * 2 / std::sqrt(3.0), 1e-9);
    EXPECT_NEAR(ci.half_width, 4.97, 0.005);
    ci = confidence_interval({3, 8});
    EXPECT_DOUBLE_EQ(ci.mean, 5.5);
    EXPECT_THROW(confidence_interval({1}), std::invalid_argument);
    EXPECT_DOUBLE_EQ(student_t975(2), 4.303);
    EXPECT_DOUBLE_EQ(student_t975(1000), 1.96);
}

TEST(Telemetry, LogSummaryEqualsLiveSummary) {
    SimModel sim;
    sim.seed = 3;
    PreflightProfile profile{sim.bytes_per_row, sim.read_bandwidth, {}, 0};
    CostModel cost;
    cost.delta_per_row = sim.delta_per_row;
    cost.overhead_fixed = sim.overhead_fixed;
    MemModel mem;
    mem.beta0 = sim.beta0;
    PolicyParams policy;
    policy.b_min = 100;
    const ResourceCaps caps{4e9, 8};
    AdaptiveScheduler adaptive({cost, mem, profile}, caps, policy, BackendKind::simulated);
    ExecOptions o;
    o.cpu_cap = 8;
    SimBackend be(sim, nullptr, 1, o, caps.mem_cap);

    const auto path = scratch("live.jsonl");
    TelemetryWriter writer(path, {});
    RunOptions run;
    run.observer = [&](const BatchMetrics& m, const ControlDecision& d, bool reconfig) {
        writer.append({0, m, d, reconfig});
    };
    const auto out = run_job(be, 300'000, adaptive, run);
    const auto live = job_summary(records_from_outcome(out), policy);
    const auto logged = job_summary(read_log(path).records, policy);
    EXPECT_EQ(live.reconfig_count, out.reconfig_count);
    EXPECT_DOUBLE_EQ(live.job_p95, logged.job_p95);
    EXPECT_DOUBLE_EQ(live.peak_rss, logged.peak_rss);
    EXPECT_DOUBLE_EQ(live.throughput, logged.throughput);
    EXPECT_EQ(live.reconfig_count, logged.reconfig_count);
    EXPECT_EQ(live.rows, 300'000);
}
