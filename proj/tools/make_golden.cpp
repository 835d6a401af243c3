// Writes the packaged golden telemetry fixture: four workloads, three
// policies, three repetitions each. Every log is built so that analyze must
// reproduce the reference means and 95% half-widths below exactly.
//
// usage: adsched_golden <out-dir>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>

#include "adsched/bench.hpp"

namespace {

using namespace adsched;

struct Value {
    double mean;
    double ci;  // 95% half-width over 3 repetitions
};

struct PolicyColumn {
    std::string label;
    Value p95;       // seconds
    Value memory;    // GB
    double thr;      // k rows/s
    int reconfigs;
};

struct Workload {
    std::string name;
    Rows rows_per_side;
    BackendKind backend;
    PolicyColumn fixed, heuristic, adaptive;
};

const std::vector<Workload>& reference() {
    static const std::vector<Workload> w{
        {"1M", 1'000'000, BackendKind::inmem,
         {"fixed:b=100000,k=16", {21.7, 0.6}, {9.6, 0.2}, 74.1, 0},
         {"two-stage", {18.2, 0.5}, {8.4, 0.2}, 76.3, 1},
         {"adaptive", {13.9, 0.4}, {7.1, 0.2}, 78.8, 5}},
        {"5M", 5'000'000, BackendKind::inmem,
         {"fixed:b=100000,k=16", {83.5, 2.1}, {34.2, 0.7}, 71.5, 0},
         {"two-stage", {72.9, 1.9}, {30.6, 0.6}, 72.0, 1},
         {"adaptive", {53.8, 1.4}, {23.9, 0.5}, 73.9, 7}},
        {"10M", 10'000'000, BackendKind::taskpool,
         {"fixed:b=100000,k=16", {186.2, 3.9}, {41.8, 0.9}, 66.4, 0},
         {"two-stage", {161.4, 3.4}, {36.4, 0.8}, 68.8, 1},
         {"adaptive", {115.6, 2.6}, {28.6, 0.7}, 69.1, 9}},
        {"20M", 20'000'000, BackendKind::taskpool,
         {"fixed:b=100000,k=16", {401.7, 7.8}, {53.1, 1.1}, 60.2, 0},
         {"two-stage", {336.2, 6.5}, {47.3, 0.9}, 62.5, 1},
         {"adaptive", {242.7, 4.8}, {39.7, 0.9}, 62.0, 10}},
    };
    return w;
}

constexpr int kRecords = 20;
constexpr int kWorkers = 16;

// Repetitions at mean - d, mean, mean + d have sample sd d, so the Student-t
// half-width is t(2) * d / sqrt(3).
double rep_value(const Value& v, int rep) {
    const double d = v.ci * std::sqrt(3.0) / student_t975(2);
    return v.mean + (rep - 1) * d;
}

// One window of 20 results whose nearest-rank p95 is the last end time, with
// the row count chosen so that rows / wall clock is the target throughput.
std::vector<TelemetryRecord> records_for(const PolicyColumn& p, int rep) {
    const double end = rep_value(p.p95, rep);
    const double peak = rep_value(p.memory, rep) * 1e9;
    const Rows total = std::llround(p.thr * 1000.0 * end);
    const Rows per = total / kRecords;
    std::vector<TelemetryRecord> out;
    for (int i = 0; i < kRecords; ++i) {
        TelemetryRecord r;
        r.seq = i;
        auto& m = r.metrics;
        m.batch_id = i;
        m.rows = i + 1 < kRecords ? per : total - per * (kRecords - 1);
        m.end = i + 1 < kRecords ? end * (i + 1) / (kRecords - 1) : end;
        m.start = i == 0 ? 0.0 : end * std::min(i, kRecords - 2) / (kRecords - 1);
        m.submitted = m.start;
        m.latency = m.end - m.start;
        m.rss_peak = i == kRecords / 2 ? peak : 0.5 * peak;
        m.cpu_p95 = 0.8 * kWorkers;
        m.bytes_read = 200.0 * static_cast<double>(m.rows);
        m.worker_id = i % kWorkers;
        m.config = {per, kWorkers};
        r.reconfig = i >= 1 && i <= p.reconfigs;
        r.decision = {per, kWorkers, r.reconfig ? Action::increase_b : Action::hold,
                      r.reconfig ? "fixture reconfiguration" : "fixture hold", {}, {}, 0.0};
        out.push_back(r);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: adsched_golden <out-dir>\n";
        return 1;
    }
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    for (const auto& w : reference()) {
        for (const auto* p : {&w.fixed, &w.heuristic, &w.adaptive}) {
            for (int rep = 0; rep < 3; ++rep) {
                std::string file = w.name + "_" + p->label + "_r" + std::to_string(rep);
                for (char& c : file)
                    if (c == ':' || c == ',' || c == '=') c = '_';
                const JobMeta meta{w.name + "/" + p->label + "/r" + std::to_string(rep), w.name, p->label, rep,
                                   w.backend, w.rows_per_side};
                const nlohmann::json config{{"policy", to_json(PolicyParams{})}, {"axis", "baseline"},
                                            {"fixture", "golden"}};
                if (!write_run_log(dir / (file + ".jsonl"), meta, config, records_for(*p, rep))) {
                    std::cerr << "failed to write " << file << "\n";
                    return 2;
                }
            }
        }
    }
    return 0;
}
