#include "adsched/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>

namespace adsched {

using json = nlohmann::json;

namespace {

constexpr const char* kFormatTag = "adsched-telemetry";

}  // namespace

std::vector<std::string> record_fields() {
    return {"seq",        "batch_id", "submitted", "start",    "end",      "latency", "rss_peak",
            "cpu_p95",    "bytes_read", "queue_depth", "worker_id", "rows", "b",       "k",
            "rss_attributed", "oom",  "action",    "reason",   "new_b",    "new_k",   "h_mem",
            "h_cpu",      "trig_mem", "trig_tail", "trig_cpu", "delta_m",  "reconfig"};
}

json to_json(const TelemetryRecord& r) {
    const auto& m = r.metrics;
    const auto& d = r.decision;
    return json{{"seq", r.seq},
                {"batch_id", m.batch_id},
                {"submitted", m.submitted},
                {"start", m.start},
                {"end", m.end},
                {"latency", m.latency},
                {"rss_peak", m.rss_peak},
                {"cpu_p95", m.cpu_p95},
                {"bytes_read", m.bytes_read},
                {"queue_depth", m.queue_depth_at_submit},
                {"worker_id", m.worker_id},
                {"rows", m.rows},
                {"b", m.config.b},
                {"k", m.config.k},
                {"rss_attributed", m.rss_attributed},
                {"oom", m.oom},
                {"action", std::string(to_string(d.action))},
                {"reason", d.reason},
                {"new_b", d.new_b},
                {"new_k", d.new_k},
                {"h_mem", d.headrooms.h_mem},
                {"h_cpu", d.headrooms.h_cpu},
                {"trig_mem", d.triggers.mem},
                {"trig_tail", d.triggers.tail},
                {"trig_cpu", d.triggers.cpu},
                {"delta_m", d.delta_m},
                {"reconfig", r.reconfig}};
}

TelemetryRecord record_from_json(const json& j) {
    TelemetryRecord r;
    auto& m = r.metrics;
    auto& d = r.decision;
    r.seq = j.at("seq").get<std::int64_t>();
    m.batch_id = j.at("batch_id").get<std::int64_t>();
    m.submitted = j.at("submitted").get<double>();
    m.start = j.at("start").get<double>();
    m.end = j.at("end").get<double>();
    m.latency = j.at("latency").get<double>();
    m.rss_peak = j.at("rss_peak").get<double>();
    m.cpu_p95 = j.at("cpu_p95").get<double>();
    m.bytes_read = j.at("bytes_read").get<double>();
    m.queue_depth_at_submit = j.at("queue_depth").get<int>();
    m.worker_id = j.at("worker_id").get<int>();
    m.rows = j.at("rows").get<Rows>();
    m.config = {j.at("b").get<Rows>(), j.at("k").get<int>()};
    m.rss_attributed = j.at("rss_attributed").get<bool>();
    m.oom = j.at("oom").get<bool>();
    d.action = action_from_string(j.at("action").get<std::string>());
    d.reason = j.at("reason").get<std::string>();
    d.new_b = j.at("new_b").get<Rows>();
    d.new_k = j.at("new_k").get<int>();
    d.headrooms = {j.at("h_mem").get<double>(), j.at("h_cpu").get<double>()};
    d.triggers = {j.at("trig_mem").get<bool>(), j.at("trig_tail").get<bool>(), j.at("trig_cpu").get<bool>()};
    d.delta_m = j.at("delta_m").get<double>();
    r.reconfig = j.at("reconfig").get<bool>();
    if (m.end < m.start) throw std::invalid_argument("end before start");
    return r;
}

json to_json(const LogHeader& h) {
    return json{{"format", kFormatTag},
                {"version", h.version},
                {"fields", h.fields},
                {"job",
                 {{"job_id", h.job.job_id},
                  {"workload", h.job.workload},
                  {"policy", h.job.policy},
                  {"repetition", h.job.repetition},
                  {"backend", std::string(to_string(h.job.backend))},
                  {"rows_per_side", h.job.rows_per_side}}},
                {"config", h.config}};
}

LogHeader header_from_json(const json& j) {
    if (j.value("format", "") != kFormatTag) throw std::invalid_argument("not a telemetry log header");
    LogHeader h;
    h.version = j.at("version").get<int>();
    if (h.version != kLogVersion) throw LogVersionError(h.version, kLogVersion);
    h.fields = j.at("fields").get<std::vector<std::string>>();
    const auto& job = j.at("job");
    h.job.job_id = job.value("job_id", "");
    h.job.workload = job.value("workload", "");
    h.job.policy = job.value("policy", "");
    h.job.repetition = job.value("repetition", 0);
    h.job.backend = backend_kind_from_string(job.value("backend", "inmem"));
    h.job.rows_per_side = job.value("rows_per_side", Rows{0});
    h.config = j.value("config", json::object());
    return h;
}

TelemetryWriter::TelemetryWriter(const std::filesystem::path& path, LogHeader header) {
    if (header.fields.empty()) header.fields = record_fields();
    out_.open(path, std::ios::out | std::ios::trunc);
    if (!out_) {
        ++dropped_;
        return;
    }
    out_ << to_json(header).dump() << '\n';
    out_.flush();
    if (!out_) ++dropped_;
}

bool TelemetryWriter::append(TelemetryRecord record) noexcept {
    try {
        record.seq = next_seq_++;
        if (!out_.is_open() || !out_.good()) {
            ++dropped_;
            return false;
        }
        out_ << to_json(record).dump() << '\n';
        out_.flush();
        if (!out_) {
            ++dropped_;
            return false;
        }
        return true;
    } catch (...) {
        ++dropped_;
        return false;
    }
}

LogContents read_log(const std::filesystem::path& path, ReadMode mode) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open log " + path.string());
    LogContents out;
    std::string line;
    if (!std::getline(in, line)) throw LogFormatError(1, "empty log");
    try {
        out.header = header_from_json(json::parse(line));
    } catch (const LogVersionError&) {
        throw;
    } catch (const std::exception& e) {
        throw LogFormatError(1, std::string("bad header: ") + e.what());
    }
    std::size_t line_no = 1;
    std::int64_t last_seq = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto record = record_from_json(json::parse(line));
            if (record.seq <= last_seq) throw std::invalid_argument("sequence not increasing");
            last_seq = record.seq;
            out.records.push_back(std::move(record));
        } catch (const std::exception& e) {
            if (mode == ReadMode::strict) throw LogFormatError(line_no, e.what());
            out.skipped.push_back({line_no, e.what()});
        }
    }
    return out;
}

JobSummary job_summary(const std::vector<TelemetryRecord>& records, const PolicyParams& policy) {
    if (records.empty()) throw std::invalid_argument("job_summary needs at least one record");
    const std::size_t window = static_cast<std::size_t>(std::max(1, policy.percentile_window));
    JobSummary s;
    double weighted95 = 0;
    double weighted50 = 0;
    double weight = 0;
    for (std::size_t lo = 0; lo < records.size(); lo += window) {
        const std::size_t hi = std::min(records.size(), lo + window);
        std::vector<double> lat;
        double rows = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            lat.push_back(records[i].metrics.result_latency());
            rows += static_cast<double>(records[i].metrics.rows);
        }
        const double w = rows > 0 ? rows : 1.0;
        weighted95 += w * windowed_percentile(lat, 0.95);
        weighted50 += w * windowed_percentile(lat, 0.50);
        weight += w;
    }
    s.job_p95 = weighted95 / weight;
    s.job_p50 = weighted50 / weight;
    for (const auto& r : records) {
        s.peak_rss = std::max(s.peak_rss, r.metrics.rss_peak);
        s.rows += r.metrics.rows;
        s.reconfig_count += r.reconfig ? 1 : 0;
        s.oom_events += r.metrics.oom ? 1 : 0;
        s.wall_clock = std::max(s.wall_clock, r.metrics.end);
    }
    // Timestamps are relative to job start, so the wall clock is the last end.
    s.throughput = s.wall_clock > 0 ? static_cast<double>(s.rows) / s.wall_clock : 0.0;
    return s;
}

std::vector<TelemetryRecord> records_from_outcome(const JobOutcome& outcome) {
    std::vector<TelemetryRecord> out;
    for (std::size_t i = 0; i < outcome.batches.size(); ++i) {
        TelemetryRecord r;
        r.seq = static_cast<std::int64_t>(i);
        r.metrics = outcome.batches[i];
        if (i < outcome.decisions.size()) r.decision = outcome.decisions[i];
        if (i < outcome.reconfigured.size()) r.reconfig = outcome.reconfigured[i];
        out.push_back(std::move(r));
    }
    return out;
}

double student_t975(int df) {
    if (df < 1) throw std::invalid_argument("degrees of freedom must be >= 1");
    static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                       2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                       2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df <= 30) return table[df - 1];
    if (df <= 40) return 2.042 + (2.021 - 2.042) * (df - 30) / 10.0;
    if (df <= 60) return 2.021 + (2.000 - 2.021) * (df - 40) / 20.0;
    if (df <= 120) return 2.000 + (1.980 - 2.000) * (df - 60) / 60.0;
    return 1.960;
}

Interval confidence_interval(const std::vector<double>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("confidence interval needs >= 2 samples");
    const double n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0;
    for (double x : samples) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1));
    return {mean, student_t975(static_cast<int>(samples.size()) - 1) * sd / std::sqrt(n)};
}

void export_summaries(const std::vector<std::pair<JobMeta, JobSummary>>& rows, std::ostream& out) {
    out << "job_id,workload,policy,repetition,backend,job_p95_s,job_p50_s,peak_rss_bytes,"
           "throughput_rows_s,reconfigs,oom_events,wall_clock_s,rows\n";
    out << std::setprecision(10);
    for (const auto& [meta, s] : rows) {
        out << meta.job_id << ',' << meta.workload << ',' << meta.policy << ',' << meta.repetition << ','
            << to_string(meta.backend) << ',' << s.job_p95 << ',' << s.job_p50 << ',' << s.peak_rss << ','
            << s.throughput << ',' << s.reconfig_count << ',' << s.oom_events << ',' << s.wall_clock << ','
            << s.rows << '\n';
    }
}

}  // namespace adsched
