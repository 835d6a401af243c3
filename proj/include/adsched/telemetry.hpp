#pragma once

// Batch-level telemetry: a line-delimited JSON log with a versioned header,
// job summaries computed purely from records, and Student-t intervals.

#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adsched/controller.hpp"
#include "adsched/exec.hpp"
#include "adsched/types.hpp"

namespace adsched {

inline constexpr int kLogVersion = 1;

struct JobMeta {
    std::string job_id;
    std::string workload;
    std::string policy;
    int repetition = 0;
    BackendKind backend = BackendKind::inmem;
    Rows rows_per_side = 0;
};

struct LogHeader {
    int version = kLogVersion;
    std::vector<std::string> fields;
    JobMeta job;
    nlohmann::json config = nlohmann::json::object();  // effective configuration
};

struct TelemetryRecord {
    std::int64_t seq = 0;  // append order, monotone per job
    BatchMetrics metrics;
    ControlDecision decision;
    bool reconfig = false;  // this completion enacted a counted reconfiguration
};

nlohmann::json to_json(const TelemetryRecord& record);
TelemetryRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LogHeader& header);
LogHeader header_from_json(const nlohmann::json& j);
std::vector<std::string> record_fields();

// Best-effort appender: I/O failures are counted, never thrown.
class TelemetryWriter {
public:
    TelemetryWriter(const std::filesystem::path& path, LogHeader header);

    bool append(TelemetryRecord record) noexcept;
    std::int64_t written() const { return next_seq_; }
    std::int64_t dropped() const { return dropped_; }
    bool ok() const { return dropped_ == 0 && out_.good(); }

private:
    std::ofstream out_;
    std::int64_t next_seq_ = 0;
    std::int64_t dropped_ = 0;
};

class LogFormatError : public std::runtime_error {
public:
    LogFormatError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
    std::size_t line;
};

class LogVersionError : public std::runtime_error {
public:
    LogVersionError(int found, int expected)
        : std::runtime_error("log schema version " + std::to_string(found) + ", reader supports " +
                             std::to_string(expected)),
          found(found), expected(expected) {}
    int found;
    int expected;
};

struct LogIssue {
    std::size_t line;
    std::string message;
};

struct LogContents {
    LogHeader header;
    std::vector<TelemetryRecord> records;
    std::vector<LogIssue> skipped;  // lenient mode only
};

enum class ReadMode { strict, lenient };

LogContents read_log(const std::filesystem::path& path, ReadMode mode = ReadMode::strict);

struct JobSummary {
    double job_p95 = 0.0;  // seconds
    double job_p50 = 0.0;
    double peak_rss = 0.0;  // bytes, max per-worker
    double throughput = 0.0;  // rows/s
    int reconfig_count = 0;
    int oom_events = 0;
    double wall_clock = 0.0;
    Rows rows = 0;
};

// Windowed percentiles over consecutive records, averaged with row weights.
// The latency sample of a batch is its result latency (end since job start).
JobSummary job_summary(const std::vector<TelemetryRecord>& records, const PolicyParams& policy);

// Records for an in-process run; the same shape a log read-back produces.
std::vector<TelemetryRecord> records_from_outcome(const JobOutcome& outcome);

struct Interval {
    double mean = 0.0;
    double half_width = 0.0;
};

// Two-sided 97.5% Student-t quantile.
double student_t975(int df);
Interval confidence_interval(const std::vector<double>& samples);

// One delimited row per summary, with the metadata columns first.
void export_summaries(const std::vector<std::pair<JobMeta, JobSummary>>& rows, std::ostream& out);

}  // namespace adsched
