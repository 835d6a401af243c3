#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace adsched {

using Rows = std::int64_t;

enum class ColumnKind { integer, floating, string, datetime, boolean };

enum class BackendKind { inmem, taskpool, simulated };

std::string_view to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view name);

std::string_view to_string(BackendKind kind);
BackendKind backend_kind_from_string(std::string_view name);

// Raised when (b_min, k_min) already violates the memory envelope.
class InfeasibleJob : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data could not be read or parsed.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BatchConfig {
    Rows b = 0;
    int k = 0;
    friend bool operator==(const BatchConfig&, const BatchConfig&) = default;
};

// One record per completed batch. Timestamps are seconds since job start.
struct BatchMetrics {
    std::int64_t batch_id = 0;
    double submitted = 0.0;
    double start = 0.0;
    double end = 0.0;
    double latency = 0.0;        // end - start
    double rss_peak = 0.0;       // bytes, max over samples of the executing worker
    double cpu_p95 = 0.0;        // core-equivalents across the pool
    double bytes_read = 0.0;
    int queue_depth_at_submit = 0;
    int worker_id = 0;
    Rows rows = 0;               // aligned rows actually processed
    BatchConfig config;          // (b,k) at submission
    bool rss_attributed = false; // process RSS divided by k, not per-thread
    bool oom = false;            // simulated breach of the memory cap

    // Total resident memory implied by this batch when all k workers peak alike.
    double total_rss() const { return rss_peak * static_cast<double>(config.k); }
    // Time the batch's rows waited for a verdict, measured from job start.
    double result_latency() const { return end; }
};

}  // namespace adsched
