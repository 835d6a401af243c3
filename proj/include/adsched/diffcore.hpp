#pragma once

// Deterministic tabular differencing: typed tables, key alignment, the
// cell-wise comparator, key-range batching and the order-stable merge.

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "adsched/model.hpp"
#include "adsched/types.hpp"

namespace adsched {

// Null, integer (also datetime as epoch seconds), float, string, boolean.
using Cell = std::variant<std::monostate, std::int64_t, double, std::string, bool>;

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::string;
    double tolerance = 0.0;  // absolute, float columns only
};

struct Schema {
    std::vector<ColumnSpec> columns;
    std::vector<std::string> key_columns;

    std::optional<std::size_t> index_of(const std::string& name) const;
    void validate() const;
};

struct NormalizeOptions {
    bool trim_trailing_whitespace = true;
    std::int64_t datetime_granularity_s = 1;
};

struct Table {
    std::string uri;  // source file, empty for in-memory tables
    Schema schema;
    std::vector<std::vector<Cell>> rows;

    Rows row_count() const { return static_cast<Rows>(rows.size()); }
};

using TableHandle = std::shared_ptr<const Table>;

Cell parse_cell(const std::string& text, ColumnKind kind, const NormalizeOptions& options);
std::string render_cell(const Cell& cell, ColumnKind kind);
// Encoded width used for bytes/row estimates.
std::size_t encoded_bytes(const Cell& cell);

// Loads a CSV with header; the schema comes from the JSON sidecar.
Table load_csv(const std::filesystem::path& csv, const std::filesystem::path& schema_path,
               const NormalizeOptions& options = {});
void write_csv(const Table& table, const std::filesystem::path& csv);
Schema load_schema(const std::filesystem::path& path);
void write_schema(const Schema& schema, const std::filesystem::path& path);
// `<csv>.schema.json`
std::filesystem::path schema_sidecar(const std::filesystem::path& csv);

struct ColumnPair {
    std::string source;
    std::string target;
};

struct JobSpec {
    TableHandle source;
    TableHandle target;
    std::vector<ColumnPair> column_mapping;  // empty: same-name non-key columns
    std::map<std::string, double> tolerances;
    NormalizeOptions normalize;
};

enum class VerdictKind { equal, changed, added, removed };
std::string_view to_string(VerdictKind kind);
VerdictKind verdict_kind_from_string(std::string_view name);

struct Verdict {
    std::vector<std::string> row_key;
    std::optional<std::string> column;
    VerdictKind kind = VerdictKind::equal;
    std::optional<std::string> old_value;
    std::optional<std::string> new_value;

    friend bool operator==(const Verdict&, const Verdict&) = default;
    friend auto operator<=>(const Verdict& a, const Verdict& b) {
        return std::tie(a.row_key, a.column, a.kind, a.old_value, a.new_value) <=>
               std::tie(b.row_key, b.column, b.kind, b.old_value, b.new_value);
    }
};

struct DiffResult {
    std::vector<Verdict> verdicts;
    std::array<Rows, 4> counts{};  // indexed by VerdictKind
    std::map<std::string, Rows> changed_per_column;

    Rows count(VerdictKind kind) const { return counts[static_cast<std::size_t>(kind)]; }
    void add(Verdict verdict);
    friend bool operator==(const DiffResult&, const DiffResult&) = default;
};

// Contiguous slice [begin, end) of the sorted aligned key space.
struct BatchDescriptor {
    std::int64_t batch_id = 0;
    Rows begin = 0;
    Rows end = 0;
    Rows row_budget = 0;

    Rows rows() const { return end - begin; }
};

struct AlignedKey {
    std::int64_t source_row = -1;  // -1: absent on that side
    std::int64_t target_row = -1;
};

struct ComparedColumn {
    std::size_t source_index;
    std::size_t target_index;
    std::string name;
    ColumnKind kind;
    double tolerance;
};

// A job with its key alignment computed once; immutable afterwards and safe
// to share across worker threads.
class PreparedJob {
public:
    explicit PreparedJob(JobSpec spec);

    const JobSpec& spec() const { return spec_; }
    Rows aligned_rows() const { return static_cast<Rows>(aligned_.size()); }
    const std::vector<AlignedKey>& aligned() const { return aligned_; }
    const std::vector<ComparedColumn>& compared() const { return compared_; }
    const std::vector<std::size_t>& source_keys() const { return source_keys_; }
    std::vector<std::string> render_key(const AlignedKey& entry) const;

private:
    JobSpec spec_;
    std::vector<std::size_t> source_keys_;
    std::vector<std::size_t> target_keys_;
    std::vector<ComparedColumn> compared_;
    std::vector<AlignedKey> aligned_;
};

std::vector<BatchDescriptor> partition_job(const PreparedJob& job, Rows b);

// Hands out consecutive batches whose size may change between calls.
class BatchCarver {
public:
    explicit BatchCarver(Rows total_rows) : total_(total_rows) {}

    std::optional<BatchDescriptor> next(Rows b);
    Rows remaining() const { return total_ - cursor_; }
    bool done() const { return cursor_ >= total_; }

private:
    Rows total_;
    Rows cursor_ = 0;
    std::int64_t next_id_ = 0;
};

bool cells_match(const Cell& a, const Cell& b, ColumnKind kind, double tolerance);

DiffResult diff_batch(const PreparedJob& job, const BatchDescriptor& batch);

struct BatchResult {
    BatchDescriptor batch;
    DiffResult result;
};

// Concatenates in key order; throws std::logic_error on duplicate or
// overlapping batches.
DiffResult merge_results(std::vector<BatchResult> parts);

Rows preflight_sample_size(Rows total_rows);

// Samples min(1e6, ceil(1% of |A|+|B|)) rows for bytes/row and read
// bandwidth, and times a 5e4-row comparator run per column type.
PreflightProfile preflight_profile(const PreparedJob& job);

// Writes one JSON record per verdict and a trailing summary record.
void export_verdicts(const DiffResult& result, const std::filesystem::path& path);

}  // namespace adsched
