#include "adsched/diffcore.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace adsched {

using json = nlohmann::json;

namespace {

std::string rtrim(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
    return s;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

int two_digits(std::string_view s, std::size_t at) {
    if (at + 2 > s.size() || !isdigit(s[at]) || !isdigit(s[at + 1]))
        throw DataError("malformed datetime '" + std::string(s) + "'");
    return (s[at] - '0') * 10 + (s[at + 1] - '0');
}

// ISO-8601 subset: YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z|(+|-)HH:MM]
std::int64_t parse_datetime(std::string_view s) {
    if (s.size() < 10 || s[4] != '-' || s[7] != '-')
        throw DataError("malformed datetime '" + std::string(s) + "'");
    int year = 0;
    if (!parse_number(s.substr(0, 4), year)) throw DataError("malformed datetime '" + std::string(s) + "'");
    const int month = two_digits(s, 5);
    const int day = two_digits(s, 8);
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{unsigned(month)},
                                          std::chrono::day{unsigned(day)}};
    if (!ymd.ok()) throw DataError("invalid date '" + std::string(s) + "'");
    std::int64_t seconds =
        std::chrono::sys_seconds{std::chrono::sys_days{ymd}}.time_since_epoch().count();
    std::size_t at = 10;
    if (at < s.size() && (s[at] == 'T' || s[at] == ' ')) {
        seconds += two_digits(s, at + 1) * 3600 + two_digits(s, at + 4) * 60;
        at += 6;
        if (at < s.size() && s[at] == ':') {
            seconds += two_digits(s, at + 1);
            at += 3;
        }
        if (at < s.size() && s[at] == '.') {
            ++at;
            while (at < s.size() && isdigit(s[at])) ++at;
        }
    }
    if (at < s.size()) {
        if (s[at] == 'Z') {
            ++at;
        } else if (s[at] == '+' || s[at] == '-') {
            const int sign = s[at] == '+' ? 1 : -1;
            const int offset = two_digits(s, at + 1) * 3600 + two_digits(s, at + 4) * 60;
            seconds -= sign * offset;
            at += 6;
        }
    }
    if (at != s.size()) throw DataError("malformed datetime '" + std::string(s) + "'");
    return seconds;
}

std::string format_datetime(std::int64_t epoch) {
    using namespace std::chrono;
    const sys_seconds tp{seconds{epoch}};
    const auto days = floor<std::chrono::days>(tp);
    const year_month_day ymd{days};
    const hh_mm_ss hms{tp - days};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                  int(hms.minutes().count()), int(hms.seconds().count()));
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line, std::istream& in) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    std::string current = line;
    std::size_t i = 0;
    while (true) {
        if (i == current.size()) {
            if (quoted) {
                std::string more;
                if (!std::getline(in, more)) throw DataError("unterminated quoted field");
                current += "\n" + more;
                field += '\n';
                // continue scanning the appended text
                ++i;
                continue;
            }
            break;
        }
        const char c = current[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < current.size() && current[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
        ++i;
    }
    fields.push_back(std::move(field));
    return fields;
}

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos && (s.empty() || s.back() != ' ')) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::size_t> key_indices(const Schema& schema) {
    std::vector<std::size_t> out;
    for (const auto& name : schema.key_columns) out.push_back(*schema.index_of(name));
    return out;
}

// Keeps the comparator benchmark from being optimized away.
volatile std::size_t sink_ = 0;

}  // namespace

std::optional<std::size_t> Schema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return i;
    return std::nullopt;
}

void Schema::validate() const {
    if (key_columns.empty()) throw DataError("schema declares no key columns");
    std::set<std::string> seen;
    for (const auto& c : columns) {
        if (!seen.insert(c.name).second) throw DataError("duplicate column '" + c.name + "'");
        if (c.tolerance < 0) throw DataError("negative tolerance on '" + c.name + "'");
    }
    for (const auto& k : key_columns)
        if (!index_of(k)) throw DataError("key column '" + k + "' not in schema");
}

Cell parse_cell(const std::string& raw, ColumnKind kind, const NormalizeOptions& options) {
    const std::string text = rtrim(raw);
    if (kind != ColumnKind::string && text.empty()) return std::monostate{};
    switch (kind) {
        case ColumnKind::integer: {
            std::int64_t v = 0;
            if (!parse_number(text, v)) throw DataError("not an integer: '" + raw + "'");
            return v;
        }
        case ColumnKind::floating: {
            double v = 0;
            if (!parse_number(text, v)) throw DataError("not a float: '" + raw + "'");
            return v;
        }
        case ColumnKind::string:
            return options.trim_trailing_whitespace ? text : raw;
        case ColumnKind::datetime: {
            const auto g = std::max<std::int64_t>(1, options.datetime_granularity_s);
            const auto s = parse_datetime(text);
            return s - (((s % g) + g) % g);
        }
        case ColumnKind::boolean: {
            std::string lower = text;
            std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
            if (lower == "true" || lower == "1" || lower == "yes" || lower == "t") return true;
            if (lower == "false" || lower == "0" || lower == "no" || lower == "f") return false;
            throw DataError("not a boolean: '" + raw + "'");
        }
    }
    return std::monostate{};
}

std::string render_cell(const Cell& cell, ColumnKind kind) {
    return std::visit(
        [kind](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return "";
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return kind == ColumnKind::datetime ? format_datetime(v) : std::to_string(v);
            } else if constexpr (std::is_same_v<T, double>) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.17g", v);
                return buf;
            } else if constexpr (std::is_same_v<T, bool>) {
                return v ? "true" : "false";
            } else {
                return v;
            }
        },
        cell);
}

std::size_t encoded_bytes(const Cell& cell) {
    return std::visit(
        [](const auto& v) -> std::size_t {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) return 0;
            else if constexpr (std::is_same_v<T, bool>) return 1;
            else if constexpr (std::is_same_v<T, std::string>) return v.size();
            else return 8;
        },
        cell);
}

Schema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("malformed schema " + path.string() + ": " + e.what());
    }
    Schema schema;
    for (const auto& c : doc.at("columns")) {
        ColumnSpec spec;
        spec.name = c.at("name").get<std::string>();
        spec.kind = column_kind_from_string(c.at("type").get<std::string>());
        spec.tolerance = c.value("tolerance", 0.0);
        schema.columns.push_back(spec);
    }
    schema.key_columns = doc.at("key").get<std::vector<std::string>>();
    schema.validate();
    return schema;
}

void write_schema(const Schema& schema, const std::filesystem::path& path) {
    json doc;
    doc["columns"] = json::array();
    for (const auto& c : schema.columns) {
        json col{{"name", c.name}, {"type", std::string(to_string(c.kind))}};
        if (c.tolerance > 0) col["tolerance"] = c.tolerance;
        doc["columns"].push_back(col);
    }
    doc["key"] = schema.key_columns;
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
}

std::filesystem::path schema_sidecar(const std::filesystem::path& csv) {
    return csv.string() + ".schema.json";
}

Table load_csv(const std::filesystem::path& csv, const std::filesystem::path& schema_path,
               const NormalizeOptions& options) {
    Table table;
    table.uri = csv.string();
    table.schema = load_schema(schema_path);
    std::ifstream in(csv);
    if (!in) throw DataError("cannot open " + csv.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("missing header in " + csv.string());
    const auto header = split_csv_line(line, in);
    std::vector<std::size_t> order;  // header position -> schema column
    for (const auto& name : header) {
        const auto idx = table.schema.index_of(rtrim(name));
        if (!idx) throw DataError("column '" + name + "' of " + csv.string() + " missing from schema");
        order.push_back(*idx);
    }
    if (order.size() != table.schema.columns.size())
        throw DataError("header of " + csv.string() + " does not cover the schema");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line, in);
        if (fields.size() != order.size())
            throw DataError(csv.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(order.size()) + " fields");
        std::vector<Cell> row(order.size());
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const auto& spec = table.schema.columns[order[i]];
            try {
                row[order[i]] = parse_cell(fields[i], spec.kind, options);
            } catch (const DataError& e) {
                throw DataError(csv.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_csv(const Table& table, const std::filesystem::path& csv) {
    std::ofstream out(csv);
    if (!out) throw DataError("cannot write " + csv.string());
    const auto& cols = table.schema.columns;
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << quote_csv(cols[i].name);
    out << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            out << (i ? "," : "") << quote_csv(render_cell(row[i], cols[i].kind));
        out << "\n";
    }
}

std::string_view to_string(VerdictKind kind) {
    switch (kind) {
        case VerdictKind::equal: return "equal";
        case VerdictKind::changed: return "changed";
        case VerdictKind::added: return "added";
        case VerdictKind::removed: return "removed";
    }
    return "equal";
}

VerdictKind verdict_kind_from_string(std::string_view name) {
    for (auto k : {VerdictKind::equal, VerdictKind::changed, VerdictKind::added, VerdictKind::removed})
        if (to_string(k) == name) return k;
    throw DataError("unknown verdict kind '" + std::string(name) + "'");
}

void DiffResult::add(Verdict verdict) {
    ++counts[static_cast<std::size_t>(verdict.kind)];
    if (verdict.kind == VerdictKind::changed) ++changed_per_column[*verdict.column];
    verdicts.push_back(std::move(verdict));
}

PreparedJob::PreparedJob(JobSpec spec) : spec_(std::move(spec)) {
    if (!spec_.source || !spec_.target) throw DataError("job needs both tables");
    const auto& sa = spec_.source->schema;
    const auto& sb = spec_.target->schema;
    sa.validate();
    sb.validate();
    source_keys_ = key_indices(sa);
    target_keys_ = key_indices(sb);
    if (source_keys_.size() != target_keys_.size())
        throw DataError("source and target declare different key arity");
    for (std::size_t i = 0; i < source_keys_.size(); ++i)
        if (sa.columns[source_keys_[i]].kind != sb.columns[target_keys_[i]].kind)
            throw DataError("key column types differ");

    auto mapping = spec_.column_mapping;
    if (mapping.empty()) {
        for (const auto& c : sa.columns) {
            const bool is_key = std::find(sa.key_columns.begin(), sa.key_columns.end(), c.name) !=
                                sa.key_columns.end();
            if (!is_key && sb.index_of(c.name)) mapping.push_back({c.name, c.name});
        }
    }
    std::set<std::string> used_targets;
    for (const auto& pair : mapping) {
        const auto si = sa.index_of(pair.source);
        const auto ti = sb.index_of(pair.target);
        if (!si || !ti) throw DataError("mapping " + pair.source + "->" + pair.target + " names an unknown column");
        if (!used_targets.insert(pair.target).second)
            throw DataError("mapping is not one-to-one at target '" + pair.target + "'");
        if (sa.columns[*si].kind != sb.columns[*ti].kind)
            throw DataError("mapped columns '" + pair.source + "' and '" + pair.target + "' differ in type");
        double tol = sa.columns[*si].tolerance;
        if (auto it = spec_.tolerances.find(pair.source); it != spec_.tolerances.end()) tol = it->second;
        compared_.push_back({*si, *ti, pair.source, sa.columns[*si].kind, tol});
    }

    const auto sorted_rows = [](const Table& t, const std::vector<std::size_t>& keys) {
        std::vector<std::size_t> idx(t.rows.size());
        std::iota(idx.begin(), idx.end(), 0);
        const auto less = [&](std::size_t x, std::size_t y) {
            for (auto k : keys) {
                if (t.rows[x][k] < t.rows[y][k]) return true;
                if (t.rows[y][k] < t.rows[x][k]) return false;
            }
            return false;
        };
        std::sort(idx.begin(), idx.end(), less);
        for (std::size_t i = 1; i < idx.size(); ++i)
            if (!less(idx[i - 1], idx[i])) throw DataError("duplicate key in " + (t.uri.empty() ? "table" : t.uri));
        return idx;
    };
    const auto a = sorted_rows(*spec_.source, source_keys_);
    const auto b = sorted_rows(*spec_.target, target_keys_);
    const auto compare = [&](std::size_t ra, std::size_t rb) {
        for (std::size_t i = 0; i < source_keys_.size(); ++i) {
            const auto& x = spec_.source->rows[ra][source_keys_[i]];
            const auto& y = spec_.target->rows[rb][target_keys_[i]];
            if (x < y) return -1;
            if (y < x) return 1;
        }
        return 0;
    };
    aligned_.reserve(std::max(a.size(), b.size()));
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && compare(a[i], b[j]) < 0)) {
            aligned_.push_back({static_cast<std::int64_t>(a[i++]), -1});
        } else if (i == a.size() || compare(a[i], b[j]) > 0) {
            aligned_.push_back({-1, static_cast<std::int64_t>(b[j++])});
        } else {
            aligned_.push_back({static_cast<std::int64_t>(a[i++]), static_cast<std::int64_t>(b[j++])});
        }
    }
}

std::vector<std::string> PreparedJob::render_key(const AlignedKey& entry) const {
    std::vector<std::string> key;
    const bool from_source = entry.source_row >= 0;
    const Table& t = from_source ? *spec_.source : *spec_.target;
    const auto& keys = from_source ? source_keys_ : target_keys_;
    const auto& row = t.rows[static_cast<std::size_t>(from_source ? entry.source_row : entry.target_row)];
    for (auto k : keys) key.push_back(render_cell(row[k], t.schema.columns[k].kind));
    return key;
}

std::vector<BatchDescriptor> partition_job(const PreparedJob& job, Rows b) {
    if (b < 1) throw std::invalid_argument("batch size must be >= 1");
    BatchCarver carver(job.aligned_rows());
    std::vector<BatchDescriptor> out;
    while (auto next = carver.next(b)) out.push_back(*next);
    return out;
}

std::optional<BatchDescriptor> BatchCarver::next(Rows b) {
    if (b < 1) throw std::invalid_argument("batch size must be >= 1");
    if (done()) return std::nullopt;
    BatchDescriptor d;
    d.batch_id = next_id_++;
    d.begin = cursor_;
    d.end = std::min(total_, cursor_ + b);
    d.row_budget = b;
    cursor_ = d.end;
    return d;
}

bool cells_match(const Cell& a, const Cell& b, ColumnKind kind, double tolerance) {
    if (a.index() != b.index()) return false;
    if (kind == ColumnKind::floating && std::holds_alternative<double>(a)) {
        const double x = std::get<double>(a);
        const double y = std::get<double>(b);
        if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
        return std::abs(x - y) <= tolerance;
    }
    return a == b;
}

DiffResult diff_batch(const PreparedJob& job, const BatchDescriptor& batch) {
    if (batch.begin < 0 || batch.end > job.aligned_rows() || batch.begin > batch.end)
        throw std::out_of_range("batch outside the aligned key space");
    const auto& src = *job.spec().source;
    const auto& dst = *job.spec().target;
    DiffResult result;
    for (Rows pos = batch.begin; pos < batch.end; ++pos) {
        const auto& entry = job.aligned()[static_cast<std::size_t>(pos)];
        auto key = job.render_key(entry);
        if (entry.target_row < 0) {
            result.add({std::move(key), std::nullopt, VerdictKind::removed, std::nullopt, std::nullopt});
            continue;
        }
        if (entry.source_row < 0) {
            result.add({std::move(key), std::nullopt, VerdictKind::added, std::nullopt, std::nullopt});
            continue;
        }
        const auto& ra = src.rows[static_cast<std::size_t>(entry.source_row)];
        const auto& rb = dst.rows[static_cast<std::size_t>(entry.target_row)];
        for (const auto& col : job.compared()) {
            const auto& x = ra[col.source_index];
            const auto& y = rb[col.target_index];
            if (cells_match(x, y, col.kind, col.tolerance)) {
                result.add({key, col.name, VerdictKind::equal, std::nullopt, std::nullopt});
            } else {
                result.add({key, col.name, VerdictKind::changed, render_cell(x, col.kind),
                            render_cell(y, col.kind)});
            }
        }
    }
    return result;
}

DiffResult merge_results(std::vector<BatchResult> parts) {
    std::sort(parts.begin(), parts.end(),
              [](const BatchResult& a, const BatchResult& b) { return a.batch.begin < b.batch.begin; });
    std::set<std::int64_t> ids;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!ids.insert(parts[i].batch.batch_id).second)
            throw std::logic_error("duplicate batch id " + std::to_string(parts[i].batch.batch_id));
        if (i > 0 && parts[i].batch.begin < parts[i - 1].batch.end)
            throw std::logic_error("overlapping batches in merge");
    }
    DiffResult merged;
    std::size_t total = 0;
    for (const auto& p : parts) total += p.result.verdicts.size();
    merged.verdicts.reserve(total);
    for (auto& p : parts) {
        for (std::size_t k = 0; k < merged.counts.size(); ++k) merged.counts[k] += p.result.counts[k];
        for (const auto& [col, n] : p.result.changed_per_column) merged.changed_per_column[col] += n;
        std::move(p.result.verdicts.begin(), p.result.verdicts.end(), std::back_inserter(merged.verdicts));
    }
    return merged;
}

Rows preflight_sample_size(Rows total_rows) {
    const Rows one_percent = (total_rows + 99) / 100;
    return std::max<Rows>(1, std::min<Rows>(1'000'000, one_percent));
}

PreflightProfile preflight_profile(const PreparedJob& job) {
    const auto& src = *job.spec().source;
    const auto& dst = *job.spec().target;
    const Rows total = src.row_count() + dst.row_count();
    if (total == 0) throw DataError("empty job: both tables have no rows");

    PreflightProfile profile;
    profile.sample_rows = preflight_sample_size(total);

    // Columns that count toward an aligned row's width on each side.
    std::vector<std::size_t> src_cols = job.source_keys();
    std::vector<std::size_t> dst_cols;
    for (const auto& name : dst.schema.key_columns) dst_cols.push_back(*dst.schema.index_of(name));
    for (const auto& c : job.compared()) {
        src_cols.push_back(c.source_index);
        dst_cols.push_back(c.target_index);
    }

    const Rows from_src = std::min<Rows>(src.row_count(),
        (profile.sample_rows * src.row_count() + total - 1) / total);
    const Rows from_dst = std::min<Rows>(dst.row_count(), std::max<Rows>(0, profile.sample_rows - from_src));
    double bytes = 0;
    Rows sampled = 0;
    const auto start = std::chrono::steady_clock::now();
    const auto take = [&](const Table& t, const std::vector<std::size_t>& cols, Rows n) {
        if (n <= 0) return;
        const Rows stride = std::max<Rows>(1, t.row_count() / n);
        for (Rows i = 0, r = 0; i < n && r < t.row_count(); ++i, r += stride) {
            for (auto c : cols) bytes += static_cast<double>(encoded_bytes(t.rows[static_cast<std::size_t>(r)][c]));
            ++sampled;
        }
    };
    take(src, src_cols, from_src);
    take(dst, dst_cols, from_dst);
    profile.bytes_per_row = sampled > 0 ? std::max(1.0, bytes / static_cast<double>(sampled)) : 1.0;

    // Effective read rate: raw bytes pulled from the source files for the sample.
    double read_bytes = 0;
    for (const auto* t : {&src, &dst}) {
        if (t->uri.empty()) continue;
        std::ifstream in(t->uri, std::ios::binary);
        std::string line;
        const Rows want = (t == &src ? from_src : from_dst) + 1;
        for (Rows i = 0; i < want && std::getline(in, line); ++i) read_bytes += static_cast<double>(line.size() + 1);
    }
    if (read_bytes == 0) read_bytes = bytes;
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    profile.read_bandwidth = read_bytes / std::max(elapsed, 1e-7);

    // Comparator microbenchmark per column type on up to 5e4 aligned rows.
    constexpr Rows kBenchRows = 50'000;
    std::vector<const AlignedKey*> paired;
    for (const auto& e : job.aligned()) {
        if (e.source_row >= 0 && e.target_row >= 0) paired.push_back(&e);
        if (static_cast<Rows>(paired.size()) >= kBenchRows) break;
    }
    std::map<ColumnKind, std::vector<const ComparedColumn*>> by_kind;
    for (const auto& c : job.compared()) by_kind[c.kind].push_back(&c);
    for (const auto& [kind, cols] : by_kind) {
        const auto t0 = std::chrono::steady_clock::now();
        std::size_t matches = 0;
        Rows rows = 0;
        if (!paired.empty()) {
            for (const auto* e : paired) {
                const auto& ra = src.rows[static_cast<std::size_t>(e->source_row)];
                const auto& rb = dst.rows[static_cast<std::size_t>(e->target_row)];
                for (const auto* c : cols)
                    matches += cells_match(ra[c->source_index], rb[c->target_index], kind, c->tolerance);
                ++rows;
            }
        } else {
            const Table& t = src.row_count() > 0 ? src : dst;
            const Rows n = std::min<Rows>(kBenchRows, t.row_count());
            for (Rows r = 0; r < n; ++r) {
                const auto& row = t.rows[static_cast<std::size_t>(r)];
                for (const auto* c : cols) {
                    const auto idx = &t == &src ? c->source_index : c->target_index;
                    matches += cells_match(row[idx], row[idx], kind, c->tolerance);
                }
                ++rows;
            }
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double per = secs / static_cast<double>(std::max<Rows>(1, rows) * static_cast<Rows>(cols.size()));
        sink_ = sink_ + matches;
        profile.delta_cost_per_type[kind] = std::max(per, 1e-10);
    }
    return profile;
}

void export_verdicts(const DiffResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& v : result.verdicts) {
        json rec{{"key", v.row_key}, {"kind", std::string(to_string(v.kind))}};
        rec["column"] = v.column ? json(*v.column) : json(nullptr);
        if (v.old_value) rec["old"] = *v.old_value;
        if (v.new_value) rec["new"] = *v.new_value;
        out << rec.dump() << "\n";
    }
    json summary;
    for (auto k : {VerdictKind::equal, VerdictKind::changed, VerdictKind::added, VerdictKind::removed})
        summary[std::string(to_string(k))] = result.count(k);
    summary["changed_per_column"] = result.changed_per_column;
    out << json{{"summary", summary}}.dump() << "\n";
}

}  // namespace adsched
