#include "adsched/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace adsched {

using json = nlohmann::json;

namespace {

constexpr std::int64_t kEpoch2020 = 1'577'836'800;
constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

Rows floor_count(double rate, Rows n) {
    return static_cast<Rows>(std::floor(rate * static_cast<double>(n) + 1e-9));
}

Cell key_cell(ColumnKind kind, std::int64_t value) {
    if (kind == ColumnKind::integer) return value;
    char buf[24];
    std::snprintf(buf, sizeof buf, "k%011lld", static_cast<long long>(value));
    return std::string(buf);
}

class Generator {
public:
    explicit Generator(std::uint64_t seed) : rng_(seed) {}

    Cell value(const ColumnProfile& col) {
        switch (col.kind) {
            case ColumnKind::integer:
                return std::uniform_int_distribution<std::int64_t>(-1'000'000, 1'000'000)(rng_);
            case ColumnKind::floating:
                return std::uniform_real_distribution<double>(-1000.0, 1000.0)(rng_);
            case ColumnKind::datetime:
                return kEpoch2020 + std::uniform_int_distribution<std::int64_t>(0, 5 * 365 * 86400)(rng_);
            case ColumnKind::boolean:
                return std::bernoulli_distribution(0.5)(rng_);
            case ColumnKind::string: {
                const double p = 1.0 / std::max(1.0, col.mean_width);
                const auto len = 1 + std::geometric_distribution<int>(p)(rng_);
                std::string s(static_cast<std::size_t>(len), 'a');
                for (auto& c : s) c = kAlphabet[pick(kAlphabet.size())];
                return s;
            }
        }
        return std::monostate{};
    }

    // A value guaranteed to compare unequal to `cell` under any tolerance below 1.
    Cell edit(const Cell& cell, ColumnKind kind) {
        switch (kind) {
            case ColumnKind::integer:
                return std::get<std::int64_t>(cell) + 1 + static_cast<std::int64_t>(pick(1000));
            case ColumnKind::floating:
                return std::get<double>(cell) + 1.0 + std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
            case ColumnKind::datetime:
                return std::get<std::int64_t>(cell) + 1 + static_cast<std::int64_t>(pick(86400));
            case ColumnKind::boolean:
                return !std::get<bool>(cell);
            case ColumnKind::string: {
                std::string s = std::get<std::string>(cell);
                const auto at = kAlphabet.find(s[0]);
                s[0] = kAlphabet[(at + 1 + pick(kAlphabet.size() - 1)) % kAlphabet.size()];
                return s;
            }
        }
        return cell;
    }

    std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

    // `count` distinct values from `pool`, in pool order.
    std::vector<std::int64_t> choose(std::vector<std::int64_t> pool, Rows count) {
        for (Rows i = 0; i < count; ++i) {
            const auto j = static_cast<std::size_t>(i) + pick(pool.size() - static_cast<std::size_t>(i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(count));
        std::sort(pool.begin(), pool.end());
        return pool;
    }

    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace

std::vector<ColumnProfile> WorkloadSpec::default_columns() {
    return {{"i1", ColumnKind::integer, 0},  {"i2", ColumnKind::integer, 0},  {"f1", ColumnKind::floating, 0},
            {"f2", ColumnKind::floating, 0}, {"s1", ColumnKind::string, 24}, {"s2", ColumnKind::string, 24},
            {"s3", ColumnKind::string, 24},  {"ts", ColumnKind::datetime, 0}, {"flag", ColumnKind::boolean, 0}};
}

Rows WorkloadSpec::changes() const { return floor_count(change_rate, rows_per_side); }
Rows WorkloadSpec::additions() const { return floor_count(add_rate, rows_per_side); }
Rows WorkloadSpec::removals() const { return floor_count(remove_rate, rows_per_side); }

void WorkloadSpec::validate() const {
    if (rows_per_side < 0) throw std::invalid_argument("rows_per_side must be >= 0");
    for (double r : {change_rate, add_rate, remove_rate})
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("rates must lie in [0, 1]");
    if (key_kind != ColumnKind::integer && key_kind != ColumnKind::string)
        throw std::invalid_argument("key must be integer or string");
    if (changes() > 0 && columns.empty()) throw std::invalid_argument("changes need at least one value column");
    if (changes() > rows_per_side - removals())
        throw std::invalid_argument("change_rate exceeds the keys left after removal");
    std::set<std::string> names{"id"};
    for (const auto& c : columns)
        if (!names.insert(c.name).second) throw std::invalid_argument("duplicate column " + c.name);
}

GeneratedPair generate_pair(const WorkloadSpec& spec) {
    spec.validate();
    const Rows n = spec.rows_per_side;
    Generator gen(spec.seed);

    Schema schema;
    schema.columns.push_back({"id", spec.key_kind, 0.0});
    for (const auto& c : spec.columns)
        schema.columns.push_back({c.name, c.kind, c.kind == ColumnKind::floating ? spec.float_tolerance : 0.0});
    schema.key_columns = {"id"};

    // Source keys are even, inserted keys odd, so insertions interleave.
    auto a = std::make_shared<Table>();
    a->schema = schema;
    a->rows.reserve(static_cast<std::size_t>(n));
    for (Rows i = 0; i < n; ++i) {
        std::vector<Cell> row{key_cell(spec.key_kind, 2 * i)};
        for (const auto& c : spec.columns) row.push_back(gen.value(c));
        a->rows.push_back(std::move(row));
    }

    std::vector<std::int64_t> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    const auto removed = gen.choose(all, spec.removals());
    std::vector<std::int64_t> shared;
    std::set_difference(all.begin(), all.end(), removed.begin(), removed.end(), std::back_inserter(shared));
    const auto changed = gen.choose(shared, spec.changes());
    const auto inserted = gen.choose(all, spec.additions());

    std::vector<std::size_t> edit_column(static_cast<std::size_t>(n), 0);
    auto b = std::make_shared<Table>();
    b->schema = schema;
    for (auto i : shared) b->rows.push_back(a->rows[static_cast<std::size_t>(i)]);
    for (auto i : changed) {
        const auto pos = static_cast<std::size_t>(std::lower_bound(shared.begin(), shared.end(), i) - shared.begin());
        const auto col = 1 + gen.pick(spec.columns.size());
        edit_column[static_cast<std::size_t>(i)] = col;
        auto& cell = b->rows[pos][col];
        cell = gen.edit(cell, schema.columns[col].kind);
    }
    const auto edited_rows = b->rows;
    for (auto j : inserted) {
        std::vector<Cell> row{key_cell(spec.key_kind, 2 * j + 1)};
        for (const auto& c : spec.columns) row.push_back(gen.value(c));
        b->rows.push_back(std::move(row));
    }

    // Ground truth in key order, built from the injection record alone.
    GeneratedPair out;
    auto& truth = out.ground_truth;
    std::vector<char> is_removed(static_cast<std::size_t>(n), 0);
    for (auto i : removed) is_removed[static_cast<std::size_t>(i)] = 1;
    std::vector<char> is_inserted(static_cast<std::size_t>(n), 0);
    for (auto j : inserted) is_inserted[static_cast<std::size_t>(j)] = 1;
    std::size_t shared_pos = 0;
    const auto render_key = [&](std::int64_t v) {
        return std::vector<std::string>{render_cell(key_cell(spec.key_kind, v), spec.key_kind)};
    };
    for (Rows i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (is_removed[ui]) {
            truth.add({render_key(2 * i), std::nullopt, VerdictKind::removed, std::nullopt, std::nullopt});
        } else {
            const auto& before = a->rows[ui];
            const auto& after = edited_rows[shared_pos++];
            for (std::size_t c = 1; c < schema.columns.size(); ++c) {
                const auto& col = schema.columns[c];
                if (edit_column[ui] == c)
                    truth.add({render_key(2 * i), col.name, VerdictKind::changed, render_cell(before[c], col.kind),
                               render_cell(after[c], col.kind)});
                else
                    truth.add({render_key(2 * i), col.name, VerdictKind::equal, std::nullopt, std::nullopt});
            }
        }
        if (is_inserted[ui])
            truth.add({render_key(2 * i + 1), std::nullopt, VerdictKind::added, std::nullopt, std::nullopt});
    }

    std::shuffle(b->rows.begin(), b->rows.end(), gen.rng());
    out.source = std::move(a);
    out.target = std::move(b);
    return out;
}

PairFiles write_pair(const GeneratedPair& pair, const std::filesystem::path& dir, const std::string& stem) {
    std::filesystem::create_directories(dir);
    PairFiles files{dir / (stem + "_a.csv"), dir / (stem + "_b.csv")};
    write_csv(*pair.source, files.source);
    write_schema(pair.source->schema, schema_sidecar(files.source));
    write_csv(*pair.target, files.target);
    write_schema(pair.target->schema, schema_sidecar(files.target));
    return files;
}

ScenarioMatrix scenario_matrix(const ScenarioRequest& request) {
    request.base.validate();
    ScenarioMatrix m;
    if (!request.sizes.empty() && request.reference_sizes.size() == request.sizes.size())
        m.scale = static_cast<double>(request.sizes[0]) / static_cast<double>(request.reference_sizes[0]);

    for (Rows b : request.b_grid) {
        const Rows scaled = std::max<Rows>(1, std::llround(static_cast<double>(b) * m.scale));
        for (int k : request.k_grid) {
            const BatchConfig c{scaled, std::clamp(k, 1, std::max(1, request.cpu_cap))};
            if (std::find(m.fixed_grid.begin(), m.fixed_grid.end(), c) == m.fixed_grid.end())
                m.fixed_grid.push_back(c);
        }
    }

    for (std::size_t i = 0; i < request.sizes.size(); ++i) {
        Scenario base;
        base.workload = request.base;
        base.workload.rows_per_side = request.sizes[i];
        base.workload.seed = request.base.seed + i;
        base.policy = request.policy;
        base.reference_rows = i < request.reference_sizes.size() ? request.reference_sizes[i] : request.sizes[i];
        base.name = "n" + std::to_string(request.sizes[i]);
        m.scenarios.push_back(base);

        const auto vary = [&](const char* axis, const auto& values, auto set) {
            for (auto v : values) {
                Scenario s = base;
                set(s.policy, v);
                s.policy.validate();
                s.axis = axis;
                s.axis_value = static_cast<double>(v);
                char buf[32];
                std::snprintf(buf, sizeof buf, "%g", s.axis_value);
                s.name = base.name + "-" + axis + buf;
                m.scenarios.push_back(std::move(s));
            }
        };
        vary("eta", request.eta, [](PolicyParams& p, double v) { p.eta = v; });
        vary("gamma", request.gamma, [](PolicyParams& p, double v) { p.gamma = v; });
        vary("kappa", request.kappa, [](PolicyParams& p, double v) { p.kappa = v; });
        vary("m", request.hysteresis_m, [](PolicyParams& p, int v) { p.hysteresis_m = v; });
    }
    return m;
}

json to_json(const PolicyParams& p) {
    return json{{"kappa", p.kappa},
                {"eta", p.eta},
                {"gamma", p.gamma},
                {"tau", p.tau},
                {"hysteresis_m", p.hysteresis_m},
                {"rho_ewma", p.rho_ewma},
                {"rho_star", p.rho_star},
                {"lambda_b", p.lambda_b},
                {"lambda_k", p.lambda_k},
                {"eps", p.eps},
                {"alpha_cov", p.alpha_cov},
                {"b_min", p.b_min},
                {"k_min", p.k_min},
                {"b_step_min", p.b_step_min},
                {"residual_window", p.residual_window},
                {"percentile_window", p.percentile_window},
                {"delta_m_prior", p.delta_m_prior},
                {"delta_m_min_samples", p.delta_m_min_samples}};
}

PolicyParams policy_from_json(const json& j, PolicyParams p) {
    const auto set = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    set("kappa", p.kappa);
    set("eta", p.eta);
    set("gamma", p.gamma);
    set("tau", p.tau);
    set("hysteresis_m", p.hysteresis_m);
    set("rho_ewma", p.rho_ewma);
    set("rho_star", p.rho_star);
    set("lambda_b", p.lambda_b);
    set("lambda_k", p.lambda_k);
    set("eps", p.eps);
    set("alpha_cov", p.alpha_cov);
    set("b_min", p.b_min);
    set("k_min", p.k_min);
    set("b_step_min", p.b_step_min);
    set("residual_window", p.residual_window);
    set("percentile_window", p.percentile_window);
    set("delta_m_prior", p.delta_m_prior);
    set("delta_m_min_samples", p.delta_m_min_samples);
    p.validate();
    return p;
}

json to_json(const WorkloadSpec& s) {
    json cols = json::array();
    for (const auto& c : s.columns)
        cols.push_back({{"name", c.name}, {"type", std::string(to_string(c.kind))}, {"mean_width", c.mean_width}});
    return json{{"rows_per_side", s.rows_per_side},
                {"columns", cols},
                {"key_type", std::string(to_string(s.key_kind))},
                {"change_rate", s.change_rate},
                {"add_rate", s.add_rate},
                {"remove_rate", s.remove_rate},
                {"float_tolerance", s.float_tolerance},
                {"seed", s.seed}};
}

WorkloadSpec workload_from_json(const json& j, WorkloadSpec s) {
    if (j.contains("rows_per_side")) s.rows_per_side = j.at("rows_per_side").get<Rows>();
    if (j.contains("columns")) {
        s.columns.clear();
        for (const auto& c : j.at("columns"))
            s.columns.push_back({c.at("name").get<std::string>(),
                                 column_kind_from_string(c.at("type").get<std::string>()),
                                 c.value("mean_width", 24.0)});
    }
    if (j.contains("key_type")) s.key_kind = column_kind_from_string(j.at("key_type").get<std::string>());
    s.change_rate = j.value("change_rate", s.change_rate);
    s.add_rate = j.value("add_rate", s.add_rate);
    s.remove_rate = j.value("remove_rate", s.remove_rate);
    s.float_tolerance = j.value("float_tolerance", s.float_tolerance);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

ScenarioRequest scenario_request_from_json(const json& j) {
    ScenarioRequest r;
    if (j.contains("workload")) r.base = workload_from_json(j.at("workload"));
    if (j.contains("policy")) r.policy = policy_from_json(j.at("policy"));
    r.sizes = j.value("sizes", r.sizes);
    r.reference_sizes = j.value("reference_sizes", r.reference_sizes);
    r.b_grid = j.value("b_grid", r.b_grid);
    r.k_grid = j.value("k_grid", r.k_grid);
    r.cpu_cap = j.value("cpu_cap", r.cpu_cap);
    if (j.contains("ablations")) {
        const auto& a = j.at("ablations");
        r.eta = a.value("eta", r.eta);
        r.gamma = a.value("gamma", r.gamma);
        r.kappa = a.value("kappa", r.kappa);
        r.hysteresis_m = a.value("m", r.hysteresis_m);
    }
    return r;
}

}  // namespace adsched
