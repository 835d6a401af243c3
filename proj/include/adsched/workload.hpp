#pragma once

// Synthetic table pairs with an exact, counted set of injected differences,
// and the scenario cross-product the benchmark suite runs over.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "adsched/diffcore.hpp"
#include "adsched/model.hpp"
#include "adsched/types.hpp"

namespace adsched {

struct ColumnProfile {
    std::string name;
    ColumnKind kind = ColumnKind::string;
    double mean_width = 24.0;  // strings only: geometric length on {1, 2, ...}
};

struct WorkloadSpec {
    Rows rows_per_side = 1000;
    std::vector<ColumnProfile> columns = default_columns();
    ColumnKind key_kind = ColumnKind::integer;  // integer or string
    double change_rate = 0.0;
    double add_rate = 0.0;
    double remove_rate = 0.0;
    double float_tolerance = 1e-9;
    std::uint64_t seed = 1;

    // 2 integer, 2 float, 3 string, 1 datetime, 1 boolean.
    static std::vector<ColumnProfile> default_columns();

    Rows changes() const;
    Rows additions() const;
    Rows removals() const;
    // Throws std::invalid_argument for rates outside [0,1] or more edits
    // than shared keys.
    void validate() const;
};

struct GeneratedPair {
    TableHandle source;
    TableHandle target;
    DiffResult ground_truth;  // in key order, one verdict per compared cell
};

GeneratedPair generate_pair(const WorkloadSpec& spec);

struct PairFiles {
    std::filesystem::path source;
    std::filesystem::path target;
};

// `<stem>_a.csv`, `<stem>_b.csv` and their schema sidecars.
PairFiles write_pair(const GeneratedPair& pair, const std::filesystem::path& dir, const std::string& stem);

struct ScenarioRequest {
    WorkloadSpec base;
    std::vector<Rows> sizes{10'000, 50'000, 100'000, 200'000};
    std::vector<Rows> reference_sizes{1'000'000, 5'000'000, 10'000'000, 20'000'000};
    std::vector<Rows> b_grid{25'000, 50'000, 100'000, 250'000};  // at reference scale
    std::vector<int> k_grid{4, 8, 16};
    int cpu_cap = 16;
    PolicyParams policy;
    std::vector<double> eta;
    std::vector<double> gamma;
    std::vector<double> kappa;
    std::vector<int> hysteresis_m;
};

struct Scenario {
    std::string name;
    WorkloadSpec workload;
    PolicyParams policy;
    Rows reference_rows = 0;
    std::string axis = "baseline";  // or eta, gamma, kappa, m
    double axis_value = 0.0;
};

struct ScenarioMatrix {
    std::vector<Scenario> scenarios;
    std::vector<BatchConfig> fixed_grid;
    double scale = 1.0;  // desk rows / reference rows
};

// One baseline scenario per size, one per ablation value per size, and the
// fixed (b,k) grid scaled to desk size with k clipped to the core count.
ScenarioMatrix scenario_matrix(const ScenarioRequest& request);

// Declarative documents; absent keys keep their defaults.
nlohmann::json to_json(const PolicyParams& policy);
PolicyParams policy_from_json(const nlohmann::json& j, PolicyParams base = {});
nlohmann::json to_json(const WorkloadSpec& spec);
WorkloadSpec workload_from_json(const nlohmann::json& j, WorkloadSpec base = {});
ScenarioRequest scenario_request_from_json(const nlohmann::json& j);

}  // namespace adsched
