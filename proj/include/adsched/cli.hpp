#pragma once

// Command implementations behind the adsched tool. Each command takes parsed
// options plus output streams and returns a process exit code, so tests can
// drive them without spawning processes.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adsched/bench.hpp"

namespace adsched::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kInfeasible = 3, kInternal = 4 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// "8e9", "512M", "16GiB"; suffixes are powers of 1024.
double parse_bytes(const std::string& text);

// Detected cores and 80% of physical memory.
ResourceCaps detected_caps();

// Command-line values; unset fields leave the file (or environment) alone.
struct Overrides {
    std::optional<std::string> caps_mem;
    std::optional<int> caps_cpu;
    std::optional<std::string> policy;
    std::optional<Rows> b;
    std::optional<int> k;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;  // auto, inmem, taskpool, sim
    std::optional<std::filesystem::path> out_dir;
};

// One job. Paths in the file are resolved against the file's directory.
struct JobConfig {
    std::string name = "job";
    std::filesystem::path source;
    std::filesystem::path target;
    std::filesystem::path source_schema;  // empty: <csv>.schema.json
    std::filesystem::path target_schema;
    std::vector<ColumnPair> mapping;
    std::map<std::string, double> tolerances;
    NormalizeOptions normalize;
    std::filesystem::path profile;  // saved profile to reuse instead of sampling

    ResourceCaps caps;
    PolicyParams policy;
    PolicyChoice scheduler;
    int min_waves = 4;
    GateInputs gate;  // rows filled from the tables
    std::string backend = "auto";
    std::uint64_t seed = 1;
    SimModel sim;
    std::filesystem::path out_dir = "adsched-out";
};

nlohmann::json to_json(const SimModel& sim);
SimModel sim_from_json(const nlohmann::json& j, SimModel base = {});
nlohmann::json to_json(const PreflightProfile& profile);
PreflightProfile profile_from_json(const nlohmann::json& j);

// Precedence: built-in defaults, then the file, then ADSCHED_CAPS_MEM /
// ADSCHED_CAPS_CPU, then flags. Throws UsageError on bad values and
// DataError when the file cannot be read.
JobConfig load_job_config(const std::filesystem::path& path, const Overrides& flags = {});
// The effective configuration, echoed into log headers.
nlohmann::json to_json(const JobConfig& config);

int cmd_profile(const JobConfig& config, std::ostream& out, std::ostream& err);
int cmd_run(const JobConfig& config, std::ostream& out, std::ostream& err);

// A scenario matrix document plus run settings.
struct BenchConfig {
    ScenarioRequest request;
    int repetitions = 3;
    bool fixed_grid = true;
    bool heuristic = true;
    std::string backend = "sim";
    ResourceCaps caps = desk_caps();
    SimModel sim = desk_noisy_sim();
    ExecOptions exec;
    std::filesystem::path out_dir = "adsched-bench";
};

BenchConfig load_bench_config(const std::filesystem::path& path, const Overrides& flags = {});
int cmd_bench(const BenchConfig& config, std::ostream& out, std::ostream& err);

struct AnalyzeOptions {
    std::vector<std::filesystem::path> paths;  // files or directories of *.jsonl
    ReadMode mode = ReadMode::strict;
    std::filesystem::path out_dir;  // empty: stdout only
};

// Summaries and tables recomputed from logs alone.
int cmd_analyze(const AnalyzeOptions& options, std::ostream& out, std::ostream& err);

}  // namespace adsched::cli
