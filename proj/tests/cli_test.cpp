#include "adsched/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

using namespace adsched;
using namespace adsched::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("adsched_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// A generated pair on disk plus a job config pointing at it.
struct Fixture {
    fs::path dir;
    fs::path config;
    GeneratedPair pair;
};

Fixture make_job(const std::string& name, WorkloadSpec spec, const nlohmann::json& extra = nlohmann::json::object()) {
    Fixture f;
    f.dir = fresh_dir(name);
    f.pair = generate_pair(spec);
    const auto files = write_pair(f.pair, f.dir, "pair");
    nlohmann::json cfg{{"source", files.source.filename().string()}, {"target", files.target.filename().string()},
                       {"caps", {{"mem", "64G"}, {"cpu", 2}}}};
    cfg.update(extra);
    f.config = f.dir / "job.json";
    spit(f.config, cfg.dump(2));
    return f;
}

WorkloadSpec tiny(Rows n = 300) {
    WorkloadSpec s;
    s.rows_per_side = n;
    s.change_rate = 0.1;
    s.add_rate = 0.05;
    s.remove_rate = 0.05;
    return s;
}

struct Ran {
    int code;
    std::string out;
    std::string err;
};

Ran run(const JobConfig& c) {
    std::ostringstream out, err;
    const int code = cmd_run(c, out, err);
    return {code, out.str(), err.str()};
}

Ran analyze(std::vector<fs::path> paths, ReadMode mode = ReadMode::strict, fs::path out_dir = {}) {
    std::ostringstream out, err;
    const int code = cmd_analyze({std::move(paths), mode, std::move(out_dir)}, out, err);
    return {code, out.str(), err.str()};
}

std::string section_after(const std::string& text, const std::string& marker) {
    const auto at = text.find(marker);
    return at == std::string::npos ? std::string() : text.substr(at + marker.size());
}

}  // namespace

TEST(Cli, ParseBytes) {
    EXPECT_DOUBLE_EQ(parse_bytes("8e9"), 8e9);
    EXPECT_DOUBLE_EQ(parse_bytes("512M"), 512.0 * 1024 * 1024);
    EXPECT_DOUBLE_EQ(parse_bytes("2GiB"), 2.0 * 1024 * 1024 * 1024);
    EXPECT_DOUBLE_EQ(parse_bytes("4kb"), 4096.0);
    EXPECT_THROW(parse_bytes("lots"), UsageError);
    EXPECT_THROW(parse_bytes("3X"), UsageError);
    EXPECT_THROW(parse_bytes("-1G"), UsageError);
}

TEST(Cli, MissingConfigNamesThePath) {
    const auto dir = fresh_dir("missing");
    EXPECT_THROW(load_job_config(dir / "nope.json"), DataError);
    try {
        load_job_config(dir / "nope.json");
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("nope.json"), std::string::npos);
    }
}

TEST(Cli, MissingDataFileExitsNonzeroWithPath) {
    const auto dir = fresh_dir("missing_csv");
    spit(dir / "job.json", R"({"source": "absent_a.csv", "target": "absent_b.csv"})");
    const auto c = load_job_config(dir / "job.json");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_profile(c, out, err), kData);
    EXPECT_NE(err.str().find("absent_a.csv"), std::string::npos) << err.str();
}

TEST(Cli, ProfileTinyJobWritesReusableProfile) {
    auto f = make_job("profile", tiny());
    const auto c = load_job_config(f.config);
    std::ostringstream out, err;
    ASSERT_EQ(cmd_profile(c, out, err), kOk) << err.str();
    EXPECT_NE(out.str().find("bytes/row"), std::string::npos);
    const auto saved = profile_from_json(nlohmann::json::parse(slurp(c.out_dir / "profile.json")));
    EXPECT_GT(saved.bytes_per_row, 0.0);

    auto reuse = c;
    reuse.profile = c.out_dir / "profile.json";
    EXPECT_EQ(run(reuse).code, kOk);
}

TEST(Cli, SixteenBytePerRowJob) {
    WorkloadSpec s;
    s.rows_per_side = 5000;
    s.columns = {{"v", ColumnKind::integer, 8.0}};
    auto f = make_job("w16", s);
    std::ostringstream out, err;
    ASSERT_EQ(cmd_profile(load_job_config(f.config), out, err), kOk) << err.str();
    std::smatch m;
    const std::string text = out.str();
    ASSERT_TRUE(std::regex_search(text, m, std::regex(R"(bytes/row \(W\): ([0-9.eE+-]+))")));
    EXPECT_NEAR(std::stod(m[1]), 16.0, 1.6);
}

TEST(Cli, TinyJobWithHugeCapsGatesInmem) {
    auto f = make_job("gate", tiny());
    const auto r = run(load_job_config(f.config));
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.out.find("-> inmem"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("kappa*M_cap"), std::string::npos);
}

TEST(Cli, TinyCapsGateToTaskpoolOrAbort) {
    auto f = make_job("tiny_caps", tiny());
    Overrides o;
    o.caps_mem = "2K";
    const auto r = run(load_job_config(f.config, o));
    EXPECT_TRUE(r.code == kInfeasible || r.out.find("-> taskpool") != std::string::npos) << r.out << r.err;
    if (r.code == kInfeasible) EXPECT_NE(r.err.find("infeasible"), std::string::npos);
}

TEST(Cli, FixedPolicyReportsZeroReconfigs) {
    auto f = make_job("fixed", tiny(20'000));
    Overrides o;
    o.policy = "fixed";
    o.b = 5000;
    o.k = 2;
    const auto r = run(load_job_config(f.config, o));
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.out.find("reconfigs: 0 "), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("b=5000 k=2"), std::string::npos);
}

TEST(Cli, FixedPolicyNeedsBAndK) {
    auto f = make_job("fixed_bad", tiny());
    Overrides o;
    o.policy = "fixed";
    EXPECT_THROW(load_job_config(f.config, o), UsageError);
    o.policy = "greedy";
    EXPECT_THROW(load_job_config(f.config, o), UsageError);
}

TEST(Cli, FlagsOverrideEnvironmentOverrideFile) {
    auto f = make_job("precedence", tiny(), {{"caps", {{"mem", "1G"}, {"cpu", 3}}}, {"seed", 5}});
    EXPECT_EQ(load_job_config(f.config).caps.cpu_cap, 3);
    EXPECT_EQ(load_job_config(f.config).seed, 5u);
    ::setenv("ADSCHED_CAPS_CPU", "5", 1);
    EXPECT_EQ(load_job_config(f.config).caps.cpu_cap, 5);
    Overrides o;
    o.caps_cpu = 7;
    o.seed = 9;
    const auto c = load_job_config(f.config, o);
    ::unsetenv("ADSCHED_CAPS_CPU");
    EXPECT_EQ(c.caps.cpu_cap, 7);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_DOUBLE_EQ(c.caps.mem_cap, 1024.0 * 1024 * 1024);
}

TEST(Cli, RunOutputsMatchGroundTruthAndEchoConfig) {
    auto f = make_job("outputs", tiny(3000), {{"policy", {{"hysteresis_m", 3}}}});
    const auto c = load_job_config(f.config);
    const auto r = run(c);
    ASSERT_EQ(r.code, kOk) << r.err;
    std::ifstream in(c.out_dir / "verdicts.jsonl");
    std::string line, last;
    while (std::getline(in, line)) last = line;
    const auto summary = nlohmann::json::parse(last).at("summary");
    EXPECT_EQ(summary.at("changed").get<Rows>(), f.pair.ground_truth.count(VerdictKind::changed));
    EXPECT_EQ(summary.at("added").get<Rows>(), f.pair.ground_truth.count(VerdictKind::added));
    EXPECT_EQ(summary.at("removed").get<Rows>(), f.pair.ground_truth.count(VerdictKind::removed));

    const auto log = read_log(c.out_dir / "telemetry.jsonl");
    EXPECT_EQ(log.header.config.at("policy").at("hysteresis_m"), 3);
    EXPECT_EQ(log.header.config.at("caps").at("cpu"), 2);
    EXPECT_TRUE(log.header.config.at("gate").contains("working_set"));
}

TEST(Cli, SimBackendKeepsRealVerdicts) {
    auto f = make_job("sim", tiny(2000));
    Overrides o;
    o.backend = "sim";
    const auto c = load_job_config(f.config, o);
    const auto r = run(c);
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.out.find("backend: sim (forced)"), std::string::npos);
    EXPECT_EQ(read_log(c.out_dir / "telemetry.jsonl").header.job.backend, BackendKind::simulated);
}

TEST(Cli, AnalyzeOfRunLogEqualsLiveSummary) {
    auto f = make_job("purity", tiny(5000));
    const auto c = load_job_config(f.config);
    ASSERT_EQ(run(c).code, kOk);
    const auto out_dir = f.dir / "analysis";
    const auto a = analyze({c.out_dir / "telemetry.jsonl"}, ReadMode::strict, out_dir);
    ASSERT_EQ(a.code, kOk) << a.err;
    EXPECT_EQ(slurp(out_dir / "summaries.csv"), slurp(c.out_dir / "summary.csv"));
    EXPECT_EQ(section_after(a.out, "Job summaries\n"), slurp(c.out_dir / "summary.csv"));
    EXPECT_EQ(analyze({c.out_dir / "telemetry.jsonl"}).out, a.out);
}

TEST(Cli, AnalyzeCorruptLine) {
    auto f = make_job("corrupt", tiny(5000));
    const auto c = load_job_config(f.config);
    ASSERT_EQ(run(c).code, kOk);
    const auto log = c.out_dir / "telemetry.jsonl";
    std::ofstream(log, std::ios::app) << "{not json\n";
    const auto text = slurp(log);
    const auto lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));

    const auto strict = analyze({log});
    EXPECT_EQ(strict.code, kData);
    EXPECT_NE(strict.err.find("line " + std::to_string(lines)), std::string::npos) << strict.err;

    const auto lenient = analyze({log}, ReadMode::lenient);
    EXPECT_EQ(lenient.code, kOk) << lenient.err;
    EXPECT_NE(lenient.err.find("skipped"), std::string::npos);
}

TEST(Cli, AnalyzeVersionMismatchNamesBothVersions) {
    auto f = make_job("version", tiny());
    const auto c = load_job_config(f.config);
    ASSERT_EQ(run(c).code, kOk);
    const auto log = c.out_dir / "telemetry.jsonl";
    std::string text = slurp(log);
    const auto at = text.find("\"version\":1");
    ASSERT_NE(at, std::string::npos);
    text.replace(at, 11, "\"version\":7");
    spit(log, text);
    const auto r = analyze({log});
    EXPECT_EQ(r.code, kData);
    EXPECT_NE(r.err.find("version 7"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("supports 1"), std::string::npos) << r.err;
}

TEST(Cli, AnalyzeMissingPath) {
    const auto r = analyze({fs::temp_directory_path() / "adsched_cli_no_such_log.jsonl"});
    EXPECT_EQ(r.code, kData);
    EXPECT_NE(r.err.find("adsched_cli_no_such_log.jsonl"), std::string::npos);
    EXPECT_EQ(analyze({}).code, kUsage);
}

TEST(Cli, BenchEmitsTablesAndLogsThatAnalyzeReproduces) {
    const auto dir = fresh_dir("bench");
    spit(dir / "matrix.json", R"({"sizes": [5000, 10000], "reference_sizes": [500000, 1000000],
                                 "b_grid": [50000, 100000], "k_grid": [4, 8],
                                 "ablations": {"m": [1, 2, 3]}})");
    const auto c = load_bench_config(dir / "matrix.json");
    EXPECT_EQ(c.out_dir, dir / "adsched-bench");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_bench(c, out, err), kOk) << err.str();
    for (const char* title : {"p95 latency (s)", "Peak memory (GB)", "Throughput (k rows/s)", "Ablations"})
        EXPECT_NE(out.str().find(title), std::string::npos) << title;
    const auto report = slurp(c.out_dir / "report.txt");
    const auto a = analyze({c.out_dir / "logs"});
    ASSERT_EQ(a.code, kOk) << a.err;
    EXPECT_EQ(a.out.substr(0, report.size()), report);

    Overrides o;
    o.policy = "fixed";
    EXPECT_THROW(load_bench_config(dir / "matrix.json", o), UsageError);
    spit(dir / "few.json", R"({"repetitions": 2})");
    EXPECT_THROW(load_bench_config(dir / "few.json"), UsageError);
}
