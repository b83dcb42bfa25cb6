#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "neural_td_cli.hpp"

using namespace ntd;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "neural_td");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
    const auto path = dir / name;
    std::ofstream(path) << j.dump(2);
    return path;
}

json base_run() {
    return json::parse(R"({
        "env": {"type": "gridworld", "width": 3, "height": 3, "gamma": 0.9},
        "net": {"depth": 2, "width": 16}, "omega": 2.0,
        "step": {"kind": "constant", "alpha": 0.05}, "horizon": 2000, "record_every": 20})");
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("verify-identities passes by default and reports every suite") {
    const auto dir = fresh_dir("ntd_cli_verify");
    const auto r = invoke({"verify-identities", "--seeds", "20", "--out", dir.string()});
    INFO(r.out << r.err);
    CHECK(r.code == 0);
    const json report = json::parse(slurp(dir / "verify_report.json"));
    CHECK(report.at("status") == "pass");
    int passing = 0;
    for (const auto& s : report.at("suites")) passing += s.at("status") == "pass";
    CHECK(passing >= 5);
    fs::remove_all(dir);
}

TEST_CASE("verify-identities fails under an impossible tolerance") {
    const auto r = invoke({"verify-identities", "--seeds", "5", "--tolerance", "1e-30"});
    CHECK(r.code == 1);
    CHECK(r.out.find("first failing identity: ") != std::string::npos);
}

TEST_CASE("verify-identities JSON is reproducible") {
    const auto a = invoke({"verify-identities", "--seeds", "5", "--json"});
    const auto b = invoke({"verify-identities", "--seeds", "5", "--json"});
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(json::parse(a.out).is_object());
}

TEST_CASE("run writes the trace and summary") {
    const auto dir = fresh_dir("ntd_cli_run");
    const auto cfg = write_config(dir, "run.json", base_run());
    const auto out = dir / "out";
    const auto r = invoke({"run", "--config", cfg.string(), "--out", out.string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const std::string trace = slurp(out / "trace.csv");
    CHECK(count_lines(trace) == 101);
    CHECK(trace.rfind(std::string(kTraceHeader) + "\n", 0) == 0);
    const json summary = json::parse(slurp(out / "run_summary.json"));
    CHECK(summary.at("rows") == 100);
    // Nothing lands outside the output directory.
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    CHECK(names == std::vector<std::string>{"out", "run.json"});
    fs::remove_all(dir);
}

TEST_CASE("config errors exit with code 2 and name the field") {
    const auto dir = fresh_dir("ntd_cli_bad");
    json j = base_run();
    j["env"].erase("gamma");
    const auto cfg = write_config(dir, "bad.json", j);
    const auto r = invoke({"run", "--config", cfg.string(), "--out", (dir / "out").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("env.gamma") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "out" / "trace.csv"));

    CHECK(invoke({"run", "--config", (dir / "missing.json").string(), "--out", dir.string()}).code == 2);
    CHECK(invoke({"run", "--out", dir.string()}).code == 2);
    CHECK(invoke({"no-such-command"}).code == 2);
    fs::remove_all(dir);
}

TEST_CASE("divergence is an error unless allowed") {
    const auto dir = fresh_dir("ntd_cli_div");
    json j = base_run();
    j["omega"] = "inf";
    j["step"]["alpha"] = 1e300;
    const auto cfg = write_config(dir, "div.json", j);
    CHECK(invoke({"run", "--config", cfg.string(), "--out", (dir / "a").string()}).code == 1);
    const auto r = invoke({"run", "--config", cfg.string(), "--out", (dir / "b").string(), "--allow-divergence"});
    CHECK(r.code == 0);
    CHECK(json::parse(slurp(dir / "b" / "run_summary.json")).at("diverged") == true);
    fs::remove_all(dir);
}

TEST_CASE("seed precedence: flag over environment over config") {
    const auto dir = fresh_dir("ntd_cli_seed");
    json j = base_run();
    j["horizon"] = 200;
    j["seed"] = 5;
    const auto cfg = write_config(dir, "run.json", j);
    auto seed_of = [&](const std::vector<std::string>& extra) {
        std::vector<std::string> args{"run", "--config", cfg.string(), "--out", (dir / "o").string()};
        args.insert(args.end(), extra.begin(), extra.end());
        REQUIRE(invoke(args).code == 0);
        return json::parse(slurp(dir / "o" / "run_summary.json")).at("seed").get<std::uint64_t>();
    };
    ::unsetenv("NEURAL_TD_SEED");
    CHECK(seed_of({}) == 5);
    ::setenv("NEURAL_TD_SEED", "7", 1);
    CHECK(seed_of({}) == 7);
    CHECK(seed_of({"--seed", "9"}) == 9);
    ::setenv("NEURAL_TD_SEED", "seven", 1);
    CHECK(invoke({"run", "--config", cfg.string(), "--out", (dir / "o").string()}).code == 2);
    ::unsetenv("NEURAL_TD_SEED");
    CHECK(cli::resolve_seed(std::nullopt, 3) == 3);
    fs::remove_all(dir);
}

TEST_CASE("sweep output does not depend on --jobs") {
    const auto dir = fresh_dir("ntd_cli_sweep");
    json j = base_run();
    j["horizon"] = 300;
    j["sweep"] = json::parse(R"({"axis": "width", "values": [8, 16], "seeds": [0, 1, 2, 3]})");
    const auto cfg = write_config(dir, "sweep.json", j);
    REQUIRE(invoke({"sweep", "--config", cfg.string(), "--out", (dir / "a").string(), "--jobs", "1"}).code == 0);
    REQUIRE(invoke({"sweep", "--config", cfg.string(), "--out", (dir / "b").string(), "--jobs", "8"}).code == 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        ++files;
        CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));
    }
    CHECK(files == 9);
    CHECK(count_lines(slurp(dir / "a" / "summary.csv")) == 9);
    fs::remove_all(dir);
}

TEST_CASE("probe-regularity writes a table") {
    const auto dir = fresh_dir("ntd_cli_probe");
    const auto r = invoke({"probe-regularity", "--widths", "16", "64", "--trials", "10", "--out", dir.string()});
    INFO(r.err);
    CHECK(r.code == 0);
    CHECK(count_lines(slurp(dir / "regularity.csv")) == 3);
    CHECK(invoke({"probe-regularity", "--activation", "relu"}).code == 2);
    fs::remove_all(dir);
}

TEST_CASE("installed binary maps exit codes") {
    const char* bin = std::getenv("NEURAL_TD_CLI");
    if (!bin) SKIP("NEURAL_TD_CLI not set");
    const auto dir = fresh_dir("ntd_cli_bin");
    json j = base_run();
    j["env"].erase("gamma");
    const auto cfg = write_config(dir, "bad.json", j);
    auto status = [](const std::string& cmd) {
        const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status(std::string(bin) + " --help") == 0);
    CHECK(status(std::string(bin) + " run --config " + cfg.string() + " --out " + (dir / "o").string()) == 2);
    CHECK(status(std::string(bin) + " verify-identities --seeds 3 --tolerance 1e-30") == 1);
    CHECK(status(std::string(bin) + " verify-identities --seeds 3") == 0);
    fs::remove_all(dir);
}
