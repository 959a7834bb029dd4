#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("spinglass_it_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Result run(const std::string& args, const std::string& env = "") {
    const auto dir = scratch("io");
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" SPINGLASS_EXE "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string example(const std::string& name) { return std::string("\"") + SPINGLASS_EXAMPLES + "/" + name + "\""; }

}  // namespace

TEST_CASE("version and usage", "[integration]") {
    const auto v = run("--version");
    CHECK(v.code == 0);
    CHECK(v.out.find("0.1.0") != std::string::npos);
    CHECK(run("bogus").code != 0);
    CHECK(run("evaluate").code == 2);
}

TEST_CASE("evaluate writes CSV and a reloadable record", "[integration]") {
    const auto dir = scratch("evaluate");
    const auto r = run("evaluate --config " + example("evaluate_annealed.json") + " --out \"" + dir.string() + "\"");
    REQUIRE(r.code == 0);
    const auto record = json::parse(r.out);
    CHECK(record.at("outputs").at("value").get<double>() == Catch::Approx(0.5).margin(1e-12));
    CHECK(fs::exists(dir / "evaluate.csv"));
    CHECK(fs::exists(dir / "value.csv"));
    const auto csv = slurp(dir / "evaluate.csv");

    // Rerun from the stored record.
    const auto again = scratch("evaluate_again");
    const auto r2 = run("evaluate --config \"" + (dir / "run.json").string() + "\" --out \"" + again.string() + "\"");
    REQUIRE(r2.code == 0);
    CHECK(slurp(again / "evaluate.csv") == csv);
    CHECK(json::parse(r2.out).at("config_hash") == record.at("config_hash"));

    const auto two = run("evaluate --config " + example("evaluate_two_species.json"));
    CHECK(two.code == 0);
}

TEST_CASE("validation failures exit with code 2", "[integration]") {
    const auto bad = run("evaluate --config " + example("invalid_pair.json"));
    CHECK(bad.code == 2);
    CHECK(bad.err.find("joint constraint") != std::string::npos);
    CHECK(run("evaluate --config /nonexistent/config.json").code == 2);

    // Randomized commands refuse to run without a seed.
    const auto dir = scratch("noseed");
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << R"({"model": {"lambda": [1.0], "terms": [{"p": 2, "beta": 0.3}]}, "command": {"k": [1]}})";
    }
    const auto missing = run("minimize --config \"" + (dir / "cfg.json").string() + "\"");
    CHECK(missing.code == 2);
    CHECK(missing.err.find("seed") != std::string::npos);
    CHECK(run("minimize --config \"" + (dir / "cfg.json").string() + "\" --seed 3").code == 0);
}

TEST_CASE("convexity guard exits with code 4", "[integration]") {
    const auto r = run("simulate --config " + example("simulate_bipartite.json"));
    CHECK(r.code == 4);
    CHECK(r.err.find("convex") != std::string::npos);
}

TEST_CASE("stochastic commands are reproducible and honor the worker override", "[integration]") {
    const auto a = scratch("sim_a"), b = scratch("sim_b");
    const auto ra = run("simulate --config " + example("simulate_square.json") + " --out \"" + a.string() + "\"");
    const auto rb = run("simulate --config " + example("simulate_square.json") + " --out \"" + b.string() + "\"",
                        "SPINGLASS_WORKERS=1");
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    CHECK(rb.err.find("SPINGLASS_WORKERS") != std::string::npos);
    for (const char* f : {"simulate.csv", "energy.csv", "replicas.csv", "guerra.csv", "overlaps.csv", "gg.csv", "sync.csv"})
        CHECK(slurp(a / f) == slurp(b / f));
    CHECK(json::parse(ra.out).at("outputs").at("guerra").at("ok").get<bool>());

    const auto c1 = scratch("cas_a"), c2 = scratch("cas_b");
    REQUIRE(run("cascade --config " + example("cascade_k3.json") + " --out \"" + c1.string() + "\"").code == 0);
    REQUIRE(run("cascade --config " + example("cascade_k3.json") + " --out \"" + c2.string() + "\"").code == 0);
    CHECK(slurp(c1 / "cascade_levels.csv") == slurp(c2 / "cascade_levels.csv"));
    CHECK(slurp(c1 / "pm_over_m.csv") == slurp(c2 / "pm_over_m.csv"));

    // A different seed on the command line changes the stochastic output.
    const auto c3 = scratch("cas_c");
    REQUIRE(run("cascade --config " + example("cascade_k3.json") + " --seed 43 --out \"" + c3.string() + "\"").code == 0);
    CHECK(slurp(c1 / "cascade_levels.csv") != slurp(c3 / "cascade_levels.csv"));
}

TEST_CASE("minimize, compare and selftest run end to end", "[integration]") {
    const auto m = run("minimize --config " + example("minimize_square.json") + " --workers 2");
    REQUIRE(m.code == 0);
    const auto rec = json::parse(m.out);
    CHECK(rec.at("outputs").at("levels")[0].at("value").get<double>() == Catch::Approx(0.045).margin(1e-7));
    CHECK(rec.at("outputs").at("monotone").get<bool>());

    const auto dir = scratch("compare");
    const auto c = run("compare --config " + example("compare_square.json") + " --out \"" + dir.string() + "\"");
    REQUIRE(c.code == 0);
    CHECK(fs::exists(dir / "compare.csv"));
    const auto out = json::parse(c.out).at("outputs");
    CHECK(out.contains("c_star"));
    CHECK(out.contains("lipschitz"));
    CHECK(out.contains("pm_extrapolated"));

    const auto s = run("selftest");
    CHECK(s.code == 0);
}
