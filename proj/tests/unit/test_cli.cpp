#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spinglass/cli.hpp"
#include "spinglass/errors.hpp"

using namespace spinglass;
using namespace spinglass::cli;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

json two_species_model(double beta = 1.0) {
    return json::parse(R"({"species": ["a", "b"], "lambda": [0.5, 0.5],
        "terms": [{"p": 2, "beta": )" + format_number(beta) + R"(, "fill": 1.0}]})");
}

json square_model(double beta) {
    return {{"lambda", {1.0}}, {"terms", json::array({{{"p", 2}, {"beta", beta}}})}};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("spinglass_unit_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("parse_model and its round trip", "[cli]") {
    const auto m = parse_model(two_species_model());
    CHECK(m.species == std::vector<std::string>{"a", "b"});
    CHECK(xi(m, std::vector<double>{1.0, 1.0}) == Approx(1.0).margin(1e-15));
    const auto again = parse_model(model_to_json(m));
    CHECK(model_hash(again) == model_hash(m));

    // Entries by label, symmetrized unless disabled.
    const auto bip = parse_model(json::parse(R"({"species": ["a", "b"], "lambda": [0.5, 0.5],
        "terms": [{"p": 2, "beta": 1.0, "entries": [{"index": ["a", "b"], "value": 1.0}]}]})"));
    CHECK_FALSE(check_convexity(bip).convex);
    CHECK_THROWS_AS(parse_model(json::parse(R"({"species": ["a", "b"], "lambda": [0.5, 0.5],
        "terms": [{"p": 2, "beta": 1.0, "symmetrize": false, "entries": [{"index": [0, 1], "value": 1.0}]}]})")),
                    ValidationError);
    CHECK_THROWS_AS(parse_model(json::parse(R"({"lambda": [0.6, 0.5], "terms": []})")), ValidationError);
    CHECK_THROWS_AS(parse_model(json::parse(R"({"lambda": [1.0], "terms": [{"p": 2}]})")), ValidationError);
    CHECK_THROWS_AS(parse_model(json::parse(R"({"lambda": "x"})")), ValidationError);
}

TEST_CASE("parse_pair", "[cli]") {
    const auto p = parse_pair(json::parse(R"({"m": [0, 0.4, 1], "q": [0.2, 0.7], "map": "identity"})"), 1);
    CHECK(p.measure.levels() == 2);
    const auto ext = parse_pair(json::parse(R"({"m": [0, 1], "q": [0.3],
        "knots": [0, 0.5, 1], "values": [[0, 1, 1], [0, 0, 1]]})"), 2);
    CHECK(ext.map(0.25) == std::vector<double>{0.5, 0.0});
    CHECK(pair_to_json(ext).at("knots").size() == 3);
    CHECK_THROWS_AS(parse_pair(json::parse(R"({"m": [0, 0.5], "q": [0.2], "map": "identity"})"), 1), ValidationError);
    CHECK_THROWS_AS(parse_pair(json::parse(R"({"m": [0, 1], "q": [0.3], "knots": [0, 1], "values": [[0, 1]]})"), 2),
                    ValidationError);
}

TEST_CASE("config hash and number formatting", "[cli]") {
    const json a = {{"model", square_model(0.3)}, {"seed", 1}};
    const json b = json::parse(a.dump());
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) != config_hash(json{{"model", square_model(0.3)}, {"seed", 2}}));
    CHECK(format_number(0.1) == "0.1");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("evaluate records", "[cli]") {
    const json zero = {{"model", {{"lambda", {1.0}}, {"terms", json::array()}}},
                       {"pair", {{"m", {0, 1}}, {"q", {0.4}}, {"map", "identity"}}}};
    CHECK(run_command("evaluate", zero, {}).outputs.at("value").get<double>() == 0.0);

    const json annealed = {{"model", square_model(1.0)}, {"pair", {{"m", {0, 1}}, {"q", {0.0}}, {"map", "identity"}}}};
    const auto dir = scratch("evaluate");
    RunContext ctx;
    ctx.out_dir = dir.string();
    const auto rec = run_command("evaluate", annealed, ctx);
    CHECK(rec.outputs.at("value").get<double>() == Approx(0.5).margin(1e-12));
    CHECK(rec.outputs.at("b_opt")[0].get<double>() == Approx(3.0).margin(1e-8));
    CHECK(fs::exists(dir / "evaluate.csv"));
    CHECK(fs::exists(dir / "run.json"));

    // The record reloads to the same config and reproduces the CSV bytes.
    const auto first = slurp(dir / "evaluate.csv");
    const auto reloaded = load_config((dir / "run.json").string());
    CHECK(config_hash(reloaded) == rec.config_hash);
    run_command("evaluate", reloaded, ctx);
    CHECK(slurp(dir / "evaluate.csv") == first);

    const json bad = {{"model", two_species_model()},
                      {"pair", {{"m", {0, 1}}, {"q", {0.3}}, {"knots", {0, 0.5, 1}}, {"values", {{0, 0.6, 1}, {0, 0.6, 1}}}}}};
    try {
        run_command("evaluate", bad, {});
        FAIL("invalid pair accepted");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("joint constraint") != std::string::npos);
        CHECK(exit_code_for(e) == kValidation);
    }
}

TEST_CASE("randomized commands need a seed", "[cli]") {
    const json cfg = {{"model", square_model(0.3)}, {"command", {{"k", {1}}, {"starts", 2}}}};
    CHECK_THROWS_AS(run_command("minimize", cfg, {}), ValidationError);
    RunContext ctx;
    ctx.seed = 5;
    const auto rec = run_command("minimize", cfg, ctx);
    CHECK(rec.config.at("seed").get<std::uint64_t>() == 5);
    CHECK(rec.outputs.at("levels")[0].at("value").get<double>() == Approx(0.045).margin(1e-7));
}

TEST_CASE("minimize and cascade are reproducible under a fixed seed", "[cli]") {
    const json mcfg = {{"model", two_species_model(0.8)}, {"command", {{"k", {1, 2}}, {"starts", 3}}}, {"seed", 9}};
    const auto d1 = scratch("min1"), d2 = scratch("min2");
    RunContext c1, c2;
    c1.out_dir = d1.string();
    c2.out_dir = d2.string();
    const auto r1 = run_command("minimize", mcfg, c1);
    const auto r2 = run_command("minimize", mcfg, c2);
    CHECK(r1.config_hash == r2.config_hash);
    CHECK(slurp(d1 / "minimize.csv") == slurp(d2 / "minimize.csv"));
    CHECK(slurp(d1 / "minimize_pairs.csv") == slurp(d2 / "minimize_pairs.csv"));
    CHECK(r1.outputs.at("monotone").get<bool>());

    const json ccfg = {{"command", {{"m", {0, 0.3, 1}}, {"trees", 40}, {"fanout", 64}}}, {"seed", 4}};
    run_command("cascade", ccfg, c1);
    run_command("cascade", ccfg, c2);
    CHECK(slurp(d1 / "cascade_levels.csv") == slurp(d2 / "cascade_levels.csv"));
    const json k1 = {{"command", {{"m", {0, 1}}, {"trees", 5}}}, {"seed", 4}};
    const auto trivial = run_command("cascade", k1, {});
    CHECK(trivial.outputs.at("masses") == json::array({1.0}));
}

TEST_CASE("simulate refuses non-convex models", "[cli]") {
    const json bip = {{"model", json::parse(R"({"lambda": [0.5, 0.5],
        "terms": [{"p": 2, "beta": 1.0, "entries": [{"index": [0, 1], "value": 1.0}]}]})")},
                      {"command", {{"N", 16}, {"sweeps", 5}, {"burn_in", 5}, {"replicas", 2}}},
                      {"seed", 1}};
    try {
        run_command("simulate", bip, {});
        FAIL("bipartite model was not refused");
    } catch (const RefusedError& e) {
        CHECK(exit_code_for(e) == kRefused);
    }
    const json zero = {{"model", {{"lambda", {1.0}}, {"terms", json::array()}}},
                       {"pair", {{"m", {0, 1}}, {"q", {0.0}}, {"map", "identity"}}},
                       {"command", {{"N", 8}, {"sweeps", 5}, {"burn_in", 5}, {"replicas", 2}}},
                       {"seed", 1}};
    const auto rec = run_command("simulate", zero, {});
    CHECK(rec.outputs.at("mc").at("value").get<double>() == 0.0);
    CHECK(rec.outputs.at("guerra").at("gap").get<double>() == 0.0);
    CHECK(rec.outputs.at("guerra").at("ok").get<bool>());
}

TEST_CASE("exit codes", "[cli]") {
    CHECK(exit_code_for(ValidationError("x")) == kValidation);
    CHECK(exit_code_for(NumericalError("x")) == kNumerical);
    CHECK(exit_code_for(RefusedError("x")) == kRefused);
    CHECK(exit_code_for(std::runtime_error("x")) == kFailure);
    CHECK_THROWS_AS(run_command("bogus", json::object(), {}), ValidationError);
}
