#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinglass/admissible.hpp"
#include "spinglass/model.hpp"

namespace spinglass::cli {

using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kSuccess = 0, kFailure = 1, kValidation = 2, kNumerical = 3, kRefused = 4 };

// Settings from the command line that override or complement the config.
struct RunContext {
    std::string out_dir;          // empty: write nothing to disk
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    std::optional<double> tolerance;
};

struct RunRecord {
    std::string command;
    std::string config_hash;
    json config;     // effective config (flag overrides applied)
    json outputs;
    std::vector<std::string> files;
    double wall_seconds = 0.0;

    json to_json() const;
};

// Parsing of the config sections; errors are ValidationError with the path of
// the offending field.
MixedModel parse_model(const json& spec);
AdmissiblePair parse_pair(const json& spec, std::size_t species);
json model_to_json(const MixedModel& model);
json pair_to_json(const AdmissiblePair& pair);

json load_config(const std::string& path);

// 16 hex digits of a 64-bit FNV-1a hash of the canonical (sorted-key) dump.
std::string config_hash(const json& config);

// Shortest decimal text that round-trips the double.
std::string format_number(double x);

// Runs one subcommand. CSV files go to context.out_dir together with run.json.
RunRecord run_command(const std::string& command, const json& config, const RunContext& context);

RunRecord run_evaluate(const json& config, const RunContext& context);
RunRecord run_minimize(const json& config, const RunContext& context);
RunRecord run_cascade(const json& config, const RunContext& context);
RunRecord run_simulate(const json& config, const RunContext& context);
RunRecord run_compare(const json& config, const RunContext& context);
RunRecord run_selftest(const json& config, const RunContext& context);

// Maps the library's exception hierarchy to exit codes.
int exit_code_for(const std::exception& error);

// Full command-line entry point (argument parsing, env override, logging).
int main_entry(int argc, char** argv);

}  // namespace spinglass::cli
