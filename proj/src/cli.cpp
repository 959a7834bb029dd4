#include "spinglass/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "spinglass/cascade.hpp"
#include "spinglass/errors.hpp"
#include "spinglass/parisi.hpp"
#include "spinglass/simulate.hpp"

namespace spinglass::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// JSON access with path-qualified errors

template <typename T>
T read(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ValidationError(where + "." + key + " is required");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + "." + key + " has the wrong type");
    }
}

template <typename T>
T read_or(const json& j, const std::string& key, T fallback, const std::string& where) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    return read<T>(j, key, where);
}

const json& section(const json& config, const std::string& name) {
    static const json empty = json::object();
    if (!config.contains(name)) return empty;
    const json& s = config.at(name);
    if (!s.is_object()) throw ValidationError(name + " must be an object");
    return s;
}

std::size_t species_ref(const json& v, const MixedModel& model, const std::string& where) {
    if (v.is_string()) return model.species_index(v.get<std::string>());
    if (v.is_number_integer()) {
        const auto i = v.get<long long>();
        if (i < 0 || static_cast<std::size_t>(i) >= model.species_count())
            throw ValidationError(where + ": species index " + std::to_string(i) + " out of range");
        return static_cast<std::size_t>(i);
    }
    throw ValidationError(where + ": species references are labels or integers");
}

// ---------------------------------------------------------------------------
// Output

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}

    void row(std::vector<std::string> cells) {
        if (cells.size() != header_.size()) throw std::logic_error("csv row width mismatch");
        rows_.push_back(std::move(cells));
    }

    std::string text() const {
        std::ostringstream os;
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
            os << '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return os.str();
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string num(double x) { return format_number(x); }
std::string num(std::size_t x) { return std::to_string(x); }
std::string flag(bool b) { return b ? "true" : "false"; }

struct Writer {
    const RunContext& context;
    RunRecord& record;

    void write(const std::string& name, const std::string& text) {
        if (context.out_dir.empty()) return;
        fs::create_directories(context.out_dir);
        const auto path = fs::path(context.out_dir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ValidationError("cannot write " + path.string());
        out << text;
        record.files.push_back(path.string());
    }
    void write(const std::string& name, const Csv& csv) { write(name, csv.text()); }
};

std::uint64_t require_seed(const json& config, const RunContext& context) {
    if (context.seed) return *context.seed;
    if (config.contains("seed")) {
        if (!config.at("seed").is_number_unsigned() && !config.at("seed").is_number_integer())
            throw ValidationError("seed must be an unsigned 64-bit integer");
        return config.at("seed").get<std::uint64_t>();
    }
    throw ValidationError("this command is randomized: give a seed with --seed or a top-level \"seed\"");
}

std::vector<double> parse_field(const json& config, const MixedModel& model) {
    if (!config.contains("field") || config.at("field").is_null()) return {};
    auto h = read<std::vector<double>>(config, "field", "config");
    if (h.size() != model.species_count())
        throw ValidationError("config.field needs one entry per species (" + std::to_string(model.species_count()) +
                              ")");
    return h;
}

json evaluation_json(const ParisiEvaluation& ev) {
    json j;
    j["value"] = ev.value;
    j["b_opt"] = ev.b_opt;
    j["d_profile"] = ev.d_profile;
    j["residuals"] = ev.residuals;
    j["boundary"] = ev.boundary;
    return j;
}

CascadeConstruction parse_construction(const std::string& name) {
    if (name == "stick_breaking") return CascadeConstruction::StickBreaking;
    if (name == "poisson_products") return CascadeConstruction::PoissonProducts;
    throw ValidationError("command.construction must be stick_breaking or poisson_products, got " + name);
}

HierarchicalMethod parse_method(const json& cmd, std::uint64_t seed, std::size_t workers, std::size_t levels) {
    const auto name = read_or<std::string>(cmd, "method", "monte_carlo", "command");
    if (name == "gauss_hermite")
        return HierarchicalMethod::gauss_hermite(read_or<std::size_t>(cmd, "nodes", 64, "command"));
    if (name != "monte_carlo") throw ValidationError("command.method must be monte_carlo or gauss_hermite");
    std::vector<std::size_t> fallback{4000};
    while (fallback.size() < levels) fallback.push_back(64);
    return HierarchicalMethod::monte_carlo(read_or(cmd, "mc_samples", fallback, "command"), seed, workers);
}

struct PmRow {
    std::size_t M;
    std::vector<std::size_t> counts;
    Estimate estimate;
};

std::vector<PmRow> pm_sweep(const MixedModel& model, const AdmissiblePair& pair, const json& cmd,
                            std::uint64_t seed, std::size_t workers) {
    std::vector<PmRow> rows;
    const auto Ms = read_or<std::vector<std::size_t>>(cmd, "M", {}, "command");
    for (std::size_t i = 0; i < Ms.size(); ++i) {
        const auto method = parse_method(cmd, splitmix64(seed + 1 + i), workers, pair.measure.levels());
        const auto counts = split_counts(model.lambda, Ms[i]);
        rows.push_back({Ms[i], counts, pm_over_m(model, pair, counts, method)});
    }
    return rows;
}

// |gap| nonincreasing up to three combined standard errors.
bool gaps_decreasing(const std::vector<PmRow>& rows, double limit) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& a = rows[i - 1].estimate;
        const auto& b = rows[i].estimate;
        const double slack = 3.0 * std::hypot(a.std_error, b.std_error);
        if (std::abs(b.value - limit) > std::abs(a.value - limit) + slack + 1e-12) return false;
    }
    return true;
}

// Weighted least squares of value on 1/M; returns the intercept.
Estimate extrapolate(const std::vector<PmRow>& rows) {
    if (rows.empty()) return {};
    if (rows.size() == 1) return rows[0].estimate;
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    bool weighted = std::all_of(rows.begin(), rows.end(), [](const PmRow& r) { return r.estimate.std_error > 0; });
    for (const auto& r : rows) {
        const double w = weighted ? 1.0 / (r.estimate.std_error * r.estimate.std_error) : 1.0;
        const double x = 1.0 / static_cast<double>(r.M);
        sw += w;
        sx += w * x;
        sy += w * r.estimate.value;
        sxx += w * x * x;
        sxy += w * x * r.estimate.value;
    }
    const double det = sw * sxx - sx * sx;
    if (std::abs(det) < 1e-300) return rows.back().estimate;
    const double a = (sxx * sy - sx * sxy) / det;
    return {a, weighted ? std::sqrt(sxx / det) : 0.0};
}

SpeciesCounts parse_counts(const json& cmd, const MixedModel& model) {
    // A scalar N is split across species by their weights.
    SpeciesCounts counts;
    if (cmd.contains("N") && cmd.at("N").is_number())
        counts.n_per_species = split_counts(model.lambda, read<std::size_t>(cmd, "N", "command"));
    else
        counts.n_per_species = read<std::vector<std::size_t>>(cmd, "N", "command");
    const auto v = validate_counts(model, counts);
    if (!v.empty()) throw ValidationError("command.N: " + v.front().detail);
    return counts;
}

TiOptions parse_ti(const json& cmd, std::uint64_t seed, std::size_t workers) {
    TiOptions o;
    if (cmd.contains("t_grid")) o.t_grid = read<std::vector<double>>(cmd, "t_grid", "command");
    else o.t_grid = uniform_grid(read_or<std::size_t>(cmd, "t_nodes", 11, "command"));
    o.sweeps = read_or<std::size_t>(cmd, "sweeps", o.sweeps, "command");
    o.burn_in = read_or<std::size_t>(cmd, "burn_in", o.burn_in, "command");
    o.replicas = read_or<std::size_t>(cmd, "replicas", o.replicas, "command");
    o.seed = seed;
    o.workers = workers;
    return o;
}

MinimizeOptions parse_minimize(const json& cmd, std::uint64_t seed, const RunContext& context) {
    MinimizeOptions o;
    o.starts = read_or<std::size_t>(cmd, "starts", o.starts, "command");
    o.restarts = read_or<std::size_t>(cmd, "restarts", o.restarts, "command");
    o.local.max_evaluations = read_or<std::size_t>(cmd, "max_evaluations", o.local.max_evaluations, "command");
    if (context.tolerance) o.local.value_tolerance = *context.tolerance;
    o.seed = seed;
    o.workers = context.workers;
    return o;
}

std::vector<std::string> counts_header(const MixedModel& model) {
    std::vector<std::string> h;
    for (const auto& s : model.species) h.push_back("N_" + s);
    return h;
}

json estimate_json(const McEstimate& e) {
    return {{"value", e.value},         {"std_error", e.std_error},     {"replicas", e.replicas},
            {"forward", e.forward},     {"backward", e.backward},       {"equilibrated", e.equilibrated},
            {"acceptance", e.mean_acceptance}, {"per_replica", e.per_replica}};
}

RunRecord start(const std::string& command, const json& config) {
    RunRecord r;
    r.command = command;
    r.config = config;
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

MixedModel parse_model(const json& spec) {
    if (!spec.is_object()) throw ValidationError("model must be an object");
    MixedModel model;
    model.lambda = read_or<std::vector<double>>(spec, "lambda", {1.0}, "model");
    if (spec.contains("species")) {
        model.species = read<std::vector<std::string>>(spec, "species", "model");
    } else {
        for (std::size_t s = 0; s < model.lambda.size(); ++s) model.species.push_back("s" + std::to_string(s));
    }
    if (model.species.size() != model.lambda.size())
        throw ValidationError("model.species and model.lambda have different lengths");
    model.epsilon_decay = read_or<double>(spec, "epsilon_decay", 1.0, "model");
    const std::size_t S = model.species_count();
    const json terms = spec.value("terms", json::array());
    if (!terms.is_array()) throw ValidationError("model.terms must be an array");
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const std::string where = "model.terms[" + std::to_string(t) + "]";
        const json& term = terms[t];
        InteractionTerm out;
        out.p = read<int>(term, "p", where);
        if (out.p < 1) throw ValidationError(where + ".p must be >= 1");
        out.beta = read<double>(term, "beta", where);
        const auto order = static_cast<std::size_t>(out.p);
        // Without explicit entries the tensor defaults to all ones.
        const double fill = read_or<double>(term, "fill", term.contains("entries") ? 0.0 : 1.0, where);
        out.delta_sq = InteractionTensor::filled(S, order, fill);
        const bool symmetrize = read_or<bool>(term, "symmetrize", true, where);
        const json entries = term.value("entries", json::array());
        for (std::size_t e = 0; e < entries.size(); ++e) {
            const std::string at = where + ".entries[" + std::to_string(e) + "]";
            const json& entry = entries[e];
            const json idx = entry.value("index", json::array());
            if (idx.size() != order) throw ValidationError(at + ".index needs " + std::to_string(order) + " species");
            std::vector<std::size_t> index;
            for (const auto& v : idx) index.push_back(species_ref(v, model, at));
            const double value = read<double>(entry, "value", at);
            if (symmetrize) {
                std::sort(index.begin(), index.end());
                do {
                    out.delta_sq.set(index, value);
                } while (std::next_permutation(index.begin(), index.end()));
            } else {
                out.delta_sq.set(index, value);
            }
        }
        model.terms.push_back(std::move(out));
    }
    require_valid(model);
    return model;
}

AdmissiblePair parse_pair(const json& spec, std::size_t species) {
    if (!spec.is_object()) throw ValidationError("pair must be an object");
    AdmissiblePair pair;
    pair.measure.m = read<std::vector<double>>(spec, "m", "pair");
    pair.measure.q = read<std::vector<double>>(spec, "q", "pair");
    const auto map = read_or<std::string>(spec, "map", spec.contains("knots") ? "explicit" : "identity", "pair");
    if (map == "identity") {
        pair.map = SyncMap::identity(species);
    } else if (map == "explicit") {
        pair.map.knots = read<std::vector<double>>(spec, "knots", "pair");
        pair.map.values = read<std::vector<std::vector<double>>>(spec, "values", "pair");
    } else {
        throw ValidationError("pair.map must be identity or explicit, got " + map);
    }
    if (pair.map.species_count() != species)
        throw ValidationError("pair.values needs one row per species (" + std::to_string(species) + ")");
    const auto v = validate_measure(pair.measure);
    if (!v.empty()) throw ValidationError("pair: " + v.front().detail);
    return pair;
}

json model_to_json(const MixedModel& model) {
    json j;
    j["species"] = model.species;
    j["lambda"] = model.lambda;
    j["epsilon_decay"] = model.epsilon_decay;
    j["terms"] = json::array();
    for (const auto& t : model.terms) {
        json term{{"p", t.p}, {"beta", t.beta}, {"symmetrize", false}, {"entries", json::array()}};
        t.delta_sq.for_each_nonzero([&](std::span<const std::size_t> idx, double v) {
            term["entries"].push_back({{"index", std::vector<std::size_t>(idx.begin(), idx.end())}, {"value", v}});
        });
        j["terms"].push_back(std::move(term));
    }
    return j;
}

json pair_to_json(const AdmissiblePair& pair) {
    return {{"m", pair.measure.m}, {"q", pair.measure.q}, {"map", "explicit"},
            {"knots", pair.map.knots}, {"values", pair.map.values}};
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    // A run.json record carries the effective config of the run it describes.
    if (j.contains("config_hash") && j.contains("config")) return j.at("config");
    return j;
}

std::string config_hash(const json& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json RunRecord::to_json() const {
    return {{"command", command},   {"config_hash", config_hash}, {"config", config}, {"outputs", outputs},
            {"files", files},       {"version", kVersion},        {"wall_seconds", wall_seconds}};
}

// ---------------------------------------------------------------------------
// Commands

RunRecord run_evaluate(const json& config, const RunContext& context) {
    auto record = start("evaluate", config);
    Writer out{context, record};
    const auto model = parse_model(section(config, "model"));
    if (!config.contains("pair")) throw ValidationError("evaluate needs a pair section");
    const auto pair = parse_pair(config.at("pair"), model.species_count());
    const auto field = parse_field(config, model);
    const auto ev = inner_min_b(model, pair, field);

    std::vector<std::string> header{"species", "lambda", "b_opt", "residual", "boundary"};
    for (std::size_t i = 0; i < ev.d_profile.front().size(); ++i) header.push_back("d_" + std::to_string(i + 1));
    Csv csv(header);
    for (std::size_t s = 0; s < model.species_count(); ++s) {
        std::vector<std::string> row{model.species[s], num(model.lambda[s]), num(ev.b_opt[s]), num(ev.residuals[s]),
                                     flag(ev.boundary[s])};
        for (double d : ev.d_profile[s]) row.push_back(num(d));
        csv.row(row);
    }
    Csv summary({"value", "c_star"});
    summary.row({num(ev.value), num(c_star(model))});
    out.write("evaluate.csv", csv);
    out.write("value.csv", summary);
    record.outputs = evaluation_json(ev);
    record.outputs["c_star"] = c_star(model);
    return record;
}

RunRecord run_minimize(const json& config, const RunContext& context) {
    auto record = start("minimize", config);
    Writer out{context, record};
    const auto model = parse_model(section(config, "model"));
    const auto field = parse_field(config, model);
    const json& cmd = section(config, "command");
    const auto seed = require_seed(config, context);
    const auto ks = read_or<std::vector<std::size_t>>(cmd, "k", {1, 2, 3}, "command");
    const auto sweep = minimize_parisi_levels(model, ks, field, parse_minimize(cmd, seed, context));

    Csv table({"k", "value", "evaluations", "converged"});
    std::vector<std::string> pair_header{"k", "level", "m", "q"};
    for (const auto& s : model.species) pair_header.push_back("phi_" + s);
    Csv pairs(pair_header);
    record.outputs["levels"] = json::array();
    for (const auto& res : sweep.results) {
        table.row({num(res.levels), num(res.evaluation.value), num(res.evaluations), flag(res.converged)});
        for (std::size_t r = 1; r <= res.pair.measure.levels(); ++r) {
            std::vector<std::string> row{num(res.levels), num(r), num(res.pair.measure.m[r]),
                                         num(res.pair.measure.q[r - 1])};
            for (double v : res.pair.map(res.pair.measure.q[r - 1])) row.push_back(num(v));
            pairs.row(row);
        }
        json level = evaluation_json(res.evaluation);
        level["k"] = res.levels;
        level["pair"] = pair_to_json(res.pair);
        level["converged"] = res.converged;
        record.outputs["levels"].push_back(std::move(level));
    }
    out.write("minimize.csv", table);
    out.write("minimize_pairs.csv", pairs);
    record.outputs["monotone"] = sweep.monotone;
    return record;
}

RunRecord run_cascade(const json& config, const RunContext& context) {
    auto record = start("cascade", config);
    Writer out{context, record};
    const json& cmd = section(config, "command");
    const auto seed = require_seed(config, context);

    std::optional<MixedModel> model;
    std::optional<AdmissiblePair> pair;
    if (config.contains("model")) model = parse_model(config.at("model"));
    if (model && config.contains("pair")) {
        pair = parse_pair(config.at("pair"), model->species_count());
        require_valid(model->lambda, *pair);
    }

    CascadeSpec spec;
    if (cmd.contains("m")) spec.m = read<std::vector<double>>(cmd, "m", "command");
    else if (pair) spec.m = pair->measure.m;
    spec.fanout = read_or<std::size_t>(cmd, "fanout", spec.depth() <= 2 ? 512 : 64, "command");
    spec.construction = parse_construction(read_or<std::string>(cmd, "construction", "stick_breaking", "command"));
    validate_cascade_spec(spec);
    const auto trees = read_or<std::size_t>(cmd, "trees", 2000, "command");
    const auto samples = read_or<std::size_t>(cmd, "samples", 0, "command");
    const auto hist = overlap_histogram(spec, trees, samples, seed, context.workers);

    Csv levels({"level", "mass", "stderr", "expected", "within_3se"});
    bool law_ok = true;
    for (std::size_t r = 1; r <= spec.depth(); ++r) {
        const double expected = spec.m[r] - spec.m[r - 1];
        const double mass = hist.masses[r - 1], se = hist.stderrs[r - 1];
        const bool ok = std::abs(mass - expected) <= 3.0 * se + 1e-12;
        law_ok = law_ok && ok;
        levels.row({num(r), num(mass), num(se), num(expected), flag(ok)});
    }
    out.write("cascade_levels.csv", levels);
    record.outputs["masses"] = hist.masses;
    record.outputs["stderrs"] = hist.stderrs;
    record.outputs["trees"] = hist.trees;
    record.outputs["law_within_3se"] = law_ok;

    if (cmd.contains("M")) {
        if (!model || !pair) throw ValidationError("cascade with command.M needs model and pair sections");
        const double limit = parisi_value(*model, *pair, parse_field(config, *model));
        const auto rows = pm_sweep(*model, *pair, cmd, seed, context.workers);
        auto header = std::vector<std::string>{"M"};
        for (auto& h : counts_header(*model)) header.push_back(h);
        for (const char* h : {"value", "stderr", "limit", "gap"}) header.emplace_back(h);
        Csv pm(header);
        json table = json::array();
        for (const auto& r : rows) {
            std::vector<std::string> row{num(r.M)};
            for (std::size_t c : r.counts) row.push_back(num(c));
            for (double v : {r.estimate.value, r.estimate.std_error, limit, r.estimate.value - limit})
                row.push_back(num(v));
            pm.row(row);
            table.push_back({{"M", r.M}, {"value", r.estimate.value}, {"std_error", r.estimate.std_error}});
        }
        out.write("pm_over_m.csv", pm);
        record.outputs["pm_over_m"] = table;
        record.outputs["limit"] = limit;
        record.outputs["gap_decreasing"] = gaps_decreasing(rows, limit);
    }
    return record;
}

RunRecord run_simulate(const json& config, const RunContext& context) {
    auto record = start("simulate", config);
    Writer out{context, record};
    const auto model = parse_model(section(config, "model"));
    const json& cmd = section(config, "command");
    const auto seed = require_seed(config, context);
    const auto counts = parse_counts(cmd, model);
    const bool guerra = read_or<bool>(cmd, "guerra", true, "command");
    const double allowance = read_or<double>(cmd, "allowance", 0.05, "command");

    // The bound only holds for convex xi: refuse before spending the Monte Carlo budget.
    if (guerra) guerra_gap(model, McEstimate{}, 0.0, allowance);

    const auto ti = parse_ti(cmd, seed, context.workers);
    const auto mc = free_energy_ti(model, counts, ti);

    auto header = std::vector<std::string>{"seed", "N"};
    for (auto& h : counts_header(model)) header.push_back(h);
    for (const char* h : {"t_nodes", "estimate", "stderr", "sweeps", "burn_in", "replicas", "forward", "backward",
                          "equilibrated", "acceptance"})
        header.emplace_back(h);
    Csv summary(header);
    std::vector<std::string> row{num(static_cast<std::size_t>(seed)), num(counts.total())};
    for (std::size_t n : counts.n_per_species) row.push_back(num(n));
    for (const auto& cell : {num(ti.t_grid.size()), num(mc.value), num(mc.std_error), num(ti.sweeps), num(ti.burn_in),
                             num(mc.replicas), num(mc.forward), num(mc.backward), flag(mc.equilibrated),
                             num(mc.mean_acceptance)})
        row.push_back(cell);
    summary.row(row);
    out.write("simulate.csv", summary);

    Csv energy({"t", "energy"});
    for (std::size_t i = 0; i < ti.t_grid.size(); ++i) energy.row({num(ti.t_grid[i]), num(mc.energy_curve[i])});
    out.write("energy.csv", energy);
    Csv replicas({"replica", "value"});
    for (std::size_t d = 0; d < mc.per_replica.size(); ++d) replicas.row({num(d), num(mc.per_replica[d])});
    out.write("replicas.csv", replicas);
    record.outputs["mc"] = estimate_json(mc);

    if (guerra) {
        double variational;
        json source;
        if (config.contains("pair")) {
            const auto pair = parse_pair(config.at("pair"), model.species_count());
            variational = parisi_value(model, pair, parse_field(config, model));
            source = "pair";
        } else {
            const auto ks = read_or<std::vector<std::size_t>>(cmd, "k", {1, 2}, "command");
            const auto sweep = minimize_parisi_levels(model, ks, parse_field(config, model),
                                                      parse_minimize(cmd, seed, context));
            variational = sweep.results.back().evaluation.value;
            for (const auto& r : sweep.results) variational = std::min(variational, r.evaluation.value);
            source = "minimized";
        }
        const auto gap = guerra_gap(model, mc, variational, allowance);
        Csv g({"variational", "mc", "stderr", "gap", "threshold", "ok"});
        g.row({num(variational), num(mc.value), num(mc.std_error), num(gap.gap), num(gap.threshold), flag(gap.ok)});
        out.write("guerra.csv", g);
        record.outputs["guerra"] = {{"variational", variational}, {"source", source}, {"gap", gap.gap},
                                    {"threshold", gap.threshold}, {"ok", gap.ok}};
    }

    if (cmd.contains("overlap")) {
        const json& ov = cmd.at("overlap");
        OverlapOptions o;
        o.t = read_or<double>(ov, "t", o.t, "command.overlap");
        o.chains = read_or<std::size_t>(ov, "chains", o.chains, "command.overlap");
        o.snapshots = read_or<std::size_t>(ov, "snapshots", o.snapshots, "command.overlap");
        o.thin = read_or<std::size_t>(ov, "thin", o.thin, "command.overlap");
        o.burn_in = read_or<std::size_t>(ov, "burn_in", o.burn_in, "command.overlap");
        o.seed = seed;
        const auto disorder = build_disorder(model, counts, seed, read_or<std::size_t>(ov, "disorder", 0, "command.overlap"));
        const auto samples = overlap_stats(disorder, counts, o);
        const auto diag = overlap_diagnostics(samples, read_or<std::size_t>(ov, "null_draws", 200, "command.overlap"), seed);

        auto oh = std::vector<std::string>{"snapshot", "a", "b", "R"};
        for (const auto& s : model.species) oh.push_back("R_" + s);
        Csv overlaps(oh);
        for (const auto& r : samples.rows) {
            std::vector<std::string> cells{num(r.snapshot), num(r.a), num(r.b), num(r.overlap)};
            for (double v : r.by_species) cells.push_back(num(v));
            overlaps.row(cells);
        }
        out.write("overlaps.csv", overlaps);
        Csv gg({"f_degree", "psi_degree", "discrepancy", "null_mean", "null_sd", "consistent"});
        json gg_json = json::array();
        for (const auto& r : diag.gg) {
            gg.row({num(static_cast<std::size_t>(r.f_degree)), num(static_cast<std::size_t>(r.psi_degree)),
                    num(r.discrepancy), num(r.null_mean), num(r.null_sd), flag(r.consistent)});
            gg_json.push_back({{"f_degree", r.f_degree}, {"psi_degree", r.psi_degree}, {"discrepancy", r.discrepancy},
                               {"null_mean", r.null_mean}, {"null_sd", r.null_sd}, {"consistent", r.consistent}});
        }
        out.write("gg.csv", gg);
        Csv sync({"species", "residual"});
        json sync_json = json::object();
        for (std::size_t s = 0; s < diag.sync.size(); ++s) {
            sync.row({model.species[s], num(diag.sync[s].residual)});
            sync_json[model.species[s]] = diag.sync[s].residual;
        }
        out.write("sync.csv", sync);
        record.outputs["gg"] = gg_json;
        record.outputs["sync_residual"] = sync_json;
    }
    return record;
}

RunRecord run_compare(const json& config, const RunContext& context) {
    auto record = start("compare", config);
    Writer out{context, record};
    const auto model = parse_model(section(config, "model"));
    const auto field = parse_field(config, model);
    const json& cmd = section(config, "command");
    const auto seed = require_seed(config, context);
    const double tolerance = context.tolerance.value_or(read_or<double>(cmd, "tolerance", 0.01, "command"));
    const double allowance = read_or<double>(cmd, "allowance", 0.05, "command");

    Csv table({"quantity", "value", "stderr", "note"});
    const auto ks = read_or<std::vector<std::size_t>>(cmd, "k", {1, 2}, "command");
    const auto sweep = minimize_parisi_levels(model, ks, field, parse_minimize(cmd, seed, context));
    std::size_t best = 0;
    for (std::size_t i = 0; i < sweep.results.size(); ++i) {
        const auto& r = sweep.results[i];
        table.row({"variational_k" + std::to_string(r.levels), num(r.evaluation.value), "0",
                   r.converged ? "converged" : "not converged"});
        if (r.evaluation.value < sweep.results[best].evaluation.value) best = i;
    }
    const auto& best_result = sweep.results[best];
    const double variational = best_result.evaluation.value;
    table.row({"variational", num(variational), "0", "k=" + std::to_string(best_result.levels)});
    record.outputs["variational"] = variational;
    record.outputs["monotone"] = sweep.monotone;

    const double cs = c_star(model);
    table.row({"c_star", num(cs), "0", ""});
    record.outputs["c_star"] = cs;
    json audit = json::array();
    for (std::size_t i = 1; i < sweep.results.size(); ++i) {
        const auto chk = lipschitz_check(model, sweep.results[i - 1].pair, sweep.results[i].pair);
        const auto label = "k" + std::to_string(sweep.results[i - 1].levels) + "_vs_k" +
                           std::to_string(sweep.results[i].levels);
        table.row({"lipschitz_lhs_" + label, num(chk.lhs), "0", ""});
        table.row({"lipschitz_rhs_" + label, num(chk.rhs), "0", chk.ok ? "ok" : "violated"});
        audit.push_back({{"pairs", label}, {"lhs", chk.lhs}, {"rhs", chk.rhs}, {"ok", chk.ok}});
    }
    record.outputs["lipschitz"] = audit;

    std::optional<McEstimate> mc;
    if (cmd.contains("N")) {
        const auto counts = parse_counts(cmd, model);
        mc = free_energy_ti(model, counts, parse_ti(cmd, seed, context.workers));
        table.row({"mc", num(mc->value), num(mc->std_error), mc->equilibrated ? "equilibrated" : "not equilibrated"});
        record.outputs["mc"] = estimate_json(*mc);
        try {
            const auto gap = guerra_gap(model, *mc, variational, allowance);
            table.row({"guerra_gap", num(gap.gap), num(mc->std_error), gap.ok ? "ok" : "violated"});
            record.outputs["guerra"] = {{"gap", gap.gap}, {"threshold", gap.threshold}, {"ok", gap.ok}};
        } catch (const RefusedError& e) {
            table.row({"guerra_gap", "nan", "nan", "refused"});
            record.outputs["guerra"] = {{"refused", e.what()}};
        }
    }

    if (cmd.contains("M")) {
        const auto rows = pm_sweep(model, best_result.pair, cmd, seed, context.workers);
        for (const auto& r : rows)
            table.row({"pm_over_m_M" + std::to_string(r.M), num(r.estimate.value), num(r.estimate.std_error), ""});
        const auto ext = extrapolate(rows);
        table.row({"pm_extrapolated", num(ext.value), num(ext.std_error), "intercept in 1/M"});
        record.outputs["pm_extrapolated"] = {{"value", ext.value}, {"std_error", ext.std_error}};
        record.outputs["pm_agrees"] = std::abs(ext.value - variational) <= 3.0 * ext.std_error + tolerance;
    }
    if (mc) {
        record.outputs["mc_agrees"] =
            std::abs(mc->value - variational) <= 3.0 * mc->std_error + allowance;
    }
    out.write("compare.csv", table);
    return record;
}

RunRecord run_selftest(const json& config, const RunContext& context) {
    auto record = start("selftest", config);
    Writer out{context, record};
    const json& cmd = section(config, "command");
    const std::uint64_t seed = context.seed.value_or(read_or<std::uint64_t>(config, "seed", 20240601, "config"));
    const double tol = context.tolerance.value_or(1e-9);
    Csv table({"check", "value", "expected", "tolerance", "ok"});
    bool all_ok = true;
    auto check = [&](const std::string& name, double value, double expected, double t) {
        const bool ok = std::abs(value - expected) <= t;
        all_ok = all_ok && ok;
        table.row({name, num(value), num(expected), num(t), flag(ok)});
    };

    const std::vector<std::pair<std::string, MixedModel>> annealed{
        {"annealed_single_beta0.5", models::single_species({{2, 0.5}})},
        {"annealed_single_beta1", models::single_species({{2, 1.0}})},
        {"annealed_two_species", models::all_ones({0.5, 0.5}, 2, 1.0)}};
    for (const auto& [name, m] : annealed) {
        const std::vector<double> ones(m.species_count(), 1.0);
        AdmissiblePair pair{DiscreteMeasure::dirac(0.0), SyncMap::identity(m.species_count())};
        check(name, parisi_value(m, pair), 0.5 * xi(m, ones), tol);
    }
    check("bipartite_min_eigenvalue", check_convexity(models::bipartite(1.0)).min_eigenvalue, -0.5, 1e-9);

    const MixedModel model = config.contains("model") ? parse_model(config.at("model"))
                                                      : models::all_ones({0.5, 0.5}, 2, 1.0);
    SpeciesCounts counts;
    if (cmd.contains("N")) counts = parse_counts(cmd, model);
    else counts.n_per_species.assign(model.species_count(), 8);
    {
        const auto disorder = build_disorder(model, counts, seed);
        auto rng = Rng::stream(seed, {0x5e1f});
        const auto sigma = random_configuration(counts, rng);
        const double fast = hamiltonian_eval(disorder, sigma);
        check("hamiltonian_fast_vs_naive", fast, hamiltonian_naive(disorder, sigma), 1e-10 * (1.0 + std::abs(fast)));
    }
    const auto trials = read_or<std::size_t>(cmd, "trials", 4000, "command");
    const auto cov = covariance_selftest(model, counts, trials, read_or<std::size_t>(cmd, "pairs", 4, "command"), seed,
                                         context.workers);
    for (std::size_t p = 0; p < cov.rows.size(); ++p) {
        const auto& r = cov.rows[p];
        const double t = r.std_error > 0 ? 4.0 * r.std_error : 1e-12 * (1.0 + std::abs(r.expected));
        check("covariance_pair" + std::to_string(p), r.empirical, r.expected, t);
    }
    out.write("selftest.csv", table);
    record.outputs["ok"] = all_ok;
    if (!all_ok) {
        record.outputs["failed"] = true;
        if (!context.out_dir.empty()) out.write("run.json", record.to_json().dump(2) + "\n");
        throw NumericalError("selftest failed; see selftest.csv");
    }
    return record;
}

RunRecord run_command(const std::string& command, const json& config, const RunContext& context) {
    const auto t0 = std::chrono::steady_clock::now();
    json effective = config;
    if (context.seed) effective["seed"] = *context.seed;
    RunRecord record;
    if (command == "evaluate") record = run_evaluate(effective, context);
    else if (command == "minimize") record = run_minimize(effective, context);
    else if (command == "cascade") record = run_cascade(effective, context);
    else if (command == "simulate") record = run_simulate(effective, context);
    else if (command == "compare") record = run_compare(effective, context);
    else if (command == "selftest") record = run_selftest(effective, context);
    else throw ValidationError("unknown command " + command);
    record.config_hash = config_hash(record.config);
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!context.out_dir.empty()) {
        Writer out{context, record};
        out.write("run.json", record.to_json().dump(2) + "\n");
    }
    return record;
}

int exit_code_for(const std::exception& error) {
    if (dynamic_cast<const RefusedError*>(&error)) return kRefused;
    if (dynamic_cast<const ValidationError*>(&error)) return kValidation;
    if (dynamic_cast<const NumericalError*>(&error)) return kNumerical;
    if (dynamic_cast<const json::exception*>(&error)) return kValidation;
    return kFailure;
}

int main_entry(int argc, char** argv) {
    CLI::App app{"Parisi functional evaluation, cascades, and Monte Carlo for multi-species spherical spin glasses"};
    app.set_version_flag("--version", std::string(kVersion));
    std::string command, config_path;
    RunContext context;
    std::uint64_t seed = 0;
    double tolerance = 0.0;
    app.add_option("command", command, "evaluate | minimize | cascade | simulate | compare | selftest")
        ->required()
        ->check(CLI::IsMember({"evaluate", "minimize", "cascade", "simulate", "compare", "selftest"}));
    app.add_option("--config", config_path, "JSON run configuration (or a run.json record)");
    app.add_option("--out", context.out_dir, "output directory for CSV files and run.json");
    auto* seed_opt = app.add_option("--seed", seed, "64-bit seed (overrides the config)");
    app.add_option("--workers", context.workers, "worker threads")->check(CLI::PositiveNumber);
    auto* tol_opt = app.add_option("--tolerance", tolerance, "numerical tolerance for the command");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kSuccess : kValidation;
    }
    if (seed_opt->count()) context.seed = seed;
    if (tol_opt->count()) context.tolerance = tolerance;

    try {
        if (const char* env = std::getenv("SPINGLASS_WORKERS"); env && *env) {
            std::size_t pos = 0;
            unsigned long long w = 0;
            try {
                w = std::stoull(env, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != std::string(env).size() || w == 0)
                throw ValidationError(std::string("SPINGLASS_WORKERS must be a positive integer, got ") + env);
            std::cerr << "spinglass: SPINGLASS_WORKERS=" << w << " overrides the worker count (" << context.workers
                      << ")\n";
            context.workers = static_cast<std::size_t>(w);
        }
        json config = json::object();
        if (!config_path.empty()) config = load_config(config_path);
        else if (command != "selftest") throw ValidationError(command + " needs --config");
        const auto record = run_command(command, config, context);
        std::cout << record.to_json().dump(2) << '\n';
        std::cerr << "spinglass: " << command << " finished in " << format_number(record.wall_seconds) << " s";
        if (!context.out_dir.empty()) std::cerr << "; outputs in " << context.out_dir;
        std::cerr << '\n';
        return kSuccess;
    } catch (const std::exception& e) {
        std::cerr << "spinglass: error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace spinglass::cli
