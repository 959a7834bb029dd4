#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spinglass/cascade.hpp"
#include "spinglass/cli.hpp"
#include "spinglass/errors.hpp"
#include "spinglass/parisi.hpp"
#include "spinglass/simulate.hpp"

namespace py = pybind11;
using namespace spinglass;

namespace {

MixedModel model_from(const py::object& spec) {
    const auto text = py::module_::import("json").attr("dumps")(spec).cast<std::string>();
    return cli::parse_model(cli::json::parse(text));
}

AdmissiblePair pair_from(const py::object& spec, std::size_t species) {
    const auto text = py::module_::import("json").attr("dumps")(spec).cast<std::string>();
    return cli::parse_pair(cli::json::parse(text), species);
}

py::object to_python(const cli::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict evaluation_dict(const ParisiEvaluation& ev) {
    py::dict d;
    d["value"] = ev.value;
    d["b_opt"] = ev.b_opt;
    d["d_profile"] = ev.d_profile;
    d["residuals"] = ev.residuals;
    d["boundary"] = ev.boundary;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bindings for the spinglass C++ library. Models and pairs use the CLI config dictionaries.";
    m.attr("__version__") = cli::kVersion;

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<RefusedError>(m, "RefusedError", base.ptr());

    m.def("validate_model", [](const py::object& spec) {
        try {
            model_from(spec);
        } catch (const ValidationError& e) {
            return std::vector<std::string>{e.what()};
        }
        return std::vector<std::string>{};
    }, py::arg("model"), "Empty list for a valid model, otherwise the validation message.");

    m.def("xi", [](const py::object& spec, const std::vector<double>& q) { return xi(model_from(spec), q); },
          py::arg("model"), py::arg("q"));
    m.def("xi_s", [](const py::object& spec, std::size_t s, const std::vector<double>& q) {
        return xi_s(model_from(spec), s, q);
    }, py::arg("model"), py::arg("species"), py::arg("q"));
    m.def("theta", [](const py::object& spec, const std::vector<double>& q) { return theta(model_from(spec), q); },
          py::arg("model"), py::arg("q"));
    m.def("c_star", [](const py::object& spec) { return c_star(model_from(spec)); }, py::arg("model"));
    m.def("check_convexity", [](const py::object& spec) {
        const auto r = check_convexity(model_from(spec));
        py::dict d;
        d["convex"] = r.convex;
        d["min_eigenvalue"] = r.min_eigenvalue;
        d["worst_point"] = r.worst_point;
        return d;
    }, py::arg("model"));

    m.def("parisi_value", [](const py::object& spec, const py::object& pair, const std::vector<double>& field) {
        const auto model = model_from(spec);
        return parisi_value(model, pair_from(pair, model.species_count()), field);
    }, py::arg("model"), py::arg("pair"), py::arg("field") = std::vector<double>{});
    m.def("inner_min_b", [](const py::object& spec, const py::object& pair, const std::vector<double>& field) {
        const auto model = model_from(spec);
        return evaluation_dict(inner_min_b(model, pair_from(pair, model.species_count()), field));
    }, py::arg("model"), py::arg("pair"), py::arg("field") = std::vector<double>{});
    m.def("pseudometric_d", [](const py::object& spec, const py::object& a, const py::object& b) {
        const auto model = model_from(spec);
        const auto S = model.species_count();
        return pseudometric_d(model.lambda, pair_from(a, S), pair_from(b, S));
    }, py::arg("model"), py::arg("a"), py::arg("b"));
    m.def("minimize_parisi", [](const py::object& spec, std::size_t k, std::uint64_t seed, std::size_t starts,
                                std::size_t workers) {
        const auto model = model_from(spec);
        MinimizeOptions o;
        o.seed = seed;
        o.starts = starts;
        o.workers = workers;
        MinimizeResult r;
        {
            py::gil_scoped_release release;
            r = minimize_parisi(model, k, {}, o);
        }
        auto d = evaluation_dict(r.evaluation);
        d["pair"] = to_python(cli::pair_to_json(r.pair));
        d["converged"] = r.converged;
        return d;
    }, py::arg("model"), py::arg("k"), py::arg("seed"), py::arg("starts") = 16, py::arg("workers") = 1);

    m.def("overlap_histogram", [](const std::vector<double>& mseq, std::size_t trees, std::uint64_t seed,
                                  std::size_t fanout, std::size_t workers) {
        CascadeSpec spec;
        spec.m = mseq;
        spec.fanout = fanout;
        OverlapHistogram h;
        {
            py::gil_scoped_release release;
            h = overlap_histogram(spec, trees, 0, seed, workers);
        }
        py::dict d;
        d["masses"] = h.masses;
        d["stderrs"] = h.stderrs;
        d["trees"] = h.trees;
        return d;
    }, py::arg("m"), py::arg("trees"), py::arg("seed"), py::arg("fanout") = 512, py::arg("workers") = 1);
    m.def("pm_over_m", [](const py::object& spec, const py::object& pair, std::size_t M,
                          const std::vector<std::size_t>& samples, std::uint64_t seed) {
        const auto model = model_from(spec);
        const auto p = pair_from(pair, model.species_count());
        const auto e = pm_over_m(model, p, split_counts(model.lambda, M), HierarchicalMethod::monte_carlo(samples, seed));
        return py::make_tuple(e.value, e.std_error);
    }, py::arg("model"), py::arg("pair"), py::arg("M"), py::arg("samples"), py::arg("seed"));

    m.def("free_energy_ti", [](const py::object& spec, const std::vector<std::size_t>& counts, std::size_t t_nodes,
                               std::size_t sweeps, std::size_t burn_in, std::size_t replicas, std::uint64_t seed,
                               std::size_t workers) {
        const auto model = model_from(spec);
        TiOptions o;
        o.t_grid = uniform_grid(t_nodes);
        o.sweeps = sweeps;
        o.burn_in = burn_in;
        o.replicas = replicas;
        o.seed = seed;
        o.workers = workers;
        McEstimate e;
        {
            py::gil_scoped_release release;
            e = free_energy_ti(model, SpeciesCounts{counts}, o);
        }
        py::dict d;
        d["value"] = e.value;
        d["std_error"] = e.std_error;
        d["equilibrated"] = e.equilibrated;
        d["per_replica"] = e.per_replica;
        return d;
    }, py::arg("model"), py::arg("N"), py::arg("t_nodes") = 11, py::arg("sweeps") = 400, py::arg("burn_in") = 200,
       py::arg("replicas") = 16, py::arg("seed") = 0, py::arg("workers") = 1);

    m.def("run", [](const std::string& command, const py::object& config, const std::string& out_dir,
                    std::optional<std::uint64_t> seed, std::size_t workers) {
        const auto text = py::module_::import("json").attr("dumps")(config).cast<std::string>();
        cli::RunContext ctx;
        ctx.out_dir = out_dir;
        ctx.seed = seed;
        ctx.workers = workers;
        cli::RunRecord r;
        {
            py::gil_scoped_release release;
            r = cli::run_command(command, cli::json::parse(text), ctx);
        }
        return to_python(r.to_json());
    }, py::arg("command"), py::arg("config"), py::arg("out_dir") = "", py::arg("seed") = py::none(),
       py::arg("workers") = 1, "Run a CLI subcommand in-process and return its run record.");
}
