#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mfg_uzawa/experiments.hpp"
#include "mfg_uzawa/mfg_solvers.hpp"
#include "mfg_uzawa/uzawa_general.hpp"

namespace py = pybind11;
using namespace mfg_uzawa;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grid field as a d x d array indexed [i, j].
RowMatrix to_array(const Field& f) {
    const int d = f.grid().d();
    return Eigen::Map<const RowMatrix>(f.data().data(), d, d);
}

Field to_field(const RowMatrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("field arrays must be square (d x d)");
    const TorusGrid grid(static_cast<int>(a.rows()));
    return Field(grid, std::vector<double>(a.data(), a.data() + a.size()));
}

Field to_field(const RowMatrix& a, const TorusGrid& grid) {
    Field f = to_field(a);
    require_same_grid(f.grid(), grid, "array");
    return f;
}

py::dict row_dict(const TraceRow& row) {
    py::dict out;
    out["iter"] = row.iter;
    out["dm"] = row.dm;
    out["comp_res"] = row.comp_res;
    out["feas_res"] = row.feas_res;
    out["fp_res"] = row.fp_res;
    out["delta_n"] = row.delta_n;
    out["density_feas"] = row.density_feas;
    out["fp_mass_defect"] = row.fp_mass_defect;
    return out;
}

py::dict diagnostics_dict(const SolutionDiagnostics& d) {
    py::dict out;
    out["density_feasibility"] = d.density_feasibility;
    out["density_complementarity"] = d.density_complementarity;
    out["density_min"] = d.density_min;
    out["multiplier_violation"] = d.multiplier_violation;
    out["multiplier_residual"] = d.multiplier_residual;
    out["fp_residual"] = d.fp_residual;
    out["mass_defect"] = d.mass_defect;
    return out;
}

py::dict solve(const ExperimentConfig& config, const std::optional<std::function<void(py::dict)>>& observer) {
    config.validate();
    UzawaConfig uzawa = config.uzawa();
    if (observer) {
        uzawa.observer = [&observer](const TraceRow& row) {
            const py::gil_scoped_acquire gil;
            (*observer)(row_dict(row));
        };
    }
    const MfgSolver solver(config.problem(), uzawa);
    std::optional<MfgSolution> solution;
    SolutionDiagnostics diagnostics;
    {
        const py::gil_scoped_release nogil;
        solution = solver.run();
        diagnostics = solver.diagnose(solution->u, solution->m);
    }
    py::list rows;
    for (const TraceRow& row : solution->trace.rows) rows.append(row_dict(row));
    py::dict out;
    out["u"] = to_array(solution->u);
    out["m"] = to_array(solution->m);
    out["converged"] = solution->converged;
    out["iterations"] = solution->iterations;
    out["trace"] = rows;
    out["warnings"] = solution->trace.warnings;
    out["diagnostics"] = diagnostics_dict(diagnostics);
    return out;
}

std::string run_experiment_json(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out) {
    RunOptions options;
    options.output_dir = out;
    const py::gil_scoped_release nogil;
    return run_experiment(config, options).to_json();
}

py::dict uzawa_affine(const Eigen::MatrixXd& m, const Eigen::VectorXd& q, const Eigen::MatrixXd& a,
                      const Eigen::VectorXd& r, const Eigen::VectorXd& lo1, const Eigen::VectorXd& hi1,
                      const Eigen::VectorXd& lo2, const Eigen::VectorXd& hi2, double alpha, double delta,
                      double outer_tol, int max_outer) {
    const GeneralVIProblem problem([m, q](const Vector& x) { return (m * x + q).eval(); }, AffineMap{a, r},
                                   ConvexSet::box(lo1, hi1), ConvexSet::box(lo2, hi2), alpha);
    UzawaGeneralOptions options;
    options.outer_tol = outer_tol;
    options.max_outer = max_outer;
    UzawaGeneralState state;
    {
        const py::gil_scoped_release nogil;
        try {
            state = uzawa_iterate(problem, delta, Vector::Zero(a.rows()), options);
        } catch (const UzawaMaxIterations& err) {
            state = err.state();
        }
    }
    py::dict out;
    out["x"] = state.x;
    out["y_image"] = state.y_image;
    out["iterations"] = state.iteration;
    out["converged"] = state.converged;
    out["step_admissible"] = state.step_admissible;
    out["warnings"] = state.warnings;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "Uzawa-type solvers for stationary mean field games on the torus";

    auto solver_error = py::register_exception<SolverError>(mod, "SolverError", PyExc_RuntimeError);
    py::register_exception<MaxIterationsExceeded>(mod, "MaxIterationsExceeded", solver_error.ptr());
    py::register_exception<ParseError>(mod, "ConfigParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(mod, "ConfigValidationError", PyExc_ValueError);

    py::class_<ExperimentConfig>(mod, "ExperimentConfig")
        .def(py::init<>())
        .def_static("parse", [](const std::string& text) { return parse_config(text); }, py::arg("text"))
        .def_static("load", &load_config, py::arg("path"))
        .def("emit", &emit_config)
        .def("validate", &ExperimentConfig::validate)
        .def_readwrite("name", &ExperimentConfig::name)
        .def_property(
            "kind",
            [](const ExperimentConfig& c) -> std::optional<std::string> {
                if (!c.kind) return std::nullopt;
                return std::string(to_string(*c.kind));
            },
            [](ExperimentConfig& c, const std::optional<std::string>& kind) {
                c.kind = kind ? std::optional(parse_kind(*kind)) : std::nullopt;
            })
        .def_readwrite("d", &ExperimentConfig::d)
        .def_readwrite("nu", &ExperimentConfig::nu)
        .def_readwrite("lambda_", &ExperimentConfig::lambda)
        .def_readwrite("delta", &ExperimentConfig::delta)
        .def_readwrite("rho", &ExperimentConfig::rho)
        .def_readwrite("f0", &ExperimentConfig::f0)
        .def_readwrite("cost_identity", &ExperimentConfig::cost_identity)
        .def_readwrite("cost_smoothing", &ExperimentConfig::cost_smoothing)
        .def_readwrite("k0", &ExperimentConfig::k0)
        .def_readwrite("xi", &ExperimentConfig::xi)
        .def_readwrite("max_outer", &ExperimentConfig::max_outer)
        .def_readwrite("tol_outer", &ExperimentConfig::tol_outer)
        .def_readwrite("output_dir", &ExperimentConfig::output_dir)
        .def_readwrite("emit_heatmaps", &ExperimentConfig::emit_heatmaps)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_property_readonly("resolved_name", &ExperimentConfig::resolved_name)
        .def_property_readonly("resolved_kind",
                               [](const ExperimentConfig& c) { return std::string(to_string(c.resolved_kind())); })
        .def_property_readonly("resolved_f0", &ExperimentConfig::resolved_f0)
        .def_property_readonly("jump_offset",
                               [](const ExperimentConfig& c) {
                                   const GridOffset off = c.jump_offset();
                                   return std::pair{off.di, off.dj};
                               })
        .def(py::self == py::self)
        .def("__repr__", [](const ExperimentConfig& c) {
            return "<ExperimentConfig " + c.resolved_name() + " (" + std::string(to_string(c.resolved_kind())) +
                   ", d=" + std::to_string(c.d) + ")>";
        });

    mod.def("presets", [] {
        py::list out;
        for (const Preset& p : presets()) {
            py::dict entry;
            entry["name"] = std::string(p.name);
            entry["description"] = std::string(p.description);
            entry["text"] = std::string(p.text);
            out.append(entry);
        }
        return out;
    });

    mod.def("solve", &solve, py::arg("config"), py::arg("observer") = std::nullopt,
            "Runs the outer iteration in memory; returns u, m, trace and diagnostics.");
    mod.def("_run_experiment", &run_experiment_json, py::arg("config"), py::arg("output_dir") = std::nullopt);

    mod.def("f0_preset", [](const std::string& name, int d) { return to_array(f0_preset(name, TorusGrid(d))); },
            py::arg("name"), py::arg("d"));
    mod.def("numerical_hamiltonian", &numerical_hamiltonian, py::arg("p"));
    mod.def("grad_numerical_hamiltonian", &grad_numerical_hamiltonian, py::arg("p"));
    mod.def(
        "apply_elliptic",
        [](const RowMatrix& u, double nu, double lambda) {
            const Field f = to_field(u);
            return to_array(apply_elliptic(EllipticOperator(f.grid(), nu, lambda), f));
        },
        py::arg("u"), py::arg("nu"), py::arg("lambda_") = 1.0);
    mod.def(
        "apply_hjb",
        [](const RowMatrix& u, double nu, double lambda) {
            const Field f = to_field(u);
            return to_array(apply_hjb(EllipticOperator(f.grid(), nu, lambda), f));
        },
        py::arg("u"), py::arg("nu"), py::arg("lambda_") = 1.0);
    mod.def(
        "solve_fp_adjoint",
        [](const RowMatrix& u, const RowMatrix& rho, double nu, double lambda) {
            const Field fu = to_field(u);
            return to_array(solve_fp_adjoint(EllipticOperator(fu.grid(), nu, lambda), fu, to_field(rho, fu.grid())));
        },
        py::arg("u"), py::arg("rho"), py::arg("nu"), py::arg("lambda_") = 1.0);
    mod.def(
        "error_bound",
        [](const ExperimentConfig& config, const RowMatrix& v, const RowMatrix& mu,
           double tol) -> std::optional<py::dict> {
            const MfgProblem problem = config.problem();
            const auto eb = error_bound(problem, to_field(v, problem.grid()), to_field(mu, problem.grid()), tol);
            if (!eb) return std::nullopt;
            py::dict out;
            out["eps1"] = eb->eps1;
            out["eps2"] = eb->eps2;
            out["bound"] = eb->bound;
            return out;
        },
        py::arg("config"), py::arg("v"), py::arg("mu"), py::arg("tol") = 1e-12);
    mod.def("uzawa_affine", &uzawa_affine, py::arg("M"), py::arg("q"), py::arg("A"), py::arg("r"), py::arg("lo1"),
            py::arg("hi1"), py::arg("lo2"), py::arg("hi2"), py::arg("alpha"), py::arg("delta"),
            py::arg("outer_tol") = 1e-10, py::arg("max_outer") = 10000,
            "Generalized Uzawa for f(x) = M x + q on a box, multiplier image in a box, coupling A x + r.");
}
