#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfg_uzawa/errors.hpp"
#include "mfg_uzawa/grid.hpp"
#include "mfg_uzawa/linear_solvers.hpp"
#include "mfg_uzawa/obstacle_projection.hpp"
#include "mfg_uzawa/running_cost.hpp"

namespace mfg_uzawa {

enum class MfgKind { kStopping, kImpulse, kContinuous };

std::string_view to_string(MfgKind kind);
/// Accepts "stopping", "impulse", "continuous" (case-insensitive).
MfgKind parse_kind(std::string_view text);

/// Named base costs evaluated at the grid nodes: "stop_imp" and "continuous".
Field f0_preset(std::string_view name, const TorusGrid& grid);

/// Discrete stationary MFG system.
///
/// Stopping and impulse kinds, with K the admissible multipliers:
///   m >= 0,  f_d(m) - A u >= 0,  <f_d(m) - A u, m> = 0,
///   u in K,  <rho - A m, u' - u> <= 0 for all u' in K.
/// Continuous kind, with HJB(u) = A u + g(D_h u) and J(u) its Jacobian:
///   m >= 0,  f_d(m) - HJB(u) >= 0,  <f_d(m) - HJB(u), m> = 0,  J(u)^T m = rho.
class MfgProblem {
public:
    /// The constraint must match the kind: zero obstacle for stopping, jump
    /// obstacle for impulse, unconstrained for continuous. Stopping and
    /// impulse also accept an unconstrained set (relaxed multiplier).
    MfgProblem(MfgKind kind, EllipticOperator op, RunningCost cost, Field rho, ConstraintSet constraint);

    static MfgProblem stopping(EllipticOperator op, RunningCost cost, Field rho);
    static MfgProblem impulse(EllipticOperator op, RunningCost cost, Field rho, JumpOperator jump);
    static MfgProblem continuous(EllipticOperator op, RunningCost cost, Field rho);

    MfgKind kind() const noexcept { return kind_; }
    const EllipticOperator& op() const noexcept { return op_; }
    const TorusGrid& grid() const noexcept { return op_.grid(); }
    const RunningCost& cost() const noexcept { return cost_; }
    const Field& rho() const noexcept { return rho_; }
    const ConstraintSet& constraint() const noexcept { return constraint_; }

    /// Same problem with the multiplier constraint removed.
    MfgProblem relaxed() const;

private:
    MfgKind kind_;
    EllipticOperator op_;
    RunningCost cost_;
    Field rho_;
    ConstraintSet constraint_;
};

struct TraceRow {
    int iter = 0;
    /// ||m_{n+1} - m_n||_h
    double dm = 0.0;
    /// |<f_d(m) - q, m>| of the new density
    double comp_res = 0.0;
    /// Constraint violation of the new multiplier
    double feas_res = 0.0;
    /// ||m_n - J(u_n)^{-T} rho||_h, continuous kind only
    std::optional<double> fp_res;
    double delta_n = 0.0;
    /// ||min(f_d(m) - q, 0)||_h of the new density
    double density_feas = 0.0;
    /// |lambda <1, w> - <1, rho>| of the adjoint solve, continuous kind only
    std::optional<double> fp_mass_defect;
};

struct IterationTrace {
    std::vector<TraceRow> rows;
    std::vector<std::string> warnings;
};

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 50;
    KrylovConfig krylov{1e-12, 0.0, 5000, false};
};

struct NewtonResult {
    Field u;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_history;
};

struct UzawaConfig {
    /// Outer step; constant delta_n for the continuous kind.
    double delta = 0.5;
    int max_outer = 200;
    /// Stop when ||m_{n+1} - m_n||_h < tol_outer.
    double tol_outer = 1e-8;
    /// Inner tolerances; 0 selects tol_outer / 10.
    double density_tol = 0.0;
    double projection_tol = 0.0;
    double newton_tol = 0.0;
    int density_max_iter = 100000;
    int projection_max_iter = 200000;
    int newton_max_iter = 50;
    DensityMethod density_method = DensityMethod::kProjectedGradient;
    double projection_sigma = 0.0;
    KrylovConfig krylov{1e-12, 0.0, 5000, false};
    EllipticMethod elliptic_method = EllipticMethod::kFastDiagonalization;
    /// Initial multiplier; zero when absent.
    std::optional<Field> u0;
    /// Called after every outer iteration.
    std::function<void(const TraceRow&)> observer;

    void validate() const;
    double resolved_density_tol() const { return density_tol > 0.0 ? density_tol : 0.1 * tol_outer; }
    double resolved_projection_tol() const { return projection_tol > 0.0 ? projection_tol : 0.1 * tol_outer; }
    double resolved_newton_tol() const { return newton_tol > 0.0 ? newton_tol : 0.1 * tol_outer; }
};

/// Iterate (u_n, m_n) of the outer loop; m_n is the density induced by u_n.
struct MfgState {
    Field u;
    Field m;
    /// Projection multipliers, carried as a warm start.
    std::vector<Field> dual;
    int iteration = 0;
};

struct MfgSolution {
    Field u;
    Field m;
    IterationTrace trace;
    bool converged = false;
    int iterations = 0;
};

/// Invariants of a candidate pair (u, m), all zero at a solution.
struct SolutionDiagnostics {
    /// ||min(f_d(m) - q, 0)||_h with q the density target of u
    double density_feasibility = 0.0;
    /// |<f_d(m) - q, m>|
    double density_complementarity = 0.0;
    double density_min = 0.0;
    double multiplier_violation = 0.0;
    /// ||A u - P(A u - delta (m - A^{-1} rho))||_h / delta, stopping and impulse kinds
    std::optional<double> multiplier_residual;
    /// ||J(u)^T m - rho||_h, continuous kind
    std::optional<double> fp_residual;
    /// |lambda <1, m> - <1, rho>|, continuous kind
    std::optional<double> mass_defect;
};

/// A hard inner failure during run(); carries the trace up to the failure.
class MfgRunAborted : public SolverError {
public:
    MfgRunAborted(const std::string& what, int iteration, IterationTrace trace)
        : SolverError(what), iteration_(iteration), trace_(std::move(trace)) {}
    int iteration() const noexcept { return iteration_; }
    const IterationTrace& trace() const noexcept { return trace_; }

private:
    int iteration_;
    IterationTrace trace_;
};

/// u with ||A u + g(D_h u) - rhs||_h <= tol by damped Newton; each direction
/// solves the upwind Jacobian by BiCGStab. Throws MaxIterationsExceeded or
/// LineSearchStalled.
NewtonResult newton_hjb(const EllipticOperator& op, const Field& rhs, const Field& u_init,
                        const NewtonOptions& options = {});

/// Jacobian of HJB at u as a matrix-free map.
LinearMap hjb_jacobian(const EllipticOperator& op, const Field& u);
/// Transpose of hjb_jacobian.
LinearMap hjb_jacobian_transpose(const EllipticOperator& op, const Field& u);

/// m with J(u)^T m = rho (adjoint Fokker-Planck equation).
Field solve_fp_adjoint(const EllipticOperator& op, const Field& u, const Field& rho, const KrylovConfig& cfg = {});

/// Runs the outer iteration for one problem; owns its solvers.
class MfgSolver {
public:
    MfgSolver(MfgProblem problem, UzawaConfig config);

    const MfgProblem& problem() const noexcept { return problem_; }
    const UzawaConfig& config() const noexcept { return config_; }

    /// q = A u (stopping, impulse) or HJB(u) (continuous).
    Field density_target(const Field& u) const;
    ComplementaritySolution density(const Field& u, const Field* m_start = nullptr) const;

    /// (u0, density(u0)) with u0 from the config.
    MfgState initial_state() const;
    /// One outer iteration: (u_n, m_n) -> (u_{n+1}, m_{n+1}). The row is
    /// filled when given. delta overrides the configured step.
    MfgState step(const MfgState& state, TraceRow* row = nullptr, std::optional<double> delta = {}) const;

    MfgSolution run() const;
    MfgSolution run(MfgState start) const;

    SolutionDiagnostics diagnose(const Field& u, const Field& m) const;

private:
    MfgState step_projected(const MfgState& state, double delta, TraceRow* row) const;
    MfgState step_continuous(const MfgState& state, double delta, TraceRow* row) const;

    MfgProblem problem_;
    UzawaConfig config_;
    EllipticSolver solver_;
    Field a_inv_rho_;
};

MfgSolution run(const MfgProblem& problem, const UzawaConfig& config);

MfgState uzawa_step_stopping(const MfgProblem& problem, const UzawaConfig& config, const MfgState& state);
MfgState uzawa_step_impulse(const MfgProblem& problem, const UzawaConfig& config, const MfgState& state);
MfgState uzawa_step_continuous(const MfgProblem& problem, const UzawaConfig& config, const MfgState& state,
                               double delta_n);

struct ErrorBound {
    double eps1 = 0.0;
    double eps2 = 0.0;
    /// (eps1 + eps2) / alpha, an upper bound on ||m - mu||_h^2.
    double bound = 0.0;
};

/// A posteriori estimate for the stopping kind from a candidate pair with
/// v <= 0 and mu >= 0:
///   eps1 = <f_d(mu) - A v, mu>   provided f_d(mu) - A v >= -tol,
///   eps2 = <A v, mu> - <v, rho>  provided rho - A mu >= -tol.
/// Returns nullopt (infeasible) when either proviso fails.
std::optional<ErrorBound> error_bound(const MfgProblem& problem, const Field& v, const Field& mu, double tol = 1e-12);

}  // namespace mfg_uzawa
