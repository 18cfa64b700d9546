#include "mfg_uzawa/mfg_solvers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mfg_uzawa {

std::string_view to_string(MfgKind kind) {
    switch (kind) {
        case MfgKind::kStopping: return "stopping";
        case MfgKind::kImpulse: return "impulse";
        default: return "continuous";
    }
}

MfgKind parse_kind(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "stopping") return MfgKind::kStopping;
    if (lower == "impulse") return MfgKind::kImpulse;
    if (lower == "continuous") return MfgKind::kContinuous;
    throw std::invalid_argument("unknown problem kind '" + std::string(text) + "'");
}

Field f0_preset(std::string_view name, const TorusGrid& grid) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    if (name == "stop_imp")
        return Field::from_function(grid, [](double x, double y) {
            return std::cos(two_pi * x) + 2.0 * std::cos(two_pi * (y - x)) + std::cos(3.0 * two_pi * x);
        });
    if (name == "continuous")
        return Field::from_function(grid, [](double x, double y) {
            return std::cos(two_pi * x) + std::cos(two_pi * y) + std::cos(2.0 * two_pi * x);
        });
    throw std::invalid_argument("unknown f0 preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

MfgProblem::MfgProblem(MfgKind kind, EllipticOperator op, RunningCost cost, Field rho, ConstraintSet constraint)
    : kind_(kind), op_(std::move(op)), cost_(std::move(cost)), rho_(std::move(rho)), constraint_(std::move(constraint)) {
    require_same_grid(op_.grid(), cost_.grid(), "MfgProblem cost");
    require_same_grid(op_.grid(), rho_.grid(), "MfgProblem rho");
    if (!rho_.all_finite() || rho_.min() < 0.0) throw std::invalid_argument("MfgProblem: rho must be finite and >= 0");
    if (!(cost_.alpha() > 0.0)) throw std::invalid_argument("MfgProblem: cost must be strictly monotone (alpha > 0)");
    using Kind = ConstraintSet::Kind;
    const Kind ck = constraint_.kind();
    const bool ok = ck == Kind::kUnconstrained || (kind_ == MfgKind::kStopping && ck == Kind::kZeroObstacle) ||
                    (kind_ == MfgKind::kImpulse && ck == Kind::kJumpObstacle);
    if (!ok)
        throw std::invalid_argument("MfgProblem: constraint '" + constraint_.name() + "' does not match kind '" +
                                    std::string(to_string(kind_)) + "'");
}

MfgProblem MfgProblem::stopping(EllipticOperator op, RunningCost cost, Field rho) {
    return MfgProblem(MfgKind::kStopping, std::move(op), std::move(cost), std::move(rho),
                      ConstraintSet::zero_obstacle());
}

MfgProblem MfgProblem::impulse(EllipticOperator op, RunningCost cost, Field rho, JumpOperator jump) {
    return MfgProblem(MfgKind::kImpulse, std::move(op), std::move(cost), std::move(rho),
                      ConstraintSet::jump_obstacle(std::move(jump)));
}

MfgProblem MfgProblem::continuous(EllipticOperator op, RunningCost cost, Field rho) {
    return MfgProblem(MfgKind::kContinuous, std::move(op), std::move(cost), std::move(rho),
                      ConstraintSet::unconstrained());
}

MfgProblem MfgProblem::relaxed() const {
    return MfgProblem(kind_, op_, cost_, rho_, ConstraintSet::unconstrained());
}

void UzawaConfig::validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("UzawaConfig: delta must be > 0");
    if (max_outer < 0) throw std::invalid_argument("UzawaConfig: max_outer must be >= 0");
    if (!(tol_outer > 0.0)) throw std::invalid_argument("UzawaConfig: tol_outer must be > 0");
    if (density_tol < 0.0 || projection_tol < 0.0 || newton_tol < 0.0)
        throw std::invalid_argument("UzawaConfig: inner tolerances must be >= 0");
    if (density_max_iter < 1 || projection_max_iter < 1 || newton_max_iter < 1)
        throw std::invalid_argument("UzawaConfig: inner iteration caps must be >= 1");
    krylov.validate();
}

// ---------------------------------------------------------------------------

namespace {

struct Upwind {
    std::vector<Quad> grad;
};

Upwind upwind_coefficients(const Field& u) {
    const DerivativeStencil st = derivative_stencil(u);
    Upwind out{std::vector<Quad>(st.p.size())};
    for (std::size_t k = 0; k < st.p.size(); ++k) out.grad[k] = grad_numerical_hamiltonian(st.p[k]);
    return out;
}

Field jacobian_diagonal(const EllipticOperator& op, const Upwind& up) {
    const double inv_h = 1.0 / op.grid().h();
    Field diag(op.grid(), op.diagonal());
    for (std::size_t k = 0; k < diag.size(); ++k) {
        const Quad& q = up.grad[k];
        diag[k] += inv_h * (-q[0] + q[1] - q[2] + q[3]);
    }
    return diag;
}

}  // namespace

LinearMap hjb_jacobian(const EllipticOperator& op, const Field& u) {
    require_same_grid(op.grid(), u.grid(), "hjb_jacobian");
    auto up = std::make_shared<const Upwind>(upwind_coefficients(u));
    Field diag = jacobian_diagonal(op, *up);
    return LinearMap{[op, up](const Field& w) {
                         const TorusGrid& g = w.grid();
                         const int d = g.d();
                         const double inv_h = 1.0 / g.h();
                         Field out = op.apply(w);
                         for (int i = 0; i < d; ++i)
                             for (int j = 0; j < d; ++j) {
                                 const std::size_t k = g.index(i, j);
                                 const Quad& q = up->grad[k];
                                 const double c = w[k];
                                 out[k] += inv_h * (q[0] * (w(i + 1, j) - c) + q[1] * (c - w(i - 1, j)) +
                                                    q[2] * (w(i, j + 1) - c) + q[3] * (c - w(i, j - 1)));
                             }
                         return out;
                     },
                     op.grid(), false, std::move(diag)};
}

LinearMap hjb_jacobian_transpose(const EllipticOperator& op, const Field& u) {
    require_same_grid(op.grid(), u.grid(), "hjb_jacobian_transpose");
    auto up = std::make_shared<const Upwind>(upwind_coefficients(u));
    Field diag = jacobian_diagonal(op, *up);
    return LinearMap{[op, up](const Field& z) {
                         const TorusGrid& g = z.grid();
                         const int d = g.d();
                         const double inv_h = 1.0 / g.h();
                         Field out = op.apply(z);
                         auto gz = [&](int i, int j, int c) { return up->grad[g.index(i, j)][c] * z(i, j); };
                         for (int i = 0; i < d; ++i)
                             for (int j = 0; j < d; ++j) {
                                 out(i, j) += inv_h * (gz(i - 1, j, 0) - gz(i, j, 0) + gz(i, j, 1) - gz(i + 1, j, 1) +
                                                       gz(i, j - 1, 2) - gz(i, j, 2) + gz(i, j, 3) - gz(i, j + 1, 3));
                             }
                         return out;
                     },
                     op.grid(), false, std::move(diag)};
}

NewtonResult newton_hjb(const EllipticOperator& op, const Field& rhs, const Field& u_init, const NewtonOptions& options) {
    require_same_grid(op.grid(), rhs.grid(), "newton_hjb");
    require_same_grid(op.grid(), u_init.grid(), "newton_hjb");
    if (!rhs.all_finite()) throw std::invalid_argument("newton_hjb: rhs has non-finite entries");
    if (!(options.tol > 0.0) || options.max_iter < 1)
        throw std::invalid_argument("newton_hjb: invalid tolerance or iteration cap");

    NewtonResult result{u_init, 0, 0.0, {}};
    Field r = apply_hjb(op, result.u);
    r -= rhs;
    double norm = norm_h(r);
    result.residual_history.push_back(norm);

    while (norm > options.tol) {
        if (result.iterations >= options.max_iter)
            throw MaxIterationsExceeded("newton_hjb did not converge", result.iterations, norm);
        KrylovConfig krylov = options.krylov;
        krylov.atol = std::max(krylov.atol, 1e-2 * options.tol);
        Field minus_r = -1.0 * r;
        const Field step = bicgstab_solve(hjb_jacobian(op, result.u), minus_r, krylov).x;

        double t = 1.0;
        for (;;) {
            Field trial = result.u;
            trial.axpy(t, step);
            Field r_trial = apply_hjb(op, trial);
            r_trial -= rhs;
            const double trial_norm = norm_h(r_trial);
            if (trial_norm <= (1.0 - 1e-4 * t) * norm) {
                result.u = std::move(trial);
                r = std::move(r_trial);
                norm = trial_norm;
                break;
            }
            t *= 0.5;
            if (t < 1e-10) {
                std::ostringstream msg;
                msg << "newton_hjb: line search stalled at residual " << norm;
                throw LineSearchStalled(msg.str());
            }
        }
        ++result.iterations;
        result.residual_history.push_back(norm);
    }
    result.residual = norm;
    return result;
}

Field solve_fp_adjoint(const EllipticOperator& op, const Field& u, const Field& rho, const KrylovConfig& cfg) {
    require_same_grid(op.grid(), rho.grid(), "solve_fp_adjoint");
    if (rho.min() < 0.0) throw std::invalid_argument("solve_fp_adjoint: rho must be >= 0");
    return bicgstab_solve(hjb_jacobian_transpose(op, u), rho, cfg).x;
}

// ---------------------------------------------------------------------------

MfgSolver::MfgSolver(MfgProblem problem, UzawaConfig config)
    : problem_(std::move(problem)),
      config_(std::move(config)),
      solver_(problem_.op(), config_.elliptic_method, config_.krylov),
      a_inv_rho_(problem_.grid()) {
    config_.validate();
    if (config_.u0) require_same_grid(problem_.grid(), config_.u0->grid(), "UzawaConfig u0");
    a_inv_rho_ = solver_.solve(problem_.rho());
}

Field MfgSolver::density_target(const Field& u) const {
    return problem_.kind() == MfgKind::kContinuous ? apply_hjb(problem_.op(), u) : problem_.op().apply(u);
}

ComplementaritySolution MfgSolver::density(const Field& u, const Field* m_start) const {
    const DensityOptions options{config_.resolved_density_tol(), config_.density_max_iter, config_.density_method,
                                 0.0};
    return solve_density_vi(problem_.cost(), density_target(u), options, m_start);
}

MfgState MfgSolver::initial_state() const {
    Field u = config_.u0 ? *config_.u0 : Field(problem_.grid());
    Field m = density(u).m;
    return MfgState{std::move(u), std::move(m), {}, 0};
}

MfgState MfgSolver::step(const MfgState& state, TraceRow* row, std::optional<double> delta) const {
    const double d = delta.value_or(config_.delta);
    if (!(d >= 0.0)) throw std::invalid_argument("MfgSolver::step: delta must be >= 0");
    return problem_.kind() == MfgKind::kContinuous ? step_continuous(state, d, row) : step_projected(state, d, row);
}

MfgState MfgSolver::step_projected(const MfgState& state, double delta, TraceRow* row) const {
    const ConstraintSet& set = problem_.constraint();
    Field target = problem_.op().apply(state.u);
    Field excess = state.m;
    excess -= a_inv_rho_;
    target.axpy(-delta, excess);

    const ProjectionOptions options{config_.resolved_projection_tol(), config_.projection_max_iter,
                                    config_.projection_sigma};
    const bool warm = state.dual.size() == set.blocks() && !state.dual.empty();
    ProjectionResult proj = project_multiplier(solver_, target, set, options, warm ? &state.dual : nullptr);

    ComplementaritySolution dens = density(proj.u, &state.m);
    if (row) {
        row->iter = state.iteration + 1;
        row->dm = norm_h(dens.m - state.m);
        row->comp_res = dens.residual_complementarity;
        row->density_feas = dens.residual_feasibility;
        row->feas_res = set.violation(proj.u);
        row->fp_res.reset();
        row->fp_mass_defect.reset();
        row->delta_n = delta;
    }
    return MfgState{std::move(proj.u), std::move(dens.m), std::move(proj.dual), state.iteration + 1};
}

MfgState MfgSolver::step_continuous(const MfgState& state, double delta, TraceRow* row) const {
    const EllipticOperator& op = problem_.op();
    const Field w = solve_fp_adjoint(op, state.u, problem_.rho(), config_.krylov);
    Field rhs = apply_hjb(op, state.u);
    Field excess = state.m;
    excess -= w;
    rhs.axpy(-delta, excess);

    NewtonOptions newton{config_.resolved_newton_tol(), config_.newton_max_iter, config_.krylov};
    Field u_next = newton_hjb(op, rhs, state.u, newton).u;
    ComplementaritySolution dens = density(u_next, &state.m);
    if (row) {
        row->iter = state.iteration + 1;
        row->dm = norm_h(dens.m - state.m);
        row->comp_res = dens.residual_complementarity;
        row->density_feas = dens.residual_feasibility;
        row->feas_res = 0.0;
        row->fp_res = norm_h(excess);
        row->fp_mass_defect = std::abs(op.lambda() * inner_product(Field(op.grid(), 1.0), w) -
                                       inner_product(Field(op.grid(), 1.0), problem_.rho()));
        row->delta_n = delta;
    }
    return MfgState{std::move(u_next), std::move(dens.m), {}, state.iteration + 1};
}

MfgSolution MfgSolver::run() const { return run(initial_state()); }

MfgSolution MfgSolver::run(MfgState state) const {
    IterationTrace trace;
    const double alpha = problem_.cost().alpha();
    if (problem_.kind() != MfgKind::kContinuous && !(config_.delta < 2.0 * alpha)) {
        std::ostringstream msg;
        msg << "step delta=" << config_.delta << " violates delta < 2 alpha = " << 2.0 * alpha
            << "; convergence is not guaranteed";
        trace.warnings.push_back(msg.str());
    }
    const double initial_violation = problem_.constraint().violation(state.u);
    if (initial_violation > config_.resolved_projection_tol()) {
        std::ostringstream msg;
        msg << "initial multiplier violates the constraint by " << initial_violation;
        trace.warnings.push_back(msg.str());
    }

    bool converged = false;
    for (int n = 0; n < config_.max_outer; ++n) {
        TraceRow row;
        try {
            state = step(state, &row);
        } catch (const std::exception& err) {
            std::ostringstream msg;
            msg << "outer iteration " << state.iteration + 1 << ": " << err.what();
            throw MfgRunAborted(msg.str(), state.iteration + 1, std::move(trace));
        }
        trace.rows.push_back(row);
        if (config_.observer) config_.observer(row);
        if (row.dm < config_.tol_outer) {
            converged = true;
            break;
        }
    }
    const int iterations = state.iteration;
    return MfgSolution{std::move(state.u), std::move(state.m), std::move(trace), converged, iterations};
}

SolutionDiagnostics MfgSolver::diagnose(const Field& u, const Field& m) const {
    require_same_grid(problem_.grid(), u.grid(), "diagnose");
    require_same_grid(problem_.grid(), m.grid(), "diagnose");
    const ComplementaritySolution dens = density_residuals(problem_.cost(), density_target(u), m);
    SolutionDiagnostics out;
    out.density_feasibility = dens.residual_feasibility;
    out.density_complementarity = dens.residual_complementarity;
    out.density_min = m.min();
    out.multiplier_violation = problem_.constraint().violation(u);
    const Field ones(problem_.grid(), 1.0);
    if (problem_.kind() == MfgKind::kContinuous) {
        Field fp = hjb_jacobian_transpose(problem_.op(), u).apply(m);
        fp -= problem_.rho();
        out.fp_residual = norm_h(fp);
        out.mass_defect = std::abs(problem_.op().lambda() * inner_product(ones, m) -
                                   inner_product(ones, problem_.rho()));
    } else {
        const Field au = problem_.op().apply(u);
        Field target = au;
        Field excess = m;
        excess -= a_inv_rho_;
        target.axpy(-config_.delta, excess);
        const ProjectionOptions options{config_.resolved_projection_tol(), config_.projection_max_iter,
                                        config_.projection_sigma};
        const ProjectionResult proj = project_multiplier(solver_, target, problem_.constraint(), options);
        out.multiplier_residual = norm_h(au - proj.g) / config_.delta;
    }
    return out;
}

MfgSolution run(const MfgProblem& problem, const UzawaConfig& config) { return MfgSolver(problem, config).run(); }

namespace {

MfgState step_checked(const MfgProblem& problem, const UzawaConfig& config, const MfgState& state, MfgKind expected,
                      std::optional<double> delta) {
    if (problem.kind() != expected)
        throw std::invalid_argument("step function called for a '" + std::string(to_string(problem.kind())) +
                                    "' problem");
    return MfgSolver(problem, config).step(state, nullptr, delta);
}

}  // namespace

MfgState uzawa_step_stopping(const MfgProblem& problem, const UzawaConfig& config, const MfgState& state) {
    return step_checked(problem, config, state, MfgKind::kStopping, std::nullopt);
}

MfgState uzawa_step_impulse(const MfgProblem& problem, const UzawaConfig& config, const MfgState& state) {
    return step_checked(problem, config, state, MfgKind::kImpulse, std::nullopt);
}

MfgState uzawa_step_continuous(const MfgProblem& problem, const UzawaConfig& config, const MfgState& state,
                               double delta_n) {
    return step_checked(problem, config, state, MfgKind::kContinuous, delta_n);
}

// ---------------------------------------------------------------------------

std::optional<ErrorBound> error_bound(const MfgProblem& problem, const Field& v, const Field& mu, double tol) {
    if (problem.kind() != MfgKind::kStopping) throw std::invalid_argument("error_bound: stopping kind only");
    require_same_grid(problem.grid(), v.grid(), "error_bound");
    require_same_grid(problem.grid(), mu.grid(), "error_bound");
    if (v.max() > tol) throw std::invalid_argument("error_bound: v must be <= 0");
    if (mu.min() < 0.0) throw std::invalid_argument("error_bound: mu must be >= 0");

    const Field av = problem.op().apply(v);
    const Field slack_cost = problem.cost().evaluate(mu) - av;
    if (slack_cost.min() < -tol) return std::nullopt;
    const Field slack_rate = problem.rho() - problem.op().apply(mu);
    if (slack_rate.min() < -tol) return std::nullopt;

    ErrorBound out;
    out.eps1 = inner_product(slack_cost, mu);
    out.eps2 = inner_product(av, mu) - inner_product(v, problem.rho());
    out.bound = (out.eps1 + out.eps2) / problem.cost().alpha();
    return out;
}

}  // namespace mfg_uzawa
