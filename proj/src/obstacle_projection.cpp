#include "mfg_uzawa/obstacle_projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "mfg_uzawa/errors.hpp"

namespace mfg_uzawa {

ConstraintSet::ConstraintSet(Kind kind, std::optional<JumpOperator> jump) : kind_(kind), jump_(std::move(jump)) {
    if (jump_) {
        for (const GridOffset& xi : jump_->offsets())
            if (!(xi == GridOffset{}) &&
                std::find(active_offsets_.begin(), active_offsets_.end(), xi) == active_offsets_.end())
                active_offsets_.push_back(xi);
    }
}

ConstraintSet ConstraintSet::zero_obstacle() { return ConstraintSet(Kind::kZeroObstacle, std::nullopt); }

ConstraintSet ConstraintSet::jump_obstacle(JumpOperator jump) {
    return ConstraintSet(Kind::kJumpObstacle, std::move(jump));
}

ConstraintSet ConstraintSet::unconstrained() { return ConstraintSet(Kind::kUnconstrained, std::nullopt); }

std::string ConstraintSet::name() const {
    switch (kind_) {
        case Kind::kZeroObstacle: return "zero obstacle";
        case Kind::kJumpObstacle: return "jump obstacle";
        default: return "unconstrained";
    }
}

std::size_t ConstraintSet::blocks() const noexcept {
    switch (kind_) {
        case Kind::kZeroObstacle: return 1;
        case Kind::kJumpObstacle: return active_offsets_.size();
        default: return 0;
    }
}

double ConstraintSet::bound() const noexcept { return kind_ == Kind::kJumpObstacle ? jump_->k0() : 0.0; }

Field ConstraintSet::apply_block(const Field& v, std::size_t block) const {
    if (block >= blocks()) throw std::out_of_range("ConstraintSet::apply_block: no such block");
    if (kind_ == Kind::kZeroObstacle) return v;
    Field out = v;
    out -= shift(v, active_offsets_[block]);
    return out;
}

Field ConstraintSet::apply_transpose(const std::vector<Field>& p) const {
    if (p.size() != blocks()) throw std::invalid_argument("ConstraintSet::apply_transpose: wrong block count");
    if (p.empty()) throw std::invalid_argument("ConstraintSet::apply_transpose: set has no constraints");
    if (kind_ == Kind::kZeroObstacle) return p.front();
    Field out(p.front().grid());
    for (std::size_t b = 0; b < p.size(); ++b) {
        const GridOffset xi = active_offsets_[b];
        out += p[b];
        out -= shift(p[b], GridOffset{-xi.di, -xi.dj});
    }
    return out;
}

namespace {

// B^T B and A are circulant, so both are diagonal in the Fourier modes (k, l);
// returns the largest value of symbol(B^T B) / symbol(A)^power over the modes.
double max_mode_ratio(const std::vector<GridOffset>& offsets, bool identity, const TorusGrid& grid,
                      double stencil, double lambda, int power) {
    const int d = grid.d();
    const double two_pi = 2.0 * std::numbers::pi;
    double best = 0.0;
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) {
            double symbol = identity ? 1.0 : 0.0;
            for (const GridOffset& xi : offsets)
                symbol += 2.0 - 2.0 * std::cos(two_pi * (k * xi.di + l * xi.dj) / d);
            const double a = stencil * (4.0 - 2.0 * std::cos(two_pi * k / d) - 2.0 * std::cos(two_pi * l / d)) + lambda;
            best = std::max(best, symbol / std::pow(a, power));
        }
    return best;
}

}  // namespace

double ConstraintSet::operator_norm_squared(const TorusGrid& grid) const {
    if (kind_ == Kind::kUnconstrained) return 0.0;
    return max_mode_ratio(active_offsets_, kind_ == Kind::kZeroObstacle, grid, 0.0, 1.0, 0);
}

double ConstraintSet::dual_curvature(const EllipticOperator& op) const {
    if (kind_ == Kind::kUnconstrained) return 0.0;
    return max_mode_ratio(active_offsets_, kind_ == Kind::kZeroObstacle, op.grid(), op.stencil_coefficient(),
                          op.lambda(), 2);
}

double ConstraintSet::violation(const Field& v) const {
    double worst = 0.0;
    const double c = bound();
    for (std::size_t b = 0; b < blocks(); ++b) {
        const Field bv = apply_block(v, b);
        for (double x : bv.values()) worst = std::max(worst, x - c);
    }
    return worst;
}

// ---------------------------------------------------------------------------

ComplementaritySolution density_residuals(const RunningCost& cost, const Field& q, Field m, int iterations) {
    Field r = cost.evaluate(m);
    r -= q;
    ComplementaritySolution out{std::move(m), norm_h(negative_part(r)), 0.0, iterations};
    out.residual_complementarity = std::abs(inner_product(r, out.m));
    return out;
}

namespace {

bool density_converged(const ComplementaritySolution& s, double tol) {
    return s.residual_feasibility <= tol && s.residual_complementarity <= tol;
}

ComplementaritySolution density_projected_gradient(const RunningCost& cost, const Field& q,
                                                   const DensityOptions& options, Field m, int start_iter) {
    const double tau = options.step > 0.0 ? options.step : 2.0 / (cost.min_curvature() + cost.max_curvature());
    double best_natural = std::numeric_limits<double>::infinity();
    int last_progress = start_iter;
    for (int it = start_iter;; ++it) {
        Field r = cost.evaluate(m);
        r -= q;
        const double feas = norm_h(negative_part(r));
        const double comp = std::abs(inner_product(r, m));
        if (feas <= options.tol && comp <= options.tol) return {std::move(m), feas, comp, it};
        if (it >= options.max_iter)
            throw MaxIterationsExceeded("solve_density_vi did not converge", it, std::max(feas, comp));

        Field next = m;
        next.axpy(-tau, r);
        next = positive_part(next);
        Field step = m;
        step -= next;
        const double natural = norm_h(step) / tau;
        if (natural > 10.0 * best_natural && natural > options.tol)
            throw NonMonotoneCost("solve_density_vi: natural residual grew tenfold; cost is not monotone "
                                  "or the step is too large");
        if (natural < 0.99 * best_natural) {
            best_natural = natural;
            last_progress = it;
        } else if (it - last_progress > 1000) {
            throw NonMonotoneCost("solve_density_vi: natural residual stopped decreasing; cost is not "
                                  "monotone or the step is too large");
        }
        m = std::move(next);
    }
}

// Restricted system F_II m_I = (q - f0)_I with m = 0 off I, as an SPD map.
Field solve_inactive(const RunningCost& cost, const Field& q, const std::vector<char>& inactive, double tol,
                     const Field& start) {
    const TorusGrid& grid = q.grid();
    auto restrict = [&inactive](Field v) {
        for (std::size_t k = 0; k < v.size(); ++k)
            if (!inactive[k]) v[k] = 0.0;
        return v;
    };
    const LinearMap map{[&](const Field& v) {
                            Field out = restrict(cost.apply_linear(restrict(v)));
                            for (std::size_t k = 0; k < v.size(); ++k)
                                if (!inactive[k]) out[k] = v[k];
                            return out;
                        },
                        grid, true, std::nullopt};
    Field rhs = q;
    rhs -= cost.f0();
    rhs = restrict(std::move(rhs));
    const Field x0 = restrict(start);
    return cg_solve(map, rhs, KrylovConfig{1e-14, 1e-3 * tol, 5000, false}, &x0).x;
}

}  // namespace

ComplementaritySolution solve_density_vi(const RunningCost& cost, const Field& q, const DensityOptions& options,
                                         const Field* m0) {
    require_same_grid(cost.grid(), q.grid(), "solve_density_vi");
    if (!(cost.min_curvature() > 0.0))
        throw std::invalid_argument("solve_density_vi: cost must be strictly monotone");
    if (!(options.tol > 0.0) || options.max_iter < 1)
        throw std::invalid_argument("solve_density_vi: invalid tolerance or iteration cap");
    if (!q.all_finite()) throw std::invalid_argument("solve_density_vi: q has non-finite entries");

    Field m(q.grid());
    if (m0) {
        require_same_grid(q.grid(), m0->grid(), "solve_density_vi");
        m = positive_part(*m0);
    } else {
        m = positive_part(q - cost.f0());
        m *= 1.0 / cost.max_curvature();
    }

    int iterations = 0;
    if (options.method == DensityMethod::kSemismoothNewton) {
        std::vector<char> inactive(m.size(), 0);
        for (int it = 0; it < 50 && iterations < options.max_iter; ++it) {
            Field r = cost.evaluate(m);
            r -= q;
            std::vector<char> next(m.size());
            for (std::size_t k = 0; k < m.size(); ++k) next[k] = m[k] > r[k] ? 1 : 0;
            const bool settled = it > 0 && next == inactive;
            ComplementaritySolution trial = density_residuals(cost, q, positive_part(m), iterations);
            if (settled && density_converged(trial, options.tol)) return trial;
            inactive = std::move(next);
            m = solve_inactive(cost, q, inactive, options.tol, m);
            ++iterations;
        }
        ComplementaritySolution trial = density_residuals(cost, q, positive_part(m), iterations);
        if (density_converged(trial, options.tol)) return trial;
        m = positive_part(m);
    }
    return density_projected_gradient(cost, q, options, std::move(m), iterations);
}

// ---------------------------------------------------------------------------

namespace {

struct DualPoint {
    std::vector<Field> p;
    Field v;  // A^{-1} g_target - A^{-2} B^T p
};

double dual_gap(const ConstraintSet& set, const DualPoint& x, double* floor) {
    const double c = set.bound();
    const double h2 = x.v.grid().h() * x.v.grid().h();
    const double scale = std::abs(c) + 2.0 * max_abs(x.v);
    double gap = 0.0, mass = 0.0;
    for (std::size_t b = 0; b < x.p.size(); ++b) {
        const Field bv = set.apply_block(x.v, b);
        for (std::size_t k = 0; k < bv.size(); ++k) {
            gap += x.p[b][k] * std::max(c - bv[k], 0.0);
            mass += x.p[b][k];
        }
    }
    *floor = 16.0 * std::numeric_limits<double>::epsilon() * h2 * mass * scale;
    return h2 * gap;
}

}  // namespace

ProjectionResult project_multiplier(const EllipticSolver& solver, const Field& g_target, const ConstraintSet& set,
                                    const ProjectionOptions& options, const std::vector<Field>* dual0) {
    const EllipticOperator& op = solver.op();
    require_same_grid(op.grid(), g_target.grid(), "project_multiplier");
    if (!(options.tol > 0.0) || options.max_iter < 1)
        throw std::invalid_argument("project_multiplier: invalid tolerance or iteration cap");
    const TorusGrid& grid = op.grid();
    const std::size_t nb = set.blocks();

    ProjectionResult result{solver.solve(g_target), g_target, std::vector<Field>(nb, Field(grid)), 0, 0.0, 0.0};
    result.violation = set.violation(result.u);
    if (nb == 0 || result.violation <= options.tol) return result;

    const Field v_target = result.u;
    const double c = set.bound();
    const double sigma = options.sigma > 0.0 ? options.sigma : 1.0 / set.dual_curvature(op);

    auto primal = [&](const std::vector<Field>& p) {
        Field v = v_target;
        v -= solver.solve_squared(set.apply_transpose(p));
        return v;
    };

    DualPoint cur{std::vector<Field>(nb, Field(grid)), v_target};
    if (dual0) {
        if (dual0->size() != nb) throw std::invalid_argument("project_multiplier: warm start has wrong block count");
        for (std::size_t b = 0; b < nb; ++b) {
            require_same_grid(grid, (*dual0)[b].grid(), "project_multiplier");
            cur.p[b] = positive_part((*dual0)[b]);
        }
        cur.v = primal(cur.p);
    }
    DualPoint prev = cur;
    double t = 1.0;

    for (int it = 0;; ++it) {
        double floor = 0.0;
        const double violation = set.violation(cur.v);
        const double gap = dual_gap(set, cur, &floor);
        if (violation <= options.tol && gap <= std::max(options.tol * options.tol, floor)) {
            result.u = cur.v;
            result.g = g_target;
            result.g -= solver.solve(set.apply_transpose(cur.p));
            result.dual = std::move(cur.p);
            result.iterations = it;
            result.violation = violation;
            result.gap = gap;
            return result;
        }
        if (it >= options.max_iter)
            throw MaxIterationsExceeded("project_multiplier did not converge", it, std::max(violation, gap));

        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double beta = (t - 1.0) / t_next;
        // Extrapolated point; v is affine in p so it extrapolates without a solve.
        DualPoint z = cur;
        if (beta > 0.0) {
            for (std::size_t b = 0; b < nb; ++b) {
                z.p[b].axpy(beta, cur.p[b]);
                z.p[b].axpy(-beta, prev.p[b]);
            }
            z.v.axpy(beta, cur.v);
            z.v.axpy(-beta, prev.v);
        }
        DualPoint next{{}, Field(grid)};
        next.p.reserve(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            Field step = z.p[b];
            Field slack = set.apply_block(z.v, b);
            for (std::size_t k = 0; k < step.size(); ++k) step[k] += sigma * (slack[k] - c);
            next.p.push_back(positive_part(step));
        }
        next.v = primal(next.p);

        // Restart the momentum when the step opposes the previous displacement.
        double alignment = 0.0;
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t k = 0; k < next.p[b].size(); ++k)
                alignment += (z.p[b][k] - next.p[b][k]) * (next.p[b][k] - cur.p[b][k]);
        t = alignment > 0.0 ? 1.0 : t_next;

        prev = std::move(cur);
        cur = std::move(next);
    }
}

ProjectionResult project_multiplier(const EllipticOperator& op, const Field& g_target, const ConstraintSet& set,
                                    const ProjectionOptions& options) {
    return project_multiplier(EllipticSolver(op), g_target, set, options);
}

}  // namespace mfg_uzawa
