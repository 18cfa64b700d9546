#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mfg_uzawa/grid.hpp"
#include "mfg_uzawa/linear_solvers.hpp"
#include "mfg_uzawa/running_cost.hpp"

namespace mfg_uzawa {

/// Admissible multiplier set: u <= 0, u <= M u, or all of R^{d^2}.
///
/// Every kind is written as a family of linear blocks B_b u <= c:
/// the zero obstacle is the single block u <= 0, and u <= M u is the
/// block u - shift_xi(u) <= k0 for every offset xi != (0, 0).
class ConstraintSet {
public:
    enum class Kind { kZeroObstacle, kJumpObstacle, kUnconstrained };

    static ConstraintSet zero_obstacle();
    static ConstraintSet jump_obstacle(JumpOperator jump);
    static ConstraintSet unconstrained();

    Kind kind() const noexcept { return kind_; }
    const std::optional<JumpOperator>& jump() const noexcept { return jump_; }
    std::string name() const;

    std::size_t blocks() const noexcept;
    /// Right-hand side c shared by all blocks.
    double bound() const noexcept;
    /// B_b v.
    Field apply_block(const Field& v, std::size_t block) const;
    /// sum_b B_b^T p_b (Euclidean transpose).
    Field apply_transpose(const std::vector<Field>& p) const;
    /// Squared spectral norm of the stacked operator B.
    double operator_norm_squared(const TorusGrid& grid) const;
    /// Largest eigenvalue of B A^{-2} B^T, the curvature of the projection dual.
    double dual_curvature(const EllipticOperator& op) const;

    /// max(0, max_b max_k (B_b v - c)_k); zero when v is admissible.
    double violation(const Field& v) const;
    bool contains(const Field& v, double tol = 0.0) const { return violation(v) <= tol; }

private:
    ConstraintSet(Kind kind, std::optional<JumpOperator> jump);

    Kind kind_;
    std::optional<JumpOperator> jump_;
    std::vector<GridOffset> active_offsets_;
};

// ---------------------------------------------------------------------------
// Density step: m >= 0, f_d(m) - q >= 0, <f_d(m) - q, m> = 0.

enum class DensityMethod {
    kProjectedGradient,
    /// Primal-dual active set on min(m, f_d(m) - q) = 0, falling back to
    /// projected gradient if the active set does not settle.
    kSemismoothNewton,
};

struct DensityOptions {
    double tol = 1e-10;
    int max_iter = 100000;
    DensityMethod method = DensityMethod::kProjectedGradient;
    /// Projected-gradient step; 0 selects 2 / (min + max curvature).
    double step = 0.0;
};

struct ComplementaritySolution {
    Field m;
    /// ||min(f_d(m) - q, 0)||_h
    double residual_feasibility = 0.0;
    /// |<f_d(m) - q, m>|
    double residual_complementarity = 0.0;
    int iterations = 0;
};

/// Feasibility and complementarity residuals of a candidate m.
ComplementaritySolution density_residuals(const RunningCost& cost, const Field& q, Field m, int iterations = 0);

/// Throws MaxIterationsExceeded, or NonMonotoneCost when the natural residual
/// grows tenfold over its best value.
ComplementaritySolution solve_density_vi(const RunningCost& cost, const Field& q, const DensityOptions& options = {},
                                         const Field* m0 = nullptr);

// ---------------------------------------------------------------------------
// Multiplier step: g_next = argmin ||g - g_target||_h subject to A^{-1} g in K.

struct ProjectionOptions {
    /// Stop when the constraint violation is <= tol and the duality gap is
    /// <= tol^2 (or its rounding floor).
    double tol = 1e-10;
    int max_iter = 200000;
    /// Dual ascent step; 0 selects the inverse of the exact dual curvature.
    double sigma = 0.0;
};

struct ProjectionResult {
    Field u;
    Field g;
    /// Multiplier per constraint block; reusable as a warm start.
    std::vector<Field> dual;
    int iterations = 0;
    double violation = 0.0;
    /// <p, c - B u>_h, which bounds <g_target - g, g' - g>_h for feasible g'.
    double gap = 0.0;
};

/// Dual projected-gradient (Uzawa) ascent with Nesterov extrapolation and
/// gradient restart. Throws MaxIterationsExceeded with the achieved residual.
ProjectionResult project_multiplier(const EllipticSolver& solver, const Field& g_target, const ConstraintSet& set,
                                    const ProjectionOptions& options = {},
                                    const std::vector<Field>* dual0 = nullptr);

ProjectionResult project_multiplier(const EllipticOperator& op, const Field& g_target, const ConstraintSet& set,
                                    const ProjectionOptions& options = {});

}  // namespace mfg_uzawa
