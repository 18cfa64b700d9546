#pragma once

#include "mfg_uzawa/grid.hpp"
#include "mfg_uzawa/linear_solvers.hpp"

namespace mfg_uzawa {

/// f_d(m) = f0 + c m + s S m with S = (-Delta_h + I)^{-1}.
///
/// S is symmetric with spectrum in (0, 1], so f_d is alpha-monotone with
/// alpha = c and its linear part has spectrum in [c + s smin, c + s].
class RunningCost {
public:
    RunningCost(Field f0, double identity_coeff, double smoothing_coeff,
                StencilScaling scaling = StencilScaling::kH2);

    const TorusGrid& grid() const noexcept { return f0_.grid(); }
    const Field& f0() const noexcept { return f0_; }
    double identity_coeff() const noexcept { return identity_coeff_; }
    double smoothing_coeff() const noexcept { return smoothing_coeff_; }
    /// Certified monotonicity constant.
    double alpha() const noexcept { return identity_coeff_; }

    /// Smallest and largest eigenvalue of m -> c m + s S m.
    double min_curvature() const noexcept { return min_curvature_; }
    double max_curvature() const noexcept { return max_curvature_; }

    Field evaluate(const Field& m) const;
    /// c m + s S m.
    Field apply_linear(const Field& m) const;
    /// S m.
    Field smooth(const Field& m) const;

private:
    Field f0_;
    double identity_coeff_;
    double smoothing_coeff_;
    EllipticSolver smoother_;
    double min_curvature_;
    double max_curvature_;
};

Field eval_cost(const RunningCost& cost, const Field& m);

}  // namespace mfg_uzawa
