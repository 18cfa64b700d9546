#include "mfg_uzawa/running_cost.hpp"

#include <stdexcept>

namespace mfg_uzawa {

RunningCost::RunningCost(Field f0, double identity_coeff, double smoothing_coeff, StencilScaling scaling)
    : f0_(std::move(f0)),
      identity_coeff_(identity_coeff),
      smoothing_coeff_(smoothing_coeff),
      smoother_(EllipticOperator(f0_.grid(), 1.0, 1.0, scaling)) {
    if (!(identity_coeff >= 0.0) || !(smoothing_coeff >= 0.0))
        throw std::invalid_argument("RunningCost: coefficients must be >= 0");
    if (!f0_.all_finite()) throw std::invalid_argument("RunningCost: f0 has non-finite entries");
    const FastDiagonalizationSolver spectrum(smoother_.op());
    min_curvature_ = identity_coeff_ + smoothing_coeff_ / spectrum.max_eigenvalue();
    max_curvature_ = identity_coeff_ + smoothing_coeff_ / spectrum.min_eigenvalue();
}

Field RunningCost::smooth(const Field& m) const {
    require_same_grid(grid(), m.grid(), "RunningCost");
    return smoother_.solve(m);
}

Field RunningCost::apply_linear(const Field& m) const {
    require_same_grid(grid(), m.grid(), "RunningCost");
    Field out = identity_coeff_ * m;
    if (smoothing_coeff_ != 0.0) out.axpy(smoothing_coeff_, smooth(m));
    return out;
}

Field RunningCost::evaluate(const Field& m) const {
    Field out = apply_linear(m);
    out += f0_;
    return out;
}

Field eval_cost(const RunningCost& cost, const Field& m) { return cost.evaluate(m); }

}  // namespace mfg_uzawa
