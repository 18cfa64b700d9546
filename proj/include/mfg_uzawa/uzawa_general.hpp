#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfg_uzawa/errors.hpp"

namespace mfg_uzawa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Closed convex subset of R^n known through its Euclidean projection.
class ConvexSet {
public:
    using Projection = std::function<Vector(const Vector&)>;

    ConvexSet(Eigen::Index dim, Projection projection, std::string name);

    /// Componentwise bounds lo <= x <= hi (entries may be +-infinity).
    static ConvexSet box(Vector lo, Vector hi);
    static ConvexSet nonnegative_orthant(Eigen::Index dim);
    static ConvexSet nonpositive_orthant(Eigen::Index dim);
    static ConvexSet whole_space(Eigen::Index dim);

    Eigen::Index dim() const noexcept { return dim_; }
    const std::string& name() const noexcept { return name_; }

    Vector project(const Vector& x) const;
    bool contains(const Vector& x, double tol = 1e-12) const;

    /// Bounds when the set is a box; used to enumerate vertices in checks.
    const std::optional<std::pair<Vector, Vector>>& box_bounds() const noexcept { return box_; }

private:
    Eigen::Index dim_;
    Projection projection_;
    std::string name_;
    std::optional<std::pair<Vector, Vector>> box_;
};

/// x -> linear * x + offset.
struct AffineMap {
    Matrix linear;
    Vector offset;

    Vector operator()(const Vector& x) const { return linear * x + offset; }
};

/// Monotone saddle-type VI: find x in K1 and a multiplier image y in K2
/// with
///   (f(x), x' - x) + <a(x') - a(x), y> >= 0   for all x' in K1,
///   <a(x), y' - y> <= 0                       for all y' in K2.
/// The multiplier is tracked through its image directly (b = identity).
class GeneralVIProblem {
public:
    using MonotoneMap = std::function<Vector(const Vector&)>;

    /// When `lipschitz_c` is given it must match ||a.linear||_2 to 1e-6
    /// (relative), or be any positive bound if the linear part is zero.
    /// Otherwise it is computed.
    GeneralVIProblem(MonotoneMap f, AffineMap a, ConvexSet k1, ConvexSet k2, double alpha,
                     std::optional<double> lipschitz_c = std::nullopt);

    Eigen::Index n1() const noexcept { return k1_.dim(); }
    Eigen::Index n3() const noexcept { return k2_.dim(); }
    const MonotoneMap& f() const noexcept { return f_; }
    const AffineMap& a() const noexcept { return a_; }
    const ConvexSet& k1() const noexcept { return k1_; }
    const ConvexSet& k2() const noexcept { return k2_; }
    double alpha() const noexcept { return alpha_; }
    double lipschitz_c() const noexcept { return c_; }

private:
    MonotoneMap f_;
    AffineMap a_;
    ConvexSet k1_;
    ConvexSet k2_;
    double alpha_;
    double c_;
};

/// Spectral norm by power iteration on M^T M, relative accuracy ~tol.
double operator_norm(const Matrix& m, double tol = 1e-10, int max_iter = 10000);

/// Upper estimate of the Lipschitz constant of f from central-difference
/// Jacobians at a few random points.
double estimate_lipschitz(const GeneralVIProblem::MonotoneMap& f, Eigen::Index n,
                          std::uint64_t seed = 17, int samples = 3);

/// delta < 2 alpha / C^2.
bool check_step(const GeneralVIProblem& problem, double delta);

struct InnerVIOptions {
    /// Projected-gradient step; 0 selects alpha / Lip(f)^2.
    double eps = 0.0;
    /// Stop when ||xi_{p+1} - xi_p|| <= tol * max(1, ||xi_{p+1}||).
    double tol = 1e-13;
    int max_iter = 1000000;
    std::uint64_t seed = 17;
};

struct InnerVIResult {
    Vector x;
    int iterations = 0;
    double last_change = 0.0;
    double eps = 0.0;
};

/// Solves the x-line of the iteration for a frozen multiplier image:
/// xi <- P_K1(xi - eps (f(xi) + A^T y)), with A the linear part of a.
/// Throws NonContraction when the iteration expands.
InnerVIResult inner_vi_solve(const GeneralVIProblem& problem, const Vector& y_image,
                             const InnerVIOptions& options = {}, const Vector* x0 = nullptr);

/// Smallest value of (f(x), x' - x) + <a(x') - a(x), y> over sampled x' in K1:
/// `samples` random feasible points plus all box vertices when n1 <= 10.
/// A value >= -tol certifies the inner VI to sampling accuracy.
double inner_vi_worst_gap(const GeneralVIProblem& problem, const Vector& y_image, const Vector& x,
                          int samples = 100, std::uint64_t seed = 23);

struct UzawaStepRecord {
    double x_change = 0.0;           ///< ||x_n - x_{n-1}|| (||x_0|| for n = 0)
    double multiplier_change = 0.0;  ///< ||y_{n+1} - y_n||
};

struct UzawaGeneralOptions {
    double outer_tol = 1e-10;
    int max_outer = 100000;
    InnerVIOptions inner;
    /// Keep every x_n and y_n (y_0 .. y_N) for convergence diagnostics.
    bool record_iterates = false;
};

struct UzawaGeneralState {
    Vector x;
    Vector y_image;
    int iteration = 0;
    std::vector<UzawaStepRecord> history;
    std::vector<Vector> x_history;
    std::vector<Vector> y_history;
    bool step_admissible = true;
    bool converged = false;
    std::vector<std::string> warnings;
};

class UzawaMaxIterations : public MaxIterationsExceeded {
public:
    UzawaMaxIterations(UzawaGeneralState state, double residual)
        : MaxIterationsExceeded("uzawa_iterate reached max_outer", state.iteration, residual),
          state_(std::move(state)) {}
    const UzawaGeneralState& state() const noexcept { return state_; }

private:
    UzawaGeneralState state_;
};

/// Generalized Uzawa iteration:
///   x_n solves the inner VI with multiplier image y_n,
///   y_{n+1} = P_K2(y_n + delta a(x_n)),
/// until ||x_n - x_{n-1}|| < outer_tol. An inadmissible step (check_step
/// false) is recorded as a warning and the iteration proceeds.
/// Throws UzawaMaxIterations carrying the state when max_outer is reached.
UzawaGeneralState uzawa_iterate(const GeneralVIProblem& problem, double delta, const Vector& y0_image,
                                const UzawaGeneralOptions& options = {});

}  // namespace mfg_uzawa
