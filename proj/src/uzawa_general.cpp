#include "mfg_uzawa/uzawa_general.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mfg_uzawa {

ConvexSet::ConvexSet(Eigen::Index dim, Projection projection, std::string name)
    : dim_(dim), projection_(std::move(projection)), name_(std::move(name)) {
    if (dim < 1) throw std::invalid_argument("ConvexSet: dimension must be >= 1");
    if (!projection_) throw std::invalid_argument("ConvexSet: missing projection");
}

ConvexSet ConvexSet::box(Vector lo, Vector hi) {
    if (lo.size() != hi.size()) throw std::invalid_argument("ConvexSet::box: bound sizes differ");
    if ((lo.array() > hi.array()).any()) throw std::invalid_argument("ConvexSet::box: empty box");
    ConvexSet set(lo.size(), [lo, hi](const Vector& x) { return x.cwiseMax(lo).cwiseMin(hi).eval(); }, "box");
    set.box_ = std::make_pair(lo, hi);
    return set;
}

ConvexSet ConvexSet::nonnegative_orthant(Eigen::Index dim) {
    const double inf = std::numeric_limits<double>::infinity();
    ConvexSet set = box(Vector::Zero(dim), Vector::Constant(dim, inf));
    set.name_ = "nonnegative orthant";
    return set;
}

ConvexSet ConvexSet::nonpositive_orthant(Eigen::Index dim) {
    const double inf = std::numeric_limits<double>::infinity();
    ConvexSet set = box(Vector::Constant(dim, -inf), Vector::Zero(dim));
    set.name_ = "nonpositive orthant";
    return set;
}

ConvexSet ConvexSet::whole_space(Eigen::Index dim) {
    const double inf = std::numeric_limits<double>::infinity();
    ConvexSet set = box(Vector::Constant(dim, -inf), Vector::Constant(dim, inf));
    set.name_ = "whole space";
    return set;
}

Vector ConvexSet::project(const Vector& x) const {
    if (x.size() != dim_) throw std::invalid_argument("ConvexSet::project: dimension mismatch");
    return projection_(x);
}

bool ConvexSet::contains(const Vector& x, double tol) const {
    return (project(x) - x).lpNorm<Eigen::Infinity>() <= tol;
}

double operator_norm(const Matrix& m, double tol, int max_iter) {
    if (m.size() == 0) return 0.0;
    Vector v = Vector::Ones(m.cols()).normalized();
    // Deterministic, slightly perturbed start.
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 1e-3 * std::sin(1.0 + i);
    v.normalize();
    double sigma = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vector w = m.transpose() * (m * v);
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        const double next = std::sqrt(norm);
        v = w / norm;
        if (std::abs(next - sigma) <= tol * next) return next;
        sigma = next;
    }
    return sigma;
}

double estimate_lipschitz(const GeneralVIProblem::MonotoneMap& f, Eigen::Index n, std::uint64_t seed,
                          int samples) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double lip = 0.0;
    for (int s = 0; s < samples; ++s) {
        Vector x(n);
        for (Eigen::Index i = 0; i < n; ++i) x[i] = normal(rng);
        const double step = 1e-6 * std::max(1.0, x.norm());
        Matrix jac(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vector hi = x, lo = x;
            hi[i] += step;
            lo[i] -= step;
            jac.col(i) = (f(hi) - f(lo)) / (2.0 * step);
        }
        lip = std::max(lip, operator_norm(jac, 1e-8));
    }
    return 1.05 * lip;
}

GeneralVIProblem::GeneralVIProblem(MonotoneMap f, AffineMap a, ConvexSet k1, ConvexSet k2, double alpha,
                                   std::optional<double> lipschitz_c)
    : f_(std::move(f)), a_(std::move(a)), k1_(std::move(k1)), k2_(std::move(k2)), alpha_(alpha), c_(0.0) {
    if (!f_) throw std::invalid_argument("GeneralVIProblem: missing f");
    if (!(alpha > 0.0)) throw std::invalid_argument("GeneralVIProblem: alpha must be > 0");
    if (a_.linear.rows() != k2_.dim() || a_.linear.cols() != k1_.dim() || a_.offset.size() != k2_.dim())
        throw std::invalid_argument("GeneralVIProblem: affine map shape does not match K1/K2 dimensions");
    const double computed = operator_norm(a_.linear);
    if (lipschitz_c) {
        if (!(*lipschitz_c > 0.0)) throw std::invalid_argument("GeneralVIProblem: C must be > 0");
        if (computed > 0.0 && std::abs(*lipschitz_c - computed) > 1e-6 * computed) {
            std::ostringstream msg;
            msg << "GeneralVIProblem: C=" << *lipschitz_c << " does not match ||a||=" << computed;
            throw std::invalid_argument(msg.str());
        }
        c_ = *lipschitz_c;
    } else {
        if (!(computed > 0.0)) throw std::invalid_argument("GeneralVIProblem: linear part of a is zero, C undefined");
        c_ = computed;
    }
}

bool check_step(const GeneralVIProblem& problem, double delta) {
    const double c = problem.lipschitz_c();
    return delta < 2.0 * problem.alpha() / (c * c);
}

InnerVIResult inner_vi_solve(const GeneralVIProblem& problem, const Vector& y_image,
                             const InnerVIOptions& options, const Vector* x0) {
    if (y_image.size() != problem.n3()) throw std::invalid_argument("inner_vi_solve: y has wrong size");
    double eps = options.eps;
    if (eps <= 0.0) {
        const double lip = estimate_lipschitz(problem.f(), problem.n1(), options.seed);
        eps = problem.alpha() / (lip * lip);
    }
    const Vector coupling = problem.a().linear.transpose() * y_image;
    Vector xi = problem.k1().project(x0 ? *x0 : Vector::Zero(problem.n1()));

    double first_change = -1.0;
    double change = 0.0;
    int growth_streak = 0;
    for (int p = 1; p <= options.max_iter; ++p) {
        Vector next = problem.k1().project(xi - eps * (problem.f()(xi) + coupling));
        const double prev_change = change;
        change = (next - xi).norm();
        xi = std::move(next);
        if (!std::isfinite(change))
            throw NonContraction("inner_vi_solve: iterate became non-finite; eps too large");
        if (change <= options.tol * std::max(1.0, xi.norm())) return {xi, p, change, eps};
        if (first_change < 0.0) first_change = change;
        growth_streak = (p > 1 && change > prev_change) ? growth_streak + 1 : 0;
        if (growth_streak >= 50 || change > 1e8 * std::max(first_change, 1e-300))
            throw NonContraction("inner_vi_solve: successive changes are not decreasing; eps too large");
    }
    throw MaxIterationsExceeded("inner_vi_solve did not converge", options.max_iter, change);
}

double inner_vi_worst_gap(const GeneralVIProblem& problem, const Vector& y_image, const Vector& x,
                          int samples, std::uint64_t seed) {
    const Vector fx = problem.f()(x);
    const Vector ax = problem.a()(x);
    auto gap = [&](const Vector& xp) { return fx.dot(xp - x) + (problem.a()(xp) - ax).dot(y_image); };

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = std::numeric_limits<double>::infinity();
    const Eigen::Index n = problem.n1();
    for (int s = 0; s < samples; ++s) {
        const double scale = std::pow(10.0, -3.0 + 4.0 * s / std::max(1, samples - 1));
        Vector dir(n);
        for (Eigen::Index i = 0; i < n; ++i) dir[i] = normal(rng);
        worst = std::min(worst, gap(problem.k1().project(x + scale * dir)));
    }
    const auto& box = problem.k1().box_bounds();
    if (box && n <= 10 && box->first.allFinite() && box->second.allFinite()) {
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            Vector v(n);
            for (Eigen::Index i = 0; i < n; ++i) v[i] = (mask >> i) & 1u ? box->second[i] : box->first[i];
            worst = std::min(worst, gap(v));
        }
    }
    return worst;
}

UzawaGeneralState uzawa_iterate(const GeneralVIProblem& problem, double delta, const Vector& y0_image,
                                const UzawaGeneralOptions& options) {
    if (!(delta > 0.0)) throw std::invalid_argument("uzawa_iterate: delta must be > 0");
    if (y0_image.size() != problem.n3()) throw std::invalid_argument("uzawa_iterate: y0 has wrong size");

    UzawaGeneralState state;
    state.step_admissible = check_step(problem, delta);
    if (!state.step_admissible) {
        std::ostringstream msg;
        const double c = problem.lipschitz_c();
        msg << "step delta=" << delta << " violates delta < 2 alpha / C^2 = " << 2.0 * problem.alpha() / (c * c);
        state.warnings.push_back(msg.str());
    }

    InnerVIOptions inner = options.inner;
    if (inner.eps <= 0.0) {
        const double lip = estimate_lipschitz(problem.f(), problem.n1(), inner.seed);
        inner.eps = problem.alpha() / (lip * lip);
    }

    state.y_image = problem.k2().project(y0_image);
    if (options.record_iterates) state.y_history.push_back(state.y_image);
    Vector x_prev;
    double last_change = std::numeric_limits<double>::infinity();

    for (int n = 0; n < options.max_outer; ++n) {
        InnerVIResult inner_result = inner_vi_solve(problem, state.y_image, inner, n > 0 ? &x_prev : nullptr);
        Vector x = std::move(inner_result.x);
        Vector y_next = problem.k2().project(state.y_image + delta * problem.a()(x));

        UzawaStepRecord record;
        record.x_change = n > 0 ? (x - x_prev).norm() : x.norm();
        record.multiplier_change = (y_next - state.y_image).norm();
        state.history.push_back(record);
        if (options.record_iterates) {
            state.x_history.push_back(x);
            state.y_history.push_back(y_next);
        }

        state.x = x;
        state.y_image = std::move(y_next);
        state.iteration = n + 1;
        last_change = record.x_change;
        x_prev = std::move(x);
        if (n > 0 && record.x_change < options.outer_tol) {
            state.converged = true;
            return state;
        }
    }
    throw UzawaMaxIterations(std::move(state), last_change);
}

}  // namespace mfg_uzawa
