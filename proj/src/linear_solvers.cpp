#include "mfg_uzawa/linear_solvers.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mfg_uzawa/errors.hpp"

namespace mfg_uzawa {

void KrylovConfig::validate() const {
    if (rtol < 0.0 || atol < 0.0) throw std::invalid_argument("KrylovConfig: negative tolerance");
    if (rtol == 0.0 && atol == 0.0)
        throw std::invalid_argument("KrylovConfig: rtol and atol cannot both be 0");
    if (max_iter < 1) throw std::invalid_argument("KrylovConfig: max_iter must be >= 1");
}

namespace {

double threshold(const KrylovConfig& cfg, double b_norm) {
    return std::max(cfg.rtol * b_norm, cfg.atol);
}

Field precondition(const LinearMap& map, const KrylovConfig& cfg, const Field& r) {
    if (!cfg.jacobi) return r;
    if (!map.diagonal) throw std::invalid_argument("Jacobi preconditioning requires a diagonal");
    Field z = r;
    for (std::size_t k = 0; k < z.size(); ++k) z[k] /= (*map.diagonal)[k];
    return z;
}

Field residual(const LinearMap& map, const Field& b, const Field& x) {
    Field r = b;
    r -= map.apply(x);
    return r;
}

}  // namespace

KrylovResult cg_solve(const LinearMap& map, const Field& b, const KrylovConfig& cfg, const Field* x0) {
    cfg.validate();
    require_same_grid(map.grid, b.grid(), "cg_solve");
    if (!map.symmetric) throw std::invalid_argument("cg_solve: map is not flagged symmetric");

    const double tol = threshold(cfg, norm_h(b));
    Field x = x0 ? *x0 : Field(b.grid());
    Field r = residual(map, b, x);
    double r_norm = norm_h(r);
    int it = 0;

    // Outer loop re-seeds from the true residual if recurrence drift fools the stopping test.
    while (r_norm > tol && it < cfg.max_iter) {
        const int it_start = it;
        Field z = precondition(map, cfg, r);
        Field p = z;
        double rz = inner_product(r, z);
        while (it < cfg.max_iter) {
            const Field ap = map.apply(p);
            const double pap = inner_product(p, ap);
            if (!(pap > 0.0)) break;
            const double alpha = rz / pap;
            x.axpy(alpha, p);
            r.axpy(-alpha, ap);
            ++it;
            if (norm_h(r) <= tol) break;
            z = precondition(map, cfg, r);
            const double rz_new = inner_product(r, z);
            const double beta = rz_new / rz;
            rz = rz_new;
            p *= beta;
            p += z;
        }
        r = residual(map, b, x);
        r_norm = norm_h(r);
        if (it == it_start) break;  // p^T A p <= 0: map is not positive definite
    }
    if (!(r_norm <= tol)) throw MaxIterationsExceeded("cg_solve did not converge", it, r_norm);
    return {std::move(x), it, r_norm, 0};
}

KrylovResult bicgstab_solve(const LinearMap& map, const Field& b, const KrylovConfig& cfg,
                            const Field* x0) {
    cfg.validate();
    require_same_grid(map.grid, b.grid(), "bicgstab_solve");

    const TorusGrid& grid = b.grid();
    const double tol = threshold(cfg, norm_h(b));
    Field x = x0 ? *x0 : Field(grid);
    Field r = residual(map, b, x);
    double r_norm = norm_h(r);
    if (r_norm <= tol) return {std::move(x), 0, r_norm, 0};

    constexpr double kBreakdown = 1e-30;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    int it = 0;
    int restarts = 0;
    Field shadow = r;

    while (it < cfg.max_iter) {
        const double scale = norm_h(r);
        for (std::size_t k = 0; k < shadow.size(); ++k) shadow[k] = r[k] + scale * unif(rng);
        Field p(grid), v(grid);
        double rho = 1.0, alpha = 1.0, omega = 1.0;
        bool breakdown = false;

        while (it < cfg.max_iter) {
            const double rho_new = inner_product(shadow, r);
            if (std::abs(rho_new) < kBreakdown * norm_h(shadow) * norm_h(r) || rho_new == 0.0) {
                breakdown = true;
                break;
            }
            const double beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            p.axpy(-omega, v);
            p *= beta;
            p += r;
            const Field phat = precondition(map, cfg, p);
            v = map.apply(phat);
            const double sv = inner_product(shadow, v);
            if (std::abs(sv) < kBreakdown * norm_h(shadow) * norm_h(v) || sv == 0.0) {
                breakdown = true;
                break;
            }
            alpha = rho / sv;
            Field s = r;
            s.axpy(-alpha, v);
            ++it;
            if (norm_h(s) <= tol) {
                x.axpy(alpha, phat);
                r = std::move(s);
                break;
            }
            const Field shat = precondition(map, cfg, s);
            const Field t = map.apply(shat);
            const double tt = inner_product(t, t);
            if (tt == 0.0) {
                breakdown = true;
                x.axpy(alpha, phat);
                r = std::move(s);
                break;
            }
            omega = inner_product(t, s) / tt;
            if (!std::isfinite(alpha) || !std::isfinite(omega)) {
                breakdown = true;
                break;
            }
            x.axpy(alpha, phat);
            x.axpy(omega, shat);
            r = std::move(s);
            r.axpy(-omega, t);
            if (norm_h(r) <= tol) break;
            if (omega == 0.0) {
                breakdown = true;
                break;
            }
        }

        r = residual(map, b, x);
        r_norm = norm_h(r);
        if (r_norm <= tol) return {std::move(x), it, r_norm, restarts};
        if (breakdown) {
            if (restarts >= 1)
                throw BreakdownDetected("bicgstab_solve: breakdown persisted after a restart");
            ++restarts;
        }
    }
    throw MaxIterationsExceeded("bicgstab_solve did not converge", it, r_norm);
}

FastDiagonalizationSolver::FastDiagonalizationSolver(const EllipticOperator& op) : op_(op) {
    const int d = op.grid().d();
    const double norm0 = 1.0 / std::sqrt(static_cast<double>(d));
    const double norm1 = std::sqrt(2.0 / d);
    const double two_pi = 2.0 * std::numbers::pi;

    // Real orthonormal eigenbasis of the periodic second difference.
    basis_.assign(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<double> mu(d, 0.0);
    auto at = [&](int j, int k) -> double& { return basis_[static_cast<std::size_t>(j) * d + k]; };
    int col = 0;
    for (int j = 0; j < d; ++j) at(j, col) = norm0;
    mu[col++] = 0.0;
    for (int k = 1; 2 * k < d; ++k) {
        const double eig = 2.0 - 2.0 * std::cos(two_pi * k / d);
        for (int j = 0; j < d; ++j) at(j, col) = norm1 * std::cos(two_pi * k * j / d);
        mu[col++] = eig;
        for (int j = 0; j < d; ++j) at(j, col) = norm1 * std::sin(two_pi * k * j / d);
        mu[col++] = eig;
    }
    if (d % 2 == 0) {
        for (int j = 0; j < d; ++j) at(j, col) = (j % 2 == 0 ? norm0 : -norm0);
        mu[col++] = 4.0;
    }

    const double s = op.stencil_coefficient();
    eigenvalues_.resize(static_cast<std::size_t>(d) * d);
    inverse_.resize(eigenvalues_.size());
    inverse_squared_.resize(eigenvalues_.size());
    min_eig_ = std::numeric_limits<double>::infinity();
    max_eig_ = 0.0;
    for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) {
            const std::size_t idx = static_cast<std::size_t>(k) * d + l;
            const double e = s * (mu[k] + mu[l]) + op.lambda();
            eigenvalues_[idx] = e;
            inverse_[idx] = 1.0 / e;
            inverse_squared_[idx] = 1.0 / (e * e);
            min_eig_ = std::min(min_eig_, e);
            max_eig_ = std::max(max_eig_, e);
        }
}

std::vector<double> FastDiagonalizationSolver::scale_for_power(int power) const {
    std::vector<double> scale(eigenvalues_.size());
    for (std::size_t k = 0; k < scale.size(); ++k) scale[k] = std::pow(eigenvalues_[k], power);
    return scale;
}

Field FastDiagonalizationSolver::transform(const Field& b, const std::vector<double>& scale) const {
    require_same_grid(op_.grid(), b.grid(), "FastDiagonalizationSolver");
    const int d = op_.grid().d();
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> q(basis_.data(), d, d);
    Eigen::Map<const RowMat> v(b.values().data(), d, d);
    Eigen::Map<const RowMat> sc(scale.data(), d, d);
    RowMat coeff = q.transpose() * v * q;
    coeff.array() *= sc.array();
    Field out(b.grid());
    Eigen::Map<RowMat> o(out.values().data(), d, d);
    o.noalias() = q * coeff * q.transpose();
    return out;
}

Field FastDiagonalizationSolver::solve(const Field& b, int power) const {
    if (power == 1) return transform(b, inverse_);
    if (power == 2) return transform(b, inverse_squared_);
    return transform(b, scale_for_power(-power));
}

Field FastDiagonalizationSolver::apply_power(const Field& b, int power) const {
    return transform(b, scale_for_power(power));
}

EllipticSolver::EllipticSolver(EllipticOperator op, EllipticMethod method, KrylovConfig krylov)
    : op_(op), method_(method), krylov_(krylov) {
    krylov_.validate();
    if (method_ == EllipticMethod::kFastDiagonalization) spectral_.emplace(op_);
}

Field EllipticSolver::solve(const Field& b) const {
    if (spectral_) return spectral_->solve(b, 1);
    return solve_elliptic(op_, b, krylov_);
}

Field EllipticSolver::solve_squared(const Field& b) const {
    if (spectral_) return spectral_->solve(b, 2);
    return solve(solve(b));
}

LinearMap elliptic_map(const EllipticOperator& op) {
    return LinearMap{[op](const Field& v) { return op.apply(v); }, op.grid(), true,
                     Field(op.grid(), op.diagonal())};
}

Field solve_elliptic(const EllipticOperator& op, const Field& b, const KrylovConfig& cfg) {
    require_same_grid(op.grid(), b.grid(), "solve_elliptic");
    return cg_solve(elliptic_map(op), b, cfg).x;
}

}  // namespace mfg_uzawa
