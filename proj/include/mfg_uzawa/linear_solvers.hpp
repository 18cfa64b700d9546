#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mfg_uzawa/grid.hpp"

namespace mfg_uzawa {

/// Opaque linear map on grid fields.
struct LinearMap {
    std::function<Field(const Field&)> apply;
    TorusGrid grid;
    bool symmetric = false;
    /// Main diagonal, required only when Jacobi preconditioning is requested.
    std::optional<Field> diagonal;
};

struct KrylovConfig {
    double rtol = 1e-10;
    double atol = 0.0;
    int max_iter = 2000;
    bool jacobi = false;
    /// Seeds the BiCGStab shadow residual.
    std::uint64_t seed = 0x5eed;

    void validate() const;
};

struct KrylovResult {
    Field x;
    int iterations = 0;
    /// ||map(x) - b||_h, recomputed from scratch after the last iteration.
    double residual = 0.0;
    int restarts = 0;
};

/// Conjugate gradient for symmetric positive definite maps.
/// Throws MaxIterationsExceeded when the residual contract is not met.
KrylovResult cg_solve(const LinearMap& map, const Field& b, const KrylovConfig& cfg,
                      const Field* x0 = nullptr);

/// BiCGStab for general invertible maps. The shadow residual is r0 plus a
/// seeded random perturbation. On breakdown it restarts once from the
/// current iterate with a fresh shadow, then throws BreakdownDetected.
KrylovResult bicgstab_solve(const LinearMap& map, const Field& b, const KrylovConfig& cfg,
                            const Field* x0 = nullptr);

/// Exact inverse powers of the periodic operator -nu Delta_h + lambda I.
///
/// The 1-D periodic second difference is diagonalized by a real Fourier
/// basis Q, so A = (Q x Q) diag(s (mu_k + mu_l) + lambda) (Q x Q)^T with
/// s the stencil coefficient. A solve costs four d x d matrix products.
class FastDiagonalizationSolver {
public:
    explicit FastDiagonalizationSolver(const EllipticOperator& op);

    const EllipticOperator& op() const noexcept { return op_; }

    /// A^{-power} b.
    Field solve(const Field& b, int power = 1) const;
    /// A^{power} b through the spectral representation (test aid).
    Field apply_power(const Field& b, int power) const;

    double min_eigenvalue() const noexcept { return min_eig_; }
    double max_eigenvalue() const noexcept { return max_eig_; }

private:
    Field transform(const Field& b, const std::vector<double>& scale) const;
    std::vector<double> scale_for_power(int power) const;

    EllipticOperator op_;
    std::vector<double> basis_;  // d x d row-major, column k is eigenvector k
    std::vector<double> eigenvalues_;  // d x d, (k, l) mode
    double min_eig_ = 0.0;
    double max_eig_ = 0.0;
    std::vector<double> inverse_;          // 1 / eigenvalue
    std::vector<double> inverse_squared_;  // 1 / eigenvalue^2
};

enum class EllipticMethod { kConjugateGradient, kFastDiagonalization };

/// Solves with A = op, by CG (iterative, KrylovConfig tolerance) or by
/// fast diagonalization (exact up to rounding).
class EllipticSolver {
public:
    EllipticSolver(EllipticOperator op, EllipticMethod method = EllipticMethod::kFastDiagonalization,
                   KrylovConfig krylov = {});

    const EllipticOperator& op() const noexcept { return op_; }
    EllipticMethod method() const noexcept { return method_; }

    Field solve(const Field& b) const;
    /// A^{-2} b.
    Field solve_squared(const Field& b) const;

private:
    EllipticOperator op_;
    EllipticMethod method_;
    KrylovConfig krylov_;
    std::optional<FastDiagonalizationSolver> spectral_;
};

/// v with ||A v - b||_h <= max(rtol ||b||_h, atol), by conjugate gradient.
Field solve_elliptic(const EllipticOperator& op, const Field& b, const KrylovConfig& cfg = {});

LinearMap elliptic_map(const EllipticOperator& op);

}  // namespace mfg_uzawa
