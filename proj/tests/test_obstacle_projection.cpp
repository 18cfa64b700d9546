#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dense_oracles.hpp"
#include "mfg_uzawa/errors.hpp"
#include "mfg_uzawa/obstacle_projection.hpp"

using namespace mfg_uzawa;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

/// Dense rows of the constraint blocks B (stacked) for a set on a d-grid.
MatrixXd dense_constraints(const ConstraintSet& set, int d) {
    const int n = d * d;
    const TorusGrid g(d);
    MatrixXd b(static_cast<Eigen::Index>(set.blocks()) * n, n);
    for (int col = 0; col < n; ++col) {
        Field e(g);
        e[col] = 1.0;
        for (std::size_t blk = 0; blk < set.blocks(); ++blk)
            b.block(static_cast<Eigen::Index>(blk) * n, col, n, 1) = oracle::to_vec(set.apply_block(e, blk));
    }
    return b;
}

/// min 1/2 |A v - g|^2 s.t. B v <= c through its dual, solved by cyclic
/// coordinate ascent (exact per coordinate) until the sweep stalls.
VectorXd dense_projection_dual_cd(const MatrixXd& a, const MatrixXd& b, double c, const VectorXd& g) {
    const MatrixXd ainv = a.inverse();
    const MatrixXd ainv2 = ainv * ainv;
    const MatrixXd hess = b * ainv2 * b.transpose();
    const VectorXd lin = b * ainv * g - VectorXd::Constant(b.rows(), c);
    VectorXd p = VectorXd::Zero(b.rows());
    VectorXd grad = lin;  // lin - hess p
    for (int sweep = 0; sweep < 200000; ++sweep) {
        double moved = 0.0;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            const double next = std::max(0.0, p[k] + grad[k] / hess(k, k));
            const double diff = next - p[k];
            if (diff != 0.0) {
                grad -= diff * hess.col(k);
                p[k] = next;
                moved = std::max(moved, std::abs(diff));
            }
        }
        if (moved < 1e-15) break;
    }
    return ainv * g - ainv2 * b.transpose() * p;  // v
}

}  // namespace

TEST_CASE("running cost") {
    const TorusGrid g(4);
    std::mt19937_64 rng(71);
    const Field f0 = oracle::random_field(g, rng);
    const RunningCost cost(f0, 1.0, 1.0);
    SUBCASE("m = 0 gives f0") {
        const Field out = eval_cost(cost, Field(g));
        for (std::size_t k = 0; k < f0.size(); ++k) CHECK(out[k] == doctest::Approx(f0[k]));
    }
    SUBCASE("constants are eigenvectors") {
        const Field out = eval_cost(cost, Field(g, 0.3));
        for (std::size_t k = 0; k < f0.size(); ++k) CHECK(out[k] == doctest::Approx(f0[k] + 0.6));
    }
    SUBCASE("dense assembly") {
        const Field m = oracle::random_field(g, rng);
        const VectorXd ref = oracle::to_vec(f0) + oracle::cost_matrix(4, 1.0, 1.0) * oracle::to_vec(m);
        const Field out = eval_cost(cost, m);
        for (std::size_t k = 0; k < f0.size(); ++k) CHECK(std::abs(out[k] - ref[k]) <= 1e-10);
    }
    SUBCASE("curvature bounds are the spectrum") {
        const VectorXd eig = Eigen::SelfAdjointEigenSolver<MatrixXd>(oracle::cost_matrix(4, 1.0, 1.0)).eigenvalues();
        CHECK(cost.min_curvature() == doctest::Approx(eig.minCoeff()));
        CHECK(cost.max_curvature() == doctest::Approx(eig.maxCoeff()));
    }
    SUBCASE("monotonicity on random pairs") {
        const TorusGrid g8(8);
        const RunningCost c8(Field(g8), 1.0, 1.0);
        for (int t = 0; t < 1000; ++t) {
            const Field m1 = oracle::random_field(g8, rng), m2 = oracle::random_field(g8, rng);
            const Field diff = m1 - m2;
            const double lhs = inner_product(eval_cost(c8, m1) - eval_cost(c8, m2), diff);
            CHECK(lhs >= c8.alpha() * inner_product(diff, diff) - 1e-12);
        }
    }
    CHECK_THROWS_AS(RunningCost(f0, -1.0, 0.0), std::invalid_argument);
}

TEST_CASE("solve_density_vi closed forms") {
    const TorusGrid g(5);
    std::mt19937_64 rng(72);
    for (DensityMethod method : {DensityMethod::kProjectedGradient, DensityMethod::kSemismoothNewton}) {
        const DensityOptions opt{1e-12, 10000, method, 0.0};
        const Field q = oracle::random_field(g, rng);
        const ComplementaritySolution s0 = solve_density_vi(RunningCost(Field(g), 1.0, 0.0), q, opt);
        for (std::size_t k = 0; k < q.size(); ++k) CHECK(s0.m[k] == doctest::Approx(std::max(q[k], 0.0)));

        const Field f0 = oracle::random_field(g, rng);
        const ComplementaritySolution s1 = solve_density_vi(RunningCost(f0, 1.0, 0.0), q, opt);
        for (std::size_t k = 0; k < q.size(); ++k) CHECK(s1.m[k] == doctest::Approx(std::max(q[k] - f0[k], 0.0)));
        CHECK(s1.residual_feasibility <= 1e-12);
        CHECK(s1.residual_complementarity <= 1e-12);
    }
}

TEST_CASE("solve_density_vi matches two dense oracles") {
    const int d = 4;
    const TorusGrid g(d);
    std::mt19937_64 rng(73);
    const MatrixXd f = oracle::cost_matrix(d, 1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const Field f0 = oracle::random_field(g, rng);
        const Field q = oracle::random_field(g, rng, -1.0, 2.0);
        const VectorXd base = oracle::to_vec(f0) - oracle::to_vec(q);

        // Oracle 1: slow projected gradient.
        VectorXd m1 = VectorXd::Zero(d * d);
        for (int it = 0; it < 2000000; ++it) {
            const VectorXd next = (m1 - 1e-3 * (f * m1 + base)).cwiseMax(0.0);
            const double change = (next - m1).norm();
            m1 = next;
            if (change < 1e-15) break;
        }
        // Oracle 2: dense semismooth Newton on min(m, F m + base) = 0.
        VectorXd m2 = VectorXd::Zero(d * d);
        for (int it = 0; it < 100; ++it) {
            const VectorXd r = f * m2 + base;
            MatrixXd jac = MatrixXd::Identity(d * d, d * d);
            VectorXd phi(d * d);
            for (int k = 0; k < d * d; ++k) {
                if (m2[k] <= r[k]) {
                    phi[k] = m2[k];
                } else {
                    phi[k] = r[k];
                    jac.row(k) = f.row(k);
                }
            }
            if (phi.norm() < 1e-15) break;
            m2 -= jac.lu().solve(phi);
        }
        CHECK((m1 - m2).norm() <= 1e-9);

        for (DensityMethod method : {DensityMethod::kProjectedGradient, DensityMethod::kSemismoothNewton}) {
            const ComplementaritySolution s = solve_density_vi(RunningCost(f0, 1.0, 1.0), q, {1e-13, 10000, method, 0.0});
            CHECK((oracle::to_vec(s.m) - m2).norm() <= 1e-9);
            CHECK(s.m.min() >= 0.0);
            CHECK(s.residual_feasibility <= 1e-13);
            CHECK(s.residual_complementarity <= 1e-13);
        }
    }
}

TEST_CASE("solve_density_vi properties") {
    const TorusGrid g(6);
    std::mt19937_64 rng(74);
    SUBCASE("monotone in q without smoothing") {
        const RunningCost cost(oracle::random_field(g, rng), 2.0, 0.0);
        for (int t = 0; t < 20; ++t) {
            const Field q = oracle::random_field(g, rng);
            const Field q2 = q + oracle::random_field(g, rng, 0.0, 1.0);
            const Field a = solve_density_vi(cost, q).m, b = solve_density_vi(cost, q2).m;
            for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] <= b[k] + 1e-12);
        }
    }
    SUBCASE("warm start reaches the same point") {
        const RunningCost cost(oracle::random_field(g, rng), 1.0, 1.0);
        const Field q = oracle::random_field(g, rng);
        const Field cold = solve_density_vi(cost, q, {1e-13, 10000, DensityMethod::kProjectedGradient, 0.0}).m;
        const Field start = oracle::random_field(g, rng, 0.0, 3.0);
        const Field warm =
            solve_density_vi(cost, q, {1e-13, 10000, DensityMethod::kProjectedGradient, 0.0}, &start).m;
        for (std::size_t k = 0; k < cold.size(); ++k) CHECK(std::abs(cold[k] - warm[k]) <= 1e-10);
    }
    SUBCASE("oversized step is reported") {
        const RunningCost cost(Field(g), 1.0, 1.0);
        const Field q = oracle::random_field(g, rng);
        CHECK_THROWS_AS(solve_density_vi(cost, q, {1e-12, 10000, DensityMethod::kProjectedGradient, 5.0}),
                        NonMonotoneCost);
    }
    SUBCASE("iteration cap") {
        const RunningCost cost(Field(g), 1.0, 1.0);
        const Field q = oracle::random_field(g, rng);
        CHECK_THROWS_AS(solve_density_vi(cost, q, {1e-14, 2, DensityMethod::kProjectedGradient, 0.0}),
                        MaxIterationsExceeded);
    }
}

TEST_CASE("constraint sets") {
    const int d = 5;
    const TorusGrid g(d);
    std::mt19937_64 rng(75);
    const ConstraintSet zero = ConstraintSet::zero_obstacle();
    const ConstraintSet jump = ConstraintSet::jump_obstacle(JumpOperator(0.5, {{1, 0}, {0, 0}, {-2, 3}, {1, 0}}));
    const ConstraintSet free = ConstraintSet::unconstrained();
    CHECK(zero.blocks() == 1);
    CHECK(jump.blocks() == 2);
    CHECK(free.blocks() == 0);
    CHECK(free.violation(oracle::random_field(g, rng)) == 0.0);

    SUBCASE("violation agrees with the definitions") {
        const Field v = oracle::random_field(g, rng);
        CHECK(zero.violation(v) == doctest::Approx(std::max(0.0, v.max())));
        const Field gap = v - apply_jump(*jump.jump(), v);
        CHECK(jump.violation(v) == doctest::Approx(std::max(0.0, gap.max())));
        CHECK(jump.contains(Field(g)));
    }
    SUBCASE("transpose and norm") {
        const MatrixXd b = dense_constraints(jump, d);
        std::vector<Field> p{oracle::random_field(g, rng), oracle::random_field(g, rng)};
        VectorXd stacked(2 * d * d);
        stacked << oracle::to_vec(p[0]), oracle::to_vec(p[1]);
        const VectorXd ref = b.transpose() * stacked;
        const Field out = jump.apply_transpose(p);
        for (std::size_t k = 0; k < out.size(); ++k) CHECK(out[k] == doctest::Approx(ref[k]));
        const double sv = Eigen::JacobiSVD<MatrixXd>(b).singularValues()[0];
        CHECK(jump.operator_norm_squared(g) == doctest::Approx(sv * sv));
        CHECK(zero.operator_norm_squared(g) == doctest::Approx(1.0));

        const MatrixXd ainv = oracle::elliptic_matrix(d, 0.07, 1.3).inverse();
        const EllipticOperator op(g, 0.07, 1.3);
        const MatrixXd hess = b * ainv * ainv * b.transpose();
        CHECK(jump.dual_curvature(op) ==
              doctest::Approx(Eigen::SelfAdjointEigenSolver<MatrixXd>(hess).eigenvalues().maxCoeff()));
        CHECK(zero.dual_curvature(op) == doctest::Approx(1.0 / (1.3 * 1.3)));
    }
}

TEST_CASE("project_multiplier examples") {
    const int d = 4;
    const TorusGrid g(d);
    const EllipticOperator op(g, 0.1, 1.0);
    std::mt19937_64 rng(76);

    SUBCASE("feasible target is returned unchanged") {
        Field v = oracle::random_field(g, rng, -2.0, -0.1);
        const Field gt = op.apply(v);
        const ProjectionResult r = project_multiplier(op, gt, ConstraintSet::zero_obstacle());
        CHECK(r.iterations == 0);
        for (std::size_t k = 0; k < v.size(); ++k) {
            CHECK(r.g[k] == gt[k]);
            CHECK(r.u[k] == doctest::Approx(v[k]).epsilon(1e-12));
        }
    }
    SUBCASE("unconstrained set is the identity") {
        const Field gt = oracle::random_field(g, rng);
        const ProjectionResult r = project_multiplier(op, gt, ConstraintSet::unconstrained());
        for (std::size_t k = 0; k < gt.size(); ++k) CHECK(r.g[k] == gt[k]);
    }
    SUBCASE("zero obstacle with three violated nodes matches active-set enumeration") {
        const MatrixXd a = oracle::elliptic_matrix(d, 0.1, 1.0);
        for (int trial = 0; trial < 5; ++trial) {
            Field v = oracle::random_field(g, rng, -1.0, -0.2);
            std::vector<int> violated;
            while (violated.size() < 3) {
                const int k = static_cast<int>(rng() % (d * d));
                if (std::find(violated.begin(), violated.end(), k) == violated.end()) violated.push_back(k);
            }
            for (int k : violated) v[k] = 0.3 + 0.5 * (rng() % 100) / 100.0;
            const VectorXd gt = a * oracle::to_vec(v);

            VectorXd best;
            for (unsigned mask = 0; mask < 8u; ++mask) {
                std::vector<int> fixed;
                for (int b = 0; b < 3; ++b)
                    if (mask & (1u << b)) fixed.push_back(violated[b]);
                // Minimize over free coordinates with v = 0 on the fixed set.
                std::vector<int> free;
                for (int k = 0; k < d * d; ++k)
                    if (std::find(fixed.begin(), fixed.end(), k) == fixed.end()) free.push_back(k);
                const MatrixXd a2 = a * a;
                const VectorXd agt = a * gt;
                MatrixXd h(free.size(), free.size());
                VectorXd rhs(free.size());
                for (std::size_t i = 0; i < free.size(); ++i) {
                    rhs[i] = agt[free[i]];
                    for (std::size_t j = 0; j < free.size(); ++j) h(i, j) = a2(free[i], free[j]);
                }
                const VectorXd vf = h.llt().solve(rhs);
                VectorXd cand = VectorXd::Zero(d * d);
                for (std::size_t i = 0; i < free.size(); ++i) cand[free[i]] = vf[i];
                const VectorXd mult = agt - a2 * cand;
                bool ok = cand.maxCoeff() <= 1e-12;
                for (int k : fixed) ok = ok && mult[k] >= -1e-12;
                if (ok) {
                    best = cand;
                    break;
                }
            }
            REQUIRE(best.size() == d * d);
            const ProjectionResult r =
                project_multiplier(op, oracle::to_field(g, gt), ConstraintSet::zero_obstacle(), {1e-11, 200000, 0.0});
            CHECK((oracle::to_vec(r.u) - best).norm() <= 1e-8);
            CHECK((oracle::to_vec(r.g) - a * best).norm() <= 1e-8);
        }
    }
    SUBCASE("jump obstacle matches a dense dual solve") {
        const ConstraintSet set = ConstraintSet::jump_obstacle(JumpOperator(0.2, {{1, 0}, {0, 1}}));
        const MatrixXd a = oracle::elliptic_matrix(d, 0.1, 1.0);
        const MatrixXd b = dense_constraints(set, d);
        for (int trial = 0; trial < 3; ++trial) {
            const Field gt = oracle::random_field(g, rng, -3.0, 3.0);
            const VectorXd ref = dense_projection_dual_cd(a, b, 0.2, oracle::to_vec(gt));
            const ProjectionResult r = project_multiplier(op, gt, set, {1e-11, 200000, 0.0});
            CHECK((oracle::to_vec(r.u) - ref).norm() <= 1e-8);
            CHECK(r.violation <= 1e-11);
            CHECK(set.violation(r.u) <= 1e-11);
        }
    }
}

TEST_CASE("project_multiplier properties") {
    const int d = 6;
    const TorusGrid g(d);
    const EllipticOperator op(g, 0.05, 1.0);
    const EllipticSolver solver(op);
    std::mt19937_64 rng(77);
    const double tol = 1e-10;
    for (const ConstraintSet& set :
         {ConstraintSet::zero_obstacle(), ConstraintSet::jump_obstacle(JumpOperator(0.3, {{1, 0}, {2, -1}}))}) {
        CAPTURE(set.name());
        for (int t = 0; t < 5; ++t) {
            const Field g1 = oracle::random_field(g, rng, -5.0, 5.0), g2 = oracle::random_field(g, rng, -5.0, 5.0);
            const ProjectionResult p1 = project_multiplier(solver, g1, set, {tol, 200000, 0.0});
            const ProjectionResult p2 = project_multiplier(solver, g2, set, {tol, 200000, 0.0});
            CHECK(set.violation(p1.u) <= tol);

            const ProjectionResult again = project_multiplier(solver, p1.g, set, {tol, 200000, 0.0});
            CHECK(norm_h(again.g - p1.g) <= 10 * tol);
            CHECK(norm_h(p1.g - p2.g) <= norm_h(g1 - g2) + 10 * tol);

            // Variational characterization against feasible points.
            for (int s = 0; s < 20; ++s) {
                Field vf = oracle::random_field(g, rng, -1.0, 0.0);
                if (set.kind() == ConstraintSet::Kind::kJumpObstacle) vf *= 0.1;
                REQUIRE(set.contains(vf));
                const Field gf = op.apply(vf);
                CHECK(inner_product(g1 - p1.g, gf - p1.g) <= tol);
            }

            // Warm start from the converged dual stops immediately.
            const ProjectionResult warm = project_multiplier(solver, g1, set, {tol, 200000, 0.0}, &p1.dual);
            CHECK(warm.iterations <= 1);
            CHECK(norm_h(warm.g - p1.g) <= 10 * tol);
        }
    }
}
