#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace mfg_uzawa {

/// Periodic d x d grid on the unit torus, mesh size h = 1/d.
///
/// Nodes are addressed by 0-based (i, j) with i the x-index; storage is
/// row-major, k = i * d + j. Node (i, j) sits at (i h, j h). All index
/// arithmetic wraps modulo d.
class TorusGrid {
public:
    explicit TorusGrid(int d);

    int d() const noexcept { return d_; }
    double h() const noexcept { return h_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(d_) * d_; }

    int wrap(int i) const noexcept {
        const int r = i % d_;
        return r < 0 ? r + d_ : r;
    }
    std::size_t index(int i, int j) const noexcept {
        return static_cast<std::size_t>(wrap(i)) * d_ + wrap(j);
    }
    double x(int i) const noexcept { return i * h_; }
    double y(int j) const noexcept { return j * h_; }

    bool operator==(const TorusGrid& other) const noexcept { return d_ == other.d_; }

private:
    int d_;
    double h_;
};

/// Real-valued function on the grid nodes.
class Field {
public:
    explicit Field(TorusGrid grid, double value = 0.0);
    Field(TorusGrid grid, std::vector<double> values);

    static Field from_function(TorusGrid grid, const std::function<double(double, double)>& f);

    const TorusGrid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }
    double& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
    double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double>& data() const noexcept { return values_; }

    Field& operator+=(const Field& other);
    Field& operator-=(const Field& other);
    Field& operator*=(double s);
    /// this += s * other
    Field& axpy(double s, const Field& other);

    bool all_finite() const noexcept;
    double max() const;
    double min() const;
    double sum() const;

private:
    TorusGrid grid_;
    std::vector<double> values_;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(double s, Field a);

/// Throws GridMismatch unless both grids agree.
void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* context);

/// Weighted scalar product sum h^2 x_ij y_ij.
double inner_product(const Field& x, const Field& y);
double norm_h(const Field& x);
double max_abs(const Field& x);

/// Componentwise max(v, 0) and min(v, 0).
Field positive_part(const Field& v);
Field negative_part(const Field& v);

enum class StencilScaling {
    kH2,  ///< nu * (5-point stencil) / h^2, the consistent Laplacian
    kH,   ///< nu * (5-point stencil) / h, literal alternative kept for comparison
};

/// A = -nu Delta_h + lambda I with periodic 5-point stencil.
class EllipticOperator {
public:
    EllipticOperator(TorusGrid grid, double nu, double lambda,
                     StencilScaling scaling = StencilScaling::kH2);

    const TorusGrid& grid() const noexcept { return grid_; }
    double nu() const noexcept { return nu_; }
    double lambda() const noexcept { return lambda_; }
    StencilScaling scaling() const noexcept { return scaling_; }

    /// Coefficient multiplying the undivided 5-point stencil.
    double stencil_coefficient() const noexcept;
    double diagonal() const noexcept { return 4.0 * stencil_coefficient() + lambda_; }

    Field apply(const Field& v) const;
    void apply(std::span<const double> v, std::span<double> out) const;

private:
    TorusGrid grid_;
    double nu_;
    double lambda_;
    StencilScaling scaling_;
};

Field apply_elliptic(const EllipticOperator& op, const Field& v);

using Quad = std::array<double, 4>;

/// One-sided difference quotients per node:
/// (forward-x, backward-x, forward-y, backward-y), each divided by h.
struct DerivativeStencil {
    TorusGrid grid;
    std::vector<Quad> p;

    const Quad& at(int i, int j) const { return p[grid.index(i, j)]; }
};

DerivativeStencil derivative_stencil(const Field& v);

/// Component c of D_h applied to w at every node, c in 0..3.
Field apply_derivative_component(const Field& w, int c);
/// Transpose (Euclidean) of apply_derivative_component.
Field apply_derivative_component_transpose(const Field& z, int c);

struct GridOffset {
    int di = 0;
    int dj = 0;
    bool operator==(const GridOffset&) const = default;
};

/// (M v)_ij = min over offsets xi of (k0 + v_{(i,j)+xi}).
class JumpOperator {
public:
    JumpOperator(double k0, std::vector<GridOffset> offsets);

    double k0() const noexcept { return k0_; }
    const std::vector<GridOffset>& offsets() const noexcept { return offsets_; }

    Field apply(const Field& v) const;

private:
    double k0_;
    std::vector<GridOffset> offsets_;
};

Field apply_jump(const JumpOperator& jump, const Field& v);

/// v shifted by an offset: out_ij = v_{(i,j)+xi}.
Field shift(const Field& v, GridOffset offset);

/// Godunov upwind discretization of sqrt(1 + |p|^2):
/// sqrt(1 + min(p1,0)^2 + max(p2,0)^2 + min(p3,0)^2 + max(p4,0)^2).
double numerical_hamiltonian(const Quad& p);

/// Gradient of numerical_hamiltonian; kinks take the subgradient element 0.
Quad grad_numerical_hamiltonian(const Quad& p);

/// HJB(u) = A u + g(D_h u).
Field apply_hjb(const EllipticOperator& op, const Field& u);

}  // namespace mfg_uzawa
