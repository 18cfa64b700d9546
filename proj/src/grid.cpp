#include "mfg_uzawa/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mfg_uzawa/errors.hpp"

namespace mfg_uzawa {

TorusGrid::TorusGrid(int d) : d_(d), h_(0.0) {
    if (d < 2) throw std::invalid_argument("TorusGrid: d must be >= 2, got " + std::to_string(d));
    h_ = 1.0 / d;
}

Field::Field(TorusGrid grid, double value) : grid_(grid), values_(grid.size(), value) {}

Field::Field(TorusGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
        throw std::invalid_argument("Field: expected " + std::to_string(grid_.size()) +
                                    " values, got " + std::to_string(values_.size()));
}

Field Field::from_function(TorusGrid grid, const std::function<double(double, double)>& f) {
    Field out(grid);
    for (int i = 0; i < grid.d(); ++i)
        for (int j = 0; j < grid.d(); ++j) out(i, j) = f(grid.x(i), grid.y(j));
    return out;
}

Field& Field::operator+=(const Field& other) {
    require_same_grid(grid_, other.grid_, "Field::operator+=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
    return *this;
}

Field& Field::operator-=(const Field& other) {
    require_same_grid(grid_, other.grid_, "Field::operator-=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= other.values_[k];
    return *this;
}

Field& Field::operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
}

Field& Field::axpy(double s, const Field& other) {
    require_same_grid(grid_, other.grid_, "Field::axpy");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += s * other.values_[k];
    return *this;
}

bool Field::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Field::max() const { return *std::max_element(values_.begin(), values_.end()); }
double Field::min() const { return *std::min_element(values_.begin(), values_.end()); }
double Field::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(double s, Field a) { return a *= s; }

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* context) {
    if (!(a == b))
        throw GridMismatch(std::string(context) + ": grid mismatch (d=" + std::to_string(a.d()) +
                           " vs d=" + std::to_string(b.d()) + ")");
}

double inner_product(const Field& x, const Field& y) {
    require_same_grid(x.grid(), y.grid(), "inner_product");
    const double h = x.grid().h();
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
    return h * h * s;
}

double norm_h(const Field& x) { return std::sqrt(inner_product(x, x)); }

double max_abs(const Field& x) {
    double m = 0.0;
    for (double v : x.values()) m = std::max(m, std::abs(v));
    return m;
}

Field positive_part(const Field& v) {
    Field out = v;
    for (double& x : out.values()) x = std::max(x, 0.0);
    return out;
}

Field negative_part(const Field& v) {
    Field out = v;
    for (double& x : out.values()) x = std::min(x, 0.0);
    return out;
}

EllipticOperator::EllipticOperator(TorusGrid grid, double nu, double lambda, StencilScaling scaling)
    : grid_(grid), nu_(nu), lambda_(lambda), scaling_(scaling) {
    if (!(nu >= 0.0) || !std::isfinite(nu))
        throw std::invalid_argument("EllipticOperator: nu must be finite and >= 0");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("EllipticOperator: lambda must be finite and > 0");
}

double EllipticOperator::stencil_coefficient() const noexcept {
    const double h = grid_.h();
    return scaling_ == StencilScaling::kH2 ? nu_ / (h * h) : nu_ / h;
}

void EllipticOperator::apply(std::span<const double> v, std::span<double> out) const {
    const int d = grid_.d();
    const double s = stencil_coefficient();
    for (int i = 0; i < d; ++i) {
        const int ip = (i + 1) % d, im = (i + d - 1) % d;
        for (int j = 0; j < d; ++j) {
            const int jp = (j + 1) % d, jm = (j + d - 1) % d;
            const double c = v[i * d + j];
            const double lap = 4.0 * c - v[ip * d + j] - v[im * d + j] - v[i * d + jp] - v[i * d + jm];
            out[i * d + j] = s * lap + lambda_ * c;
        }
    }
}

Field EllipticOperator::apply(const Field& v) const {
    require_same_grid(grid_, v.grid(), "EllipticOperator::apply");
    Field out(grid_);
    apply(v.values(), out.values());
    return out;
}

Field apply_elliptic(const EllipticOperator& op, const Field& v) { return op.apply(v); }

DerivativeStencil derivative_stencil(const Field& v) {
    const TorusGrid& g = v.grid();
    const int d = g.d();
    const double inv_h = 1.0 / g.h();
    DerivativeStencil out{g, std::vector<Quad>(g.size())};
    for (int i = 0; i < d; ++i) {
        const int ip = (i + 1) % d, im = (i + d - 1) % d;
        for (int j = 0; j < d; ++j) {
            const int jp = (j + 1) % d, jm = (j + d - 1) % d;
            const double c = v[i * d + j];
            out.p[i * d + j] = {(v[ip * d + j] - c) * inv_h, (c - v[im * d + j]) * inv_h,
                                (v[i * d + jp] - c) * inv_h, (c - v[i * d + jm]) * inv_h};
        }
    }
    return out;
}

namespace {

// Neighbor offset and sign pattern of each one-sided difference:
// component c reads (w[k + step] - w[k]) for forward, (w[k] - w[k - step]) for backward.
struct Component {
    int di, dj;
    bool forward;
};
constexpr Component kComponents[4] = {{1, 0, true}, {1, 0, false}, {0, 1, true}, {0, 1, false}};

void check_component(int c) {
    if (c < 0 || c > 3) throw std::out_of_range("derivative component must be in 0..3");
}

}  // namespace

Field apply_derivative_component(const Field& w, int c) {
    check_component(c);
    const TorusGrid& g = w.grid();
    const int d = g.d();
    const double inv_h = 1.0 / g.h();
    const Component comp = kComponents[c];
    Field out(g);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            const double here = w(i, j);
            out(i, j) = comp.forward ? (w(i + comp.di, j + comp.dj) - here) * inv_h
                                     : (here - w(i - comp.di, j - comp.dj)) * inv_h;
        }
    return out;
}

Field apply_derivative_component_transpose(const Field& z, int c) {
    check_component(c);
    const TorusGrid& g = z.grid();
    const int d = g.d();
    const double inv_h = 1.0 / g.h();
    const Component comp = kComponents[c];
    Field out(g);
    // forward: (D z)_k = (z_{k+s} - z_k)/h  =>  (D^T z)_k = (z_{k-s} - z_k)/h
    // backward: (D z)_k = (z_k - z_{k-s})/h =>  (D^T z)_k = (z_k - z_{k+s})/h
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            const double here = z(i, j);
            out(i, j) = comp.forward ? (z(i - comp.di, j - comp.dj) - here) * inv_h
                                     : (here - z(i + comp.di, j + comp.dj)) * inv_h;
        }
    return out;
}

JumpOperator::JumpOperator(double k0, std::vector<GridOffset> offsets)
    : k0_(k0), offsets_(std::move(offsets)) {
    if (!(k0 > 0.0)) throw std::invalid_argument("JumpOperator: k0 must be > 0");
    if (offsets_.empty()) throw std::invalid_argument("JumpOperator: offsets must be nonempty");
}

Field shift(const Field& v, GridOffset offset) {
    const TorusGrid& g = v.grid();
    Field out(g);
    for (int i = 0; i < g.d(); ++i)
        for (int j = 0; j < g.d(); ++j) out(i, j) = v(i + offset.di, j + offset.dj);
    return out;
}

Field JumpOperator::apply(const Field& v) const {
    Field out(v.grid(), std::numeric_limits<double>::infinity());
    for (const GridOffset& xi : offsets_) {
        const Field shifted = shift(v, xi);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::min(out[k], k0_ + shifted[k]);
    }
    return out;
}

Field apply_jump(const JumpOperator& jump, const Field& v) { return jump.apply(v); }

double numerical_hamiltonian(const Quad& p) {
    const double a = std::min(p[0], 0.0), b = std::max(p[1], 0.0);
    const double c = std::min(p[2], 0.0), e = std::max(p[3], 0.0);
    return std::sqrt(1.0 + a * a + b * b + c * c + e * e);
}

Quad grad_numerical_hamiltonian(const Quad& p) {
    const double g = numerical_hamiltonian(p);
    return {std::min(p[0], 0.0) / g, std::max(p[1], 0.0) / g, std::min(p[2], 0.0) / g,
            std::max(p[3], 0.0) / g};
}

Field apply_hjb(const EllipticOperator& op, const Field& u) {
    Field out = op.apply(u);
    const DerivativeStencil stencil = derivative_stencil(u);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += numerical_hamiltonian(stencil.p[k]);
    return out;
}

}  // namespace mfg_uzawa
