#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <variant>

#include "mfg_uzawa/experiments.hpp"

namespace mfg_uzawa {

namespace {

bool is_f0_preset(std::string_view name) { return name == "stop_imp" || name == "continuous"; }

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string_view density_method_name(DensityMethod m) {
    return m == DensityMethod::kSemismoothNewton ? "semismooth_newton" : "projected_gradient";
}

std::string_view elliptic_solver_name(EllipticMethod m) {
    return m == EllipticMethod::kConjugateGradient ? "cg" : "fast_diagonalization";
}

std::string_view scaling_name(StencilScaling s) { return s == StencilScaling::kH ? "h" : "h2"; }

std::string_view xi_units_name(XiUnits u) { return u == XiUnits::kTorus ? "torus" : "grid"; }

// Per-key conversion from the raw value text; throws std::invalid_argument
// with a description of the expected form.
class ValueReader {
public:
    explicit ValueReader(std::string_view value) : value_(value) {}

    double real() const {
        const std::string_view v = value_;
        double out = 0.0;
        const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec == std::errc() && end == v.data() + v.size()) return out;
        return constant_expression(v);
    }

    int integer() const {
        int out = 0;
        const auto [end, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), out);
        if (ec != std::errc() || end != value_.data() + value_.size())
            throw std::invalid_argument("expected an integer, got '" + std::string(value_) + "'");
        return out;
    }

    std::uint64_t unsigned_integer() const {
        std::string_view v = value_;
        int base = 10;
        if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
            v.remove_prefix(2);
            base = 16;
        }
        std::uint64_t out = 0;
        const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out, base);
        if (ec != std::errc() || end != v.data() + v.size())
            throw std::invalid_argument("expected a non-negative integer, got '" + std::string(value_) + "'");
        return out;
    }

    bool boolean() const {
        std::string lower(value_);
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        if (lower == "true" || lower == "yes" || lower == "1" || lower == "on") return true;
        if (lower == "false" || lower == "no" || lower == "0" || lower == "off") return false;
        throw std::invalid_argument("expected true or false, got '" + std::string(value_) + "'");
    }

    std::array<double, 2> pair() const {
        const auto comma = value_.find(',');
        if (comma == std::string_view::npos || value_.find(',', comma + 1) != std::string_view::npos)
            throw std::invalid_argument("expected two comma-separated numbers");
        return {ValueReader(trim(value_.substr(0, comma))).real(), ValueReader(trim(value_.substr(comma + 1))).real()};
    }

    template <class Enum>
    Enum choice(std::initializer_list<std::pair<std::string_view, Enum>> options) const {
        std::string allowed;
        for (const auto& [name, value] : options) {
            if (value_ == name) return value;
            allowed += (allowed.empty() ? "" : ", ") + std::string(name);
        }
        throw std::invalid_argument("expected one of " + allowed + ", got '" + std::string(value_) + "'");
    }

private:
    static double constant_expression(std::string_view v) {
        Expression e = [&] {
            try {
                return Expression::parse(v);
            } catch (const ParseError&) {
                throw std::invalid_argument("expected a number, got '" + std::string(v) + "'");
            }
        }();
        const double a = e(0.0, 0.0), b = e(0.37, 0.71);
        if (a != b) throw std::invalid_argument("expected a constant, got '" + std::string(v) + "'");
        return a;
    }

    std::string_view value_;
};

using Setter = void (*)(ExperimentConfig&, const ValueReader&);

const std::map<std::string_view, Setter>& setters() {
    static const std::map<std::string_view, Setter> table = {
        {"name", [](ExperimentConfig&, const ValueReader&) {}},
        {"kind", [](ExperimentConfig&, const ValueReader&) {}},
        {"f0", [](ExperimentConfig&, const ValueReader&) {}},
        {"output_dir", [](ExperimentConfig&, const ValueReader&) {}},
        {"d", [](ExperimentConfig& c, const ValueReader& v) { c.d = v.integer(); }},
        {"nu", [](ExperimentConfig& c, const ValueReader& v) { c.nu = v.real(); }},
        {"lambda", [](ExperimentConfig& c, const ValueReader& v) { c.lambda = v.real(); }},
        {"delta", [](ExperimentConfig& c, const ValueReader& v) { c.delta = v.real(); }},
        {"rho", [](ExperimentConfig& c, const ValueReader& v) { c.rho = v.real(); }},
        {"cost_identity", [](ExperimentConfig& c, const ValueReader& v) { c.cost_identity = v.real(); }},
        {"cost_smoothing", [](ExperimentConfig& c, const ValueReader& v) { c.cost_smoothing = v.real(); }},
        {"k0", [](ExperimentConfig& c, const ValueReader& v) { c.k0 = v.real(); }},
        {"xi", [](ExperimentConfig& c, const ValueReader& v) { c.xi = v.pair(); }},
        {"xi_units",
         [](ExperimentConfig& c, const ValueReader& v) {
             c.xi_units = v.choice<XiUnits>({{"grid", XiUnits::kGrid}, {"torus", XiUnits::kTorus}});
         }},
        {"max_outer", [](ExperimentConfig& c, const ValueReader& v) { c.max_outer = v.integer(); }},
        {"tol_outer", [](ExperimentConfig& c, const ValueReader& v) { c.tol_outer = v.real(); }},
        {"density_tol", [](ExperimentConfig& c, const ValueReader& v) { c.density_tol = v.real(); }},
        {"projection_tol", [](ExperimentConfig& c, const ValueReader& v) { c.projection_tol = v.real(); }},
        {"newton_tol", [](ExperimentConfig& c, const ValueReader& v) { c.newton_tol = v.real(); }},
        {"density_max_iter", [](ExperimentConfig& c, const ValueReader& v) { c.density_max_iter = v.integer(); }},
        {"projection_max_iter",
         [](ExperimentConfig& c, const ValueReader& v) { c.projection_max_iter = v.integer(); }},
        {"newton_max_iter", [](ExperimentConfig& c, const ValueReader& v) { c.newton_max_iter = v.integer(); }},
        {"density_method",
         [](ExperimentConfig& c, const ValueReader& v) {
             c.density_method = v.choice<DensityMethod>({{"projected_gradient", DensityMethod::kProjectedGradient},
                                                         {"semismooth_newton", DensityMethod::kSemismoothNewton}});
         }},
        {"elliptic_solver",
         [](ExperimentConfig& c, const ValueReader& v) {
             c.elliptic_solver = v.choice<EllipticMethod>(
                 {{"fast_diagonalization", EllipticMethod::kFastDiagonalization},
                  {"cg", EllipticMethod::kConjugateGradient}});
         }},
        {"stencil_scaling",
         [](ExperimentConfig& c, const ValueReader& v) {
             c.stencil_scaling = v.choice<StencilScaling>({{"h2", StencilScaling::kH2}, {"h", StencilScaling::kH}});
         }},
        {"emit_heatmaps", [](ExperimentConfig& c, const ValueReader& v) { c.emit_heatmaps = v.boolean(); }},
        {"seed", [](ExperimentConfig& c, const ValueReader& v) { c.seed = v.unsigned_integer(); }},
    };
    return table;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

void require_positive(double v, const char* key) {
    require(std::isfinite(v) && v > 0.0, std::string(key) + " must be a finite number > 0");
}

void require_nonnegative(double v, const char* key) {
    require(std::isfinite(v) && v >= 0.0, std::string(key) + " must be a finite number >= 0");
}

int round_component(double value, double scale) { return static_cast<int>(std::lround(value * scale)); }

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig config;
    std::set<std::string, std::less<>> seen;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find('\n', start), text.size());
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'", line_no);
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        auto fail = [&](const std::string& what) -> ParseError {
            return ParseError("line " + std::to_string(line_no) + ", key '" + key + "': " + what, line_no, key);
        };
        const auto setter = setters().find(key);
        if (setter == setters().end()) throw fail("unknown key");
        if (!seen.insert(key).second) throw fail("repeated key");

        if (key == "kind") {
            if (!value.empty()) {
                try {
                    config.kind = parse_kind(value);
                } catch (const std::invalid_argument&) {
                    throw ValidationError("kind must be stopping, impulse or continuous, got '" +
                                          std::string(value) + "'");
                }
            }
            continue;
        }
        if (key == "name" || key == "output_dir") {
            (key == "name" ? config.name : config.output_dir) = std::string(value);
            continue;
        }
        if (value.empty()) throw fail("missing value");
        if (key == "f0") {
            if (!is_f0_preset(value)) {
                try {
                    Expression::parse(value);
                } catch (const ParseError& err) {
                    throw fail(err.what());
                }
            }
            config.f0 = std::string(value);
            continue;
        }
        try {
            setter->second(config, ValueReader(value));
        } catch (const std::invalid_argument& err) {
            throw fail(err.what());
        }
    }
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string emit_config(const ExperimentConfig& c) {
    std::ostringstream out;
    auto line = [&](std::string_view key, const std::string& value) { out << key << " = " << value << '\n'; };
    if (!c.name.empty()) line("name", c.name);
    line("kind", c.kind ? std::string(to_string(*c.kind)) : std::string());
    line("d", std::to_string(c.d));
    line("nu", format_double(c.nu));
    line("lambda", format_double(c.lambda));
    line("delta", format_double(c.delta));
    line("rho", format_double(c.rho));
    if (c.f0) line("f0", *c.f0);
    line("cost_identity", format_double(c.cost_identity));
    line("cost_smoothing", format_double(c.cost_smoothing));
    if (c.k0) line("k0", format_double(*c.k0));
    if (c.xi) line("xi", format_double((*c.xi)[0]) + ", " + format_double((*c.xi)[1]));
    line("xi_units", std::string(xi_units_name(c.xi_units)));
    line("max_outer", std::to_string(c.max_outer));
    line("tol_outer", format_double(c.tol_outer));
    line("density_tol", format_double(c.density_tol));
    line("projection_tol", format_double(c.projection_tol));
    line("newton_tol", format_double(c.newton_tol));
    line("density_max_iter", std::to_string(c.density_max_iter));
    line("projection_max_iter", std::to_string(c.projection_max_iter));
    line("newton_max_iter", std::to_string(c.newton_max_iter));
    line("density_method", std::string(density_method_name(c.density_method)));
    line("elliptic_solver", std::string(elliptic_solver_name(c.elliptic_solver)));
    line("stencil_scaling", std::string(scaling_name(c.stencil_scaling)));
    if (!c.output_dir.empty()) line("output_dir", c.output_dir);
    line("emit_heatmaps", c.emit_heatmaps ? "true" : "false");
    line("seed", std::to_string(c.seed));
    return out.str();
}

void ExperimentConfig::validate() const {
    require(kind.has_value(), "kind is required (stopping, impulse or continuous)");
    require(d >= 3, "d must be >= 3");
    require_positive(nu, "nu");
    require_positive(lambda, "lambda");
    require_positive(delta, "delta");
    require_nonnegative(rho, "rho");
    require_positive(cost_identity, "cost_identity");
    require_nonnegative(cost_smoothing, "cost_smoothing");
    require(max_outer >= 0, "max_outer must be >= 0");
    require_positive(tol_outer, "tol_outer");
    require_nonnegative(density_tol, "density_tol");
    require_nonnegative(projection_tol, "projection_tol");
    require_nonnegative(newton_tol, "newton_tol");
    require(density_max_iter >= 1, "density_max_iter must be >= 1");
    require(projection_max_iter >= 1, "projection_max_iter must be >= 1");
    require(newton_max_iter >= 1, "newton_max_iter must be >= 1");
    require(name.find_first_of("/\\\n") == std::string::npos, "name must not contain path separators");
    if (f0 && !is_f0_preset(*f0)) {
        try {
            Expression::parse(*f0);
        } catch (const ParseError& err) {
            throw ValidationError(std::string("f0: ") + err.what());
        }
    }
    if (*kind == MfgKind::kImpulse) {
        require(k0.has_value(), "k0 is required for kind impulse");
        require_positive(*k0, "k0");
        require(xi.has_value(), "xi is required for kind impulse");
        require(std::isfinite((*xi)[0]) && std::isfinite((*xi)[1]), "xi must be finite");
        const GridOffset off = jump_offset();
        require(off.di % d != 0 || off.dj % d != 0, "xi rounds to the zero offset on this grid");
    } else {
        require(!k0.has_value(), "k0 is only valid for kind impulse");
        require(!xi.has_value(), "xi is only valid for kind impulse");
    }
}

MfgKind ExperimentConfig::resolved_kind() const {
    if (!kind) throw ValidationError("kind is required (stopping, impulse or continuous)");
    return *kind;
}

std::string ExperimentConfig::resolved_name() const {
    return name.empty() ? std::string(to_string(resolved_kind())) : name;
}

std::string ExperimentConfig::resolved_f0() const {
    if (f0) return *f0;
    return resolved_kind() == MfgKind::kContinuous ? "continuous" : "stop_imp";
}

GridOffset ExperimentConfig::jump_offset() const {
    if (!xi) throw ValidationError("xi is required for kind impulse");
    const double scale = xi_units == XiUnits::kTorus ? static_cast<double>(d) : 1.0;
    return GridOffset{round_component((*xi)[0], scale), round_component((*xi)[1], scale)};
}

Field ExperimentConfig::f0_field(const TorusGrid& grid) const {
    const std::string source = resolved_f0();
    if (is_f0_preset(source)) return f0_preset(source, grid);
    const Expression expr = Expression::parse(source);
    return Field::from_function(grid, [&](double x, double y) { return expr(x, y); });
}

MfgProblem ExperimentConfig::problem() const {
    validate();
    const TorusGrid grid(d);
    EllipticOperator op(grid, nu, lambda, stencil_scaling);
    RunningCost cost(f0_field(grid), cost_identity, cost_smoothing, stencil_scaling);
    Field rho_field(grid, rho);
    switch (*kind) {
        case MfgKind::kStopping: return MfgProblem::stopping(std::move(op), std::move(cost), std::move(rho_field));
        case MfgKind::kImpulse:
            return MfgProblem::impulse(std::move(op), std::move(cost), std::move(rho_field),
                                       JumpOperator(*k0, {jump_offset()}));
        default: return MfgProblem::continuous(std::move(op), std::move(cost), std::move(rho_field));
    }
}

UzawaConfig ExperimentConfig::uzawa() const {
    UzawaConfig cfg;
    cfg.delta = delta;
    cfg.max_outer = max_outer;
    cfg.tol_outer = tol_outer;
    cfg.density_tol = density_tol;
    cfg.projection_tol = projection_tol;
    cfg.newton_tol = newton_tol;
    cfg.density_max_iter = density_max_iter;
    cfg.projection_max_iter = projection_max_iter;
    cfg.newton_max_iter = newton_max_iter;
    cfg.density_method = density_method;
    cfg.elliptic_method = elliptic_solver;
    cfg.krylov.seed = seed;
    return cfg;
}

// ---------------------------------------------------------------------------

namespace {

std::string_view first_comment(std::string_view text) {
    const auto hash = text.find('#');
    if (hash == std::string_view::npos) return {};
    const auto end = text.find('\n', hash);
    return trim(text.substr(hash + 1, end == std::string_view::npos ? std::string_view::npos : end - hash - 1));
}

}  // namespace

namespace detail {
// Defined in the generated preset table.
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_presets();
}  // namespace detail

const std::vector<Preset>& presets() {
    static const std::vector<Preset> table = [] {
        std::vector<Preset> out;
        for (const auto& [name, text] : detail::embedded_presets()) out.push_back({name, first_comment(text), text});
        return out;
    }();
    return table;
}

const Preset* find_preset(std::string_view name) {
    if (name.size() > 4 && name.substr(name.size() - 4) == ".cfg") name.remove_suffix(4);
    for (const Preset& p : presets())
        if (p.name == name) return &p;
    return nullptr;
}

}  // namespace mfg_uzawa
