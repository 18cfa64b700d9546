#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mfg_uzawa/errors.hpp"
#include "mfg_uzawa/mfg_solvers.hpp"

namespace mfg_uzawa {

/// Malformed configuration text.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, int line, std::string key = {});
    int line() const noexcept { return line_; }
    const std::string& key() const noexcept { return key_; }

private:
    int line_;
    std::string key_;
};

/// Well-formed configuration violating an invariant.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Scalar function of (x, y) built from numbers, pi, x, y, + - * /,
/// parentheses and the functions sin and cos.
class Expression {
public:
    /// Throws ParseError with the column as line 0.
    static Expression parse(std::string_view text);

    double operator()(double x, double y) const;
    const std::string& text() const noexcept { return text_; }

    struct Node;

private:
    Expression(std::string text, std::shared_ptr<const Node> root);

    std::string text_;
    std::shared_ptr<const Node> root_;
};

enum class XiUnits {
    /// Offset measured in grid steps: round(xi).
    kGrid,
    /// Offset measured on the unit torus: round(d xi).
    kTorus,
};

struct ExperimentConfig {
    std::string name;
    std::optional<MfgKind> kind;
    int d = 40;
    double nu = 0.02;
    double lambda = 1.0;
    /// Outer step; the constant delta_n for the continuous kind.
    double delta = 0.5;
    double rho = 1.0;
    /// Preset name ("stop_imp", "continuous") or an inline expression.
    /// Defaults to the preset matching the kind.
    std::optional<std::string> f0;
    double cost_identity = 1.0;
    double cost_smoothing = 1.0;
    std::optional<double> k0;
    std::optional<std::array<double, 2>> xi;
    XiUnits xi_units = XiUnits::kGrid;
    int max_outer = 200;
    double tol_outer = 1e-8;
    double density_tol = 0.0;
    double projection_tol = 0.0;
    double newton_tol = 0.0;
    int density_max_iter = 100000;
    int projection_max_iter = 200000;
    int newton_max_iter = 50;
    DensityMethod density_method = DensityMethod::kProjectedGradient;
    EllipticMethod elliptic_solver = EllipticMethod::kFastDiagonalization;
    StencilScaling stencil_scaling = StencilScaling::kH2;
    std::string output_dir;
    bool emit_heatmaps = true;
    std::uint64_t seed = 0x5eed;

    /// Throws ValidationError naming the first violated invariant.
    void validate() const;

    MfgKind resolved_kind() const;
    std::string resolved_name() const;
    std::string resolved_f0() const;
    /// Jump offset in grid steps after rounding xi.
    GridOffset jump_offset() const;

    Field f0_field(const TorusGrid& grid) const;
    MfgProblem problem() const;
    UzawaConfig uzawa() const;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Parses flat "key = value" text; '#' starts a comment. Unknown or repeated
/// keys raise ParseError. The result is validated.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& config);

struct Preset {
    std::string_view name;
    std::string_view description;
    std::string_view text;
};

const std::vector<Preset>& presets();
/// Looks up a preset by name, with or without the ".cfg" suffix.
const Preset* find_preset(std::string_view name);

// ---------------------------------------------------------------------------
// Output formats.

/// Header "i,j,x,y,value", 1-based indices, i outer, 17 significant digits.
void write_field_csv(const Field& field, const std::filesystem::path& path);
/// Header "iter,dm,comp_res,feas_res,fp_res,delta_n"; fp_res empty when absent.
void write_trace_csv(const IterationTrace& trace, const std::filesystem::path& path);
/// ASCII PGM (P2), x to the right and y upward, linear min-max scaling to
/// 0..255; a constant field maps to 127.
void write_heatmap_pgm(const Field& field, const std::filesystem::path& path);

std::string field_csv(const Field& field);
std::string trace_csv(const IterationTrace& trace);
std::string heatmap_pgm(const Field& field);

enum class RunStatus { kConverged, kMaxIterations, kError };
std::string_view to_string(RunStatus status);

struct RunReport {
    ExperimentConfig config;
    RunStatus status = RunStatus::kError;
    int iterations = 0;
    std::optional<TraceRow> last_row;
    std::optional<SolutionDiagnostics> diagnostics;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
    /// Informational messages, such as the rounding of xi.
    std::vector<std::string> notes;
    std::string error;
    std::filesystem::path output_dir;
    /// File names written into output_dir, report.json included.
    std::vector<std::string> files;

    /// JSON document written as report.json.
    std::string to_json() const;
};

/// A run that failed inside the solver; partial outputs are on disk.
class ExperimentAborted : public SolverError {
public:
    ExperimentAborted(const std::string& what, RunReport report)
        : SolverError(what), report_(std::move(report)) {}
    const RunReport& report() const noexcept { return report_; }

private:
    RunReport report_;
};

struct RunOptions {
    /// Overrides the config's output directory.
    std::optional<std::filesystem::path> output_dir;
    std::function<void(const TraceRow&)> observer;
};

/// Builds the problem, runs the solver and writes u.csv, m.csv, trace.csv,
/// optional u.pgm and m.pgm, and report.json. Throws ExperimentAborted on
/// solver failure after writing trace.csv and report.json.
RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace mfg_uzawa
