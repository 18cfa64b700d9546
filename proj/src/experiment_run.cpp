#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mfg_uzawa/experiments.hpp"

namespace mfg_uzawa {

namespace {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    out.close();
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

const std::set<std::string>& artifact_names() {
    static const std::set<std::string> names = {"u.csv", "m.csv", "trace.csv", "u.pgm", "m.pgm", "report.json"};
    return names;
}

// Clears earlier artifacts so the manifest describes the whole directory.
void prepare_output_dir(const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string file = entry.path().filename().string();
        if (!artifact_names().contains(file))
            throw std::runtime_error("output directory '" + dir.string() + "' contains unrelated entry '" + file +
                                     "'");
    }
    for (const auto& file : artifact_names()) fs::remove(dir / file);
}

nlohmann::ordered_json row_json(const TraceRow& row) {
    nlohmann::ordered_json j;
    j["iter"] = row.iter;
    j["dm"] = row.dm;
    j["comp_res"] = row.comp_res;
    j["feas_res"] = row.feas_res;
    j["fp_res"] = row.fp_res ? nlohmann::ordered_json(*row.fp_res) : nlohmann::ordered_json(nullptr);
    j["delta_n"] = row.delta_n;
    j["density_feas"] = row.density_feas;
    if (row.fp_mass_defect) j["fp_mass_defect"] = *row.fp_mass_defect;
    return j;
}

nlohmann::ordered_json diagnostics_json(const SolutionDiagnostics& d) {
    nlohmann::ordered_json j;
    j["density_feasibility"] = d.density_feasibility;
    j["density_complementarity"] = d.density_complementarity;
    j["density_min"] = d.density_min;
    j["multiplier_violation"] = d.multiplier_violation;
    if (d.multiplier_residual) j["multiplier_residual"] = *d.multiplier_residual;
    if (d.fp_residual) j["fp_residual"] = *d.fp_residual;
    if (d.mass_defect) j["mass_defect"] = *d.mass_defect;
    return j;
}

nlohmann::ordered_json config_json(const ExperimentConfig& c) {
    // The emitted key = value form, with numbers kept numeric.
    nlohmann::ordered_json j;
    std::istringstream lines(emit_config(c));
    std::string line;
    while (std::getline(lines, line)) {
        const auto eq = line.find(" = ");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
        const char* first = value.data();
        const char* last = first + value.size();
        std::uint64_t whole = 0;
        double number = 0.0;
        if (key == "name" || value.empty()) {
            j[key] = value;
        } else if (auto r = std::from_chars(first, last, whole); r.ec == std::errc() && r.ptr == last) {
            j[key] = whole;
        } else if (auto r = std::from_chars(first, last, number); r.ec == std::errc() && r.ptr == last) {
            j[key] = number;
        } else {
            j[key] = value;
        }
    }
    j["name"] = c.resolved_name();
    j["f0"] = c.resolved_f0();
    if (c.xi) j["xi"] = {(*c.xi)[0], (*c.xi)[1]};
    return j;
}

}  // namespace

std::string field_csv(const Field& field) {
    const TorusGrid& g = field.grid();
    std::string out = "i,j,x,y,value\n";
    for (int i = 0; i < g.d(); ++i)
        for (int j = 0; j < g.d(); ++j) {
            out += std::to_string(i + 1) + ',' + std::to_string(j + 1) + ',' + format_double(g.x(i)) + ',' +
                   format_double(g.y(j)) + ',' + format_double(field(i, j)) + '\n';
        }
    return out;
}

std::string trace_csv(const IterationTrace& trace) {
    std::string out = "iter,dm,comp_res,feas_res,fp_res,delta_n\n";
    for (const TraceRow& row : trace.rows) {
        out += std::to_string(row.iter) + ',' + format_double(row.dm) + ',' + format_double(row.comp_res) + ',' +
               format_double(row.feas_res) + ',' + (row.fp_res ? format_double(*row.fp_res) : std::string()) + ',' +
               format_double(row.delta_n) + '\n';
    }
    return out;
}

std::string heatmap_pgm(const Field& field) {
    const int d = field.grid().d();
    const double lo = field.min(), hi = field.max();
    std::string out = "P2\n" + std::to_string(d) + ' ' + std::to_string(d) + "\n255\n";
    for (int r = 0; r < d; ++r) {
        const int j = d - 1 - r;
        for (int i = 0; i < d; ++i) {
            int pixel = 127;
            if (hi > lo) pixel = static_cast<int>(std::lround(255.0 * (field(i, j) - lo) / (hi - lo)));
            out += std::to_string(std::clamp(pixel, 0, 255));
            out += i + 1 < d ? ' ' : '\n';
        }
    }
    return out;
}

void write_field_csv(const Field& field, const fs::path& path) { write_text(path, field_csv(field)); }
void write_trace_csv(const IterationTrace& trace, const fs::path& path) { write_text(path, trace_csv(trace)); }
void write_heatmap_pgm(const Field& field, const fs::path& path) { write_text(path, heatmap_pgm(field)); }

std::string_view to_string(RunStatus status) {
    switch (status) {
        case RunStatus::kConverged: return "converged";
        case RunStatus::kMaxIterations: return "max_iterations";
        default: return "error";
    }
}

std::string RunReport::to_json() const {
    nlohmann::ordered_json j;
    j["name"] = config.resolved_name();
    j["kind"] = std::string(to_string(config.resolved_kind()));
    j["status"] = std::string(to_string(status));
    j["converged"] = status == RunStatus::kConverged;
    j["iterations"] = iterations;
    j["wall_seconds"] = wall_seconds;
    j["config"] = config_json(config);
    if (config.resolved_kind() == MfgKind::kImpulse) {
        const GridOffset off = config.jump_offset();
        j["jump_offset"] = {{"requested", {(*config.xi)[0], (*config.xi)[1]}},
                            {"units", config.xi_units == XiUnits::kTorus ? "torus" : "grid"},
                            {"offset", {off.di, off.dj}}};
    }
    j["final"] = last_row ? row_json(*last_row) : nlohmann::ordered_json(nullptr);
    j["invariants"] = diagnostics ? diagnostics_json(*diagnostics) : nlohmann::ordered_json(nullptr);
    j["warnings"] = warnings;
    j["notes"] = notes;
    if (!error.empty()) j["error"] = error;
    j["output_dir"] = output_dir.string();
    j["files"] = files;
    return j.dump(2) + '\n';
}

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    config.validate();
    RunReport report;
    report.config = config;
    report.output_dir = options.output_dir ? *options.output_dir
                        : config.output_dir.empty() ? fs::path("out") / config.resolved_name()
                                                    : fs::path(config.output_dir);
    if (config.resolved_kind() == MfgKind::kImpulse) {
        const GridOffset off = config.jump_offset();
        std::ostringstream note;
        note << "xi = (" << (*config.xi)[0] << ", " << (*config.xi)[1] << ") in "
             << (config.xi_units == XiUnits::kTorus ? "torus" : "grid") << " units rounds to the grid offset ("
             << off.di << ", " << off.dj << ")";
        report.notes.push_back(note.str());
    }
    prepare_output_dir(report.output_dir);

    auto emit = [&](const std::string& file, const std::string& text) {
        write_text(report.output_dir / file, text);
        report.files.push_back(file);
    };
    auto finish = [&] {
        report.files.push_back("report.json");
        write_text(report.output_dir / "report.json", report.to_json());
    };

    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    UzawaConfig uzawa = config.uzawa();
    uzawa.observer = options.observer;
    const MfgSolver solver(config.problem(), uzawa);
    std::optional<MfgSolution> outcome;
    try {
        outcome = solver.run();
    } catch (const MfgRunAborted& err) {
        report.wall_seconds = elapsed();
        report.status = RunStatus::kError;
        report.error = err.what();
        report.iterations = static_cast<int>(err.trace().rows.size());
        report.warnings = err.trace().warnings;
        if (!err.trace().rows.empty()) report.last_row = err.trace().rows.back();
        emit("trace.csv", trace_csv(err.trace()));
        finish();
        throw ExperimentAborted(err.what(), std::move(report));
    }
    const MfgSolution& solution = *outcome;
    report.wall_seconds = elapsed();
    report.status = solution.converged ? RunStatus::kConverged : RunStatus::kMaxIterations;
    report.iterations = solution.iterations;
    report.warnings = solution.trace.warnings;
    if (!solution.trace.rows.empty()) report.last_row = solution.trace.rows.back();
    report.diagnostics = solver.diagnose(solution.u, solution.m);

    emit("u.csv", field_csv(solution.u));
    emit("m.csv", field_csv(solution.m));
    emit("trace.csv", trace_csv(solution.trace));
    if (config.emit_heatmaps) {
        emit("u.pgm", heatmap_pgm(solution.u));
        emit("m.pgm", heatmap_pgm(solution.m));
    }
    finish();
    return report;
}

}  // namespace mfg_uzawa
