#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "mfg_uzawa/experiments.hpp"

namespace fs = std::filesystem;
using namespace mfg_uzawa;

namespace {

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitCapReached = 2;

std::shared_ptr<spdlog::logger> make_logger() {
    auto logger = spdlog::stderr_logger_mt("mfg-uzawa");
    logger->set_pattern("[%H:%M:%S.%e] [%l] %v");
    const char* env = std::getenv("MFG_UZAWA_LOG");
    const std::string level = env ? env : "info";
    if (level == "off") {
        logger->set_level(spdlog::level::off);
    } else if (level == "debug") {
        logger->set_level(spdlog::level::debug);
    } else {
        logger->set_level(spdlog::level::info);
        if (level != "info") logger->warn("MFG_UZAWA_LOG='{}' not recognized (off, info, debug); using info", level);
    }
    return logger;
}

std::mutex stdout_mutex;

void print_line(const std::string& line) {
    const std::lock_guard lock(stdout_mutex);
    std::cout << line << '\n' << std::flush;
}

struct Job {
    std::string source;
    ExperimentConfig config;
    fs::path output_dir;
};

ExperimentConfig resolve_config(const std::string& source) {
    if (fs::exists(source)) return load_config(source);
    if (const Preset* preset = find_preset(fs::path(source).filename().string()))
        if (fs::path(source).parent_path().empty()) return parse_config(preset->text);
    throw std::runtime_error("config '" + source + "' is neither a file nor a preset name");
}

int run_job(const Job& job, spdlog::logger& log) {
    const std::string name = job.config.resolved_name();
    const int stride = std::max(1, job.config.max_outer / 10);
    RunOptions options;
    options.output_dir = job.output_dir;
    options.observer = [&](const TraceRow& row) {
        const auto level = row.iter % stride == 0 ? spdlog::level::info : spdlog::level::debug;
        if (!log.should_log(level)) return;
        if (row.fp_res)
            log.log(level, "{}: iter {} dm={:.3e} comp={:.3e} fp={:.3e} mass={:.3e}", name, row.iter, row.dm,
                    row.comp_res, *row.fp_res, row.fp_mass_defect.value_or(0.0));
        else
            log.log(level, "{}: iter {} dm={:.3e} comp={:.3e} feas={:.3e}", name, row.iter, row.dm, row.comp_res,
                    row.feas_res);
    };
    log.info("{}: {} run, d={}, output {}", name, to_string(job.config.resolved_kind()), job.config.d,
             job.output_dir.string());
    if (job.config.resolved_kind() == MfgKind::kImpulse) {
        const GridOffset off = job.config.jump_offset();
        log.info("{}: xi = ({}, {}) in {} units rounds to the grid offset ({}, {})", name, (*job.config.xi)[0],
                 (*job.config.xi)[1], job.config.xi_units == XiUnits::kTorus ? "torus" : "grid", off.di, off.dj);
    }
    try {
        const RunReport report = run_experiment(job.config, options);
        for (const auto& warning : report.warnings) log.warn("{}: {}", name, warning);
        const bool converged = report.status == RunStatus::kConverged;
        const std::string line = name + ": " + std::string(to_string(report.status)) + " after " +
                                 std::to_string(report.iterations) + " iterations";
        if (converged) log.info("{} ({:.1f} s)", line, report.wall_seconds);
        else log.warn("{} ({:.1f} s)", line, report.wall_seconds);
        print_line(line + " -> " + report.output_dir.string());
        return converged ? kExitConverged : kExitCapReached;
    } catch (const ExperimentAborted& err) {
        log.error("{}: solver failed: {} (partial outputs in {})", name, err.what(), job.output_dir.string());
        print_line(name + ": error -> " + job.output_dir.string());
    } catch (const std::exception& err) {
        log.error("{}: {}", name, err.what());
        print_line(name + ": error");
    }
    return kExitError;
}

int combine(const std::vector<int>& codes) {
    if (std::find(codes.begin(), codes.end(), kExitError) != codes.end()) return kExitError;
    if (std::find(codes.begin(), codes.end(), kExitCapReached) != codes.end()) return kExitCapReached;
    return kExitConverged;
}

int command_run(const std::vector<std::string>& sources, const std::optional<std::string>& out, int jobs,
                spdlog::logger& log) {
    std::vector<Job> queue;
    for (const auto& source : sources) {
        try {
            queue.push_back({source, resolve_config(source), {}});
        } catch (const ParseError& err) {
            log.error("{}: parse error: {}", source, err.what());
            return kExitError;
        } catch (const std::exception& err) {
            log.error("{}: {}", source, err.what());
            return kExitError;
        }
    }
    std::map<fs::path, std::string> claimed;
    for (Job& job : queue) {
        const std::string name = job.config.resolved_name();
        if (out) job.output_dir = queue.size() == 1 ? fs::path(*out) : fs::path(*out) / name;
        else if (!job.config.output_dir.empty()) job.output_dir = job.config.output_dir;
        else job.output_dir = fs::path("out") / name;
        const fs::path key = fs::weakly_canonical(job.output_dir);
        if (const auto [it, fresh] = claimed.emplace(key, job.source); !fresh) {
            log.error("{} and {} would both write to {}", it->second, job.source, job.output_dir.string());
            return kExitError;
        }
    }

    std::vector<int> codes(queue.size(), kExitError);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < queue.size(); k = next++) codes[k] = run_job(queue[k], log);
    };
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), queue.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return combine(codes);
}

int command_presets(const std::optional<std::string>& show) {
    if (show) {
        const Preset* preset = find_preset(*show);
        if (!preset) {
            std::cerr << "unknown preset '" << *show << "'\n";
            return kExitError;
        }
        std::cout << preset->text;
        return kExitConverged;
    }
    for (const Preset& p : presets()) std::cout << p.name << "  " << p.description << '\n';
    return kExitConverged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uzawa-type solvers for stationary mean field games on the torus"};
    app.require_subcommand(1);

    std::vector<std::string> sources;
    std::optional<std::string> out;
    int jobs = 1;
    auto* run = app.add_subcommand("run", "Run one or more experiment configs");
    run->add_option("--config", sources, "Config file or preset name (repeatable)")->required();
    run->add_option("--out", out, "Output directory (one subdirectory per config when several are given)");
    run->add_option("--jobs", jobs, "Number of configs run concurrently")->check(CLI::PositiveNumber);

    std::optional<std::string> show;
    auto* list = app.add_subcommand("presets", "List the shipped presets");
    list->add_option("--show", show, "Print the config text of one preset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? kExitConverged : kExitError;
    }

    try {
        if (*list) return command_presets(show);
        auto log = make_logger();
        return command_run(sources, out, jobs, *log);
    } catch (const std::exception& err) {
        std::cerr << "mfg-uzawa: " << err.what() << '\n';
        return kExitError;
    }
}
