#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace mfg_uzawa {

/// Base class of every numerical failure raised by the solvers.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative method hit its iteration cap before meeting its tolerance.
class MaxIterationsExceeded : public SolverError {
public:
    MaxIterationsExceeded(const std::string& what, int iterations, double residual)
        : SolverError(describe(what, iterations, residual)), iterations_(iterations), residual_(residual) {}

    int iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    static std::string describe(const std::string& what, int iterations, double residual) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", residual);
        return what + " (iterations=" + std::to_string(iterations) + ", residual=" + buf + ")";
    }

    int iterations_;
    double residual_;
};

/// BiCGStab hit rho ~ 0 (or omega ~ 0) twice, once after a shadow-residual restart.
class BreakdownDetected : public SolverError {
public:
    using SolverError::SolverError;
};

/// Inner projected-gradient iteration is expanding: the step is too large.
class NonContraction : public SolverError {
public:
    using SolverError::SolverError;
};

/// The density complementarity iteration blew up its natural residual.
class NonMonotoneCost : public SolverError {
public:
    using SolverError::SolverError;
};

class LineSearchStalled : public SolverError {
public:
    using SolverError::SolverError;
};

/// Two fields (or an operator and a field) live on different grids.
class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace mfg_uzawa
