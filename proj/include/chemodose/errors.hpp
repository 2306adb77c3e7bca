#pragma once

#include <stdexcept>
#include <string>

namespace chemodose {

/// Inputs live on incompatible grids or time grids.
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A linear solve hit its iteration cap before reaching tolerance.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual, int step = -1)
        : std::runtime_error(what), residual_(residual), step_(step) {}

    double residual() const noexcept { return residual_; }
    /// Time step at which the failure happened, or -1 when not known.
    int step() const noexcept { return step_; }

private:
    double residual_;
    int step_;
};

/// The time stepping produced non-finite values.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int step = -1)
        : std::runtime_error(what), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

}  // namespace chemodose
