#pragma once

#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace semilab {

// Two families: model/validation problems (bad input, violated assumptions)
// and numerical problems (non-convergence, blow-up). The CLI maps them to
// exit codes 3 and 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class ModelError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "model"; }
};

class NumericalError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numerical"; }
};

class DomainError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "domain"; }
};

class ShapeError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "shape"; }
};

class ValidationError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "validation"; }
};

class DegenerateInputError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "degenerate-input"; }
};

class BracketError : public NumericalError {
public:
    using NumericalError::NumericalError;
    const char* kind() const noexcept override { return "bracket"; }
};

class IntegrationError : public NumericalError {
public:
    IntegrationError(const std::string& what, std::vector<double> last_state, double last_time)
        : NumericalError(what), last_state_(std::move(last_state)), last_time_(last_time) {}
    const char* kind() const noexcept override { return "integration-failure"; }
    const std::vector<double>& last_state() const noexcept { return last_state_; }
    double last_time() const noexcept { return last_time_; }

private:
    std::vector<double> last_state_;
    double last_time_;
};

class ToleranceNotMetError : public NumericalError {
public:
    ToleranceNotMetError(const std::string& what, double best_estimate, double error_estimate)
        : NumericalError(what), best_(best_estimate), err_(error_estimate) {}
    const char* kind() const noexcept override { return "tolerance-not-met"; }
    double best_estimate() const noexcept { return best_; }
    double error_estimate() const noexcept { return err_; }

private:
    double best_;
    double err_;
};

class NonConvergenceError : public NumericalError {
public:
    NonConvergenceError(const std::string& what, std::vector<double> last_iterate, double residual)
        : NumericalError(what), last_(std::move(last_iterate)), residual_(residual) {}
    const char* kind() const noexcept override { return "non-convergence"; }
    const std::vector<double>& last_iterate() const noexcept { return last_; }
    double residual() const noexcept { return residual_; }

private:
    std::vector<double> last_;
    double residual_;
};

class BoundaryPointError : public DomainError {
public:
    using DomainError::DomainError;
    const char* kind() const noexcept override { return "boundary-point"; }
};

class SaturationError : public DomainError {
public:
    using DomainError::DomainError;
    const char* kind() const noexcept override { return "saturation"; }
};

class StepSizeError : public DomainError {
public:
    using DomainError::DomainError;
    const char* kind() const noexcept override { return "step-size"; }
};

class GeometryError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "geometry"; }
};

class PreconditionError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "precondition"; }
};

class CriticalCaseError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "critical-case"; }
};

class AbsorbingBoundaryError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "absorbing-boundary"; }
};

class BoundViolationError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "bound-violation"; }
};

class ModelInconsistencyError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "model-inconsistency"; }
};

class AssumptionViolationError : public ModelError {
public:
    using ModelError::ModelError;
    const char* kind() const noexcept override { return "assumption-violation"; }
};

// Reducible chain: one stationary law per closed class.
class MultipleStationaryError : public ModelError {
public:
    MultipleStationaryError(const std::string& what, std::vector<std::vector<double>> solutions)
        : ModelError(what), solutions_(std::move(solutions)) {}
    const char* kind() const noexcept override { return "multiple-stationary"; }
    const std::vector<std::vector<double>>& solutions() const noexcept { return solutions_; }

private:
    std::vector<std::vector<double>> solutions_;
};

// Complex dominant pair: no limit exists, the oscillation is described instead.
class PeriodicRegimeError : public ModelError {
public:
    PeriodicRegimeError(const std::string& what, double real_part, double imag_part)
        : ModelError(what), re_(real_part), im_(imag_part) {}
    const char* kind() const noexcept override { return "periodic-regime"; }
    double real_part() const noexcept { return re_; }
    double imag_part() const noexcept { return im_; }
    double period() const noexcept { return 2.0 * std::numbers::pi / (im_ < 0 ? -im_ : im_); }

private:
    double re_, im_;
};

class IllConditionedError : public NumericalError {
public:
    IllConditionedError(const std::string& what, double condition)
        : NumericalError(what), cond_(condition) {}
    const char* kind() const noexcept override { return "ill-conditioned"; }
    double condition() const noexcept { return cond_; }

private:
    double cond_;
};

class StallError : public NumericalError {
public:
    using NumericalError::NumericalError;
    const char* kind() const noexcept override { return "stall"; }
};

class SamplerError : public NumericalError {
public:
    using NumericalError::NumericalError;
    const char* kind() const noexcept override { return "sampler"; }
};

}  // namespace semilab
