#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "semilab/random.hpp"

namespace semilab {

using Vec = std::vector<double>;
using RealFunction = std::function<double(double)>;

// Autonomous vector field x' = b(x). evaluate writes b(x) into dxdt.
struct FlowField {
    std::size_t dimension = 1;
    std::function<void(std::span<const double> x, std::span<double> dxdt)> evaluate;

    Vec operator()(const Vec& x) const;
};

// Fixed-step classical Runge-Kutta. Reuses its workspace, so one stepper
// per thread.
class Rk4Stepper {
public:
    explicit Rk4Stepper(const FlowField& field);

    // Advances x in place by h. Throws IntegrationError if the field or the
    // new state is non-finite (x is left at the last valid state).
    void step(std::span<double> x, double h);

    // Advances x by duration t using steps of at most dt.
    void advance(std::span<double> x, double t, double dt);

    const FlowField& field() const noexcept { return *field_; }

private:
    const FlowField* field_;
    Vec k1_, k2_, k3_, k4_, tmp_;
};

Vec rk4_flow(const FlowField& field, const Vec& x0, double t, double dt);

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
};

enum class EndpointTreatment {
    regular,
    // x = a + s^2 near a and x = b - s^2 near b; removes power-type
    // singularities like (x - a)^(-1/2).
    sqrt_singular,
};

struct QuadOptions {
    EndpointTreatment endpoints = EndpointTreatment::regular;
    int max_intervals = 4000;
};

// Adaptive Gauss-Kronrod (7/15). b may be +infinity, handled by
// x = a + u / (1 - u). Throws ToleranceNotMetError with the best estimate.
QuadratureResult adaptive_quad(const RealFunction& f, double a, double b, double tol,
                               QuadOptions options = {});

// Composite Simpson with an even number of panels.
double simpson(const RealFunction& f, double a, double b, int panels);

double bisect_root(const RealFunction& f, double lo, double hi, double tol);

double sample_exponential(RandomStream& stream, double rate);
std::uint64_t sample_poisson_count(RandomStream& stream, double mean);

// Evaluates fn(i) for i in [0, n) on up to `threads` workers. Callers write
// results into per-index slots and reduce afterwards in index order.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace semilab
