#pragma once

#include <string>
#include <vector>

#include "semilab/density.hpp"
#include "semilab/numerics.hpp"
#include "semilab/random.hpp"

namespace semilab {

// dx = b(x) dt + sigma x dw on [0, inf).
struct GrowthModel {
    std::string name;
    RealFunction b;
    double sigma = 1.0;
    double b_prime_0 = 0.0;
    double b_prime_inf = 0.0;  // lim b(x)/x, may be -inf
    double K = 1e300;          // b(x) <= K x
    std::vector<double> breaks;  // where b may jump or kink

    double sigma2() const noexcept { return sigma * sigma; }
};

GrowthModel logistic_model(double sigma2);
GrowthModel malthus_model(double sigma2, double rate = 1.0);
// Piecewise polynomial drift: coefficient rows c0 + c1 x + ... per piece
// [breaks[i], breaks[i+1]); the last piece extends to infinity.
GrowthModel polynomial_drift_model(std::string name, std::vector<double> breaks, std::vector<std::vector<double>> coeffs,
                                   double sigma2);

// b(0) = 0, b(x) <= Kx on a grid, declared b'(0) against b(x)/x near 0.
void validate_model(const GrowthModel& m);

struct EmPath {
    std::vector<double> times;
    std::vector<double> values;
    double final_value = 0.0;
    std::size_t steps = 0;
};

// Iterates falling to or below 0 are reflected to |x|. record_every = 0
// keeps only the endpoint.
EmPath em_simulate(const GrowthModel& m, double x0, double dt, double T, RandomStream& stream,
                   double record_every = 0.0);

struct StationaryDensity {
    bool exists = false;
    double C = 0.0;
    double exponent_at_0 = 0.0;    // 2b'(0)/sigma^2 - 2
    double exponent_at_inf = 0.0;  // 2b'(inf)/sigma^2 - 2
    double window_integral = 0.0;  // unnormalized mass on [1e-6, 1e6]
    GrowthModel model;

    // integral_1^x 2 b(s) / (sigma^2 s^2) ds
    double log_weight(double x) const;
    double evaluate(double x) const;
    // (sigma^2 x^2 f)'/2 - b f by a five-point difference
    double flux(double x) const;
    GridDensity cell_masses(const Grid1D& grid) const;
    double mass(double a, double b) const;

    double quad_tol = 1e-10;
};

// Throws CriticalCaseError when sigma^2 = 2b'(0) or sigma^2 = 2b'(inf).
StationaryDensity stationary_density(const GrowthModel& m, double quad_tol = 1e-10);

enum class Regime { grows, extinct, bistable, stationary };
std::string to_string(Regime r);

struct Classification {
    Regime regime = Regime::stationary;
    double b0 = 0.0;    // b'(0) - sigma^2/2
    double binf = 0.0;  // b'(inf) - sigma^2/2
};

Classification classify(const GrowthModel& m);

struct EmpiricalComparison {
    double distance = 0.0;
    std::size_t samples = 0;
    std::size_t out_of_range = 0;
    GridDensity empirical;
    GridDensity stationary;
};

// Counts over all samples, with the mass outside the grid as one extra atom
// on both sides.
double l1_with_outside(const Vec& counts, std::size_t total, const GridDensity& masses);

EmpiricalComparison empirical_vs_stationary(const GrowthModel& m, double x0, double dt, double T, double burn_in,
                                            double sample_every, const Grid1D& grid, RandomStream& stream);

}  // namespace semilab
