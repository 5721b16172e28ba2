#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "semilab/density.hpp"
#include "semilab/numerics.hpp"

namespace semilab {

// Age-structured population: u_t + u_a = -mu(a) u, u(t, 0) = int psi u da.
struct McKendrickModel {
    RealFunction mu;
    RealFunction psi;
    double a_max = 1.0;
    std::vector<double> breaks;  // kinks or jumps of mu and psi
};

struct PopulationRun {
    Vec times;      // every step, starting at 0
    Vec total;      // total mass at each time
    std::vector<GridDensity> snapshots;  // at multiples of record_every
    Vec snapshot_times;
    GridDensity final;
};

// Upwind transport in age with half-step decay on either side, renewal
// inflow by the trapezoidal rule in time. The last age cell is a plus-group.
PopulationRun mckendrick_evolve(const McKendrickModel& m, const GridDensity& u0, double dt, double T,
                                double record_every = 0.0);

// Root of int_0^a_max e^{-lambda a} psi(a) exp(-int_0^a mu) da = 1.
double lotka_rate(const McKendrickModel& m, double tol = 1e-12);

struct GrowthFit {
    double lambda_hat = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

// Least squares slope of log mass over times in [t0, t1]. A zero-residual
// fit reports R^2 = 1.
GrowthFit malthus_estimate(const Vec& times, const Vec& mass, double t0, double t1);

// u_t = -(g u)_x - lambda(x) u + 4 lambda(2x) u(2x) on [0, x_max].
struct SizeDivisionModel {
    RealFunction g;
    RealFunction lambda_div;
    double x_max = 1.0;
};

// Conservative upwind with no outflow at x_max; division by exact
// exponential removal and mass-exact rebinning of daughters through x / 2.
PopulationRun size_division_evolve(const SizeDivisionModel& m, const GridDensity& u0, double dt, double T,
                                   double record_every = 0.0);

// Masses on a (birth size, age) grid, stored birth-size-major.
struct AgeSizeDensity {
    Grid1D xb;
    Grid1D age;
    Vec masses;

    AgeSizeDensity() = default;
    AgeSizeDensity(Grid1D xb, Grid1D age);
    AgeSizeDensity(Grid1D xb, Grid1D age, Vec masses);

    double& at(std::size_t i, std::size_t j) { return masses[i * age.n_cells + j]; }
    double at(std::size_t i, std::size_t j) const { return masses[i * age.n_cells + j]; }
    double total() const noexcept;
    GridDensity birth_size_marginal() const;
    GridDensity age_marginal() const;
};

double l1_distance(const AgeSizeDensity& f, const AgeSizeDensity& g);
void write_csv(std::ostream& out, const AgeSizeDensity& f);

using AgeFunction = std::function<double(double xb, double a)>;

// Cells born at size xb grow along x' = g(x) and divide at age a into two
// cells of size S_a(xb) = pi_a(xb) / 2.
struct CellCycleModel {
    RealFunction g;
    AgeFunction q;         // cycle-length density in a for each xb
    AgeFunction survival;  // optional closed form of int_a^inf q
    AgeFunction flow;      // optional closed form of pi_a(xb)
    RealFunction a_lo, a_hi;
    double xb_lo = 0.5, xb_hi = 1.0;
    std::vector<double> breaks;  // kinks of q in a

    double survival_at(double xb, double a) const;
    double hazard(double xb, double a) const;
    double flow_at(double xb, double a) const;
    double division_size(double xb, double a) const { return 0.5 * flow_at(xb, a); }
};

struct AssumptionReport {
    bool positive_growth = false;    // g > 0 on [xb_lo, 2 xb_hi]
    bool normalized = false;         // int q da = 1
    bool support = false;            // q = 0 outside (a_lo, a_hi)
    bool daughters_inside = false;   // S_{a_lo} >= xb_lo, S_{a_hi} <= xb_hi
    bool interior_band = false;      // S_{a_lo}(xb) < xb < S_{a_hi}(xb) at every interior node
    double interior_fraction = 0.0;  // share of interior nodes where it holds
    bool nonlinear_growth = false;   // g(2x) != 2 g(x) somewhere
};

AssumptionReport check_assumptions(const CellCycleModel& m, std::size_t nodes = 101);

// g = 1, q uniform on [1, 1.2], birth sizes in [0.5, 1.4].
CellCycleModel cellcycle_benchmark();

struct CellCycleRun {
    Vec times;
    Vec total;
    Vec removed;   // per step
    Vec injected;  // per step
    std::vector<AgeSizeDensity> snapshots;
    Vec snapshot_times;
    AgeSizeDensity final;
};

// Per step: age transport, hazard removal by survival ratios of cell
// averages (the last age cell divides completely), injection at age 0 of
// twice the removed mass rebinned through S_a. Requires dt <= da and a
// model whose assumptions other than the interior band hold; daughters
// leaving [xb_lo, xb_hi] beyond 1e-9 raise AssumptionViolationError.
CellCycleRun cellcycle_evolve(const CellCycleModel& m, const AgeSizeDensity& u0, double dt, double T,
                              double record_every = 0.0);

// Distances || e^{-lambda (t - T)} u(t) / |u(T)| - u(T) / |u(T)| ||_1.
struct ResidualProfile {
    Vec times;
    Vec residual;
};

ResidualProfile aeg_residual(const std::vector<AgeSizeDensity>& snapshots, const Vec& times, double lambda_hat);
ResidualProfile aeg_residual(const std::vector<GridDensity>& snapshots, const Vec& times, double lambda_hat);

// Max of the residual over consecutive windows of the given length after
// burn_in; the envelope used for the decrease check.
Vec window_maxima(const ResidualProfile& r, double burn_in, double window);

// Current-size density: each age slice pushed through xb -> pi_a(xb) at the
// slice centre, then summed over ages.
GridDensity size_age_pushforward(const CellCycleModel& m, const AgeSizeDensity& u, const Grid1D& size_grid);

// Mass-exact rebinning of uniform cell masses through a monotone increasing
// map of the cell edges. Mass landing outside the target is returned in
// `lost`.
struct Rebinning {
    struct Entry {
        std::size_t target;
        double weight;
    };
    std::vector<std::vector<Entry>> rows;  // per source cell
    double max_outside = 0.0;              // largest excursion of an image edge
};

Rebinning rebinning(const Vec& image_edges, const Grid1D& target);
void apply_rebinning(const Rebinning& r, std::span<const double> source, std::span<double> target, double factor,
                     double* lost = nullptr);

}  // namespace semilab
