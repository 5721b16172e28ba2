#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "semilab/numerics.hpp"

namespace semilab {

inline constexpr double kDensityTol = 1e-12;
inline constexpr double kOperatorTol = 1e-10;

struct Grid1D {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n_cells = 1;

    Grid1D() = default;
    Grid1D(double lo, double hi, std::size_t n_cells);

    double width() const noexcept { return (hi - lo) / static_cast<double>(n_cells); }
    double edge(std::size_t i) const noexcept;
    double center(std::size_t i) const noexcept { return lo + (static_cast<double>(i) + 0.5) * width(); }
    // Cell containing x, clamped; x == hi belongs to the last cell.
    std::size_t cell_of(double x) const noexcept;
    bool contains(double x) const noexcept { return x >= lo && x <= hi; }

    bool operator==(const Grid1D&) const = default;
};

struct GridDensity {
    Grid1D grid;
    Vec masses;

    GridDensity() = default;
    GridDensity(Grid1D grid, Vec masses);

    static GridDensity uniform(const Grid1D& grid);
    static GridDensity point_mass(const Grid1D& grid, std::size_t cell);

    double total() const noexcept;
    double l1_norm() const noexcept;
    bool is_density(double tol = kDensityTol) const noexcept;
    // Mass divided by cell width, i.e. the piecewise-constant density value.
    double value_in_cell(std::size_t i) const noexcept { return masses[i] / grid.width(); }
};

// Masses indexed by (cell, state), stored cell-major.
struct ProductDensity {
    Grid1D grid;
    std::size_t n_states = 1;
    Vec masses;

    ProductDensity() = default;
    ProductDensity(Grid1D grid, std::size_t n_states, Vec masses);
    ProductDensity(Grid1D grid, std::size_t n_states);

    double& at(std::size_t cell, std::size_t state) { return masses[cell * n_states + state]; }
    double at(std::size_t cell, std::size_t state) const { return masses[cell * n_states + state]; }
    double total() const noexcept;
    GridDensity marginal() const;
    GridDensity state_slice(std::size_t state) const;
};

// Piecewise cubic (or lower) with coefficients in the global variable:
// p(x) = c0 + c1 x + c2 x^2 + c3 x^3 on [breakpoints[k], breakpoints[k+1]).
class PiecewisePoly {
public:
    using Coeffs = std::array<double, 4>;

    PiecewisePoly() = default;
    PiecewisePoly(std::vector<double> breakpoints, std::vector<Coeffs> pieces);
    static PiecewisePoly constant(double lo, double hi, double value);
    static PiecewisePoly polynomial(double lo, double hi, Coeffs c);

    const std::vector<double>& breakpoints() const noexcept { return breaks_; }
    const std::vector<Coeffs>& pieces() const noexcept { return pieces_; }
    std::size_t size() const noexcept { return pieces_.size(); }
    double lo() const { return breaks_.front(); }
    double hi() const { return breaks_.back(); }
    std::size_t piece_of(double x) const;

    double operator()(double x) const;
    double integral() const;
    // Integral of |p|, splitting each piece at its real roots.
    double abs_integral() const;
    // Smallest valid Lipschitz constant: max |p'| over pieces, or +inf when
    // the function jumps at a breakpoint.
    double lipschitz() const;
    double jump_at(std::size_t k) const;

    PiecewisePoly operator-(double c) const;
    // Merge adjacent pieces with identical coefficients.
    PiecewisePoly simplified() const;

private:
    std::vector<double> breaks_;
    std::vector<Coeffs> pieces_;
};

double eval_poly(const PiecewisePoly::Coeffs& c, double x) noexcept;

double l1_distance(std::span<const double> f, std::span<const double> g);
double l1_distance(const GridDensity& f, const GridDensity& g);
double l1_distance(const ProductDensity& f, const ProductDensity& g);

// Sum of max(0, h_i - f_i).
double negative_part_norm(const GridDensity& f, const GridDensity& h);

// Window endpoints snap outward to cell edges.
double mass_in_window(const GridDensity& f, double a, double b);

GridDensity normalize(const Grid1D& grid, Vec masses);
Vec normalize(Vec masses);

struct Histogram {
    GridDensity density;
    std::size_t in_range = 0;
    std::size_t out_of_range = 0;
    double out_of_range_fraction() const noexcept {
        const auto n = in_range + out_of_range;
        return n ? static_cast<double>(out_of_range) / static_cast<double>(n) : 0.0;
    }
};

Histogram histogram_from_samples(std::span<const double> samples, const Grid1D& grid);

// Cell masses of a density given through its CDF.
GridDensity cell_masses_from_cdf(const Grid1D& grid, const RealFunction& cdf);

// Shortest round-trip decimal representation.
std::string format_number(double x);

void write_csv(std::ostream& out, const GridDensity& f);
void write_csv(std::ostream& out, const ProductDensity& f);
GridDensity read_grid_density_csv(std::istream& in);

}  // namespace semilab
