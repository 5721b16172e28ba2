#pragma once

#include <optional>
#include <string>
#include <vector>

#include "semilab/density.hpp"
#include "semilab/numerics.hpp"

namespace semilab {

// One monotone branch phi: [lo, hi] -> image, with inverse psi and psi'.
struct MapBranch {
    double lo = 0.0;
    double hi = 1.0;
    RealFunction forward;
    RealFunction inverse;
    RealFunction inverse_derivative;

    double image_lo() const;
    double image_hi() const;
    bool increasing() const;
};

class PiecewiseExpandingMap {
public:
    PiecewiseExpandingMap(std::string name, double lo, double hi, std::vector<MapBranch> branches);

    static PiecewiseExpandingMap tent();
    static PiecewiseExpandingMap logistic();
    static PiecewiseExpandingMap identity(double lo = 0.0, double hi = 1.0);
    static PiecewiseExpandingMap by_name(const std::string& name);

    const std::string& name() const noexcept { return name_; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    const std::vector<MapBranch>& branches() const noexcept { return branches_; }
    double operator()(double x) const;

private:
    std::string name_;
    double lo_, hi_;
    std::vector<MapBranch> branches_;
};

// Sum over branches whose image contains x of f(psi_i(x)) |psi_i'(x)|.
// Endpoints of the map's range count as inside; any other image boundary
// throws BoundaryPointError.
double fp_apply_pointwise(const PiecewiseExpandingMap& map, const RealFunction& f, double x);

// (Pf)(x) = f(x/2)/2 + f(1 - x/2)/2 on [0, 1], exactly on the coefficients.
PiecewisePoly fp_tent_exact(const PiecewisePoly& f);

struct TentOrbit {
    std::vector<PiecewisePoly> iterates;  // P^0 f .. P^n f
    // Lipschitz constants carried through the iteration: each application at
    // most halves the constant, so L_k = L_0 / 2^k is valid for P^k f.
    std::vector<double> lipschitz;
};

TentOrbit tent_orbit(const PiecewisePoly& f0, int n, double lipschitz0);

// Row-stochastic Ulam matrix in compressed rows:
// M[i][j] = |C_i ∩ phi^{-1}(C_j)| / |C_i|.
class UlamOperator {
public:
    UlamOperator(Grid1D grid, std::vector<std::size_t> row_ptr, std::vector<std::size_t> cols, Vec values);

    const Grid1D& grid() const noexcept { return grid_; }
    std::size_t n() const noexcept { return grid_.n_cells; }
    std::size_t nonzeros() const noexcept { return vals_.size(); }
    double entry(std::size_t i, std::size_t j) const;
    double row_sum(std::size_t i) const;
    double column_sum(std::size_t j) const;

    // Row vector times matrix: (fM)_j = sum_i f_i M_ij.
    Vec apply(const Vec& f) const;
    GridDensity apply(const GridDensity& f) const;

private:
    Grid1D grid_;
    std::vector<std::size_t> row_ptr_, cols_;
    Vec vals_;
};

UlamOperator ulam_matrix(const PiecewiseExpandingMap& map, std::size_t n);

struct InvariantDensityResult {
    GridDensity density;
    double residual = 0.0;
    int iterations = 0;
};

InvariantDensityResult invariant_density(const UlamOperator& U, double tol, int max_iter);

// Strictly monotone change of variables with explicit inverse.
struct MonotoneMap {
    double lo = 0.0;
    double hi = 1.0;
    RealFunction forward;
    RealFunction inverse;
};

// Density of alpha(X) for X ~ f, by exact cell masses through the CDF of f.
// The output grid defaults to the image interval with f's cell count.
GridDensity conjugate_transport(const MonotoneMap& alpha, const GridDensity& f,
                                std::optional<Grid1D> out_grid = std::nullopt);

// alpha(x) = (1 - cos(pi x)) / 2, conjugating the tent map to the logistic map.
MonotoneMap tent_logistic_conjugacy();
MonotoneMap inverse_of(const MonotoneMap& alpha);

// Invariant density of the logistic map, 1 / (pi sqrt(x (1 - x))), and its
// exact cell masses (CDF (2/pi) asin sqrt x).
double logistic_invariant_density(double x);
GridDensity logistic_invariant_masses(const Grid1D& grid);

// d_t = |U^t f0 - f*|_1 for t = 0..T.
Vec exactness_profile(const UlamOperator& U, const GridDensity& f0, int T, const GridDensity& fstar);

}  // namespace semilab
