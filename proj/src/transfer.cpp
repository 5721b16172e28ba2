#include "semilab/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "semilab/errors.hpp"

namespace semilab {

double MapBranch::image_lo() const { return std::min(forward(lo), forward(hi)); }
double MapBranch::image_hi() const { return std::max(forward(lo), forward(hi)); }
bool MapBranch::increasing() const { return forward(hi) > forward(lo); }

PiecewiseExpandingMap::PiecewiseExpandingMap(std::string name, double lo, double hi, std::vector<MapBranch> branches)
    : name_(std::move(name)), lo_(lo), hi_(hi), branches_(std::move(branches)) {
    if (!(lo_ < hi_)) throw DomainError("map: need lo < hi");
    if (branches_.empty()) throw DomainError("map: no branches");
    std::sort(branches_.begin(), branches_.end(), [](const MapBranch& a, const MapBranch& b) { return a.lo < b.lo; });
    constexpr int kProbe = 64;
    for (const auto& br : branches_) {
        if (!(br.lo < br.hi)) throw DomainError("map: empty branch domain");
        const double a = br.image_lo(), b = br.image_hi();
        for (int k = 0; k <= kProbe; ++k) {
            const double y = a + (b - a) * k / kProbe;
            const double x = br.inverse(y);
            if (std::abs(br.forward(x) - y) > 1e-10)
                throw DomainError("map '" + name_ + "': inverse branch does not invert the map");
            if (k > 0 && k < kProbe && !(std::abs(br.inverse_derivative(y)) > 0.0))
                throw DomainError("map '" + name_ + "': inverse branch derivative vanishes");
        }
    }
    for (std::size_t i = 0; i + 1 < branches_.size(); ++i)
        if (std::abs(branches_[i].hi - branches_[i + 1].lo) > 1e-14)
            throw DomainError("map '" + name_ + "': branch domains must tile the interval");
    if (branches_.front().lo != lo_ || branches_.back().hi != hi_)
        throw DomainError("map '" + name_ + "': branch domains must cover the interval");
}

double PiecewiseExpandingMap::operator()(double x) const {
    for (const auto& br : branches_)
        if (x >= br.lo && x <= br.hi) return br.forward(x);
    throw DomainError("map: argument outside domain");
}

PiecewiseExpandingMap PiecewiseExpandingMap::tent() {
    MapBranch left{0.0, 0.5, [](double x) { return 2.0 * x; }, [](double y) { return y / 2.0; },
                   [](double) { return 0.5; }};
    MapBranch right{0.5, 1.0, [](double x) { return 2.0 - 2.0 * x; }, [](double y) { return 1.0 - y / 2.0; },
                    [](double) { return -0.5; }};
    return PiecewiseExpandingMap("tent", 0.0, 1.0, {left, right});
}

PiecewiseExpandingMap PiecewiseExpandingMap::logistic() {
    auto phi = [](double x) { return 4.0 * x * (1.0 - x); };
    MapBranch left{0.0, 0.5, phi, [](double y) { return 0.5 * (1.0 - std::sqrt(std::max(0.0, 1.0 - y))); },
                   [](double y) { return 0.25 / std::sqrt(std::max(0.0, 1.0 - y)); }};
    MapBranch right{0.5, 1.0, phi, [](double y) { return 0.5 * (1.0 + std::sqrt(std::max(0.0, 1.0 - y))); },
                    [](double y) { return -0.25 / std::sqrt(std::max(0.0, 1.0 - y)); }};
    return PiecewiseExpandingMap("logistic", 0.0, 1.0, {left, right});
}

PiecewiseExpandingMap PiecewiseExpandingMap::identity(double lo, double hi) {
    MapBranch id{lo, hi, [](double x) { return x; }, [](double y) { return y; }, [](double) { return 1.0; }};
    return PiecewiseExpandingMap("identity", lo, hi, {id});
}

PiecewiseExpandingMap PiecewiseExpandingMap::by_name(const std::string& name) {
    if (name == "tent") return tent();
    if (name == "logistic") return logistic();
    if (name == "identity") return identity();
    throw DomainError("unknown map '" + name + "' (expected tent, logistic, identity)");
}

double fp_apply_pointwise(const PiecewiseExpandingMap& map, const RealFunction& f, double x) {
    if (x < map.lo() || x > map.hi()) throw DomainError("fp_apply_pointwise: x outside the range");
    double s = 0.0;
    for (const auto& br : map.branches()) {
        const double a = br.image_lo(), b = br.image_hi();
        const bool at_a = x == a, at_b = x == b;
        if ((at_a && a != map.lo()) || (at_b && b != map.hi()))
            throw BoundaryPointError("fp_apply_pointwise: x lies on a branch-image boundary");
        if (x < a || x > b) continue;
        const double y = br.inverse(x);
        s += f(y) * std::abs(br.inverse_derivative(x));
    }
    return s;
}

namespace {

using Coeffs = PiecewisePoly::Coeffs;

Coeffs compose_half(const Coeffs& c) { return {c[0], c[1] / 2.0, c[2] / 4.0, c[3] / 8.0}; }

// c(1 - x/2) expanded in powers of x.
Coeffs compose_reflect_half(const Coeffs& c) {
    // (1 - x/2)^k = sum_m binom(k, m) (-1/2)^m x^m
    static constexpr double binom[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
    Coeffs out{0, 0, 0, 0};
    for (int k = 0; k < 4; ++k) {
        double p = 1.0;
        for (int m = 0; m <= k; ++m) {
            out[m] += c[k] * binom[k][m] * p;
            p *= -0.5;
        }
    }
    return out;
}

}  // namespace

PiecewisePoly fp_tent_exact(const PiecewisePoly& f) {
    if (f.lo() != 0.0 || f.hi() != 1.0) throw DomainError("fp_tent_exact: f must be supported on [0, 1]");
    std::set<double> cuts{0.0, 1.0};
    for (double b : f.breakpoints()) {
        if (2.0 * b > 0.0 && 2.0 * b < 1.0) cuts.insert(2.0 * b);
        if (2.0 - 2.0 * b > 0.0 && 2.0 - 2.0 * b < 1.0) cuts.insert(2.0 - 2.0 * b);
    }
    std::vector<double> br(cuts.begin(), cuts.end());
    std::vector<Coeffs> pieces;
    pieces.reserve(br.size() - 1);
    for (std::size_t k = 0; k + 1 < br.size(); ++k) {
        const double m = 0.5 * (br[k] + br[k + 1]);
        const auto q = compose_half(f.pieces()[f.piece_of(m / 2.0)]);
        const auto r = compose_reflect_half(f.pieces()[f.piece_of(1.0 - m / 2.0)]);
        Coeffs c;
        for (int j = 0; j < 4; ++j) c[j] = 0.5 * q[j] + 0.5 * r[j];
        pieces.push_back(c);
    }
    return PiecewisePoly(std::move(br), std::move(pieces)).simplified();
}

TentOrbit tent_orbit(const PiecewisePoly& f0, int n, double lipschitz0) {
    if (n < 0) throw DomainError("tent_orbit: negative length");
    TentOrbit orbit;
    orbit.iterates.push_back(f0);
    orbit.lipschitz.push_back(lipschitz0);
    for (int k = 1; k <= n; ++k) {
        orbit.iterates.push_back(fp_tent_exact(orbit.iterates.back()));
        orbit.lipschitz.push_back(orbit.lipschitz.back() / 2.0);
    }
    return orbit;
}

UlamOperator::UlamOperator(Grid1D grid, std::vector<std::size_t> row_ptr, std::vector<std::size_t> cols, Vec values)
    : grid_(grid), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)), vals_(std::move(values)) {
    if (row_ptr_.size() != grid_.n_cells + 1 || cols_.size() != vals_.size() || row_ptr_.back() != vals_.size())
        throw ShapeError("ulam operator: inconsistent sparse structure");
}

double UlamOperator::entry(std::size_t i, std::size_t j) const {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        if (cols_[k] == j) return vals_[k];
    return 0.0;
}

double UlamOperator::row_sum(std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += vals_[k];
    return s;
}

double UlamOperator::column_sum(std::size_t j) const {
    double s = 0.0;
    for (std::size_t k = 0; k < cols_.size(); ++k)
        if (cols_[k] == j) s += vals_[k];
    return s;
}

Vec UlamOperator::apply(const Vec& f) const {
    if (f.size() != n()) throw ShapeError("ulam apply: size mismatch");
    Vec out(n(), 0.0);
    for (std::size_t i = 0; i < n(); ++i) {
        const double fi = f[i];
        if (fi == 0.0) continue;
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) out[cols_[k]] += fi * vals_[k];
    }
    return out;
}

GridDensity UlamOperator::apply(const GridDensity& f) const {
    if (!(f.grid == grid_)) throw ShapeError("ulam apply: grid mismatch");
    return {grid_, apply(f.masses)};
}

UlamOperator ulam_matrix(const PiecewiseExpandingMap& map, std::size_t n) {
    if (n < 2) throw DomainError("ulam_matrix: need n >= 2");
    const Grid1D grid(map.lo(), map.hi(), n);
    const double w = grid.width();
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
    const double slack = 1e-10 * (map.hi() - map.lo());

    for (const auto& br : map.branches()) {
        const double ya = br.image_lo(), yb = br.image_hi();
        const bool inc = br.increasing();
        if (ya < map.lo() - slack || yb > map.hi() + slack) throw GeometryError("ulam_matrix: branch image leaves the interval");
        const std::size_t j0 = grid.cell_of(ya);
        const std::size_t j1 = grid.cell_of(yb);
        // preimages of the clipped target edges; consecutive intervals share
        // their endpoints exactly so the pieces tile the branch domain
        auto pre = [&](double y) {
            if (y <= ya) return inc ? br.lo : br.hi;
            if (y >= yb) return inc ? br.hi : br.lo;
            const double x = br.inverse(y);
            if (!(x >= br.lo - slack && x <= br.hi + slack))
                throw GeometryError("ulam_matrix: inverse branch does not bracket a cell boundary");
            return std::clamp(x, br.lo, br.hi);
        };
        double prev = pre(std::max(grid.edge(j0), ya));
        for (std::size_t j = j0; j <= j1; ++j) {
            const double next = pre(std::min(grid.edge(j + 1), yb));
            double p = prev, q = next;
            prev = next;
            if (p > q) std::swap(p, q);
            if (!(q > p)) continue;
            for (std::size_t i = grid.cell_of(p); i < n; ++i) {
                const double lo = std::max(p, grid.edge(i)), hi = std::min(q, grid.edge(i + 1));
                if (hi > lo) rows[i].emplace_back(j, hi - lo);
                if (grid.edge(i + 1) >= q) break;
            }
        }
    }

    std::vector<std::size_t> row_ptr{0}, cols;
    Vec vals;
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = rows[i];
        std::sort(r.begin(), r.end());
        double sum = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (!cols.empty() && cols.size() > row_ptr.back() && cols.back() == r[k].first) {
                vals.back() += r[k].second / w;
            } else {
                cols.push_back(r[k].first);
                vals.push_back(r[k].second / w);
            }
            sum += r[k].second / w;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw GeometryError("ulam_matrix: branches do not cover cell " + std::to_string(i));
        row_ptr.push_back(vals.size());
    }
    return UlamOperator(grid, std::move(row_ptr), std::move(cols), std::move(vals));
}

InvariantDensityResult invariant_density(const UlamOperator& U, double tol, int max_iter) {
    if (!(tol > 0.0)) throw DomainError("invariant_density: tolerance must be positive");
    GridDensity f = GridDensity::uniform(U.grid());
    double residual = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        GridDensity g = normalize(U.grid(), U.apply(f.masses));
        residual = l1_distance(g, f);
        f = std::move(g);
        if (residual < tol) return {std::move(f), residual, it};
    }
    throw NonConvergenceError("invariant_density: no convergence in " + std::to_string(max_iter) + " iterations",
                              f.masses, residual);
}

namespace {

double piecewise_linear_cdf(const GridDensity& f, const Vec& cum, double x) {
    const auto& g = f.grid;
    if (x <= g.lo) return 0.0;
    if (x >= g.hi) return cum.back();
    const std::size_t i = g.cell_of(x);
    return cum[i] + f.masses[i] * (x - g.edge(i)) / g.width();
}

}  // namespace

GridDensity conjugate_transport(const MonotoneMap& alpha, const GridDensity& f, std::optional<Grid1D> out_grid) {
    if (!(alpha.lo < alpha.hi)) throw DomainError("conjugate_transport: empty domain");
    constexpr int kProbe = 256;
    double prev = alpha.forward(alpha.lo);
    const double first = prev;
    int sign = 0;
    for (int k = 1; k <= kProbe; ++k) {
        const double v = alpha.forward(alpha.lo + (alpha.hi - alpha.lo) * k / kProbe);
        const int s = v > prev ? 1 : (v < prev ? -1 : 0);
        if (s == 0 || (sign != 0 && s != sign)) throw DomainError("conjugate_transport: map is not strictly monotone");
        sign = s;
        prev = v;
    }
    const double ylo = std::min(first, prev), yhi = std::max(first, prev);
    const Grid1D grid = out_grid ? *out_grid : Grid1D(ylo, yhi, f.grid.n_cells);

    Vec cum(f.grid.n_cells + 1, 0.0);
    for (std::size_t i = 0; i < f.grid.n_cells; ++i) cum[i + 1] = cum[i] + f.masses[i];
    auto F = [&](double y) {
        const double yc = std::clamp(y, ylo, yhi);
        double x;
        if (yc == ylo) x = sign > 0 ? alpha.lo : alpha.hi;
        else if (yc == yhi) x = sign > 0 ? alpha.hi : alpha.lo;
        else x = alpha.inverse(yc);
        return piecewise_linear_cdf(f, cum, x);
    };
    Vec m(grid.n_cells);
    double Fa = F(grid.lo);
    for (std::size_t k = 0; k < grid.n_cells; ++k) {
        const double Fb = F(grid.edge(k + 1));
        m[k] = std::abs(Fb - Fa);
        Fa = Fb;
    }
    return {grid, std::move(m)};
}

MonotoneMap tent_logistic_conjugacy() {
    return {0.0, 1.0, [](double x) { return 0.5 - 0.5 * std::cos(std::numbers::pi * x); },
            [](double y) { return std::acos(std::clamp(1.0 - 2.0 * y, -1.0, 1.0)) / std::numbers::pi; }};
}

MonotoneMap inverse_of(const MonotoneMap& alpha) {
    const double a = alpha.forward(alpha.lo), b = alpha.forward(alpha.hi);
    return {std::min(a, b), std::max(a, b), alpha.inverse, alpha.forward};
}

double logistic_invariant_density(double x) { return 1.0 / (std::numbers::pi * std::sqrt(x * (1.0 - x))); }

GridDensity logistic_invariant_masses(const Grid1D& grid) {
    return cell_masses_from_cdf(grid, [](double x) {
        return 2.0 / std::numbers::pi * std::asin(std::sqrt(std::clamp(x, 0.0, 1.0)));
    });
}

Vec exactness_profile(const UlamOperator& U, const GridDensity& f0, int T, const GridDensity& fstar) {
    if (T < 0) throw DomainError("exactness_profile: negative horizon");
    Vec d;
    d.reserve(static_cast<std::size_t>(T) + 1);
    GridDensity f = f0;
    d.push_back(l1_distance(f, fstar));
    for (int t = 1; t <= T; ++t) {
        f = U.apply(f);
        d.push_back(l1_distance(f, fstar));
    }
    return d;
}

}  // namespace semilab
