#include "semilab/density.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "semilab/errors.hpp"

namespace semilab {

Grid1D::Grid1D(double lo_, double hi_, std::size_t n) : lo(lo_), hi(hi_), n_cells(n) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw DomainError("grid: need finite lo < hi");
    if (n == 0) throw DomainError("grid: need at least one cell");
}

double Grid1D::edge(std::size_t i) const noexcept {
    if (i >= n_cells) return hi;
    return lo + static_cast<double>(i) * width();
}

std::size_t Grid1D::cell_of(double x) const noexcept {
    if (!(x > lo)) return 0;
    const double r = (x - lo) / width();
    const auto i = static_cast<std::size_t>(r);
    return std::min(i, n_cells - 1);
}

GridDensity::GridDensity(Grid1D g, Vec m) : grid(g), masses(std::move(m)) {
    if (masses.size() != grid.n_cells) throw ShapeError("density: mass vector does not match grid");
}

GridDensity GridDensity::uniform(const Grid1D& grid) {
    return {grid, Vec(grid.n_cells, 1.0 / static_cast<double>(grid.n_cells))};
}

GridDensity GridDensity::point_mass(const Grid1D& grid, std::size_t cell) {
    if (cell >= grid.n_cells) throw DomainError("point_mass: cell out of range");
    Vec m(grid.n_cells, 0.0);
    m[cell] = 1.0;
    return {grid, std::move(m)};
}

double GridDensity::total() const noexcept { return std::accumulate(masses.begin(), masses.end(), 0.0); }

double GridDensity::l1_norm() const noexcept {
    double s = 0.0;
    for (double m : masses) s += std::abs(m);
    return s;
}

bool GridDensity::is_density(double tol) const noexcept {
    for (double m : masses)
        if (!(m >= 0.0)) return false;
    return std::abs(total() - 1.0) <= tol;
}

ProductDensity::ProductDensity(Grid1D g, std::size_t k, Vec m) : grid(g), n_states(k), masses(std::move(m)) {
    if (k == 0) throw DomainError("product density: need at least one state");
    if (masses.size() != grid.n_cells * k) throw ShapeError("product density: mass vector does not match grid");
}

ProductDensity::ProductDensity(Grid1D g, std::size_t k) : ProductDensity(g, k, Vec(g.n_cells * k, 0.0)) {}

double ProductDensity::total() const noexcept { return std::accumulate(masses.begin(), masses.end(), 0.0); }

GridDensity ProductDensity::marginal() const {
    Vec m(grid.n_cells, 0.0);
    for (std::size_t i = 0; i < grid.n_cells; ++i)
        for (std::size_t s = 0; s < n_states; ++s) m[i] += at(i, s);
    return {grid, std::move(m)};
}

GridDensity ProductDensity::state_slice(std::size_t state) const {
    if (state >= n_states) throw DomainError("product density: state out of range");
    Vec m(grid.n_cells);
    for (std::size_t i = 0; i < grid.n_cells; ++i) m[i] = at(i, state);
    return {grid, std::move(m)};
}

double eval_poly(const PiecewisePoly::Coeffs& c, double x) noexcept {
    return c[0] + x * (c[1] + x * (c[2] + x * c[3]));
}

namespace {

double antiderivative(const PiecewisePoly::Coeffs& c, double x) noexcept {
    return x * (c[0] + x * (c[1] / 2.0 + x * (c[2] / 3.0 + x * c[3] / 4.0)));
}

double derivative(const PiecewisePoly::Coeffs& c, double x) noexcept {
    return c[1] + x * (2.0 * c[2] + x * 3.0 * c[3]);
}

// Real roots of c0 + c1 x + c2 x^2 strictly inside (a, b).
void quadratic_roots_in(double c0, double c1, double c2, double a, double b, std::vector<double>& out) {
    auto keep = [&](double r) {
        if (r > a && r < b) out.push_back(r);
    };
    if (c2 == 0.0) {
        if (c1 != 0.0) keep(-c0 / c1);
        return;
    }
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc < 0.0) return;
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (c1 + std::copysign(sq, c1));
    if (q != 0.0) {
        keep(q / c2);
        keep(c0 / q);
    } else {
        keep(0.0);
    }
}

double root_between(const PiecewisePoly::Coeffs& c, double lo, double hi) {
    double flo = eval_poly(c, lo);
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = eval_poly(c, mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

PiecewisePoly::PiecewisePoly(std::vector<double> breakpoints, std::vector<Coeffs> pieces)
    : breaks_(std::move(breakpoints)), pieces_(std::move(pieces)) {
    if (breaks_.size() < 2 || breaks_.size() != pieces_.size() + 1)
        throw ShapeError("piecewise poly: need n+1 breakpoints for n pieces");
    for (std::size_t k = 0; k + 1 < breaks_.size(); ++k)
        if (!(breaks_[k] < breaks_[k + 1])) throw DomainError("piecewise poly: breakpoints must increase");
}

PiecewisePoly PiecewisePoly::constant(double lo, double hi, double value) {
    return PiecewisePoly({lo, hi}, {Coeffs{value, 0.0, 0.0, 0.0}});
}

PiecewisePoly PiecewisePoly::polynomial(double lo, double hi, Coeffs c) { return PiecewisePoly({lo, hi}, {c}); }

std::size_t PiecewisePoly::piece_of(double x) const {
    if (x < breaks_.front() || x > breaks_.back()) throw DomainError("piecewise poly: argument outside support");
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), x);
    auto k = static_cast<std::size_t>(it - breaks_.begin());
    if (k == 0) return 0;
    return std::min(k - 1, pieces_.size() - 1);
}

double PiecewisePoly::operator()(double x) const { return eval_poly(pieces_[piece_of(x)], x); }

double PiecewisePoly::integral() const {
    double s = 0.0;
    for (std::size_t k = 0; k < pieces_.size(); ++k)
        s += antiderivative(pieces_[k], breaks_[k + 1]) - antiderivative(pieces_[k], breaks_[k]);
    return s;
}

double PiecewisePoly::abs_integral() const {
    double s = 0.0;
    std::vector<double> pts;
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
        const auto& c = pieces_[k];
        const double a = breaks_[k], b = breaks_[k + 1];
        // monotone segments from the critical points, then one root per
        // segment at most
        pts.assign({a});
        quadratic_roots_in(c[1], 2.0 * c[2], 3.0 * c[3], a, b, pts);
        pts.push_back(b);
        std::sort(pts.begin(), pts.end());
        std::vector<double> cuts = pts;
        for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
            const double fl = eval_poly(c, pts[j]), fr = eval_poly(c, pts[j + 1]);
            if ((fl < 0.0 && fr > 0.0) || (fl > 0.0 && fr < 0.0)) cuts.push_back(root_between(c, pts[j], pts[j + 1]));
        }
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t j = 0; j + 1 < cuts.size(); ++j)
            s += std::abs(antiderivative(c, cuts[j + 1]) - antiderivative(c, cuts[j]));
    }
    return s;
}

double PiecewisePoly::jump_at(std::size_t k) const {
    if (k == 0 || k >= pieces_.size()) return 0.0;
    return eval_poly(pieces_[k], breaks_[k]) - eval_poly(pieces_[k - 1], breaks_[k]);
}

double PiecewisePoly::lipschitz() const {
    double L = 0.0;
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
        if (k > 0 && jump_at(k) != 0.0) return std::numeric_limits<double>::infinity();
        const auto& c = pieces_[k];
        const double a = breaks_[k], b = breaks_[k + 1];
        L = std::max({L, std::abs(derivative(c, a)), std::abs(derivative(c, b))});
        // interior extremum of p' where p'' = 0
        if (c[3] != 0.0) {
            const double x = -c[2] / (3.0 * c[3]);
            if (x > a && x < b) L = std::max(L, std::abs(derivative(c, x)));
        }
    }
    return L;
}

PiecewisePoly PiecewisePoly::operator-(double v) const {
    auto p = pieces_;
    for (auto& c : p) c[0] -= v;
    return PiecewisePoly(breaks_, std::move(p));
}

PiecewisePoly PiecewisePoly::simplified() const {
    std::vector<double> b{breaks_.front()};
    std::vector<Coeffs> p{pieces_.front()};
    for (std::size_t k = 1; k < pieces_.size(); ++k) {
        if (pieces_[k] == p.back()) continue;
        b.push_back(breaks_[k]);
        p.push_back(pieces_[k]);
    }
    b.push_back(breaks_.back());
    return PiecewisePoly(std::move(b), std::move(p));
}

double l1_distance(std::span<const double> f, std::span<const double> g) {
    if (f.size() != g.size()) throw ShapeError("l1_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += std::abs(f[i] - g[i]);
    return s;
}

double l1_distance(const GridDensity& f, const GridDensity& g) {
    if (!(f.grid == g.grid)) throw ShapeError("l1_distance: grids differ");
    return l1_distance(f.masses, g.masses);
}

double l1_distance(const ProductDensity& f, const ProductDensity& g) {
    if (!(f.grid == g.grid) || f.n_states != g.n_states) throw ShapeError("l1_distance: grids differ");
    return l1_distance(f.masses, g.masses);
}

double negative_part_norm(const GridDensity& f, const GridDensity& h) {
    if (!(f.grid == h.grid)) throw ShapeError("negative_part_norm: grids differ");
    double s = 0.0;
    for (std::size_t i = 0; i < f.masses.size(); ++i) s += std::max(0.0, h.masses[i] - f.masses[i]);
    return s;
}

double mass_in_window(const GridDensity& f, double a, double b) {
    const auto& g = f.grid;
    if (!(a < b)) throw DomainError("mass_in_window: empty window");
    if (a < g.lo - 1e-12 * (g.hi - g.lo) || b > g.hi + 1e-12 * (g.hi - g.lo))
        throw DomainError("mass_in_window: window outside grid");
    const double w = g.width();
    // snap outward; the small slack keeps an exact edge from pulling in a neighbour
    const double ra = (a - g.lo) / w, rb = (b - g.lo) / w;
    auto first = static_cast<std::ptrdiff_t>(std::floor(ra + 1e-9));
    auto last = static_cast<std::ptrdiff_t>(std::ceil(rb - 1e-9));
    first = std::clamp<std::ptrdiff_t>(first, 0, static_cast<std::ptrdiff_t>(g.n_cells));
    last = std::clamp<std::ptrdiff_t>(last, first, static_cast<std::ptrdiff_t>(g.n_cells));
    double s = 0.0;
    for (auto i = first; i < last; ++i) s += f.masses[static_cast<std::size_t>(i)];
    return s;
}

Vec normalize(Vec m) {
    double total = 0.0;
    for (double& v : m) {
        if (v < 0.0) {
            if (v < -1e-14) throw DegenerateInputError("normalize: negative mass");
            v = 0.0;
        }
        total += v;
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw DegenerateInputError("normalize: total mass must be positive");
    for (double& v : m) v /= total;
    return m;
}

GridDensity normalize(const Grid1D& grid, Vec masses) { return {grid, normalize(std::move(masses))}; }

Histogram histogram_from_samples(std::span<const double> samples, const Grid1D& grid) {
    if (samples.empty()) throw DegenerateInputError("histogram: no samples");
    Vec counts(grid.n_cells, 0.0);
    Histogram h;
    for (double x : samples) {
        if (grid.contains(x)) {
            counts[grid.cell_of(x)] += 1.0;
            ++h.in_range;
        } else {
            ++h.out_of_range;
        }
    }
    if (h.in_range == 0) throw DegenerateInputError("histogram: all samples out of range");
    h.density = normalize(grid, std::move(counts));
    return h;
}

GridDensity cell_masses_from_cdf(const Grid1D& grid, const RealFunction& cdf) {
    Vec m(grid.n_cells);
    double prev = cdf(grid.lo);
    for (std::size_t i = 0; i < grid.n_cells; ++i) {
        const double next = cdf(grid.edge(i + 1));
        m[i] = next - prev;
        prev = next;
    }
    return {grid, std::move(m)};
}

std::string format_number(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

void write_csv(std::ostream& out, const GridDensity& f) {
    out << "cell_lo,cell_hi,mass\n";
    for (std::size_t i = 0; i < f.grid.n_cells; ++i)
        out << format_number(f.grid.edge(i)) << ',' << format_number(f.grid.edge(i + 1)) << ','
            << format_number(f.masses[i]) << '\n';
}

void write_csv(std::ostream& out, const ProductDensity& f) {
    out << "cell_lo,cell_hi,state,mass\n";
    for (std::size_t i = 0; i < f.grid.n_cells; ++i)
        for (std::size_t s = 0; s < f.n_states; ++s)
            out << format_number(f.grid.edge(i)) << ',' << format_number(f.grid.edge(i + 1)) << ',' << s << ','
                << format_number(f.at(i, s)) << '\n';
}

GridDensity read_grid_density_csv(std::istream& in) {
    std::string line;
    std::vector<double> lo, hi, mass;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("cell_lo", 0) == 0) continue;
        std::istringstream row(line);
        std::string a, b, c;
        if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c, ','))
            throw ValidationError("density csv: expected three columns");
        lo.push_back(std::stod(a));
        hi.push_back(std::stod(b));
        mass.push_back(std::stod(c));
    }
    if (mass.empty()) throw ValidationError("density csv: no rows");
    return {Grid1D(lo.front(), hi.back(), mass.size()), std::move(mass)};
}

}  // namespace semilab
