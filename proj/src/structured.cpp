#include "semilab/structured.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "semilab/errors.hpp"

namespace semilab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct StepPlan {
    std::size_t steps = 0;
    double h = 0.0;
    double c = 0.0;  // Courant number h / da
};

StepPlan plan_steps(double dt, double T, double da, const char* who) {
    if (!(dt > 0.0) || !(T >= 0.0)) throw DomainError(std::string(who) + ": need dt > 0 and T >= 0");
    if (dt > da * (1.0 + 1e-12)) throw StepSizeError(std::string(who) + ": CFL violated, dt > da");
    StepPlan p;
    p.steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    p.h = p.steps ? T / static_cast<double>(p.steps) : dt;
    p.c = p.h / da;
    if (std::abs(p.c - 1.0) < 1e-12) p.c = 1.0;
    return p;
}

std::size_t record_stride(double record_every, double h) {
    if (!(record_every > 0.0)) return 0;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(record_every / h)));
}

void require_nonnegative(std::span<const double> m, const char* who) {
    for (double v : m)
        if (!(v >= 0.0)) throw DomainError(std::string(who) + ": initial masses must be nonnegative");
}

double sum(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

// Integral over [a, b] split at the given breaks.
double split_quad(const RealFunction& f, double a, double b, const std::vector<double>& breaks, double tol) {
    if (!(b > a)) return 0.0;
    std::vector<double> pts{a};
    for (double x : breaks)
        if (x > a && x < b) pts.push_back(x);
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k)
        if (pts[k + 1] > pts[k]) s += adaptive_quad(f, pts[k], pts[k + 1], tol).value;
    return s;
}

// Simpson on each break-free piece; exact for piecewise quadratics.
double piece_simpson(const RealFunction& f, double a, double b, const std::vector<double>& breaks) {
    std::vector<double> pts{a};
    for (double x : breaks)
        if (x > a && x < b) pts.push_back(x);
    pts.push_back(b);
    std::sort(pts.begin(), pts.end());
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k)
        if (pts[k + 1] > pts[k]) s += simpson(f, pts[k], pts[k + 1], 8);
    return s;
}

}  // namespace

PopulationRun mckendrick_evolve(const McKendrickModel& m, const GridDensity& u0, double dt, double T,
                                double record_every) {
    const Grid1D& grid = u0.grid;
    const std::size_t n = grid.n_cells;
    if (n < 2) throw ShapeError("mckendrick_evolve: need at least two age cells");
    if (std::abs(grid.lo) > 1e-12) throw DomainError("mckendrick_evolve: age grid must start at 0");
    require_nonnegative(u0.masses, "mckendrick_evolve");
    const StepPlan plan = plan_steps(dt, T, grid.width(), "mckendrick_evolve");
    const double h = plan.h, c = plan.c;

    Vec psi(n), half(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double a = grid.center(j);
        const double mu = m.mu ? m.mu(a) : 0.0;
        psi[j] = m.psi ? m.psi(a) : 0.0;
        if (!(mu >= 0.0) || !(psi[j] >= 0.0)) throw DomainError("mckendrick_evolve: mu and psi must be nonnegative");
        half[j] = std::exp(-0.5 * mu * h);
    }

    PopulationRun run;
    Vec u = u0.masses, next(n);
    const std::size_t stride = record_stride(record_every, h);
    auto record = [&](std::size_t k) {
        const double t = static_cast<double>(k) * h;
        run.times.push_back(t);
        run.total.push_back(sum(u));
        if (stride && k % stride == 0) {
            run.snapshots.emplace_back(grid, u);
            run.snapshot_times.push_back(t);
        }
    };
    record(0);
    for (std::size_t k = 1; k <= plan.steps; ++k) {
        double b_old = 0.0;
        for (std::size_t j = 0; j < n; ++j) b_old += psi[j] * u[j];
        for (std::size_t j = 0; j < n; ++j) u[j] *= half[j];
        next[0] = (1.0 - c) * u[0];
        for (std::size_t j = 1; j + 1 < n; ++j) next[j] = (1.0 - c) * u[j] + c * u[j - 1];
        next[n - 1] = u[n - 1] + c * u[n - 2];
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            next[j] *= half[j];
            s += psi[j] * next[j];
        }
        const double births = 0.5 * h * (b_old + s) / (1.0 - 0.5 * h * psi[0] * half[0]);
        next[0] += half[0] * births;
        std::swap(u, next);
        record(k);
    }
    run.final = GridDensity(grid, u);
    return run;
}

double lotka_rate(const McKendrickModel& m, double tol) {
    if (!m.psi) throw PreconditionError("lotka_rate: psi is required");
    if (!(m.a_max > 0.0)) throw DomainError("lotka_rate: a_max must be positive");
    std::vector<double> pts{0.0};
    for (double x : m.breaks)
        if (x > 0.0 && x < m.a_max) pts.push_back(x);
    pts.push_back(m.a_max);
    std::sort(pts.begin(), pts.end());
    const RealFunction mu = m.mu ? m.mu : RealFunction([](double) { return 0.0; });
    Vec cum(pts.size(), 0.0);
    for (std::size_t k = 1; k < pts.size(); ++k)
        cum[k] = cum[k - 1] + adaptive_quad(mu, pts[k - 1], pts[k], 1e-14).value;
    auto hazard_integral = [&](double a) {
        auto it = std::upper_bound(pts.begin(), pts.end(), a);
        const std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - pts.begin() - 1));
        return a > pts[k] ? cum[k] + adaptive_quad(mu, pts[k], a, 1e-14).value : cum[k];
    };
    auto F = [&](double lambda) {
        RealFunction f = [&](double a) { return std::exp(-lambda * a - hazard_integral(a)) * m.psi(a); };
        return split_quad(f, 0.0, m.a_max, m.breaks, 1e-13) - 1.0;
    };
    if (!(F(0.0) > -1.0)) throw PreconditionError("lotka_rate: psi vanishes identically");
    double lo = -1.0, hi = 1.0;
    while (F(lo) < 0.0) {
        lo *= 2.0;
        if (lo < -1e3) throw BracketError("lotka_rate: no sign change below -1000");
    }
    while (F(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e3) throw BracketError("lotka_rate: no sign change above 1000");
    }
    const double f_lo = F(lo), f_hi = F(hi);
    if (!std::isfinite(f_lo) || !std::isfinite(f_hi)) throw BracketError("lotka_rate: characteristic function overflows");
    return bisect_root(F, lo, hi, tol);
}

GrowthFit malthus_estimate(const Vec& times, const Vec& mass, double t0, double t1) {
    if (times.size() != mass.size()) throw ShapeError("malthus_estimate: times and mass differ in length");
    Vec t, y;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t0 - 1e-12 || times[k] > t1 + 1e-12) continue;
        if (!(mass[k] > 0.0)) throw DomainError("malthus_estimate: nonpositive mass in the window");
        t.push_back(times[k]);
        y.push_back(std::log(mass[k]));
    }
    const std::size_t n = t.size();
    if (n < 2) throw DegenerateInputError("malthus_estimate: fewer than two points in the window");
    const double tm = sum(t) / static_cast<double>(n), ym = sum(y) / static_cast<double>(n);
    double vt = 0, vy = 0, cty = 0;
    for (std::size_t k = 0; k < n; ++k) {
        vt += (t[k] - tm) * (t[k] - tm);
        vy += (y[k] - ym) * (y[k] - ym);
        cty += (t[k] - tm) * (y[k] - ym);
    }
    if (!(vt > 0.0)) throw DegenerateInputError("malthus_estimate: window has a single time");
    GrowthFit fit;
    fit.lambda_hat = cty / vt;
    fit.points = n;
    const double ss_res = std::max(0.0, vy - cty * cty / vt);
    const bool flat = vy <= 1e-28 * static_cast<double>(n) * std::max(1.0, ym * ym);
    fit.r_squared = flat ? 1.0 : 1.0 - ss_res / vy;
    return fit;
}

Rebinning rebinning(const Vec& image_edges, const Grid1D& target) {
    if (image_edges.size() < 2) throw ShapeError("rebinning: need at least one source cell");
    Rebinning r;
    r.rows.resize(image_edges.size() - 1);
    const double w = target.width();
    for (std::size_t i = 0; i + 1 < image_edges.size(); ++i) {
        const double y0 = image_edges[i], y1 = image_edges[i + 1];
        if (y1 < y0) throw DomainError("rebinning: image edges must be increasing");
        r.max_outside = std::max({r.max_outside, target.lo - y0, y1 - target.hi});
        if (y1 == y0) {
            if (target.contains(y0)) r.rows[i].push_back({target.cell_of(y0), 1.0});
            continue;
        }
        const double a = std::max(y0, target.lo), b = std::min(y1, target.hi);
        if (!(b > a)) continue;
        const std::size_t k0 = target.cell_of(a), k1 = target.cell_of(b);
        for (std::size_t k = k0; k <= k1; ++k) {
            const double lo = std::max(a, target.lo + static_cast<double>(k) * w);
            const double hi = std::min(b, k + 1 == target.n_cells ? target.hi : target.lo + static_cast<double>(k + 1) * w);
            if (hi > lo) r.rows[i].push_back({k, (hi - lo) / (y1 - y0)});
        }
    }
    return r;
}

void apply_rebinning(const Rebinning& r, std::span<const double> source, std::span<double> target, double factor,
                     double* lost) {
    double out = 0.0;
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const double m = source[i] * factor;
        if (m == 0.0) continue;
        double placed = 0.0;
        for (const auto& e : r.rows[i]) {
            target[e.target] += m * e.weight;
            placed += e.weight;
        }
        out += m * (1.0 - placed);
    }
    if (lost) *lost = out;
}

PopulationRun size_division_evolve(const SizeDivisionModel& m, const GridDensity& u0, double dt, double T,
                                   double record_every) {
    const Grid1D& grid = u0.grid;
    const std::size_t n = grid.n_cells;
    if (std::abs(grid.lo) > 1e-12) throw DomainError("size_division_evolve: size grid must start at 0");
    if (std::abs(grid.hi - m.x_max) > 1e-12 * std::max(1.0, m.x_max))
        throw ShapeError("size_division_evolve: grid must end at x_max");
    require_nonnegative(u0.masses, "size_division_evolve");
    if (!(dt > 0.0) || !(T >= 0.0)) throw DomainError("size_division_evolve: need dt > 0 and T >= 0");
    const std::size_t steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    const double h = steps ? T / static_cast<double>(steps) : dt;
    const double dx = grid.width();

    // courant[k]: fraction of cell k - 1 crossing edge k per step
    Vec courant(n + 1, 0.0), keep(n);
    for (std::size_t k = 1; k < n; ++k) {
        const double g = m.g(grid.edge(k));
        if (!(g > 0.0)) throw DomainError("size_division_evolve: growth rate must be positive");
        courant[k] = h * g / dx;
        if (courant[k] > 1.0 + 1e-12) throw StepSizeError("size_division_evolve: CFL violated, h g / dx > 1");
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double lam = m.lambda_div ? m.lambda_div(grid.center(j)) : 0.0;
        if (!(lam >= 0.0)) throw DomainError("size_division_evolve: division rate must be nonnegative");
        keep[j] = std::exp(-lam * h);
    }
    Vec half_edges(n + 1);
    for (std::size_t k = 0; k <= n; ++k) half_edges[k] = 0.5 * grid.edge(k);
    const Rebinning daughters = rebinning(half_edges, grid);

    PopulationRun run;
    Vec u = u0.masses, next(n), removed(n);
    const std::size_t stride = record_stride(record_every, h);
    auto record = [&](std::size_t k) {
        const double t = static_cast<double>(k) * h;
        run.times.push_back(t);
        run.total.push_back(sum(u));
        if (stride && k % stride == 0) {
            run.snapshots.emplace_back(grid, u);
            run.snapshot_times.push_back(t);
        }
    };
    record(0);
    for (std::size_t k = 1; k <= steps; ++k) {
        for (std::size_t j = 0; j < n; ++j) next[j] = u[j] * (1.0 - courant[j + 1]) + (j ? courant[j] * u[j - 1] : 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            removed[j] = next[j] * (1.0 - keep[j]);
            next[j] -= removed[j];
        }
        apply_rebinning(daughters, removed, next, 2.0);
        std::swap(u, next);
        record(k);
    }
    run.final = GridDensity(grid, u);
    return run;
}

AgeSizeDensity::AgeSizeDensity(Grid1D xb_, Grid1D age_)
    : xb(xb_), age(age_), masses(xb_.n_cells * age_.n_cells, 0.0) {}

AgeSizeDensity::AgeSizeDensity(Grid1D xb_, Grid1D age_, Vec m) : xb(xb_), age(age_), masses(std::move(m)) {
    if (masses.size() != xb.n_cells * age.n_cells) throw ShapeError("AgeSizeDensity: mass count does not match grids");
}

double AgeSizeDensity::total() const noexcept { return sum(masses); }

GridDensity AgeSizeDensity::birth_size_marginal() const {
    Vec m(xb.n_cells, 0.0);
    for (std::size_t i = 0; i < xb.n_cells; ++i)
        for (std::size_t j = 0; j < age.n_cells; ++j) m[i] += at(i, j);
    return {xb, std::move(m)};
}

GridDensity AgeSizeDensity::age_marginal() const {
    Vec m(age.n_cells, 0.0);
    for (std::size_t i = 0; i < xb.n_cells; ++i)
        for (std::size_t j = 0; j < age.n_cells; ++j) m[j] += at(i, j);
    return {age, std::move(m)};
}

double l1_distance(const AgeSizeDensity& f, const AgeSizeDensity& g) {
    if (!(f.xb == g.xb) || !(f.age == g.age)) throw ShapeError("l1_distance: grids differ");
    return l1_distance(std::span<const double>(f.masses), std::span<const double>(g.masses));
}

void write_csv(std::ostream& out, const AgeSizeDensity& f) {
    out << "xb_lo,xb_hi,a_lo,a_hi,mass\n";
    for (std::size_t i = 0; i < f.xb.n_cells; ++i)
        for (std::size_t j = 0; j < f.age.n_cells; ++j)
            out << format_number(f.xb.edge(i)) << ',' << format_number(f.xb.edge(i + 1)) << ','
                << format_number(f.age.edge(j)) << ',' << format_number(f.age.edge(j + 1)) << ','
                << format_number(f.at(i, j)) << '\n';
}

double CellCycleModel::survival_at(double xb, double a) const {
    if (survival) return survival(xb, a);
    const double top = a_hi ? a_hi(xb) : kInf;
    if (a >= top) return 0.0;
    if (a <= 0.0) return 1.0;
    RealFunction f = [&](double s) { return q(xb, s); };
    return std::clamp(split_quad(f, a, top, breaks, 1e-13), 0.0, 1.0);
}

double CellCycleModel::hazard(double xb, double a) const {
    const double s = survival_at(xb, a);
    return s > 0.0 ? q(xb, a) / s : kInf;
}

double CellCycleModel::flow_at(double xb, double a) const {
    if (flow) return flow(xb, a);
    if (a == 0.0) return xb;
    FlowField field{1, [this](std::span<const double> x, std::span<double> d) { d[0] = g(x[0]); }};
    return rk4_flow(field, {xb}, a, 1e-3)[0];
}

AssumptionReport check_assumptions(const CellCycleModel& m, std::size_t nodes) {
    if (nodes < 3) throw DomainError("check_assumptions: need at least three nodes");
    AssumptionReport r;
    r.positive_growth = true;
    for (std::size_t k = 0; k < nodes; ++k) {
        const double x = m.xb_lo + (2.0 * m.xb_hi - m.xb_lo) * static_cast<double>(k) / static_cast<double>(nodes - 1);
        if (!(m.g(x) > 0.0)) r.positive_growth = false;
    }
    for (std::size_t k = 0; k < nodes; ++k) {
        const double x = m.xb_lo + (m.xb_hi - m.xb_lo) * static_cast<double>(k) / static_cast<double>(nodes - 1);
        const double gx = m.g(x), g2 = m.g(2.0 * x);
        if (std::abs(g2 - 2.0 * gx) > 1e-12 * (1.0 + std::abs(gx))) r.nonlinear_growth = true;
    }
    r.normalized = r.support = r.daughters_inside = r.interior_band = true;
    std::size_t interior = 0, holds = 0;
    for (std::size_t k = 0; k < nodes; ++k) {
        const double xb = m.xb_lo + (m.xb_hi - m.xb_lo) * static_cast<double>(k) / static_cast<double>(nodes - 1);
        const double lo = m.a_lo(xb), hi = m.a_hi(xb);
        if (!(lo < hi) || lo < 0.0) {
            r.support = false;
            continue;
        }
        RealFunction f = [&](double a) { return m.q(xb, a); };
        std::vector<double> br = m.breaks;
        br.push_back(lo);
        br.push_back(hi);
        if (std::abs(split_quad(f, lo, hi, br, 1e-12) - 1.0) > 1e-8) r.normalized = false;
        for (std::size_t s = 0; s < nodes; ++s) {
            const double t = static_cast<double>(s) / static_cast<double>(nodes - 1);
            if (lo > 0.0 && m.q(xb, lo * t * (1.0 - 1e-9)) != 0.0) r.support = false;
            if (m.q(xb, hi * (1.0 + 1e-9) + t * hi) != 0.0) r.support = false;
        }
        const double s_lo = m.division_size(xb, lo), s_hi = m.division_size(xb, hi);
        if (s_lo < m.xb_lo - 1e-12 || s_hi > m.xb_hi + 1e-12) r.daughters_inside = false;
        if (k > 0 && k + 1 < nodes) {
            ++interior;
            if (s_lo < xb && xb < s_hi) ++holds;
        }
    }
    r.interior_fraction = interior ? static_cast<double>(holds) / static_cast<double>(interior) : 0.0;
    r.interior_band = holds == interior;
    return r;
}

CellCycleModel cellcycle_benchmark() {
    CellCycleModel m;
    m.g = [](double) { return 1.0; };
    m.q = [](double, double a) { return a >= 1.0 && a <= 1.2 ? 5.0 : 0.0; };
    m.survival = [](double, double a) { return a <= 1.0 ? 1.0 : (a >= 1.2 ? 0.0 : (1.2 - a) / 0.2); };
    m.flow = [](double xb, double a) { return xb + a; };
    m.a_lo = [](double) { return 1.0; };
    m.a_hi = [](double) { return 1.2; };
    m.xb_lo = 0.5;
    m.xb_hi = 1.4;
    m.breaks = {1.0, 1.2};
    return m;
}

CellCycleRun cellcycle_evolve(const CellCycleModel& m, const AgeSizeDensity& u0, double dt, double T,
                              double record_every) {
    const Grid1D& xg = u0.xb;
    const Grid1D& ag = u0.age;
    const std::size_t nx = xg.n_cells, na = ag.n_cells;
    if (na < 2) throw ShapeError("cellcycle_evolve: need at least two age cells");
    if (std::abs(ag.lo) > 1e-12) throw DomainError("cellcycle_evolve: age grid must start at 0");
    if (std::abs(xg.lo - m.xb_lo) > 1e-12 || std::abs(xg.hi - m.xb_hi) > 1e-12)
        throw ShapeError("cellcycle_evolve: birth-size grid must span [xb_lo, xb_hi]");
    require_nonnegative(u0.masses, "cellcycle_evolve");
    const AssumptionReport rep = check_assumptions(m);
    std::string failed;
    if (!rep.positive_growth) failed += " growth";
    if (!rep.normalized) failed += " normalization";
    if (!rep.support) failed += " support";
    if (!rep.daughters_inside) failed += " daughter-range";
    if (!rep.nonlinear_growth) failed += " linear-growth";
    if (!failed.empty()) throw AssumptionViolationError("cellcycle_evolve: assumptions fail:" + failed);
    for (std::size_t i = 0; i < nx; ++i)
        if (m.a_hi(xg.center(i)) > ag.hi + 1e-12)
            throw PreconditionError("cellcycle_evolve: age grid ends before the cycle-length support");
    const StepPlan plan = plan_steps(dt, T, ag.width(), "cellcycle_evolve");
    const double h = plan.h, c = plan.c;

    // keep[i][j]: surviving fraction of cell (i, j) over one step
    Vec keep(nx * na);
    std::vector<char> divides(na, 0), reachable(na, 0);
    for (std::size_t i = 0; i < nx; ++i) {
        const double xb = xg.center(i);
        RealFunction phi = [&](double a) { return m.survival_at(xb, a); };
        Vec avg(na);
        for (std::size_t j = 0; j < na; ++j) {
            const double a0 = ag.edge(j), a1 = ag.edge(j + 1);
            avg[j] = piece_simpson(phi, a0, a1, m.breaks) / (a1 - a0);
        }
        for (std::size_t j = 0; j < na; ++j) {
            double k = 0.0;
            if (j + 1 < na && avg[j] > 0.0) {
                const double ratio = avg[j + 1] / avg[j];
                k = ratio > 1.0 - 1e-13 ? 1.0 : std::pow(std::max(ratio, 0.0), c);
            }
            keep[i * na + j] = k;
            if (k < 1.0) divides[j] = 1;
            if (k < 1.0 && avg[j] > 0.0) reachable[j] = 1;
        }
    }
    // rebinning of each dividing age slice through S_a at the mid-step age
    std::vector<Rebinning> maps(na);
    for (std::size_t j = 0; j < na; ++j) {
        if (!divides[j]) continue;
        const double a = ag.center(j) + 0.5 * h;
        Vec edges(nx + 1);
        for (std::size_t i = 0; i <= nx; ++i) edges[i] = m.division_size(xg.edge(i), a);
        const double out = std::max(xg.lo - edges.front(), edges.back() - xg.hi);
        if (reachable[j] && out > 1e-9) throw AssumptionViolationError("cellcycle_evolve: daughters leave the birth-size range");
        for (double& e : edges) e = std::clamp(e, xg.lo, xg.hi);
        maps[j] = rebinning(edges, xg);
    }

    CellCycleRun run;
    Vec u = u0.masses, next(nx * na), removed(nx), inject(nx);
    const std::size_t stride = record_stride(record_every, h);
    auto record = [&](std::size_t k) {
        const double t = static_cast<double>(k) * h;
        run.times.push_back(t);
        run.total.push_back(sum(u));
        if (stride && k % stride == 0) {
            run.snapshots.emplace_back(xg, ag, u);
            run.snapshot_times.push_back(t);
        }
    };
    record(0);
    for (std::size_t k = 1; k <= plan.steps; ++k) {
        std::fill(inject.begin(), inject.end(), 0.0);
        double removed_total = 0.0;
        for (std::size_t j = 0; j < na; ++j) {
            if (!divides[j]) continue;
            for (std::size_t i = 0; i < nx; ++i) {
                const double m0 = u[i * na + j];
                const double kept = m0 * keep[i * na + j];
                removed[i] = m0 - kept;
                u[i * na + j] = kept;
                removed_total += removed[i];
            }
            apply_rebinning(maps[j], removed, inject, 2.0);
        }
        for (std::size_t i = 0; i < nx; ++i) {
            const double* row = &u[i * na];
            double* out = &next[i * na];
            out[0] = (1.0 - c) * row[0] + inject[i];
            for (std::size_t j = 1; j + 1 < na; ++j) out[j] = (1.0 - c) * row[j] + c * row[j - 1];
            out[na - 1] = row[na - 1] + c * row[na - 2];
        }
        std::swap(u, next);
        run.removed.push_back(removed_total);
        run.injected.push_back(sum(inject));
        record(k);
    }
    run.final = AgeSizeDensity(xg, ag, u);
    return run;
}

namespace {

template <class D>
ResidualProfile residual_impl(const std::vector<D>& snaps, const Vec& times, double lambda_hat) {
    if (snaps.empty() || snaps.size() != times.size()) throw ShapeError("aeg_residual: snapshots and times differ");
    const D& last = snaps.back();
    const double T = times.back();
    const double norm = sum(last.masses);
    if (!(norm > 0.0)) throw DomainError("aeg_residual: final profile has no mass");
    ResidualProfile r;
    for (std::size_t k = 0; k < snaps.size(); ++k) {
        const double scale = std::exp(-lambda_hat * (times[k] - T)) / norm;
        double d = 0.0;
        for (std::size_t i = 0; i < last.masses.size(); ++i)
            d += std::abs(scale * snaps[k].masses[i] - last.masses[i] / norm);
        r.times.push_back(times[k]);
        r.residual.push_back(d);
    }
    return r;
}

}  // namespace

ResidualProfile aeg_residual(const std::vector<AgeSizeDensity>& snapshots, const Vec& times, double lambda_hat) {
    return residual_impl(snapshots, times, lambda_hat);
}

ResidualProfile aeg_residual(const std::vector<GridDensity>& snapshots, const Vec& times, double lambda_hat) {
    return residual_impl(snapshots, times, lambda_hat);
}

Vec window_maxima(const ResidualProfile& r, double burn_in, double window) {
    if (!(window > 0.0)) throw DomainError("window_maxima: window must be positive");
    Vec out;
    for (std::size_t k = 0; k < r.times.size(); ++k) {
        if (r.times[k] < burn_in) continue;
        const auto w = static_cast<std::size_t>(std::floor((r.times[k] - burn_in) / window));
        if (w >= out.size()) out.resize(w + 1, 0.0);
        out[w] = std::max(out[w], r.residual[k]);
    }
    return out;
}

GridDensity size_age_pushforward(const CellCycleModel& m, const AgeSizeDensity& u, const Grid1D& size_grid) {
    const std::size_t nx = u.xb.n_cells, na = u.age.n_cells;
    Vec out(size_grid.n_cells, 0.0), slice(nx);
    double lost_total = 0.0;
    for (std::size_t j = 0; j < na; ++j) {
        double mass = 0.0;
        for (std::size_t i = 0; i < nx; ++i) mass += (slice[i] = u.at(i, j));
        if (mass == 0.0) continue;
        const double a = u.age.center(j);
        Vec edges(nx + 1);
        for (std::size_t i = 0; i <= nx; ++i) edges[i] = m.flow_at(u.xb.edge(i), a);
        double lost = 0.0;
        apply_rebinning(rebinning(edges, size_grid), slice, out, 1.0, &lost);
        lost_total += lost;
    }
    if (lost_total > 1e-12 * std::max(1.0, u.total()))
        throw DomainError("size_age_pushforward: size grid does not cover the current sizes");
    return {size_grid, std::move(out)};
}

}  // namespace semilab
