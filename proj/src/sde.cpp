#include "semilab/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semilab/errors.hpp"

namespace semilab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLowCut = 1e-8;
constexpr double kHighCut = 1e4;

bool critical(double sigma2, double two_b) {
    return std::isfinite(two_b) && std::abs(sigma2 - two_b) <= 1e-12 * std::max(1.0, std::abs(two_b));
}

void check_critical(const GrowthModel& m) {
    const double s2 = m.sigma2();
    if (critical(s2, 2 * m.b_prime_0))
        throw CriticalCaseError("sigma^2 = 2b'(0): the endpoint test at 0 is indeterminate");
    if (critical(s2, 2 * m.b_prime_inf))
        throw CriticalCaseError("sigma^2 = 2b'(inf): the endpoint test at infinity is indeterminate");
}

double exponent(double bp, double sigma2) { return std::isfinite(bp) ? 2 * bp / sigma2 - 2 : -kInf; }

// integral of g(x) = exp(I(x) - shift) / x^2 over [e^u0, e^u1], in u = ln x
double log_panels(const StationaryDensity& d, double shift, double u0, double u1) {
    if (u1 <= u0) return 0.0;
    auto integrand = [&](double u) { return std::exp(d.log_weight(std::exp(u)) - u - shift); };
    const int panels = std::max(1, static_cast<int>(std::ceil((u1 - u0) / 0.5)));
    double total = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double a = u0 + (u1 - u0) * i / panels;
        const double b = u0 + (u1 - u0) * (i + 1) / panels;
        total += adaptive_quad(integrand, a, b, d.quad_tol * 1e-3).value;
    }
    return total;
}

}  // namespace

GrowthModel logistic_model(double sigma2) {
    if (!(sigma2 >= 0)) throw DomainError("sigma^2 must be nonnegative");
    GrowthModel m;
    m.name = "logistic";
    m.b = [](double x) { return x * (1 - x); };
    m.sigma = std::sqrt(sigma2);
    m.b_prime_0 = 1.0;
    m.b_prime_inf = -kInf;
    m.K = 1.0;
    return m;
}

GrowthModel malthus_model(double sigma2, double rate) {
    if (!(sigma2 >= 0)) throw DomainError("sigma^2 must be nonnegative");
    GrowthModel m;
    m.name = "malthus";
    m.b = [rate](double x) { return rate * x; };
    m.sigma = std::sqrt(sigma2);
    m.b_prime_0 = rate;
    m.b_prime_inf = rate;
    m.K = rate;
    return m;
}

GrowthModel polynomial_drift_model(std::string name, std::vector<double> breaks, std::vector<std::vector<double>> coeffs,
                                   double sigma2) {
    if (breaks.empty() || breaks.size() != coeffs.size())
        throw ShapeError("drift needs one coefficient row per break point");
    if (breaks[0] != 0.0) throw DomainError("drift pieces must start at 0");
    for (std::size_t i = 1; i < breaks.size(); ++i)
        if (!(breaks[i] > breaks[i - 1])) throw DomainError("drift break points must increase");
    if (!(sigma2 >= 0)) throw DomainError("sigma^2 must be nonnegative");

    GrowthModel m;
    m.name = std::move(name);
    m.sigma = std::sqrt(sigma2);
    m.b_prime_0 = coeffs[0].size() > 1 ? coeffs[0][1] : 0.0;
    m.breaks.assign(breaks.begin() + 1, breaks.end());
    const auto& last = coeffs.back();
    int degree = -1;
    for (int k = static_cast<int>(last.size()) - 1; k >= 0; --k)
        if (last[k] != 0.0) {
            degree = k;
            break;
        }
    if (degree >= 2)
        m.b_prime_inf = last[degree] > 0 ? kInf : -kInf;
    else if (degree == 1)
        m.b_prime_inf = last[1];
    else
        m.b_prime_inf = 0.0;
    m.b = [breaks = std::move(breaks), coeffs = std::move(coeffs)](double x) {
        auto it = std::upper_bound(breaks.begin(), breaks.end(), x);
        std::size_t i = it == breaks.begin() ? 0 : static_cast<std::size_t>(it - breaks.begin()) - 1;
        double v = 0.0;
        const auto& c = coeffs[i];
        for (auto k = c.size(); k-- > 0;) v = v * x + c[k];
        return v;
    };
    return m;
}

void validate_model(const GrowthModel& m) {
    if (!m.b) throw ValidationError("model has no drift");
    if (!(m.sigma >= 0) || !std::isfinite(m.sigma)) throw DomainError("sigma must be finite and nonnegative");
    if (std::abs(m.b(0.0)) > 1e-12) throw ValidationError("drift must vanish at 0");
    for (int i = 0; i <= 48; ++i) {
        const double x = std::pow(10.0, -6.0 + 12.0 * i / 48);
        if (m.b(x) > m.K * x * (1 + 1e-12) + 1e-12) throw ValidationError("drift exceeds the declared bound K x");
    }
    const double x = 1e-7;
    const double slope = m.b(x) / x;
    if (std::abs(slope - m.b_prime_0) > 1e-4 * std::max(1.0, std::abs(m.b_prime_0)))
        throw ModelInconsistencyError("declared b'(0) does not match the drift");
}

EmPath em_simulate(const GrowthModel& m, double x0, double dt, double T, RandomStream& stream, double record_every) {
    if (!(dt > 0)) throw StepSizeError("dt must be positive");
    if (!(T >= 0)) throw DomainError("T must be nonnegative");
    if (!(x0 >= 0)) throw DomainError("x0 must be nonnegative");
    const auto n = static_cast<std::size_t>(std::llround(T / dt));
    std::size_t every = 0;
    if (record_every > 0) every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(record_every / dt)));

    EmPath path;
    double x = x0;
    const double sdt = m.sigma * std::sqrt(dt);
    if (every) {
        path.times.push_back(0.0);
        path.values.push_back(x);
    }
    for (std::size_t k = 1; k <= n; ++k) {
        const double xi = stream.normal();
        x = x + m.b(x) * dt + sdt * x * xi;
        if (!std::isfinite(x)) throw IntegrationError("Euler-Maruyama iterate blew up", {x}, k * dt);
        if (x < 0) x = -x;
        if (every && k % every == 0) {
            path.times.push_back(k * dt);
            path.values.push_back(x);
        }
    }
    path.final_value = x;
    path.steps = n;
    return path;
}

double StationaryDensity::log_weight(double x) const {
    if (!(x > 0)) throw DomainError("log weight needs x > 0");
    if (x == 1.0) return 0.0;
    const double s2 = model.sigma2();
    auto integrand = [&](double v) {
        const double s = std::exp(v);
        return 2 * model.b(s) / (s2 * s);
    };
    const double u = std::log(x);
    const double lo = std::min(0.0, u), hi = std::max(0.0, u);
    std::vector<double> cuts{lo};
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / 2.0)));
    for (int i = 1; i < panels; ++i) cuts.push_back(lo + (hi - lo) * i / panels);
    for (double b : model.breaks)
        if (b > 0 && std::log(b) > lo && std::log(b) < hi) cuts.push_back(std::log(b));
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] > cuts[i]) total += adaptive_quad(integrand, cuts[i], cuts[i + 1], 1e-15).value;
    return u > 0 ? total : -total;
}

double StationaryDensity::evaluate(double x) const {
    if (!exists) throw PreconditionError("no stationary density for this model");
    if (!(x > 0)) return 0.0;
    return std::exp(std::log(C) + log_weight(x)) / (x * x);
}

double StationaryDensity::flux(double x) const {
    if (!exists) throw PreconditionError("no stationary density for this model");
    if (!(x > 0)) throw DomainError("flux needs x > 0");
    const double s2 = model.sigma2();
    const double h = 2e-3 * x;
    const double I0 = log_weight(x);
    auto inner = [&](double s) { return 2 * model.b(s) / (s2 * s * s); };
    // sigma^2 x^2 f / 2 = (sigma^2 / 2) C e^{I(x)}, anchored at x
    auto F = [&](int k) {
        if (k == 0) return 0.5 * s2 * std::exp(std::log(C) + I0);
        const double J = k > 0 ? adaptive_quad(inner, x, x + k * h, 1e-16).value
                               : -adaptive_quad(inner, x + k * h, x, 1e-16).value;
        return 0.5 * s2 * std::exp(std::log(C) + I0 + J);
    };
    const double deriv = (-F(2) + 8 * F(1) - 8 * F(-1) + F(-2)) / (12 * h);
    return deriv - model.b(x) * evaluate(x);
}

double StationaryDensity::mass(double a, double b) const {
    if (!exists) throw PreconditionError("no stationary density for this model");
    a = std::max(a, 0.0);
    if (!(b > a)) return 0.0;
    const double logC = std::log(C);
    double total = 0.0;
    double lo = a;
    if (a < kLowCut) {
        const double e = std::min(b, kLowCut);
        // f ~ A x^alpha near 0
        const double fe = evaluate(e);
        const double alpha = exponent_at_0;
        total += fe * e / (alpha + 1) * (1 - std::pow(a / e, alpha + 1));
        lo = e;
    }
    double hi = b;
    if (b > kHighCut) {
        hi = std::max(lo, kHighCut);
        if (std::isfinite(model.b_prime_inf)) {
            const double fh = evaluate(hi);
            const double beta = exponent_at_inf;
            const double far = std::isfinite(b) ? std::pow(b / hi, beta + 1) : 0.0;
            total += fh * hi / (-beta - 1) * (1 - far);
        }
    }
    if (hi > lo) total += log_panels(*this, -logC, std::log(lo), std::log(hi));
    return total;
}

GridDensity StationaryDensity::cell_masses(const Grid1D& grid) const {
    Vec m(grid.n_cells);
    for (std::size_t i = 0; i < grid.n_cells; ++i) m[i] = mass(grid.edge(i), grid.edge(i + 1));
    return {grid, std::move(m)};
}

StationaryDensity stationary_density(const GrowthModel& m, double quad_tol) {
    validate_model(m);
    if (!(m.sigma > 0)) throw DomainError("stationary density needs sigma > 0");
    check_critical(m);
    StationaryDensity d;
    d.model = m;
    d.quad_tol = quad_tol;
    const double s2 = m.sigma2();
    d.exponent_at_0 = exponent(m.b_prime_0, s2);
    d.exponent_at_inf = exponent(m.b_prime_inf, s2);
    d.exists = d.exponent_at_0 > -1 && d.exponent_at_inf < -1;

    // rescale before exponentiating: shift = max of I(x) - 2 ln x, in log x
    const double u_hi = std::log(1e6);
    double shift = -kInf;
    for (int i = 0; i <= 200; ++i) {
        const double u = std::log(kLowCut) + (u_hi - std::log(kLowCut)) * i / 200;
        shift = std::max(shift, d.log_weight(std::exp(u)) - u);
    }
    d.window_integral = log_panels(d, shift, std::log(1e-6), std::log(1e6));
    if (!d.exists) {
        d.window_integral *= std::exp(shift);
        return d;
    }

    double Z = log_panels(d, shift, std::log(kLowCut), std::log(kHighCut));
    auto g = [&](double x) { return std::exp(d.log_weight(x) - shift) / (x * x); };
    Z += g(kLowCut) * kLowCut / (d.exponent_at_0 + 1);
    if (std::isfinite(m.b_prime_inf)) Z += g(kHighCut) * kHighCut / (-d.exponent_at_inf - 1);
    if (d.window_integral > Z * (1 + 1e-6))
        throw ModelInconsistencyError("window mass exceeds the total; declared asymptotics do not match the drift");
    d.C = std::exp(-shift) / Z;
    d.window_integral *= std::exp(shift);
    return d;
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::grows: return "grows";
        case Regime::extinct: return "extinct";
        case Regime::bistable: return "bistable";
        case Regime::stationary: return "stationary";
    }
    return "unknown";
}

Classification classify(const GrowthModel& m) {
    validate_model(m);
    check_critical(m);
    const double s2 = m.sigma2();
    const double A = 2 * m.b_prime_0, B = 2 * m.b_prime_inf;
    Classification c;
    c.b0 = m.b_prime_0 - s2 / 2;
    c.binf = m.b_prime_inf - s2 / 2;
    if (s2 < std::min(A, B))
        c.regime = Regime::grows;
    else if (s2 > std::max(A, B))
        c.regime = Regime::extinct;
    else if (A < s2 && s2 < B)
        c.regime = Regime::bistable;
    else
        c.regime = Regime::stationary;
    return c;
}

double l1_with_outside(const Vec& counts, std::size_t total, const GridDensity& masses) {
    if (counts.size() != masses.masses.size()) throw ShapeError("counts and masses differ in length");
    if (total == 0) throw DegenerateInputError("no samples");
    const double N = static_cast<double>(total);
    double d = 0.0, inside = 0.0, model_inside = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        d += std::abs(counts[i] / N - masses.masses[i]);
        inside += counts[i];
        model_inside += masses.masses[i];
    }
    return d + std::abs((N - inside) / N - (1 - model_inside));
}

EmpiricalComparison empirical_vs_stationary(const GrowthModel& m, double x0, double dt, double T, double burn_in,
                                            double sample_every, const Grid1D& grid, RandomStream& stream) {
    if (classify(m).regime != Regime::stationary) throw PreconditionError("model is not in the stationary regime");
    if (!(burn_in >= 0 && burn_in < T)) throw DomainError("burn-in must lie in [0, T)");
    if (!(sample_every > 0)) throw DomainError("sample spacing must be positive");
    auto f = stationary_density(m);
    auto path = em_simulate(m, x0, dt, T, stream, sample_every);

    EmpiricalComparison out;
    Vec counts(grid.n_cells, 0.0);
    for (std::size_t i = 0; i < path.times.size(); ++i) {
        if (path.times[i] < burn_in - 1e-9) continue;
        ++out.samples;
        const double x = path.values[i];
        if (grid.contains(x))
            counts[grid.cell_of(x)] += 1.0;
        else
            ++out.out_of_range;
    }
    out.stationary = f.cell_masses(grid);
    out.distance = l1_with_outside(counts, out.samples, out.stationary);
    for (auto& c : counts) c /= static_cast<double>(out.samples);
    out.empirical = GridDensity(grid, std::move(counts));
    return out;
}

}  // namespace semilab
