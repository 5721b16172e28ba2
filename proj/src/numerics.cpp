#include "semilab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <thread>

#include "semilab/errors.hpp"

namespace semilab {

Vec FlowField::operator()(const Vec& x) const {
    Vec out(dimension);
    evaluate(x, out);
    return out;
}

Rk4Stepper::Rk4Stepper(const FlowField& field)
    : field_(&field),
      k1_(field.dimension),
      k2_(field.dimension),
      k3_(field.dimension),
      k4_(field.dimension),
      tmp_(field.dimension) {}

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void Rk4Stepper::step(std::span<double> x, double h) {
    const std::size_t n = x.size();
    const auto& f = field_->evaluate;
    f(x, k1_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * h * k1_[i];
    f(tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * h * k2_[i];
    f(tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + h * k3_[i];
    f(tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i)
        tmp_[i] = x[i] + (h / 6.0) * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    if (!all_finite(tmp_)) {
        throw IntegrationError("non-finite value in flow field", Vec(x.begin(), x.end()),
                               std::numeric_limits<double>::quiet_NaN());
    }
    std::copy(tmp_.begin(), tmp_.end(), x.begin());
}

void Rk4Stepper::advance(std::span<double> x, double t, double dt) {
    if (!(dt > 0.0)) throw DomainError("rk4: step must be positive");
    if (!(t >= 0.0)) throw DomainError("rk4: duration must be nonnegative");
    const auto full = static_cast<std::uint64_t>(std::floor(t / dt + 1e-9));
    double done = 0.0;
    for (std::uint64_t k = 0; k < full; ++k) {
        try {
            step(x, dt);
        } catch (const IntegrationError& e) {
            throw IntegrationError(e.what(), e.last_state(), done);
        }
        done += dt;
    }
    const double rest = t - static_cast<double>(full) * dt;
    if (rest > 1e-12 * std::max(dt, t)) step(x, rest);
}

Vec rk4_flow(const FlowField& field, const Vec& x0, double t, double dt) {
    if (x0.size() != field.dimension) throw ShapeError("rk4_flow: dimension mismatch");
    Vec x = x0;
    Rk4Stepper stepper(field);
    stepper.advance(x, t, dt);
    return x;
}

namespace {

constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.0};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

Panel gk15(const RealFunction& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kronrod = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const double s = f(c - dx) + f(c + dx);
        kronrod += kWgk[j] * s;
        if (j % 2 == 1) gauss += kWg[j / 2] * s;
    }
    return {a, b, kronrod * h, std::abs((kronrod - gauss) * h)};
}

QuadratureResult integrate_finite(const RealFunction& f, double a, double b, double tol,
                                  int max_intervals) {
    std::priority_queue<Panel> heap;
    Panel first = gk15(f, a, b);
    double value = first.value;
    double error = first.error;
    heap.push(first);
    int intervals = 1;
    auto done = [&] {
        const double floor = 50.0 * std::numeric_limits<double>::epsilon() * std::abs(value);
        return error <= std::max(tol, floor);
    };
    while (!done()) {
        if (intervals >= max_intervals || !std::isfinite(value)) {
            throw ToleranceNotMetError("adaptive_quad: tolerance not met after " +
                                           std::to_string(intervals) + " intervals",
                                       value, error);
        }
        Panel worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        Panel left = gk15(f, worst.a, mid);
        Panel right = gk15(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++intervals;
        // re-sum occasionally so cancellation in the running totals cannot drift
        if (intervals % 64 == 0) {
            auto copy = heap;
            value = 0.0;
            error = 0.0;
            while (!copy.empty()) {
                value += copy.top().value;
                error += copy.top().error;
                copy.pop();
            }
        }
    }
    return {value, error};
}

}  // namespace

QuadratureResult adaptive_quad(const RealFunction& f, double a, double b, double tol,
                               QuadOptions options) {
    if (!(tol > 0.0)) throw DomainError("adaptive_quad: tolerance must be positive");
    if (!std::isfinite(a)) throw DomainError("adaptive_quad: lower limit must be finite");
    if (std::isinf(b) && b > 0) {
        RealFunction g = [&f, a](double u) {
            const double one_minus = 1.0 - u;
            return f(a + u / one_minus) / (one_minus * one_minus);
        };
        return integrate_finite(g, 0.0, 1.0, tol, options.max_intervals);
    }
    if (!(a < b)) throw DomainError("adaptive_quad: requires a < b");
    if (options.endpoints == EndpointTreatment::sqrt_singular) {
        const double m = 0.5 * (a + b);
        RealFunction left = [&f, a](double s) { return 2.0 * s * f(a + s * s); };
        RealFunction right = [&f, b](double s) { return 2.0 * s * f(b - s * s); };
        const double half = std::sqrt(m - a);
        const auto l = integrate_finite(left, 0.0, half, 0.5 * tol, options.max_intervals);
        const auto r = integrate_finite(right, 0.0, std::sqrt(b - m), 0.5 * tol, options.max_intervals);
        return {l.value + r.value, l.error_estimate + r.error_estimate};
    }
    return integrate_finite(f, a, b, tol, options.max_intervals);
}

double simpson(const RealFunction& f, double a, double b, int panels) {
    if (panels < 2) panels = 2;
    if (panels % 2) ++panels;
    const double h = (b - a) / panels;
    double odd = 0.0, even = 0.0;
    for (int i = 1; i < panels; i += 2) odd += f(a + h * i);
    for (int i = 2; i < panels; i += 2) even += f(a + h * i);
    return (h / 3.0) * (f(a) + f(b) + 4.0 * odd + 2.0 * even);
}

double bisect_root(const RealFunction& f, double lo, double hi, double tol) {
    if (!(tol > 0.0)) throw DomainError("bisect_root: tolerance must be positive");
    if (lo > hi) std::swap(lo, hi);
    double flo = f(lo);
    const double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (!(flo * fhi < 0.0)) throw BracketError("bisect_root: no sign change on bracket");
    while (hi - lo > 2.0 * tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
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

double sample_exponential(RandomStream& stream, double rate) {
    if (!(rate > 0.0)) throw DomainError("sample_exponential: rate must be positive");
    return -std::log(stream.uniform()) / rate;
}

std::uint64_t sample_poisson_count(RandomStream& stream, double mean) {
    if (!(mean >= 0.0)) throw DomainError("sample_poisson_count: mean must be nonnegative");
    if (mean == 0.0) return 0;
    if (mean < 10.0) {
        const double limit = std::exp(-mean);
        std::uint64_t k = 0;
        double p = stream.uniform();
        while (p > limit) {
            ++k;
            p *= stream.uniform();
        }
        return k;
    }
    // Hormann's transformed rejection (PTRS).
    const double smu = std::sqrt(mean);
    const double b = 0.931 + 2.53 * smu;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
        const double u = stream.uniform() - 0.5;
        const double v = stream.uniform();
        const double us = 0.5 - std::abs(u);
        const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            -mean + k * log_mean - std::lgamma(k + 1.0)) {
            return static_cast<std::uint64_t>(k);
        }
    }
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace semilab
