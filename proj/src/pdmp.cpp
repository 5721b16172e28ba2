#include "semilab/pdmp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semilab/errors.hpp"

namespace semilab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGuardResolution = 1e-10;

// Grid samples at t = k * every, k = 0, 1, ...
struct Recorder {
    Trajectory* tr = nullptr;
    double every = 0.0;
    std::size_t next = 0;

    bool active() const noexcept { return every > 0; }
    double next_time() const noexcept { return active() ? static_cast<double>(next) * every : kInf; }
    void take(const HybridState& s) {
        tr->times.push_back(next_time());
        tr->positions.push_back(s.x);
        tr->regimes.push_back(s.regime);
        ++next;
    }
};

double guard_value(const ThresholdRule& r, std::span<const double> x) {
    const double g = r.guard(x) - r.theta;
    return r.direction == Crossing::downward ? g : -g;
}

// Flows s for up to `duration` in its regime. Stops at the first threshold
// crossing (located by bisection) and returns that rule's index, else -1.
int flow_segment(const SwitchingModel& m, Rk4Stepper& stepper, HybridState& s, double duration, Recorder& rec) {
    const double t_end = s.t + duration;
    Vec prev(s.x.size()), trial(s.x.size());
    while (s.t < t_end) {
        while (rec.active() && rec.next_time() <= s.t + 1e-12 * std::max(1.0, s.t)) rec.take(s);
        double h = std::min(m.max_step, t_end - s.t);
        const double to_record = rec.next_time() - s.t;
        if (to_record > 0 && to_record < h) h = to_record;
        prev = s.x;
        stepper.step(s.x, h);
        if (m.region && !m.region->contains(s.x, m.region_tol))
            throw ModelInconsistencyError("trajectory left the invariant region at t = " + format_number(s.t + h));
        for (std::size_t r = 0; r < m.rules.size(); ++r) {
            const auto& rule = m.rules[r];
            if (rule.from != s.regime) continue;
            if (!(guard_value(rule, prev) > 0 && guard_value(rule, s.x) <= 0)) continue;
            double lo = 0.0, hi = h;
            while (hi - lo > kGuardResolution) {
                const double mid = 0.5 * (lo + hi);
                trial = prev;
                stepper.step(trial, mid);
                if (guard_value(rule, trial) <= 0)
                    hi = mid;
                else
                    lo = mid;
            }
            trial = prev;
            stepper.step(trial, hi);
            s.x = trial;
            s.t += hi;
            return static_cast<int>(r);
        }
        s.t = (h == t_end - s.t) ? t_end : s.t + h;
    }
    while (rec.active() && rec.next_time() <= s.t + 1e-12 * std::max(1.0, s.t)) rec.take(s);
    return -1;
}

bool has_random_exit(const SwitchingModel& m, int k) {
    for (const auto& q : m.rates[k])
        if (q) return true;
    return false;
}

int choose_target(const SwitchingModel& m, int k, std::span<const double> x, double total, RandomStream& stream) {
    double u = stream.uniform() * total;
    int last = -1;
    for (std::size_t l = 0; l < m.rates[k].size(); ++l) {
        if (static_cast<int>(l) == k || !m.rates[k][l]) continue;
        const double q = m.rates[k][l](x);
        if (q <= 0) continue;
        last = static_cast<int>(l);
        if (u < q) return last;
        u -= q;
    }
    return last;
}

void check_model(const SwitchingModel& m) {
    const auto n = m.n_regimes();
    if (n == 0) throw ValidationError("switching model has no regimes");
    if (m.rates.size() != n) throw ShapeError("rate table must have one row per regime");
    for (const auto& row : m.rates)
        if (row.size() != n) throw ShapeError("rate table must be square");
    for (const auto& f : m.flows)
        if (f.dimension != m.flows[0].dimension) throw ShapeError("all regimes must share the state dimension");
    for (const auto& r : m.rules)
        if (r.from < 0 || r.to < 0 || r.from >= static_cast<int>(n) || r.to >= static_cast<int>(n) || !r.guard)
            throw ValidationError("threshold rule refers to an unknown regime");
    if (!(m.max_step > 0)) throw StepSizeError("flow step must be positive");
}

}  // namespace

bool Box::contains(std::span<const double> x, double tol) const {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    return true;
}

double SwitchingModel::exit_rate(int k, std::span<const double> x) const {
    double total = 0.0;
    for (std::size_t l = 0; l < rates[k].size(); ++l)
        if (static_cast<int>(l) != k && rates[k][l]) {
            const double q = rates[k][l](x);
            if (q < 0) throw ValidationError("negative switching rate");
            total += q;
        }
    return total;
}

void verify_rate_bound(const SwitchingModel& m, int points_per_axis) {
    check_model(m);
    if (!m.region) throw PreconditionError("rate bound scan needs an invariant region");
    const auto d = m.region->lo.size();
    std::vector<int> idx(d, 0);
    Vec x(d);
    while (true) {
        for (std::size_t i = 0; i < d; ++i)
            x[i] = m.region->lo[i] + (m.region->hi[i] - m.region->lo[i]) * idx[i] / (points_per_axis - 1);
        for (int k = 0; k < static_cast<int>(m.n_regimes()); ++k)
            if (m.exit_rate(k, x) > m.Lambda * (1 + 1e-12))
                throw BoundViolationError("exit rate exceeds the declared bound");
        std::size_t i = 0;
        while (i < d && ++idx[i] == points_per_axis) idx[i++] = 0;
        if (i == d) break;
    }
}

double next_jump_time(const FlowField& flow, const StateFunction& psi, HybridState& state, RandomStream& stream,
                      double Lambda, double horizon, double max_step) {
    if (!(Lambda > 0)) throw DomainError("thinning needs a positive bound");
    Rk4Stepper stepper(flow);
    const double t0 = state.t;
    while (true) {
        const double tau = sample_exponential(stream, Lambda);
        if (state.t + tau > t0 + horizon) {
            stepper.advance(state.x, t0 + horizon - state.t, max_step);
            state.t = t0 + horizon;
            return kInf;
        }
        stepper.advance(state.x, tau, max_step);
        state.t += tau;
        const double r = psi(state.x);
        if (r > Lambda * (1 + 1e-12)) throw BoundViolationError("jump rate exceeds the thinning bound");
        if (r < 0) throw ValidationError("negative jump rate");
        if (stream.uniform() * Lambda < r) return state.t - t0;
    }
}

Trajectory simulate_switching(const SwitchingModel& m, const HybridState& initial, double T, RandomStream& stream,
                              double record_every) {
    check_model(m);
    if (!(T > 0)) throw DomainError("T must be positive");
    if (initial.regime < 0 || initial.regime >= static_cast<int>(m.n_regimes()))
        throw DomainError("initial regime out of range");
    if (initial.x.size() != m.flows[0].dimension) throw ShapeError("initial state has the wrong dimension");
    if (m.region && !m.region->contains(initial.x, m.region_tol))
        throw ModelInconsistencyError("initial state lies outside the invariant region");

    Trajectory tr;
    Recorder rec{&tr, record_every, 0};
    HybridState s = initial;
    std::vector<Rk4Stepper> steppers;
    for (const auto& f : m.flows) steppers.emplace_back(f);
    double last_jump = s.t;

    while (s.t < T) {
        const int k = s.regime;
        const bool random = has_random_exit(m, k) && m.Lambda > 0;
        double tau = random ? sample_exponential(stream, m.Lambda) : kInf;
        double dur = std::min(tau, T - s.t);
        if (!random) dur = std::min(dur, last_jump + m.stall_horizon - s.t);
        const int fired = flow_segment(m, steppers[k], s, dur, rec);
        if (fired >= 0) {
            const auto& rule = m.rules[fired];
            tr.jumps.push_back({s.t, s.x, k, rule.to, true});
            s.regime = rule.to;
            last_jump = s.t;
            continue;
        }
        if (s.t >= T) break;
        if (!random) {
            if (s.t - last_jump >= m.stall_horizon)
                throw StallError("no threshold crossing within the stall horizon (t = " + format_number(s.t) + ")");
            continue;
        }
        const double r = m.exit_rate(k, s.x);
        if (r > m.Lambda * (1 + 1e-12)) throw BoundViolationError("exit rate exceeds the thinning bound");
        if (stream.uniform() * m.Lambda < r) {
            const int to = choose_target(m, k, s.x, r, stream);
            if (to >= 0) {
                tr.jumps.push_back({s.t, s.x, k, to, false});
                s.regime = to;
                last_jump = s.t;
            }
        }
    }
    tr.final = s;
    return tr;
}

GeneVariant gene_variant_from_string(const std::string& s) {
    if (s == "1d") return GeneVariant::one_d;
    if (s == "2d") return GeneVariant::two_d;
    if (s == "3stage") return GeneVariant::three_stage;
    throw DomainError("unknown gene variant '" + s + "' (expected 1d, 2d or 3stage)");
}

std::string to_string(GeneVariant v) {
    switch (v) {
        case GeneVariant::one_d: return "1d";
        case GeneVariant::two_d: return "2d";
        case GeneVariant::three_stage: return "3stage";
    }
    return "unknown";
}

Box gene_invariant_box(GeneVariant v, const GeneParams& p) {
    switch (v) {
        case GeneVariant::one_d: return {{0.0}, {p.P / p.mu}};
        case GeneVariant::two_d: return {{0.0, 0.0}, {p.R / p.muR, p.P * p.R / (p.muP * p.muR)}};
        case GeneVariant::three_stage: {
            const double a1 = p.A / (p.R + p.muPR);
            const double a2 = p.R * a1 / p.muR;
            return {{0.0, 0.0, 0.0}, {a1, a2, p.P * a2 / p.muP}};
        }
    }
    throw DomainError("unknown gene variant");
}

SwitchingModel gene_switching_model(GeneVariant v, const GeneParams& p) {
    SwitchingModel m;
    auto flow = [&](int i) -> FlowField {
        const double on = i;
        switch (v) {
            case GeneVariant::one_d:
                return {1, [P = p.P, mu = p.mu, on](std::span<const double> x, std::span<double> d) {
                            d[0] = P * on - mu * x[0];
                        }};
            case GeneVariant::two_d:
                return {2, [p, on](std::span<const double> x, std::span<double> d) {
                            d[0] = p.R * on - p.muR * x[0];
                            d[1] = p.P * x[0] - p.muP * x[1];
                        }};
            case GeneVariant::three_stage:
                return {3, [p, on](std::span<const double> x, std::span<double> d) {
                            d[0] = p.A * on - (p.R + p.muPR) * x[0];
                            d[1] = p.R * x[0] - p.muR * x[1];
                            d[2] = p.P * x[1] - p.muP * x[2];
                        }};
        }
        throw DomainError("unknown gene variant");
    };
    m.flows = {flow(0), flow(1)};
    m.rates.assign(2, std::vector<StateFunction>(2));
    m.rates[0][1] = p.q01;
    m.rates[1][0] = p.q10;
    m.Lambda = p.rate_bound;
    m.region = gene_invariant_box(v, p);
    return m;
}

double gene_active_cdf(const GeneParams& p, double x0, double t) {
    if (t <= 0) return 0.0;
    const double eq = p.P / p.mu;
    auto integrand = [&](double s) {
        const double x = eq + (x0 - eq) * std::exp(-p.mu * s);
        return p.q10(std::span<const double>(&x, 1));
    };
    return 1.0 - std::exp(-adaptive_quad(integrand, 0.0, t, 1e-13).value);
}

namespace {

// Active duration of the 1-D gene by inverting int_0^tau q10(x(s)) ds = E.
double rescaled_active_time(const GeneParams& p, double x0, double E, double horizon) {
    const double eq = p.P / p.mu;
    auto x_at = [&](double s) { return eq + (x0 - eq) * std::exp(-p.mu * s); };
    auto rate = [&](double s) {
        const double x = x_at(s);
        return p.q10(std::span<const double>(&x, 1));
    };
    auto Phi = [&](double a, double b) { return b > a ? adaptive_quad(rate, a, b, 1e-14).value : 0.0; };
    double lo = 0.0, hi = 1.0, acc_hi = Phi(0.0, 1.0);
    double acc_lo = 0.0;
    while (acc_hi < E) {
        if (hi > horizon) throw StallError("gene never deactivates within the stall horizon");
        acc_lo = acc_hi;
        lo = hi;
        acc_hi += Phi(hi, 2 * hi);
        hi *= 2;
    }
    // safeguarded Newton on [lo, hi] with Phi(lo) = acc_lo <= E <= Phi(hi)
    double a = lo, acc_a = acc_lo;
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
        const double q = rate(a);
        double next = q > 0 ? a + (E - acc_a) / q : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double acc_next = acc_lo + Phi(lo, next);
        if (std::abs(acc_next - E) <= 1e-15 * std::max(1.0, E)) return next;
        if (acc_next < E) {
            lo = next;
            acc_lo = acc_next;
        } else {
            hi = next;
        }
        a = next;
        acc_a = acc_next;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

ThresholdGeneResult simulate_threshold_gene(GeneVariant v, const GeneParams& p, double theta, RandomStream& stream,
                                            double T, ActiveSampler sampler, double record_every) {
    if (!p.q10) throw ValidationError("threshold gene needs an inactivation rate");
    if (!(theta > 0)) throw DomainError("theta must be positive");
    if (!(T > 0)) throw DomainError("T must be positive");
    const Box box = gene_invariant_box(v, p);
    const std::size_t protein = box.lo.size() - 1;
    if (theta > box.hi[protein] * (1 + 1e-12))
        throw StallError("theta lies above the reachable protein level " + format_number(box.hi[protein]));

    SwitchingModel m = gene_switching_model(v, p);
    m.rates[0][1] = nullptr;
    if (v != GeneVariant::one_d) {
        m.rates[1][0] = [q10 = p.q10, protein, theta](std::span<const double> x) {
            return x[protein] <= theta ? 0.0 : q10(x);
        };
    }
    m.rules.push_back({0, 1, [protein](std::span<const double> x) { return x[protein]; }, theta, Crossing::downward});
    m.stall_horizon = 1e3 / std::min({p.mu, p.muR, p.muP});

    // activation state: protein at theta, upstream species in balance
    HybridState s;
    s.regime = 1;
    switch (v) {
        case GeneVariant::one_d: s.x = {theta}; break;
        case GeneVariant::two_d: s.x = {std::min(p.muP * theta / p.P, box.hi[0]), theta}; break;
        case GeneVariant::three_stage: {
            const double x2 = std::min(p.muP * theta / p.P, box.hi[1]);
            s.x = {std::min(p.muR * x2 / p.R, box.hi[0]), x2, theta};
            break;
        }
    }

    ThresholdGeneResult out;
    if (v != GeneVariant::one_d) {
        out.trajectory = simulate_switching(m, s, T, stream, record_every);
    } else {
        // active phases in closed form, inactive phases by the guarded flow
        Trajectory& tr = out.trajectory;
        Recorder rec{&tr, record_every, 0};
        Rk4Stepper inactive(m.flows[0]);
        const double eq = p.P / p.mu;
        while (s.t < T) {
            const double x_on = s.x[0];
            double tau;
            if (sampler == ActiveSampler::time_rescaling) {
                tau = rescaled_active_time(p, x_on, sample_exponential(stream, 1.0), m.stall_horizon);
            } else {
                HybridState probe{{x_on}, 1, 0.0};
                tau = next_jump_time(m.flows[1], p.q10, probe, stream, p.rate_bound, m.stall_horizon, m.max_step);
                if (!std::isfinite(tau)) throw StallError("gene never deactivates within the stall horizon");
            }
            const double t_off = std::min(s.t + tau, T);
            while (rec.active() && rec.next_time() <= t_off) {
                HybridState at{{eq + (x_on - eq) * std::exp(-p.mu * (rec.next_time() - s.t))}, 1, rec.next_time()};
                rec.take(at);
            }
            if (s.t + tau >= T) {
                s.x[0] = eq + (x_on - eq) * std::exp(-p.mu * (T - s.t));
                s.t = T;
                break;
            }
            s.x[0] = eq + (x_on - eq) * std::exp(-p.mu * tau);
            s.t += tau;
            s.regime = 0;
            tr.jumps.push_back({s.t, s.x, 1, 0, false});
            if (!(s.x[0] > theta)) throw StallError("protein at deactivation is not above theta");
            const int fired = flow_segment(m, inactive, s, std::min(m.stall_horizon, T - s.t), rec);
            if (fired < 0) {
                if (s.t >= T) break;
                throw StallError("no threshold crossing within the stall horizon");
            }
            s.regime = 1;
            s.x[0] = theta;  // guard located to 1e-10; snap onto the level
            tr.jumps.push_back({s.t, s.x, 0, 1, true});
        }
        tr.final = s;
    }

    // pair up activation / deactivation events into cycles
    const auto& J = out.trajectory.jumps;
    double t_on = 0.0, x_on = theta;
    bool have_on = true;
    for (std::size_t i = 0; i < J.size(); ++i) {
        if (J[i].from == 1 && J[i].to == 0 && have_on) {
            GeneCycle c;
            c.x_on = x_on;
            c.active = J[i].t - t_on;
            c.x_off = J[i].x[protein];
            if (i + 1 < J.size() && J[i + 1].forced) {
                c.inactive = J[i + 1].t - J[i].t;
                out.cycles.push_back(c);
                t_on = J[i + 1].t;
                x_on = J[i + 1].x[protein];
                ++i;
            } else {
                have_on = false;
            }
        }
    }
    return out;
}

TelegraphSample telegraph_simulate(double lambda, double x0, int v0, double T, RandomStream& stream) {
    if (!(lambda > 0)) throw DomainError("telegraph rate must be positive");
    if (v0 != 1 && v0 != -1) throw DomainError("telegraph velocity must be -1 or 1");
    if (!(T >= 0)) throw DomainError("T must be nonnegative");
    TelegraphSample s{x0, v0, 0};
    double t = 0.0;
    while (true) {
        const double tau = sample_exponential(stream, lambda);
        if (t + tau >= T) {
            s.x += s.v * (T - t);
            return s;
        }
        s.x += s.v * tau;
        t += tau;
        s.v = -s.v;
        ++s.jumps;
    }
}

std::vector<double> telegraph_ensemble(double lambda, double x0, double T, std::size_t paths, const RandomStream& root,
                                       unsigned threads) {
    std::vector<double> out(paths);
    parallel_for(paths, threads, [&](std::size_t i) {
        auto stream = root.child(i);
        const int v0 = stream.uniform() < 0.5 ? -1 : 1;
        out[i] = telegraph_simulate(lambda, x0, v0, T, stream).x;
    });
    return out;
}

Grid1D centred_grid(double half_width, double dx) {
    if (!(dx > 0) || !(half_width > 0)) throw DomainError("grid needs positive width and spacing");
    const auto half = static_cast<std::size_t>(std::ceil(half_width / dx - 1e-9));
    const std::size_t n = 2 * half + 1;
    const double w = static_cast<double>(n) * dx / 2;
    return Grid1D(-w, w, n);
}

KacResult kac_pde_solve(double lambda, const ProductDensity& u0, double dt, double T) {
    if (u0.n_states != 2) throw ShapeError("Kac system needs two velocity states");
    if (!(lambda >= 0)) throw DomainError("switching rate must be nonnegative");
    if (!(dt > 0) || !(T >= 0)) throw DomainError("need dt > 0 and T >= 0");
    const double dx = u0.grid.width();
    if (dt > dx * (1 + 1e-12)) throw StepSizeError("CFL violated: dt must not exceed dx");
    const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    const double h = steps ? T / static_cast<double>(steps) : dt;
    double c = h / dx;
    if (std::abs(c - 1.0) < 1e-12) c = 1.0;
    const double decay = std::exp(-2 * lambda * h);
    const std::size_t n = u0.grid.n_cells;

    KacResult out{u0, {}, steps};
    Vec left(n), right(n);
    for (std::size_t k = 0; k < steps; ++k) {
        auto& u = out.u;
        for (std::size_t i = 0; i < n; ++i) {
            left[i] = u.at(i, 0);
            right[i] = u.at(i, 1);
        }
        // upwind transport: state 1 moves right, state 0 moves left
        for (std::size_t i = 0; i < n; ++i) {
            const double from_left = i > 0 ? right[i - 1] : 0.0;
            const double from_right = i + 1 < n ? left[i + 1] : 0.0;
            u.at(i, 1) = c == 1.0 ? from_left : (1 - c) * right[i] + c * from_left;
            u.at(i, 0) = c == 1.0 ? from_right : (1 - c) * left[i] + c * from_right;
        }
        // exact exchange: the sum is conserved, the difference decays
        for (std::size_t i = 0; i < n; ++i) {
            const double s = u.at(i, 0) + u.at(i, 1);
            const double d = (u.at(i, 1) - u.at(i, 0)) * decay;
            u.at(i, 1) = 0.5 * (s + d);
            u.at(i, 0) = 0.5 * (s - d);
        }
        out.mass.push_back(u.total());
    }
    return out;
}

GridDensity PureJumpPath::occupation(const Grid1D& grid) const {
    Vec m(grid.n_cells, 0.0);
    double t = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k) {
        const double end = k < jump_times.size() ? jump_times[k] : T;
        if (grid.contains(states[k])) m[grid.cell_of(states[k])] += end - t;
        t = end;
    }
    for (auto& v : m) v /= T;
    return {grid, std::move(m)};
}

std::vector<double> PureJumpPath::holding_times() const {
    std::vector<double> h;
    double t = 0.0;
    for (double s : jump_times) {
        h.push_back(s - t);
        t = s;
    }
    return h;
}

PureJumpPath kangaroo_simulate(const RealFunction& psi, double Lambda, const JumpSampler& jump, double x0, double T,
                               RandomStream& stream) {
    if (!(T > 0)) throw DomainError("T must be positive");
    PureJumpPath p;
    p.T = T;
    p.states.push_back(x0);
    double t = 0.0, x = x0;
    while (true) {
        const double r = psi(x);
        if (r > Lambda * (1 + 1e-12)) throw BoundViolationError("jump rate exceeds the declared bound");
        if (r < 0) throw ValidationError("negative jump rate");
        if (r == 0) break;
        const double tau = sample_exponential(stream, r);
        if (t + tau > T) break;
        t += tau;
        x = jump(x, stream);
        p.jump_times.push_back(t);
        p.states.push_back(x);
    }
    return p;
}

double SemiMarkovKangaroo::holding_cdf(double x, double a) const {
    if (a <= 0) return 0.0;
    if (cdf) return cdf(x, a);
    auto f = [&](double r) { return q(x, r); };
    double total = 0.0, lo = 0.0;
    for (double b : breaks) {
        if (b <= lo) continue;
        if (b >= a) break;
        total += adaptive_quad(f, lo, b, 1e-14).value;
        lo = b;
    }
    if (a > lo) total += adaptive_quad(f, lo, a, 1e-14).value;
    return std::min(total, 1.0);
}

double SemiMarkovKangaroo::hazard(double x, double a) const {
    const double surv = 1.0 - holding_cdf(x, a);
    if (!(surv > 0)) throw DomainError("hazard undefined where the survival function vanishes");
    return q(x, a) / surv;
}

double SemiMarkovKangaroo::sample_holding(double x, RandomStream& stream) const {
    const double u = stream.uniform();
    double lo = 0.0, hi = 1.0;
    while (holding_cdf(x, hi) < u) {
        lo = hi;
        hi *= 2;
        if (hi > 1e12) throw SamplerError("holding-time CDF could not be bracketed");
    }
    double a = 0.5 * (lo + hi);
    for (int it = 0; it < 300 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        const double f = holding_cdf(x, a) - u;
        if (f == 0) return a;
        if (f < 0)
            lo = a;
        else
            hi = a;
        const double d = q(x, a);
        double next = d > 0 ? a - f / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        a = next;
    }
    return a;
}

void SemiMarkovKangaroo::check_normalized(double x, double tol) const {
    auto f = [&](double r) { return q(x, r); };
    double total = 0.0, lo = 0.0;
    for (double b : breaks) {
        if (b <= lo) continue;
        total += adaptive_quad(f, lo, b, 1e-14).value;
        lo = b;
    }
    total += adaptive_quad(f, lo, kInf, 1e-14).value;
    if (std::abs(total - 1.0) > tol) throw ValidationError("holding density does not integrate to 1");
}

PureJumpPath semi_markov_simulate(const SemiMarkovKangaroo& m, double x0, double T, RandomStream& stream) {
    if (!(T > 0)) throw DomainError("T must be positive");
    if (!m.q || !m.jump) throw ValidationError("semi-Markov model needs a holding density and a jump sampler");
    PureJumpPath p;
    p.T = T;
    p.states.push_back(x0);
    double t = 0.0, x = x0;
    while (true) {
        const double h = m.sample_holding(x, stream);
        if (t + h > T) break;
        t += h;
        x = m.jump(x, stream);
        p.jump_times.push_back(t);
        p.states.push_back(x);
    }
    return p;
}

std::vector<double> sampled_ages(const PureJumpPath& path, double burn_in, double dt) {
    if (!(dt > 0)) throw DomainError("sampling step must be positive");
    std::vector<double> ages;
    std::size_t j = 0;
    for (std::size_t k = 0;; ++k) {
        const double s = burn_in + static_cast<double>(k) * dt;
        if (s > path.T) break;
        while (j < path.jump_times.size() && path.jump_times[j] <= s) ++j;
        ages.push_back(s - (j ? path.jump_times[j - 1] : 0.0));
    }
    return ages;
}

namespace {

struct VesicleRun {
    bool captured = false;
    double duration = 0.0;
};

VesicleRun vesicle_cycle(const VesicleParams& p, RandomStream& stream) {
    int state = 2;  // velocity +1
    double x = 0.0, t = 0.0;
    for (std::size_t events = 0;; ++events) {
        if (events > 100000000) throw StallError("vesicle cycle did not terminate");
        const int v = state - 1;
        const double out = -p.q[state][state];
        const double t_switch = out > 0 ? sample_exponential(stream, out) : kInf;
        const bool can_capture = v == 0 && x >= p.U_lo && x <= p.U_hi && p.kappa > 0;
        const double t_cap = can_capture ? sample_exponential(stream, p.kappa) : kInf;
        const double t_wall = v > 0 ? p.L - x : (v < 0 ? x : kInf);
        const double step = std::min({t_switch, t_cap, t_wall});
        if (!std::isfinite(step)) throw StallError("vesicle is trapped in a state with no exit");
        t += step;
        if (step == t_wall) {
            if (v > 0) return {false, t};
            x = 0.0;
            state = 2;  // elastic screen at 0
            continue;
        }
        x += v * step;
        if (step == t_cap) return {true, t};
        double u = stream.uniform() * out;
        int to = state;
        for (int j = 0; j < 3; ++j) {
            if (j == state) continue;
            const double q = p.q[state][j];
            if (q <= 0) continue;
            to = j;
            if (u < q) break;
            u -= q;
        }
        state = to;
    }
}

}  // namespace

VesicleStats vesicle_preset(const VesicleParams& p, const RandomStream& root, std::size_t n_runs, unsigned threads) {
    if (!(p.L > 0) || !(p.target > 0 && p.target < p.L)) throw DomainError("target must lie inside (0, L)");
    if (!(p.U_lo <= p.target && p.target <= p.U_hi)) throw DomainError("U must contain the target");
    if (p.q.size() != 3) throw ShapeError("vesicle chain needs a 3x3 intensity matrix");
    for (std::size_t i = 0; i < 3; ++i) {
        if (p.q[i].size() != 3) throw ShapeError("vesicle chain needs a 3x3 intensity matrix");
        double row = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            if (i != j && p.q[i][j] < 0) throw ValidationError("negative off-diagonal rate");
            row += p.q[i][j];
        }
        if (std::abs(row) > 1e-12) throw ValidationError("vesicle intensity rows must sum to 0");
    }
    if (n_runs == 0) throw DomainError("need at least one run");
    std::vector<VesicleRun> runs(n_runs);
    parallel_for(n_runs, threads, [&](std::size_t i) {
        auto s = root.child(i);
        runs[i] = vesicle_cycle(p, s);
    });
    VesicleStats st;
    st.runs = n_runs;
    double total_time = 0.0, capture_time = 0.0;
    for (const auto& r : runs) {
        total_time += r.duration;
        if (r.captured) {
            ++st.captures;
            capture_time += r.duration;
        } else {
            ++st.escapes;
        }
    }
    const double n = static_cast<double>(n_runs);
    st.capture_fraction = st.captures / n;
    st.capture_stderr = std::sqrt(st.capture_fraction * (1 - st.capture_fraction) / n);
    st.mean_cycle_time = total_time / n;
    st.mean_capture_time = st.captures ? capture_time / st.captures : 0.0;
    return st;
}

OccupancyProfile occupancy_profile(const std::vector<Trajectory>& ensemble, const WindowPredicate& window) {
    if (ensemble.empty()) throw DegenerateInputError("occupancy profile needs a nonempty ensemble");
    const auto& grid = ensemble.front().times;
    for (const auto& tr : ensemble)
        if (tr.times.size() != grid.size()) throw ShapeError("ensemble members must share the sampling grid");
    OccupancyProfile out;
    out.times = grid;
    out.fraction.assign(grid.size(), 0.0);
    for (const auto& tr : ensemble)
        for (std::size_t k = 0; k < grid.size(); ++k)
            if (window(tr.positions[k], tr.regimes[k])) out.fraction[k] += 1.0;
    for (auto& f : out.fraction) f /= static_cast<double>(ensemble.size());
    out.hit = std::any_of(out.fraction.begin(), out.fraction.end(), [](double f) { return f > 0; });
    out.liminf = grid.empty() ? 0.0 : *std::min_element(out.fraction.begin() + grid.size() / 2, out.fraction.end());
    return out;
}

ProductDensity occupancy_histogram(const Trajectory& tr, const Grid1D& grid, int n_regimes, double t0, double t1,
                                   std::size_t coordinate) {
    ProductDensity h(grid, static_cast<std::size_t>(n_regimes));
    std::size_t count = 0;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        if (tr.times[k] < t0 || tr.times[k] > t1) continue;
        ++count;
        const double x = tr.positions[k].at(coordinate);
        if (grid.contains(x)) h.at(grid.cell_of(x), static_cast<std::size_t>(tr.regimes[k])) += 1.0;
    }
    if (count == 0) throw DegenerateInputError("no samples in the time window");
    for (auto& m : h.masses) m /= static_cast<double>(count);
    return h;
}

double ks_statistic(std::vector<double> samples, const RealFunction& cdf) {
    if (samples.empty()) throw DegenerateInputError("KS statistic needs samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double F = cdf(samples[i]);
        d = std::max({d, (i + 1) / n - F, F - i / n});
    }
    return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw DegenerateInputError("KS statistic needs samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    return d;
}

}  // namespace semilab
