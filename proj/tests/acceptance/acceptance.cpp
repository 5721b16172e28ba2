// Acceptance checks. `acceptance` runs all criteria, `acceptance N` runs one.
// Each prints a single PASS/FAIL line; the exit code counts failures.
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "json.hpp"
#include "semilab/chains.hpp"
#include "semilab/cli.hpp"
#include "semilab/errors.hpp"
#include "semilab/pdmp.hpp"
#include "semilab/sde.hpp"
#include "semilab/spectral.hpp"
#include "semilab/structured.hpp"
#include "semilab/transfer.hpp"

using namespace semilab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what, double value) {
        pass = pass && ok;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s%s=%.6g%s", detail.empty() ? "" : "; ", what.c_str(), value, ok ? "" : " (!)");
        detail += buf;
    }
};

Matrix random_intensity(RandomStream& s, int n, double lo, double hi) {
    Matrix q = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (i != j) q(i, j) = lo + (hi - lo) * s.uniform();
        q(i, i) = -q.row(i).sum();
    }
    return q;
}

RowVector unit_row(int n, int k) {
    RowVector x = RowVector::Zero(n);
    x(k) = 1.0;
    return x;
}

GeneParams unit_gene() {
    GeneParams p;
    p.q01 = [](std::span<const double>) { return 1.0; };
    p.q10 = [](std::span<const double> x) { return x[0]; };
    p.rate_bound = 1.0;
    return p;
}

Outcome tent_exactness() {
    Outcome o;
    const auto f0 = PiecewisePoly::polynomial(0.0, 1.0, {0.0, 0.0, 3.0, 0.0});
    const auto orbit = tent_orbit(f0, 20, f0.lipschitz());
    double worst_ratio = 0.0;
    bool exact = f0.lipschitz() == 6.0, sharp_below = true;
    for (int n = 1; n <= 20; ++n) {
        const double bound = 6.0 / std::ldexp(1.0, n);
        worst_ratio = std::max(worst_ratio, (orbit.iterates[n] - 1.0).abs_integral() / bound);
        exact = exact && orbit.lipschitz[n] == bound;
        sharp_below = sharp_below && orbit.iterates[n].lipschitz() <= bound;
    }
    o.require(worst_ratio <= 1.0, "max L1/(6/2^n)", worst_ratio);
    o.require(exact, "carried L_n == 6/2^n", exact);
    o.require(sharp_below, "sharp L_20", orbit.iterates[20].lipschitz());
    return o;
}

Outcome tent_ulam() {
    Outcome o;
    const auto U = ulam_matrix(PiecewiseExpandingMap::tent(), 1024);
    const auto r = invariant_density(U, 1e-13, 1000);
    double rows = 0.0, cols = 0.0;
    for (std::size_t i = 0; i < U.n(); ++i) {
        rows = std::max(rows, std::abs(U.row_sum(i) - 1.0));
        cols = std::max(cols, std::abs(U.column_sum(i) - 1.0));
    }
    const double d = l1_distance(r.density, GridDensity::uniform(U.grid()));
    o.require(d <= 1e-12, "L1 to uniform", d);
    o.require(rows == 0.0 && cols == 0.0, "max |row/col sum - 1|", std::max(rows, cols));
    return o;
}

Outcome logistic_density() {
    Outcome o;
    const auto U = ulam_matrix(PiecewiseExpandingMap::logistic(), 4096);
    const auto r = invariant_density(U, 1e-13, 200000);
    const double d = l1_distance(r.density, logistic_invariant_masses(U.grid()));
    o.require(d <= 0.02, "Ulam n=4096 L1", d);
    const Grid1D g(0.0, 1.0, 4096);
    const auto c = conjugate_transport(tent_logistic_conjugacy(), GridDensity::uniform(g));
    const double dc = l1_distance(c, logistic_invariant_masses(g));
    o.require(dc <= 1e-3, "conjugacy L1", dc);
    return o;
}

Outcome jukes_cantor() {
    Outcome o;
    double worst = 0.0;
    for (double lam : {1.0, 0.3}) {
        const IntensityMatrix Q(jc_intensity(lam));
        for (double t : {0.1, 1.0, 10.0}) {
            const double e = std::exp(-4 * lam * t);
            for (int i = 0; i < 4; ++i) {
                const RowVector row = evolve(Q, t, unit_row(4, i));
                for (int j = 0; j < 4; ++j)
                    worst = std::max(worst, std::abs(row(j) - (i == j ? 0.25 + 0.75 * e : 0.25 - 0.25 * e)));
            }
        }
    }
    o.require(worst <= 1e-10, "max closed-form error", worst);
    const double d = jc_distance(0.3);
    o.require(std::abs(d - 0.383119) <= 1e-6, "jc_distance(0.3)", d);
    bool rejects = true;
    for (double p : {0.75, 0.9}) {
        try {
            jc_distance(p);
            rejects = false;
        } catch (const SaturationError&) {
        }
    }
    o.require(rejects, "rejects p>=0.75", rejects);
    return o;
}

Outcome erythrocyte() {
    Outcome o;
    const auto spec = erythrocyte_spec(5.0, 1.0, 100);
    const auto Q = birth_death_intensity(spec);
    const RowVector pi = stationary(Q);
    const Vec pois = truncated_poisson(5.0, 100);
    const Vec pv(pi.data(), pi.data() + pi.size());
    const double ds = l1_distance(pv, pois);
    o.require(ds <= 1e-8, "stationary L1", ds);
    const RowVector x = evolve(Q, 20.0, unit_row(static_cast<int>(pi.size()), 0));
    const Vec xv(x.data(), x.data() + x.size());
    const double de = l1_distance(xv, pois);
    o.require(de <= 1e-4, "evolve t=20 L1", de);
    const auto ex = explosivity_check(spec.birth, spec.death, 1.0);
    o.require(ex.verdict == Explosivity::non_explosive, "erythrocyte non_explosive", ex.verdict == Explosivity::non_explosive);
    const auto pb = explosivity_check([](std::size_t i) { return std::ldexp(1.0, static_cast<int>(i)); },
                                      [](std::size_t) { return 0.0; }, 1.0);
    o.require(pb.verdict == Explosivity::explosive, "2^i birth explosive", pb.verdict == Explosivity::explosive);
    return o;
}

Outcome dyson_phillips_check() {
    Outcome o;
    RandomStream s(606, 0);
    double worst = 0.0, tail = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        const IntensityMatrix A0(random_intensity(s, 4, 0.0, 1.0));
        Matrix K(4, 4);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) K(i, j) = s.uniform();
            K.row(i) /= K.row(i).sum();
        }
        RowVector f(4);
        for (int i = 0; i < 4; ++i) f(i) = s.uniform();
        f /= f.sum();
        const auto dp = dyson_phillips(A0, K, 1.0, 1.0, f, 60);
        const IntensityMatrix G(A0.q() + K - Matrix::Identity(4, 4), 1e-10);
        worst = std::max(worst, (dp.value - evolve(G, 1.0, f)).cwiseAbs().sum());
        tail = std::max(tail, dp.tail_bound);
    }
    o.require(worst <= 1e-8, "max L1 vs evolve", worst);
    o.require(tail <= 1e-8, "series tail bound", tail);
    return o;
}

Outcome perron_rank_one() {
    Outcome o;
    RandomStream s(707, 0);
    const Matrix Q = random_intensity(s, 5, 0.02, 0.2);
    const auto L = perron_limit(Q);
    Eigen::EigenSolver<Matrix> es(Q);
    std::vector<double> re;
    for (int i = 0; i < 5; ++i) re.push_back(es.eigenvalues()(i).real());
    std::sort(re.rbegin(), re.rend());
    const double gap = re[0] - re[1];
    // least squares slope of log residual on t in [1, 30]
    double st = 0, sy = 0, stt = 0, sty = 0;
    int n = 0;
    for (int k = 0; k <= 58; ++k) {
        const double t = 1.0 + 0.5 * k;
        const double y = std::log(rank_one_residual(Q, L, t, unit_row(5, 0)));
        st += t, sy += y, stt += t * t, sty += t * y;
        ++n;
    }
    const double slope = (n * sty - st * sy) / (n * stt - st * st);
    o.require(std::abs(-slope - gap) <= 0.1 * gap, "slope/gap", -slope / gap);
    o.require(std::abs(L.gap - gap) <= 1e-8, "perron gap vs oracle", std::abs(L.gap - gap));
    return o;
}

Outcome jordan_example() {
    Outcome o;
    const Matrix Q{{1, 1}, {0, 1}};
    RowVector x(2);
    x << 1, 1;
    const double t = 1000.0;
    const RowVector v = x * scaled_semigroup(Q, t, 1.0) / t;
    RowVector lim(2);
    lim << 0, x(0);
    const double d = (v - lim).cwiseAbs().sum();
    o.require(d < 3e-3, "L1 at t=1000", d);
    o.require(std::abs(d - 2.0 / t) <= 1e-9, "|d - 2/t|", std::abs(d - 2.0 / t));
    const auto g = jordan_growth(Q, x);
    o.require(g.k == 2 && std::abs(g.r - 1.0) < 1e-12, "k", g.k);
    o.require((g.limit - lim).cwiseAbs().sum() < 1e-8, "limit error", (g.limit - lim).cwiseAbs().sum());
    return o;
}

Outcome quasicompact() {
    Outcome o;
    RandomStream s(909, 0);
    double recon = 0.0, bound_ratio = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix Q = random_intensity(s, 6, 0.0, 1.0);
        const auto sp = quasicompact_split(Q, -0.5);
        for (double t : {0.0, 1.0, 5.0, 10.0}) {
            const Matrix ref = (t * Q).exp();
            recon = std::max(recon, (sp.poles_sum(t) + sp.remainder_term(t) - ref).cwiseAbs().maxCoeff());
        }
        for (int i = 0; i < 20; ++i) {
            const double t = 0.01 * std::pow(10.0, 3.0 * i / 19.0);
            const Matrix R = (t * Q).exp() - sp.poles_sum(t);
            bound_ratio = std::max(bound_ratio, max_row_sum(R) / sp.remainder_bound(t));
        }
    }
    o.require(recon <= 1e-8, "max reconstruction error", recon);
    o.require(bound_ratio <= 1.0, "max |R(t)|/bound", bound_ratio);
    return o;
}

Outcome sde_stationary() {
    Outcome o;
    const auto f = stationary_density(logistic_model(1.0));
    double worst = 0.0, flux = 0.0;
    for (int i = 0; i <= 40; ++i) {
        const double x = std::pow(10.0, -3.0 + 4.0 * i / 40);
        worst = std::max(worst, std::abs(f.evaluate(x) - 2 * std::exp(-2 * x)));
        flux = std::max(flux, std::abs(f.flux(x)));
    }
    o.require(f.exists && worst <= 1e-6, "max |f - 2e^{-2x}|", worst);
    o.require(flux <= 1e-8, "max flux", flux);
    RandomStream stream(10, 0);
    const auto em = empirical_vs_stationary(logistic_model(1.0), 1.0, 1e-3, 2050.0, 50.0, 0.1, Grid1D(0.0, 4.0, 20), stream);
    o.require(em.distance <= 0.05, "EM histogram L1", em.distance);
    const bool cls = classify(logistic_model(1.0)).regime == Regime::stationary &&
                     classify(logistic_model(3.0)).regime == Regime::extinct &&
                     classify(malthus_model(1.0)).regime == Regime::grows;
    o.require(cls, "classify", cls);
    return o;
}

Outcome telegraph_consistency() {
    Outcome o;
    const double T = 2.0;
    const auto xs = telegraph_ensemble(1.0, 0.0, T, 100000, RandomStream(11, 0), 4);
    const Grid1D fine = centred_grid(3.0, 0.01);
    ProductDensity u0(fine, 2);
    u0.at(fine.n_cells / 2, 0) = 0.5;
    u0.at(fine.n_cells / 2, 1) = 0.5;
    const auto pde = kac_pde_solve(1.0, u0, 0.01, T);
    // 0.1-wide bins made of 10 PDE cells
    const std::size_t nb = (fine.n_cells + 9) / 10;
    const Grid1D coarse(fine.lo, fine.lo + 0.1 * static_cast<double>(nb), nb);
    const auto marg = pde.u.marginal();
    Vec agg(nb, 0.0);
    for (std::size_t i = 0; i < fine.n_cells; ++i) agg[i / 10] += marg.masses[i];
    const auto mc = histogram_from_samples(xs, coarse);
    const double d = l1_distance(mc.density.masses, agg);
    o.require(d < 0.05, "MC vs PDE L1", d);
    double step = 0.0, prev = 1.0;
    for (double m : pde.mass) step = std::max(step, std::abs(m - prev)), prev = m;
    o.require(step <= 1e-12, "max mass change per step", step);
    RandomStream s(11, 1);
    bool unit = true;
    for (int i = 0; i < 100000; ++i) unit = unit && std::abs(telegraph_simulate(1.0, 0.0, i % 2 ? 1 : -1, T, s).v) == 1;
    o.require(unit, "v_T in {-1,1}", unit);
    return o;
}

Outcome gene_thresholds() {
    Outcome o;
    const auto p = unit_gene();
    const double theta = 0.2;
    RandomStream s(12, 0);
    const auto big = simulate_threshold_gene(GeneVariant::one_d, p, theta, s, 3.2e5);
    const double T = 1e5;
    const auto win = simulate_threshold_gene(GeneVariant::one_d, p, theta, s, T, ActiveSampler::time_rescaling, 0.1);
    const Grid1D xg(0.0, 1.0, 20);
    const auto h1 = occupancy_histogram(win.trajectory, xg, 2, T / 2, 3 * T / 4, 0);
    const auto h2 = occupancy_histogram(win.trajectory, xg, 2, 3 * T / 4, T, 0);
    const double dh = l1_distance(ProductDensity(xg, 2, normalize(h1.masses)), ProductDensity(xg, 2, normalize(h2.masses)));

    double inactive = 0.0;
    std::vector<double> act;
    for (const auto& c : big.cycles) {
        inactive = std::max(inactive, std::abs(c.inactive - std::log(c.x_off / theta) / p.mu));
        act.push_back(c.active);
    }
    o.require(inactive <= 1e-8, "max inactive error", inactive);
    const double ks = ks_statistic(act, [&](double t) { return gene_active_cdf(p, theta, t); });
    o.require(act.size() >= 100000 && ks < 0.01, "active KS", ks);

    GeneParams p2 = unit_gene();
    p2.q10 = [](std::span<const double>) { return 1.0; };
    p2.R = 2.0, p2.muR = 1.0, p2.P = 1.5, p2.muP = 0.5;
    const auto m2 = gene_switching_model(GeneVariant::two_d, p2);
    const auto box = gene_invariant_box(GeneVariant::two_d, p2);
    const auto tr = simulate_switching(m2, {{0.0, 0.0}, 0, 0.0}, 1e4, s, 0.05);
    bool inside = box.contains(tr.final.x, 1e-9);
    for (const auto& x : tr.positions) inside = inside && box.contains(x, 1e-9);
    for (const auto& j : tr.jumps) inside = inside && box.contains(j.x, 1e-9);
    o.require(inside, "2-D inside rectangle", inside);
    o.require(dh < 0.05, "window occupancy L1", dh);
    return o;
}

Outcome semi_markov() {
    Outcome o;
    RandomStream s(13, 0);
    auto identity = [](double x, RandomStream&) { return x; };
    SemiMarkovKangaroo ex;
    ex.q = [](double, double a) { return std::exp(-a); };
    ex.jump = identity;
    const auto sm = semi_markov_simulate(ex, 0.0, 1e5, s);
    const auto mk = kangaroo_simulate([](double) { return 1.0; }, 1.0, identity, 0.0, 1e5, s);
    const double ks = ks_two_sample(sm.holding_times(), mk.holding_times());
    o.require(ks < 0.01, "exponential vs Markov KS", ks);

    SemiMarkovKangaroo un;
    un.q = [](double, double a) { return a >= 1 && a <= 2 ? 1.0 : 0.0; };
    un.breaks = {1.0, 2.0};
    un.jump = identity;
    double hz = 0.0;
    for (int i = 1; i < 100; ++i) {
        const double a = 1.0 + 0.01 * i;
        hz = std::max(hz, std::abs(un.hazard(0.0, a) - 1.0 / (2 - a)));
    }
    o.require(hz <= 1e-8, "max hazard error", hz);
    const auto path = semi_markov_simulate(un, 0.0, 2e5, s);
    const Grid1D g(0.0, 2.0, 20);
    const auto hist = histogram_from_samples(sampled_ages(path, 100.0, 0.37), g);
    // length-biased age law: density min(1, 2 - a) / 1.5
    const auto oracle = cell_masses_from_cdf(g, [](double a) {
        return a <= 1 ? a / 1.5 : (a - 0.5 * (a - 1) * (a - 1)) / 1.5;
    });
    const double d = l1_distance(hist.density, oracle);
    o.require(d < 0.05, "age marginal L1", d);
    return o;
}

Outcome mckendrick() {
    Outcome o;
    McKendrickModel m;
    m.mu = [](double) { return 0.1; };
    m.psi = [](double a) {
        if (a < 0.5 || a > 1.5) return 0.0;
        const double s = std::sin(std::numbers::pi * (a - 0.5));
        return 3.0 * s * s;
    };
    m.a_max = 2.0;
    m.breaks = {0.5, 1.5};
    const Grid1D g(0.0, 2.0, 400);
    const auto u0 = GridDensity::uniform(g);
    const auto run = mckendrick_evolve(m, u0, g.width(), 40.0);
    const auto fit = malthus_estimate(run.times, run.total, 30.0, 40.0);
    const double root = lotka_rate(m);
    o.require(std::abs(fit.lambda_hat - root) <= 1e-3, "|lambda_hat - lotka|", std::abs(fit.lambda_hat - root));
    McKendrickModel off = m;
    off.mu = [](double) { return 0.0; };
    off.psi = [](double) { return 0.0; };
    off.breaks = {};
    const auto cons = mckendrick_evolve(off, u0, g.width(), 40.0);
    double drift = 0.0;
    for (double v : cons.total) drift = std::max(drift, std::abs(v - 1.0));
    o.require(drift <= 1e-10, "max mass drift", drift);
    return o;
}

Outcome cell_cycle() {
    Outcome o;
    const auto m = cellcycle_benchmark();
    const double da = 0.01, T = 200.0;
    AgeSizeDensity a0(Grid1D(m.xb_lo, m.xb_hi, 90), Grid1D(0.0, 1.2, 120));
    for (std::size_t i = 0; i < 90; ++i) a0.at(i, 0) = 1.0 / 90.0;
    AgeSizeDensity b0(a0.xb, a0.age);
    b0.at(10, 50) = 1.0;
    const auto ra = cellcycle_evolve(m, a0, da, T, 1.0);
    const auto rb = cellcycle_evolve(m, b0, da, T, 1.0);

    double renewal = 0.0;
    for (std::size_t k = 0; k < ra.removed.size(); ++k)
        if (ra.removed[k] > 0) renewal = std::max(renewal, std::abs(ra.injected[k] - 2 * ra.removed[k]) / ra.removed[k]);
    o.require(renewal <= 1e-10, "(a) renewal rel. error", renewal);

    Vec lam;
    for (double t0 = 140.0; t0 < T; t0 += 20.0) lam.push_back(malthus_estimate(ra.times, ra.total, t0, t0 + 20.0).lambda_hat);
    double spread = 0.0;
    for (std::size_t k = 1; k < lam.size(); ++k) spread = std::max(spread, std::abs(lam[k] - lam[k - 1]));
    o.require(spread <= 1e-3, "(b) window lambda spread", spread);

    auto fa = ra.final, fb = rb.final;
    for (double& v : fa.masses) v /= ra.total.back();
    for (double& v : fb.masses) v /= rb.total.back();
    const double dprof = l1_distance(fa, fb);
    o.require(dprof <= 0.02, "(c) profile L1", dprof);

    const auto res = aeg_residual(ra.snapshots, ra.snapshot_times, lam.back());
    const auto env = window_maxima(res, 20.0, 10.0);
    bool decreasing = env.size() > 2;
    for (std::size_t k = 1; k < env.size(); ++k) decreasing = decreasing && env[k] < env[k - 1];
    o.require(decreasing, "(d) residual window maxima decreasing", decreasing);

    const double ref = std::log(2.0) / 1.1;
    o.require(std::abs(lam.back() - ref) <= 0.1 * ref, "(e) lambda_hat", lam.back());
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Outcome reproducibility() {
    Outcome o;
    const std::vector<std::vector<std::string>> runs = {
        {"chains", "jc-distance", "--p", "0.3"},
        {"chains", "erythrocyte"},
        {"sde", "em"},
        {"pdmp", "telegraph", "--paths", "100000", "--T", "2"},
        {"pdmp", "kac"},
        {"pdmp", "gene", "--variant", "1d", "--q10-shape", "linear", "--theta", "0.2", "--T", "10000"},
        {"pdmp", "vesicle"},
        {"structured", "mckendrick"},
        {"structured", "cellcycle", "--T", "200"},
    };
    const fs::path root = fs::temp_directory_path() / "semilab_acceptance_replay";
    fs::remove_all(root);
    int identical = 0;
    std::string failed;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const fs::path base = root / std::to_string(k);
        std::ostringstream sink, err;
        auto args = runs[k];
        args.insert(args.begin(), {"--seed", "16", "--out", (base / "first").string(), "--threads", "1"});
        bool ok = semilab::cli::dispatch(args, sink, err) == 0;
        const fs::path cfg = base / "first" / "config.json";
        for (const char* th : {"1", "8"}) {
            const fs::path dir = base / (std::string("threads") + th);
            ok = ok && semilab::cli::dispatch({"--config", cfg.string(), "--threads", th, "--out", dir.string()}, sink, err) == 0;
            if (!ok) break;
            const auto first = nlohmann::json::parse(slurp(base / "first" / "manifest.json"));
            const auto again = nlohmann::json::parse(slurp(dir / "manifest.json"));
            ok = ok && first["files"] == again["files"] && first["config_hash"] == again["config_hash"];
            for (const auto& f : first["files"]) {
                const std::string name = f["name"];
                ok = ok && slurp(base / "first" / name) == slurp(dir / name);
            }
        }
        if (ok) ++identical;
        else failed += (failed.empty() ? "" : ",") + runs[k][0] + " " + runs[k][1];
    }
    o.require(identical == static_cast<int>(runs.size()), "byte-identical replays of " + std::to_string(runs.size()), identical);
    if (!failed.empty()) o.detail += "; differs: " + failed;
    fs::remove_all(root);
    return o;
}

const std::map<int, std::pair<std::string, std::function<Outcome()>>>& criteria() {
    static const std::map<int, std::pair<std::string, std::function<Outcome()>>> c = {
        {1, {"tent exactness bound", tent_exactness}},
        {2, {"tent Ulam uniform", tent_ulam}},
        {3, {"logistic invariant density", logistic_density}},
        {4, {"Jukes-Cantor", jukes_cantor}},
        {5, {"erythrocyte chain", erythrocyte}},
        {6, {"Dyson-Phillips", dyson_phillips_check}},
        {7, {"Perron rank-one rate", perron_rank_one}},
        {8, {"Jordan example", jordan_example}},
        {9, {"quasi-compact reconstruction", quasicompact}},
        {10, {"SDE stationary law", sde_stationary}},
        {11, {"telegraph consistency", telegraph_consistency}},
        {12, {"gene thresholds", gene_thresholds}},
        {13, {"semi-Markov reduction", semi_markov}},
        {14, {"McKendrick", mckendrick}},
        {15, {"cell-cycle AEG", cell_cycle}},
        {16, {"CLI reproducibility", reproducibility}},
    };
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
    if (ids.empty())
        for (const auto& [id, _] : criteria()) ids.push_back(id);
    int failures = 0;
    for (int id : ids) {
        const auto it = criteria().find(id);
        if (it == criteria().end()) {
            std::cerr << "unknown criterion " << id << "\n";
            return 2;
        }
        Outcome o;
        try {
            o = it->second.second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << it->second.first << ": " << o.detail << std::endl;
        failures += o.pass ? 0 : 1;
    }
    return failures;
}
