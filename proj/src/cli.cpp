#include "semilab/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "semilab/chains.hpp"
#include "semilab/errors.hpp"
#include "semilab/pdmp.hpp"
#include "semilab/sde.hpp"
#include "semilab/spectral.hpp"
#include "semilab/structured.hpp"
#include "semilab/transfer.hpp"

namespace semilab::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Kind { real, integer, text, flag };

struct Param {
    std::string name;
    Kind kind;
    json def;  // null: required unless optional
    std::string help;
    bool optional = false;
};

struct Context {
    json params;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string format = "csv";

    double real(const std::string& k) const { return params.at(k).get<double>(); }
    long long integer(const std::string& k) const { return params.at(k).get<long long>(); }
    std::size_t count(const std::string& k) const {
        const long long v = integer(k);
        if (v < 0) throw UsageError("--" + k + " must be nonnegative");
        return static_cast<std::size_t>(v);
    }
    std::string text(const std::string& k) const { return params.at(k).get<std::string>(); }
    bool flag(const std::string& k) const { return params.at(k).get<bool>(); }
    bool has(const std::string& k) const { return params.contains(k) && !params.at(k).is_null(); }
};

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<json>> rows;
};

struct Result {
    json report = json::object();
    std::vector<Table> tables;
};

struct Command {
    std::string module;
    std::string name;
    std::string help;
    std::vector<Param> params;
    std::function<Result(const Context&)> run;
};

// ---------------------------------------------------------------- parsing

double parse_real(const std::string& s, const std::string& what) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) {
        if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
        throw UsageError("--" + what + ": not a number: '" + s + "'");
    }
    return v;
}

long long parse_integer(const std::string& s, const std::string& what) {
    long long v = 0;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) {
        // allow integral reals such as 1e5
        const double d = parse_real(s, what);
        if (d != std::floor(d) || std::abs(d) > 9e15) throw UsageError("--" + what + ": not an integer: '" + s + "'");
        return static_cast<long long>(d);
    }
    return v;
}

std::uint64_t parse_seed(const std::string& s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw UsageError("--seed: not an unsigned 64-bit integer");
    return v;
}

Vec parse_list(const std::string& s, const std::string& what) {
    Vec out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(parse_real(item, what));
    }
    if (out.empty()) throw UsageError("--" + what + ": empty list");
    return out;
}

json typed_value(const Param& p, const json& raw) {
    if (raw.is_null()) return raw;
    switch (p.kind) {
        case Kind::real:
            if (raw.is_number()) return raw.get<double>();
            if (raw.is_string()) return parse_real(raw.get<std::string>(), p.name);
            break;
        case Kind::integer:
            if (raw.is_number_integer()) return raw.get<long long>();
            if (raw.is_number()) return parse_integer(format_number(raw.get<double>()), p.name);
            if (raw.is_string()) return parse_integer(raw.get<std::string>(), p.name);
            break;
        case Kind::text:
            if (raw.is_string()) return raw;
            break;
        case Kind::flag:
            if (raw.is_boolean()) return raw;
            break;
    }
    throw UsageError("--" + p.name + ": wrong type in configuration");
}

// ---------------------------------------------------------------- output

std::string cell_text(const json& v) {
    if (v.is_number_float()) return format_number(v.get<double>());
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return "";
}

std::string render(const Table& t, const std::string& format) {
    if (format == "json") {
        json j;
        j["columns"] = t.columns;
        j["rows"] = json::array();
        for (const auto& r : t.rows) j["rows"].push_back(r);
        return j.dump(1) + "\n";
    }
    std::string s;
    for (std::size_t k = 0; k < t.columns.size(); ++k) s += (k ? "," : "") + t.columns[k];
    s += '\n';
    for (const auto& r : t.rows) {
        for (std::size_t k = 0; k < r.size(); ++k) s += (k ? "," : "") + cell_text(r[k]);
        s += '\n';
    }
    return s;
}

Table density_table(const std::string& name, const GridDensity& f) {
    Table t{name, {"cell_lo", "cell_hi", "mass"}, {}};
    for (std::size_t i = 0; i < f.grid.n_cells; ++i)
        t.rows.push_back({f.grid.edge(i), f.grid.edge(i + 1), f.masses[i]});
    return t;
}

Table profile_table(const std::string& name, const std::string& col, const Vec& t, const Vec& v, std::size_t stride = 1) {
    Table tab{name, {"t", col}, {}};
    for (std::size_t k = 0; k < t.size(); k += stride) tab.rows.push_back({t[k], v[k]});
    if (!t.empty() && (t.size() - 1) % stride != 0) tab.rows.push_back({t.back(), v.back()});
    return tab;
}

Table vector_table(const std::string& name, const RowVector& x) {
    Table t{name, {"state", "prob"}, {}};
    for (Eigen::Index i = 0; i < x.size(); ++i) t.rows.push_back({static_cast<long long>(i), x(i)});
    return t;
}

// JSON has no infinity; such values are written as "inf", "-inf" or "nan".
void encode_nonfinite(json& j) {
    if (j.is_number_float() && !std::isfinite(j.get<double>())) {
        const double v = j.get<double>();
        j = std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    } else if (j.is_structured()) {
        for (auto& e : j) encode_nonfinite(e);
    }
}

json to_json(const RowVector& x) {
    json a = json::array();
    for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(x(i));
    return a;
}

// ---------------------------------------------------------------- models

Matrix load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open matrix file '" + path + "'");
    return read_matrix_csv(in);
}

GrowthModel sde_model(const Context& c) {
    const std::string name = c.text("model");
    const double s2 = c.real("sigma2");
    if (name == "logistic") return logistic_model(s2);
    if (name == "malthus") return malthus_model(s2, c.real("rate"));
    if (name == "custom") {
        if (!c.has("drift")) throw UsageError("--model custom needs --drift file.json");
        std::ifstream in(c.text("drift"));
        if (!in) throw UsageError("cannot open drift file '" + c.text("drift") + "'");
        const auto spec = nlohmann::json::parse(in);
        return polynomial_drift_model("custom", spec.at("breaks").get<std::vector<double>>(),
                                      spec.at("coeffs").get<std::vector<std::vector<double>>>(), s2);
    }
    throw UsageError("--model must be logistic, malthus or custom");
}

std::vector<Param> sde_params() {
    return {{"model", Kind::text, "logistic", "logistic, malthus or custom"},
            {"sigma2", Kind::real, 1.0, "noise intensity sigma^2"},
            {"rate", Kind::real, 1.0, "Malthus growth rate"},
            {"drift", Kind::text, nullptr, "piecewise polynomial drift file (custom)", true}};
}

GridDensity f0_masses(const std::string& name, const Grid1D& g) {
    if (name == "3x2") return cell_masses_from_cdf(g, [](double x) { return x * x * x; });
    if (name == "2x") return cell_masses_from_cdf(g, [](double x) { return x * x; });
    if (name == "uniform") return GridDensity::uniform(g);
    throw UsageError("--f0 must be 3x2, 2x or uniform");
}

McKendrickModel mckendrick_model(const Context& c) {
    McKendrickModel m;
    const double mu = c.real("mu");
    m.mu = [mu](double) { return mu; };
    m.a_max = c.real("a-max");
    const std::string psi = c.text("psi");
    const double scale = c.real("psi-scale");
    if (psi == "bump") {
        m.psi = [scale](double a) {
            if (a < 0.5 || a > 1.5) return 0.0;
            const double s = std::sin(std::numbers::pi * (a - 0.5));
            return scale * s * s;
        };
        m.breaks = {0.5, 1.5};
    } else if (psi == "pulse") {
        const double w = 1e-3;
        m.psi = [scale, w](double a) { return std::abs(a - 1.0) <= w / 2 ? scale / w : 0.0; };
        m.breaks = {1.0 - w / 2, 1.0 + w / 2};
    } else {
        throw UsageError("--psi must be bump or pulse");
    }
    if (!(m.a_max >= 1.5)) throw UsageError("--a-max must cover the birth window (>= 1.5)");
    return m;
}

// ---------------------------------------------------------------- registry

std::vector<Command> registry() {
    std::vector<Command> cmds;

    cmds.push_back({"transfer", "ulam", "Ulam invariant density of a 1-D map",
                    {{"map", Kind::text, "tent", "tent or logistic"},
                     {"n", Kind::integer, 1024, "number of cells"},
                     {"tol", Kind::real, 1e-13, "power iteration tolerance"},
                     {"max-iter", Kind::integer, 200000, "iteration cap"}},
                    [](const Context& c) {
                        const auto map = PiecewiseExpandingMap::by_name(c.text("map"));
                        const auto U = ulam_matrix(map, c.count("n"));
                        const auto r = invariant_density(U, c.real("tol"), static_cast<int>(c.integer("max-iter")));
                        const GridDensity ref = c.text("map") == "logistic" ? logistic_invariant_masses(U.grid())
                                                                            : GridDensity::uniform(U.grid());
                        Result out;
                        out.report["map"] = c.text("map");
                        out.report["n"] = c.integer("n");
                        out.report["iterations"] = r.iterations;
                        out.report["residual"] = r.residual;
                        out.report["l1_to_reference"] = l1_distance(r.density, ref);
                        out.tables.push_back(density_table("density", r.density));
                        return out;
                    }});

    cmds.push_back({"transfer", "exactness", "distance profile of U^t f0 to the invariant density",
                    {{"map", Kind::text, "tent", "tent or logistic"},
                     {"n", Kind::integer, 1024, "number of cells"},
                     {"f0", Kind::text, "3x2", "3x2, 2x or uniform"},
                     {"steps", Kind::integer, 20, "iterations"}},
                    [](const Context& c) {
                        const auto map = PiecewiseExpandingMap::by_name(c.text("map"));
                        const auto U = ulam_matrix(map, c.count("n"));
                        const auto fstar = invariant_density(U, 1e-13, 200000).density;
                        const auto f0 = f0_masses(c.text("f0"), U.grid());
                        const Vec d = exactness_profile(U, f0, static_cast<int>(c.integer("steps")), fstar);
                        Vec t(d.size());
                        for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(k);
                        Result out;
                        out.report["final_distance"] = d.back();
                        out.tables.push_back(profile_table("profile", "distance", t, d));
                        return out;
                    }});

    cmds.push_back({"chains", "evolve", "x0 e^{tQ} by uniformization",
                    {{"q", Kind::text, nullptr, "intensity matrix CSV"},
                     {"x0", Kind::text, nullptr, "initial distribution, comma separated"},
                     {"t", Kind::real, 1.0, "time"}},
                    [](const Context& c) {
                        const IntensityMatrix Q(load_matrix(c.text("q")));
                        const Vec x = parse_list(c.text("x0"), "x0");
                        if (static_cast<Eigen::Index>(x.size()) != Q.n()) throw ShapeError("x0 length differs from Q");
                        const RowVector x0 = Eigen::Map<const RowVector>(x.data(), Q.n());
                        const RowVector xt = evolve(Q, c.real("t"), x0);
                        Result out;
                        out.report["t"] = c.real("t");
                        out.report["x_t"] = to_json(xt);
                        out.tables.push_back(vector_table("distribution", xt));
                        return out;
                    }});

    cmds.push_back({"chains", "jc-distance", "Jukes-Cantor distance from a mismatch fraction",
                    {{"p", Kind::real, nullptr, "observed mismatch fraction"},
                     {"pairwise", Kind::flag, false, "halve for a pair of lineages"}},
                    [](const Context& c) {
                        Result out;
                        out.report["distance"] = jc_distance(c.real("p"), c.flag("pairwise"));
                        return out;
                    }});

    cmds.push_back({"chains", "erythrocyte", "birth-death erythrocyte chain on 0..N",
                    {{"b", Kind::real, 5.0, "production rate"},
                     {"d", Kind::real, 1.0, "per-cell removal rate"},
                     {"N", Kind::integer, 100, "truncation level"},
                     {"t", Kind::real, 20.0, "evolution time from state 0"}},
                    [](const Context& c) {
                        const auto spec = erythrocyte_spec(c.real("b"), c.real("d"), c.count("N"));
                        const RowVector pi = stationary(birth_death_intensity(spec));
                        const Vec pois = truncated_poisson(c.real("b") / c.real("d"), c.count("N"));
                        RowVector x0 = RowVector::Zero(pi.size());
                        x0(0) = 1.0;
                        const RowVector xt = evolve(birth_death_intensity(spec), c.real("t"), x0);
                        Vec pv(pi.data(), pi.data() + pi.size()), xv(xt.data(), xt.data() + xt.size());
                        Result out;
                        out.report["l1_to_poisson"] = l1_distance(pv, pois);
                        out.report["l1_evolved_to_stationary"] = l1_distance(xv, pv);
                        out.tables.push_back(vector_table("stationary", pi));
                        return out;
                    }});

    cmds.push_back({"chains", "explosive", "explosivity of a birth(-death) chain",
                    {{"model", Kind::text, "pure-birth", "pure-birth or birth-death"},
                     {"growth", Kind::text, "geometric", "geometric, linear or quadratic birth rates"},
                     {"base", Kind::real, 2.0, "base of geometric rates"},
                     {"rate", Kind::real, 1.0, "coefficient of linear or quadratic rates"},
                     {"death", Kind::real, 1.0, "per-capita death rate (birth-death)"},
                     {"lambda", Kind::real, 1.0, "lambda in Qx = lambda x"}},
                    [](const Context& c) {
                        const std::string g = c.text("growth");
                        const double base = c.real("base"), rate = c.real("rate");
                        RateFunction birth;
                        if (g == "geometric") birth = [base](std::size_t i) { return std::pow(base, static_cast<double>(i)); };
                        else if (g == "linear") birth = [rate](std::size_t i) { return rate * static_cast<double>(i + 1); };
                        else if (g == "quadratic")
                            birth = [rate](std::size_t i) { return rate * std::pow(static_cast<double>(i + 1), 2); };
                        else throw UsageError("--growth must be geometric, linear or quadratic");
                        RateFunction death = [](std::size_t) { return 0.0; };
                        if (c.text("model") == "birth-death") {
                            const double d = c.real("death");
                            death = [d](std::size_t i) { return d * static_cast<double>(i); };
                        } else if (c.text("model") != "pure-birth") {
                            throw UsageError("--model must be pure-birth or birth-death");
                        }
                        const auto r = explosivity_check(birth, death, c.real("lambda"));
                        Result out;
                        out.report["verdict"] = to_string(r.verdict);
                        out.report["steps"] = r.steps;
                        out.report["last_value"] = r.last_value;
                        return out;
                    }});

    cmds.push_back({"spectral", "perron", "rank-one limit of e^{tQ} for an irreducible Q",
                    {{"q", Kind::text, nullptr, "matrix CSV"}},
                    [](const Context& c) {
                        const auto L = perron_limit(load_matrix(c.text("q")));
                        Result out;
                        out.report["r"] = L.r;
                        out.report["x_star"] = to_json(L.x_star);
                        out.report["y_star"] = to_json(L.y_star);
                        out.report["gap"] = L.gap;
                        return out;
                    }});

    cmds.push_back({"spectral", "jordan", "polynomial growth order and limit",
                    {{"q", Kind::text, nullptr, "matrix CSV"}, {"x", Kind::text, nullptr, "initial row vector"}},
                    [](const Context& c) {
                        const Matrix Q = load_matrix(c.text("q"));
                        const Vec x = parse_list(c.text("x"), "x");
                        if (static_cast<Eigen::Index>(x.size()) != Q.rows()) throw ShapeError("x length differs from Q");
                        const auto J = jordan_growth(Q, Eigen::Map<const RowVector>(x.data(), Q.rows()));
                        Result out;
                        out.report["r"] = J.r;
                        out.report["k"] = J.k;
                        out.report["limit"] = to_json(J.limit);
                        return out;
                    }});

    cmds.push_back({"spectral", "split", "poles at or above a cutoff and the remainder bound",
                    {{"q", Kind::text, nullptr, "matrix CSV"}, {"cutoff", Kind::real, 0.0, "real-part cutoff"}},
                    [](const Context& c) {
                        const auto S = quasicompact_split(load_matrix(c.text("q")), c.real("cutoff"));
                        Result out;
                        json poles = json::array();
                        for (const auto& p : S.poles)
                            poles.push_back({{"re", p.lambda.real()},
                                             {"im", p.lambda.imag()},
                                             {"multiplicity", p.multiplicity},
                                             {"order", p.order}});
                        out.report["poles"] = poles;
                        out.report["remainder_dimension"] = S.remainder_dimension;
                        out.report["remainder_bound"] = {{"M", S.M},
                                                         {"eps", S.eps}};
                        out.report["condition"] = S.condition;
                        return out;
                    }});

    cmds.push_back({"sde", "classify", "long-time regime of dx = b(x) dt + sigma x dw", sde_params(),
                    [](const Context& c) {
                        const auto r = classify(sde_model(c));
                        Result out;
                        out.report["regime"] = to_string(r.regime);
                        out.report["b0"] = r.b0;
                        out.report["binf"] = r.binf;
                        return out;
                    }});

    {
        auto p = sde_params();
        p.push_back({"lo", Kind::real, 0.0, "grid start"});
        p.push_back({"hi", Kind::real, 4.0, "grid end"});
        p.push_back({"cells", Kind::integer, 20, "grid cells"});
        cmds.push_back({"sde", "stationary", "stationary density cell masses", p, [](const Context& c) {
                            const auto f = stationary_density(sde_model(c));
                            Result out;
                            out.report["exists"] = f.exists;
                            out.report["exponent_at_0"] = f.exponent_at_0;
                            out.report["exponent_at_inf"] = f.exponent_at_inf;
                            if (f.exists) {
                                out.report["C"] = f.C;
                                const Grid1D g(c.real("lo"), c.real("hi"), c.count("cells"));
                                const auto m = f.cell_masses(g);
                                out.report["grid_mass"] = m.total();
                                out.tables.push_back(density_table("density", m));
                            } else {
                                out.report["window_integral"] = f.window_integral;
                            }
                            return out;
                        }});
    }
    {
        auto p = sde_params();
        p.push_back({"x0", Kind::real, 1.0, "initial value"});
        p.push_back({"dt", Kind::real, 1e-3, "Euler-Maruyama step"});
        p.push_back({"T", Kind::real, 2050.0, "horizon"});
        p.push_back({"burn-in", Kind::real, 50.0, "discarded initial time"});
        p.push_back({"sample-every", Kind::real, 0.1, "sampling interval"});
        p.push_back({"lo", Kind::real, 0.0, "grid start"});
        p.push_back({"hi", Kind::real, 4.0, "grid end"});
        p.push_back({"cells", Kind::integer, 20, "grid cells"});
        cmds.push_back({"sde", "em", "time-average histogram against the stationary law", p, [](const Context& c) {
                            RandomStream s(c.seed, 0);
                            const Grid1D g(c.real("lo"), c.real("hi"), c.count("cells"));
                            const auto r = empirical_vs_stationary(sde_model(c), c.real("x0"), c.real("dt"), c.real("T"),
                                                                   c.real("burn-in"), c.real("sample-every"), g, s);
                            Result out;
                            out.report["distance"] = r.distance;
                            out.report["samples"] = r.samples;
                            out.report["out_of_range"] = r.out_of_range;
                            out.tables.push_back(density_table("empirical", r.empirical));
                            out.tables.push_back(density_table("stationary", r.stationary));
                            return out;
                        }});
    }

    cmds.push_back({"pdmp", "gene", "gene expression with random switching",
                    {{"variant", Kind::text, "2d", "1d, 2d or 3stage"},
                     {"q01", Kind::real, 1.0, "activation rate"},
                     {"q10", Kind::real, 1.0, "inactivation rate (coefficient)"},
                     {"q10-shape", Kind::text, "constant", "constant or linear in protein"},
                     {"theta", Kind::real, nullptr, "activation threshold on protein", true},
                     {"sampler", Kind::text, "time-rescaling", "time-rescaling or thinning (1d threshold)"},
                     {"P", Kind::real, 1.0, "protein production"},
                     {"mu", Kind::real, 1.0, "protein decay (1d)"},
                     {"R", Kind::real, 1.0, "mRNA production"},
                     {"muR", Kind::real, 1.0, "mRNA decay"},
                     {"muP", Kind::real, 1.0, "protein decay"},
                     {"A", Kind::real, 1.0, "pre-mRNA production"},
                     {"muPR", Kind::real, 1.0, "pre-mRNA decay"},
                     {"T", Kind::real, 100.0, "horizon"},
                     {"record-every", Kind::real, 0.1, "sampling interval"}},
                    [](const Context& c) {
                        const GeneVariant v = gene_variant_from_string(c.text("variant"));
                        GeneParams p;
                        p.P = c.real("P"), p.mu = c.real("mu"), p.R = c.real("R"), p.muR = c.real("muR");
                        p.muP = c.real("muP"), p.A = c.real("A"), p.muPR = c.real("muPR");
                        const double q01 = c.real("q01"), q10 = c.real("q10");
                        p.q01 = [q01](std::span<const double>) { return q01; };
                        const double top = gene_invariant_box(v, p).hi.back();
                        if (c.text("q10-shape") == "constant") {
                            p.q10 = [q10](std::span<const double>) { return q10; };
                            p.rate_bound = std::max(q01, q10);
                        } else if (c.text("q10-shape") == "linear") {
                            p.q10 = [q10](std::span<const double> x) { return q10 * x.back(); };
                            p.rate_bound = std::max(q01, q10 * top);
                        } else {
                            throw UsageError("--q10-shape must be constant or linear");
                        }
                        RandomStream s(c.seed, 0);
                        Result out;
                        Trajectory tr;
                        if (c.has("theta")) {
                            const std::string smp = c.text("sampler");
                            if (smp != "time-rescaling" && smp != "thinning")
                                throw UsageError("--sampler must be time-rescaling or thinning");
                            auto r = simulate_threshold_gene(v, p, c.real("theta"), s, c.real("T"),
                                                             smp == "thinning" ? ActiveSampler::thinning
                                                                               : ActiveSampler::time_rescaling,
                                                             c.real("record-every"));
                            double act = 0, inact = 0;
                            for (const auto& cy : r.cycles) act += cy.active, inact += cy.inactive;
                            const double nc = static_cast<double>(std::max<std::size_t>(1, r.cycles.size()));
                            out.report["cycles"] = r.cycles.size();
                            out.report["mean_active"] = act / nc;
                            out.report["mean_inactive"] = inact / nc;
                            tr = std::move(r.trajectory);
                        } else {
                            const auto m = gene_switching_model(v, p);
                            HybridState init{Vec(m.flows[0].dimension, 0.0), 0, 0.0};
                            tr = simulate_switching(m, init, c.real("T"), s, c.real("record-every"));
                        }
                        out.report["jumps"] = tr.jumps.size();
                        out.report["final_regime"] = tr.final.regime;
                        Table t{"trajectory", {"t"}, {}};
                        const std::size_t d = tr.final.x.size();
                        for (std::size_t k = 0; k < d; ++k) t.columns.push_back("x" + std::to_string(k + 1));
                        t.columns.push_back("regime");
                        for (std::size_t k = 0; k < tr.times.size(); ++k) {
                            std::vector<json> row{tr.times[k]};
                            for (double x : tr.positions[k]) row.push_back(x);
                            row.push_back(tr.regimes[k]);
                            t.rows.push_back(std::move(row));
                        }
                        out.tables.push_back(std::move(t));
                        return out;
                    }});

    cmds.push_back({"pdmp", "telegraph", "Monte Carlo telegraph positions",
                    {{"lambda", Kind::real, 1.0, "switching rate"},
                     {"T", Kind::real, 2.0, "horizon"},
                     {"paths", Kind::integer, 100000, "number of paths"},
                     {"x0", Kind::real, 0.0, "start"},
                     {"dx", Kind::real, 0.1, "histogram cell width"}},
                    [](const Context& c) {
                        const double T = c.real("T"), dx = c.real("dx");
                        const auto xs = telegraph_ensemble(c.real("lambda"), c.real("x0"), T, c.count("paths"),
                                                           RandomStream(c.seed, 0), c.threads);
                        const Grid1D g = centred_grid(std::abs(c.real("x0")) + T + dx, dx);
                        const auto h = histogram_from_samples(xs, g);
                        double m1 = 0, m2 = 0;
                        for (double x : xs) m1 += x, m2 += x * x;
                        Result out;
                        out.report["paths"] = xs.size();
                        out.report["mean"] = m1 / static_cast<double>(xs.size());
                        out.report["second_moment"] = m2 / static_cast<double>(xs.size());
                        out.tables.push_back(density_table("histogram", h.density));
                        return out;
                    }});

    cmds.push_back({"pdmp", "kac", "upwind solution of the telegraph system",
                    {{"lambda", Kind::real, 1.0, "switching rate"},
                     {"dx", Kind::real, 0.01, "cell width (dt = dx)"},
                     {"T", Kind::real, 2.0, "horizon"},
                     {"half-width", Kind::real, 3.0, "grid half width"}},
                    [](const Context& c) {
                        const Grid1D g = centred_grid(c.real("half-width"), c.real("dx"));
                        ProductDensity u0(g, 2);
                        u0.at(g.n_cells / 2, 0) = 0.5;
                        u0.at(g.n_cells / 2, 1) = 0.5;
                        const auto r = kac_pde_solve(c.real("lambda"), u0, c.real("dx"), c.real("T"));
                        Vec t(r.mass.size()), drift(r.mass.size());
                        double worst = 0.0, prev = 1.0;
                        const double h = c.real("T") / static_cast<double>(r.steps);
                        for (std::size_t k = 0; k < r.mass.size(); ++k) {
                            t[k] = static_cast<double>(k + 1) * h;
                            worst = std::max(worst, std::abs(r.mass[k] - prev));
                            prev = r.mass[k];
                        }
                        Result out;
                        out.report["steps"] = r.steps;
                        out.report["max_mass_change_per_step"] = worst;
                        out.report["final_mass"] = r.u.total();
                        out.tables.push_back(density_table("marginal", r.u.marginal()));
                        out.tables.push_back(profile_table("mass", "value", t, r.mass));
                        return out;
                    }});

    cmds.push_back({"pdmp", "vesicle", "vesicle capture versus escape",
                    {{"L", Kind::real, 1.0, "axon length"},
                     {"target", Kind::real, 0.6, "target position"},
                     {"U-lo", Kind::real, 0.5, "capture window start"},
                     {"U-hi", Kind::real, 0.7, "capture window end"},
                     {"kappa", Kind::real, 5.0, "capture rate"},
                     {"runs", Kind::integer, 10000, "number of cycles"}},
                    [](const Context& c) {
                        VesicleParams p;
                        p.L = c.real("L"), p.target = c.real("target"), p.U_lo = c.real("U-lo");
                        p.U_hi = c.real("U-hi"), p.kappa = c.real("kappa");
                        const auto st = vesicle_preset(p, RandomStream(c.seed, 0), c.count("runs"), c.threads);
                        Result out;
                        out.report["runs"] = st.runs;
                        out.report["captures"] = st.captures;
                        out.report["escapes"] = st.escapes;
                        out.report["capture_fraction"] = st.capture_fraction;
                        out.report["capture_stderr"] = st.capture_stderr;
                        out.report["mean_cycle_time"] = st.mean_cycle_time;
                        out.report["mean_capture_time"] = st.mean_capture_time;
                        return out;
                    }});

    cmds.push_back({"structured", "mckendrick", "age-structured population growth",
                    {{"mu", Kind::real, 0.1, "constant death rate"},
                     {"psi", Kind::text, "bump", "bump (scale sin^2 on [0.5, 1.5]) or pulse (weight at age 1)"},
                     {"psi-scale", Kind::real, 3.0, "birth-rate scale"},
                     {"a-max", Kind::real, 2.0, "oldest age"},
                     {"cells", Kind::integer, 400, "age cells (dt = da)"},
                     {"T", Kind::real, 40.0, "horizon"},
                     {"fit-from", Kind::real, 30.0, "start of the growth-rate window"}},
                    [](const Context& c) {
                        const auto m = mckendrick_model(c);
                        const Grid1D g(0.0, m.a_max, c.count("cells"));
                        const auto run = mckendrick_evolve(m, GridDensity::uniform(g), g.width(), c.real("T"), 1.0);
                        const auto fit = malthus_estimate(run.times, run.total, c.real("fit-from"), c.real("T"));
                        const auto res = aeg_residual(run.snapshots, run.snapshot_times, fit.lambda_hat);
                        Result out;
                        out.report["lambda_hat"] = fit.lambda_hat;
                        out.report["r_squared"] = fit.r_squared;
                        out.report["lotka"] = lotka_rate(m);
                        out.report["residual_final"] = res.residual.size() > 1 ? res.residual[res.residual.size() - 2] : 0.0;
                        out.tables.push_back(profile_table("total", "value", run.times, run.total, 10));
                        out.tables.push_back(density_table("final", normalize(g, run.final.masses)));
                        return out;
                    }});

    cmds.push_back({"structured", "cellcycle", "age and birth-size cell-cycle model",
                    {{"preset", Kind::text, "benchmark", "model preset"},
                     {"T", Kind::real, 60.0, "horizon"},
                     {"nx", Kind::integer, 90, "birth-size cells"},
                     {"da", Kind::real, 0.01, "age cell width (dt = da)"},
                     {"fit-window", Kind::real, 20.0, "length of the final growth-rate window"}},
                    [](const Context& c) {
                        if (c.text("preset") != "benchmark") throw UsageError("--preset must be benchmark");
                        const auto m = cellcycle_benchmark();
                        const double da = c.real("da");
                        const auto na = static_cast<std::size_t>(std::llround(1.2 / da));
                        AgeSizeDensity u0(Grid1D(m.xb_lo, m.xb_hi, c.count("nx")), Grid1D(0.0, 1.2, na));
                        for (std::size_t i = 0; i < u0.xb.n_cells; ++i) u0.at(i, 0) = 1.0 / static_cast<double>(u0.xb.n_cells);
                        const double T = c.real("T");
                        const auto run = cellcycle_evolve(m, u0, da, T, 1.0);
                        const auto fit = malthus_estimate(run.times, run.total, T - c.real("fit-window"), T);
                        const auto res = aeg_residual(run.snapshots, run.snapshot_times, fit.lambda_hat);
                        double renewal = 0.0;
                        for (std::size_t k = 0; k < run.removed.size(); ++k)
                            if (run.removed[k] > 0)
                                renewal = std::max(renewal, std::abs(run.injected[k] - 2 * run.removed[k]) / run.removed[k]);
                        AgeSizeDensity norm = run.final;
                        for (double& v : norm.masses) v /= run.total.back();
                        Result out;
                        out.report["lambda_hat"] = fit.lambda_hat;
                        out.report["r_squared"] = fit.r_squared;
                        out.report["residual_final"] = res.residual.size() > 1 ? res.residual[res.residual.size() - 2] : 0.0;
                        out.report["renewal_max_relative_error"] = renewal;
                        Table u{"u", {"xb_lo", "xb_hi", "a_lo", "a_hi", "mass"}, {}};
                        for (std::size_t i = 0; i < norm.xb.n_cells; ++i)
                            for (std::size_t j = 0; j < norm.age.n_cells; ++j)
                                u.rows.push_back({norm.xb.edge(i), norm.xb.edge(i + 1), norm.age.edge(j),
                                                  norm.age.edge(j + 1), norm.at(i, j)});
                        out.tables.push_back(std::move(u));
                        out.tables.push_back(profile_table("total", "value", run.times, run.total, 10));
                        return out;
                    }});

    cmds.push_back({"structured", "size-division", "size-structured growth with binary division",
                    {{"g", Kind::real, 1.0, "constant growth speed"},
                     {"lambda", Kind::real, 1.0, "constant division rate"},
                     {"x-max", Kind::real, 4.0, "largest size"},
                     {"cells", Kind::integer, 400, "size cells"},
                     {"dt", Kind::real, 0.005, "time step"},
                     {"T", Kind::real, 3.0, "horizon"}},
                    [](const Context& c) {
                        SizeDivisionModel m;
                        const double g = c.real("g"), lam = c.real("lambda");
                        m.g = [g](double) { return g; };
                        m.lambda_div = [lam](double) { return lam; };
                        m.x_max = c.real("x-max");
                        const Grid1D grid(0.0, m.x_max, c.count("cells"));
                        Vec u(grid.n_cells, 0.0);
                        for (std::size_t j = 0; j < grid.n_cells; ++j)
                            if (grid.center(j) > 0.25 * m.x_max && grid.center(j) < 0.5 * m.x_max) u[j] = 1.0;
                        const auto run = size_division_evolve(m, normalize(grid, u), c.real("dt"), c.real("T"));
                        const auto fit = malthus_estimate(run.times, run.total, 0.0, c.real("T"));
                        Result out;
                        out.report["lambda_hat"] = fit.lambda_hat;
                        out.report["r_squared"] = fit.r_squared;
                        out.tables.push_back(density_table("final", normalize(grid, run.final.masses)));
                        out.tables.push_back(profile_table("total", "value", run.times, run.total, 10));
                        return out;
                    }});

    return cmds;
}

// ---------------------------------------------------------------- files

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
    f << content;
    f.close();
    if (!f) throw std::runtime_error("write failed for '" + p.string() + "'");
}

std::string plot_script(const std::vector<std::string>& csvs) {
    std::string s =
        "# Plot every CSV output against its first column.\n"
        "import csv\nimport sys\n\nimport matplotlib.pyplot as plt\n\nFILES = [\n";
    for (const auto& c : csvs) s += "    \"" + c + "\",\n";
    s += "]\n\n"
         "for name in FILES:\n"
         "    with open(name) as f:\n"
         "        rows = list(csv.reader(f))\n"
         "    head, data = rows[0], rows[1:]\n"
         "    x = [float(r[0]) for r in data]\n"
         "    y = [float(r[-1]) for r in data]\n"
         "    plt.figure()\n"
         "    plt.plot(x, y)\n"
         "    plt.xlabel(head[0])\n"
         "    plt.ylabel(head[-1])\n"
         "    plt.title(name)\n"
         "    plt.savefig(name.rsplit('.', 1)[0] + '.png')\n"
         "\n"
         "if '--show' in sys.argv:\n"
         "    plt.show()\n";
    return s;
}

std::string usage_text(const std::vector<Command>& cmds) {
    std::string s =
        "usage: semilab <module> <subcommand> [options]\n"
        "global options: --seed N --threads N --out DIR --format csv|json --config FILE --emit-plot-script\n"
        "environment: SEMILAB_SEED, SEMILAB_THREADS, SEMILAB_OUT, SEMILAB_FORMAT\n"
        "commands:\n";
    for (const auto& c : cmds) s += "  " + c.module + " " + c.name + "  " + c.help + "\n";
    return s;
}

void error_line(std::ostream& err, const std::string& kind, const std::string& msg, const std::string& extra = {}) {
    json j;
    j["error"] = msg;
    j["kind"] = kind;
    if (!extra.empty()) j["warning"] = extra;
    err << j.dump() << '\n';
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    for (unsigned int i = 0; i < len; ++i) {
        s += hex[md[i] >> 4];
        s += hex[md[i] & 15];
    }
    return s;
}

int dispatch(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    const auto cmds = registry();
    std::vector<std::string> args = args_in;

    // replay: a config file supplies the command when none is given
    json config;
    std::string config_path;
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
        if (args[i] == "--config") config_path = args[i + 1];
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            error_line(err, "usage", "cannot open config file '" + config_path + "'");
            return 2;
        }
        try {
            config = json::parse(in);
        } catch (const std::exception& e) {
            error_line(err, "usage", std::string("config file is not valid JSON: ") + e.what());
            return 2;
        }
        bool named = false;
        for (const auto& a : args)
            for (const auto& c : cmds)
                if (a == c.module) named = true;
        if (!named && config.contains("command") && config["command"].is_array() && config["command"].size() == 2) {
            args.insert(args.begin(), config["command"][1].get<std::string>());
            args.insert(args.begin(), config["command"][0].get<std::string>());
        }
    }

    CLI::App app{"semilab: stochastic semigroup laboratory", "semilab"};
    std::string seed_s, threads_s, out_s, format_s, config_s;
    bool plot = false;
    auto* o_seed = app.add_option("--seed", seed_s, "64-bit seed");
    auto* o_threads = app.add_option("--threads", threads_s, "worker threads");
    auto* o_out = app.add_option("--out", out_s, "output directory");
    auto* o_format = app.add_option("--format", format_s, "csv or json");
    app.add_option("--config", config_s, "JSON config to replay");
    app.add_flag("--emit-plot-script", plot, "write a plotting script next to the CSVs");
    app.require_subcommand(1);

    std::map<std::string, CLI::App*> modules;
    std::vector<CLI::App*> subs(cmds.size());
    std::vector<std::map<std::string, std::string>> raw(cmds.size());
    std::vector<std::map<std::string, bool>> flags(cmds.size());
    std::vector<std::map<std::string, CLI::Option*>> opts(cmds.size());
    for (std::size_t k = 0; k < cmds.size(); ++k) {
        const auto& c = cmds[k];
        if (!modules.count(c.module)) {
            auto* m = app.add_subcommand(c.module, c.module + " commands");
            m->require_subcommand(1);
            m->fallthrough();
            modules[c.module] = m;
        }
        auto* s = modules[c.module]->add_subcommand(c.name, c.help);
        s->fallthrough();
        subs[k] = s;
        for (const auto& p : c.params) {
            std::string help = p.help;
            if (!p.def.is_null()) help += " [" + cell_text(p.def) + "]";
            if (p.kind == Kind::flag) opts[k][p.name] = s->add_flag("--" + p.name, flags[k][p.name], help);
            else opts[k][p.name] = s->add_option("--" + p.name, raw[k][p.name], help);
        }
    }

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help() << usage_text(cmds);
        return 0;
    } catch (const CLI::ParseError& e) {
        error_line(err, "usage", e.what());
        err << usage_text(cmds);
        return 2;
    }

    std::size_t which = cmds.size();
    for (std::size_t k = 0; k < cmds.size(); ++k)
        if (subs[k]->parsed()) which = k;
    if (which == cmds.size()) {
        error_line(err, "usage", "no command given");
        err << usage_text(cmds);
        return 2;
    }
    const Command& cmd = cmds[which];

    Context ctx;
    json resolved;
    std::string out_dir;
    try {
        const bool config_matches = config.contains("command") && config["command"] == json::array({cmd.module, cmd.name});
        if (!config.is_null() && config.contains("command") && !config_matches)
            throw UsageError("config file is for a different command");
        const json cparams = config_matches && config.contains("params") ? config["params"] : json::object();
        for (const auto& [key, val] : cparams.items()) {
            const bool known = std::any_of(cmd.params.begin(), cmd.params.end(), [&](const Param& p) { return p.name == key; });
            if (!known) throw UsageError("config has unknown parameter '" + key + "'");
        }
        json params = json::object();
        for (const auto& p : cmd.params) {
            json v;
            if (opts[which][p.name]->count() > 0)
                v = p.kind == Kind::flag ? json(flags[which][p.name]) : typed_value(p, raw[which][p.name]);
            else if (cparams.contains(p.name))
                v = typed_value(p, cparams[p.name]);
            else
                v = p.def;
            if (v.is_null() && !p.optional) throw UsageError("missing required option --" + p.name);
            params[p.name] = v;
        }
        ctx.params = params;

        if (o_seed->count()) ctx.seed = parse_seed(seed_s);
        else if (auto e = env("SEMILAB_SEED")) ctx.seed = parse_seed(*e);
        else if (config.contains("seed")) ctx.seed = config["seed"].get<std::uint64_t>();

        std::string th;
        if (o_threads->count()) th = threads_s;
        else if (auto e = env("SEMILAB_THREADS")) th = *e;
        if (!th.empty()) {
            const long long n = parse_integer(th, "threads");
            if (n < 1 || n > 1024) throw UsageError("--threads must be in [1, 1024]");
            ctx.threads = static_cast<unsigned>(n);
        }

        if (o_format->count()) ctx.format = format_s;
        else if (auto e = env("SEMILAB_FORMAT")) ctx.format = *e;
        else if (config.contains("format")) ctx.format = config["format"].get<std::string>();
        if (ctx.format != "csv" && ctx.format != "json") throw UsageError("--format must be csv or json");

        if (o_out->count()) out_dir = out_s;
        else if (auto e = env("SEMILAB_OUT")) out_dir = *e;
        if (plot && out_dir.empty()) throw UsageError("--emit-plot-script needs --out");

        resolved["artifact_version"] = kVersion;
        resolved["command"] = json::array({cmd.module, cmd.name});
        resolved["seed"] = ctx.seed;
        resolved["format"] = ctx.format;
        resolved["params"] = params;
    } catch (const UsageError& e) {
        error_line(err, "usage", e.what());
        return 2;
    } catch (const nlohmann::json::exception& e) {
        error_line(err, "usage", std::string("bad config value: ") + e.what());
        return 2;
    }

    Result result;
    try {
        result = cmd.run(ctx);
    } catch (const UsageError& e) {
        error_line(err, "usage", e.what());
        return 2;
    } catch (const ModelError& e) {
        error_line(err, "model", e.what());
        return 3;
    } catch (const NumericalError& e) {
        error_line(err, "numerical", e.what());
        return 4;
    } catch (const std::exception& e) {
        error_line(err, "numerical", e.what());
        return 4;
    }

    encode_nonfinite(result.report);
    out << result.report.dump() << '\n';
    if (out_dir.empty()) return 0;

    std::vector<std::pair<std::string, std::string>> files;
    const std::string config_text = resolved.dump(2) + "\n";
    files.emplace_back("config.json", config_text);
    files.emplace_back("report.json", result.report.dump(2) + "\n");
    std::vector<std::string> csvs;
    for (const auto& t : result.tables) {
        const std::string name = t.name + (ctx.format == "json" ? ".json" : ".csv");
        files.emplace_back(name, render(t, ctx.format));
        if (ctx.format == "csv") csvs.push_back(name);
    }
    if (plot) files.emplace_back("plot.py", plot_script(csvs));

    try {
        const fs::path dir(out_dir);
        fs::create_directories(dir);
        json manifest;
        manifest["artifact_version"] = kVersion;
        manifest["config_hash"] = sha256_hex(config_text);
        manifest["threads"] = ctx.threads;
        json list = json::array();
        for (const auto& [name, content] : files) {
            write_file(dir / name, content);
            list.push_back({{"name", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
        }
        manifest["files"] = list;
        manifest["wall_time_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const fs::path tmp = dir / "manifest.json.tmp";
        write_file(tmp, manifest.dump(2) + "\n");
        fs::rename(tmp, dir / "manifest.json");
    } catch (const std::exception& e) {
        error_line(err, "io", e.what(), "partial outputs written without a manifest");
        return 4;
    }
    return 0;
}

}  // namespace semilab::cli
