#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semilab/density.hpp"
#include "semilab/numerics.hpp"
#include "semilab/random.hpp"

namespace semilab {

using StateFunction = std::function<double(std::span<const double>)>;

struct HybridState {
    Vec x;
    int regime = 0;
    double t = 0.0;
};

// Axis-aligned invariant region, checked after every flow step.
struct Box {
    Vec lo, hi;
    bool contains(std::span<const double> x, double tol) const;
};

enum class Crossing { downward, upward };

// Deterministic jump from regime `from` to `to` when guard(x) reaches theta.
struct ThresholdRule {
    int from = 0;
    int to = 1;
    StateFunction guard;
    double theta = 0.0;
    Crossing direction = Crossing::downward;
};

struct SwitchingModel {
    std::vector<FlowField> flows;
    // rates[k][l] = q_kl(x); an empty function is the zero rate
    std::vector<std::vector<StateFunction>> rates;
    double Lambda = 0.0;  // bound on the total exit rate of every regime
    std::optional<Box> region;
    std::vector<ThresholdRule> rules;
    double max_step = 1e-2;
    double region_tol = 1e-9;
    // no jump for this long in a regime without random exits is a stall
    double stall_horizon = 1e4;

    std::size_t n_regimes() const noexcept { return flows.size(); }
    double exit_rate(int k, std::span<const double> x) const;
};

// Grid scan of the exit rates over the region (11 points per axis);
// throws BoundViolationError above Lambda.
void verify_rate_bound(const SwitchingModel& m, int points_per_axis = 11);

struct JumpEvent {
    double t = 0.0;
    Vec x;
    int from = 0;
    int to = 0;
    bool forced = false;  // threshold rule rather than a random switch
};

struct Trajectory {
    std::vector<double> times;  // sampling grid, when requested
    std::vector<Vec> positions;
    std::vector<int> regimes;
    std::vector<JumpEvent> jumps;
    HybridState final;
};

// Thinning: Exp(Lambda) proposals along the rate psi evaluated on the flowed
// state. The state is advanced in place. Returns the accepted duration, or
// +inf when nothing was accepted before `horizon`.
double next_jump_time(const FlowField& flow, const StateFunction& psi, HybridState& state, RandomStream& stream,
                      double Lambda, double horizon, double max_step = 1e-2);

Trajectory simulate_switching(const SwitchingModel& m, const HybridState& initial, double T, RandomStream& stream,
                              double record_every = 0.0);

// Gene expression presets. Rates are functions of the state vector.
struct GeneParams {
    double P = 1.0, mu = 1.0;                    // 1-D: x' = P i - mu x
    double R = 1.0, muR = 1.0, muP = 1.0;        // 2-D: mRNA, protein
    double A = 1.0, muPR = 1.0;                  // 3-stage: pre-mRNA
    StateFunction q01, q10;
    double rate_bound = 1.0;
};

enum class GeneVariant { one_d, two_d, three_stage };
GeneVariant gene_variant_from_string(const std::string& s);
std::string to_string(GeneVariant v);

SwitchingModel gene_switching_model(GeneVariant v, const GeneParams& p);
Box gene_invariant_box(GeneVariant v, const GeneParams& p);

struct GeneCycle {
    double x_on = 0.0;        // protein at activation
    double active = 0.0;      // active duration
    double x_off = 0.0;       // protein at deactivation
    double inactive = 0.0;    // inactive duration (next activation - deactivation)
};

enum class ActiveSampler { time_rescaling, thinning };

struct ThresholdGeneResult {
    Trajectory trajectory;
    std::vector<GeneCycle> cycles;  // completed active + inactive pairs
};

// Threshold gene: activation exactly at the guard, random inactivation with
// q10. The 2-D and 3-stage variants keep q10 = 0 while protein <= theta.
// The 1-D variant starts active at x = theta.
ThresholdGeneResult simulate_threshold_gene(GeneVariant v, const GeneParams& p, double theta, RandomStream& stream,
                                            double T, ActiveSampler sampler = ActiveSampler::time_rescaling,
                                            double record_every = 0.0);

// 1 - exp(-int_0^t q10(P/mu + (x0 - P/mu) e^{-mu s}) ds)
double gene_active_cdf(const GeneParams& p, double x0, double t);

struct TelegraphSample {
    double x = 0.0;
    int v = 1;
    std::size_t jumps = 0;
};

TelegraphSample telegraph_simulate(double lambda, double x0, int v0, double T, RandomStream& stream);

// Paths started at x0 with v0 = +-1 equally likely, one child stream each.
std::vector<double> telegraph_ensemble(double lambda, double x0, double T, std::size_t paths, const RandomStream& root,
                                       unsigned threads = 1);

// State 0 is v = -1, state 1 is v = +1. Mass leaving the grid is lost and
// reported.
struct KacResult {
    ProductDensity u;
    Vec mass;  // after each step
    std::size_t steps = 0;
};

KacResult kac_pde_solve(double lambda, const ProductDensity& u0, double dt, double T);

// Odd number of cells centred on 0 covering [-half_width, half_width].
Grid1D centred_grid(double half_width, double dx);

using JumpSampler = std::function<double(double x, RandomStream&)>;

struct PureJumpPath {
    std::vector<double> jump_times;
    std::vector<double> states;  // states[0] initial, states[k] after jump k
    double T = 0.0;

    // Time spent in each grid cell, normalized by T.
    GridDensity occupation(const Grid1D& grid) const;
    std::vector<double> holding_times() const;  // completed holds only
};

PureJumpPath kangaroo_simulate(const RealFunction& psi, double Lambda, const JumpSampler& jump, double x0, double T,
                               RandomStream& stream);

// Same jumps driven by age-dependent holding times.
struct SemiMarkovKangaroo {
    std::function<double(double x, double a)> q;    // holding density in a
    std::function<double(double x, double a)> cdf;  // optional closed form
    std::vector<double> breaks;                     // kinks or jumps of q in a
    JumpSampler jump;

    double holding_cdf(double x, double a) const;
    double hazard(double x, double a) const;
    // inverse of the holding CDF by safeguarded Newton
    double sample_holding(double x, RandomStream& stream) const;
    void check_normalized(double x, double tol = 1e-8) const;
};

PureJumpPath semi_markov_simulate(const SemiMarkovKangaroo& m, double x0, double T, RandomStream& stream);

// Ages t - t_n sampled on a grid of spacing dt after burn_in.
std::vector<double> sampled_ages(const PureJumpPath& path, double burn_in, double dt);

struct VesicleParams {
    double L = 1.0;
    double target = 0.6;
    double U_lo = 0.5, U_hi = 0.7;
    double kappa = 5.0;
    // intensity matrix over states (-1, 0, 1)
    std::vector<std::vector<double>> q = {{-1.0, 1.0, 0.0}, {0.5, -1.0, 0.5}, {0.0, 1.0, -1.0}};
};

struct VesicleStats {
    std::size_t runs = 0;
    std::size_t captures = 0;
    std::size_t escapes = 0;
    double capture_fraction = 0.0;
    double capture_stderr = 0.0;
    double mean_cycle_time = 0.0;
    double mean_capture_time = 0.0;  // over captured cycles, 0 when none
};

VesicleStats vesicle_preset(const VesicleParams& p, const RandomStream& root, std::size_t n_runs, unsigned threads = 1);

struct OccupancyProfile {
    Vec times;
    Vec fraction;
    bool hit = false;
    double liminf = 0.0;  // min over the second half of the grid
};

using WindowPredicate = std::function<bool(std::span<const double> x, int regime)>;

// Ensemble of trajectories sampled on a common grid.
OccupancyProfile occupancy_profile(const std::vector<Trajectory>& ensemble, const WindowPredicate& window);

// Time-sampled occupancy of (last coordinate, regime) over [t0, t1].
ProductDensity occupancy_histogram(const Trajectory& tr, const Grid1D& grid, int n_regimes, double t0, double t1,
                                   std::size_t coordinate);

double ks_statistic(std::vector<double> samples, const RealFunction& cdf);
double ks_two_sample(std::vector<double> a, std::vector<double> b);

}  // namespace semilab
