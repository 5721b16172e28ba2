#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "semilab/numerics.hpp"

namespace semilab {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

// Row-vector convention throughout: distributions are rows, x evolves as
// x e^{tQ}.
class IntensityMatrix {
public:
    // Validates: q_ij >= 0 off the diagonal, rows summing to 0 within tol.
    explicit IntensityMatrix(Matrix q, double tol = 1e-12);

    const Matrix& q() const noexcept { return q_; }
    Eigen::Index n() const noexcept { return q_.rows(); }
    double max_exit_rate() const noexcept;

private:
    Matrix q_;
};

IntensityMatrix validate_intensity(const Matrix& q, double tol = 1e-12);

struct UniformizedChain {
    double lambda = 0.0;
    Matrix jump;  // I + Q / lambda
};

UniformizedChain uniformize(const IntensityMatrix& Q, double lambda = 0.0);

// Smallest K with Poisson(mu) mass beyond K below tol, using the Chernoff
// bound e^{-mu} (e mu / k)^k for P(N >= k).
int poisson_truncation(double mu, double tol);
double poisson_tail_bound(double mu, int K);

// sum_k Poisson(mu; k) x P^k for k <= poisson_truncation(mu, tol).
RowVector poisson_mixture(const Matrix& P, double mu, const RowVector& x, double tol, int* terms = nullptr);
Matrix poisson_mixture(const Matrix& P, double mu, const Matrix& X, double tol);

RowVector evolve(const IntensityMatrix& Q, double t, const RowVector& x, double tol = 1e-13);
// e^{tQ} as a matrix, rows evolved together.
Matrix transition_matrix(const IntensityMatrix& Q, double t, double tol = 1e-13);

struct DysonPhillipsResult {
    RowVector value;
    double tail_bound = 0.0;  // e^{-lambda t} sum_{n >= N} (lambda t)^n / n!
};

// e^{-lambda t} sum_{n < N} lambda^n f S_n(t), with S_0(t) = e^{t A0} and
// S_{n+1}(t) = int_0^t S(s) K S_n(t - s) ds in row convention; the
// convolutions run on a uniform node grid with composite Simpson.
DysonPhillipsResult dyson_phillips(const IntensityMatrix& A0, const Matrix& K, double lambda, double t, const RowVector& f,
                                   int n_terms, int panels = 64);

Matrix jc_intensity(double lambda);
Matrix jc_transition(double lambda, double t);
// -3/4 ln(1 - 4p/3); pairwise halves the result.
double jc_distance(double p_hat, bool pairwise = false);

// Closed communicating classes of the support graph, each sorted.
std::vector<std::vector<std::size_t>> closed_classes(const IntensityMatrix& Q);
bool is_irreducible(const IntensityMatrix& Q);

// Unique probability solution of xQ = 0. Throws MultipleStationaryError
// carrying one solution per closed class when there are several.
RowVector stationary(const IntensityMatrix& Q);

using RateFunction = std::function<double(std::size_t)>;

struct BirthDeathSpec {
    RateFunction birth;
    RateFunction death;
    std::size_t N = 0;
};

BirthDeathSpec erythrocyte_spec(double b, double d, std::size_t N);
// Truncated generator on 0..N with reflecting top.
IntensityMatrix birth_death_intensity(const BirthDeathSpec& spec);
Vec birth_death_stationary(const BirthDeathSpec& spec);
Vec truncated_poisson(double mean, std::size_t N);

enum class Explosivity { non_explosive, explosive, inconclusive };
std::string to_string(Explosivity v);

struct ExplosivityOptions {
    double divergence = 1e12;
    double cauchy = 1e-14;
    std::size_t horizon = 100000;
};

struct ExplosivityResult {
    Explosivity verdict = Explosivity::inconclusive;
    std::size_t steps = 0;
    double last_value = 0.0;
    double last_increment = 0.0;
};

// Minimal nonnegative solution of Qx = lambda x started from x_0 = 1.
ExplosivityResult explosivity_check(const RateFunction& birth, const RateFunction& death, double lambda,
                                    ExplosivityOptions options = {});

// Mass in `window` of x0 e^{tQ} for each t in `times` (sorted ascending).
Vec foguel_profile(const IntensityMatrix& Q, const RowVector& x0, const Vec& times,
                   const std::vector<std::size_t>& window, double tol = 1e-13);

// Dense CSV matrix; a non-numeric first row is skipped as a header.
Matrix read_matrix_csv(std::istream& in);

}  // namespace semilab
