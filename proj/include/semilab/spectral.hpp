#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "semilab/chains.hpp"

namespace semilab {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

struct ConditionsPI {
    bool P = false;  // nonnegative off-diagonal
    bool I = false;  // support graph strongly connected
};

ConditionsPI check_conditions_P_I(const Matrix& Q);

// Scaling and squaring with a Taylor core.
Matrix expm(const Matrix& A);

// e^{t (Q - r I)}: the semigroup with the growth e^{rt} divided out, so it
// stays finite when e^{tQ} itself would overflow.
Matrix scaled_semigroup(const Matrix& Q, double t, double r);

struct RankOneLimit {
    double r = 0.0;
    RowVector x_star;  // left Perron vector, sums to 1
    RowVector y_star;  // right Perron vector, <y*, x*> = 1
    double gap = 0.0;  // r - max Re of the rest of the spectrum
};

RankOneLimit perron_limit(const Matrix& Q);

// | e^{-rt} x e^{tQ} - x* <y*, x> |_1
double rank_one_residual(const Matrix& Q, const RankOneLimit& L, double t, const RowVector& x);

struct EigenCluster {
    Complex lambda;        // cluster mean
    int multiplicity = 0;  // algebraic
    int order = 0;         // largest Jordan block
};

// Eigenvalues grouped within 1e-5 max(1, |Q|), sorted by decreasing real part.
std::vector<EigenCluster> eigen_clusters(const Matrix& Q);

// Largest Jordan block for the eigenvalue lambda of algebraic multiplicity m,
// from the rank ladder of (Q - lambda I)^j with SVD tolerance 1e-8 |Q|.
int jordan_order(const Matrix& Q, Complex lambda, int multiplicity);

struct JordanGrowth {
    double r = 0.0;
    int k = 1;
    RowVector limit;  // lim e^{-rt} t^{1-k} x e^{tQ}
    std::vector<double> ladder;
};

// Throws PeriodicRegimeError when the dominant eigenvalues form a complex pair.
JordanGrowth jordan_growth(const Matrix& Q, const RowVector& x);

struct Pole {
    Complex lambda;
    int multiplicity = 0;
    int order = 0;
    ComplexMatrix projection;  // spectral projection onto the generalized eigenspace
};

struct SpectralSplit {
    double cutoff = 0.0;
    std::vector<Pole> poles;      // Re lambda >= cutoff
    std::vector<Pole> remainder;  // Re lambda < cutoff
    int remainder_dimension = 0;
    // |R(t)| <= M e^{(cutoff - eps) t} in the max-row-sum norm; one fitted
    // witness, not a canonical pair
    double M = 1.0;
    double eps = 1.0;
    double condition = 1.0;

    // e^{tQ} P for the pole (exact finite Jordan sum).
    ComplexMatrix pole_term(const Pole& p, double t) const;
    Matrix poles_sum(double t) const;
    Matrix remainder_term(double t) const;
    double remainder_bound(double t) const;

    Matrix generator;
};

SpectralSplit quasicompact_split(const Matrix& Q, double cutoff = 0.0);

double max_row_sum(const Matrix& A);

}  // namespace semilab
