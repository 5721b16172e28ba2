#include "semilab/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "semilab/errors.hpp"

namespace semilab {

namespace {

void require_square(const Matrix& Q) {
    if (Q.rows() == 0 || Q.rows() != Q.cols()) throw ShapeError("generator must be square and nonempty");
    if (!Q.allFinite()) throw ValidationError("generator has non-finite entries");
}

double cluster_tol(const Matrix& Q) { return 1e-5 * std::max(1.0, Q.norm()); }

ComplexMatrix shifted(const Matrix& Q, Complex lambda) {
    ComplexMatrix A = Q.cast<Complex>();
    A.diagonal().array() -= lambda;
    return A;
}

int numerical_rank(const ComplexMatrix& A, double tol) {
    Eigen::JacobiSVD<ComplexMatrix> svd(A);
    const auto& s = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++r;
    return r;
}

// Orthonormal basis (columns) of ker A of prescribed dimension.
ComplexMatrix kernel_basis(const ComplexMatrix& A, int dim) {
    Eigen::JacobiSVD<ComplexMatrix> svd(A, Eigen::ComputeFullV);
    return svd.matrixV().rightCols(dim).eval();
}

ComplexMatrix matrix_power(const ComplexMatrix& A, int k) {
    ComplexMatrix R = ComplexMatrix::Identity(A.rows(), A.cols());
    for (int i = 0; i < k; ++i) R = R * A;
    return R;
}

}  // namespace

double max_row_sum(const Matrix& A) {
    if (A.size() == 0) return 0.0;
    return A.cwiseAbs().rowwise().sum().maxCoeff();
}

ConditionsPI check_conditions_P_I(const Matrix& Q) {
    require_square(Q);
    const auto n = Q.rows();
    ConditionsPI c;
    c.P = true;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && Q(i, j) < 0) c.P = false;

    // strong connectivity: everything reachable from 0 forwards and backwards
    auto reach = [&](bool forward) {
        std::vector<char> seen(n, 0);
        std::vector<Eigen::Index> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            auto i = stack.back();
            stack.pop_back();
            for (Eigen::Index j = 0; j < n; ++j) {
                double w = forward ? Q(i, j) : Q(j, i);
                if (j != i && w > 0 && !seen[j]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
    };
    c.I = reach(true) && reach(false);
    return c;
}

Matrix expm(const Matrix& A) {
    if (A.rows() != A.cols()) throw ShapeError("expm needs a square matrix");
    const double norm = max_row_sum(A);
    int s = 0;
    if (norm > 0.5) s = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Matrix B = A / std::ldexp(1.0, s);
    Matrix term = Matrix::Identity(A.rows(), A.cols());
    Matrix sum = term;
    for (int k = 1; k <= 30; ++k) {
        term = term * B / static_cast<double>(k);
        sum += term;
        if (max_row_sum(term) <= 1e-18 * max_row_sum(sum)) break;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

Matrix scaled_semigroup(const Matrix& Q, double t, double r) {
    require_square(Q);
    Matrix A = t * Q;
    A.diagonal().array() -= r * t;
    return expm(A);
}

std::vector<EigenCluster> eigen_clusters(const Matrix& Q) {
    require_square(Q);
    Eigen::EigenSolver<Matrix> es(Q, false);
    if (es.info() != Eigen::Success) throw NonConvergenceError("eigenvalue iteration failed", {}, 0.0);
    std::vector<Complex> ev(es.eigenvalues().data(), es.eigenvalues().data() + Q.rows());
    const double tol = cluster_tol(Q);

    // single-linkage grouping
    const std::size_t n = ev.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(ev[i] - ev[j]) < tol) parent[find(i)] = find(j);

    std::vector<EigenCluster> out;
    std::vector<std::size_t> root_of;
    for (std::size_t i = 0; i < n; ++i) {
        auto r = find(i);
        auto it = std::find(root_of.begin(), root_of.end(), r);
        if (it == root_of.end()) {
            root_of.push_back(r);
            out.push_back({ev[i], 1, 0});
        } else {
            auto& c = out[it - root_of.begin()];
            c.lambda += ev[i];
            ++c.multiplicity;
        }
    }
    for (auto& c : out) {
        c.lambda /= static_cast<double>(c.multiplicity);
        if (std::abs(c.lambda.imag()) < tol) c.lambda = c.lambda.real();
        c.order = jordan_order(Q, c.lambda, c.multiplicity);
    }
    std::sort(out.begin(), out.end(), [](const EigenCluster& a, const EigenCluster& b) {
        if (a.lambda.real() != b.lambda.real()) return a.lambda.real() > b.lambda.real();
        return a.lambda.imag() > b.lambda.imag();
    });
    return out;
}

int jordan_order(const Matrix& Q, Complex lambda, int multiplicity) {
    const auto n = static_cast<int>(Q.rows());
    const double scale = std::max(1.0, Q.norm());
    ComplexMatrix N = shifted(Q, lambda);
    ComplexMatrix P = N;
    int prev = n;
    for (int j = 1; j <= multiplicity; ++j) {
        int rank = numerical_rank(P, 1e-8 * std::pow(scale, j));
        if (rank <= n - multiplicity) return j;
        if (rank == prev) return j - 1 > 0 ? j - 1 : 1;  // ladder stalled
        prev = rank;
        P = P * N;
    }
    return multiplicity;
}

RankOneLimit perron_limit(const Matrix& Q) {
    auto c = check_conditions_P_I(Q);
    if (!c.P) throw PreconditionError("perron_limit needs nonnegative off-diagonal entries");
    if (!c.I) throw PreconditionError("perron_limit needs an irreducible generator");
    const auto n = Q.rows();
    RankOneLimit L;
    auto clusters = eigen_clusters(Q);
    L.r = clusters.front().lambda.real();
    L.gap = clusters.size() > 1 ? L.r - clusters[1].lambda.real() : std::numeric_limits<double>::infinity();

    Matrix A = Q;
    A.diagonal().array() -= L.r;
    Eigen::JacobiSVD<Matrix> left(A.transpose(), Eigen::ComputeFullV);
    RowVector x = left.matrixV().col(n - 1).transpose();
    Eigen::JacobiSVD<Matrix> right(A, Eigen::ComputeFullV);
    RowVector y = right.matrixV().col(n - 1).transpose();
    if (x.sum() < 0) x = -x;
    if (y.sum() < 0) y = -y;
    x /= x.sum();
    y /= y.dot(x);
    L.x_star = x;
    L.y_star = y;
    return L;
}

double rank_one_residual(const Matrix& Q, const RankOneLimit& L, double t, const RowVector& x) {
    if (x.size() != Q.rows()) throw ShapeError("row vector length does not match the generator");
    if (t < 0) throw DomainError("t must be nonnegative");
    const RowVector target = L.x_star * L.y_star.dot(x);
    // Q - rI has Perron root 0, so its uniformized jump matrix has spectral
    // radius 1 and the series never overflows.
    Matrix A = Q;
    A.diagonal().array() -= L.r;
    const double c = std::max(1e-300, (-A.diagonal().array()).maxCoeff());
    Matrix B = A / c;
    B.diagonal().array() += 1.0;
    RowVector v;
    if ((B.array() >= 0).all() && c > 1e-300 && c * t > 0) {
        v = poisson_mixture(B, c * t, x, 1e-16);
    } else {
        v = x * expm(t * A);
    }
    return (v - target).cwiseAbs().sum();
}

JordanGrowth jordan_growth(const Matrix& Q, const RowVector& x) {
    require_square(Q);
    if (x.size() != Q.rows()) throw ShapeError("row vector length does not match the generator");
    auto clusters = eigen_clusters(Q);
    const auto& top = clusters.front();
    const double tol = cluster_tol(Q);
    if (std::abs(top.lambda.imag()) > tol)
        throw PeriodicRegimeError("dominant eigenvalues form a complex pair", top.lambda.real(), top.lambda.imag());
    // a real eigenvalue tied in real part with a complex pair
    for (std::size_t i = 1; i < clusters.size(); ++i)
        if (std::abs(clusters[i].lambda.real() - top.lambda.real()) < tol && std::abs(clusters[i].lambda.imag()) > tol)
            throw PeriodicRegimeError("complex eigenvalues share the dominant real part", clusters[i].lambda.real(),
                                      clusters[i].lambda.imag());

    JordanGrowth g;
    g.r = top.lambda.real();
    g.k = top.order;
    double others = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < clusters.size(); ++i) others = std::max(others, clusters[i].lambda.real());
    const double gap = g.r - others;
    const double T0 = std::isfinite(gap) ? std::max(10.0, 40.0 / gap) : 10.0;

    // e^{-rt} t^{1-k} x e^{tQ} is a polynomial of degree k-1 in 1/t plus an
    // exponentially small remainder: Neville extrapolation to 1/t = 0.
    const int m = g.k + 1;
    std::vector<double> h(m);
    std::vector<RowVector> vals(m);
    for (int i = 0; i < m; ++i) {
        const double t = T0 * std::ldexp(1.0, i);
        g.ladder.push_back(t);
        h[i] = 1.0 / t;
        RowVector v = x * scaled_semigroup(Q, t, g.r);
        vals[i] = v * std::pow(t, 1 - g.k);
    }
    for (int level = 1; level < m; ++level)
        for (int i = m - 1; i >= level; --i)
            vals[i] = (h[i - level] * vals[i] - h[i] * vals[i - 1]) / (h[i - level] - h[i]);
    g.limit = vals[m - 1];
    return g;
}

ComplexMatrix SpectralSplit::pole_term(const Pole& p, double t) const {
    const auto n = generator.rows();
    ComplexMatrix N = shifted(generator, p.lambda);
    ComplexMatrix acc = ComplexMatrix::Zero(n, n);
    ComplexMatrix term = p.projection;
    double fact = 1.0;
    for (int j = 0; j < p.order; ++j) {
        if (j > 0) {
            term = term * N;
            fact *= t / j;
        }
        acc += fact * term;
    }
    return std::exp(p.lambda * t) * acc;
}

Matrix SpectralSplit::poles_sum(double t) const {
    const auto n = generator.rows();
    ComplexMatrix acc = ComplexMatrix::Zero(n, n);
    for (const auto& p : poles) acc += pole_term(p, t);
    return acc.real();
}

Matrix SpectralSplit::remainder_term(double t) const {
    const auto n = generator.rows();
    ComplexMatrix acc = ComplexMatrix::Zero(n, n);
    for (const auto& p : remainder) acc += pole_term(p, t);
    return acc.real();
}

double SpectralSplit::remainder_bound(double t) const { return M * std::exp((cutoff - eps) * t); }

SpectralSplit quasicompact_split(const Matrix& Q, double cutoff) {
    require_square(Q);
    const auto n = Q.rows();
    auto clusters = eigen_clusters(Q);
    // eigenvalues on the cutoff line count as poles
    const double tol = cluster_tol(Q);

    // generalized eigenspaces side by side
    ComplexMatrix W(n, n);
    std::vector<Eigen::Index> offset;
    Eigen::Index col = 0;
    for (const auto& c : clusters) {
        ComplexMatrix K = kernel_basis(matrix_power(shifted(Q, c.lambda), c.multiplicity), c.multiplicity);
        W.middleCols(col, c.multiplicity) = K;
        offset.push_back(col);
        col += c.multiplicity;
    }
    Eigen::JacobiSVD<ComplexMatrix> svd(W);
    const auto& s = svd.singularValues();
    SpectralSplit out;
    out.generator = Q;
    out.cutoff = cutoff;
    out.condition = s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
    if (!(out.condition <= 1e10))
        throw IllConditionedError("generalized eigenvector basis is ill-conditioned", out.condition);
    ComplexMatrix Winv = W.inverse();

    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const auto& c = clusters[i];
        Pole p;
        p.lambda = c.lambda;
        p.multiplicity = c.multiplicity;
        p.order = c.order;
        p.projection = W.middleCols(offset[i], c.multiplicity) * Winv.middleRows(offset[i], c.multiplicity);
        if (c.lambda.real() > cutoff - tol) {
            out.poles.push_back(std::move(p));
        } else {
            out.remainder_dimension += c.multiplicity;
            out.remainder.push_back(std::move(p));
        }
    }

    if (out.remainder.empty()) {
        out.M = 0.0;
        out.eps = std::numeric_limits<double>::infinity();
        return out;
    }
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& p : out.remainder) top = std::max(top, p.lambda.real());
    const double gap = cutoff - top;
    out.eps = 0.9 * gap;
    const double horizon = 50.0 / gap;
    double worst = 0.0;
    const int samples = 2000;
    for (int i = 0; i <= samples; ++i) {
        const double t = horizon * i / samples;
        worst = std::max(worst, max_row_sum(out.remainder_term(t)) * std::exp(-(cutoff - out.eps) * t));
    }
    out.M = std::max(1.0, 1.05 * worst);
    return out;
}

}  // namespace semilab
