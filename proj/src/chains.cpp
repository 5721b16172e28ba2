#include "semilab/chains.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

#include "semilab/errors.hpp"

namespace semilab {

IntensityMatrix::IntensityMatrix(Matrix q, double tol) : q_(std::move(q)) {
    if (q_.rows() != q_.cols() || q_.rows() == 0) throw ShapeError("intensity matrix must be square and nonempty");
    for (Eigen::Index i = 0; i < q_.rows(); ++i) {
        double row = 0.0, scale = 0.0;
        for (Eigen::Index j = 0; j < q_.cols(); ++j) {
            const double v = q_(i, j);
            if (!std::isfinite(v)) throw ValidationError("intensity matrix: non-finite entry at (" + std::to_string(i) + "," + std::to_string(j) + ")");
            if (i != j && v < 0.0)
                throw ValidationError("intensity matrix: negative off-diagonal entry at (" + std::to_string(i) + "," +
                                      std::to_string(j) + ")");
            row += v;
            scale = std::max(scale, std::abs(v));
        }
        if (std::abs(row) > tol * std::max(1.0, scale))
            throw ValidationError("intensity matrix: row " + std::to_string(i) + " sums to " + std::to_string(row) +
                                  ", not 0");
    }
}

double IntensityMatrix::max_exit_rate() const noexcept { return (-q_.diagonal()).maxCoeff(); }

IntensityMatrix validate_intensity(const Matrix& q, double tol) { return IntensityMatrix(q, tol); }

UniformizedChain uniformize(const IntensityMatrix& Q, double lambda) {
    const double rate = Q.max_exit_rate();
    if (lambda == 0.0) lambda = rate;
    if (lambda < rate) throw DomainError("uniformize: lambda below the largest exit rate");
    UniformizedChain u;
    u.lambda = lambda;
    u.jump = Matrix::Identity(Q.n(), Q.n());
    if (lambda > 0.0) u.jump += Q.q() / lambda;
    // exact zeros on the diagonal can come out as tiny negatives
    for (Eigen::Index i = 0; i < Q.n(); ++i) u.jump(i, i) = std::max(0.0, u.jump(i, i));
    return u;
}

double poisson_tail_bound(double mu, int K) {
    const double k = K + 1.0;
    if (mu <= 0.0) return 0.0;
    if (k <= mu) return 1.0;
    return std::exp(-mu + k * (1.0 + std::log(mu) - std::log(k)));
}

int poisson_truncation(double mu, double tol) {
    if (!(tol > 0.0)) throw DomainError("poisson_truncation: tolerance must be positive");
    if (!(mu >= 0.0)) throw DomainError("poisson_truncation: negative mean");
    if (mu == 0.0) return 0;
    const double log_tol = std::log(tol);
    int k = std::max(1, static_cast<int>(std::ceil(mu)) + 1);
    while (-mu + k * (1.0 + std::log(mu) - std::log(static_cast<double>(k))) >= log_tol) ++k;
    return k - 1;
}

namespace {

double poisson_weight(double mu, int k) {
    return std::exp(-mu + k * std::log(mu) - std::lgamma(k + 1.0));
}

}  // namespace

RowVector poisson_mixture(const Matrix& P, double mu, const RowVector& x, double tol, int* terms) {
    if (P.rows() != x.size()) throw ShapeError("poisson_mixture: size mismatch");
    if (mu == 0.0) {
        if (terms) *terms = 0;
        return x;
    }
    const int K = poisson_truncation(mu, tol);
    RowVector v = x;
    RowVector acc = poisson_weight(mu, 0) * v;
    for (int k = 1; k <= K; ++k) {
        v = v * P;
        acc += poisson_weight(mu, k) * v;
    }
    if (terms) *terms = K;
    return acc;
}

Matrix poisson_mixture(const Matrix& P, double mu, const Matrix& X, double tol) {
    if (mu == 0.0) return X;
    const int K = poisson_truncation(mu, tol);
    Matrix v = X;
    Matrix acc = poisson_weight(mu, 0) * v;
    for (int k = 1; k <= K; ++k) {
        v = v * P;
        acc += poisson_weight(mu, k) * v;
    }
    return acc;
}

RowVector evolve(const IntensityMatrix& Q, double t, const RowVector& x, double tol) {
    if (!(tol > 0.0)) throw DomainError("evolve: tolerance must be positive");
    if (!(t >= 0.0)) throw DomainError("evolve: negative time");
    if (x.size() != Q.n()) throw ShapeError("evolve: vector length does not match Q");
    const auto u = uniformize(Q);
    return poisson_mixture(u.jump, u.lambda * t, x, tol);
}

Matrix transition_matrix(const IntensityMatrix& Q, double t, double tol) {
    if (!(t >= 0.0)) throw DomainError("transition_matrix: negative time");
    const auto u = uniformize(Q);
    return poisson_mixture(u.jump, u.lambda * t, Matrix(Matrix::Identity(Q.n(), Q.n())), tol);
}

DysonPhillipsResult dyson_phillips(const IntensityMatrix& A0, const Matrix& K, double lambda, double t, const RowVector& f,
                                   int n_terms, int panels) {
    if (!(lambda > 0.0)) throw DomainError("dyson_phillips: lambda must be positive");
    if (n_terms < 1) throw DomainError("dyson_phillips: need at least one term");
    if (!(t >= 0.0)) throw DomainError("dyson_phillips: negative time");
    if (K.rows() != A0.n() || K.cols() != A0.n() || f.size() != A0.n()) throw ShapeError("dyson_phillips: size mismatch");
    if (panels < 2) panels = 2;
    if (panels % 2) ++panels;
    const Eigen::Index n = A0.n();

    DysonPhillipsResult out;
    // tail of the Poisson series beyond the kept terms
    {
        double tail = 0.0;
        const double mu = lambda * t;
        if (mu > 0.0) {
            double head = 0.0;
            for (int k = 0; k < n_terms; ++k) head += poisson_weight(mu, k);
            tail = std::max(0.0, 1.0 - head);
            if (tail < 1e-12) {
                tail = 0.0;
                for (int k = n_terms; k < n_terms + 400; ++k) tail += poisson_weight(mu, k);
            }
        }
        out.tail_bound = tail;
    }
    if (t == 0.0) {
        out.value = f;
        return out;
    }

    const int P = panels;
    const double h = t / P;
    std::vector<Matrix> E(P + 1), EK(P + 1);
    for (int j = 0; j <= P; ++j) {
        E[j] = transition_matrix(A0, j * h, 1e-16);
        EK[j] = E[j] * K;
    }
    const Matrix EKhalf = transition_matrix(A0, 0.5 * h, 1e-16) * K;

    // Simpson weights on j panels (j even), or Simpson + 3/8 rule (j odd >= 3)
    auto weights = [&](int j) {
        std::vector<double> w(j + 1, 0.0);
        int simpson_panels = (j % 2 == 0) ? j : j - 3;
        for (int i = 0; i < simpson_panels; i += 2) {
            w[i] += h / 3.0;
            w[i + 1] += 4.0 * h / 3.0;
            w[i + 2] += h / 3.0;
        }
        if (j % 2 == 1) {
            const int s = simpson_panels;
            w[s] += 3.0 * h / 8.0;
            w[s + 1] += 9.0 * h / 8.0;
            w[s + 2] += 9.0 * h / 8.0;
            w[s + 3] += 3.0 * h / 8.0;
        }
        return w;
    };
    std::vector<std::vector<double>> W(P + 1);
    for (int j = 2; j <= P; ++j) W[j] = weights(j);

    std::vector<Matrix> M = E;  // level 0
    RowVector sum = f * M[P];
    double scale = 1.0;  // lambda^n
    for (int level = 1; level < n_terms; ++level) {
        std::vector<Matrix> next(P + 1, Matrix::Zero(n, n));
        // single panel: Simpson with the midpoint value of M from cubic
        // interpolation (exact at the first level, where M = E)
        {
            const Matrix Mhalf = level == 1 ? transition_matrix(A0, 0.5 * h, 1e-16)
                                 : P >= 3   ? Matrix((5.0 * M[0] + 15.0 * M[1] - 5.0 * M[2] + M[3]) / 16.0)
                                            : Matrix((3.0 * M[0] + 6.0 * M[1] - M[2]) / 8.0);
            next[1] = (h / 6.0) * (EK[0] * M[1] + 4.0 * EKhalf * Mhalf + EK[1] * M[0]);
        }
        for (int j = 2; j <= P; ++j) {
            Matrix acc = Matrix::Zero(n, n);
            const auto& w = W[j];
            for (int i = 0; i <= j; ++i) acc.noalias() += w[i] * (EK[i] * M[j - i]);
            next[j] = acc;
        }
        M.swap(next);
        scale *= lambda;
        sum += scale * (f * M[P]);
    }
    out.value = std::exp(-lambda * t) * sum;
    return out;
}

Matrix jc_intensity(double lambda) {
    if (!(lambda > 0.0)) throw DomainError("jukes-cantor: rate must be positive");
    Matrix q = Matrix::Constant(4, 4, lambda);
    q.diagonal().setConstant(-3.0 * lambda);
    return q;
}

Matrix jc_transition(double lambda, double t) {
    if (!(lambda > 0.0)) throw DomainError("jukes-cantor: rate must be positive");
    if (!(t >= 0.0)) throw DomainError("jukes-cantor: negative time");
    const double e = std::exp(-4.0 * lambda * t);
    Matrix p = Matrix::Constant(4, 4, 0.25 - 0.25 * e);
    p.diagonal().setConstant(0.25 + 0.75 * e);
    return p;
}

double jc_distance(double p_hat, bool pairwise) {
    if (!(p_hat >= 0.0)) throw DomainError("p out of domain [0, 0.75)");
    if (p_hat >= 0.75) throw SaturationError("p out of domain [0, 0.75)");
    const double d = -0.75 * std::log(1.0 - 4.0 * p_hat / 3.0);
    return pairwise ? 0.5 * d : d;
}

namespace {

std::vector<std::vector<char>> reachability(const IntensityMatrix& Q) {
    const auto n = static_cast<std::size_t>(Q.n());
    std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        auto& r = reach[s];
        r[s] = 1;
        stack.assign({s});
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i && !r[j] && Q.q()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) {
                    r[j] = 1;
                    stack.push_back(j);
                }
            }
        }
    }
    return reach;
}

RowVector solve_closed_class(const IntensityMatrix& Q, const std::vector<std::size_t>& cls) {
    const auto m = static_cast<Eigen::Index>(cls.size());
    RowVector full = RowVector::Zero(Q.n());
    if (m == 1) {
        full(static_cast<Eigen::Index>(cls[0])) = 1.0;
        return full;
    }
    Matrix A(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b)
            A(b, a) = Q.q()(static_cast<Eigen::Index>(cls[a]), static_cast<Eigen::Index>(cls[b]));
    // x Q_C = 0 transposed, with the last equation replaced by sum x = 1
    A.row(m - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs(m - 1) = 1.0;
    Eigen::VectorXd x = A.fullPivLu().solve(rhs);
    for (Eigen::Index a = 0; a < m; ++a) {
        double v = x(a);
        if (v < 0.0) {
            if (v < -1e-12) throw NonConvergenceError("stationary: solution has negative entries", {}, v);
            v = 0.0;
        }
        full(static_cast<Eigen::Index>(cls[a])) = v;
    }
    return full / full.sum();
}

}  // namespace

std::vector<std::vector<std::size_t>> closed_classes(const IntensityMatrix& Q) {
    const auto n = static_cast<std::size_t>(Q.n());
    const auto reach = reachability(Q);
    std::vector<char> seen(n, 0);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (seen[i]) continue;
        std::vector<std::size_t> scc;
        bool closed = true;
        for (std::size_t j = 0; j < n; ++j) {
            if (reach[i][j] && reach[j][i]) scc.push_back(j);
            else if (reach[i][j]) closed = false;
        }
        for (auto j : scc) seen[j] = 1;
        if (closed) out.push_back(std::move(scc));
    }
    return out;
}

bool is_irreducible(const IntensityMatrix& Q) {
    const auto cls = closed_classes(Q);
    return cls.size() == 1 && cls[0].size() == static_cast<std::size_t>(Q.n());
}

RowVector stationary(const IntensityMatrix& Q) {
    const auto classes = closed_classes(Q);
    if (classes.size() == 1) return solve_closed_class(Q, classes[0]);
    std::vector<std::vector<double>> sols;
    for (const auto& c : classes) {
        RowVector s = solve_closed_class(Q, c);
        sols.emplace_back(s.data(), s.data() + s.size());
    }
    throw MultipleStationaryError("stationary: chain is reducible with " + std::to_string(classes.size()) +
                                      " closed classes",
                                  std::move(sols));
}

BirthDeathSpec erythrocyte_spec(double b, double d, std::size_t N) {
    if (!(b > 0.0) || !(d >= 0.0)) throw DomainError("erythrocyte: need b > 0, d >= 0");
    return {[b](std::size_t) { return b; }, [d](std::size_t i) { return d * static_cast<double>(i); }, N};
}

IntensityMatrix birth_death_intensity(const BirthDeathSpec& spec) {
    const auto n = static_cast<Eigen::Index>(spec.N + 1);
    Matrix q = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        if (i + 1 < n) q(i, i + 1) = spec.birth(ui);
        if (i > 0) q(i, i - 1) = spec.death(ui);
        q(i, i) = -(q.row(i).sum());
    }
    return IntensityMatrix(std::move(q));
}

Vec birth_death_stationary(const BirthDeathSpec& spec) {
    Vec logp(spec.N + 1, 0.0);
    for (std::size_t i = 0; i < spec.N; ++i) {
        const double b = spec.birth(i), d = spec.death(i + 1);
        if (!(b > 0.0) || !(d > 0.0)) throw DomainError("birth_death_stationary: need b_i > 0 and d_{i+1} > 0");
        logp[i + 1] = logp[i] + std::log(b) - std::log(d);
    }
    // work in log space so large ratios cannot overflow before normalizing
    const double top = *std::max_element(logp.begin(), logp.end());
    Vec p(logp.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logp[i] - top);
        total += p[i];
    }
    if (!std::isfinite(total) || !(total > 0.0))
        throw NonConvergenceError("birth_death_stationary: non-finite normalization", p, total);
    for (double& v : p) v /= total;
    return p;
}

Vec truncated_poisson(double mean, std::size_t N) {
    Vec p(N + 1);
    for (std::size_t k = 0; k <= N; ++k) p[k] = std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0));
    double s = 0.0;
    for (double v : p) s += v;
    for (double& v : p) v /= s;
    return p;
}

std::string to_string(Explosivity v) {
    switch (v) {
        case Explosivity::non_explosive: return "non_explosive";
        case Explosivity::explosive: return "explosive";
        case Explosivity::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

ExplosivityResult explosivity_check(const RateFunction& birth, const RateFunction& death, double lambda,
                                    ExplosivityOptions opt) {
    if (!(lambda > 0.0)) throw DomainError("explosivity_check: lambda must be positive");
    ExplosivityResult r;
    double prev = 1.0, x = 1.0;
    int quiet = 0;
    for (std::size_t i = 0; i < opt.horizon; ++i) {
        const double b = birth(i);
        if (!(b > 0.0)) throw AbsorbingBoundaryError("explosivity_check: b_" + std::to_string(i) + " = 0 is absorbing");
        const double d = i == 0 ? 0.0 : death(i);
        const double next = x + (lambda * x + d * (x - prev)) / b;
        r.steps = i + 1;
        r.last_value = next;
        r.last_increment = next - x;
        if (next > opt.divergence) {
            r.verdict = Explosivity::non_explosive;
            return r;
        }
        quiet = (next - x < opt.cauchy) ? quiet + 1 : 0;
        prev = x;
        x = next;
        if (quiet >= 16) {
            r.verdict = Explosivity::explosive;
            return r;
        }
    }
    r.verdict = Explosivity::inconclusive;
    return r;
}

Vec foguel_profile(const IntensityMatrix& Q, const RowVector& x0, const Vec& times, const std::vector<std::size_t>& window,
                   double tol) {
    Vec out;
    out.reserve(times.size());
    RowVector x = x0;
    double now = 0.0;
    for (double t : times) {
        if (t < now) throw DomainError("foguel_profile: times must be ascending");
        x = evolve(Q, t - now, x, tol);
        now = t;
        double m = 0.0;
        for (auto i : window) {
            if (i >= static_cast<std::size_t>(Q.n())) throw DomainError("foguel_profile: window index out of range");
            m += x(static_cast<Eigen::Index>(i));
        }
        out.push_back(m);
    }
    return out;
}

Matrix read_matrix_csv(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            throw ValidationError("matrix csv: non-numeric entry in '" + line + "'");
        }
        first = false;
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("matrix csv: no rows");
    const auto n = rows.size();
    Matrix q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != rows[0].size()) throw ShapeError("matrix csv: ragged rows");
        for (std::size_t j = 0; j < rows[i].size(); ++j) q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return q;
}

}  // namespace semilab
