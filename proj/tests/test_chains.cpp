#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "semilab/chains.hpp"
#include "semilab/errors.hpp"
#include "semilab/random.hpp"

using namespace semilab;

namespace {

Matrix random_intensity(RandomStream& s, int n, double scale = 1.0) {
    Matrix q = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (i != j) q(i, j) = scale * s.uniform();
        q(i, i) = -q.row(i).sum();
    }
    return q;
}

Matrix random_stochastic(RandomStream& s, int n) {
    Matrix k(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) k(i, j) = s.uniform();
        k.row(i) /= k.row(i).sum();
    }
    return k;
}

RowVector row(std::initializer_list<double> v) {
    RowVector r(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) r(i++) = x;
    return r;
}

}  // namespace

TEST_CASE("intensity validation") {
    CHECK_NOTHROW(validate_intensity(Matrix::Zero(3, 3)));
    Matrix ok(2, 2);
    ok << -1, 1, 1, -1;
    CHECK_NOTHROW(validate_intensity(ok));
    Matrix bad(2, 2);
    bad << -1, 2, 1, -1;
    CHECK_THROWS_WITH_AS(validate_intensity(bad), doctest::Contains("row 0"), ValidationError);
    Matrix neg(2, 2);
    neg << 1, -1, 0, 0;
    CHECK_THROWS_WITH_AS(validate_intensity(neg), doctest::Contains("(0,1)"), ValidationError);
}

TEST_CASE("poisson truncation is certified") {
    for (double mu : {0.01, 1.0, 10.0, 500.0}) {
        const int K = poisson_truncation(mu, 1e-12);
        double tail = 0.0;
        for (int k = K + 1; k < K + 2000; ++k) tail += std::exp(-mu + k * std::log(mu) - std::lgamma(k + 1.0));
        CHECK(tail < 1e-12);
        CHECK(poisson_tail_bound(mu, K) < 1e-12);
    }
}

TEST_CASE("evolve closed forms") {
    IntensityMatrix zero(Matrix::Zero(3, 3));
    RowVector x = row({0.2, 0.3, 0.5});
    CHECK((evolve(zero, 4.0, x) - x).cwiseAbs().maxCoeff() == 0.0);
    Matrix q(2, 2);
    q << -1, 1, 1, -1;
    IntensityMatrix two(q);
    for (double t : {0.0, 0.3, 2.0, 7.5}) {
        auto y = evolve(two, t, row({1.0, 0.0}));
        CHECK(std::abs(y(0) - (1 + std::exp(-2 * t)) / 2) < 1e-10);
        CHECK(std::abs(y(1) - (1 - std::exp(-2 * t)) / 2) < 1e-10);
    }
    IntensityMatrix jc(jc_intensity(0.7));
    for (double t : {0.1, 1.0, 10.0}) {
        Matrix P = transition_matrix(jc, t);
        CHECK((P - jc_transition(0.7, t)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("semigroup law, mass and positivity on random chains") {
    RandomStream s(101, 0);
    for (int rep = 0; rep < 10; ++rep) {
        IntensityMatrix Q(random_intensity(s, 5, 2.0));
        RowVector x = RowVector::NullaryExpr(5, [&]() { return s.uniform(); });
        x /= x.sum();
        const double a = 3 * s.uniform(), b = 3 * s.uniform();
        auto lhs = evolve(Q, a + b, x, 1e-12);
        auto rhs = evolve(Q, b, evolve(Q, a, x, 1e-12), 1e-12);
        CHECK((lhs - rhs).cwiseAbs().sum() < 2e-12 + 1e-13);
        CHECK(std::abs(lhs.sum() - 1.0) < 1e-12);
        CHECK(lhs.minCoeff() >= -1e-14);
        Matrix oracle = (Q.q() * (a + b)).exp();
        CHECK((lhs - x * oracle).cwiseAbs().maxCoeff() < 1e-11);
    }
}

TEST_CASE("dyson phillips") {
    RandomStream s(7, 7);
    IntensityMatrix A0(random_intensity(s, 4));
    RowVector f = row({0.1, 0.2, 0.3, 0.4});
    SUBCASE("K = I cancels") {
        auto r = dyson_phillips(A0, Matrix::Identity(4, 4), 1.0, 1.0, f, 30);
        CHECK((r.value - evolve(A0, 1.0, f)).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("A0 = 0 gives uniformization with P = K") {
        IntensityMatrix zero(Matrix::Zero(4, 4));
        Matrix K = random_stochastic(s, 4);
        auto r = dyson_phillips(zero, K, 2.0, 1.0, f, 40);
        auto u = poisson_mixture(K, 2.0, f, 1e-15);
        // S_n(t) = t^n K^n / n!; only the Simpson error of the polynomial
        // convolutions remains
        CHECK((r.value - u).cwiseAbs().maxCoeff() < 1e-8);
        auto fine = dyson_phillips(zero, K, 2.0, 1.0, f, 40, 256);
        CHECK((fine.value - u).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("swap perturbation of a two-state chain") {
        Matrix a(2, 2);
        a << -0.5, 0.5, 2.0, -2.0;
        IntensityMatrix A2(a);
        Matrix swap(2, 2);
        swap << 0, 1, 1, 0;
        auto r = dyson_phillips(A2, swap, 1.0, 1.0, row({1.0, 0.0}), 40);
        Matrix full = a + swap - Matrix::Identity(2, 2);
        RowVector ref = row({1.0, 0.0}) * full.exp();
        CHECK((r.value - ref).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("random perturbations agree within the truncation bound") {
        for (int rep = 0; rep < 5; ++rep) {
            IntensityMatrix A(random_intensity(s, 4));
            Matrix K = random_stochastic(s, 4);
            const double lam = 0.5 + s.uniform(), t = s.uniform();
            auto r = dyson_phillips(A, K, lam, t, f, 8);
            Matrix G = A.q() + lam * K - lam * Matrix::Identity(4, 4);
            RowVector ref = f * (G * t).exp();
            CHECK((r.value - ref).cwiseAbs().sum() <= r.tail_bound + 1e-8);
        }
    }
    CHECK_THROWS_AS(dyson_phillips(A0, Matrix::Identity(4, 4), 0.0, 1.0, f, 3), DomainError);
}

TEST_CASE("jukes cantor") {
    CHECK((jc_transition(1.0, 0.0) - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((jc_transition(1.0, 50.0).array() - 0.25).abs().maxCoeff() < 1e-15);
    CHECK(std::abs(jc_transition(1.0, 0.25)(0, 1) - 0.158030) < 1e-6);
    CHECK(std::abs(jc_transition(1.0, 0.25)(0, 1) - (0.25 - 0.25 * std::exp(-1.0))) < 1e-12);
    CHECK(jc_distance(0.0) == 0.0);
    CHECK(std::abs(jc_distance(0.3) - 0.383119) < 1e-6);
    CHECK(jc_distance(0.3, true) == doctest::Approx(jc_distance(0.3) / 2));
    CHECK_THROWS_AS(jc_distance(0.75), SaturationError);
}

TEST_CASE("stationary laws") {
    Matrix q(2, 2);
    q << -1, 1, 1, -1;
    auto s2 = stationary(IntensityMatrix(q));
    CHECK(s2(0) == doctest::Approx(0.5));
    auto sj = stationary(IntensityMatrix(jc_intensity(0.3)));
    CHECK((sj.array() - 0.25).abs().maxCoeff() < 1e-14);
    auto spec = erythrocyte_spec(5.0, 1.0, 100);
    auto Q = birth_death_intensity(spec);
    auto pi = stationary(Q);
    auto poi = truncated_poisson(5.0, 100);
    double gap = 0.0;
    for (int i = 0; i <= 100; ++i) gap += std::abs(pi(i) - poi[i]);
    CHECK(gap < 1e-8);
    CHECK((pi * Q.q()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((evolve(Q, 3.0, pi, 1e-12) - pi).cwiseAbs().sum() < 1e-11);

    Matrix red = Matrix::Zero(3, 3);
    red << -1, 0.5, 0.5, 0, 0, 0, 0, 0, 0;
    try {
        stationary(IntensityMatrix(red));
        CHECK(false);
    } catch (const MultipleStationaryError& e) {
        CHECK(e.solutions().size() == 2);
    }
    // transient state feeding a single closed class
    Matrix tr(3, 3);
    tr << -1, 1, 0, 0, -2, 2, 0, 3, -3;
    auto st = stationary(IntensityMatrix(tr));
    CHECK(st(0) == 0.0);
    CHECK(st(1) == doctest::Approx(0.6));
}

TEST_CASE("birth death recursion") {
    auto p = birth_death_stationary(erythrocyte_spec(1.0, 2.0, 50));
    auto poi = truncated_poisson(0.5, 50);
    double gap = 0.0;
    for (std::size_t i = 0; i <= 50; ++i) gap += std::abs(p[i] - poi[i]);
    CHECK(gap < 1e-12);
    BirthDeathSpec flat{[](std::size_t i) { return 1.0 + i; }, [](std::size_t i) { return static_cast<double>(i); }, 9};
    for (double v : birth_death_stationary(flat)) CHECK(v == doctest::Approx(0.1));
    // ratios that overflow without rescaling
    BirthDeathSpec steep{[](std::size_t) { return 1e300; }, [](std::size_t) { return 1e-10; }, 5};
    auto q = birth_death_stationary(steep);
    CHECK(q.back() == doctest::Approx(1.0));
}

TEST_CASE("explosivity") {
    auto b = [](std::size_t) { return 5.0; };
    auto d = [](std::size_t i) { return 1.0 * i; };
    CHECK(explosivity_check(b, d, 1.0).verdict == Explosivity::non_explosive);
    auto geo = [](std::size_t i) { return std::pow(2.0, static_cast<double>(i)); };
    auto none = [](std::size_t) { return 0.0; };
    CHECK(explosivity_check(geo, none, 1.0).verdict == Explosivity::explosive);
    CHECK(explosivity_check(b, none, 1.0).verdict == Explosivity::non_explosive);
    auto quad = [](std::size_t i) { return (1.0 + i) * (1.0 + i); };
    // explosive in the limit, but increments decay like 1/i^2 and stay above
    // the Cauchy threshold within the horizon
    CHECK(explosivity_check(quad, none, 1.0).verdict == Explosivity::inconclusive);
    auto dead = [](std::size_t i) { return i < 3 ? 1.0 : 0.0; };
    CHECK_THROWS_AS(explosivity_check(dead, none, 1.0), AbsorbingBoundaryError);
    auto slow = explosivity_check(b, none, 1e-9, {1e12, 1e-14, 50});
    CHECK(slow.verdict == Explosivity::inconclusive);
}

TEST_CASE("foguel profiles") {
    auto Q = birth_death_intensity(erythrocyte_spec(5.0, 1.0, 60));
    RowVector x0 = RowVector::Zero(61);
    x0(0) = 1.0;
    Vec times{1, 5, 10, 20, 30};
    auto prof = foguel_profile(Q, x0, times, {0, 1, 2});
    const double target = std::exp(-5.0) * 18.5;
    CHECK(std::abs(prof.back() - target) < 1e-6);
    // pure birth with reflecting top: mass leaves the low window
    BirthDeathSpec pb{[](std::size_t) { return 1.0; }, [](std::size_t) { return 0.0; }, 80};
    auto Qb = birth_death_intensity(pb);
    RowVector y0 = RowVector::Zero(81);
    y0(0) = 1.0;
    auto pprof = foguel_profile(Qb, y0, {1, 2, 5, 10, 20, 40}, {0, 1, 2, 3, 4, 5});
    for (std::size_t i = 1; i < pprof.size(); ++i) CHECK(pprof[i] < pprof[i - 1]);
    CHECK(pprof.back() < 1e-8);
    auto flat = foguel_profile(IntensityMatrix(Matrix::Zero(3, 3)), RowVector::Constant(3, 1.0 / 3), {1, 2}, {0});
    CHECK(flat[0] == flat[1]);
}

TEST_CASE("doubly stochastic jumps converge") {
    RandomStream s(5, 55);
    Matrix P(4, 4);
    P << 0.1, 0.4, 0.2, 0.3, 0.3, 0.1, 0.4, 0.2, 0.2, 0.3, 0.1, 0.4, 0.4, 0.2, 0.3, 0.1;
    IntensityMatrix Q(2.0 * (P - Matrix::Identity(4, 4)));
    RowVector x = row({1, 0, 0, 0});
    auto a = evolve(Q, 20.0, x), b = evolve(Q, 40.0, x);
    CHECK((a - b).cwiseAbs().sum() < 1e-10);
    CHECK((b.array() - 0.25).abs().maxCoeff() < 1e-10);
}

TEST_CASE("matrix csv") {
    std::stringstream ss("a,b\n-1,1\n2,-2\n");
    auto m = read_matrix_csv(ss);
    CHECK(m(1, 0) == 2.0);
    std::stringstream nh("-1,1\n2,-2\n");
    CHECK(read_matrix_csv(nh)(0, 0) == -1.0);
}
