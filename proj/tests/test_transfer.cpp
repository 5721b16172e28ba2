#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "semilab/errors.hpp"
#include "semilab/transfer.hpp"

using namespace semilab;

TEST_CASE("pointwise transfer operator") {
    auto tent = PiecewiseExpandingMap::tent();
    CHECK(fp_apply_pointwise(tent, [](double) { return 1.0; }, 0.3) == doctest::Approx(1.0));
    CHECK(fp_apply_pointwise(tent, [](double x) { return 2 * x; }, 0.5) == doctest::Approx(1.0));
    CHECK(fp_apply_pointwise(tent, [](double x) { return 3 * x * x; }, 0.0) == doctest::Approx(1.5));
    auto logi = PiecewiseExpandingMap::logistic();
    // g* is invariant
    for (double x : {0.1, 0.37, 0.8})
        CHECK(fp_apply_pointwise(logi, logistic_invariant_density, x) ==
              doctest::Approx(logistic_invariant_density(x)).epsilon(1e-12));
    MapBranch a{0.0, 0.5, [](double x) { return x; }, [](double y) { return y; }, [](double) { return 1.0; }};
    MapBranch b{0.5, 1.0, [](double x) { return x; }, [](double y) { return y; }, [](double) { return 1.0; }};
    PiecewiseExpandingMap split("split identity", 0.0, 1.0, {a, b});
    CHECK_THROWS_AS(fp_apply_pointwise(split, [](double) { return 1.0; }, 0.5), BoundaryPointError);
}

TEST_CASE("map validation catches a wrong inverse") {
    MapBranch bad{0.0, 1.0, [](double x) { return x; }, [](double y) { return y / 2; }, [](double) { return 0.5; }};
    CHECK_THROWS_AS(PiecewiseExpandingMap("bad", 0.0, 1.0, {bad}), DomainError);
}

TEST_CASE("exact tent operator") {
    auto one = PiecewisePoly::constant(0.0, 1.0, 1.0);
    auto p1 = fp_tent_exact(one);
    CHECK(p1.size() == 1);
    CHECK(p1.pieces()[0] == PiecewisePoly::Coeffs{1.0, 0.0, 0.0, 0.0});
    auto lin = fp_tent_exact(PiecewisePoly::polynomial(0.0, 1.0, {0.0, 2.0, 0.0, 0.0}));
    CHECK(lin.pieces()[0] == PiecewisePoly::Coeffs{1.0, 0.0, 0.0, 0.0});
    auto sq = fp_tent_exact(PiecewisePoly::polynomial(0.0, 1.0, {0.0, 0.0, 3.0, 0.0}));
    CHECK(sq.pieces()[0] == PiecewisePoly::Coeffs{1.5, -1.5, 0.75, 0.0});
    CHECK(sq.integral() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(fp_tent_exact(PiecewisePoly::constant(0.0, 2.0, 0.5)), DomainError);
}

TEST_CASE("tent operator on piecewise data and Lipschitz decay") {
    // hat peaked at 1/4 with height 2; breakpoints multiply under the operator
    PiecewisePoly hat({0.0, 0.25, 1.0}, {{0.0, 8.0, 0, 0}, {8.0 / 3.0, -8.0 / 3.0, 0, 0}});
    CHECK(hat.integral() == doctest::Approx(1.0));
    CHECK(hat.lipschitz() == doctest::Approx(8.0));
    auto orbit = tent_orbit(hat, 8, hat.lipschitz());
    for (std::size_t k = 1; k < orbit.iterates.size(); ++k) {
        const auto& f = orbit.iterates[k];
        CHECK(f.integral() == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(f.lipschitz() <= orbit.iterates[k - 1].lipschitz() / 2.0 + 1e-12);
        CHECK(f.lipschitz() <= orbit.lipschitz[k] + 1e-12);
        CHECK((f - 1.0).abs_integral() <= orbit.lipschitz[k]);
    }
    // symmetric about 1/2: a single application halves the constant exactly
    PiecewisePoly roof({0.0, 0.5, 1.0}, {{0.0, 4.0, 0, 0}, {4.0, -4.0, 0, 0}});
    CHECK(fp_tent_exact(roof).lipschitz() == 2.0);
}

TEST_CASE("ulam matrices") {
    auto id = ulam_matrix(PiecewiseExpandingMap::identity(), 5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(id.entry(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-14));
    auto t2 = ulam_matrix(PiecewiseExpandingMap::tent(), 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(t2.entry(i, j) == 0.5);
    auto t4 = ulam_matrix(PiecewiseExpandingMap::tent(), 4);
    CHECK(t4.entry(0, 0) == 0.5);
    CHECK(t4.entry(0, 1) == 0.5);
    CHECK(t4.entry(0, 2) == 0.0);
    CHECK(t4.entry(0, 3) == 0.0);
    auto lg = ulam_matrix(PiecewiseExpandingMap::logistic(), 512);
    for (std::size_t i = 0; i < 512; ++i) {
        REQUIRE(std::abs(lg.row_sum(i) - 1.0) < 1e-12);
    }
}

TEST_CASE("invariant densities") {
    auto tent = ulam_matrix(PiecewiseExpandingMap::tent(), 64);
    auto r = invariant_density(tent, 1e-13, 100);
    CHECK(l1_distance(r.density, GridDensity::uniform(tent.grid())) < 1e-12);
    auto id = ulam_matrix(PiecewiseExpandingMap::identity(), 16);
    auto ri = invariant_density(id, 1e-13, 10);
    CHECK(ri.iterations == 1);
    auto lg = ulam_matrix(PiecewiseExpandingMap::logistic(), 1024);
    auto rl = invariant_density(lg, 1e-12, 5000);
    // frozen from an independent numpy construction of the same matrix
    CHECK(l1_distance(rl.density, logistic_invariant_masses(lg.grid())) == doctest::Approx(0.0395028285).epsilon(1e-6));
    CHECK_THROWS_AS(invariant_density(lg, 1e-14, 2), NonConvergenceError);
}

TEST_CASE("conjugate transport") {
    Grid1D g(0.0, 1.0, 1000);
    auto u = GridDensity::uniform(g);
    MonotoneMap id{0.0, 1.0, [](double x) { return x; }, [](double y) { return y; }};
    CHECK(l1_distance(conjugate_transport(id, u), u) < 1e-14);
    auto alpha = tent_logistic_conjugacy();
    auto gs = conjugate_transport(alpha, u);
    CHECK(l1_distance(gs, logistic_invariant_masses(g)) < 1e-3);
    Grid1D half(0.0, 0.5, 50);
    MonotoneMap dbl{0.0, 0.5, [](double x) { return 2 * x; }, [](double y) { return y / 2; }};
    auto out = conjugate_transport(dbl, GridDensity::uniform(half));
    CHECK(out.grid.hi == 1.0);
    CHECK(l1_distance(out, GridDensity::uniform(Grid1D(0.0, 1.0, 50))) < 1e-12);
    MonotoneMap fold{0.0, 1.0, [](double x) { return x * (1 - x); }, [](double y) { return y; }};
    CHECK_THROWS_AS(conjugate_transport(fold, u), DomainError);
}

TEST_CASE("exactness profiles") {
    auto U = ulam_matrix(PiecewiseExpandingMap::tent(), 256);
    auto fstar = GridDensity::uniform(U.grid());
    auto zero = exactness_profile(U, fstar, 5, fstar);
    for (double d : zero) CHECK(d == 0.0);
    // cell averages of 3x^2, Lipschitz constant 6
    auto f0 = cell_masses_from_cdf(U.grid(), [](double x) { return x * x * x; });
    auto d = exactness_profile(U, f0, 12, fstar);
    for (int t = 0; t <= 12; ++t) CHECK(d[t] <= 6.0 / std::pow(2.0, t));

    // logistic exactness through the conjugacy oracle
    auto L = ulam_matrix(PiecewiseExpandingMap::logistic(), 1024);
    auto ginv = logistic_invariant_masses(L.grid());
    auto dl = exactness_profile(L, GridDensity::uniform(L.grid()), 30, ginv);
    CHECK(dl.back() < 0.05);

    // two routes to U_psi^t f: direct Ulam vs conjugating the tent iterate
    auto alpha = tent_logistic_conjugacy();
    auto T = ulam_matrix(PiecewiseExpandingMap::tent(), 1024);
    auto pulled = conjugate_transport(inverse_of(alpha), GridDensity::uniform(L.grid()), T.grid());
    for (int t = 0; t < 6; ++t) pulled = T.apply(pulled);
    auto route2 = conjugate_transport(alpha, pulled, L.grid());
    auto route1 = GridDensity::uniform(L.grid());
    for (int t = 0; t < 6; ++t) route1 = L.apply(route1);
    CHECK(l1_distance(route1, route2) < 0.05);
}
