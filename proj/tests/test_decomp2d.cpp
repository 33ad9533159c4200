#include "doctest.h"

#include <cmath>
#include <sstream>

#include "bgrid/decomp2d.hpp"
#include "bgrid/util.hpp"

using namespace bgrid;

TEST_CASE("smooth |.| blends: pinned values and C^2 matching at the edge") {
    SmoothAbs psi;  // quartic, kappa = 1/3
    const double k = 1.0 / 3.0;
    CHECK(psi(0.0) == doctest::Approx(3 * k / 8).epsilon(1e-15));
    CHECK(psi(k) == doctest::Approx(k).epsilon(1e-15));
    CHECK(psi(-k) == doctest::Approx(k).epsilon(1e-15));
    CHECK(psi(0.7) == 0.7);  // exact outside the blend zone
    CHECK(psi(-2.0) == 2.0);
    CHECK(psi.deriv(k) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(psi.deriv(-k) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(psi.deriv(0.0) == 0.0);
    CHECK(psi.second_deriv(k) == doctest::Approx(0.0));
    CHECK(psi.second_deriv(0.0) == doctest::Approx(3 / (2 * k)));

    // even, convex, dominating |.|, derivative consistent with a quotient
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        double y = uniform(rng, -1.0, 1.0);
        CHECK(psi(y) == psi(-y));
        CHECK(psi(y) >= std::abs(y));
        CHECK(psi.second_deriv(y) >= 0.0);
        double q = (psi(y + 1e-6) - psi(y - 1e-6)) / 2e-6;
        CHECK(std::abs(q - psi.deriv(y)) <= 1e-6);
    }
    CHECK_THROWS_AS(SmoothAbs(0.0), BuildError);
}

TEST_CASE("mollified |.| has the same contract with an infinitely smooth blend") {
    SmoothAbs psi(1.0 / 3.0, SmoothAbsKind::mollified);
    CHECK(psi(0.5) == 0.5);  // outside the half-width: convolution is exact
    CHECK(psi(-1.25) == 1.25);
    CHECK(psi(0.0) > 0.0);
    CHECK(psi.deriv(0.0) == doctest::Approx(0.0));

    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        double y = uniform(rng, -0.33, 0.33);
        CHECK(psi(y) == doctest::Approx(psi(-y)).epsilon(1e-13));
        CHECK(psi(y) >= std::abs(y) - 1e-13);
        CHECK(psi.second_deriv(y) >= 0.0);
        double q = (psi(y + 1e-5) - psi(y - 1e-5)) / 2e-5;
        CHECK(std::abs(q - psi.deriv(y)) <= 1e-7);
    }
    // continuity across the matching point
    CHECK(psi(1.0 / 3.0 - 1e-9) == doctest::Approx(psi(1.0 / 3.0 + 1e-9)).epsilon(1e-8));
}

TEST_CASE("splitting the identity and the rank-one corner cases") {
    MatrixField a;
    a.points = {{0.0, 0.0}, {1.0, 0.0}, {0.5, 0.5}};
    a.values = {{1.0, 0.0, 1.0},   // identity
                {1.0, 1.0, 1.0},   // rank one, fully correlated
                {0.0, 0.0, 0.0}};  // zero is fine: everything vanishes

    auto w = decompose(a);
    CHECK(w.values[0].a11hat == doctest::Approx(7.0 / 16).epsilon(1e-14));
    CHECK(w.values[0].a22hat == doctest::Approx(7.0 / 16).epsilon(1e-14));
    CHECK(w.values[0].a12hat == doctest::Approx(1.0 / 16).epsilon(1e-14));
    CHECK(w.values[0].a1m2hat == doctest::Approx(1.0 / 16).epsilon(1e-14));

    CHECK(w.values[1].a12hat == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(w.values[1].a1m2hat == doctest::Approx(0.0));
    CHECK(w.values[1].a11hat == doctest::Approx(0.0));
    CHECK(w.values[1].a22hat == doctest::Approx(0.0));

    CHECK(w.values[2].a11hat == 0.0);
    CHECK(w.values[2].a12hat == 0.0);

    auto back = reconstruct(w);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(back.values[i].a11 == doctest::Approx(a.values[i].a11).epsilon(1e-14));
        CHECK(back.values[i].a12 == doctest::Approx(a.values[i].a12).epsilon(1e-14));
        CHECK(back.values[i].a22 == doctest::Approx(a.values[i].a22).epsilon(1e-14));
    }
}

TEST_CASE("round trip over random dominant fields keeps weights nonnegative") {
    Rng rng(2025);
    for (int kind = 0; kind < 2; ++kind) {
        SmoothAbs psi(1.0 / 3.0,
                      kind == 0 ? SmoothAbsKind::quartic : SmoothAbsKind::mollified);
        for (int trial = 0; trial < 50; ++trial) {
            MatrixField a;
            for (int p = 0; p < 8; ++p) {
                double a11 = uniform(rng, 0.1, 2.0);
                double a22 = uniform(rng, 0.1, 2.0);
                double a12 = uniform(rng, -1.0, 1.0) * std::min(a11, a22);
                a.points.push_back({uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)});
                a.values.push_back({a11, a12, a22});
            }
            auto w = decompose(a, psi);
            for (const auto& v : w.values) {
                CHECK(v.a11hat >= -1e-12);
                CHECK(v.a22hat >= -1e-12);
                CHECK(v.a12hat >= -1e-12);
                CHECK(v.a1m2hat >= -1e-12);
            }
            auto back = reconstruct(w);
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(std::abs(back.values[i].a11 - a.values[i].a11) <= 1e-12);
                CHECK(std::abs(back.values[i].a12 - a.values[i].a12) <= 1e-12);
                CHECK(std::abs(back.values[i].a22 - a.values[i].a22) <= 1e-12);
            }
        }
    }
}

TEST_CASE("non-dominant and asymmetric inputs are rejected with a witness") {
    MatrixField bad;
    bad.points = {{0.0, 0.0}, {2.0, 3.0}};
    bad.values = {{1.0, 0.5, 1.0}, {1.0, 1.5, 2.0}};  // second: |a12| > min
    CHECK_THROWS_WITH_AS(decompose(bad), doctest::Contains("off-diagonal dominance"),
                         BuildError);
    CHECK_THROWS_WITH_AS(decompose(bad), doctest::Contains("(2, 3)"), BuildError);

    MatrixField neg;
    neg.points = {{-1.0, 4.0}};
    neg.values = {{-0.2, 0.0, 1.0}};
    CHECK_THROWS_WITH_AS(decompose(neg), doctest::Contains("negative a11"), BuildError);

    CHECK_THROWS_WITH_AS(as_symmetric(1.0, 0.5, 0.7, 1.0), doctest::Contains("not symmetric"),
                         BuildError);
    auto s = as_symmetric(1.0, 0.5, 0.5, 2.0);
    CHECK(s.a12 == 0.5);
}

TEST_CASE("lipschitz probe: exact quotient for a quadratic diagonal field") {
    MatrixField a;
    for (double x : {0.5, 1.0, 1.5}) {
        a.points.push_back({x, 0.0});
        a.values.push_back({x * x, 0.0, x * x});
    }
    auto w = decompose(a);
    auto pairs = grid_neighbor_pairs(a.points);
    REQUIRE(pairs.size() == 2);
    auto probe = lipschitz_probe(w, pairs);
    // sqrt(a11hat) = sqrt(7)/4 * x: the quotient is the slope itself
    CHECK(probe.a11hat == doctest::Approx(std::sqrt(7.0) / 4).epsilon(1e-13));
    CHECK(probe.a12hat == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(probe.max() == doctest::Approx(std::sqrt(7.0) / 4).epsilon(1e-13));

    std::vector<std::pair<std::size_t, std::size_t>> same{{1, 1}};
    CHECK_THROWS_WITH_AS(lipschitz_probe(w, same), doctest::Contains("coincident"), BuildError);
}

TEST_CASE("neighbour pairs of an axis-aligned grid") {
    std::vector<std::array<double, 2>> pts;
    for (double y : {0.0, 1.0})
        for (double x : {0.0, 0.5, 1.0}) pts.push_back({x, y});
    auto pairs = grid_neighbor_pairs(pts);
    CHECK(pairs.size() == 7);  // 4 horizontal + 3 vertical
    for (const auto& [i, j] : pairs) {
        double dx = std::abs(pts[i][0] - pts[j][0]);
        double dy = std::abs(pts[i][1] - pts[j][1]);
        CHECK(((dx > 0) != (dy > 0)));  // axis-aligned, never diagonal
    }
}

TEST_CASE("directional csv round-trips bytes") {
    MatrixField a;
    a.points = {{0.25, -1.5}, {0.5, -1.5}};
    a.values = {{1.0, 0.3, 0.8}, {0.7, -0.1, 0.9}};
    auto w = decompose(a);

    std::ostringstream first;
    write_directional_csv(w, first);
    std::istringstream in(first.str());
    auto back = read_directional_csv(in);
    std::ostringstream second;
    write_directional_csv(back, second);
    CHECK(first.str() == second.str());

    std::istringstream min("x0,x1,a11,a12,a22\n0,0,1,0.25,2\n");
    auto m = read_matrix_csv(min);
    REQUIRE(m.size() == 1);
    CHECK(m.values[0].a12 == 0.25);

    std::istringstream shorty("0,0,1\n");
    CHECK_THROWS_WITH_AS(read_matrix_csv(shorty), doctest::Contains("columns"), BuildError);
}
