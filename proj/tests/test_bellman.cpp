#include "doctest.h"

#include <cmath>

#include "bgrid/bellman.hpp"
#include "bgrid/catalog.hpp"

using namespace bgrid;

namespace {

ControlProblem drift_1d(double a, double b_fwd) {
    ControlProblem pr;
    pr.name = "inline";
    pr.dim = 1;
    pr.d1 = 1;
    pr.controls = {"only"};
    pr.r = [](int, double) { return 1.0; };
    pr.a = [a](int, int, double, std::span<const double>, double) { return a; };
    pr.b = [b_fwd](int, int k, double, std::span<const double>) { return k == 1 ? b_fwd : 0.0; };
    pr.c = [](int, double, std::span<const double>) { return 1.0; };
    pr.f = [](int, std::span<const double>, double, double, std::span<const double>) {
        return 0.0;
    };
    return pr;
}

double weight_at(const StencilWeights& w, const Point& off) {
    for (std::size_t i = 0; i < w.offsets.size(); ++i)
        if (w.offsets[i] == off) return w.weights[i];
    FAIL("offset not present in stencil");
    return 0;
}

}  // namespace

TEST_CASE("stencil weights: upwinded drift and the monotonicity threshold") {
    std::vector<double> x{0.0};

    // a = 1/2 on both signs, forward drift 1, h = 1/2
    auto pr = drift_1d(0.5, 1.0);
    auto dirs = DirectionSet::make(1, 0.5, 1.0, {{1}});
    auto w = stencil_weights(pr, dirs, 0, 0.0, x);
    CHECK(weight_at(w, {1}) == doctest::Approx(6.0));
    CHECK(weight_at(w, {-1}) == doctest::Approx(4.0));
    CHECK(w.center() == doctest::Approx(-10.0));
    CHECK(check_max_principle(w).passed);

    // backward drift at the exact threshold a = h0 * b^-: weight hits zero
    auto edge = drift_1d(1.0, -1.0);
    auto dirs1 = DirectionSet::make(1, 1.0, 1.0, {{1}});
    auto we = stencil_weights(edge, dirs1, 0, 0.0, x);
    CHECK(weight_at(we, {1}) == doctest::Approx(1.0));
    CHECK(weight_at(we, {-1}) == doctest::Approx(2.0));
    CHECK(we.center() == doctest::Approx(-3.0));
    CHECK(check_max_principle(we).passed);

    // past the threshold the forward weight goes negative, with a witness
    const auto& bad = catalog_get("badb1d");
    auto wb = stencil_weights(bad.problem, bad.directions(1.0), 0, 0.0, x);
    CHECK(weight_at(wb, {1}) == doctest::Approx(-3.0));
    auto ck = check_max_principle(wb);
    CHECK(!ck.passed);
    REQUIRE(ck.witness_offset.has_value());
    CHECK(*ck.witness_offset == Point{1});
    CHECK(ck.worst_off_center == doctest::Approx(-3.0));

    // row sums vanish identically (the zeroth-order part is kept out)
    CHECK(std::abs(ck.row_sum) <= ck.tol);
}

TEST_CASE("stencil weights: zero directions drop out, diagonals accumulate") {
    // 2d set with a repeated axis and a zero direction
    ControlProblem pr;
    pr.name = "inline2";
    pr.dim = 2;
    pr.d1 = 3;
    pr.controls = {"only"};
    pr.r = [](int, double) { return 0.0; };
    pr.a = [](int, int k, double, std::span<const double>, double) { return k == 3 ? 0.25 : 1.0; };
    pr.b = [](int, int, double, std::span<const double>) { return 0.0; };
    pr.c = [](int, double, std::span<const double>) { return 0.0; };
    pr.f = [](int, std::span<const double>, double, double, std::span<const double>) {
        return 0.0;
    };
    auto dirs = DirectionSet::make(2, 1.0, 1.0, {{1, 0}, {1, 0}, {0, 0}});
    std::vector<double> x{0.0, 0.0};
    auto w = stencil_weights(pr, dirs, 0, 0.0, x);
    // two identical directions with a = 1 pile up: 2a/h^2 each
    CHECK(weight_at(w, {1, 0}) == doctest::Approx(4.0));
    CHECK(weight_at(w, {-1, 0}) == doctest::Approx(4.0));
    // the zero direction contributes nothing anywhere
    CHECK(w.center() == doctest::Approx(-8.0));
    double total = 0;
    for (double v : w.weights) total += v;
    CHECK(total == doctest::Approx(0.0));
}

TEST_CASE("eval_F takes the best control and breaks ties low") {
    const auto& e = catalog_get("twocontrol");
    std::vector<double> q{0, 0}, p{0, 0};
    int am = -1;

    // f0 = sin(2x), f1 = cos(2x); everything else in the bracket is equal
    std::vector<double> x1{1.0};  // sin(2) > cos(2)
    double v = eval_F(e.problem, 0.0, q, p, 0.0, 0.0, x1, &am);
    CHECK(am == 0);
    CHECK(v == doctest::Approx(std::sin(2.0)));

    std::vector<double> x2{-0.2};  // cos wins
    eval_F(e.problem, 0.0, q, p, 0.0, 0.0, x2, &am);
    CHECK(am == 1);

    // an exact tie keeps the lowest control index
    ControlProblem twin = e.problem;
    twin.a = [](int, int, double, std::span<const double>, double) { return 0.5; };
    twin.f = [](int, std::span<const double>, double, double, std::span<const double> x) {
        return std::sin(2 * x[0]);
    };
    eval_F(twin, 0.0, q, p, 0.0, 0.0, x1, &am);
    CHECK(am == 0);
}

TEST_CASE("bracket is monotone in the second differences when a >= 0") {
    Rng rng(64);
    const auto& e = catalog_get("twocontrol");
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> q{uniform(rng, -3, 3), uniform(rng, -3, 3)};
        std::vector<double> p{uniform(rng, -3, 3), uniform(rng, -3, 3)};
        std::vector<double> x{uniform(rng, -2, 2)};
        double phi = uniform(rng, -1, 1), psi = uniform(rng, -1, 1);
        double base = eval_F(e.problem, phi, q, p, psi, 0.1, x);
        auto q2 = q;
        int sl = trial % 2;
        q2[sl] += uniform(rng, 0, 2);
        CHECK(eval_F(e.problem, phi, q2, p, psi, 0.1, x) >= base - 1e-14);
    }
}

TEST_CASE("scheme residual equals the operator assembled from calculus ops") {
    const auto& e = catalog_get("const1d");
    double h = 0.5, tau = 0.25;
    auto dirs = e.directions(h);
    auto dom = StencilDomain::build(dirs, TimeGrid::make(tau, e.problem.constants.T),
                                    default_box(e, dirs));
    Rng rng(7);
    GridFunction u(dom);
    for (std::int32_t s = 0; s < dom->num_slots(); ++s) u.set(s) = uniform(rng, -1, 1);

    auto ut = dtau_T(u);
    auto d_fwd = delta_k(u, 1);
    auto d_bwd = delta_k(u, -1);
    auto lap = laplace_k(u, 1);

    int tested = 0;
    for (std::int32_t s = 0; s < dom->num_slots(); ++s) {
        if (!dom->in_Qo1(s)) continue;
        auto [li, pid] = dom->unslot(s);
        double t = dom->levels()[li].t;
        auto x = dom->coords(pid);
        std::vector<double> q{lap[s], lap[s]};
        std::vector<double> p{d_fwd[s], d_bwd[s]};
        int am = -1;
        double want = eval_F(e.problem, ut[s], q, p, u[s], t, x);
        double got = scheme_residual(e.problem, u, s, &am);
        CHECK(got == doctest::Approx(want).epsilon(1e-13));
        CHECK(am == 0);
        ++tested;
    }
    CHECK(tested >= 40);

    // boundary and terminal slots refuse
    std::int32_t corner = dom->slot(TimeKey::level(0), {-6});
    CHECK_THROWS_AS(scheme_residual(e.problem, u, corner), OutsideSupport);
    std::int32_t top = dom->slot(TimeKey::horizon(), {0});
    CHECK_THROWS_AS(scheme_residual(e.problem, u, top), OutsideSupport);
}
