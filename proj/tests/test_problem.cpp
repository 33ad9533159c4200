#include "doctest.h"

#include <cmath>

#include "bgrid/catalog.hpp"
#include "bgrid/problem.hpp"

using namespace bgrid;

namespace {

std::shared_ptr<const StencilDomain> small_domain(const CatalogEntry& e, double h, double tau,
                                                  int levels = 0) {
    auto dirs = e.directions(h);
    return StencilDomain::build(dirs, TimeGrid::make(tau, e.problem.constants.T),
                                default_box(e, dirs, levels));
}

/// Inline 1d problem with all-constant coefficients; the b value is a knob.
ControlProblem constant_1d(double a, double b, double h0) {
    ControlProblem pr;
    pr.name = "inline";
    pr.dim = 1;
    pr.d1 = 1;
    pr.controls = {"only"};
    pr.constants.h0 = h0;
    pr.constants.K0 = 2;
    pr.constants.K3 = 8;
    pr.r = [](int, double) { return 1.0; };
    pr.a = [a](int, int, double, std::span<const double>, double) { return a; };
    pr.b = [b](int, int k, double, std::span<const double>) { return k == 1 ? b : 0.0; };
    pr.c = [](int, double, std::span<const double>) { return 1.0; };
    pr.f = [](int, std::span<const double>, double, double, std::span<const double>) {
        return 0.0;
    };
    return pr;
}

}  // namespace

TEST_CASE("eval_coeffs mirrors a and fills slots by signed direction") {
    const auto& e = catalog_get("const1d");
    std::vector<double> x{0.5};
    auto co = eval_coeffs(e.problem, 0, 0.25, x);
    CHECK(co.r == 1.0);
    CHECK(co.c == 1.0);
    CHECK(co.a[DirectionSet::slot(1)] == 0.5);
    CHECK(co.a[DirectionSet::slot(-1)] == 0.5);
    CHECK(co.b[DirectionSet::slot(1)] == 1.0);
    CHECK(co.b[DirectionSet::slot(-1)] == 0.0);
    CHECK_THROWS_AS(eval_coeffs(e.problem, 7, 0.0, x), BuildError);

    // a quasilinear a follows its psi argument exactly
    ControlProblem qp = constant_1d(1.0, 0.0, 1.0);
    qp.a_depends_on_psi = true;
    qp.a = [](int, int, double, std::span<const double>, double psi) { return 1.0 + psi * psi; };
    auto cq = eval_coeffs(qp, 0, 0.0, x, 0.5);
    CHECK(cq.a[0] == 1.25);
    CHECK(cq.a[1] == 1.25);
}

TEST_CASE("drift validator: threshold and the worked failure margin") {
    auto e = catalog_get("const1d");
    auto dom = small_domain(e, 0.5, 0.5);
    std::vector<Assumption> which{Assumption::drift_dominated};

    auto rep = validate_assumptions(e.problem, *dom, which);
    REQUIRE(rep.checks.size() == 1);
    CHECK(rep.checks[0].passed);
    CHECK(rep.checks[0].sampled);
    CHECK(rep.checks[0].margin == doctest::Approx(0.5));  // a = 0.5, b >= 0

    // b = -2, a = 1, h0 = 1: margin is exactly -1
    auto bad = constant_1d(1.0, -2.0, 1.0);
    auto dirs = DirectionSet::make(1, 0.5, 1.0, {{1}});
    auto dom1 = StencilDomain::build(dirs, TimeGrid::make(0.5, 1.0),
                                     DomainSpec::make_box({-4}, {4}));
    auto rep_bad = validate_assumptions(bad, *dom1, which);
    CHECK(!rep_bad.checks[0].passed);
    CHECK(rep_bad.checks[0].margin == doctest::Approx(-1.0));
    CHECK(rep_bad.checks[0].witness.find("a_1") != std::string::npos);

    // exact threshold a = h0 * b^- passes with zero margin
    auto edge = constant_1d(1.0, -1.0, 1.0);
    auto rep_edge = validate_assumptions(edge, *dom1, which);
    CHECK(rep_edge.checks[0].passed);
    CHECK(rep_edge.checks[0].margin == doctest::Approx(0.0));
}

TEST_CASE("catalog metadata matches what the validators report") {
    for (const std::string name : {"const1d", "badb1d", "smooth2d", "quasi1d"}) {
        CAPTURE(name);
        const auto& e = catalog_get(name);
        double h = 0.25;
        double tau = e.problem.constants.T / 4;
        auto dom = small_domain(e, h, tau);
        ValidateOptions opt;
        opt.samples = 64;

        auto pass = validate_assumptions(e.problem, *dom, e.expected_pass, opt);
        for (const auto& ck : pass.checks) {
            CAPTURE(to_string(ck.id));
            CAPTURE(ck.witness);
            CHECK(ck.passed);
        }
        if (!e.expected_fail.empty()) {
            auto fail = validate_assumptions(e.problem, *dom, e.expected_fail, opt);
            for (const auto& ck : fail.checks) {
                CAPTURE(to_string(ck.id));
                CHECK(!ck.passed);
            }
        }
    }
}

TEST_CASE("seeded violations flip exactly the targeted assumption") {
    const auto& e = catalog_get("const1d");
    auto dom = small_domain(e, 0.5, 0.5);
    ValidateOptions opt;
    opt.samples = 64;

    // baseline: the declared set passes
    auto base = validate_assumptions(e.problem, *dom, e.expected_pass, opt);
    REQUIRE(base.all_passed());

    // knock out the drift bound only
    ControlProblem hard_drift = e.problem;
    hard_drift.b = [](int, int k, double, std::span<const double>) { return k == 1 ? -2.0 : 0.0; };
    auto rep1 = validate_assumptions(hard_drift, *dom, e.expected_pass, opt);
    for (const auto& ck : rep1.checks) {
        CAPTURE(to_string(ck.id));
        CHECK(ck.passed == (ck.id != Assumption::drift_dominated));
    }

    // knock out the Lipschitz bound on c only (a jump at x = 0.1)
    ControlProblem rough_c = e.problem;
    rough_c.c = [](int, double, std::span<const double> x) { return x[0] > 0.1 ? 30.0 : 1.0; };
    auto rep2 = validate_assumptions(rough_c, *dom, e.expected_pass, opt);
    for (const auto& ck : rep2.checks) {
        CAPTURE(to_string(ck.id));
        CAPTURE(ck.witness);
        bool expect_pass =
            ck.id != Assumption::structure && ck.id != Assumption::second_differences &&
            ck.id != Assumption::coefficient_bounds;
        CHECK(ck.passed == expect_pass);
    }
}

TEST_CASE("direction split: eight-direction set passes, axes-only fails") {
    const auto& good = catalog_get("smooth2d");
    auto dom_good = small_domain(good, 0.25, good.problem.constants.T);
    std::vector<Assumption> which{Assumption::direction_structure};
    auto rep = validate_assumptions(good.problem, *dom_good, which);
    CHECK(rep.checks[0].passed);
    CHECK(!rep.checks[0].sampled);
    CHECK(rep.checks[0].witness.find("d0=2") != std::string::npos);
    CHECK(rep.checks[0].witness.find("ell_3") != std::string::npos);

    const auto& axes = catalog_get("degenerate2d");
    auto dom_axes = small_domain(axes, 0.25, axes.problem.constants.T);
    auto rep2 = validate_assumptions(axes.problem, *dom_axes, which);
    CHECK(!rep2.checks[0].passed);
}

TEST_CASE("smallness is pure arithmetic on the constants") {
    const auto& e = catalog_get("smooth2d");
    auto dom = small_domain(e, 0.25, e.problem.constants.T);
    std::vector<Assumption> which{Assumption::smallness};
    auto rep = validate_assumptions(e.problem, *dom, which);
    const auto& K = e.problem.constants;
    CHECK(!rep.checks[0].sampled);
    CHECK(rep.checks[0].margin ==
          doctest::Approx(K.delta - K.Cstruct * K.K1 * (1 + K.K1) * K.omega));

    ControlProblem big = e.problem;
    big.constants.omega = 1.0;
    auto rep2 = validate_assumptions(big, *dom, which);
    CHECK(!rep2.checks[0].passed);
}

TEST_CASE("catalog registry: lookups and unknown names") {
    auto names = catalog_names();
    CHECK(names.size() == 8);
    for (const auto& n : names) CHECK(catalog_get(n).problem.num_controls() >= 1);
    CHECK_THROWS_WITH_AS(catalog_get("nope"),
                         doctest::Contains("no catalog problem named 'nope'"), BuildError);

    // corners that miss the lattice are rejected
    const auto& e = catalog_get("const1d");
    auto dirs = e.directions(0.7);
    CHECK_THROWS_AS(default_box(e, dirs), BuildError);
}

TEST_CASE("tabulated problems: exact lookups, hard errors, lattice-only validation") {
    // two controls, one spatial point at each of two levels plus neighbours
    TabulatedSpec spec;
    spec.dim = 1;
    spec.d1 = 1;
    spec.num_controls = 1;
    spec.tau = 0.5;
    spec.base_step = 0.5;
    spec.constants.h0 = 1;
    spec.constants.K0 = 2;
    spec.constants.K3 = 8;
    std::string head = "alpha,k,time_index,c0,value\n";
    spec.r_csv = head + "0,0,0,0,1.0\n0,0,1,0,1.0\n";
    auto grid_rows = [](const std::string& k, const std::string& v) {
        std::string s;
        for (int n = 0; n < 2; ++n)
            for (int c = -4; c <= 4; ++c)
                s += "0," + k + "," + std::to_string(n) + "," + std::to_string(c) + "," + v + "\n";
        return s;
    };
    spec.a_csv = head + grid_rows("1", "1.0");
    spec.b_csv = head + grid_rows("1", "-0.5") + grid_rows("-1", "0.0");
    spec.c_csv = head + grid_rows("0", "2.0");
    spec.f_csv = head + grid_rows("0", "0.25");

    auto pr = make_tabulated(spec);
    std::vector<double> x{1.0};  // canonical coordinate 2
    CHECK(pr.r(0, 0.5) == 1.0);
    CHECK(pr.a(0, 1, 0.0, x, 0.0) == 1.0);
    CHECK(pr.b(0, 1, 0.5, x) == -0.5);
    CHECK(pr.c(0, 0.0, x) == 2.0);
    std::vector<double> p0{0.0, 0.0};
    CHECK(pr.f(0, p0, 0.0, 0.0, x) == 0.25);

    // off-lattice and missing-point lookups fail loudly, naming the row
    std::vector<double> off{0.3};
    CHECK_THROWS_WITH_AS(pr.a(0, 1, 0.0, off, 0.0), doctest::Contains("not on the base lattice"),
                         BuildError);
    std::vector<double> far{9.0};
    CHECK_THROWS_WITH_AS(pr.b(0, 1, 0.0, far), doctest::Contains("no row for"), BuildError);
    CHECK_THROWS_WITH_AS(pr.b(0, 1, 0.26, x), doctest::Contains("tau lattice"), BuildError);

    // validators fall back to scheme-step probes instead of dying
    auto dirs = DirectionSet::make(1, 0.5, 1.0, {{1}});
    auto dom = StencilDomain::build(dirs, TimeGrid::make(0.5, 1.0),
                                    DomainSpec::make_box({-4}, {4}));
    std::vector<Assumption> which{Assumption::structure, Assumption::drift_dominated};
    auto rep = validate_assumptions(pr, *dom, which);
    CHECK(rep.all_passed());  // a=1 >= h0 * 0.5
    CHECK(rep.find(Assumption::structure)->witness.find("scheme-step probes") !=
          std::string::npos);

    // malformed table
    TabulatedSpec badspec = spec;
    badspec.a_csv = "0,1,0,1.0\n";
    CHECK_THROWS_WITH_AS(make_tabulated(badspec), doctest::Contains("columns"), BuildError);
}
