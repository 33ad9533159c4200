#include "bgrid/catalog.hpp"

#include <cctype>
#include <cmath>
#include <memory>
#include <sstream>
#include <unordered_map>

namespace bgrid {

namespace {

using XSpan = std::span<const double>;

constexpr double kPi = 3.14159265358979323846;

DirectionSet dirs_1d(double h) { return DirectionSet::make(1, h, 1.0, {{1}}); }

/// One-control problems share everything except the closures; small builder.
ControlProblem scalar_problem(std::string name, int dim, int d1, Constants ks,
                              std::vector<std::string> controls) {
    ControlProblem pr;
    pr.name = std::move(name);
    pr.dim = dim;
    pr.d1 = d1;
    pr.controls = std::move(controls);
    pr.constants = ks;
    return pr;
}

CatalogEntry make_const1d() {
    CatalogEntry e;
    e.name = "const1d";
    e.description = "1d constant coefficients, drift upwinded, forced so that "
                    "u = exp(-t) sin(x) solves the continuous limit";
    Constants ks;
    ks.T = 1;
    ks.h0 = 1;
    ks.delta = 0.5;
    ks.K0 = 2;
    ks.K1 = 2;
    ks.K2 = 1;
    ks.K3 = 4;
    ks.m = 0;
    ks.omega = 1e-3;
    e.problem = scalar_problem(e.name, 1, 1, ks, {"only"});
    e.problem.r = [](int, double) { return 1.0; };
    e.problem.a = [](int, int, double, XSpan, double) { return 0.5; };
    e.problem.b = [](int, int k, double, XSpan) { return k == 1 ? 1.0 : 0.0; };
    e.problem.c = [](int, double, XSpan) { return 1.0; };
    e.problem.f = [](int, XSpan, double, double t, XSpan x) {
        return std::exp(-t) * (3 * std::sin(x[0]) - std::cos(x[0]));
    };
    e.directions = dirs_1d;
    e.box_lo = {-3};
    e.box_hi = {3};
    e.exact = [](double t, XSpan x) { return std::exp(-t) * std::sin(x[0]); };
    e.data = e.exact;
    e.expected_pass = {Assumption::structure,          Assumption::sqrt_a_lipschitz,
                       Assumption::drift_dominated,    Assumption::f_regularity,
                       Assumption::quasilinear_growth, Assumption::smallness,
                       Assumption::second_differences, Assumption::coefficient_bounds};
    return e;
}

CatalogEntry make_const1d_affine() {
    CatalogEntry e = make_const1d();
    e.name = "const1d_affine";
    e.description = "const1d forced so that u = x is exact for the scheme at every step size";
    e.problem.name = e.name;
    e.problem.f = [](int, XSpan, double, double, XSpan x) { return x[0] - 1.0; };
    e.exact = [](double, XSpan x) { return x[0]; };
    e.data = e.exact;
    return e;
}

CatalogEntry make_twocontrol() {
    CatalogEntry e;
    e.name = "twocontrol";
    e.description = "1d two-control problem whose pointwise maximizer switches "
                    "across the domain";
    Constants ks;
    ks.T = 1;
    ks.h0 = 1;
    ks.delta = 0.3;
    ks.K0 = 2;
    ks.K1 = 1;
    ks.K2 = 1;
    ks.K3 = 5;
    ks.omega = 1e-3;
    e.problem = scalar_problem(e.name, 1, 1, ks, {"steady", "tilt"});
    e.problem.r = [](int, double) { return 1.0; };
    e.problem.a = [](int al, int, double, XSpan, double) { return al == 0 ? 0.5 : 0.3; };
    e.problem.b = [](int, int, double, XSpan) { return 0.0; };
    e.problem.c = [](int, double, XSpan) { return 1.0; };
    e.problem.f = [](int al, XSpan, double, double, XSpan x) {
        return al == 0 ? std::sin(2 * x[0]) : std::cos(2 * x[0]);
    };
    e.directions = dirs_1d;
    e.box_lo = {-3};
    e.box_hi = {3};
    e.data = [](double, XSpan) { return 0.0; };
    e.expected_pass = {Assumption::structure,          Assumption::sqrt_a_lipschitz,
                       Assumption::drift_dominated,    Assumption::f_regularity,
                       Assumption::quasilinear_growth, Assumption::smallness,
                       Assumption::second_differences, Assumption::coefficient_bounds};
    return e;
}

CatalogEntry make_badb1d() {
    CatalogEntry e;
    e.name = "badb1d";
    e.description = "seeded violation: drift too strong for the calibration step, "
                    "the stencil loses monotonicity at h = h0";
    Constants ks;
    ks.T = 1;
    ks.h0 = 1;
    ks.delta = 0.5;
    ks.K0 = 2;
    ks.K1 = 1;
    ks.K2 = 1;
    ks.K3 = 6;
    ks.omega = 1e-3;
    e.problem = scalar_problem(e.name, 1, 1, ks, {"only"});
    e.problem.r = [](int, double) { return 1.0; };
    e.problem.a = [](int, int, double, XSpan, double) { return 1.0; };
    e.problem.b = [](int, int k, double, XSpan) { return k == 1 ? -5.0 : 0.0; };
    e.problem.c = [](int, double, XSpan) { return 1.0; };
    e.problem.f = [](int, XSpan, double, double, XSpan) { return 0.0; };
    e.directions = dirs_1d;
    e.box_lo = {-3};
    e.box_hi = {3};
    e.data = [](double, XSpan) { return 0.0; };
    e.expected_pass = {Assumption::structure, Assumption::sqrt_a_lipschitz,
                       Assumption::smallness, Assumption::coefficient_bounds};
    e.expected_fail = {Assumption::drift_dominated};
    return e;
}

CatalogEntry make_degenerate2d() {
    CatalogEntry e;
    e.name = "degenerate2d";
    e.description = "2d problem with diffusion vanishing on a line (sqrt-Lipschitz), "
                    "plus an off-axis probe direction";
    Constants ks;
    ks.T = 0.25;
    ks.h0 = 1;
    ks.delta = 0.25;
    ks.K0 = 2;
    ks.K1 = 1;
    ks.K2 = 1;
    ks.K3 = 12;
    ks.m = 0;
    ks.omega = 1e-3;
    e.problem = scalar_problem(e.name, 2, 2, ks, {"only"});
    e.problem.r = [](int, double) { return 1.0; };
    e.problem.a = [](int, int k, double, XSpan x, double) {
        return k == 1 ? 0.5 * x[1] * x[1] : 0.5;
    };
    e.problem.b = [](int, int, double, XSpan) { return 0.0; };
    e.problem.c = [](int, double, XSpan) { return 12.0; };
    // forcing chosen so u = 0.5 cos(x0+x1) solves the stationary equation:
    // f = c u - (x1^2 + 1) D^2 u along the diagonal argument, keeping the
    // boundary data the trace of a smooth solution (no data-driven layers)
    e.problem.f = [](int, XSpan, double, double, XSpan x) {
        return std::cos(x[0] + x[1]) * (6.5 + 0.5 * x[1] * x[1]);
    };
    e.directions = [](double h) {
        return DirectionSet::make(2, h, 1.0, {{1, 0}, {0, 1}},
                                  std::pair{std::vector<Coord>{1, 1}, h});
    };
    e.box_lo = {0, 0};
    e.box_hi = {1, 1};
    e.data = [](double, XSpan x) { return 0.5 * std::cos(x[0] + x[1]); };
    e.exact = [](double, XSpan x) { return 0.5 * std::cos(x[0] + x[1]); };
    e.expected_pass = {Assumption::structure,       Assumption::sqrt_a_lipschitz,
                       Assumption::drift_dominated, Assumption::f_regularity,
                       Assumption::smallness,       Assumption::second_differences};
    e.expected_fail = {Assumption::coefficient_bounds, Assumption::quasilinear_growth,
                       Assumption::direction_structure};
    return e;
}

CatalogEntry make_smooth2d() {
    CatalogEntry e;
    e.name = "smooth2d";
    e.description = "2d eight-direction problem (axes plus diagonals), two controls, "
                    "uniformly elliptic along every direction";
    Constants ks;
    ks.T = 0.2;
    ks.h0 = 1;
    ks.delta = 0.04;
    ks.K0 = 2;
    ks.K1 = 1;
    ks.K2 = 1;
    ks.K3 = 45;
    ks.m = 0;
    ks.omega = 0.004;
    e.problem = scalar_problem(e.name, 2, 4, ks, {"even", "tilted"});
    e.problem.r = [](int, double) { return 1.0; };
    e.problem.a = [](int al, int k, double, XSpan, double) {
        static const double a0[] = {0.5, 0.5, 0.1, 0.1};
        static const double a1[] = {0.4, 0.6, 0.05, 0.15};
        return al == 0 ? a0[k - 1] : a1[k - 1];
    };
    e.problem.b = [](int, int, double, XSpan) { return 0.0; };
    e.problem.c = [](int, double, XSpan) { return 40.0; };
    // per-control forcing built so u = 0.02 cos(3 x0 + x1) solves the Bellman
    // equation: each control's linear residual is -s_al <= 0 with the slacks
    // s_0 = q^+, s_1 = q^- tying to zero along q = 0, so the argmax switches
    // across that line and the boundary data is the trace of a smooth solution
    e.problem.f = [](int al, XSpan, double, double, XSpan x) {
        double carrier = std::cos(3 * x[0] + x[1]);
        double q = 0.2 * std::sin(2 * x[0] - x[1]);
        return al == 0 ? 1.08 * carrier - std::max(q, 0.0)
                       : 1.024 * carrier - std::max(-q, 0.0);
    };
    e.directions = [](double h) {
        return DirectionSet::make(2, h, 1.0, {{1, 0}, {0, 1}, {1, 1}, {1, -1}});
    };
    e.box_lo = {0, 0};
    e.box_hi = {1, 1};
    e.data = [](double, XSpan x) { return 0.02 * std::cos(3 * x[0] + x[1]); };
    e.exact = [](double, XSpan x) { return 0.02 * std::cos(3 * x[0] + x[1]); };
    e.expected_pass = all_assumptions();
    return e;
}

CatalogEntry make_quasi1d() {
    CatalogEntry e;
    e.name = "quasi1d";
    e.description = "1d quasilinear forcing: f grows quadratically in the first "
                    "differences with a small modulus";
    Constants ks;
    ks.T = 0.5;
    ks.h0 = 1;
    ks.delta = 0.5;
    ks.K0 = 2;
    ks.K1 = 1;
    ks.K2 = 1;
    ks.K3 = 4;
    ks.omega = 0.004;
    e.problem = scalar_problem(e.name, 1, 1, ks, {"only"});
    e.problem.f_mode = FMode::quasilinear;
    e.problem.r = [](int, double) { return 1.0; };
    e.problem.a = [](int, int, double, XSpan, double) { return 0.5; };
    e.problem.b = [](int, int, double, XSpan) { return 0.0; };
    e.problem.c = [](int, double, XSpan) { return 1.0; };
    e.problem.f = [](int, XSpan p, double psi, double, XSpan x) {
        return 0.05 * std::sin(3 * x[0]) + 0.002 * (p[0] * p[0] + p[1] * p[1]) +
               0.01 * std::sin(psi);
    };
    e.directions = dirs_1d;
    e.box_lo = {-3};
    e.box_hi = {3};
    e.data = [](double, XSpan x) { return 0.1 * std::sin(x[0]); };
    e.expected_pass = {Assumption::structure,          Assumption::sqrt_a_lipschitz,
                       Assumption::drift_dominated,    Assumption::quasilinear_growth,
                       Assumption::smallness,          Assumption::coefficient_bounds};
    e.expected_fail = {Assumption::second_differences};
    return e;
}

CatalogEntry make_elliptic1d() {
    CatalogEntry e;
    e.name = "elliptic1d";
    e.description = "time-independent 1d problem (r = 0), forced so that "
                    "u = sin(x) solves the continuous limit";
    Constants ks;
    ks.T = 1;
    ks.h0 = 1;
    ks.delta = 0.5;
    ks.K0 = 2;
    ks.K1 = 1;
    ks.K2 = 1;
    ks.K3 = 4;
    ks.omega = 1e-3;
    e.problem = scalar_problem(e.name, 1, 1, ks, {"only"});
    e.problem.r = [](int, double) { return 0.0; };
    e.problem.a = [](int, int, double, XSpan, double) { return 0.5; };
    e.problem.b = [](int, int k, double, XSpan) { return k == 1 ? 1.0 : 0.0; };
    e.problem.c = [](int, double, XSpan) { return 2.0; };
    e.problem.f = [](int, XSpan, double, double, XSpan x) {
        return 3 * std::sin(x[0]) - std::cos(x[0]);
    };
    e.directions = dirs_1d;
    e.box_lo = {-3};
    e.box_hi = {3};
    e.exact = [](double, XSpan x) { return std::sin(x[0]); };
    e.data = e.exact;
    e.expected_pass = {Assumption::structure,          Assumption::sqrt_a_lipschitz,
                       Assumption::drift_dominated,    Assumption::f_regularity,
                       Assumption::quasilinear_growth, Assumption::smallness,
                       Assumption::second_differences, Assumption::coefficient_bounds};
    return e;
}

const std::vector<CatalogEntry>& registry() {
    static const std::vector<CatalogEntry> entries = [] {
        std::vector<CatalogEntry> v;
        v.push_back(make_const1d());
        v.push_back(make_const1d_affine());
        v.push_back(make_twocontrol());
        v.push_back(make_degenerate2d());
        v.push_back(make_smooth2d());
        v.push_back(make_quasi1d());
        v.push_back(make_elliptic1d());
        v.push_back(make_badb1d());
        return v;
    }();
    return entries;
}

}  // namespace

const CatalogEntry& catalog_get(const std::string& name) {
    for (const auto& e : registry())
        if (e.name == name) return e;
    std::string msg = "no catalog problem named '" + name + "'; have:";
    for (const auto& e : registry()) msg += " " + e.name;
    throw BuildError(msg);
}

std::vector<std::string> catalog_names() {
    std::vector<std::string> names;
    for (const auto& e : registry()) names.push_back(e.name);
    return names;
}

DomainSpec default_box(const CatalogEntry& entry, const DirectionSet& dirs, int levels) {
    double g = dirs.base_step();
    auto snap = [&](double v, const char* side, int i) {
        auto c = static_cast<Coord>(std::llround(v / g));
        if (std::abs(static_cast<double>(c) * g - v) > 1e-9 * std::max(1.0, std::abs(v)))
            throw BuildError("problem '" + entry.name + "': box " + side + " corner [" +
                             std::to_string(i) + "] = " + std::to_string(v) +
                             " is not a multiple of the base step " + std::to_string(g));
        return c;
    };
    std::vector<Coord> lo(entry.box_lo.size()), hi(entry.box_hi.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        lo[i] = snap(entry.box_lo[i], "low", static_cast<int>(i));
        hi[i] = snap(entry.box_hi[i], "high", static_cast<int>(i));
    }
    return DomainSpec::make_box(std::move(lo), std::move(hi), levels);
}

// ---- tabulated problems -----------------------------------------------------

namespace {

struct Table {
    // key "alpha|k|time_index|c0,c1,..." -> value
    std::unordered_map<std::string, double> rows;
    std::string name;

    double get(const std::string& key, const std::string& what) const {
        auto it = rows.find(key);
        if (it == rows.end())
            throw BuildError("tabulated " + name + ": no row for " + what);
        return it->second;
    }
};

std::string row_key(int alpha, int k, std::int64_t ti, std::span<const Coord> c) {
    std::string s = std::to_string(alpha) + "|" + std::to_string(k) + "|" + std::to_string(ti) + "|";
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(c[i]);
    }
    return s;
}

Table parse_table(const std::string& csv, const std::string& name, int dim,
                  bool ignore_coords = false) {
    Table tb;
    tb.name = name;
    std::istringstream in(csv);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (std::isalpha(static_cast<unsigned char>(line[0]))) continue;  // header
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != 4 + dim)
            throw BuildError("tabulated " + name + ": line " + std::to_string(lineno) +
                             " has " + std::to_string(cells.size()) + " columns, want " +
                             std::to_string(4 + dim));
        int alpha = std::stoi(cells[0]);
        int k = std::stoi(cells[1]);
        auto ti = static_cast<std::int64_t>(std::stoll(cells[2]));
        std::vector<Coord> c(dim, 0);
        if (!ignore_coords)
            for (int i = 0; i < dim; ++i) c[i] = static_cast<Coord>(std::stoll(cells[3 + i]));
        double v = std::stod(cells[3 + dim]);
        tb.rows[row_key(alpha, k, ti, c)] = v;
    }
    return tb;
}

/// Maps physical coordinates back onto the table keys; rejects anything that
/// is not exactly a lattice point (no interpolation).
struct Snapper {
    double tau, g;
    std::string problem;

    std::int64_t time_index(double t, const std::string& who) const {
        auto n = static_cast<std::int64_t>(std::llround(t / tau));
        if (std::abs(static_cast<double>(n) * tau - t) > 1e-9 * std::max(1.0, std::abs(t)))
            throw BuildError("tabulated " + who + ": t = " + std::to_string(t) +
                             " is not on the tau lattice");
        return n;
    }
    std::vector<Coord> point(std::span<const double> x, const std::string& who) const {
        std::vector<Coord> c(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            c[i] = static_cast<Coord>(std::llround(x[i] / g));
            if (std::abs(static_cast<double>(c[i]) * g - x[i]) >
                1e-9 * std::max(1.0, std::abs(x[i])))
                throw BuildError("tabulated " + who + ": x[" + std::to_string(i) + "] = " +
                                 std::to_string(x[i]) + " is not on the base lattice");
        }
        return c;
    }
};

std::string describe(int alpha, int k, std::int64_t ti, std::span<const Coord> c) {
    std::string s = "alpha=" + std::to_string(alpha) + " k=" + std::to_string(k) +
                    " time_index=" + std::to_string(ti) + " x=(";
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(c[i]);
    }
    return s + ")";
}

}  // namespace

ControlProblem make_tabulated(const TabulatedSpec& spec) {
    if (spec.dim < 1 || spec.d1 < 1 || spec.num_controls < 1)
        throw BuildError("tabulated problem: dim, d1, num_controls must be positive");
    if (spec.tau <= 0 || spec.base_step <= 0)
        throw BuildError("tabulated problem: tau and base_step must be positive");

    auto r_tb = std::make_shared<Table>(parse_table(spec.r_csv, "r", spec.dim, true));
    auto a_tb = std::make_shared<Table>(parse_table(spec.a_csv, "a", spec.dim));
    auto b_tb = std::make_shared<Table>(parse_table(spec.b_csv, "b", spec.dim));
    auto c_tb = std::make_shared<Table>(parse_table(spec.c_csv, "c", spec.dim));
    auto f_tb = std::make_shared<Table>(parse_table(spec.f_csv, "f", spec.dim));
    Snapper sn{spec.tau, spec.base_step, "tabulated"};
    const std::vector<Coord> origin(spec.dim, 0);

    ControlProblem pr;
    pr.name = "tabulated";
    pr.dim = spec.dim;
    pr.d1 = spec.d1;
    pr.constants = spec.constants;
    for (int i = 0; i < spec.num_controls; ++i) pr.controls.push_back("alpha" + std::to_string(i));

    pr.r = [r_tb, sn, origin](int al, double t) {
        auto ti = sn.time_index(t, "r");
        return r_tb->get(row_key(al, 0, ti, origin), describe(al, 0, ti, origin));
    };
    pr.a = [a_tb, sn](int al, int k, double t, XSpan x, double) {
        auto ti = sn.time_index(t, "a");
        auto c = sn.point(x, "a");
        return a_tb->get(row_key(al, k, ti, c), describe(al, k, ti, c));
    };
    pr.b = [b_tb, sn](int al, int k, double t, XSpan x) {
        auto ti = sn.time_index(t, "b");
        auto c = sn.point(x, "b");
        return b_tb->get(row_key(al, k, ti, c), describe(al, k, ti, c));
    };
    pr.c = [c_tb, sn](int al, double t, XSpan x) {
        auto ti = sn.time_index(t, "c");
        auto c = sn.point(x, "c");
        return c_tb->get(row_key(al, 0, ti, c), describe(al, 0, ti, c));
    };
    pr.f = [f_tb, sn](int al, XSpan, double, double t, XSpan x) {
        auto ti = sn.time_index(t, "f");
        auto c = sn.point(x, "f");
        return f_tb->get(row_key(al, 0, ti, c), describe(al, 0, ti, c));
    };
    return pr;
}

}  // namespace bgrid
