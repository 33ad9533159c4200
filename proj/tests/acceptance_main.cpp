// Acceptance gate: every release-blocking property in one binary, one
// pass/fail line per criterion. Tolerances and runtime budgets are pinned
// here on purpose - if a number moves, this file is where the change shows.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "bgrid/bellman.hpp"
#include "bgrid/calculus.hpp"
#include "bgrid/catalog.hpp"
#include "bgrid/decomp2d.hpp"
#include "bgrid/estimates.hpp"
#include "bgrid/experiment.hpp"
#include "bgrid/solver.hpp"

using namespace bgrid;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// ---- shared fixtures ---------------------------------------------------------

ScalarFn random_smooth(Rng& rng, int dim) {
    struct Wave {
        double amp, phase;
        std::vector<double> k;
    };
    double c0 = uniform(rng, -1, 1);
    std::vector<Wave> waves(3);
    for (auto& w : waves) {
        w.amp = uniform(rng, -1, 1);
        w.phase = uniform(rng, 0, 6.283185307179586);
        for (int i = 0; i < dim; ++i) w.k.push_back(uniform(rng, -2, 2));
    }
    return [c0, waves](std::span<const double> x) {
        double s = c0;
        for (const auto& w : waves) {
            double arg = w.phase;
            for (std::size_t i = 0; i < x.size(); ++i) arg += w.k[i] * x[i];
            s += w.amp * std::sin(arg);
        }
        return s;
    };
}

ScalarFn random_kinked(Rng& rng, int dim) {
    ScalarFn base = random_smooth(rng, dim);
    std::vector<double> v;
    for (int i = 0; i < dim; ++i) v.push_back(uniform(rng, -1, 1));
    double shift = uniform(rng, -0.5, 0.5), amp = uniform(rng, 0.3, 1.2);
    return [base, v, shift, amp](std::span<const double> x) {
        double dot = -shift;
        for (std::size_t i = 0; i < x.size(); ++i) dot += v[i] * x[i];
        return base(x) + amp * std::abs(dot);
    };
}

/// Tridiagonal solve for rows diag[i] u_i - up[i] u_{i+1} - lo[i] u_{i-1} = rhs[i]
/// (positive stencil weights go in as-is); strictly dominant, so no pivoting.
std::vector<double> thomas(std::vector<double> lo, std::vector<double> diag,
                           std::vector<double> up, std::vector<double> rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        double m = lo[i] / diag[i - 1];
        diag[i] -= m * up[i - 1];
        rhs[i] += m * rhs[i - 1];
    }
    std::vector<double> u(n);
    u[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) u[i] = (rhs[i] + up[i] * u[i + 1]) / diag[i];
    return u;
}

ControlProblem three_controls(bool stationary) {
    ControlProblem pr;
    pr.name = stationary ? "three_stationary" : "three";
    pr.dim = 1;
    pr.d1 = 1;
    pr.controls = {"c0", "c1", "c2"};
    if (stationary)
        pr.r = [](int, double) { return 0.0; };
    else
        pr.r = [](int al, double) { return al == 0 ? 1.0 : (al == 1 ? 2.0 : 0.5); };
    pr.a = [](int al, int, double, std::span<const double>, double) {
        return al == 0 ? 0.5 : (al == 1 ? 0.3 : 0.6);
    };
    pr.b = [](int al, int k, double, std::span<const double>) {
        if (k != 1) return 0.0;
        return al == 0 ? 0.4 : (al == 1 ? -0.2 : 0.0);
    };
    pr.c = [](int al, double, std::span<const double>) {
        return al == 0 ? 1.0 : (al == 1 ? 1.5 : 0.8);
    };
    pr.f = [](int al, std::span<const double>, double, double t, std::span<const double> x) {
        switch (al) {
            case 0: return std::sin(2 * x[0]) + t;
            case 1: return std::cos(2 * x[0]);
            default: return 0.5 * x[0] - t;
        }
    };
    return pr;
}

/// Pointwise max over every fixed control field of the tridiagonal solve:
/// the Bellman value of one implicit step on an 11-point 1d interior.
std::vector<double> enumerate_step(const ControlProblem& pr, double h, double tau, double t,
                                   const std::vector<double>& u_next,
                                   const std::function<double(double, int)>& rim) {
    const int nA = pr.num_controls();
    const std::size_t n = u_next.size();
    std::vector<double> diag(n * nA), wlo(n * nA), wup(n * nA), cst(n * nA);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x{h * (static_cast<double>(i) - (n - 1) / 2.0)};
        int ci = static_cast<int>(i) - static_cast<int>(n - 1) / 2;
        for (int al = 0; al < nA; ++al) {
            Coeffs co = eval_coeffs(pr, al, t, x);
            double wp = 2 * co.a[0] / (h * h) + co.b[0] / h;
            double wm = 2 * co.a[0] / (h * h) + co.b[1] / h;
            double d = (tau > 0 ? co.r / tau : 0.0) + co.c + wp + wm;
            double k = (tau > 0 ? co.r / tau * u_next[i] : 0.0) + pr.f(al, {}, 0.0, t, x);
            if (i + 1 == n) {
                k += wp * rim(t, ci + 1);
                wp = 0;
            }
            if (i == 0) {
                k += wm * rim(t, ci - 1);
                wm = 0;
            }
            std::size_t id = i * nA + al;
            diag[id] = d;
            wup[id] = wp;
            wlo[id] = wm;
            cst[id] = k;
        }
    }
    std::vector<double> best(n, -1e300);
    std::vector<int> policy(n, 0);
    for (;;) {
        std::vector<double> lo(n), dg(n), up(n), rhs(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t id = i * nA + policy[i];
            lo[i] = wlo[id];
            dg[i] = diag[id];
            up[i] = wup[id];
            rhs[i] = cst[id];
        }
        auto u = thomas(lo, dg, up, rhs);
        for (std::size_t i = 0; i < n; ++i) best[i] = std::max(best[i], u[i]);
        std::size_t j = 0;
        while (j < n && ++policy[j] == nA) policy[j++] = 0;
        if (j == n) break;
    }
    return best;
}

struct StudyOutcome {
    std::vector<double> lhs;  // one per rung
    bool all_converged = true;
    bool all_present = true;
};

/// Solve a catalog problem over an h-ladder with tau = h and collect the
/// plain left-hand maximum of the requested estimate.
StudyOutcome ladder_study(const std::string& problem, EstimateKind kind,
                          const std::vector<double>& ladder, int threads) {
    const CatalogEntry& e = catalog_get(problem);
    StudyOutcome out;
    for (double h : ladder) {
        auto dirs = e.directions(h);
        auto dom = StencilDomain::build(dirs, TimeGrid::make(h, e.problem.constants.T),
                                        default_box(e, dirs));
        auto data = GridFunction::sample(dom, e.data);
        SolveConfig sc;
        sc.threads = threads;
        auto rep = solve_parabolic(e.problem, dom, data, sc);
        out.all_converged = out.all_converged && rep.converged;
        EstimateOptions eo;
        eo.validate = false;
        eo.threads = threads;
        EstimateReport er = estimate_ratio(kind, rep.u, e.problem, eo);
        if (!er.lhs) {
            out.all_present = false;
            continue;
        }
        out.lhs.push_back(*er.lhs);
    }
    return out;
}

// ---- the criteria --------------------------------------------------------------

bool product_rule_identities(std::string& detail) {
    constexpr double kTol = 1e-12;
    Rng rng(101);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        int dim = 1 + trial % 3;
        ScalarFn a = random_smooth(rng, dim);
        ScalarFn psi = random_smooth(rng, dim);
        double nu = uniform(rng, 0.01, 1.0);
        std::vector<double> l1(dim), l2(dim);
        for (auto& v : l1) v = uniform(rng, -1.5, 1.5);
        for (auto& v : l2) v = uniform(rng, -1.5, 1.5);
        std::vector<std::vector<double>> pts(8);
        for (auto& x : pts) {
            x.resize(dim);
            for (auto& v : x) v = uniform(rng, -2, 2);
        }
        IdentityReport r = verify_identities(a, psi, nu, l1, l2, pts);
        worst = std::max(worst, r.max_residual / r.scale);
    }
    detail = "worst relative residual " + num(worst);
    return worst <= kTol;
}

bool comparison_bound_slack(std::string& detail) {
    constexpr double kTol = 1e-12;
    Rng rng(202);
    double worst = 0;  // most negative relative slack
    for (int trial = 0; trial < 100; ++trial) {
        int dim = 1 + trial % 3;
        ScalarFn a = random_smooth(rng, dim);
        ScalarFn psi = (trial % 2) ? random_kinked(rng, dim) : random_smooth(rng, dim);
        double nu = uniform(rng, 0.01, 1.0);
        std::vector<double> l1(dim), l2(dim);
        for (auto& v : l1) v = uniform(rng, -1.5, 1.5);
        for (auto& v : l2) v = uniform(rng, -1.5, 1.5);
        std::vector<std::vector<double>> pts(8);
        for (auto& x : pts) {
            x.resize(dim);
            for (auto& v : x) v = uniform(rng, -2, 2);
        }
        IdentityReport r = verify_identities(a, psi, nu, l1, l2, pts);
        worst = std::min(worst, r.comparison_slack / r.scale);
    }
    detail = "most negative relative slack " + num(worst);
    return worst >= -kTol;
}

bool eight_direction_bound(std::string& detail) {
    constexpr double kTol = 1e-12;
    Rng rng(303);
    auto dirs = DirectionSet::make(2, 0.5, 1.0, {{1, 0}, {0, 1}, {1, 1}, {1, -1}});
    auto dom = StencilDomain::build(dirs, TimeGrid::make(1.0, 1.0),
                                    DomainSpec::make_box({-4, -4}, {4, 4}, 1));
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        GridFunction phi(dom);
        for (std::int32_t s = 0; s < dom->num_slots(); ++s) phi.set(s) = uniform(rng, -3, 3);
        auto b = second_difference_bound(phi, 0, {0, 0}, 2);
        worst = std::min(worst, b.min_slack / b.scale);
    }
    detail = "most negative relative slack " + num(worst);
    return worst >= -kTol;
}

bool max_principle_sweep(std::string& detail) {
    std::size_t checked = 0, failed = 0;
    for (const auto& name : catalog_names()) {
        const CatalogEntry& e = catalog_get(name);
        bool expect_monotone = false;
        for (Assumption a : e.expected_pass)
            expect_monotone = expect_monotone || a == Assumption::drift_dominated;
        if (!expect_monotone) continue;
        const double h0 = e.problem.constants.h0;
        for (double h : {h0, h0 / 2, h0 / 4}) {
            auto dirs = e.directions(h);
            DomainSpec spec = default_box(e, dirs);
            auto dom = StencilDomain::build(dirs, TimeGrid::make(0.5, 1.0), spec);
            for (std::int32_t s : dom->initial_slots()) {
                auto x = dom->coords(dom->unslot(s).second);
                for (double t : {0.0, 0.5 * e.problem.constants.T}) {
                    for (int al = 0; al < e.problem.num_controls(); ++al) {
                        ++checked;
                        auto w = stencil_weights(e.problem, dirs, al, t, x);
                        if (!check_max_principle(w).passed) ++failed;
                    }
                }
            }
        }
    }

    // the seeded violation: drift overwhelms diffusion along +l1
    const CatalogEntry& bad = catalog_get("badb1d");
    std::vector<double> x0{0.0};
    auto wb = stencil_weights(bad.problem, bad.directions(1.0), 0, 0.0, x0);
    auto ck = check_max_principle(wb);
    bool witness_ok = !ck.passed && ck.witness_offset.has_value() &&
                      *ck.witness_offset == Point{1};

    detail = std::to_string(checked) + " stencils checked, " + std::to_string(failed) +
             " failed; violation witness " + (witness_ok ? "correct" : "WRONG");
    return checked > 0 && failed == 0 && witness_ok;
}

bool weighted_time_identity(std::string& detail) {
    constexpr double kTol = 1e-12;
    const CatalogEntry& entry = catalog_get("const1d");
    double worst = 0;
    for (double m : {-1.0, 0.0, 1.5}) {
        for (double tau : {0.1, 0.37}) {
            auto dirs = entry.directions(0.5);
            auto dom = StencilDomain::build(dirs, TimeGrid::make(tau, 1.0),
                                            default_box(entry, dirs));
            ControlProblem pr = entry.problem;
            pr.constants.m = m;
            Weights w = weights_of(pr, dom->time());
            Rng rng(91);
            for (int trial = 0; trial < 100; ++trial) {
                GridFunction u(dom);
                for (std::int32_t s = 0; s < dom->num_slots(); ++s)
                    u.set(s) = uniform(rng, -3.0, 3.0);
                for (std::int32_t s = 0; s < dom->num_slots(); ++s) {
                    if (dom->is_terminal(s)) continue;
                    std::int32_t nxt = dom->successor(s);
                    if (nxt < 0) continue;
                    int li = dom->unslot(s).first, lj = dom->unslot(nxt).first;
                    TimeKey tk = dom->levels()[li].key, tn = dom->levels()[lj].key;
                    double lhs = w.xi(tk) * (u[nxt] - u[s]) / w.tau;
                    double rhs =
                        std::exp(-m * w.tau) * (w.xi(tn) * u[nxt] - w.xi(tk) * u[s]) / w.tau -
                        w.c_m * w.xi(tk) * u[s];
                    double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
                    worst = std::max(worst, std::abs(lhs - rhs) / scale);
                }
            }
        }
    }
    detail = "worst relative residual " + num(worst);
    return worst <= kTol;
}

bool solver_oracle_equivalence(std::string& detail) {
    constexpr double kTol = 1e-9;
    const double h = 0.5, tau = 0.25;
    auto rim = [](double t, int ci) {
        std::vector<double> x{0.5 * ci};
        return 0.3 * std::sin(x[0]) - 0.2 * t;
    };

    // marching: two implicit steps on 11 interior points, three controls
    auto pr = three_controls(false);
    auto dirs = DirectionSet::make(1, h, 1.0, {{1}});
    auto dom = StencilDomain::build(dirs, TimeGrid::make(tau, 0.5),
                                    DomainSpec::make_box({-6}, {6}));
    auto data = GridFunction::sample(
        dom, [&rim](double t, std::span<const double> x) { return rim(t, std::lround(x[0] / 0.5)); });
    auto rep = solve_parabolic(pr, dom, data);
    if (!rep.converged) {
        detail = "marching solve did not converge";
        return false;
    }
    std::vector<double> u_next(11);
    for (int i = 0; i < 11; ++i) u_next[i] = rim(0.5, i - 5);
    for (int lvl = 1; lvl >= 0; --lvl)
        u_next = enumerate_step(pr, h, tau, lvl * tau, u_next, rim);
    double worst = 0;
    for (int i = 0; i < 11; ++i) {
        auto slot = dom->slot(TimeKey::level(0), Point{i - 5});
        worst = std::max(worst, std::abs(rep.u[slot] - u_next[i]));
    }

    // stationary: same coefficients with r = 0, single implicit level
    auto prs = three_controls(true);
    auto doms = elliptic_domain(dirs, DomainSpec::make_box({-6}, {6}));
    GridFunction rims(doms);
    for (std::int32_t s = 0; s < doms->num_slots(); ++s)
        if (doms->in_dQ1(s) && !doms->is_terminal(s))
            rims.set(s) = rim(0.0, static_cast<int>(doms->point(doms->unslot(s).second)[0]));
    auto reps = solve_elliptic(prs, doms, rims);
    if (!reps.converged) {
        detail = "stationary solve did not converge";
        return false;
    }
    auto rim0 = [&rim](double, int ci) { return rim(0.0, ci); };
    auto oracle = enumerate_step(prs, h, 0.0, 0.0, std::vector<double>(11, 0.0), rim0);
    for (int i = 0; i < 11; ++i) {
        auto slot = doms->slot(TimeKey::level(0), Point{i - 5});
        worst = std::max(worst, std::abs(reps.u[slot] - oracle[i]));
    }

    detail = "worst deviation from enumeration " + num(worst);
    return worst <= kTol;
}

bool comparison_principle(std::string& detail) {
    constexpr double kTol = 1e-9;
    double worst = 0;
    Rng rng(2024);
    for (const char* name : {"twocontrol", "const1d"}) {
        const CatalogEntry& e = catalog_get(name);
        auto dirs = e.directions(0.5);
        auto dom = StencilDomain::build(dirs, TimeGrid::make(0.25, 0.5),
                                        default_box(e, dirs));
        for (int trial = 0; trial < 10; ++trial) {
            GridFunction lo_data(dom), hi_data(dom);
            for (std::int32_t s = 0; s < dom->num_slots(); ++s) {
                if (!dom->in_dQ1(s)) continue;
                double v = uniform(rng, -1.0, 1.0);
                lo_data.set(s) = v;
                hi_data.set(s) = v + uniform(rng, 0.0, 1.0);
            }
            auto lo = solve_parabolic(e.problem, dom, lo_data);
            auto hi = solve_parabolic(e.problem, dom, hi_data);
            if (!lo.converged || !hi.converged) {
                detail = "a comparison solve did not converge";
                return false;
            }
            for (std::int32_t s = 0; s < dom->num_slots(); ++s)
                worst = std::min(worst, hi.u[s] - lo.u[s]);
        }
    }
    detail = "most negative ordering gap " + num(worst);
    return worst >= -kTol;
}

bool convergence_orders(std::string& detail, int threads) {
    constexpr double kMinRate = 0.9;
    constexpr double kAffineTol = 1e-10;
    const std::vector<double> ladder{0.1, 0.05, 0.025, 0.0125, 0.00625};

    const CatalogEntry& e = catalog_get("const1d");
    std::vector<double> hs, errs;
    for (double h : ladder) {
        auto dirs = e.directions(h);
        auto dom = StencilDomain::build(dirs, TimeGrid::make(h, e.problem.constants.T),
                                        default_box(e, dirs));
        auto data = GridFunction::sample(dom, e.data);
        SolveConfig sc;
        sc.threads = threads;
        auto rep = solve_parabolic(e.problem, dom, data, sc);
        if (!rep.converged) {
            detail = "const1d solve did not converge at h = " + std::to_string(h);
            return false;
        }
        double worst = 0;
        for (const auto& lv : dom->levels())
            for (std::int32_t pid : lv.pids) {
                std::int32_t s = dom->slot(static_cast<int>(&lv - dom->levels().data()), pid);
                worst = std::max(worst,
                                 std::abs(rep.u[s] - e.exact(lv.t, dom->coords(pid))));
            }
        hs.push_back(h);
        errs.push_back(worst);
    }
    auto rate = fit_rate(hs, errs);
    if (!rate) {
        detail = "rate fit degenerate";
        return false;
    }

    const CatalogEntry& af = catalog_get("const1d_affine");
    double affine_worst = 0;
    for (double h : ladder) {
        auto dirs = af.directions(h);
        auto dom = StencilDomain::build(dirs, TimeGrid::make(h, af.problem.constants.T),
                                        default_box(af, dirs));
        auto data = GridFunction::sample(dom, af.data);
        SolveConfig sc;
        sc.threads = threads;
        auto rep = solve_parabolic(af.problem, dom, data, sc);
        if (!rep.converged) {
            detail = "affine solve did not converge at h = " + std::to_string(h);
            return false;
        }
        for (std::int32_t s = 0; s < dom->num_slots(); ++s) {
            auto [lev, pid] = dom->unslot(s);
            affine_worst = std::max(affine_worst,
                                    std::abs(rep.u[s] - dom->coords(pid)[0]));
        }
    }

    detail = "fitted rate " + num(*rate) + ", affine error " + num(affine_worst);
    return *rate >= kMinRate && affine_worst <= kAffineTol;
}

bool extra_direction_boundedness(std::string& detail, int threads) {
    constexpr double kMaxSpread = 2.0;
    StudyOutcome out = ladder_study("degenerate2d", EstimateKind::first_diff_extra,
                                    {0.1, 0.05, 0.025, 0.0125}, threads);
    if (!out.all_converged || !out.all_present || out.lhs.size() != 4) {
        detail = "study incomplete";
        return false;
    }
    double lo = out.lhs[0], hi = out.lhs[0];
    for (double v : out.lhs) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    detail = "max/min of the probe-direction maxima " + num(hi / lo);
    return lo > 0 && hi / lo <= kMaxSpread;
}

bool second_difference_boundedness(std::string& detail, int threads) {
    constexpr double kMaxSpread = 2.0;
    StudyOutcome out = ladder_study("smooth2d", EstimateKind::second_diff,
                                    {0.1, 0.05, 0.025, 0.0125}, threads);
    if (!out.all_converged || !out.all_present || out.lhs.size() != 4) {
        detail = "study incomplete";
        return false;
    }
    double lo = out.lhs[0], hi = out.lhs[0];
    for (double v : out.lhs) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    detail = "max/min of the second-difference maxima " + num(hi / lo);
    return lo > 0 && hi / lo <= kMaxSpread;
}

bool decomposition_battery(std::string& detail) {
    constexpr double kRoundTrip = 1e-12;
    constexpr double kNonneg = -1e-12;
    constexpr double kWorked = 1e-14;
    constexpr double kProbeGrowth = 2.0;

    // 50 random dominant fields round-trip with nonnegative weights
    Rng rng(2025);
    double worst_rt = 0, worst_w = 0;
    for (int trial = 0; trial < 50; ++trial) {
        MatrixField a;
        for (int p = 0; p < 8; ++p) {
            double a11 = uniform(rng, 0.1, 2.0);
            double a22 = uniform(rng, 0.1, 2.0);
            double a12 = uniform(rng, -1.0, 1.0) * std::min(a11, a22);
            a.points.push_back({uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)});
            a.values.push_back({a11, a12, a22});
        }
        auto w = decompose(a);
        for (const auto& v : w.values)
            worst_w = std::min({worst_w, v.a11hat, v.a22hat, v.a12hat, v.a1m2hat});
        auto back = reconstruct(w);
        for (std::size_t i = 0; i < a.size(); ++i)
            worst_rt = std::max({worst_rt, std::abs(back.values[i].a11 - a.values[i].a11),
                                 std::abs(back.values[i].a12 - a.values[i].a12),
                                 std::abs(back.values[i].a22 - a.values[i].a22)});
    }
    if (worst_rt > kRoundTrip || worst_w < kNonneg) {
        detail = "round trip " + num(worst_rt) + ", min weight " + num(worst_w);
        return false;
    }

    // worked cases: identity and the fully correlated rank-one matrix
    MatrixField cases;
    cases.points = {{0.0, 0.0}, {1.0, 0.0}};
    cases.values = {{1.0, 0.0, 1.0}, {1.0, 1.0, 1.0}};
    auto wc = decompose(cases);
    auto near = [&](double got, double want) { return std::abs(got - want) <= kWorked; };
    bool worked = near(wc.values[0].a11hat, 7.0 / 16) && near(wc.values[0].a22hat, 7.0 / 16) &&
                  near(wc.values[0].a12hat, 1.0 / 16) && near(wc.values[0].a1m2hat, 1.0 / 16) &&
                  near(wc.values[1].a12hat, 1.0) && near(wc.values[1].a1m2hat, 0.0) &&
                  near(wc.values[1].a11hat, 0.0) && near(wc.values[1].a22hat, 0.0);
    auto backc = reconstruct(wc);
    for (std::size_t i = 0; i < cases.size(); ++i)
        worked = worked && near(backc.values[i].a11, cases.values[i].a11) &&
                 near(backc.values[i].a12, cases.values[i].a12) &&
                 near(backc.values[i].a22, cases.values[i].a22);
    if (!worked) {
        detail = "worked cases off their derived values";
        return false;
    }

    // Lipschitz probes of a fixed smooth field stay bounded under refinement
    auto smooth_field = [](int n) {
        MatrixField a;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) {
                double x = static_cast<double>(i) / n, y = static_cast<double>(j) / n;
                double a11 = 2.0 + std::sin(x) * std::cos(y);
                double a22 = 2.0 + 0.5 * std::cos(x + y);
                double a12 = 0.5 * std::sin(x + y);
                a.points.push_back({x, y});
                a.values.push_back({a11, a12, a22});
            }
        return a;
    };
    std::vector<double> probes;
    for (int n : {4, 8, 16}) {
        auto a = smooth_field(n);
        auto w = decompose(a);
        auto pairs = grid_neighbor_pairs(a.points);
        probes.push_back(lipschitz_probe(w, pairs).max());
    }
    double g1 = probes[1] / probes[0], g2 = probes[2] / probes[1];
    detail = "probe growth factors " + num(g1) + ", " + num(g2);
    return g1 <= kProbeGrowth && g2 <= kProbeGrowth;
}

bool deterministic_reports(std::string& detail) {
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    fs::path base = fs::temp_directory_path() / "bgrid_acceptance_determinism";
    fs::remove_all(base);

    const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
        {R"({"kind":"verify-identities","trials":25,"kinked":true})",
         {"report.json", "manifest.json"}},
        {R"({"kind":"estimate-study","problem":"const1d",)"
         R"("estimate":"first_diff_interior","h_ladder":[0.2,0.1],"tau_over_h":0.5})",
         {"report.json", "manifest.json", "rate.csv"}},
    };
    int idx = 0;
    for (const auto& [text, files] : runs) {
        auto cfg = parse_config(text);
        if (!cfg) {
            detail = "config rejected: " + cfg.error();
            return false;
        }
        RunOptions opt;
        opt.seed = 11;
        opt.quiet = true;
        fs::path a = base / ("a" + std::to_string(idx));
        fs::path b = base / ("b" + std::to_string(idx));
        opt.out_dir = a;
        if (run_experiment(*cfg, opt) != exit_ok) {
            detail = "first run failed";
            return false;
        }
        opt.out_dir = b;
        opt.threads = 3;  // thread count must not reach the bytes
        if (run_experiment(*cfg, opt) != exit_ok) {
            detail = "second run failed";
            return false;
        }
        for (const auto& f : files) {
            if (slurp(a / f) != slurp(b / f) || slurp(a / f).empty()) {
                detail = "byte mismatch in " + f;
                return false;
            }
        }
        ++idx;
    }
    detail = "reports, manifests and tables byte-identical across reruns";
    return true;
}

}  // namespace

int main() {
    const int threads = resolve_thread_count(0);
    struct Criterion {
        int id;
        const char* what;
        double budget_s;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "discrete product-rule identities (five forms, dims 1-3)", 5,
         [](std::string& d) { return product_rule_identities(d); }},
        {2, "second-difference comparison bound incl. kinked profiles", 5,
         [](std::string& d) { return comparison_bound_slack(d); }},
        {3, "factor-4 interpolation bound on the eight-direction patch", 5,
         [](std::string& d) { return eight_direction_bound(d); }},
        {4, "maximum principle across the catalog + seeded violation", 10,
         [](std::string& d) { return max_principle_sweep(d); }},
        {5, "weighted time-difference identity across (m, tau)", 5,
         [](std::string& d) { return weighted_time_identity(d); }},
        {6, "solver equals exhaustive control enumeration (marching + stationary)", 30,
         [](std::string& d) { return solver_oracle_equivalence(d); }},
        {7, "comparison principle on ordered boundary data", 30,
         [](std::string& d) { return comparison_principle(d); }},
        {8, "first-order convergence and affine exactness", 60,
         [threads](std::string& d) { return convergence_orders(d, threads); }},
        {9, "probe-direction first differences stay bounded as h -> 0", 300,
         [threads](std::string& d) { return extra_direction_boundedness(d, threads); }},
        {10, "second differences stay bounded as h -> 0", 600,
         [threads](std::string& d) { return second_difference_boundedness(d, threads); }},
        {11, "directional decomposition battery + worked cases", 30,
         [](std::string& d) { return decomposition_battery(d); }},
        {12, "byte-identical reports under fixed seed", 60,
         [](std::string& d) { return deterministic_reports(d); }},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.budget_s) {
            ok = false;
            detail += " [over budget " + std::to_string(c.budget_s) + " s]";
        }
        failures += ok ? 0 : 1;
        std::printf("[%s] %2d %-66s %7.2f s  %s\n", ok ? "PASS" : "FAIL", c.id, c.what, secs,
                    detail.c_str());
    }
    if (failures) std::printf("%d criteria failed\n", failures);
    return failures ? 1 : 0;
}
