#include "bgrid/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>

namespace bgrid {

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string fmt_vec(std::span<const double> x) {
    std::string s = "(";
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i) s += ",";
        s += fmt_g(x[i]);
    }
    return s + ")";
}

double norm2(std::span<const double> v) {
    double s = 0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
}

std::vector<double> unit_dir(Rng& rng, int dim) {
    std::vector<double> l(dim);
    for (;;) {
        for (auto& c : l) c = uniform(rng, -1.0, 1.0);
        double n = norm2(l);
        if (n > 0.2) {
            for (auto& c : l) c /= n;
            return l;
        }
    }
}

struct SamplePt {
    double t = 0;
    std::vector<double> x;
};

/// Deterministic subset of the equation points (the sampling never looks at
/// the terminal slice: coefficients enter the scheme strictly before T).
std::vector<SamplePt> sample_q_points(const StencilDomain& dom, int want, Rng& rng) {
    std::vector<SamplePt> all;
    for (const auto& lv : dom.levels()) {
        if (lv.key.terminal) continue;
        for (std::int32_t pid : lv.pids) all.push_back({lv.t, dom.coords(pid)});
    }
    if (static_cast<int>(all.size()) <= want) return all;
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<SamplePt> out;
    out.reserve(want);
    for (int i = 0; i < want; ++i) {
        auto j = static_cast<std::size_t>(i) +
                 static_cast<std::size_t>(
                     uniform_int(rng, 0, static_cast<std::int64_t>(idx.size()) - 1 - i));
        std::swap(idx[i], idx[j]);
        out.push_back(all[idx[i]]);
    }
    return out;
}

/// Worst-sample tracker: margin is min over probes of (bound - quantity),
/// scale the largest magnitude seen, so pass/fail can use a relative floor.
struct Worst {
    double margin = std::numeric_limits<double>::infinity();
    double scale = 1;
    int probes = 0;
    std::string witness = "no admissible probes";

    bool note(double m, double s) {
        ++probes;
        scale = std::max(scale, std::abs(s));
        if (m < margin) {
            margin = m;
            return true;
        }
        return false;
    }
    void fold(AssumptionCheck& ck) const {
        if (probes == 0) {
            ck.margin = 0;
            ck.witness = witness;
            return;
        }
        ck.margin = margin;
        ck.witness = witness;
        ck.passed = margin >= -1e-12 * scale;
    }
};

template <class F>
std::optional<double> guarded(F&& f) {
    try {
        return f();
    } catch (const BuildError&) {
        return std::nullopt;
    } catch (const OutsideSupport&) {
        return std::nullopt;
    }
}

struct Ctx {
    const ControlProblem& pr;
    const StencilDomain& dom;
    const ValidateOptions& opt;
    std::vector<SamplePt> pts;
    std::vector<double> etas;  // probe steps {h, h/4, h/16}
    std::vector<double> psis;  // values fed to a quasilinear a

    const Constants& K() const { return pr.constants; }
    Rng rng_for(Assumption a) const {
        return Rng(opt.seed * 0x9e3779b97f4a7c15ULL + 0x51ULL * static_cast<std::uint64_t>(a) + 1);
    }
    std::span<const SamplePt> few() const {
        return {pts.data(), std::min<std::size_t>(pts.size(), 64)};
    }
};

/// Spatial difference quotients of one scalar coefficient at one point.
/// Off-lattice probes along random unit directions come first; when the
/// evaluator rejects every such point (tabulated coefficients have exact
/// lookups only), retries along the scheme's own steps, whose endpoints stay
/// on the lattice.
struct XQuot {
    std::vector<double> q, eta;
    bool lattice_fallback = false;
};

XQuot x_quotients(const Ctx& c, Rng& rng,
                  const std::function<std::optional<double>(std::span<const double>)>& eval,
                  const SamplePt& p) {
    XQuot out;
    auto v0 = eval(p.x);
    if (v0) {
        for (int rep = 0; rep < 2; ++rep) {
            auto l = unit_dir(rng, static_cast<int>(p.x.size()));
            for (double eta : c.etas) {
                auto x1 = p.x;
                for (std::size_t i = 0; i < x1.size(); ++i) x1[i] += eta * l[i];
                if (auto v1 = eval(x1)) {
                    out.q.push_back((*v1 - *v0) / eta);
                    out.eta.push_back(eta);
                }
            }
        }
        if (!out.q.empty()) return out;
    }
    out.lattice_fallback = true;
    const auto& D = c.dom.dirs();
    for (int k = 1; k <= D.max_index(); ++k) {
        const Point& ell = D.ell(k);
        std::vector<double> lv(ell.begin(), ell.end());
        double n = norm2(lv);
        if (n == 0) continue;
        auto x1 = p.x;
        for (std::size_t i = 0; i < x1.size(); ++i)
            x1[i] += D.step_of(k) * static_cast<double>(ell[i]);
        auto v1 = eval(x1);
        auto vb = eval(p.x);
        if (v1 && vb) {
            double eta = D.step_of(k) * n;  // |displacement| of a unit-direction step
            out.q.push_back((*v1 - *vb) / eta);
            out.eta.push_back(eta);
        }
    }
    return out;
}

std::string loc(int alpha, const SamplePt& p) {
    return "alpha=" + std::to_string(alpha) + " t=" + fmt_g(p.t) + " x=" + fmt_vec(p.x);
}

const char* kFiniteANote = "; alpha-continuity not applicable (finite control set)";

AssumptionCheck check_structure(const Ctx& c) {
    AssumptionCheck ck{Assumption::structure};
    ck.sampled = true;
    Rng rng = c.rng_for(Assumption::structure);
    Worst w;
    const auto& D = c.dom.dirs();
    for (int k = 1; k <= D.max_index(); ++k) {
        const Point& lp = D.ell(k);
        const Point& ln = D.ell(-k);
        bool mirrored = true;
        for (std::size_t i = 0; i < lp.size(); ++i)
            if (ln[i] != -lp[i]) mirrored = false;
        if (!mirrored && w.note(-1.0, 1.0))
            w.witness = "direction k=" + std::to_string(k) + " is not mirrored";
        std::vector<double> lv(lp.begin(), lp.end());
        double n = norm2(lv);
        if (w.note(c.K().K0 - n, std::max(1.0, n)))
            w.witness = "|ell_" + std::to_string(k) + "| = " + fmt_g(n) + " vs K0=" +
                        fmt_g(c.K().K0);
    }
    for (int al = 0; al < c.pr.num_controls(); ++al) {
        for (const auto& lv : c.dom.levels()) {
            if (lv.key.terminal) continue;  // the scheme never reads r at t = T
            double r = c.pr.r(al, lv.t);
            if (w.note(r, std::max(1.0, std::abs(r))))
                w.witness = "r = " + fmt_g(r) + " at alpha=" + std::to_string(al) +
                            " t=" + fmt_g(lv.t);
        }
        for (const auto& p : c.pts) {
            for (int k = 1; k <= c.pr.d1; ++k)
                for (double psi : c.psis) {
                    double a = c.pr.a(al, k, p.t, p.x, psi);
                    if (w.note(a, std::max(1.0, std::abs(a))))
                        w.witness = "a_k = " + fmt_g(a) + " at k=" + std::to_string(k) + " " +
                                    loc(al, p);
                }
        }
        // Lipschitz in x: b with constant K0, c with constant K3
        bool fallback = false;
        for (const auto& p : c.few()) {
            for (int k = -c.pr.d1; k <= c.pr.d1; ++k) {
                if (k == 0) continue;
                auto xs = x_quotients(
                    c, rng,
                    [&](std::span<const double> x) {
                        return guarded([&] { return c.pr.b(al, k, p.t, x); });
                    },
                    p);
                fallback |= xs.lattice_fallback;
                for (std::size_t i = 0; i < xs.q.size(); ++i)
                    if (w.note(c.K().K0 - std::abs(xs.q[i]), std::max(1.0, std::abs(xs.q[i]))))
                        w.witness = "|quot b_" + std::to_string(k) + "| = " +
                                    fmt_g(std::abs(xs.q[i])) + " vs K0, eta=" + fmt_g(xs.eta[i]) +
                                    " " + loc(al, p);
            }
            auto xs = x_quotients(
                c, rng,
                [&](std::span<const double> x) {
                    return guarded([&] { return c.pr.c(al, p.t, x); });
                },
                p);
            fallback |= xs.lattice_fallback;
            for (std::size_t i = 0; i < xs.q.size(); ++i)
                if (w.note(c.K().K3 - std::abs(xs.q[i]), std::max(1.0, std::abs(xs.q[i]))))
                    w.witness = "|quot c| = " + fmt_g(std::abs(xs.q[i])) + " vs K3, eta=" +
                                fmt_g(xs.eta[i]) + " " + loc(al, p);
        }
        if (fallback) w.witness += " [scheme-step probes]";
    }
    w.fold(ck);
    if (ck.passed) ck.witness += kFiniteANote;
    return ck;
}

AssumptionCheck check_sqrt_a(const Ctx& c) {
    AssumptionCheck ck{Assumption::sqrt_a_lipschitz};
    ck.sampled = true;
    Rng rng = c.rng_for(Assumption::sqrt_a_lipschitz);
    Worst w;
    bool fallback = false;
    for (int al = 0; al < c.pr.num_controls(); ++al)
        for (const auto& p : c.few())
            for (int k = 1; k <= c.pr.d1; ++k)
                for (double psi : c.psis) {
                    double a0 = c.pr.a(al, k, p.t, p.x, psi);
                    auto xs = x_quotients(
                        c, rng,
                        [&](std::span<const double> x) {
                            return guarded([&] { return c.pr.a(al, k, p.t, x, psi); });
                        },
                        p);
                    fallback |= xs.lattice_fallback;
                    for (std::size_t i = 0; i < xs.q.size(); ++i) {
                        double bound = c.K().K0 * (std::sqrt(std::max(a0, 0.0)) + xs.eta[i]);
                        if (w.note(bound - std::abs(xs.q[i]),
                                   std::max(1.0, std::abs(xs.q[i]))))
                            w.witness = "|quot a_" + std::to_string(k) + "| = " +
                                        fmt_g(std::abs(xs.q[i])) + " vs K0(sqrt(a)+eta) = " +
                                        fmt_g(bound) + ", eta=" + fmt_g(xs.eta[i]) + " " +
                                        loc(al, p);
                    }
                }
    w.fold(ck);
    if (fallback) ck.witness += " [scheme-step probes]";
    return ck;
}

AssumptionCheck check_drift(const Ctx& c) {
    AssumptionCheck ck{Assumption::drift_dominated};
    ck.sampled = true;
    Worst w;
    for (int al = 0; al < c.pr.num_controls(); ++al)
        for (const auto& p : c.pts)
            for (int k = -c.pr.d1; k <= c.pr.d1; ++k) {
                if (k == 0) continue;
                for (double psi : c.psis) {
                    double a = c.pr.a(al, std::abs(k), p.t, p.x, psi);
                    double b = c.pr.b(al, k, p.t, p.x);
                    double m = a - c.K().h0 * neg_part(b);
                    if (w.note(m, std::max({1.0, a, c.K().h0 * std::abs(b)})))
                        w.witness = "a_" + std::to_string(k) + " = " + fmt_g(a) +
                                    " < h0 * b^- = " + fmt_g(c.K().h0 * neg_part(b)) + " " +
                                    loc(al, p);
                }
            }
    w.fold(ck);
    return ck;
}

AssumptionCheck check_f_regularity(const Ctx& c) {
    AssumptionCheck ck{Assumption::f_regularity};
    ck.sampled = true;
    Rng rng = c.rng_for(Assumption::f_regularity);
    Worst w;
    const int np = 2 * c.pr.d1;
    std::vector<std::vector<double>> ps;
    ps.emplace_back(np, 0.0);
    double pscale = std::max(1.0, 2 * c.K().K2);
    for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> p(np);
        for (auto& v : p) v = uniform(rng, -pscale, pscale);
        ps.push_back(std::move(p));
    }
    std::vector<double> psis{0.0, 0.5 * c.K().K1, -c.K().K1};
    bool fallback = false;
    for (int al = 0; al < c.pr.num_controls(); ++al)
        for (const auto& pt : c.few())
            for (const auto& p : ps)
                for (double psi : psis) {
                    double f0 = c.pr.f(al, p, psi, pt.t, pt.x);
                    // D_{p_k}: bounded by K0 sqrt(a_k)
                    for (int k = -c.pr.d1; k <= c.pr.d1; ++k) {
                        if (k == 0) continue;
                        double a = c.pr.a(al, std::abs(k), pt.t, pt.x, psi);
                        double bound = c.K().K0 * std::sqrt(std::max(a, 0.0));
                        for (double eps : c.etas) {
                            auto p2 = p;
                            p2[DirectionSet::slot(k)] += eps;
                            double q = (c.pr.f(al, p2, psi, pt.t, pt.x) - f0) / eps;
                            if (w.note(bound - std::abs(q), std::max(1.0, std::abs(q))))
                                w.witness = "|quot_p f| = " + fmt_g(std::abs(q)) +
                                            " vs K0 sqrt(a_" + std::to_string(k) + ") = " +
                                            fmt_g(bound) + " " + loc(al, pt);
                        }
                    }
                    // D_psi: bounded by K0
                    for (double eps : c.etas) {
                        double q = (c.pr.f(al, p, psi + eps, pt.t, pt.x) - f0) / eps;
                        if (w.note(c.K().K0 - std::abs(q), std::max(1.0, std::abs(q))))
                            w.witness = "|quot_psi f| = " + fmt_g(std::abs(q)) + " vs K0 " +
                                        loc(al, pt);
                    }
                    // D_x: bounded by K3
                    auto xs = x_quotients(
                        c, rng,
                        [&](std::span<const double> x) {
                            return guarded([&] { return c.pr.f(al, p, psi, pt.t, x); });
                        },
                        pt);
                    fallback |= xs.lattice_fallback;
                    for (double q : xs.q)
                        if (w.note(c.K().K3 - std::abs(q), std::max(1.0, std::abs(q))))
                            w.witness =
                                "|quot_x f| = " + fmt_g(std::abs(q)) + " vs K3 " + loc(al, pt);
                }
    w.fold(ck);
    if (fallback) ck.witness += " [scheme-step probes]";
    if (ck.passed) ck.witness += kFiniteANote;
    return ck;
}

AssumptionCheck check_quasilinear(const Ctx& c) {
    AssumptionCheck ck{Assumption::quasilinear_growth};
    ck.sampled = true;
    Rng rng = c.rng_for(Assumption::quasilinear_growth);
    Worst w;
    const auto& K = c.K();
    const int np = 2 * c.pr.d1;
    std::vector<double> psis{0.0, 0.5 * K.K1, -K.K1, K.K1};
    bool fallback = false;
    for (int al = 0; al < c.pr.num_controls(); ++al)
        for (const auto& pt : c.few()) {
            // lower bounds and the Lipschitz moduli of a quasilinear a
            for (int k = 1; k <= c.pr.d1; ++k)
                for (double psi : psis) {
                    double a = c.pr.a(al, k, pt.t, pt.x, psi);
                    if (w.note(a - K.delta, std::max(1.0, std::abs(a))))
                        w.witness = "a_" + std::to_string(k) + " = " + fmt_g(a) +
                                    " < delta = " + fmt_g(K.delta) + " " + loc(al, pt);
                    auto xs = x_quotients(
                        c, rng,
                        [&](std::span<const double> x) {
                            return guarded([&] { return c.pr.a(al, k, pt.t, x, psi); });
                        },
                        pt);
                    fallback |= xs.lattice_fallback;
                    for (double q : xs.q)
                        if (w.note(K.K3 - std::abs(q), std::max(1.0, std::abs(q))))
                            w.witness = "|quot_x a_" + std::to_string(k) + "| = " +
                                        fmt_g(std::abs(q)) + " vs K3 " + loc(al, pt);
                    for (double eps : c.etas) {
                        double q = (c.pr.a(al, k, pt.t, pt.x, psi + eps) - a) / eps;
                        if (w.note(K.omega - std::abs(q), std::max(1.0, std::abs(q))))
                            w.witness = "|quot_psi a_" + std::to_string(k) + "| = " +
                                        fmt_g(std::abs(q)) + " vs omega = " + fmt_g(K.omega) +
                                        " " + loc(al, pt);
                    }
                }
            double cv = c.pr.c(al, pt.t, pt.x);
            if (w.note(cv + K.K3, std::max(1.0, std::abs(cv))))
                w.witness = "c = " + fmt_g(cv) + " < -K3 " + loc(al, pt);
            // growth of f in the large-|p| regime, |psi| <= K1
            for (int rep = 0; rep < 4; ++rep) {
                std::vector<double> p(np);
                for (auto& v : p) v = uniform(rng, -1.0, 1.0);
                double n = norm2(p);
                if (n == 0) continue;
                double want = K.K2 + uniform(rng, 0.0, 4.0 * std::max(1.0, K.K2));
                for (auto& v : p) v *= want / n;
                double psi = uniform(rng, -K.K1, K.K1);
                double f0 = c.pr.f(al, p, psi, pt.t, pt.x);
                double bound = K.omega * want * want + K.K3;
                if (w.note(bound - std::abs(f0), std::max(1.0, std::abs(f0))))
                    w.witness = "|f| = " + fmt_g(std::abs(f0)) + " vs omega|p|^2+K3 = " +
                                fmt_g(bound) + " at |p|=" + fmt_g(want) + " " + loc(al, pt);
                // gradient growth
                for (int k = -c.pr.d1; k <= c.pr.d1; ++k) {
                    if (k == 0) continue;
                    double eps = c.etas.back();
                    auto p2 = p;
                    p2[DirectionSet::slot(k)] += eps;
                    double q = (c.pr.f(al, p2, psi, pt.t, pt.x) - f0) / eps;
                    double pmax = std::max(norm2(p), norm2(p2));
                    double gb = K.omega * pmax + K.K3;
                    if (w.note(gb - std::abs(q), std::max(1.0, std::abs(q))))
                        w.witness = "|quot_p f| = " + fmt_g(std::abs(q)) +
                                    " vs omega|p|+K3 = " + fmt_g(gb) + " " + loc(al, pt);
                }
                for (double eps : c.etas)
                    if (std::abs(psi + eps) <= K.K1) {
                        double q = (c.pr.f(al, p, psi + eps, pt.t, pt.x) - f0) / eps;
                        double gb = K.omega * want * want + K.K3;
                        if (w.note(gb - std::abs(q), std::max(1.0, std::abs(q))))
                            w.witness = "|quot_psi f| = " + fmt_g(std::abs(q)) +
                                        " vs omega|p|^2+K3 " + loc(al, pt);
                    }
                auto xs = x_quotients(
                    c, rng,
                    [&](std::span<const double> x) {
                        return guarded([&] { return c.pr.f(al, p, psi, pt.t, x); });
                    },
                    pt);
                fallback |= xs.lattice_fallback;
                double gb = K.omega * want * want * want + K.K3;
                for (double q : xs.q)
                    if (w.note(gb - std::abs(q), std::max(1.0, std::abs(q))))
                        w.witness = "|quot_x f| = " + fmt_g(std::abs(q)) +
                                    " vs omega|p|^3+K3 = " + fmt_g(gb) + " " + loc(al, pt);
            }
        }
    w.fold(ck);
    if (fallback) ck.witness += " [scheme-step probes]";
    if (ck.passed) ck.witness += kFiniteANote;
    return ck;
}

AssumptionCheck check_smallness(const Ctx& c) {
    AssumptionCheck ck{Assumption::smallness};
    ck.sampled = false;
    const auto& K = c.K();
    double lhs = K.Cstruct * K.K1 * (1 + K.K1) * K.omega;
    ck.margin = K.delta - lhs;
    ck.passed = ck.margin >= -1e-12 * std::max(1.0, lhs);
    ck.witness = "Cstruct K1 (1+K1) omega = " + fmt_g(lhs) + " vs delta = " + fmt_g(K.delta);
    return ck;
}

AssumptionCheck check_second_differences(const Ctx& c) {
    AssumptionCheck ck{Assumption::second_differences};
    ck.sampled = true;
    if (c.pr.f_mode != FMode::independent) {
        ck.passed = false;
        ck.margin = -1;
        ck.witness = "f depends on (p, psi)";
        return ck;
    }
    Worst w;
    const auto& D = c.dom.dirs();
    const auto& K = c.K();
    const std::vector<double> p0(2 * c.pr.d1, 0.0);
    // physical displacement and divisor of one signed step
    auto disp = [&](int k) {
        std::vector<double> v(c.pr.dim);
        const Point& ell = D.ell(k);
        for (int i = 0; i < c.pr.dim; ++i) v[i] = D.step_of(k) * static_cast<double>(ell[i]);
        return v;
    };
    for (int al = 0; al < c.pr.num_controls(); ++al)
        for (const auto& pt : c.few())
            for (int i = -D.max_index(); i <= D.max_index(); ++i) {
                if (i == 0) continue;
                auto vi = disp(i);
                // first differences of f
                {
                    auto x1 = pt.x;
                    for (int d = 0; d < c.pr.dim; ++d) x1[d] += vi[d];
                    auto f1 = guarded([&] { return c.pr.f(al, p0, 0.0, pt.t, x1); });
                    auto f0 = guarded([&] { return c.pr.f(al, p0, 0.0, pt.t, pt.x); });
                    if (f1 && f0) {
                        double q = (*f1 - *f0) / D.step_of(i);
                        if (w.note(K.K3 - std::abs(q), std::max(1.0, std::abs(q))))
                            w.witness = "|delta_i f| = " + fmt_g(std::abs(q)) + " vs K3, i=" +
                                        std::to_string(i) + " " + loc(al, pt);
                    }
                }
                for (int j = -D.max_index(); j <= D.max_index(); ++j) {
                    if (j == 0) continue;
                    auto vj = disp(j);
                    double div = D.step_of(i) * D.step_of(j);
                    auto d2 = [&](auto&& eval) -> std::optional<double> {
                        auto x_i = pt.x, x_j = pt.x, x_ij = pt.x;
                        for (int d = 0; d < c.pr.dim; ++d) {
                            x_i[d] += vi[d];
                            x_j[d] += vj[d];
                            x_ij[d] += vi[d] + vj[d];
                        }
                        auto v00 = guarded([&] { return eval(pt.x); });
                        auto v10 = guarded([&] { return eval(x_i); });
                        auto v01 = guarded([&] { return eval(x_j); });
                        auto v11 = guarded([&] { return eval(x_ij); });
                        if (!(v00 && v10 && v01 && v11)) return std::nullopt;
                        return (*v11 - *v10 - *v01 + *v00) / div;
                    };
                    auto pair_tag = [&](const char* name) {
                        return std::string("|dd ") + name + "|, (i,j)=(" + std::to_string(i) +
                               "," + std::to_string(j) + ") " + loc(al, pt);
                    };
                    for (int k = -c.pr.d1; k <= c.pr.d1; ++k) {
                        if (k == 0) continue;
                        auto q = d2([&](std::span<const double> x) {
                            return c.pr.b(al, k, pt.t, x);
                        });
                        if (q && w.note(K.K3 - std::abs(*q), std::max(1.0, std::abs(*q))))
                            w.witness = fmt_g(std::abs(*q)) + " vs K3 in " + pair_tag("b");
                    }
                    if (auto q = d2([&](std::span<const double> x) {
                            return c.pr.c(al, pt.t, x);
                        }))
                        if (w.note(K.K3 - std::abs(*q), std::max(1.0, std::abs(*q))))
                            w.witness = fmt_g(std::abs(*q)) + " vs K3 in " + pair_tag("c");
                    if (auto q = d2([&](std::span<const double> x) {
                            return c.pr.f(al, p0, 0.0, pt.t, x);
                        }))
                        if (w.note(K.K3 - std::abs(*q), std::max(1.0, std::abs(*q))))
                            w.witness = fmt_g(std::abs(*q)) + " vs K3 in " + pair_tag("f");
                    for (int k = 1; k <= c.pr.d1; ++k) {
                        double a0 = c.pr.a(al, k, pt.t, pt.x, 0.0);
                        double bound = K.K0 + K.K3 * std::sqrt(std::max(a0, 0.0));
                        auto q = d2([&](std::span<const double> x) {
                            return c.pr.a(al, k, pt.t, x, 0.0);
                        });
                        if (q && w.note(bound - std::abs(*q), std::max(1.0, std::abs(*q))))
                            w.witness = fmt_g(std::abs(*q)) + " vs K0+K3 sqrt(a) = " +
                                        fmt_g(bound) + " in " + pair_tag("a");
                    }
                }
            }
    w.fold(ck);
    return ck;
}

AssumptionCheck check_coefficient_bounds(const Ctx& c) {
    AssumptionCheck ck{Assumption::coefficient_bounds};
    ck.sampled = true;
    Worst w;
    const auto& K = c.K();
    const std::vector<double> p0(2 * c.pr.d1, 0.0);
    for (const auto& pt : c.pts) {
        for (int k = 1; k <= c.pr.d1; ++k)
            for (double psi : c.psis) {
                double sup = -std::numeric_limits<double>::infinity();
                for (int al = 0; al < c.pr.num_controls(); ++al)
                    sup = std::max(sup, c.pr.a(al, k, pt.t, pt.x, psi));
                if (w.note(sup - K.delta, std::max(1.0, std::abs(sup))))
                    w.witness = "sup_alpha a_" + std::to_string(k) + " = " + fmt_g(sup) +
                                " < delta at t=" + fmt_g(pt.t) + " x=" + fmt_vec(pt.x);
                if (w.note(K.K0 - sup, std::max(1.0, std::abs(sup))))
                    w.witness = "sup_alpha a_" + std::to_string(k) + " = " + fmt_g(sup) +
                                " > K0 at t=" + fmt_g(pt.t) + " x=" + fmt_vec(pt.x);
            }
        for (int al = 0; al < c.pr.num_controls(); ++al) {
            double r = c.pr.r(al, pt.t);
            if (w.note(K.K3 - r, std::max(1.0, r)))
                w.witness = "r = " + fmt_g(r) + " > K3 " + loc(al, pt);
            for (int k = -c.pr.d1; k <= c.pr.d1; ++k) {
                if (k == 0) continue;
                double b = c.pr.b(al, k, pt.t, pt.x);
                if (w.note(K.K3 - std::abs(b), std::max(1.0, std::abs(b))))
                    w.witness = "|b_" + std::to_string(k) + "| = " + fmt_g(std::abs(b)) +
                                " > K3 " + loc(al, pt);
            }
            double cv = c.pr.c(al, pt.t, pt.x);
            if (w.note(K.K3 - std::abs(cv), std::max(1.0, std::abs(cv))))
                w.witness = "|c| = " + fmt_g(std::abs(cv)) + " > K3 " + loc(al, pt);
            double f = c.pr.f(al, p0, 0.0, pt.t, pt.x);
            if (w.note(K.K3 - std::abs(f), std::max(1.0, std::abs(f))))
                w.witness = "|f| = " + fmt_g(std::abs(f)) + " > K3 " + loc(al, pt);
        }
    }
    w.fold(ck);
    return ck;
}

AssumptionCheck check_direction_structure(const Ctx& c) {
    AssumptionCheck ck{Assumption::direction_structure};
    ck.sampled = false;
    const auto& D = c.dom.dirs();
    const int d1 = D.d1();
    if (d1 < 2) {
        ck.passed = false;
        ck.margin = -1;
        ck.witness = "d1 = " + std::to_string(d1) + ": no long directions to split";
        return ck;
    }
    auto eq = [](const Point& u, const Point& v) { return u == v; };
    auto neg = [](const Point& u) {
        Point r(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) r[i] = -u[i];
        return r;
    };
    std::string first_failure;
    for (int d0 = 1; d0 < d1; ++d0) {
        std::string witness = "d0=" + std::to_string(d0);
        bool ok = true;
        for (int k = d0 + 1; k <= d1 && ok; ++k) {
            bool split = false;
            for (int i = -d0; i <= d0 && !split; ++i) {
                if (i == 0) continue;
                for (int j = -d0; j <= d0 && !split; ++j) {
                    if (j == 0) continue;
                    const Point &li = D.ell(i), &lj = D.ell(j);
                    if (eq(li, lj) || eq(li, neg(lj))) continue;
                    Point sum(li.size());
                    for (std::size_t d = 0; d < li.size(); ++d) sum[d] = li[d] + lj[d];
                    if (eq(sum, D.ell(k))) {
                        split = true;
                        witness += "; ell_" + std::to_string(k) + " = ell_" + std::to_string(i) +
                                   " + ell_" + std::to_string(j);
                    }
                }
            }
            if (!split) {
                ok = false;
                if (first_failure.empty())
                    first_failure = "ell_" + std::to_string(k) +
                                    " has no admissible split over d0=" + std::to_string(d0);
            }
        }
        if (ok) {
            ck.margin = 1;
            ck.witness = witness;
            return ck;
        }
    }
    ck.passed = false;
    ck.margin = -1;
    ck.witness = first_failure;
    return ck;
}

}  // namespace

Coeffs eval_coeffs(const ControlProblem& pr, int alpha, double t, std::span<const double> x,
                   double psi) {
    if (alpha < 0 || alpha >= pr.num_controls())
        throw BuildError("unknown control index " + std::to_string(alpha) + " (problem '" +
                         pr.name + "' has " + std::to_string(pr.num_controls()) + " controls)");
    Coeffs co;
    co.r = pr.r(alpha, t);
    co.c = pr.c(alpha, t, x);
    co.a.resize(2 * pr.d1);
    co.b.resize(2 * pr.d1);
    for (int k = 1; k <= pr.d1; ++k) {
        double av = pr.a(alpha, k, t, x, psi);
        co.a[DirectionSet::slot(k)] = av;
        co.a[DirectionSet::slot(-k)] = av;
        co.b[DirectionSet::slot(k)] = pr.b(alpha, k, t, x);
        co.b[DirectionSet::slot(-k)] = pr.b(alpha, -k, t, x);
    }
    return co;
}

const char* to_string(Assumption a) {
    switch (a) {
        case Assumption::structure: return "structure";
        case Assumption::sqrt_a_lipschitz: return "sqrt_a_lipschitz";
        case Assumption::drift_dominated: return "drift_dominated";
        case Assumption::f_regularity: return "f_regularity";
        case Assumption::quasilinear_growth: return "quasilinear_growth";
        case Assumption::smallness: return "smallness";
        case Assumption::second_differences: return "second_differences";
        case Assumption::coefficient_bounds: return "coefficient_bounds";
        case Assumption::direction_structure: return "direction_structure";
    }
    return "?";
}

std::optional<Assumption> assumption_from_string(const std::string& s) {
    for (Assumption a : all_assumptions())
        if (s == to_string(a)) return a;
    return std::nullopt;
}

std::vector<Assumption> all_assumptions() {
    return {Assumption::structure,          Assumption::sqrt_a_lipschitz,
            Assumption::drift_dominated,    Assumption::f_regularity,
            Assumption::quasilinear_growth, Assumption::smallness,
            Assumption::second_differences, Assumption::coefficient_bounds,
            Assumption::direction_structure};
}

bool ValidationReport::all_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

const AssumptionCheck* ValidationReport::find(Assumption a) const {
    for (const auto& c : checks)
        if (c.id == a) return &c;
    return nullptr;
}

ValidationReport validate_assumptions(const ControlProblem& pr, const StencilDomain& dom,
                                      std::span<const Assumption> which,
                                      const ValidateOptions& opt) {
    if (which.empty()) throw BuildError("validate_assumptions: empty assumption list");
    if (pr.dim != dom.dirs().dim() || pr.d1 != dom.dirs().d1())
        throw BuildError("problem '" + pr.name + "' has dim=" + std::to_string(pr.dim) +
                         " d1=" + std::to_string(pr.d1) + " but the domain was built for dim=" +
                         std::to_string(dom.dirs().dim()) +
                         " d1=" + std::to_string(dom.dirs().d1()));
    Ctx c{pr, dom, opt, {}, {}, {}};
    Rng prng(opt.seed);
    c.pts = sample_q_points(dom, std::max(8, opt.samples), prng);
    double h = dom.dirs().h();
    c.etas = {h, h / 4, h / 16};
    c.psis = {0.0};
    if (pr.a_depends_on_psi) {
        double K1 = pr.constants.K1;
        c.psis = {0.0, 0.5 * K1, -0.5 * K1, K1, -K1};
    }

    ValidationReport rep;
    for (Assumption a : which) {
        switch (a) {
            case Assumption::structure: rep.checks.push_back(check_structure(c)); break;
            case Assumption::sqrt_a_lipschitz: rep.checks.push_back(check_sqrt_a(c)); break;
            case Assumption::drift_dominated: rep.checks.push_back(check_drift(c)); break;
            case Assumption::f_regularity: rep.checks.push_back(check_f_regularity(c)); break;
            case Assumption::quasilinear_growth: rep.checks.push_back(check_quasilinear(c)); break;
            case Assumption::smallness: rep.checks.push_back(check_smallness(c)); break;
            case Assumption::second_differences:
                rep.checks.push_back(check_second_differences(c));
                break;
            case Assumption::coefficient_bounds:
                rep.checks.push_back(check_coefficient_bounds(c));
                break;
            case Assumption::direction_structure:
                rep.checks.push_back(check_direction_structure(c));
                break;
        }
    }
    return rep;
}

}  // namespace bgrid
