#include "bgrid/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace bgrid {

namespace {

Point add(const Point& a, const Point& b) {
    Point r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

Point sub(const Point& a, const Point& b) {
    Point r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

// ---- GridFunction -----------------------------------------------------------

GridFunction::GridFunction(std::shared_ptr<const StencilDomain> dom)
    : dom_(std::move(dom)),
      vals_(dom_->num_slots(), 0.0),
      mask_(dom_->num_slots(), 0) {}

double GridFunction::operator[](std::int32_t slot) const {
    if (slot < 0 || slot >= static_cast<std::int32_t>(vals_.size()) || !mask_[slot])
        throw OutsideSupport("grid function evaluated outside its support (slot " +
                             std::to_string(slot) + ")");
    return vals_[slot];
}

double& GridFunction::set(std::int32_t slot) {
    mask_[slot] = 1;
    return vals_[slot];
}

double GridFunction::at(TimeKey tk, const Point& p) const {
    std::int32_t s = dom_->slot(tk, p);
    if (s < 0) throw OutsideSupport("grid function evaluated at a point outside its domain");
    return (*this)[s];
}

void GridFunction::set(TimeKey tk, const Point& p, double v) {
    std::int32_t s = dom_->slot(tk, p);
    if (s < 0) throw OutsideSupport("grid function assigned at a point outside its domain");
    set(s) = v;
}

std::size_t GridFunction::num_defined() const {
    std::size_t n = 0;
    for (auto m : mask_) n += m;
    return n;
}

GridFunction GridFunction::sample(std::shared_ptr<const StencilDomain> dom,
                                  const std::function<double(double, std::span<const double>)>& f) {
    GridFunction u(dom);
    for (const auto& lvl : dom->levels()) {
        for (std::size_t i = 0; i < lvl.pids.size(); ++i) {
            std::int32_t s = lvl.slot0 + static_cast<std::int32_t>(i);
            u.set(s) = f(lvl.t, dom->coords(lvl.pids[i]));
        }
    }
    return u;
}

// ---- lattice operators --------------------------------------------------------

namespace {

/// Apply `combine` at every slot whose displaced companions exist and are
/// defined; the output is defined exactly there.
template <class F>
GridFunction pointwise_stencil(const GridFunction& u, std::span<const Point> offsets, F combine) {
    const auto& dom = *u.domain();
    GridFunction out(u.domain());
    std::vector<double> vals(offsets.size());
    for (int li = 0; li < static_cast<int>(dom.levels().size()); ++li) {
        const auto& lvl = dom.levels()[li];
        for (std::size_t i = 0; i < lvl.pids.size(); ++i) {
            std::int32_t s = lvl.slot0 + static_cast<std::int32_t>(i);
            if (!u.defined(s)) continue;
            const Point& p = dom.point(lvl.pids[i]);
            bool ok = true;
            for (std::size_t j = 0; j < offsets.size(); ++j) {
                std::int32_t t = dom.slot(li, dom.pid_of(add(p, offsets[j])));
                if (t < 0 || !u.defined(t)) {
                    ok = false;
                    break;
                }
                vals[j] = u.values()[t];
            }
            if (ok) out.set(s) = combine(u.values()[s], std::span<const double>(vals));
        }
    }
    return out;
}

}  // namespace

GridFunction delta(const GridFunction& u, const LatticeStep& step) {
    const Point offs[] = {step.offset};
    const double inv = 1.0 / step.step;
    return pointwise_stencil(u, offs, [inv](double center, std::span<const double> v) {
        return (v[0] - center) * inv;
    });
}

GridFunction shift(const GridFunction& u, const LatticeStep& step) {
    const Point offs[] = {step.offset};
    return pointwise_stencil(u, offs,
                             [](double, std::span<const double> v) { return v[0]; });
}

GridFunction laplace_dir(const GridFunction& u, const LatticeStep& step) {
    Point neg(step.offset.size());
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -step.offset[i];
    const Point offs[] = {step.offset, neg};
    const double inv2 = 1.0 / (step.step * step.step);
    return pointwise_stencil(u, offs, [inv2](double center, std::span<const double> v) {
        return (v[0] - 2.0 * center + v[1]) * inv2;
    });
}

GridFunction delta2(const GridFunction& u, const LatticeStep& s1, const LatticeStep& s2) {
    return delta(delta(u, s1), s2);
}

GridFunction dtau_T(const GridFunction& u) {
    const auto& dom = *u.domain();
    const double inv = 1.0 / dom.time().tau;
    GridFunction out(u.domain());
    for (std::int32_t s = 0; s < dom.num_slots(); ++s) {
        if (dom.is_terminal(s) || !u.defined(s)) continue;
        std::int32_t nxt = dom.successor(s);
        if (nxt < 0 || !u.defined(nxt)) continue;
        out.set(s) = (u.values()[nxt] - u.values()[s]) * inv;
    }
    return out;
}

GridFunction delta_k(const GridFunction& u, int k) {
    return delta(u, u.domain()->dirs().step(k));
}

GridFunction laplace_k(const GridFunction& u, int k) {
    return laplace_dir(u, u.domain()->dirs().step(k));
}

LatticeStep resolve_step(const DirectionSet& dirs, double eta, std::span<const Coord> l) {
    if (!(eta > 0)) throw BuildError("difference step must be positive");
    if (static_cast<int>(l.size()) != dirs.dim())
        throw BuildError("difference direction has wrong dimension");
    const double g = dirs.base_step();
    Point w(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) {
        double want = eta * static_cast<double>(l[i]);
        w[i] = static_cast<Coord>(std::llround(want / g));
        if (std::abs(w[i] * g - want) > 1e-12 * std::max(1.0, std::abs(want)))
            throw BuildError("step eta * l does not land on the base lattice");
    }
    return {std::move(w), eta};
}

// ---- closure calculus ----------------------------------------------------------

namespace fn {

std::vector<double> shifted(std::span<const double> x, std::span<const double> l, double nu) {
    std::vector<double> y(x.begin(), x.end());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += nu * l[i];
    return y;
}

double delta(const ScalarFn& f, double nu, std::span<const double> l, std::span<const double> x) {
    return (f(shifted(x, l, nu)) - f(x)) / nu;
}

double laplace(const ScalarFn& f, double nu, std::span<const double> l, std::span<const double> x) {
    return (f(shifted(x, l, nu)) - 2.0 * f(x) + f(shifted(x, l, -nu))) / (nu * nu);
}

double shift(const ScalarFn& f, double nu, std::span<const double> l, std::span<const double> x) {
    return f(shifted(x, l, nu));
}

}  // namespace fn

IdentityReport verify_identities(const ScalarFn& a, const ScalarFn& psi, double nu,
                                 std::span<const double> l1, std::span<const double> l2,
                                 const std::vector<std::vector<double>>& points) {
    IdentityReport rep;
    rep.comparison_slack = std::numeric_limits<double>::infinity();
    auto prod = [&](std::span<const double> x) { return a(x) * psi(x); };
    std::vector<double> neg_l1(l1.begin(), l1.end());
    for (auto& v : neg_l1) v = -v;
    std::vector<double> l1p2(l1.size());
    for (std::size_t i = 0; i < l1.size(); ++i) l1p2[i] = l1[i] + l2[i];

    double scale = 1.0;
    auto track = [&](double lhs, double rhs, double& field) {
        scale = std::max({scale, std::abs(lhs), std::abs(rhs)});
        field = std::max(field, std::abs(lhs - rhs));
    };

    for (const auto& xv : points) {
        std::span<const double> x(xv);
        const double da1 = fn::delta(a, nu, l1, x);
        const double da2 = fn::delta(a, nu, l2, x);
        const double dp1 = fn::delta(psi, nu, l1, x);
        const double dp2 = fn::delta(psi, nu, l2, x);
        const double av = a(x), pv = psi(x);

        // every second quotient is a combination of function values divided
        // by nu^2; that pre-cancellation magnitude is part of the natural
        // scale of the terms, or small steps would demand impossible accuracy
        scale = std::max(scale, (1.0 + std::abs(av)) * (1.0 + std::abs(pv)) / (nu * nu));

        // delta(a psi) = (delta a) psi + (shifted a) delta psi
        track(fn::delta(prod, nu, l1, x), da1 * pv + fn::shift(a, nu, l1, x) * dp1,
              rep.product_shift);
        // ... = a delta psi + psi delta a + nu (delta a)(delta psi)
        track(fn::delta(prod, nu, l1, x), av * dp1 + pv * da1 + nu * da1 * dp1,
              rep.product_symmetric);

        // mixed: delta_{l2} delta_{l1} (a psi); the cross term carries the
        // step nu of the quotients
        auto d1_prod = [&](std::span<const double> y) { return fn::delta(prod, nu, l1, y); };
        auto d1_psi = [&](std::span<const double> y) { return fn::delta(psi, nu, l1, y); };
        auto d1_a = [&](std::span<const double> y) { return fn::delta(a, nu, l1, y); };
        const double dd_prod = fn::delta(d1_prod, nu, l2, x);
        const double dd_psi = fn::delta(d1_psi, nu, l2, x);
        const double dd_a = fn::delta(d1_a, nu, l2, x);
        track(dd_prod,
              av * dd_psi + da2 * dp1 + da1 * dp2 + nu * (da1 + da2) * dd_psi +
                  dd_a * fn::shift(psi, nu, l1p2, x),
              rep.product_mixed);

        // second-difference product rule and its psi^2 corollary
        const double Dp = fn::laplace(psi, nu, l1, x);
        const double Da = fn::laplace(a, nu, l1, x);
        const double dp1m = fn::delta(psi, nu, neg_l1, x);
        const double da1m = fn::delta(a, nu, neg_l1, x);
        track(fn::laplace(prod, nu, l1, x), av * Dp + pv * Da + da1 * dp1 + da1m * dp1m,
              rep.product_laplace);
        auto psi2 = [&](std::span<const double> y) { double v = psi(y); return v * v; };
        track(fn::laplace(psi2, nu, l1, x), 2.0 * pv * Dp + dp1 * dp1 + dp1m * dp1m,
              rep.square_laplace);

        // |Delta psi| <= |delta_-((delta_+ psi)^-)| + |delta_+((delta_- psi)^-)|
        auto dplus_neg = [&](std::span<const double> y) {
            return neg_part(fn::delta(psi, nu, l1, y));
        };
        auto dminus_neg = [&](std::span<const double> y) {
            return neg_part(fn::delta(psi, nu, neg_l1, y));
        };
        const double lhs = std::abs(Dp);
        const double rhs = std::abs(fn::delta(dplus_neg, nu, neg_l1, x)) +
                           std::abs(fn::delta(dminus_neg, nu, l1, x));
        scale = std::max({scale, lhs, rhs});
        rep.comparison_slack = std::min(rep.comparison_slack, rhs - lhs);
    }
    rep.max_residual = std::max({rep.product_shift, rep.product_symmetric, rep.product_mixed,
                                 rep.product_laplace, rep.square_laplace});
    rep.scale = scale;
    return rep;
}

SecondDiffBound second_difference_bound(const GridFunction& phi, int level, const Point& center,
                                        int d0) {
    const auto& dom = *phi.domain();
    const DirectionSet& D = dom.dirs();
    const int d1 = D.d1();
    if (d0 < 1 || d0 > d1) throw BuildError("second_difference_bound: d0 out of range");
    const double h = D.h();

    auto val = [&](const Point& p) {
        std::int32_t s = dom.slot(level, dom.pid_of(p));
        if (s < 0 || !phi.defined(s))
            throw OutsideSupport("second_difference_bound: patch too small");
        return phi.values()[s];
    };
    auto lap = [&](int k, const Point& x) {
        const Point& o = D.offset(k);
        return (val(add(x, o)) - 2.0 * val(x) + val(sub(x, o))) / (h * h);
    };

    // evaluation stars: Lambda0 (+ the short one-step set) around the center
    std::vector<Point> lambda0, shorts;
    for (int k = 1; k <= d1; ++k) {
        lambda0.push_back(D.offset(k));
        lambda0.push_back(D.offset(-k));
    }
    for (int k = 1; k <= d0; ++k) {
        shorts.push_back(D.offset(k));
        shorts.push_back(D.offset(-k));
    }
    std::vector<Point> star_long = {Point(D.dim(), 0)};   // Lambda0 u {0}
    std::vector<Point> star_short = {Point(D.dim(), 0)};  // (Lambda0 + L) u {0}
    for (const auto& o : lambda0) star_long.push_back(o);
    for (const auto& o : lambda0)
        for (const auto& s : shorts) star_short.push_back(add(o, s));

    double m_short = 0, m_long = 0;
    for (int k = 1; k <= d0; ++k)
        for (const auto& o : star_short) m_short = std::max(m_short, std::abs(lap(k, add(center, o))));
    for (int k = d0 + 1; k <= d1; ++k)
        for (const auto& o : star_long) m_long = std::max(m_long, std::abs(lap(k, add(center, o))));
    const double rhs = 4.0 * m_short + 4.0 * m_long;

    SecondDiffBound out;
    out.min_slack = std::numeric_limits<double>::infinity();
    out.scale = std::max(1.0, rhs);
    for (int ka = -d1; ka <= d1; ++ka) {
        if (ka == 0) continue;
        for (int kb = -d1; kb <= d1; ++kb) {
            if (kb == 0) continue;
            const Point& o1 = D.offset(ka);
            const Point& o2 = D.offset(kb);
            double dd = (val(add(add(center, o1), o2)) - val(add(center, o1)) -
                         val(add(center, o2)) + val(center)) /
                        (h * h);
            out.scale = std::max(out.scale, std::abs(dd));
            out.min_slack = std::min(out.min_slack, rhs - std::abs(dd));
        }
    }
    return out;
}

// ---- CSV ----------------------------------------------------------------------

void write_csv(const GridFunction& u, std::ostream& out) {
    const auto& dom = *u.domain();
    out << "time_index";
    for (int i = 0; i < dom.dirs().dim(); ++i) out << ",c" << i;
    out << ",value\n";
    for (const auto& lvl : dom.levels()) {
        int ti = lvl.key.terminal ? dom.time().tprime_index() : lvl.key.n;
        for (std::size_t i = 0; i < lvl.pids.size(); ++i) {
            std::int32_t s = lvl.slot0 + static_cast<std::int32_t>(i);
            if (!u.defined(s)) continue;
            out << ti;
            for (Coord c : dom.point(lvl.pids[i])) out << "," << c;
            out << "," << fmt_double(u.values()[s]) << "\n";
        }
    }
}

std::string to_csv(const GridFunction& u) {
    std::ostringstream os;
    write_csv(u, os);
    return os.str();
}

GridFunction read_csv(std::shared_ptr<const StencilDomain> dom, std::istream& in) {
    GridFunction u(dom);
    std::string line;
    std::size_t lineno = 0;
    const int dim = dom->dirs().dim();
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("time_index", 0) == 0) continue;
        std::istringstream ss(line);
        std::string tok;
        auto next = [&]() {
            if (!std::getline(ss, tok, ','))
                throw BuildError("grid csv: short row at line " + std::to_string(lineno));
            return tok;
        };
        int ti = std::stoi(next());
        Point p(dim);
        for (int i = 0; i < dim; ++i) p[i] = std::stoll(next());
        double v = std::stod(next());
        TimeKey tk = (ti == dom->time().tprime_index()) ? TimeKey::horizon() : TimeKey::level(ti);
        std::int32_t s = dom->slot(tk, p);
        if (s < 0)
            throw OutsideSupport("grid csv: row " + std::to_string(lineno) +
                                 " names a point outside the domain");
        u.set(s) = v;
    }
    return u;
}

}  // namespace bgrid
