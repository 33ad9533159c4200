#include "bgrid/estimates.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "bgrid/util.hpp"

namespace bgrid {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// xi_minus for every slot of the domain, indexed like grid-function values.
std::vector<double> xi_minus_by_slot(const StencilDomain& dom, const Weights& w) {
    std::vector<double> xim(dom.num_slots(), 1.0);
    for (const auto& lv : dom.levels()) {
        double v = std::min(w.xi(lv.key), 1.0);
        for (std::size_t i = 0; i < lv.pids.size(); ++i)
            xim[lv.slot0 + static_cast<std::int32_t>(i)] = v;
    }
    return xim;
}

using SlotPred = std::function<bool(std::int32_t)>;

/// Fold |g| (or its negative part) over the slots of `pred` where g is
/// defined, both with and without the xi_minus weight. Passing nullptr skips
/// an accumulator.
void scan_max(const GridFunction& g, const std::vector<double>& xim, const SlotPred& pred,
              std::optional<double>* weighted, std::optional<double>* plain,
              bool negative_part = false) {
    const auto& vals = g.values();
    for (std::int32_t s = 0; s < static_cast<std::int32_t>(vals.size()); ++s) {
        if (!g.defined(s) || !pred(s)) continue;
        double v = negative_part ? neg_part(vals[s]) : std::abs(vals[s]);
        if (plain) max_into(*plain, v);
        if (weighted) max_into(*weighted, xim[s] * v);
    }
}

}  // namespace

double Weights::xi(TimeKey tk) const {
    return std::exp(m * (tk.terminal ? Tprime : tk.n * tau));
}

Weights weights_of(const ControlProblem& pr, const TimeGrid& time) {
    Weights w;
    w.m = pr.constants.m;
    w.tau = time.tau;
    w.T = time.T;
    w.Tprime = time.Tprime;
    w.c_m = w.m == 0 ? 0.0 : (1 - std::exp(-w.m * w.tau)) / w.tau;
    return w;
}

double lambda_of(const ControlProblem& pr, const StencilDomain& dom, const Weights& w) {
    double lam = std::numeric_limits<double>::infinity();
    for (const auto& lv : dom.levels()) {
        if (lv.key.terminal) continue;
        for (std::int32_t pid : lv.pids) {
            auto x = dom.coords(pid);
            for (int al = 0; al < pr.num_controls(); ++al)
                lam = std::min(lam, pr.c(al, lv.t, x) + pr.r(al, lv.t) * w.c_m);
        }
    }
    return lam;
}

DiffNorms diff_norms(const GridFunction& u, const ControlProblem& pr, int threads) {
    if (!u.domain()) throw BuildError("diff_norms needs a grid function bound to a domain");
    const StencilDomain& dom = *u.domain();
    const DirectionSet& dirs = dom.dirs();
    const int d1 = dirs.d1();
    const Weights w = weights_of(pr, dom.time());
    const auto xim = xi_minus_by_slot(dom, w);

    std::vector<std::uint8_t> q0(dom.num_slots(), 0);
    for (std::int32_t s : dom.initial_slots()) q0[s] = 1;
    SlotPred in_qbar = [](std::int32_t) { return true; };
    SlotPred in_q = [&dom](std::int32_t s) { return dom.in_Q(s); };
    SlotPred in_dq1 = [&dom](std::int32_t s) { return dom.in_dQ1(s); };
    SlotPred in_dq2 = [&dom](std::int32_t s) { return dom.in_dQ2(s); };
    SlotPred in_q0 = [&q0](std::int32_t s) { return q0[s] != 0; };

    DiffNorms n;
    scan_max(u, xim, in_qbar, &n.sup_u_Qbar, nullptr);
    scan_max(dtau_T(u), xim, in_q, &n.sup_dtau_neg_Q, nullptr, /*negative_part=*/true);

    // first differences along the plain directions, then the extra pair
    std::vector<GridFunction> d1f;
    for (int k = 1; k <= d1; ++k) {
        d1f.push_back(delta_k(u, k));
        d1f.push_back(delta_k(u, -k));
    }
    for (const auto& g : d1f) {
        scan_max(g, xim, in_qbar, &n.sup_d1_Qbar, &n.lhs_d1_Qbar);
        scan_max(g, xim, in_dq1, &n.sup_d1_dQ1, nullptr);
    }
    std::vector<GridFunction> dex;
    if (dirs.has_extra()) {
        dex.push_back(delta_k(u, d1 + 1));
        dex.push_back(delta_k(u, -(d1 + 1)));
        for (const auto& g : dex) {
            scan_max(g, xim, in_q0, &n.sup_dextra_Q0, &n.lhs_dextra_Q0);
            scan_max(g, xim, in_dq1, &n.sup_dextra_dQ1, nullptr);
        }
        // the pointwise sum |d_k u| + |d_extra u|, maximised jointly
        for (std::int32_t s = 0; s < dom.num_slots(); ++s) {
            if (!dom.in_dQ1(s)) continue;
            std::optional<double> bk, be;
            for (const auto& g : d1f)
                if (g.defined(s)) max_into(bk, std::abs(g.values()[s]));
            for (const auto& g : dex)
                if (g.defined(s)) max_into(be, std::abs(g.values()[s]));
            if (bk && be) max_into(n.sup_d1_plus_dextra_dQ1, xim[s] * (*bk + *be));
        }
    }

    // mixed second differences over unordered signed pairs (they commute)
    std::vector<int> signed_k;
    for (int k = 1; k <= d1; ++k) {
        signed_k.push_back(k);
        signed_k.push_back(-k);
    }
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < signed_k.size(); ++i)
        for (std::size_t j = i; j < signed_k.size(); ++j)
            pairs.emplace_back(signed_k[i], signed_k[j]);
    struct PairMax {
        std::optional<double> w_q0, p_q0, w_dq2;
    };
    std::vector<PairMax> pm(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t pi) {
        GridFunction g = delta2(u, dirs.step(pairs[pi].first), dirs.step(pairs[pi].second));
        scan_max(g, xim, in_q0, &pm[pi].w_q0, &pm[pi].p_q0);
        scan_max(g, xim, in_dq2, &pm[pi].w_dq2, nullptr);
    });
    for (const auto& p : pm) {
        if (p.w_q0) max_into(n.sup_d2_Q0, *p.w_q0);
        if (p.p_q0) max_into(n.lhs_d2_Q0, *p.p_q0);
        if (p.w_dq2) max_into(n.sup_d2_dQ2, *p.w_dq2);
    }

    // pure second differences (Delta_{-k} = Delta_k, positive k suffice)
    for (int k = 1; k <= d1; ++k) {
        GridFunction g = laplace_k(u, k);
        scan_max(g, xim, in_q0, &n.sup_lap_Q0, &n.lhs_lap_Q0);
        scan_max(g, xim, in_dq1, &n.sup_lap_dQ1, nullptr);
        scan_max(g, xim, in_dq1, &n.sup_lap_all_dQ1, nullptr);
    }
    if (dirs.has_extra()) {
        GridFunction g = laplace_k(u, d1 + 1);
        scan_max(g, xim, in_dq1, &n.sup_lap_all_dQ1, nullptr);
        scan_max(g, xim, in_q0, &n.sup_lap_extra_neg_Q0, &n.lhs_lap_extra_neg_Q0,
                 /*negative_part=*/true);
    }
    return n;
}

const char* to_string(EstimateKind k) {
    switch (k) {
        case EstimateKind::first_diff_extra: return "first_diff_extra";
        case EstimateKind::first_diff_interior: return "first_diff_interior";
        case EstimateKind::second_diff: return "second_diff";
        case EstimateKind::pure_second_diff: return "pure_second_diff";
    }
    return "?";
}

std::optional<EstimateKind> estimate_kind_from_string(const std::string& s) {
    for (EstimateKind k : {EstimateKind::first_diff_extra, EstimateKind::first_diff_interior,
                           EstimateKind::second_diff, EstimateKind::pure_second_diff})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

std::vector<Assumption> assumptions_for(EstimateKind kind) {
    using A = Assumption;
    switch (kind) {
        case EstimateKind::first_diff_extra:
            return {A::structure, A::sqrt_a_lipschitz, A::drift_dominated, A::f_regularity};
        case EstimateKind::first_diff_interior:
            return {A::structure, A::quasilinear_growth, A::smallness};
        case EstimateKind::second_diff:
            return {A::structure, A::sqrt_a_lipschitz, A::drift_dominated, A::second_differences,
                    A::coefficient_bounds, A::direction_structure};
        case EstimateKind::pure_second_diff:
            return {A::structure, A::sqrt_a_lipschitz, A::drift_dominated, A::second_differences,
                    A::coefficient_bounds};
    }
    return {};
}

namespace {

/// Non-terminal slots of the domain, for the sampled hypothesis probes.
std::vector<std::int32_t> interior_slots(const StencilDomain& dom) {
    std::vector<std::int32_t> out;
    for (const auto& lv : dom.levels()) {
        if (lv.key.terminal) continue;
        for (std::size_t i = 0; i < lv.pids.size(); ++i)
            out.push_back(lv.slot0 + static_cast<std::int32_t>(i));
    }
    return out;
}

/// Checks specific to the b == 0 first-difference estimate: vanishing drift
/// plus the data bounds its constant depends on.
void check_interior_preconditions(EstimateReport& rep, const GridFunction& u,
                                  const ControlProblem& pr) {
    const StencilDomain& dom = *u.domain();
    const DirectionSet& dirs = dom.dirs();
    double worst_b = 0;
    for (const auto& lv : dom.levels()) {
        if (lv.key.terminal) continue;
        for (std::int32_t pid : lv.pids) {
            auto x = dom.coords(pid);
            for (int al = 0; al < pr.num_controls(); ++al)
                for (int k = 1; k <= dirs.d1(); ++k)
                    for (int sgn : {1, -1})
                        worst_b = std::max(worst_b, std::abs(pr.b(al, sgn * k, lv.t, x)));
        }
    }
    if (worst_b > 0) {
        rep.notes.push_back("drift is not identically zero (max |b| = " + fmt_double(worst_b) +
                            "); this estimate assumes b == 0");
        rep.assumptions_met = false;
    }

    std::optional<double> sup_u;
    for (std::int32_t s = 0; s < dom.num_slots(); ++s)
        if (u.defined(s)) max_into(sup_u, std::abs(u[s]));
    const double K1 = pr.constants.K1, K3 = pr.constants.K3;
    if (sup_u && *sup_u > K1)
        rep.notes.push_back("max |u| over Qbar = " + fmt_double(*sup_u) + " exceeds K1 = " +
                            fmt_double(K1));
    std::optional<double> sup_d1;
    for (int k = 1; k <= dirs.d1(); ++k)
        for (int sgn : {1, -1}) {
            GridFunction g = delta_k(u, sgn * k);
            for (std::int32_t s = 0; s < dom.num_slots(); ++s)
                if (g.defined(s) && dom.in_dQ1(s)) max_into(sup_d1, std::abs(g.values()[s]));
        }
    if (sup_d1 && *sup_d1 > K3)
        rep.notes.push_back("max |d_k u| over dQ1 = " + fmt_double(*sup_d1) + " exceeds K3 = " +
                            fmt_double(K3));
}

/// Sampled hypotheses of the pure-second-difference estimate: a independent
/// of x, first differences of b controlled by sqrt(a), and positive lambda.
void check_pure_second_preconditions(EstimateReport& rep, const GridFunction& u,
                                     const ControlProblem& pr, const EstimateOptions& opt) {
    const StencilDomain& dom = *u.domain();
    const DirectionSet& dirs = dom.dirs();
    auto slots = interior_slots(dom);
    if (slots.empty()) return;
    Rng rng(opt.seed);
    const double K3 = pr.constants.K3;

    double worst_adiff = 0;
    std::string awitness;
    double worst_bmargin = std::numeric_limits<double>::infinity();
    std::string bwitness;
    for (int it = 0; it < opt.samples; ++it) {
        std::int32_t s = slots[uniform_int(rng, 0, static_cast<std::int64_t>(slots.size()) - 1)];
        auto [li, pid] = dom.unslot(s);
        double t = dom.levels()[li].t;
        auto x = dom.coords(pid);
        int al = static_cast<int>(uniform_int(rng, 0, pr.num_controls() - 1));
        int k = static_cast<int>(uniform_int(rng, 1, dirs.d1()));

        // a must not vary across the level
        std::int32_t pid2 = dom.levels()[li].pids[uniform_int(
            rng, 0, static_cast<std::int64_t>(dom.levels()[li].pids.size()) - 1)];
        auto x2 = dom.coords(pid2);
        double a1 = pr.a(al, k, t, x, 0.0), a2 = pr.a(al, k, t, x2, 0.0);
        double adiff = std::abs(a1 - a2) / (1 + std::max(std::abs(a1), std::abs(a2)));
        if (adiff > worst_adiff) {
            worst_adiff = adiff;
            awitness = "control " + pr.controls[al] + ", k = " + std::to_string(k) +
                       ", level " + std::to_string(li);
        }

        // |delta_i b_k| <= K3 sqrt(a_k), i running over every direction
        int i = static_cast<int>(uniform_int(rng, 1, dirs.max_index()));
        if (uniform_int(rng, 0, 1)) i = -i;
        std::int32_t nb = dom.neighbor(s, DirectionSet::slot(i));
        if (nb < 0) continue;
        auto xs = dom.coords(dom.unslot(nb).second);
        int ks = uniform_int(rng, 0, 1) ? k : -k;
        double db = (pr.b(al, ks, t, xs) - pr.b(al, ks, t, x)) / dirs.step_of(i);
        double bound = K3 * std::sqrt(std::max(a1, 0.0));
        double margin = bound - std::abs(db);
        if (margin < worst_bmargin) {
            worst_bmargin = margin;
            bwitness = "control " + pr.controls[al] + ", k = " + std::to_string(ks) +
                       ", step direction " + std::to_string(i);
        }
    }
    if (worst_adiff > 1e-12) {
        rep.notes.push_back("a varies with x (relative spread " + fmt_double(worst_adiff) +
                            " at " + awitness + "); this estimate assumes a = a(t)");
        rep.assumptions_met = false;
    }
    if (std::isfinite(worst_bmargin) && worst_bmargin < -1e-9 * (1 + K3)) {
        rep.notes.push_back("|d_i b_k| exceeds K3 sqrt(a_k) by " + fmt_double(-worst_bmargin) +
                            " (" + bwitness + ")");
        rep.assumptions_met = false;
    }
    if (!(rep.lambda > 0)) {
        rep.notes.push_back("lambda = " + fmt_double(rep.lambda) +
                            " is not positive, as this estimate requires");
        rep.assumptions_met = false;
    }
}

}  // namespace

EstimateReport estimate_ratio(EstimateKind kind, const GridFunction& u, const ControlProblem& pr,
                              const EstimateOptions& opt) {
    if (!u.domain()) throw BuildError("estimate_ratio needs a grid function bound to a domain");
    const StencilDomain& dom = *u.domain();
    const DirectionSet& dirs = dom.dirs();

    EstimateReport rep;
    rep.kind = kind;
    const Weights w = weights_of(pr, dom.time());
    rep.lambda = lambda_of(pr, dom, w);
    rep.norms = diff_norms(u, pr, opt.threads);
    const DiffNorms& n = rep.norms;
    const double grow = std::exp(pos_part(w.m) * (w.T + w.tau));

    if (opt.validate) {
        rep.assumptions_checked = true;
        auto which = assumptions_for(kind);
        ValidationReport vr =
            validate_assumptions(pr, dom, which, {opt.samples, opt.seed, opt.threads});
        rep.assumptions_met = vr.all_passed();
        if (!rep.assumptions_met) {
            std::string msg = "assumptions unmet:";
            for (const auto& c : vr.checks)
                if (c.applicable && !c.passed) msg += std::string(" ") + to_string(c.id);
            rep.notes.push_back(msg);
        }
    }

    // a bracket term whose max-set is empty contributes nothing, but the
    // report says so instead of silently writing a zero
    auto term = [&rep](const std::optional<double>& v, const char* name) -> double {
        if (v) return *v;
        rep.notes.push_back(std::string(name) + " has no admissible slot; omitted from the bracket");
        return 0.0;
    };
    auto note_lhs = [&rep](const std::optional<double>& v, const char* what) {
        if (!v)
            rep.notes.push_back(std::string("left-hand side ") + what +
                                " has no admissible slot on the initial slice");
    };

    switch (kind) {
        case EstimateKind::first_diff_extra: {
            if (!dirs.has_extra())
                throw BuildError("estimate 'first_diff_extra' needs a domain with an extra direction");
            rep.lhs = n.lhs_dextra_Q0;
            note_lhs(rep.lhs, "max |d_extra u|");
            double bracket = 1.0 + term(n.sup_u_Qbar, "max |xi- u| over Qbar") +
                             term(n.sup_d1_plus_dextra_dQ1,
                                  "max (|xi- d_k u| + |xi- d_extra u|) over dQ1");
            rep.rhs = grow * bracket;
            break;
        }
        case EstimateKind::first_diff_interior: {
            rep.lhs = n.lhs_d1_Qbar;
            if (!rep.lhs)
                rep.notes.push_back("left-hand side max |d_k u| has no admissible slot");
            rep.rhs = 1.0;  // the bound is a bare constant, uniform in T and h
            if (opt.validate) check_interior_preconditions(rep, u, pr);
            break;
        }
        case EstimateKind::second_diff: {
            rep.lhs = n.lhs_d2_Q0;
            note_lhs(rep.lhs, "max |d_j d_i u|");
            double bracket = 1.0 + term(n.sup_u_Qbar, "max |xi- u| over Qbar") +
                             term(n.sup_dtau_neg_Q, "max (xi- dtau u)^- over Q") +
                             term(n.sup_d2_dQ2, "max |xi- d_j d_i u| over dQ2") +
                             term(n.sup_d1_Qbar, "max |xi- d_k u| over Qbar");
            rep.rhs = grow * bracket;
            break;
        }
        case EstimateKind::pure_second_diff: {
            rep.lhs = n.lhs_lap_Q0;
            note_lhs(rep.lhs, "max |D_k u|");
            double bracket = 1.0 + term(n.sup_u_Qbar, "max |xi- u| over Qbar") +
                             term(n.sup_dtau_neg_Q, "max (xi- dtau u)^- over Q") +
                             term(n.sup_lap_dQ1, "max |xi- D_k u| over dQ1") +
                             term(n.sup_d1_Qbar, "max |xi- d_k u| over Qbar");
            rep.rhs = grow * bracket;
            if (dirs.has_extra()) {
                // companion one-sided bound along the extra direction; its
                // bracket runs over all d1+1 directions
                rep.lhs2 = n.lhs_lap_extra_neg_Q0;
                note_lhs(rep.lhs2, "max (D_extra u)^-");
                const auto xim = xi_minus_by_slot(dom, w);
                std::optional<double> d1all = n.sup_d1_Qbar;
                for (int sgn : {1, -1}) {
                    GridFunction g = delta_k(u, sgn * (dirs.d1() + 1));
                    for (std::int32_t s = 0; s < dom.num_slots(); ++s)
                        if (g.defined(s)) max_into(d1all, xim[s] * std::abs(g.values()[s]));
                }
                double bracket2 = 1.0 + term(n.sup_u_Qbar, "max |xi- u| over Qbar") +
                                  term(n.sup_dtau_neg_Q, "max (xi- dtau u)^- over Q") +
                                  term(n.sup_lap_all_dQ1, "max |xi- D_i u| over dQ1, all i") +
                                  term(d1all, "max |xi- d_i u| over Qbar, all i");
                rep.rhs2 = grow * bracket2;
            }
            if (opt.validate) check_pure_second_preconditions(rep, u, pr, opt);
            break;
        }
    }

    if (rep.lhs && rep.rhs && *rep.rhs > 0) rep.ratio = *rep.lhs / *rep.rhs;
    if (rep.lhs2 && rep.rhs2 && *rep.rhs2 > 0) rep.ratio2 = *rep.lhs2 / *rep.rhs2;
    return rep;
}

// ---- studies -----------------------------------------------------------------

std::optional<double> fit_rate(const std::vector<double>& h, const std::vector<double>& err,
                               double floor) {
    if (h.size() != err.size()) throw BuildError("fit_rate needs one error per step size");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (!(h[i] > 0)) throw BuildError("fit_rate: step sizes must be positive");
        if (!(err[i] > floor)) continue;  // exact to roundoff, no information
        lx.push_back(std::log(h[i]));
        ly.push_back(std::log(err[i]));
    }
    if (lx.size() < 2) return std::nullopt;
    double sn = static_cast<double>(lx.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    double denom = sn * sxx - sx * sx;
    if (denom == 0) return std::nullopt;  // a single repeated h
    return (sn * sxy - sx * sy) / denom;
}

namespace {

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : "nan"; }

}  // namespace

void write_rate_csv(const StudyResult& r, std::ostream& out) {
    out << "h,error,lhs,rhs,ratio\n";
    for (const auto& row : r.rows)
        out << fmt_double(row.h) << ',' << fmt_opt(row.error) << ',' << fmt_opt(row.lhs) << ','
            << fmt_opt(row.rhs) << ',' << fmt_opt(row.ratio) << '\n';
}

StudyResult read_rate_csv(std::istream& in) {
    StudyResult r;
    std::string line;
    int rowno = 0;
    std::vector<double> hs, errs;
    while (std::getline(in, line)) {
        ++rowno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (std::isalpha(static_cast<unsigned char>(line[0]))) continue;  // header
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() != 5)
            throw BuildError("rate csv: row " + std::to_string(rowno) + " has " +
                             std::to_string(cells.size()) + " columns, expected 5");
        auto num = [&](const std::string& c) -> double {
            char* end = nullptr;
            double v = std::strtod(c.c_str(), &end);
            if (end != c.c_str() + c.size() || c.empty())
                throw BuildError("rate csv: row " + std::to_string(rowno) + ": '" + c +
                                 "' is not a number");
            return v;
        };
        auto opt = [&](const std::string& c) -> std::optional<double> {
            double v = num(c);
            if (std::isnan(v)) return std::nullopt;
            return v;
        };
        StudyRow row;
        row.h = num(cells[0]);
        row.error = opt(cells[1]);
        row.lhs = opt(cells[2]);
        row.rhs = opt(cells[3]);
        row.ratio = opt(cells[4]);
        if (row.error && row.h > 0 && std::isfinite(row.h)) {
            hs.push_back(row.h);
            errs.push_back(*row.error);
        }
        r.rows.push_back(row);
    }
    r.fitted_rate = fit_rate(hs, errs);
    return r;
}

}  // namespace bgrid
