#include "bgrid/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "bgrid/estimates.hpp"

namespace bgrid {

namespace {

/// Value of u at `s`, falling back to the forward-in-time value when the slot
/// has not been assigned yet (the warm start of a fresh level).
double val(const StencilDomain& dom, const GridFunction& u, std::int32_t s) {
    return u.defined(s) ? u[s] : u[dom.successor(s)];
}

/// Write the warm start into u so sweeps can read every unknown directly.
void warm_start(const StencilDomain& dom, GridFunction& u, const std::vector<std::int32_t>& slots) {
    for (std::int32_t s : slots)
        if (!u.defined(s)) u.set(s) = u[dom.successor(s)];
}

/// Equation system of one level under a fixed policy, in the form
///   diag_i u_i - sum_j w_ij u_j = rhs_i
/// with j running over same-level unknowns; known neighbours and the forward
/// value are folded into rhs.
struct Assembled {
    std::vector<double> diag, rhs;
    std::vector<std::vector<std::pair<std::int32_t, double>>> nbr;  // (local j, w_ij)
    bool monotone = true;
};

struct FrozenView {
    const ControlProblem* pr = nullptr;
    const StencilDomain* dom = nullptr;
    const LevelState* st = nullptr;
    double t = 0;

    std::span<const double> p_at(std::size_t i) const {
        auto n = static_cast<std::size_t>(2 * pr->d1);
        return {st->frozen_p.data() + i * n, n};
    }
    double psi_at(std::size_t i) const { return st->frozen_psi[i]; }
};

/// Bracket of one control with live differences of u but frozen f-arguments
/// (and frozen psi inside a state-dependent a).
double frozen_bracket(const FrozenView& fv, const GridFunction& u, std::size_t i, int alpha) {
    const auto& dom = *fv.dom;
    const auto& pr = *fv.pr;
    std::int32_t s = fv.st->slots[i];
    double psi = val(dom, u, s);
    double phi = (u[dom.successor(s)] - psi) / dom.time().tau;
    auto [li, pid] = dom.unslot(s);
    auto x = dom.coords(pid);
    Coeffs co = eval_coeffs(pr, alpha, fv.t, x, fv.psi_at(i));
    double sum = co.r * phi - co.c * psi + pr.f(alpha, fv.p_at(i), fv.psi_at(i), fv.t, x);
    for (int sl = 0; sl < 2 * pr.d1; ++sl) {
        int k = DirectionSet::unslot(sl);
        double h = dom.dirs().step_of(k);
        double up = val(dom, u, dom.neighbor(s, sl));
        double um = val(dom, u, dom.neighbor(s, DirectionSet::slot(-k)));
        sum += co.a[sl] * (up - 2 * psi + um) / (h * h) + co.b[sl] * (up - psi) / h;
    }
    return sum;
}

double frozen_residual(const FrozenView& fv, const GridFunction& u, std::size_t i,
                       int* argmax = nullptr) {
    double best = -std::numeric_limits<double>::infinity();
    int best_al = 0;
    for (int al = 0; al < fv.pr->num_controls(); ++al) {
        double v = frozen_bracket(fv, u, i, al);
        if (v > best) {
            best = v;
            best_al = al;
        }
    }
    if (argmax) *argmax = best_al;
    return best;
}

Assembled assemble(const FrozenView& fv, const GridFunction& u) {
    const auto& dom = *fv.dom;
    const auto& pr = *fv.pr;
    const auto& st = *fv.st;
    const double tau = dom.time().tau;
    const std::size_t n = st.slots.size();

    std::unordered_map<std::int32_t, std::int32_t> local;
    local.reserve(n);
    for (std::size_t i = 0; i < n; ++i) local[st.slots[i]] = static_cast<std::int32_t>(i);

    Assembled out;
    out.diag.resize(n);
    out.rhs.resize(n);
    out.nbr.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::int32_t s = st.slots[i];
        auto [li, pid] = dom.unslot(s);
        auto x = dom.coords(pid);
        Coeffs co = eval_coeffs(pr, st.alpha[i], fv.t, x, fv.psi_at(i));
        double diag = co.r / tau + co.c;
        double rhs =
            co.r / tau * u[dom.successor(s)] + pr.f(st.alpha[i], fv.p_at(i), fv.psi_at(i), fv.t, x);

        // accumulate the spatial weights against actual neighbour slots
        std::vector<std::pair<std::int32_t, double>> w;  // (slot, weight)
        auto add = [&](std::int32_t nb, double v) {
            for (auto& e : w)
                if (e.first == nb) {
                    e.second += v;
                    return;
                }
            w.emplace_back(nb, v);
        };
        const double h = dom.dirs().h();
        for (int sl = 0; sl < 2 * pr.d1; ++sl) {
            int k = DirectionSet::unslot(sl);
            std::int32_t plus = dom.neighbor(s, sl);
            std::int32_t minus = dom.neighbor(s, DirectionSet::slot(-k));
            add(plus, co.a[sl] / (h * h) + co.b[sl] / h);
            add(minus, co.a[sl] / (h * h));
            diag += 2 * co.a[sl] / (h * h) + co.b[sl] / h;
        }
        double wmax = std::abs(diag);
        for (const auto& [nb, v] : w) wmax = std::max(wmax, std::abs(v));
        const double wtol = 1e-12 * (1 + wmax);
        for (const auto& [nb, v] : w) {
            if (nb == s) {  // a zero direction folds onto the center
                diag -= v;
                continue;
            }
            if (v < -wtol) out.monotone = false;
            auto it = local.find(nb);
            if (it != local.end())
                out.nbr[i].emplace_back(it->second, v);
            else
                rhs += v * u[nb];
        }
        if (diag <= wtol)
            throw SolveError("level " + std::to_string(st.level) +
                             ": nonpositive diagonal in the policy system (r/tau + c + sum w = " +
                             std::to_string(diag) + ")");
        out.diag[i] = diag;
        out.rhs[i] = rhs;
    }
    return out;
}

/// Gauss-Seidel sweeps until the largest pre-update row residual (the update
/// scaled by the row diagonal, so it is commensurate with the scheme
/// residual) falls below tol; returns the number of sweeps spent.
std::int64_t gauss_seidel(const Assembled& sys, const LevelState& st, GridFunction& u, double tol,
                          std::int64_t budget) {
    std::int64_t sweeps = 0;
    const std::size_t n = st.slots.size();
    while (sweeps < budget) {
        ++sweeps;
        double biggest = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = sys.rhs[i];
            for (const auto& [j, wj] : sys.nbr[i]) acc += wj * u[st.slots[j]];
            double next = acc / sys.diag[i];
            biggest = std::max(biggest, sys.diag[i] * std::abs(next - u[st.slots[i]]));
            u.set(st.slots[i]) = next;
        }
        if (biggest <= tol) break;
    }
    return sweeps;
}

/// Dense LU with partial pivoting for the same system; exact up to rounding,
/// used by tests and small problems.
void direct_solve(const Assembled& sys, const LevelState& st, GridFunction& u) {
    const std::size_t n = st.slots.size();
    if (n > 4000)
        throw SolveError("direct inner solver is limited to 4000 unknowns per level, got " +
                         std::to_string(n));
    std::vector<double> A(n * n, 0.0), b = sys.rhs;
    for (std::size_t i = 0; i < n; ++i) {
        A[i * n + i] = sys.diag[i];
        for (const auto& [j, wj] : sys.nbr[i]) A[i * n + j] -= wj;
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[perm[r] * n + col]) > std::abs(A[perm[piv] * n + col])) piv = r;
        std::swap(perm[col], perm[piv]);
        double d = A[perm[col] * n + col];
        if (std::abs(d) < 1e-300)
            throw SolveError("singular policy system at level " + std::to_string(st.level));
        for (std::size_t r = col + 1; r < n; ++r) {
            double m = A[perm[r] * n + col] / d;
            if (m == 0) continue;
            A[perm[r] * n + col] = m;
            for (std::size_t c = col + 1; c < n; ++c) A[perm[r] * n + c] -= m * A[perm[col] * n + c];
        }
    }
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        double acc = b[perm[r]];
        for (std::size_t c = 0; c < r; ++c) acc -= A[perm[r] * n + c] * y[c];
        y[r] = acc;
    }
    std::vector<double> xs(n);
    for (std::size_t r = n; r-- > 0;) {
        double acc = y[r];
        for (std::size_t c = r + 1; c < n; ++c) acc -= A[perm[r] * n + c] * xs[c];
        xs[r] = acc / A[perm[r] * n + r];
    }
    for (std::size_t i = 0; i < n; ++i) u.set(st.slots[i]) = xs[i];
}

void refresh_frozen(const ControlProblem& pr, const StencilDomain& dom, const GridFunction& u,
                    LevelState& st) {
    const int n = 2 * pr.d1;
    st.frozen_p.assign(st.slots.size() * n, 0.0);
    st.frozen_psi.assign(st.slots.size(), 0.0);
    for (std::size_t i = 0; i < st.slots.size(); ++i) {
        std::int32_t s = st.slots[i];
        double psi = val(dom, u, s);
        st.frozen_psi[i] = psi;
        for (int sl = 0; sl < n; ++sl) {
            int k = DirectionSet::unslot(sl);
            double h = dom.dirs().step_of(k);
            st.frozen_p[i * n + sl] = (val(dom, u, dom.neighbor(s, sl)) - psi) / h;
        }
    }
}

double live_residual(const ControlProblem& pr, const GridFunction& u,
                     const std::vector<std::int32_t>& slots, int threads) {
    if (slots.empty()) return 0;
    std::vector<double> res(slots.size());
    parallel_for(slots.size(), threads,
                 [&](std::size_t i) { res[i] = std::abs(scheme_residual(pr, u, slots[i])); });
    double m = 0;
    for (double v : res) m = std::max(m, v);
    return m;
}

struct LevelOutcome {
    LevelReport report;
    bool monotone = true;
    bool converged = true;
    std::string message;
};

LevelOutcome solve_level(const ControlProblem& pr, const StencilDomain& dom, GridFunction& u,
                         int level, const SolveConfig& cfg) {
    LevelOutcome out;
    out.report.level = level;
    LevelState st = make_level_state(pr, dom, u, level);
    if (st.slots.empty()) return out;
    warm_start(dom, u, st.slots);

    const bool needs_picard = pr.f_mode != FMode::independent || pr.a_depends_on_psi;
    const int picard_rounds = needs_picard ? cfg.max_picard : 1;
    FrozenView fv{&pr, &dom, &st, dom.levels()[level].t};
    std::int64_t budget = cfg.max_inner_sweeps;

    for (int pic = 0; pic < picard_rounds; ++pic) {
        ++out.report.picard_iterations;
        refresh_frozen(pr, dom, u, st);

        if (cfg.outer == OuterMethod::value_iteration) {
            // normalized residual ascent; the damping keeps the update inside
            // the contraction regime of a monotone stencil
            while (budget > 0) {
                --budget;
                ++out.report.inner_sweeps;
                double worst = 0;
                for (std::size_t i = 0; i < st.slots.size(); ++i) {
                    int am = 0;
                    double res = frozen_residual(fv, u, i, &am);
                    st.alpha[i] = am;
                    auto [li, pid] = dom.unslot(st.slots[i]);
                    auto x = dom.coords(pid);
                    double dmax = 0;
                    for (int al = 0; al < pr.num_controls(); ++al) {
                        Coeffs co = eval_coeffs(pr, al, fv.t, x, fv.psi_at(i));
                        double d = co.r / dom.time().tau + co.c;
                        const double h = dom.dirs().h();
                        for (int sl = 0; sl < 2 * pr.d1; ++sl)
                            d += 2 * co.a[sl] / (h * h) + std::abs(co.b[sl]) / h;
                        dmax = std::max(dmax, d);
                    }
                    if (dmax <= 0)
                        throw SolveError("value iteration: vanishing normalization at level " +
                                         std::to_string(level));
                    u.set(st.slots[i]) += cfg.damping * res / dmax;
                    worst = std::max(worst, std::abs(res));
                }
                st.residual = worst;
                if (worst <= cfg.tol) break;
            }
            ++out.report.outer_iterations;
        } else {
            for (int outer = 0; outer < cfg.max_outer; ++outer) {
                ++out.report.outer_iterations;
                bool changed = false;
                for (std::size_t i = 0; i < st.slots.size(); ++i) {
                    int am = 0;
                    frozen_residual(fv, u, i, &am);
                    if (am != st.alpha[i]) changed = true;
                    st.alpha[i] = am;
                }
                Assembled sys = assemble(fv, u);
                out.monotone = out.monotone && sys.monotone;
                if (cfg.inner == InnerSolve::direct) {
                    direct_solve(sys, st, u);
                } else {
                    double unorm = 1.0;
                    for (std::int32_t s : st.slots) unorm = std::max(unorm, std::abs(u[s]));
                    std::int64_t used =
                        gauss_seidel(sys, st, u, cfg.inner_tol_factor * cfg.tol * unorm, budget);
                    budget -= used;
                    out.report.inner_sweeps += used;
                }
                double worst = 0;
                for (std::size_t i = 0; i < st.slots.size(); ++i)
                    worst = std::max(worst, std::abs(frozen_residual(fv, u, i)));
                st.residual = worst;
                if (worst <= cfg.tol && !changed) break;
                if (budget <= 0 && cfg.inner == InnerSolve::gauss_seidel) break;
            }
        }

        // the frozen arguments converge exactly when the true equation does
        double live = live_residual(pr, u, st.slots, cfg.threads);
        out.report.residual = live;
        if (live <= cfg.tol) return out;
        if (budget <= 0 && cfg.inner == InnerSolve::gauss_seidel &&
            cfg.outer != OuterMethod::value_iteration) {
            out.converged = false;
            out.message = "inner sweep budget exhausted at level " + std::to_string(level);
            return out;
        }
    }
    out.converged = out.report.residual <= cfg.tol;
    if (!out.converged)
        out.message = "level " + std::to_string(level) + " stalled at residual " +
                      std::to_string(out.report.residual);
    return out;
}

SolveReport run_backward(const ControlProblem& pr, std::shared_ptr<const StencilDomain> dom,
                         const GridFunction& data, const SolveConfig& cfg, bool fill_terminal) {
    if (pr.dim != dom->dirs().dim() || pr.d1 != dom->dirs().d1())
        throw BuildError("problem '" + pr.name + "' does not match the domain's directions");
    if (data.domain() != dom) throw BuildError("data lives on a different domain");

    SolveReport rep;
    rep.u = GridFunction(dom);
    for (std::int32_t s = 0; s < dom->num_slots(); ++s) {
        if (!dom->in_dQ1(s)) continue;
        if (data.defined(s)) {
            rep.u.set(s) = data[s];
        } else if (fill_terminal && dom->is_terminal(s)) {
            rep.u.set(s) = 0.0;  // inert when r = 0: nothing propagates from it
        } else {
            auto [li, pid] = dom->unslot(s);
            const auto& lv = dom->levels()[li];
            std::string where = lv.key.terminal ? "terminal slice" : "level " + std::to_string(li);
            throw BuildError("missing boundary data at " + where +
                             ", point pid=" + std::to_string(pid));
        }
    }
    rep.lambda = lambda_of(pr, *dom, weights_of(pr, dom->time()));

    rep.converged = true;
    int top = dom->has_terminal_level() ? dom->terminal_level() - 1
                                        : static_cast<int>(dom->levels().size()) - 1;
    for (int li = top; li >= 0; --li) {
        LevelOutcome lo = solve_level(pr, *dom, rep.u, li, cfg);
        rep.monotone = rep.monotone && lo.monotone;
        if (!lo.converged) {
            rep.converged = false;
            if (!rep.message.empty()) rep.message += "; ";
            rep.message += lo.message;
        }
        rep.levels.push_back(lo.report);
    }

    // final audit straight from the nonlinear operator
    rep.control.assign(dom->num_slots(), -1);
    rep.max_residual = 0;
    for (std::int32_t s = 0; s < dom->num_slots(); ++s) {
        if (!dom->in_Qo1(s)) continue;
        int am = -1;
        rep.max_residual = std::max(rep.max_residual, std::abs(scheme_residual(pr, rep.u, s, &am)));
        rep.control[s] = am;
    }
    if (rep.max_residual > cfg.tol && rep.converged) {
        rep.converged = false;
        rep.message = "final residual " + std::to_string(rep.max_residual) + " above tol";
    }
    return rep;
}

}  // namespace

LevelState make_level_state(const ControlProblem& pr, const StencilDomain& dom,
                            const GridFunction& u, int level) {
    LevelState st;
    st.level = level;
    const auto& lv = dom.levels()[level];
    if (lv.key.terminal) throw BuildError("cannot build a level state on the terminal slice");
    for (std::int32_t pid : lv.pids) {
        std::int32_t s = dom.slot(level, pid);
        if (dom.in_Qo1(s)) st.slots.push_back(s);
    }
    std::sort(st.slots.begin(), st.slots.end());
    st.alpha.assign(st.slots.size(), 0);
    refresh_frozen(pr, dom, u, st);
    FrozenView fv{&pr, &dom, &st, lv.t};
    double worst = 0;
    for (std::size_t i = 0; i < st.slots.size(); ++i) {
        int am = 0;
        worst = std::max(worst, std::abs(frozen_residual(fv, u, i, &am)));
        st.alpha[i] = am;
    }
    st.residual = worst;
    return st;
}

LevelState policy_iteration_step(const ControlProblem& pr, const StencilDomain& dom,
                                 GridFunction& u, LevelState state, const SolveConfig& cfg) {
    if (state.slots.empty()) return state;
    warm_start(dom, u, state.slots);
    FrozenView fv{&pr, &dom, &state, dom.levels()[state.level].t};
    for (std::size_t i = 0; i < state.slots.size(); ++i) {
        int am = 0;
        frozen_residual(fv, u, i, &am);
        state.alpha[i] = am;
    }
    Assembled sys = assemble(fv, u);
    if (cfg.inner == InnerSolve::direct) {
        direct_solve(sys, state, u);
    } else {
        double unorm = 1.0;
        for (std::int32_t s : state.slots) unorm = std::max(unorm, std::abs(u[s]));
        gauss_seidel(sys, state, u, cfg.inner_tol_factor * cfg.tol * unorm, cfg.max_inner_sweeps);
    }
    double worst = 0;
    for (std::size_t i = 0; i < state.slots.size(); ++i)
        worst = std::max(worst, std::abs(frozen_residual(fv, u, i)));
    state.residual = worst;
    return state;
}

SolveReport solve_parabolic(const ControlProblem& pr, std::shared_ptr<const StencilDomain> dom,
                            const GridFunction& data, const SolveConfig& cfg) {
    return run_backward(pr, std::move(dom), data, cfg, false);
}

SolveReport solve_elliptic(const ControlProblem& pr, std::shared_ptr<const StencilDomain> dom,
                           const GridFunction& data, const SolveConfig& cfg) {
    if (dom->time().num_levels != 1)
        throw BuildError("stationary solves need a single-level domain (see elliptic_domain)");
    for (int al = 0; al < pr.num_controls(); ++al)
        if (pr.r(al, 0.0) != 0.0)
            throw BuildError("stationary solves need r = 0; control " + std::to_string(al) +
                             " has r = " + std::to_string(pr.r(al, 0.0)));
    return run_backward(pr, std::move(dom), data, cfg, true);
}

std::shared_ptr<const StencilDomain> elliptic_domain(DirectionSet dirs, const DomainSpec& spec) {
    return StencilDomain::build(std::move(dirs), TimeGrid::make(1.0, 1.0), spec);
}

}  // namespace bgrid
