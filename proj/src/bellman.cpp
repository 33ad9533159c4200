#include "bgrid/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bgrid {

double eval_bracket(const ControlProblem& pr, int alpha, double phi, std::span<const double> q,
                    std::span<const double> p, double psi, double t, std::span<const double> x) {
    Coeffs co = eval_coeffs(pr, alpha, t, x, psi);
    double s = co.r * phi - co.c * psi + pr.f(alpha, p, psi, t, x);
    for (int sl = 0; sl < 2 * pr.d1; ++sl) s += co.a[sl] * q[sl] + co.b[sl] * p[sl];
    return s;
}

double eval_F(const ControlProblem& pr, double phi, std::span<const double> q,
              std::span<const double> p, double psi, double t, std::span<const double> x,
              int* argmax) {
    double best = -std::numeric_limits<double>::infinity();
    int best_al = 0;
    for (int al = 0; al < pr.num_controls(); ++al) {
        double v = eval_bracket(pr, al, phi, q, p, psi, t, x);
        if (v > best) {
            best = v;
            best_al = al;
        }
    }
    if (argmax) *argmax = best_al;
    return best;
}

double scheme_residual(const ControlProblem& pr, const GridFunction& u, std::int32_t slot,
                       int* argmax) {
    const auto& dom = *u.domain();
    auto [li, pid] = dom.unslot(slot);
    const auto& lv = dom.levels()[li];
    if (lv.key.terminal) throw OutsideSupport("scheme residual requested on the terminal slice");

    const double psi = u[slot];
    std::int32_t fwd = dom.successor(slot);
    if (fwd < 0) throw OutsideSupport("scheme residual: no forward-in-time value");
    const double phi = (u[fwd] - psi) / dom.time().tau;

    const int n = 2 * pr.d1;
    std::vector<double> p(n), q(n);
    for (int sl = 0; sl < n; ++sl) {
        int k = DirectionSet::unslot(sl);
        std::int32_t plus = dom.neighbor(slot, sl);
        std::int32_t minus = dom.neighbor(slot, DirectionSet::slot(-k));
        if (plus < 0 || minus < 0)
            throw OutsideSupport("scheme residual: stencil leaves the domain at direction " +
                                 std::to_string(k));
        double h = dom.dirs().step_of(k);
        p[sl] = (u[plus] - psi) / h;
        q[sl] = (u[plus] - 2 * psi + u[minus]) / (h * h);
    }
    auto x = dom.coords(pid);
    return eval_F(pr, phi, q, p, psi, lv.t, x, argmax);
}

StencilWeights stencil_weights(const ControlProblem& pr, const DirectionSet& dirs, int alpha,
                               double t, std::span<const double> x, double psi) {
    if (dirs.d1() != pr.d1 || dirs.dim() != pr.dim)
        throw BuildError("stencil_weights: direction set does not match problem '" + pr.name +
                         "'");
    Coeffs co = eval_coeffs(pr, alpha, t, x, psi);

    StencilWeights w;
    w.offsets.push_back(Point(dirs.dim(), 0));
    w.weights.push_back(0.0);
    auto at = [&](const Point& off) -> double& {
        for (std::size_t i = 0; i < w.offsets.size(); ++i)
            if (w.offsets[i] == off) return w.weights[i];
        w.offsets.push_back(off);
        w.weights.push_back(0.0);
        return w.weights.back();
    };

    const double h = dirs.h();
    for (int sl = 0; sl < 2 * pr.d1; ++sl) {
        int k = DirectionSet::unslot(sl);
        const Point& off = dirs.offset(k);
        const Point& moff = dirs.offset(-k);
        // one signed term a_k Delta_k + b_k delta_k; the sum runs over both
        // signs of k, so the mirrored a_{-k} lands on the same offsets again
        at(off) += co.a[sl] / (h * h) + co.b[sl] / h;
        at(moff) += co.a[sl] / (h * h);
        w.weights[0] += -2 * co.a[sl] / (h * h) - co.b[sl] / h;
    }
    return w;
}

MaxPrincipleCheck check_max_principle(const StencilWeights& w) {
    MaxPrincipleCheck ck;
    double wmax = 0;
    for (double v : w.weights) wmax = std::max(wmax, std::abs(v));
    ck.tol = 1e-12 * (1 + wmax);

    ck.worst_off_center = std::numeric_limits<double>::infinity();
    double sum = 0;
    for (std::size_t i = 0; i < w.weights.size(); ++i) {
        sum += w.weights[i];
        if (i == 0) continue;
        if (w.weights[i] < ck.worst_off_center) ck.worst_off_center = w.weights[i];
        if (w.weights[i] < -ck.tol && !ck.witness_offset) {
            ck.passed = false;
            ck.witness_offset = w.offsets[i];
            ck.reason = "negative off-center weight " + std::to_string(w.weights[i]);
        }
    }
    if (w.weights.size() == 1) ck.worst_off_center = 0;
    ck.row_sum = sum;
    if (std::abs(sum) > ck.tol && ck.passed) {
        ck.passed = false;
        ck.reason = "row sum " + std::to_string(sum) + " is not zero";
    }
    return ck;
}

}  // namespace bgrid
