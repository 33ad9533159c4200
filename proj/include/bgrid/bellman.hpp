#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bgrid/calculus.hpp"
#include "bgrid/problem.hpp"

namespace bgrid {

/// One control's bracket
///   r phi + sum_k (a_k q_k + b_k p_k) - c psi + f(p, psi, t, x)
/// at (t, x); q and p have 2*d1 slots ordered by DirectionSet::slot.
double eval_bracket(const ControlProblem& pr, int alpha, double phi, std::span<const double> q,
                    std::span<const double> p, double psi, double t, std::span<const double> x);

/// The Bellman operator: max over controls of the bracket. Ties keep the
/// lowest control index; `argmax` receives it when non-null.
double eval_F(const ControlProblem& pr, double phi, std::span<const double> q,
              std::span<const double> p, double psi, double t, std::span<const double> x,
              int* argmax = nullptr);

/// Residual of the discrete equation at one slot of u's domain: eval_F fed
/// with the time quotient, the second and first differences of u at that
/// point, and u itself. Errors when the stencil lacks support.
double scheme_residual(const ControlProblem& pr, const GridFunction& u, std::int32_t slot,
                       int* argmax = nullptr);

/// The spatial one-step stencil of sum_k (a_k Delta_k + b_k delta_k) for one
/// control at one point: weight per canonical offset (center included).
/// This is the operator whose sign structure the maximum principle needs;
/// the zeroth-order -c term is deliberately excluded.
struct StencilWeights {
    std::vector<Point> offsets;   // offsets[0] is the center (zero vector)
    std::vector<double> weights;  // same order
    double center() const { return weights[0]; }
};

StencilWeights stencil_weights(const ControlProblem& pr, const DirectionSet& dirs, int alpha,
                               double t, std::span<const double> x, double psi = 0.0);

/// A stencil respects the maximum principle when every off-center weight is
/// nonnegative and the row sums to zero, both up to
/// tol = 1e-12 * (1 + max |weight|). On failure the witness names the first
/// offending offset.
struct MaxPrincipleCheck {
    bool passed = true;
    double tol = 0;
    double worst_off_center = 0;  // most negative off-center weight seen
    double row_sum = 0;
    std::optional<Point> witness_offset;
    std::string reason;
};

MaxPrincipleCheck check_max_principle(const StencilWeights& w);

}  // namespace bgrid
