#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bgrid/lattice.hpp"
#include "bgrid/util.hpp"

namespace bgrid {

/// Structural constants of a problem. All bounds that the validators check
/// are phrased in terms of these.
struct Constants {
    double T = 1;           // horizon
    double h0 = 1;          // calibration step: monotone stencils for h <= h0
    double delta = 1;       // nondegeneracy floor, in (0, 1]
    double K0 = 1, K1 = 1, K2 = 1, K3 = 1;
    double m = 0;           // exponential weight rate (any sign)
    double omega = 0;       // quasilinear modulus
    double Cstruct = 4;     // structural constant, >= 4
};

/// How f depends on its (p, psi) arguments; drives the solver's outer loop.
enum class FMode {
    independent,  // f = f(t, x)
    linear,       // f affine in (p, psi); still resolved by freezing
    quasilinear,  // general dependence
};

/// Coefficients of one control at one (t, x): the operator is
///   r d_tau u + sum_k [a_k Delta_k u + b_k delta_k u] - c u + f(delta u, u, t, x),
/// k running over the signed directions. a is symmetric in k by construction.
struct Coeffs {
    double r = 0;
    double c = 0;
    std::vector<double> a;  // by DirectionSet::slot, size 2*d1
    std::vector<double> b;  // by DirectionSet::slot, size 2*d1
};

/// A finite-control-set Bellman problem. Evaluators are plain callables so
/// catalog entries, tabulated files, and test fixtures share one shape.
/// k-symmetry of a is built in: only k = 1..d1 is ever asked of `a`.
struct ControlProblem {
    std::string name;
    int dim = 1;
    int d1 = 1;
    std::vector<std::string> controls;
    Constants constants;
    FMode f_mode = FMode::independent;
    bool a_depends_on_psi = false;

    /// r(alpha, t) >= 0.
    std::function<double(int, double)> r;
    /// a(alpha, k, t, x, psi) for k = 1..d1; psi is ignored unless
    /// a_depends_on_psi.
    std::function<double(int, int, double, std::span<const double>, double)> a;
    /// b(alpha, k, t, x) for signed k.
    std::function<double(int, int, double, std::span<const double>)> b;
    std::function<double(int, double, std::span<const double>)> c;
    /// f(alpha, p, psi, t, x); p has 2*d1 slots ordered by DirectionSet::slot.
    std::function<double(int, std::span<const double>, double, double, std::span<const double>)> f;

    int num_controls() const { return static_cast<int>(controls.size()); }
};

/// Evaluate every coefficient of one control at one space-time point.
/// psi feeds the quasilinear a; pass 0 when a is state-independent.
Coeffs eval_coeffs(const ControlProblem& pr, int alpha, double t, std::span<const double> x,
                   double psi = 0.0);

// ---- assumption validation --------------------------------------------------

enum class Assumption {
    structure,           // mirrored directions, r >= 0, a >= 0, |ell_k| <= K0,
                         // b and c Lipschitz with constants K0 / K3
    sqrt_a_lipschitz,    // |delta_{eta,l} a| <= K0 (sqrt(a) + eta)
    drift_dominated,     // a_k >= h0 * b_k^-
    f_regularity,        // |D_p f| <= K0 sqrt(a), |D_psi f| <= K0, |D_x f| <= K3
    quasilinear_growth,  // state-dependent a/f growth and lower bounds
    smallness,           // Cstruct * K1 (1 + K1) * omega <= delta
    second_differences,  // f free of (p, psi); second differences of b, c, f
                         // bounded by K3; of a by K0 + K3 sqrt(a)
    coefficient_bounds,  // delta <= sup_alpha a_k <= K0; r,|b|,|c|,|f| <= K3
    direction_structure, // long directions split as l1 + l2, l1 != +-l2, over
                         // the short ones
};

const char* to_string(Assumption a);
std::optional<Assumption> assumption_from_string(const std::string& s);
std::vector<Assumption> all_assumptions();

struct AssumptionCheck {
    Assumption id;
    bool applicable = true;
    bool passed = true;
    bool sampled = false;      // statistical evidence, not a proof
    double margin = 0;         // min over samples of (bound - quantity)
    std::string witness;       // where/how the worst sample sat
};

struct ValidationReport {
    std::vector<AssumptionCheck> checks;
    bool all_passed() const;
    const AssumptionCheck* find(Assumption a) const;
};

/// Sample-based validation of the requested assumptions over the domain's
/// points, controls, and steps eta in {h, h/4, h/16}. Deterministic in
/// (seed, samples); thread count never changes the result.
struct ValidateOptions {
    int samples = 256;
    std::uint64_t seed = 1;
    int threads = 1;
};

ValidationReport validate_assumptions(const ControlProblem& pr, const StencilDomain& dom,
                                      std::span<const Assumption> which,
                                      const ValidateOptions& opt = {});

}  // namespace bgrid
