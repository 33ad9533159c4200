#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bgrid/lattice.hpp"

namespace bgrid {

/// A real-valued function on (part of) the slots of a StencilDomain. Slots
/// outside the defined mask are hard errors to read, never silently zero.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(std::shared_ptr<const StencilDomain> dom);

    const std::shared_ptr<const StencilDomain>& domain() const { return dom_; }

    bool defined(std::int32_t slot) const { return mask_[slot] != 0; }
    double operator[](std::int32_t slot) const;  // throws OutsideSupport
    double& set(std::int32_t slot);              // marks the slot defined
    void unset(std::int32_t slot) { mask_[slot] = 0; }

    double at(TimeKey tk, const Point& p) const;
    void set(TimeKey tk, const Point& p, double v);

    /// Direct access for hot loops; value(s) is meaningful only when
    /// defined(s).
    const std::vector<double>& values() const { return vals_; }
    std::size_t num_defined() const;

    /// Fill every slot of the domain from a closure of (t, physical x).
    static GridFunction sample(std::shared_ptr<const StencilDomain> dom,
                               const std::function<double(double, std::span<const double>)>& f);

private:
    std::shared_ptr<const StencilDomain> dom_;
    std::vector<double> vals_;
    std::vector<std::uint8_t> mask_;
};

// ---- lattice difference operators -----------------------------------------
//
// Each operator returns a function on the same domain, defined exactly where
// every value it needs is defined; nothing is extrapolated. `step.step` is
// the divisor, `step.offset` the canonical displacement.

/// Forward difference quotient: (u(x + s) - u(x)) / step.
GridFunction delta(const GridFunction& u, const LatticeStep& step);
/// Shift: u(x + s).
GridFunction shift(const GridFunction& u, const LatticeStep& step);
/// Second difference: (u(x+s) - 2u(x) + u(x-s)) / step^2.
GridFunction laplace_dir(const GridFunction& u, const LatticeStep& step);
/// Mixed second difference delta_{s2} delta_{s1} u.
GridFunction delta2(const GridFunction& u, const LatticeStep& s1, const LatticeStep& s2);
/// Forward time quotient with horizon cut-off: (u(t + tau_T(t), x) - u(t, x)) / tau.
/// The divisor stays tau even on the final shortened step. Defined only on
/// levels before T whose forward value is defined.
GridFunction dtau_T(const GridFunction& u);

/// Convenience: the direction-k operators of a domain's direction set.
GridFunction delta_k(const GridFunction& u, int k);
GridFunction laplace_k(const GridFunction& u, int k);

/// Resolve a free-form (eta, l) pair against a direction set's lattice:
/// eta * l must equal base_step * w for an integer vector w.
LatticeStep resolve_step(const DirectionSet& dirs, double eta, std::span<const Coord> l);

// ---- closure-based calculus -------------------------------------------------
//
// The identity batteries evaluate difference expressions of analytic
// functions at arbitrary real points and steps; no lattice is involved.

using ScalarFn = std::function<double(std::span<const double>)>;

namespace fn {
std::vector<double> shifted(std::span<const double> x, std::span<const double> l, double nu);
double delta(const ScalarFn& f, double nu, std::span<const double> l, std::span<const double> x);
double laplace(const ScalarFn& f, double nu, std::span<const double> l, std::span<const double> x);
double shift(const ScalarFn& f, double nu, std::span<const double> l, std::span<const double> x);
}  // namespace fn

/// Residuals of the discrete product/chain rules and the second-difference
/// comparison, evaluated for one (a, psi, nu, l1, l2) sample at a batch of
/// points. Residuals are absolute; `scale` is the natural magnitude of the
/// terms involved, for relative thresholds.
struct IdentityReport {
    double product_shift = 0;     // d(a psi) = (d a) psi + (T a)(d psi)
    double product_symmetric = 0; // d(a psi) = a d psi + psi d a + nu (d a)(d psi)
    double product_mixed = 0;     // d2 d1 (a psi) expansion with the nu cross term
    double product_laplace = 0;   // D(a psi) = a D psi + psi D a + one-sided squares
    double square_laplace = 0;    // D(psi^2) = 2 psi D psi + (d+ psi)^2 + (d- psi)^2
    double max_residual = 0;
    double comparison_slack = 0;  // min over points of RHS - LHS of the
                                  // |D psi| <= |d-((d+ psi)^-)| + |d+((d- psi)^-)| bound
    double scale = 1;
};

/// Evaluate all five product identities and the second-difference comparison
/// for step nu along directions l1, l2 at each point of `points`.
IdentityReport verify_identities(const ScalarFn& a, const ScalarFn& psi, double nu,
                                 std::span<const double> l1, std::span<const double> l2,
                                 const std::vector<std::vector<double>>& points);

/// Slack of the interpolation bound for mixed second differences on the
/// two-dimensional eight-direction configuration: for every ordered pair
/// (l1, l2) of base directions, RHS - |delta_{h,l1} delta_{h,l2} phi(center)|
/// where RHS = 4 max|Delta_k phi| over the one-step star of the base
/// directions' two-step neighbourhood plus 4 max|Delta_k phi| over the
/// diagonal directions at the one-step star. Returns the minimum slack and
/// the magnitude scale. `phi` must be defined on a sufficiently large patch
/// around `center` at level `level`.
struct SecondDiffBound {
    double min_slack = 0;
    double scale = 1;
};
SecondDiffBound second_difference_bound(const GridFunction& phi, int level, const Point& center,
                                        int d0);

// ---- CSV serialization ------------------------------------------------------

/// Rows "time_index,c0,...,c{d-1},value" for every defined slot, sorted by
/// (time, point). The terminal slice uses time_index = Tprime/tau.
void write_csv(const GridFunction& u, std::ostream& out);
std::string to_csv(const GridFunction& u);
/// Parse onto an existing domain; unknown slots are an error.
GridFunction read_csv(std::shared_ptr<const StencilDomain> dom, std::istream& in);

}  // namespace bgrid
