#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bgrid/calculus.hpp"
#include "bgrid/problem.hpp"
#include "bgrid/solver.hpp"

namespace bgrid {

/// The exponential time weights of the scheme:
///   xi(t) = e^{m t} for t < T,  xi(T) = e^{m Tprime},
///   xi_minus = min(xi, 1), xi_plus = max(xi, 1),
///   c_m = (1 - e^{-m tau}) / tau,
///   lambda = inf over controls and points of (c + r c_m).
struct Weights {
    double m = 0, tau = 0, T = 0, Tprime = 0;
    double c_m = 0;

    double xi(TimeKey tk) const;
    double xi_minus(TimeKey tk) const { return std::min(xi(tk), 1.0); }
    double xi_plus(TimeKey tk) const { return std::max(xi(tk), 1.0); }
};

/// lambda is computed over the domain's own points and controls.
Weights weights_of(const ControlProblem& pr, const TimeGrid& time);
double lambda_of(const ControlProblem& pr, const StencilDomain& dom, const Weights& w);

/// The xi_minus-weighted difference maxima a solution feeds into the a
/// priori estimates. Every field is a maximum over the stated set of slots,
/// restricted to slots where the difference has support; a field with no
/// admissible slot at all is absent rather than zero.
struct DiffNorms {
    std::optional<double> sup_u_Qbar;              // max_{Qbar} |xi_- u|
    std::optional<double> sup_dtau_neg_Q;          // max_{Q} (xi_- d_tau u)^-
    // first differences, per direction index |i| = 1..d1(+1)
    std::optional<double> sup_d1_Qbar;             // |i| <= d1, over Qbar
    std::optional<double> sup_d1_dQ1;              // |i| <= d1, over dQ1
    std::optional<double> sup_dextra_Q0;           // extra direction, over Q|0
    std::optional<double> sup_dextra_dQ1;          // extra direction, over dQ1
    // the pointwise sum max_{k, dQ1} (|xi_- d_k u| + |xi_- d_extra u|)
    std::optional<double> sup_d1_plus_dextra_dQ1;
    // second differences delta_j delta_i
    std::optional<double> sup_d2_Q0;               // |i|,|j| <= d1, over Q|0
    std::optional<double> sup_d2_dQ2;              // |i|,|j| <= d1, over dQ2
    // pure second differences Delta_i
    std::optional<double> sup_lap_Q0;              // |i| <= d1, over Q|0
    std::optional<double> sup_lap_dQ1;             // |i| <= d1, over dQ1
    std::optional<double> sup_lap_all_dQ1;         // |i| <= d1+1, over dQ1
    std::optional<double> sup_lap_extra_neg_Q0;    // (Delta_extra u)^-, over Q|0
    // unweighted variants of the left-hand sides
    std::optional<double> lhs_dextra_Q0;           // max_{Q|0} |d_extra u|
    std::optional<double> lhs_d1_Qbar;             // max_{Qbar} |d_k u|
    std::optional<double> lhs_d2_Q0;               // max_{Q|0} |d_j d_i u|
    std::optional<double> lhs_lap_Q0;              // max_{Q|0} |Delta_k u|
    std::optional<double> lhs_lap_extra_neg_Q0;    // max_{Q|0} (Delta_extra u)^-
};

DiffNorms diff_norms(const GridFunction& u, const ControlProblem& pr, int threads = 1);

/// Which a priori estimate to instantiate.
enum class EstimateKind {
    first_diff_extra,   // |d_extra u| on Q|0 vs the first-difference data bracket
    first_diff_interior,// |d_k u| on Qbar vs the constant bracket (b == 0 case)
    second_diff,        // |d_j d_i u| on Q|0 vs the second-difference bracket
    pure_second_diff,   // |Delta_k u| on Q|0 vs the pure-second-difference bracket
};

const char* to_string(EstimateKind k);
std::optional<EstimateKind> estimate_kind_from_string(const std::string& s);

/// One instantiated estimate: the measured left-hand side, the computable
/// part of the right-hand side (everything except the constant N), and their
/// ratio, which bounds the N the estimate would need.
struct EstimateReport {
    EstimateKind kind;
    std::optional<double> lhs;
    std::optional<double> rhs;       // e^{m^+ (T + tau)} * bracket
    std::optional<double> ratio;     // lhs / rhs when both exist and rhs > 0
    std::optional<double> lhs2, rhs2, ratio2;  // secondary bound (extra
                                               // direction part), when any
    double lambda = 0;
    bool assumptions_checked = false;
    bool assumptions_met = false;
    std::vector<std::string> notes;  // absent maximands, unmet preconditions
    DiffNorms norms;
};

struct EstimateOptions {
    bool validate = true;   // run the kind's assumption set first
    int samples = 256;
    std::uint64_t seed = 1;
    int threads = 1;
};

EstimateReport estimate_ratio(EstimateKind kind, const GridFunction& u, const ControlProblem& pr,
                              const EstimateOptions& opt = {});

/// The assumption set each estimate relies on.
std::vector<Assumption> assumptions_for(EstimateKind kind);

// ---- studies -----------------------------------------------------------------

/// One rung of a refinement study. `error` is against the exact solution
/// when one is known; lhs/rhs/ratio echo the estimate when one was requested.
struct StudyRow {
    double h = 0;
    std::optional<double> error;
    std::optional<double> lhs, rhs, ratio;
};

struct StudyResult {
    std::vector<StudyRow> rows;
    std::optional<double> fitted_rate;  // least-squares slope of log e vs log h
    bool all_solves_converged = true;
};

/// Least-squares slope of log(error) against log(h). Rungs with error <=
/// `floor` are dropped (they are exact to roundoff); absent if fewer than two
/// rungs remain.
std::optional<double> fit_rate(const std::vector<double>& h, const std::vector<double>& err,
                               double floor = 1e-13);

/// "h,error,lhs,rhs,ratio" with nan for absent entries.
void write_rate_csv(const StudyResult& r, std::ostream& out);
StudyResult read_rate_csv(std::istream& in);

}  // namespace bgrid
