#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgrid/bellman.hpp"
#include "bgrid/calculus.hpp"
#include "bgrid/problem.hpp"

namespace bgrid {

enum class InnerSolve { gauss_seidel, direct };
enum class OuterMethod { policy_iteration, value_iteration };

struct SolveConfig {
    double tol = 1e-10;          // max |scheme residual| over equation points
    int max_outer = 60;          // policy / value iterations per level
    int max_picard = 40;         // quasilinear freezes per level
    int max_inner_sweeps = 200000;
    double inner_tol_factor = 0.05;  // inner linear tol = factor * tol
    InnerSolve inner = InnerSolve::gauss_seidel;
    OuterMethod outer = OuterMethod::policy_iteration;
    double damping = 1.0;        // value-iteration step scale, in (0, 1]
    int threads = 1;
};

struct LevelReport {
    int level = 0;
    int outer_iterations = 0;
    int picard_iterations = 0;
    std::int64_t inner_sweeps = 0;
    double residual = 0;  // final max |scheme residual| on the level
};

struct SolveReport {
    GridFunction u;                   // on all of Qbar (data + solved values)
    std::vector<int> control;         // argmax control per slot, -1 off Qo1
    bool converged = false;
    bool monotone = true;             // every per-level system was an
                                      // M-matrix with positive diagonal
    double max_residual = 0;          // over all equation points, at the end
    double lambda = 0;                // inf over controls/points of c + r c_m
    std::vector<LevelReport> levels;
    std::string message;
};

/// March the scheme backward from the horizon: per time level, solve
///   max_alpha [ r (u_next - u)/tau + L_h u + f ] = 0   on the level's
/// equation points, with `data` prescribing every point of dQ1 (terminal
/// slice included). Missing data is a hard error; non-convergence within the
/// caps is reported, not thrown.
SolveReport solve_parabolic(const ControlProblem& pr, std::shared_ptr<const StencilDomain> dom,
                            const GridFunction& data, const SolveConfig& cfg = {});

/// Stationary variant: requires r identically 0 and a single-level domain
/// (use elliptic_domain to build one). Data is needed on the spatial rim
/// only; the inert horizon slice is filled with zeros internally.
SolveReport solve_elliptic(const ControlProblem& pr, std::shared_ptr<const StencilDomain> dom,
                           const GridFunction& data, const SolveConfig& cfg = {});

/// One-level domain (tau = T = 1) for stationary problems.
std::shared_ptr<const StencilDomain> elliptic_domain(DirectionSet dirs, const DomainSpec& spec);

/// State of one time level mid-solve, exposed so a single policy-improvement
/// step is testable: a fixed point of the step is a solved level.
struct LevelState {
    int level = 0;
    std::vector<std::int32_t> slots;  // equation slots of this level
    std::vector<int> alpha;           // current control per slot
    std::vector<double> frozen_p;     // 2*d1 per slot when f/a need freezing
    std::vector<double> frozen_psi;
    double residual = 0;              // max |scheme residual| at `slots`
};

/// Build the level state for `level` from the current values of u (which
/// must already hold data and successor-level values).
LevelState make_level_state(const ControlProblem& pr, const StencilDomain& dom,
                            const GridFunction& u, int level);

/// One policy improvement: re-select argmax controls at the current u, solve
/// the induced linear system, refresh the residual. Updates u in place on the
/// level's equation slots.
LevelState policy_iteration_step(const ControlProblem& pr, const StencilDomain& dom,
                                 GridFunction& u, LevelState state, const SolveConfig& cfg = {});

}  // namespace bgrid
