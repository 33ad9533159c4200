#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bgrid/util.hpp"

namespace bgrid {

using Coord = std::int64_t;

/// Spatial lattice point in canonical integer coordinates: physical position
/// is g * p with g = h / M the base step of the owning direction set.
using Point = std::vector<Coord>;

struct PointHash {
    std::size_t operator()(const Point& p) const {
        return static_cast<std::size_t>(fnv1a(p.data(), p.size() * sizeof(Coord)));
    }
};

/// One signed lattice step: displacement `offset` in canonical units together
/// with the positive divisor `step` used by the difference quotients. For a
/// plain direction k this is (M * ell_k, h); for the optional extra direction
/// it is (w, eta) with eta * l = g * w.
struct LatticeStep {
    Point offset;
    double step = 0.0;
};

/// The admissible step directions of a scheme.
///
/// Indices k run over {+-1, ..., +-d1} and, when the extra direction is
/// present, {+-(d1+1)}. Negative indices are mirror images by construction:
/// ell_{-k} = -ell_k exactly. Zero vectors and repeated vectors are allowed.
class DirectionSet {
public:
    /// `ells` lists ell_1..ell_{d1} as integer vectors; negatives are implied.
    /// `extra`, if given, is the pair (l, eta) with 0 < eta <= h; eta * l must
    /// land on the canonical lattice, i.e. eta * l = (h/M) * w for an integer
    /// vector w (checked to 1e-12 relative).
    static DirectionSet make(int dim, double h, double h0,
                             std::vector<std::vector<Coord>> ells,
                             std::optional<std::pair<std::vector<Coord>, double>> extra = {},
                             int subdivision = 1);

    int dim() const { return dim_; }
    int d1() const { return d1_; }
    bool has_extra() const { return has_extra_; }
    /// Largest valid |k|: d1, or d1+1 when the extra direction is present.
    int max_index() const { return d1_ + (has_extra_ ? 1 : 0); }
    double h() const { return h_; }
    double h0() const { return h0_; }
    double eta() const { return eta_; }
    int subdivision() const { return M_; }
    /// Base step g = h / M; canonical coordinate c sits at physical g * c.
    double base_step() const { return h_ / M_; }

    /// Direction vector ell_k (integer components), k in {+-1..+-max_index()}.
    /// For k = +-(d1+1) this is the extra vector l (resp. -l).
    const Point& ell(int k) const;
    /// Step size h_k: h for |k| <= d1, eta for the extra direction.
    double step_of(int k) const { return std::abs(k) <= d1_ ? h_ : eta_; }
    /// Canonical displacement of one k-step: M * ell_k, or +-w for the extra.
    const Point& offset(int k) const;
    /// The (offset, step) pair for direction k, ready for the calculus ops.
    LatticeStep step(int k) const { return {offset(k), step_of(k)}; }

    /// Dense slot for signed index k: +1,-1,+2,-2,... -> 0,1,2,3,...
    static int slot(int k) { return 2 * (std::abs(k) - 1) + (k < 0 ? 1 : 0); }
    static int unslot(int s) { return (s % 2 ? -1 : 1) * (s / 2 + 1); }
    /// Number of signed directions including the extra pair if present.
    int num_slots() const { return 2 * max_index(); }

    /// All one-step displacements Lambda = {h_i ell_i} in canonical units,
    /// deduplicated; and the two-step sums Lambda_0 + Lambda_0 (no extra).
    const std::vector<Point>& lambda_offsets() const { return lambda_; }
    const std::vector<Point>& lambda0_sum_offsets() const { return lambda0_sum_; }

    /// True when the canonical vector lies in the subgroup generated by the
    /// one-step displacements (exact integer arithmetic).
    bool on_lattice(const Point& p) const;

private:
    int dim_ = 0, d1_ = 0, M_ = 1;
    double h_ = 0, h0_ = 0, eta_ = 0;
    bool has_extra_ = false;
    std::vector<Point> ells_pos_;    // ell_1..ell_{d1} (+ extra l at back)
    std::vector<Point> ells_neg_;    // mirrored
    std::vector<Point> offs_pos_, offs_neg_;
    std::vector<Point> lambda_, lambda0_sum_;
    std::vector<Point> hnf_;         // column Hermite form of the generators
};

/// Time lattice: levels t = n*tau for n*tau < T, plus the horizon T itself.
/// Tprime is the first lattice time at or past T; the cut-off increment
/// tau_T(t) = min(tau, T - t) never changes the divisor of the time quotient.
struct TimeGrid {
    double tau = 0;
    double T = 0;
    double Tprime = 0;    // smallest n*tau >= T
    int num_levels = 0;   // lattice levels strictly before T: n = 0..num_levels-1

    static TimeGrid make(double tau, double T);
    double time_of(int n) const { return n * tau; }
    /// Index such that Tprime = tprime_index * tau; no level of Q carries it,
    /// so it doubles as the serialized label of the terminal slice.
    int tprime_index() const { return num_levels; }
};

/// Time label of a slice: a lattice level n (t = n*tau < T) or the horizon.
struct TimeKey {
    int n = 0;
    bool terminal = false;

    static TimeKey level(int n) { return {n, false}; }
    static TimeKey horizon() { return {0, true}; }
    bool operator==(const TimeKey&) const = default;
};

enum class PointClass {
    outside,         // not in Qbar
    terminal,        // Qbar \ Q: the horizon slice added by closure
    interior2,       // Qo1 and Qo2: equation point, two-step stencils fit
    interior1,       // Qo1 but dQ2: equation point in the one-cell rim
    boundary2_only,  // dQ1 but Qo2: data point whose two-step stencil fits
    boundary1,       // dQ1 and dQ2 inside Q
};

const char* to_string(PointClass c);

/// Shape request for build_domain.
struct DomainSpec {
    /// Axis box in canonical coordinates, closed on both ends, over time
    /// levels 0..levels-1 (levels = 0 means "every level before T").
    /// Box points that are not on the step lattice are skipped.
    struct Box {
        std::vector<Coord> lo, hi;
        int levels = 0;
    };
    /// Explicit list of (level, canonical point); off-lattice points are a
    /// build error here.
    struct Points {
        std::vector<std::pair<int, Point>> pts;
    };

    std::optional<Box> box;
    std::optional<Points> points;

    static DomainSpec make_box(std::vector<Coord> lo, std::vector<Coord> hi, int levels = 0) {
        DomainSpec s;
        s.box = Box{std::move(lo), std::move(hi), levels};
        return s;
    }
    static DomainSpec make_points(std::vector<std::pair<int, Point>> pts) {
        DomainSpec s;
        s.points = Points{std::move(pts)};
        return s;
    }
};

/// A finite space-time set Q (every point at a lattice time before T, spatial
/// position on the step lattice, nonempty initial slice) together with its
/// closure Qbar and the four derived sets:
///
///   Qo1  - points of Q whose forward time neighbour lies in Qbar and whose
///          whole one-step star x + Lambda stays in Q (equation points);
///   dQ1  = Qbar \ Qo1 (data points, includes the terminal slice);
///   Qo2  - like Qo1 but with the two-step star x + Lambda_0 + Lambda_0;
///   dQ2  = Q \ Qo2 (the fat boundary used by second-difference estimates).
///
/// All memberships are precomputed; slots index Qbar densely so grid
/// functions are flat arrays.
class StencilDomain {
public:
    struct Level {
        TimeKey key;
        double t = 0;                       // evaluation time (T for terminal)
        std::vector<std::int32_t> pids;     // spatial points present, sorted
        std::unordered_map<std::int32_t, std::int32_t> local;  // pid -> index in pids
        std::int32_t slot0 = 0;             // global slot of pids[0]
        // per point, per direction slot: local index of x + offset_j at this
        // level, or -1 when absent
        std::vector<std::int32_t> nbr;
    };

    static std::shared_ptr<const StencilDomain> build(DirectionSet dirs, TimeGrid time,
                                                      const DomainSpec& spec);

    const DirectionSet& dirs() const { return dirs_; }
    const TimeGrid& time() const { return time_; }

    std::int32_t num_slots() const { return total_slots_; }
    std::int32_t num_points() const { return static_cast<std::int32_t>(points_.size()); }
    const std::vector<Level>& levels() const { return levels_; }
    bool has_terminal_level() const { return has_terminal_; }
    /// Index into levels() of the horizon slice; only valid when present.
    int terminal_level() const { return static_cast<int>(levels_.size()) - 1; }

    const Point& point(std::int32_t pid) const { return points_[pid]; }
    std::int32_t pid_of(const Point& p) const;  // -1 if unknown
    /// Physical coordinates g * p of a spatial point.
    std::vector<double> coords(std::int32_t pid) const;
    std::vector<double> coords(const Point& p) const;

    /// Global slot of (level index, pid), -1 when not in Qbar.
    std::int32_t slot(int level, std::int32_t pid) const;
    std::int32_t slot(TimeKey tk, const Point& p) const;
    /// Inverse of slot(): (level index, pid).
    std::pair<int, std::int32_t> unslot(std::int32_t slot) const;
    /// Level index for a time key, -1 when the key names no level.
    int level_of(TimeKey tk) const;
    /// Level holding t + tau_T(t) for a given level of Q, -1 at the top when
    /// the domain has no terminal slice.
    int successor_level(int level) const;

    bool in_Q(std::int32_t slot) const { return flags_[slot] & F_Q; }
    bool in_Qo1(std::int32_t slot) const { return flags_[slot] & F_QO1; }
    bool in_dQ1(std::int32_t slot) const { return !in_Qo1(slot); }  // within Qbar
    bool in_Qo2(std::int32_t slot) const { return flags_[slot] & F_QO2; }
    bool in_dQ2(std::int32_t slot) const { return in_Q(slot) && !in_Qo2(slot); }
    bool is_terminal(std::int32_t slot) const { return !in_Q(slot); }

    PointClass classify(TimeKey tk, const Point& p) const;

    /// Slots of the initial slice Q|_0 (level n = 0); never empty.
    const std::vector<std::int32_t>& initial_slots() const { return q0_slots_; }

    /// Neighbour slot of `slot` along direction slot j at the same level,
    /// -1 when that point is absent from the level.
    std::int32_t neighbor(std::int32_t slot, int dir_slot) const;
    /// Forward-in-time slot (same spatial point, successor level), -1 if absent.
    std::int32_t successor(std::int32_t slot) const { return succ_[slot]; }

    std::size_t count_Q() const { return count_q_; }
    std::size_t count_Qo1() const { return count_qo1_; }
    std::size_t count_Qo2() const { return count_qo2_; }

private:
    static constexpr std::uint8_t F_Q = 1, F_QO1 = 2, F_QO2 = 4;

    int successor_level_impl(int li, const std::unordered_map<int, int>& index) const;

    DirectionSet dirs_;
    TimeGrid time_;
    std::vector<Point> points_;
    std::unordered_map<Point, std::int32_t, PointHash> pid_;
    std::vector<Level> levels_;
    bool has_terminal_ = false;
    std::int32_t total_slots_ = 0;
    std::vector<std::uint8_t> flags_;
    std::vector<std::int32_t> succ_;
    std::vector<std::int32_t> q0_slots_;
    std::size_t count_q_ = 0, count_qo1_ = 0, count_qo2_ = 0;
    // canonical offsets of Lambda and Lambda0+Lambda0 resolved to pid deltas
    std::vector<Point> lambda_, lambda0_sum_;
};

/// Physical position of an integer combination of generator steps:
/// sum_j coeffs[j] * (h_j * ell_j) with j running over k = 1..d1 and then the
/// extra direction. Errors on coordinate overflow.
std::vector<double> lattice_point(const DirectionSet& dirs, std::span<const Coord> coeffs);

}  // namespace bgrid
