#include "bgrid/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace bgrid {

namespace {

std::string fmt_point(const Point& p) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? "," : "") << p[i];
    os << ")";
    return os.str();
}

Point add(const Point& a, const Point& b) {
    Point r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (__builtin_add_overflow(a[i], b[i], &r[i]))
            throw BuildError("integer coordinate overflow combining lattice offsets");
    }
    return r;
}

Point negate(const Point& a) {
    Point r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = -a[i];
    return r;
}

bool is_zero(const Point& a) {
    return std::all_of(a.begin(), a.end(), [](Coord c) { return c == 0; });
}

/// Column echelon form over the integers (unimodular column operations
/// only), kept as the list of pivot columns with their pivot rows in
/// increasing order. Spans the same subgroup as the input columns.
std::vector<Point> column_echelon(std::vector<Point> cols, std::size_t dim) {
    std::vector<Point> pivots;
    std::size_t start = 0;  // columns before `start` inside `cols` are spent
    for (std::size_t row = 0; row < dim; ++row) {
        while (true) {
            std::size_t best = cols.size();
            for (std::size_t j = start; j < cols.size(); ++j) {
                if (cols[j][row] == 0) continue;
                if (best == cols.size() ||
                    std::llabs(cols[j][row]) < std::llabs(cols[best][row]))
                    best = j;
            }
            if (best == cols.size()) break;  // row finished (may be no pivot)
            std::swap(cols[start], cols[best]);
            bool clean = true;
            for (std::size_t j = start + 1; j < cols.size(); ++j) {
                if (cols[j][row] == 0) continue;
                Coord q = cols[j][row] / cols[start][row];
                for (std::size_t i = 0; i < dim; ++i) cols[j][i] -= q * cols[start][i];
                if (cols[j][row] != 0) clean = false;
            }
            if (clean) {
                pivots.push_back(cols[start]);
                ++start;
                break;
            }
        }
    }
    return pivots;
}

bool echelon_contains(const std::vector<Point>& pivots, Point v) {
    for (const Point& col : pivots) {
        std::size_t row = 0;
        while (row < col.size() && col[row] == 0) ++row;
        if (v[row] % col[row] != 0) return false;
        Coord q = v[row] / col[row];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= q * col[i];
    }
    return is_zero(v);
}

}  // namespace

// ---- DirectionSet -----------------------------------------------------------

DirectionSet DirectionSet::make(int dim, double h, double h0, std::vector<std::vector<Coord>> ells,
                                std::optional<std::pair<std::vector<Coord>, double>> extra,
                                int subdivision) {
    DirectionSet d;
    if (dim < 1) throw BuildError("direction set: dim must be >= 1");
    if (!(h > 0) || !(h0 > 0)) throw BuildError("direction set: h and h0 must be positive");
    if (subdivision < 1) throw BuildError("direction set: subdivision must be >= 1");
    if (ells.empty()) throw BuildError("direction set: need at least one direction");
    d.dim_ = dim;
    d.h_ = h;
    d.h0_ = h0;
    d.M_ = subdivision;
    d.d1_ = static_cast<int>(ells.size());
    for (const auto& e : ells) {
        if (static_cast<int>(e.size()) != dim)
            throw BuildError("direction set: direction has wrong dimension");
        d.ells_pos_.push_back(e);
        Point off(e.size());
        for (std::size_t i = 0; i < e.size(); ++i) off[i] = e[i] * d.M_;
        d.offs_pos_.push_back(std::move(off));
    }
    if (extra) {
        auto& [l, eta] = *extra;
        if (static_cast<int>(l.size()) != dim)
            throw BuildError("direction set: extra direction has wrong dimension");
        if (!(eta > 0) || eta > h)
            throw BuildError("direction set: extra step eta must satisfy 0 < eta <= h");
        const double g = h / d.M_;
        Point w(l.size());
        for (std::size_t i = 0; i < l.size(); ++i) {
            double want = eta * static_cast<double>(l[i]);
            w[i] = static_cast<Coord>(std::llround(want / g));
            if (std::abs(w[i] * g - want) > 1e-12 * std::max(1.0, std::abs(want)))
                throw BuildError("direction set: eta * l does not land on the base lattice");
        }
        d.has_extra_ = true;
        d.eta_ = eta;
        d.ells_pos_.push_back(l);
        d.offs_pos_.push_back(std::move(w));
    }
    for (const auto& e : d.ells_pos_) d.ells_neg_.push_back(negate(e));
    for (const auto& o : d.offs_pos_) d.offs_neg_.push_back(negate(o));

    std::set<Point> lam;
    for (int k = 1; k <= d.max_index(); ++k) {
        lam.insert(d.offset(k));
        lam.insert(d.offset(-k));
    }
    d.lambda_.assign(lam.begin(), lam.end());
    std::set<Point> lam2;
    for (int i = 1; i <= d.d1_; ++i) {
        for (int j = 1; j <= d.d1_; ++j) {
            for (int si : {1, -1}) {
                for (int sj : {1, -1}) {
                    lam2.insert(add(d.offset(si * i), d.offset(sj * j)));
                }
            }
        }
    }
    d.lambda0_sum_.assign(lam2.begin(), lam2.end());

    d.hnf_ = column_echelon(d.offs_pos_, static_cast<std::size_t>(dim));
    return d;
}

const Point& DirectionSet::ell(int k) const {
    int a = std::abs(k);
    if (a < 1 || a > max_index()) throw BuildError("direction index out of range");
    return k > 0 ? ells_pos_[a - 1] : ells_neg_[a - 1];
}

const Point& DirectionSet::offset(int k) const {
    int a = std::abs(k);
    if (a < 1 || a > max_index()) throw BuildError("direction index out of range");
    return k > 0 ? offs_pos_[a - 1] : offs_neg_[a - 1];
}

bool DirectionSet::on_lattice(const Point& p) const {
    if (static_cast<int>(p.size()) != dim_) return false;
    return echelon_contains(hnf_, p);
}

// ---- TimeGrid ---------------------------------------------------------------

TimeGrid TimeGrid::make(double tau, double T) {
    if (!(tau > 0)) throw BuildError("time grid: tau must be positive");
    if (!(T > 0)) throw BuildError("time grid: T must be positive");
    TimeGrid g;
    g.tau = tau;
    g.T = T;
    // least n with n*tau >= T, snapping near-integer quotients
    double q = T / tau;
    int n_up = static_cast<int>(std::ceil(q - 1e-9));
    if (n_up < 1) n_up = 1;
    g.Tprime = n_up * tau;
    g.num_levels = n_up;
    return g;
}

// ---- StencilDomain ----------------------------------------------------------

const char* to_string(PointClass c) {
    switch (c) {
        case PointClass::outside: return "outside";
        case PointClass::terminal: return "terminal";
        case PointClass::interior2: return "interior2";
        case PointClass::interior1: return "interior1";
        case PointClass::boundary2_only: return "boundary2_only";
        case PointClass::boundary1: return "boundary1";
    }
    return "?";
}

std::shared_ptr<const StencilDomain> StencilDomain::build(DirectionSet dirs, TimeGrid time,
                                                          const DomainSpec& spec) {
    auto dom = std::make_shared<StencilDomain>();
    dom->dirs_ = std::move(dirs);
    dom->time_ = time;
    const DirectionSet& D = dom->dirs_;
    const int dim = D.dim();

    if (!spec.box == !spec.points)
        throw BuildError("domain spec: exactly one of box / points must be given");

    // Collect Q, level by level, in deterministic (level, lexicographic) order.
    std::map<int, std::set<Point>> q;
    if (spec.box) {
        const auto& b = *spec.box;
        if (static_cast<int>(b.lo.size()) != dim || static_cast<int>(b.hi.size()) != dim)
            throw BuildError("domain spec: box corners have wrong dimension");
        for (int i = 0; i < dim; ++i)
            if (b.lo[i] > b.hi[i]) throw BuildError("domain spec: box has lo > hi");
        int levels = b.levels == 0 ? time.num_levels : b.levels;
        if (levels < 1 || levels > time.num_levels)
            throw BuildError("domain spec: time levels exceed the horizon");
        std::set<Point> slice;
        Point p(b.lo.begin(), b.lo.end());
        while (true) {
            if (D.on_lattice(p)) slice.insert(p);
            int i = 0;
            for (; i < dim; ++i) {
                if (p[i] < b.hi[i]) {
                    ++p[i];
                    break;
                }
                p[i] = b.lo[i];
            }
            if (i == dim) break;
        }
        if (slice.empty()) throw BuildError("domain spec: box contains no lattice point");
        for (int n = 0; n < levels; ++n) q[n] = slice;
    } else {
        for (const auto& [n, p] : spec.points->pts) {
            if (n < 0 || n >= time.num_levels)
                throw BuildError("domain spec: time level " + std::to_string(n) +
                                 " is outside [0, " + std::to_string(time.num_levels) + ")");
            if (static_cast<int>(p.size()) != dim)
                throw BuildError("domain spec: point has wrong dimension");
            if (!D.on_lattice(p))
                throw BuildError("domain spec: off-lattice point at level " + std::to_string(n) +
                                 ": " + fmt_point(p));
            q[n].insert(p);
        }
    }
    if (!q.count(0) || q[0].empty())
        throw BuildError("domain spec: the initial slice (level 0) is empty");

    // Closure: points at the top lattice level reach the horizon next.
    std::set<Point> terminal;
    if (auto it = q.find(time.num_levels - 1); it != q.end()) terminal = it->second;
    dom->has_terminal_ = !terminal.empty();

    // Deterministic point ids: lexicographic order over the union.
    std::set<Point> all;
    for (const auto& [n, pts] : q) all.insert(pts.begin(), pts.end());
    all.insert(terminal.begin(), terminal.end());
    dom->points_.assign(all.begin(), all.end());
    for (std::int32_t i = 0; i < static_cast<std::int32_t>(dom->points_.size()); ++i)
        dom->pid_[dom->points_[i]] = i;

    const int ndirs = D.num_slots();
    auto make_level = [&](TimeKey key, double t, const std::set<Point>& pts) {
        Level lvl;
        lvl.key = key;
        lvl.t = t;
        lvl.slot0 = dom->total_slots_;
        for (const Point& p : pts) lvl.pids.push_back(dom->pid_.at(p));
        std::sort(lvl.pids.begin(), lvl.pids.end());
        for (std::int32_t i = 0; i < static_cast<std::int32_t>(lvl.pids.size()); ++i)
            lvl.local[lvl.pids[i]] = i;
        lvl.nbr.assign(lvl.pids.size() * ndirs, -1);
        for (std::size_t i = 0; i < lvl.pids.size(); ++i) {
            const Point& p = dom->points_[lvl.pids[i]];
            for (int s = 0; s < ndirs; ++s) {
                Point tgt = add(p, D.offset(DirectionSet::unslot(s)));
                auto pit = dom->pid_.find(tgt);
                if (pit == dom->pid_.end()) continue;
                auto lit = lvl.local.find(pit->second);
                if (lit != lvl.local.end()) lvl.nbr[i * ndirs + s] = lit->second;
            }
        }
        dom->total_slots_ += static_cast<std::int32_t>(lvl.pids.size());
        dom->levels_.push_back(std::move(lvl));
    };

    for (const auto& [n, pts] : q) make_level(TimeKey::level(n), time.time_of(n), pts);
    if (dom->has_terminal_) make_level(TimeKey::horizon(), time.T, terminal);

    // Membership flags and time successors.
    dom->flags_.assign(dom->total_slots_, 0);
    dom->succ_.assign(dom->total_slots_, -1);
    dom->count_q_ = 0;

    std::unordered_map<int, int> level_index;
    for (int li = 0; li < static_cast<int>(dom->levels_.size()); ++li)
        if (!dom->levels_[li].key.terminal) level_index[dom->levels_[li].key.n] = li;

    for (int li = 0; li < static_cast<int>(dom->levels_.size()); ++li) {
        Level& lvl = dom->levels_[li];
        if (lvl.key.terminal) continue;
        int sli = dom->successor_level_impl(li, level_index);
        for (std::size_t i = 0; i < lvl.pids.size(); ++i) {
            std::int32_t s = lvl.slot0 + static_cast<std::int32_t>(i);
            dom->flags_[s] |= F_Q;
            ++dom->count_q_;
            if (sli >= 0) {
                const Level& nxt = dom->levels_[sli];
                auto it = nxt.local.find(lvl.pids[i]);
                if (it != nxt.local.end()) dom->succ_[s] = nxt.slot0 + it->second;
            }
            bool succ_ok = dom->succ_[s] >= 0;
            auto star_in_level = [&](const std::vector<Point>& offs) {
                const Point& p = dom->points_[lvl.pids[i]];
                for (const Point& o : offs) {
                    auto pit = dom->pid_.find(add(p, o));
                    if (pit == dom->pid_.end() || !lvl.local.count(pit->second)) return false;
                }
                return true;
            };
            if (succ_ok && star_in_level(D.lambda_offsets())) {
                dom->flags_[s] |= F_QO1;
                ++dom->count_qo1_;
            }
            if (succ_ok && star_in_level(D.lambda0_sum_offsets())) {
                dom->flags_[s] |= F_QO2;
                ++dom->count_qo2_;
            }
        }
    }

    for (int li = 0; li < static_cast<int>(dom->levels_.size()); ++li) {
        const Level& lvl = dom->levels_[li];
        if (lvl.key.terminal || lvl.key.n != 0) continue;
        for (std::size_t i = 0; i < lvl.pids.size(); ++i)
            dom->q0_slots_.push_back(lvl.slot0 + static_cast<std::int32_t>(i));
    }
    return dom;
}

// helper used during build, before the object is fully formed
int StencilDomain::successor_level_impl(int li, const std::unordered_map<int, int>& index) const {
    const Level& lvl = levels_[li];
    int next_n = lvl.key.n + 1;
    if (next_n >= time_.num_levels) return has_terminal_ ? terminal_level() : -1;
    auto it = index.find(next_n);
    return it == index.end() ? -1 : it->second;
}

int StencilDomain::successor_level(int li) const {
    if (li < 0 || li >= static_cast<int>(levels_.size()) || levels_[li].key.terminal) return -1;
    std::unordered_map<int, int> index;
    for (int i = 0; i < static_cast<int>(levels_.size()); ++i)
        if (!levels_[i].key.terminal) index[levels_[i].key.n] = i;
    return successor_level_impl(li, index);
}

std::int32_t StencilDomain::pid_of(const Point& p) const {
    auto it = pid_.find(p);
    return it == pid_.end() ? -1 : it->second;
}

std::vector<double> StencilDomain::coords(std::int32_t pid) const { return coords(points_[pid]); }

std::vector<double> StencilDomain::coords(const Point& p) const {
    const double g = dirs_.base_step();
    std::vector<double> x(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) x[i] = g * static_cast<double>(p[i]);
    return x;
}

std::int32_t StencilDomain::slot(int level, std::int32_t pid) const {
    if (level < 0 || level >= static_cast<int>(levels_.size()) || pid < 0) return -1;
    const Level& lvl = levels_[level];
    auto it = lvl.local.find(pid);
    return it == lvl.local.end() ? -1 : lvl.slot0 + it->second;
}

int StencilDomain::level_of(TimeKey tk) const {
    for (int li = 0; li < static_cast<int>(levels_.size()); ++li) {
        const Level& lvl = levels_[li];
        if (tk.terminal ? lvl.key.terminal : (!lvl.key.terminal && lvl.key.n == tk.n)) return li;
    }
    return -1;
}

std::int32_t StencilDomain::slot(TimeKey tk, const Point& p) const {
    int li = level_of(tk);
    return li < 0 ? -1 : slot(li, pid_of(p));
}

std::pair<int, std::int32_t> StencilDomain::unslot(std::int32_t s) const {
    for (int li = static_cast<int>(levels_.size()) - 1; li >= 0; --li) {
        if (s >= levels_[li].slot0)
            return {li, levels_[li].pids[s - levels_[li].slot0]};
    }
    throw OutsideSupport("slot out of range");
}

PointClass StencilDomain::classify(TimeKey tk, const Point& p) const {
    std::int32_t s = slot(tk, p);
    if (s < 0) return PointClass::outside;
    if (is_terminal(s)) return PointClass::terminal;
    bool o1 = in_Qo1(s), o2 = in_Qo2(s);
    if (o1 && o2) return PointClass::interior2;
    if (o1) return PointClass::interior1;
    if (o2) return PointClass::boundary2_only;
    return PointClass::boundary1;
}

std::int32_t StencilDomain::neighbor(std::int32_t s, int dir_slot) const {
    auto [li, pid] = unslot(s);
    const Level& lvl = levels_[li];
    std::int32_t local = s - lvl.slot0;
    std::int32_t n = lvl.nbr[static_cast<std::size_t>(local) * dirs_.num_slots() + dir_slot];
    return n < 0 ? -1 : lvl.slot0 + n;
}

std::vector<double> lattice_point(const DirectionSet& dirs, std::span<const Coord> coeffs) {
    int expect = dirs.d1() + (dirs.has_extra() ? 1 : 0);
    if (static_cast<int>(coeffs.size()) != expect)
        throw BuildError("lattice_point: need one coefficient per positive direction");
    Point acc(dirs.dim(), 0);
    for (int j = 0; j < expect; ++j) {
        const Point& off = dirs.offset(j + 1);
        for (int i = 0; i < dirs.dim(); ++i) {
            Coord term;
            if (__builtin_mul_overflow(coeffs[j], off[i], &term) ||
                __builtin_add_overflow(acc[i], term, &acc[i]))
                throw BuildError("lattice_point: integer coordinate overflow");
        }
    }
    const double g = dirs.base_step();
    std::vector<double> x(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) x[i] = g * static_cast<double>(acc[i]);
    return x;
}

}  // namespace bgrid
