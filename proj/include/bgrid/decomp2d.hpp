#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bgrid/util.hpp"

namespace bgrid {

/// Even convex surrogate for |y|: equals |y| outside (-kappa, kappa) and
/// blends through a polynomial (C^2) or a mollified kink (C-infinity) inside.
enum class SmoothAbsKind { quartic, mollified };

class SmoothAbs {
public:
    explicit SmoothAbs(double kappa = 1.0 / 3.0, SmoothAbsKind kind = SmoothAbsKind::quartic);

    double kappa() const { return kappa_; }
    SmoothAbsKind kind() const { return kind_; }

    double operator()(double y) const;
    double deriv(double y) const;
    double second_deriv(double y) const;

private:
    double kappa_;
    SmoothAbsKind kind_;
    double moll_eps_ = 0;  // half-width of the mollifier (mollified kind)
};

/// Symmetric 2x2 coefficient a(x).
struct Sym2 {
    double a11 = 0, a12 = 0, a22 = 0;
};

/// Directional weights of the four-direction splitting at a point:
///   a = (1/4) sum_{i,j in {+-1,+-2}} ahat^{ij} l_ij l_ij^T,
/// recorded through the independent entries (the rest follow from
/// ahat^{ij} = ahat^{ji} = ahat^{-i,-j} and ahat^{i,-i} = 0).
struct DirWeights {
    double a11hat = 0;  // along 2 e1
    double a22hat = 0;  // along 2 e2
    double a12hat = 0;  // along e1 + e2
    double a1m2hat = 0; // along e1 - e2
};

/// A 2D field sampled on points (physical coordinates).
template <class V>
struct SampledField {
    std::vector<std::array<double, 2>> points;
    std::vector<V> values;
    std::size_t size() const { return points.size(); }
};

using MatrixField = SampledField<Sym2>;
using DirectionalField = SampledField<DirWeights>;

/// Split a dominant symmetric field into nonnegative directional weights:
/// with s = min(a11, a22), g = a12 / s (0/0 := 0), hgt = s * psi(g):
///   2 ahat^{12} = hgt + a12, 2 ahat^{1,-2} = hgt - a12,
///   2 ahat^{ii} = a^{ii} - hgt.
/// Requires |a12| <= min(a11, a22) pointwise (dominance) and a11, a22 >= 0;
/// violations are errors naming the worst point.
DirectionalField decompose(const MatrixField& a, const SmoothAbs& psi = SmoothAbs());

/// Exact inverse direction: assemble (1/4) sum ahat l l^T back into matrices.
MatrixField reconstruct(const DirectionalField& w);

/// Guard for callers holding full 2x2 matrices: errors when |m12 - m21|
/// exceeds 1e-14 * scale.
Sym2 as_symmetric(double m11, double m12, double m21, double m22);

/// Largest difference quotient |sqrt(v(x)) - sqrt(v(y))| / |x - y| over the
/// given index pairs, per weight channel. Pairs with coincident points are
/// an error.
struct LipschitzProbe {
    double a11hat = 0, a22hat = 0, a12hat = 0, a1m2hat = 0;
    double max() const;
};

LipschitzProbe lipschitz_probe(const DirectionalField& w,
                               std::span<const std::pair<std::size_t, std::size_t>> pairs);

/// Nearest-neighbour pairs of an axis-aligned grid of points (helper for the
/// default probe).
std::vector<std::pair<std::size_t, std::size_t>> grid_neighbor_pairs(
    const std::vector<std::array<double, 2>>& points);

// ---- CSV ---------------------------------------------------------------------

/// Rows "x0,x1,a11,a12,a22".
MatrixField read_matrix_csv(std::istream& in);
/// Rows "x0,x1,a11hat,a22hat,a12hat,a1m2hat".
void write_directional_csv(const DirectionalField& w, std::ostream& out);
DirectionalField read_directional_csv(std::istream& in);

}  // namespace bgrid
