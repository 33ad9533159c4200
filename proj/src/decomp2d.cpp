#include "bgrid/decomp2d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace bgrid {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- Gauss-Legendre nodes (Newton on the Legendre polynomial) ---------------

struct Quadrature {
    std::vector<double> x, w;  // on [-1, 1]
};

const Quadrature& gauss_legendre_48() {
    static const Quadrature q = [] {
        constexpr int n = 48;
        Quadrature out;
        out.x.resize(n);
        out.w.resize(n);
        for (int i = 0; i < n; ++i) {
            double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            for (int it = 0; it < 100; ++it) {
                // evaluate P_n and P_{n-1} by recurrence
                double p0 = 1, p1 = t;
                for (int k = 2; k <= n; ++k) {
                    double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                double dp = n * (t * p1 - p0) / (t * t - 1);
                double step = p1 / dp;
                t -= step;
                if (std::abs(step) < 1e-15) break;
            }
            double p0 = 1, p1 = t;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (t * p1 - p0) / (t * t - 1);
            out.x[i] = t;
            out.w[i] = 2 / ((1 - t * t) * dp * dp);
        }
        return out;
    }();
    return q;
}

double integrate(double lo, double hi, const std::function<double(double)>& f) {
    const auto& q = gauss_legendre_48();
    double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    double acc = 0;
    for (std::size_t i = 0; i < q.x.size(); ++i) acc += q.w[i] * f(mid + half * q.x[i]);
    return acc * half;
}

/// Unnormalized bump exp(-1 / (1 - s^2)) on (-1, 1).
double bump(double s) {
    double d = 1 - s * s;
    return d > 0 ? std::exp(-1 / d) : 0.0;
}

double bump_mass() {
    static const double m = integrate(-1.0, 1.0, [](double s) { return bump(s); });
    return m;
}

}  // namespace

// ---- SmoothAbs ----------------------------------------------------------------

SmoothAbs::SmoothAbs(double kappa, SmoothAbsKind kind) : kappa_(kappa), kind_(kind) {
    if (!(kappa > 0)) throw BuildError("smoothing width must be positive, got " +
                                       std::to_string(kappa));
    if (kind_ == SmoothAbsKind::mollified) moll_eps_ = kappa;
}

double SmoothAbs::operator()(double y) const {
    double ay = std::abs(y);
    if (ay >= kappa_) return ay;
    if (kind_ == SmoothAbsKind::quartic) {
        double k = kappa_, y2 = y * y;
        return 3 * k / 8 + 3 * y2 / (4 * k) - y2 * y2 / (8 * k * k * k);
    }
    // |.|  convolved with the bump of half-width eps: split at the kink.
    // psi >= |.| holds exactly, so clamping only strips quadrature noise.
    double e = moll_eps_, c = 1 / (e * bump_mass());
    auto rho = [&](double z) { return c * bump(z / e); };
    double left = integrate(-e, y, [&](double z) { return (y - z) * rho(z); });
    double right = integrate(y, e, [&](double z) { return (z - y) * rho(z); });
    return std::max(left + right, ay);
}

double SmoothAbs::deriv(double y) const {
    double ay = std::abs(y);
    if (ay >= kappa_) return y > 0 ? 1.0 : -1.0;
    if (kind_ == SmoothAbsKind::quartic) {
        double k = kappa_;
        return 3 * y / (2 * k) - y * y * y / (2 * k * k * k);
    }
    double e = moll_eps_, c = 1 / (e * bump_mass());
    double below = integrate(-e, y, [&](double z) { return c * bump(z / e); });
    return 2 * below - 1;
}

double SmoothAbs::second_deriv(double y) const {
    double ay = std::abs(y);
    if (ay >= kappa_) return 0.0;
    if (kind_ == SmoothAbsKind::quartic) {
        double k = kappa_;
        return 3 / (2 * k) - 3 * y * y / (2 * k * k * k);
    }
    double e = moll_eps_;
    return 2 * bump(y / e) / (e * bump_mass());
}

// ---- decomposition --------------------------------------------------------------

DirectionalField decompose(const MatrixField& a, const SmoothAbs& psi) {
    // reject the worst structural violation first so the witness is stable
    double worst = 0;
    std::size_t worst_i = 0;
    std::string worst_kind;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Sym2& m = a.values[i];
        double scale = 1 + std::max({std::abs(m.a11), std::abs(m.a22), std::abs(m.a12)});
        auto consider = [&](double violation, const char* kind) {
            if (violation / scale > worst) {
                worst = violation / scale;
                worst_i = i;
                worst_kind = kind;
            }
        };
        consider(-m.a11, "negative a11");
        consider(-m.a22, "negative a22");
        consider(std::abs(m.a12) - std::min(m.a11, m.a22), "off-diagonal dominance");
    }
    if (worst > 1e-12) {
        const auto& p = a.points[worst_i];
        const Sym2& m = a.values[worst_i];
        throw BuildError("matrix field not decomposable: " + worst_kind + " at (" +
                         fmt_double(p[0]) + ", " + fmt_double(p[1]) + "), a11 = " +
                         fmt_double(m.a11) + ", a12 = " + fmt_double(m.a12) + ", a22 = " +
                         fmt_double(m.a22));
    }

    DirectionalField out;
    out.points = a.points;
    out.values.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Sym2& m = a.values[i];
        double s = std::min(m.a11, m.a22);
        double g = s == 0 ? 0.0 : m.a12 / s;  // dominance forces a12 = 0 with s = 0
        double hgt = s * psi(g);
        DirWeights& w = out.values[i];
        w.a12hat = 0.5 * (hgt + m.a12);
        w.a1m2hat = 0.5 * (hgt - m.a12);
        w.a11hat = 0.5 * (m.a11 - hgt);
        w.a22hat = 0.5 * (m.a22 - hgt);
    }
    return out;
}

MatrixField reconstruct(const DirectionalField& w) {
    MatrixField out;
    out.points = w.points;
    out.values.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const DirWeights& v = w.values[i];
        out.values[i].a11 = 2 * v.a11hat + v.a12hat + v.a1m2hat;
        out.values[i].a22 = 2 * v.a22hat + v.a12hat + v.a1m2hat;
        out.values[i].a12 = v.a12hat - v.a1m2hat;
    }
    return out;
}

Sym2 as_symmetric(double m11, double m12, double m21, double m22) {
    double scale = std::max({std::abs(m11), std::abs(m12), std::abs(m21), std::abs(m22)});
    if (std::abs(m12 - m21) > 1e-14 * scale)
        throw BuildError("matrix is not symmetric: m12 = " + fmt_double(m12) + ", m21 = " +
                         fmt_double(m21));
    return {m11, 0.5 * (m12 + m21), m22};
}

// ---- Lipschitz probe ------------------------------------------------------------

double LipschitzProbe::max() const {
    return std::max({a11hat, a22hat, a12hat, a1m2hat});
}

LipschitzProbe lipschitz_probe(const DirectionalField& w,
                               std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    auto root = [](double v, std::size_t i, const char* ch) {
        if (v < 0)
            throw BuildError(std::string("negative weight ") + ch + " at point " +
                             std::to_string(i));
        return std::sqrt(v);
    };
    LipschitzProbe out;
    for (const auto& [i, j] : pairs) {
        const auto& pi = w.points[i];
        const auto& pj = w.points[j];
        double dist = std::hypot(pi[0] - pj[0], pi[1] - pj[1]);
        if (dist == 0)
            throw BuildError("coincident points in probe pair (" + std::to_string(i) + ", " +
                             std::to_string(j) + ")");
        const DirWeights& a = w.values[i];
        const DirWeights& b = w.values[j];
        out.a11hat = std::max(out.a11hat,
                              std::abs(root(a.a11hat, i, "a11hat") - root(b.a11hat, j, "a11hat")) / dist);
        out.a22hat = std::max(out.a22hat,
                              std::abs(root(a.a22hat, i, "a22hat") - root(b.a22hat, j, "a22hat")) / dist);
        out.a12hat = std::max(out.a12hat,
                              std::abs(root(a.a12hat, i, "a12hat") - root(b.a12hat, j, "a12hat")) / dist);
        out.a1m2hat = std::max(out.a1m2hat,
                               std::abs(root(a.a1m2hat, i, "a1m2hat") - root(b.a1m2hat, j, "a1m2hat")) / dist);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> grid_neighbor_pairs(
    const std::vector<std::array<double, 2>>& points) {
    std::map<std::array<double, 2>, std::size_t> index;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < points.size(); ++i) {
        index[points[i]] = i;
        xs.push_back(points[i][0]);
        ys.push_back(points[i][1]);
    }
    auto uniq = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    uniq(xs);
    uniq(ys);
    auto next_of = [](const std::vector<double>& v, double x) -> std::optional<double> {
        auto it = std::upper_bound(v.begin(), v.end(), x);
        if (it == v.end()) return std::nullopt;
        return *it;
    };
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (auto nx = next_of(xs, points[i][0])) {
            auto it = index.find({*nx, points[i][1]});
            if (it != index.end()) out.emplace_back(i, it->second);
        }
        if (auto ny = next_of(ys, points[i][1])) {
            auto it = index.find({points[i][0], *ny});
            if (it != index.end()) out.emplace_back(i, it->second);
        }
    }
    return out;
}

// ---- CSV ---------------------------------------------------------------------

namespace {

std::vector<double> parse_row(const std::string& line, std::size_t want, std::size_t lineno,
                              const char* what) {
    std::istringstream ss(line);
    std::string tok;
    std::vector<double> out;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    if (out.size() != want)
        throw BuildError(std::string(what) + " csv: row " + std::to_string(lineno) + " has " +
                         std::to_string(out.size()) + " columns, expected " +
                         std::to_string(want));
    return out;
}

bool header_row(const std::string& line) {
    return !line.empty() && (std::isalpha(static_cast<unsigned char>(line[0])) != 0);
}

}  // namespace

MatrixField read_matrix_csv(std::istream& in) {
    MatrixField out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && header_row(line)) continue;
        auto v = parse_row(line, 5, lineno, "matrix");
        out.points.push_back({v[0], v[1]});
        out.values.push_back({v[2], v[3], v[4]});
    }
    return out;
}

void write_directional_csv(const DirectionalField& w, std::ostream& out) {
    out << "x0,x1,a11hat,a22hat,a12hat,a1m2hat\n";
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto& p = w.points[i];
        const auto& v = w.values[i];
        out << fmt_double(p[0]) << "," << fmt_double(p[1]) << "," << fmt_double(v.a11hat) << ","
            << fmt_double(v.a22hat) << "," << fmt_double(v.a12hat) << ","
            << fmt_double(v.a1m2hat) << "\n";
    }
}

DirectionalField read_directional_csv(std::istream& in) {
    DirectionalField out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && header_row(line)) continue;
        auto v = parse_row(line, 6, lineno, "directional");
        out.points.push_back({v[0], v[1]});
        out.values.push_back({v[2], v[3], v[4], v[5]});
    }
    return out;
}

}  // namespace bgrid
