#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bgrid {

/// Thrown when a construction precondition is violated (bad direction set,
/// off-lattice point, empty initial slice, ...). The message names the
/// offending input.
struct BuildError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown when a grid function is evaluated (directly or through a difference
/// operator) at a slot it does not cover.
struct OutsideSupport : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown by the solver for structural failures (missing boundary data,
/// non-monotone or singular per-level system). Non-convergence within the
/// iteration caps is *not* an exception; it is reported through SolveReport.
struct SolveError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Seeded generator used for every random choice in the project. One seed =>
/// one reproducible stream; nothing reads entropy from the environment.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

/// Number of worker threads to use: explicit request > BELLMAN_GRID_THREADS >
/// hardware concurrency. Always at least 1.
int resolve_thread_count(int requested);

/// Static-chunked parallel loop. `fn(i)` must be independent across i and
/// write only to per-i slots; under that contract results are bit-identical
/// for every thread count, so callers may treat this as a plain loop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// FNV-1a, used for container hashing and for config fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

/// a^+ and a^-: the nonnegative splitting a = a^+ - a^-, |a| = a^+ + a^-.
inline double pos_part(double a) { return a > 0 ? a : 0.0; }
inline double neg_part(double a) { return a < 0 ? -a : 0.0; }

/// max that treats "absent" as the identity; used when a maximand has no
/// admissible evaluation points.
inline void max_into(std::optional<double>& acc, double v) {
    if (!acc || v > *acc) acc = v;
}

}  // namespace bgrid
