#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bgrid/problem.hpp"

namespace bgrid {

/// A ready-to-run problem: coefficients, a direction-set factory (the step h
/// is chosen per run), default box extents, boundary/terminal data, and an
/// exact solution when one is known.
struct CatalogEntry {
    std::string name;
    std::string description;
    ControlProblem problem;
    /// Build the directions for a given spatial step.
    std::function<DirectionSet(double h)> directions;
    /// Physical box corners for the default domain.
    std::vector<double> box_lo, box_hi;
    /// Boundary/terminal data g(t, x).
    std::function<double(double, std::span<const double>)> data;
    /// Exact solution for convergence studies, when available.
    std::function<double(double, std::span<const double>)> exact;
    /// Assumptions this entry is expected to satisfy.
    std::vector<Assumption> expected_pass;
    /// Assumptions this entry is built to violate (seeded negatives).
    std::vector<Assumption> expected_fail;
};

/// Look up a built-in problem; errors on unknown names, listing what exists.
const CatalogEntry& catalog_get(const std::string& name);
std::vector<std::string> catalog_names();

/// Convert the entry's physical box to a canonical-coordinate DomainSpec for
/// a concrete direction set (corners must land on the base lattice).
DomainSpec default_box(const CatalogEntry& entry, const DirectionSet& dirs, int levels = 0);

// ---- tabulated problems -----------------------------------------------------

/// Coefficients read from CSV tables with rows
///   alpha,k,time_index,c0,...,c{dim-1},value
/// (alpha is the 0-based control index; k = 0 for r/c/f, 1..d1 for a, signed
/// for b; coordinates are canonical integers). Lookups are exact; a missing
/// key is a hard error naming the coefficient and the point. r ignores the
/// coordinates of its rows, f is f(t, x) only.
struct TabulatedSpec {
    int dim = 1;
    int d1 = 1;
    int num_controls = 1;
    double tau = 0;        // time step behind the time_index column
    double base_step = 0;  // physical length of one canonical coordinate unit
    Constants constants;
    std::string r_csv, a_csv, b_csv, c_csv, f_csv;  // file contents, not paths
};

ControlProblem make_tabulated(const TabulatedSpec& spec);

}  // namespace bgrid
