#include "bgrid/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "bgrid/catalog.hpp"
#include "bgrid/decomp2d.hpp"
#include "bgrid/estimates.hpp"
#include "bgrid/solver.hpp"

namespace bgrid {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- structural validation ---------------------------------------------------

using Err = std::optional<std::string>;

Err check_allowed(const json& o, const std::string& prefix, const std::set<std::string>& allowed) {
    for (auto it = o.begin(); it != o.end(); ++it)
        if (!allowed.count(it.key())) return "unknown field '" + prefix + it.key() + "'";
    return {};
}

Err need(const json& o, const std::string& prefix, const char* key) {
    if (!o.contains(key)) return "missing required field '" + prefix + key + "'";
    return {};
}

bool pos_num(const json& v) { return v.is_number() && v.get<double>() > 0; }
bool any_num(const json& v) { return v.is_number(); }
bool pos_int(const json& v) { return v.is_number_integer() && v.get<std::int64_t>() > 0; }
bool nonneg_int(const json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; }

Err field(const json& o, const std::string& prefix, const char* key, bool (*ok)(const json&),
          const char* what) {
    if (!o.contains(key)) return {};
    if (!ok(o.at(key))) return "field '" + prefix + key + "' must be " + what;
    return {};
}

bool num_array(const json& v) {
    if (!v.is_array() || v.empty()) return false;
    for (const auto& e : v)
        if (!e.is_number()) return false;
    return true;
}

bool pos_num_array(const json& v) {
    if (!num_array(v)) return false;
    for (const auto& e : v)
        if (!(e.get<double>() > 0)) return false;
    return true;
}

bool int_matrix(const json& v) {
    if (!v.is_array() || v.empty()) return false;
    for (const auto& row : v) {
        if (!row.is_array() || row.empty()) return false;
        for (const auto& e : row)
            if (!e.is_number_integer()) return false;
    }
    return true;
}

bool is_string(const json& v) { return v.is_string(); }
bool is_bool(const json& v) { return v.is_boolean(); }

Err validate_solver_block(const json& cfg) {
    if (!cfg.contains("solver")) return {};
    const json& s = cfg.at("solver");
    if (!s.is_object()) return "field 'solver' must be an object";
    if (auto e = check_allowed(s, "solver.",
                               {"tol", "max_outer", "max_picard", "max_inner_sweeps",
                                "inner_tol_factor", "inner", "outer", "damping"}))
        return e;
    if (auto e = field(s, "solver.", "tol", pos_num, "a positive number")) return e;
    if (auto e = field(s, "solver.", "max_outer", pos_int, "a positive integer")) return e;
    if (auto e = field(s, "solver.", "max_picard", pos_int, "a positive integer")) return e;
    if (auto e = field(s, "solver.", "max_inner_sweeps", pos_int, "a positive integer")) return e;
    if (auto e = field(s, "solver.", "inner_tol_factor", pos_num, "a positive number")) return e;
    if (auto e = field(s, "solver.", "damping", pos_num, "a positive number")) return e;
    if (s.contains("inner") &&
        (!s["inner"].is_string() || (s["inner"] != "gauss_seidel" && s["inner"] != "direct")))
        return "field 'solver.inner' must be \"gauss_seidel\" or \"direct\"";
    if (s.contains("outer") && (!s["outer"].is_string() ||
                                (s["outer"] != "policy_iteration" && s["outer"] != "value_iteration")))
        return "field 'solver.outer' must be \"policy_iteration\" or \"value_iteration\"";
    return {};
}

Err validate_problem_source(const json& cfg, bool needs_data) {
    const bool has_problem = cfg.contains("problem");
    const bool has_tab = cfg.contains("tabulated");
    if (has_problem == has_tab) return "exactly one of 'problem' and 'tabulated' is required";
    if (has_problem && !cfg.at("problem").is_string()) return "field 'problem' must be a string";

    if (has_tab) {
        const json& t = cfg.at("tabulated");
        if (!t.is_object()) return "field 'tabulated' must be an object";
        if (auto e = check_allowed(t, "tabulated.",
                                   {"dim", "d1", "num_controls", "tau", "base_step", "r_csv",
                                    "a_csv", "b_csv", "c_csv", "f_csv", "constants"}))
            return e;
        for (const char* k : {"dim", "d1", "num_controls"}) {
            if (auto e = need(t, "tabulated.", k)) return e;
            if (auto e = field(t, "tabulated.", k, pos_int, "a positive integer")) return e;
        }
        for (const char* k : {"tau", "base_step"}) {
            if (auto e = need(t, "tabulated.", k)) return e;
            if (auto e = field(t, "tabulated.", k, pos_num, "a positive number")) return e;
        }
        for (const char* k : {"r_csv", "a_csv", "b_csv", "c_csv", "f_csv"}) {
            if (auto e = need(t, "tabulated.", k)) return e;
            if (auto e = field(t, "tabulated.", k, is_string, "a file path string")) return e;
        }
        if (t.contains("constants")) {
            const json& c = t.at("constants");
            if (!c.is_object()) return "field 'tabulated.constants' must be an object";
            if (auto e = check_allowed(c, "tabulated.constants.",
                                       {"T", "h0", "delta", "K0", "K1", "K2", "K3", "m", "omega",
                                        "Cstruct"}))
                return e;
            for (auto it = c.begin(); it != c.end(); ++it)
                if (!it.value().is_number())
                    return "field 'tabulated.constants." + it.key() + "' must be a number";
        }

        if (auto e = need(cfg, "", "directions")) return e;
        const json& d = cfg.at("directions");
        if (!d.is_object()) return "field 'directions' must be an object";
        if (auto e = check_allowed(d, "directions.", {"ells", "extra", "subdivision"})) return e;
        if (auto e = need(d, "directions.", "ells")) return e;
        if (!int_matrix(d.at("ells")))
            return "field 'directions.ells' must be an array of integer vectors";
        if (auto e = field(d, "directions.", "subdivision", pos_int, "a positive integer"))
            return e;
        if (d.contains("extra")) {
            const json& x = d.at("extra");
            if (!x.is_object()) return "field 'directions.extra' must be an object";
            if (auto e = check_allowed(x, "directions.extra.", {"l", "eta"})) return e;
            if (auto e = need(x, "directions.extra.", "l")) return e;
            if (!x.at("l").is_array() || x.at("l").empty())
                return "field 'directions.extra.l' must be an integer vector";
            for (const auto& c : x.at("l"))
                if (!c.is_number_integer())
                    return "field 'directions.extra.l' must be an integer vector";
            if (auto e = need(x, "directions.extra.", "eta")) return e;
            if (auto e = field(x, "directions.extra.", "eta", pos_num, "a positive number"))
                return e;
        }

        for (const char* k : {"box_lo", "box_hi"})
            if (auto e = need(cfg, "", k)) return e;
        if (needs_data)
            if (auto e = need(cfg, "", "data_csv")) return e;
    } else {
        if (cfg.contains("directions"))
            return "field 'directions' is only used with 'tabulated' problems";
    }

    if (cfg.contains("box_lo") != cfg.contains("box_hi"))
        return "fields 'box_lo' and 'box_hi' must be given together";
    if (auto e = field(cfg, "", "box_lo", num_array, "an array of numbers")) return e;
    if (auto e = field(cfg, "", "box_hi", num_array, "an array of numbers")) return e;
    if (auto e = field(cfg, "", "levels", nonneg_int, "a non-negative integer")) return e;
    if (auto e = field(cfg, "", "T", pos_num, "a positive number")) return e;
    if (auto e = field(cfg, "", "data_csv", is_string, "a file path string")) return e;
    if (auto e = field(cfg, "", "elliptic", is_bool, "a boolean")) return e;
    return validate_solver_block(cfg);
}

Err validate_steps(const json& cfg, bool ladder, bool ladder_min3) {
    const bool elliptic = cfg.value("elliptic", false);
    if (ladder) {
        if (auto e = need(cfg, "", "h_ladder")) return e;
        if (!pos_num_array(cfg.at("h_ladder")))
            return "field 'h_ladder' must be a non-empty array of positive numbers";
        if (ladder_min3 && cfg.at("h_ladder").size() < 3)
            return "field 'h_ladder' needs at least three rungs";
    } else {
        if (auto e = need(cfg, "", "h")) return e;
        if (auto e = field(cfg, "", "h", pos_num, "a positive number")) return e;
    }
    const bool has_tau = cfg.contains("tau"), has_rel = cfg.contains("tau_over_h");
    if (elliptic) {
        if (has_tau || has_rel)
            return std::string("field '") + (has_tau ? "tau" : "tau_over_h") +
                   "' is not used when 'elliptic' is true";
        return {};
    }
    if (has_tau == has_rel) return "exactly one of 'tau' and 'tau_over_h' is required";
    if (auto e = field(cfg, "", "tau", pos_num, "a positive number")) return e;
    if (auto e = field(cfg, "", "tau_over_h", pos_num, "a positive number")) return e;
    return {};
}

Err validate_config(const json& cfg) {
    if (!cfg.is_object()) return "config root must be an object";
    if (auto e = need(cfg, "", "kind")) return e;
    if (!cfg.at("kind").is_string()) return "field 'kind' must be a string";
    const std::string kind = cfg.at("kind");
    if (cfg.contains("seed") && !nonneg_int(cfg.at("seed")))
        return "field 'seed' must be a non-negative integer";

    const std::set<std::string> problem_fields = {"problem",  "tabulated", "directions", "box_lo",
                                                  "box_hi",   "levels",    "T",          "data_csv",
                                                  "elliptic", "solver"};
    auto with = [&](std::set<std::string> extra) {
        extra.insert(problem_fields.begin(), problem_fields.end());
        extra.insert("kind");
        extra.insert("seed");
        return extra;
    };

    if (kind == "solve") {
        if (auto e = check_allowed(cfg, "", with({"h", "tau", "tau_over_h"}))) return e;
        if (auto e = validate_problem_source(cfg, /*needs_data=*/true)) return e;
        return validate_steps(cfg, false, false);
    }
    if (kind == "validate-assumptions") {
        if (auto e = check_allowed(cfg, "", with({"h", "tau", "tau_over_h", "assumptions",
                                                  "samples"})))
            return e;
        if (auto e = validate_problem_source(cfg, /*needs_data=*/false)) return e;
        if (auto e = validate_steps(cfg, false, false)) return e;
        if (cfg.contains("assumptions")) {
            const json& a = cfg.at("assumptions");
            if (!a.is_array() || a.empty())
                return "field 'assumptions' must be a non-empty array of assumption names";
            for (const auto& n : a) {
                if (!n.is_string() || !assumption_from_string(n.get<std::string>()))
                    return "field 'assumptions' holds an unknown assumption name " + n.dump();
            }
        }
        return field(cfg, "", "samples", pos_int, "a positive integer");
    }
    if (kind == "estimate-study") {
        if (auto e = check_allowed(cfg, "", with({"h_ladder", "tau", "tau_over_h", "estimate",
                                                  "validate", "samples", "lambda_margin"})))
            return e;
        if (auto e = validate_problem_source(cfg, /*needs_data=*/true)) return e;
        if (auto e = validate_steps(cfg, true, false)) return e;
        if (auto e = need(cfg, "", "estimate")) return e;
        if (!cfg.at("estimate").is_string() ||
            !estimate_kind_from_string(cfg.at("estimate").get<std::string>()))
            return "field 'estimate' must name an estimate kind (first_diff_extra, "
                   "first_diff_interior, second_diff, pure_second_diff)";
        if (auto e = field(cfg, "", "validate", is_bool, "a boolean")) return e;
        if (auto e = field(cfg, "", "samples", pos_int, "a positive integer")) return e;
        return field(cfg, "", "lambda_margin", any_num, "a number");
    }
    if (kind == "convergence") {
        if (auto e = check_allowed(cfg, "", with({"h_ladder", "tau", "tau_over_h", "reference"})))
            return e;
        if (auto e = validate_problem_source(cfg, /*needs_data=*/true)) return e;
        if (auto e = validate_steps(cfg, true, true)) return e;
        if (cfg.contains("reference") &&
            (!cfg.at("reference").is_string() ||
             (cfg.at("reference") != "exact" && cfg.at("reference") != "finest")))
            return "field 'reference' must be \"exact\" or \"finest\"";
        return {};
    }
    if (kind == "verify-identities") {
        if (auto e = check_allowed(cfg, "", {"kind", "seed", "trials", "dims", "kinked"}))
            return e;
        if (auto e = field(cfg, "", "trials", pos_int, "a positive integer")) return e;
        if (auto e = field(cfg, "", "kinked", is_bool, "a boolean")) return e;
        if (cfg.contains("dims")) {
            const json& d = cfg.at("dims");
            if (!d.is_array() || d.empty()) return "field 'dims' must be a non-empty array";
            for (const auto& e : d)
                if (!e.is_number_integer() || e.get<int>() < 1 || e.get<int>() > 3)
                    return "field 'dims' entries must be 1, 2 or 3";
        }
        return {};
    }
    if (kind == "decompose") {
        if (auto e = check_allowed(cfg, "", {"kind", "seed", "matrix_csv", "preset", "kappa",
                                             "smooth_abs"}))
            return e;
        const bool has_csv = cfg.contains("matrix_csv"), has_preset = cfg.contains("preset");
        if (has_csv == has_preset)
            return "exactly one of 'matrix_csv' and 'preset' is required";
        if (has_csv && !cfg.at("matrix_csv").is_string())
            return "field 'matrix_csv' must be a file path string";
        if (has_preset && (!cfg.at("preset").is_string() || cfg.at("preset") != "identity"))
            return "field 'preset' must be \"identity\"";
        if (auto e = field(cfg, "", "kappa", pos_num, "a positive number")) return e;
        if (cfg.contains("smooth_abs") &&
            (!cfg.at("smooth_abs").is_string() ||
             (cfg.at("smooth_abs") != "quartic" && cfg.at("smooth_abs") != "mollified")))
            return "field 'smooth_abs' must be \"quartic\" or \"mollified\"";
        return {};
    }
    return "field 'kind' must be one of solve, verify-identities, validate-assumptions, "
           "estimate-study, convergence, decompose";
}

// ---- runtime assembly ----------------------------------------------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BuildError("cannot read file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Everything the runners need, resolved from the config once.
struct Workbench {
    ControlProblem pr;
    std::function<DirectionSet(double)> directions;
    std::vector<double> box_lo, box_hi;                          // physical corners
    std::function<double(double, std::span<const double>)> data;  // closure source
    std::function<double(double, std::span<const double>)> exact; // may be empty
    std::string data_csv;   // file contents when data comes from a table
    bool elliptic = false;
    double T = 0;
    int levels = 0;
    std::optional<double> tabulated_tau;  // scheme tau is pinned to the table
};

Workbench make_workbench(const json& cfg) {
    Workbench wb;
    if (cfg.contains("problem")) {
        const CatalogEntry& e = catalog_get(cfg.at("problem").get<std::string>());
        wb.pr = e.problem;
        wb.directions = e.directions;
        wb.box_lo = e.box_lo;
        wb.box_hi = e.box_hi;
        wb.data = e.data;
        wb.exact = e.exact;
    } else {
        const json& t = cfg.at("tabulated");
        TabulatedSpec ts;
        ts.dim = t.at("dim").get<int>();
        ts.d1 = t.at("d1").get<int>();
        ts.num_controls = t.at("num_controls").get<int>();
        ts.tau = t.at("tau").get<double>();
        ts.base_step = t.at("base_step").get<double>();
        if (t.contains("constants")) {
            const json& c = t.at("constants");
            Constants& k = ts.constants;
            k.T = c.value("T", k.T);
            k.h0 = c.value("h0", k.h0);
            k.delta = c.value("delta", k.delta);
            k.K0 = c.value("K0", k.K0);
            k.K1 = c.value("K1", k.K1);
            k.K2 = c.value("K2", k.K2);
            k.K3 = c.value("K3", k.K3);
            k.m = c.value("m", k.m);
            k.omega = c.value("omega", k.omega);
            k.Cstruct = c.value("Cstruct", k.Cstruct);
        }
        ts.r_csv = slurp(t.at("r_csv"));
        ts.a_csv = slurp(t.at("a_csv"));
        ts.b_csv = slurp(t.at("b_csv"));
        ts.c_csv = slurp(t.at("c_csv"));
        ts.f_csv = slurp(t.at("f_csv"));
        wb.pr = make_tabulated(ts);
        wb.tabulated_tau = ts.tau;

        const json& d = cfg.at("directions");
        std::vector<std::vector<Coord>> ells;
        for (const auto& row : d.at("ells")) ells.push_back(row.get<std::vector<Coord>>());
        std::optional<std::pair<std::vector<Coord>, double>> extra;
        if (d.contains("extra"))
            extra = {d.at("extra").at("l").get<std::vector<Coord>>(),
                     d.at("extra").at("eta").get<double>()};
        int sub = d.value("subdivision", 1);
        const int dim = ts.dim;
        const double h0 = ts.constants.h0, base = ts.base_step;
        wb.directions = [dim, h0, base, ells, extra, sub](double h) {
            DirectionSet dirs = DirectionSet::make(dim, h, h0, ells, extra, sub);
            if (std::abs(dirs.base_step() - base) > 1e-12 * base)
                throw BuildError("field 'tabulated.base_step' = " + fmt_double(base) +
                                 " does not equal h / subdivision = " +
                                 fmt_double(dirs.base_step()));
            return dirs;
        };
    }

    if (cfg.contains("box_lo")) {
        wb.box_lo = cfg.at("box_lo").get<std::vector<double>>();
        wb.box_hi = cfg.at("box_hi").get<std::vector<double>>();
    }
    if (wb.box_lo.size() != static_cast<std::size_t>(wb.pr.dim))
        throw BuildError("field 'box_lo' must have one entry per dimension (" +
                         std::to_string(wb.pr.dim) + ")");
    wb.elliptic = cfg.value("elliptic", false);
    wb.T = cfg.value("T", wb.pr.constants.T);
    wb.levels = cfg.value("levels", 0);
    if (cfg.contains("data_csv")) wb.data_csv = slurp(cfg.at("data_csv"));
    return wb;
}

DomainSpec physical_box(const Workbench& wb, const DirectionSet& dirs) {
    const double g = dirs.base_step();
    auto convert = [&](const std::vector<double>& xs, const char* name) {
        std::vector<Coord> out;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            Coord c = static_cast<Coord>(std::llround(xs[i] / g));
            if (std::abs(static_cast<double>(c) * g - xs[i]) > 1e-9 * (1 + std::abs(xs[i])))
                throw BuildError("field '" + std::string(name) + "[" + std::to_string(i) +
                                 "]' = " + fmt_double(xs[i]) +
                                 " is not on the step lattice (base step " + fmt_double(g) + ")");
            out.push_back(c);
        }
        return out;
    };
    return DomainSpec::make_box(convert(wb.box_lo, "box_lo"), convert(wb.box_hi, "box_hi"),
                                wb.levels);
}

double tau_of(const json& cfg, double h) {
    if (cfg.contains("tau")) return cfg.at("tau").get<double>();
    return cfg.at("tau_over_h").get<double>() * h;
}

std::shared_ptr<const StencilDomain> make_domain(const Workbench& wb, double h, double tau) {
    DirectionSet dirs = wb.directions(h);
    DomainSpec spec = physical_box(wb, dirs);
    if (wb.elliptic) return elliptic_domain(std::move(dirs), spec);
    if (wb.tabulated_tau && std::abs(tau - *wb.tabulated_tau) > 1e-12 * *wb.tabulated_tau)
        throw BuildError("field 'tau' must equal the tabulated time step " +
                         fmt_double(*wb.tabulated_tau));
    return StencilDomain::build(std::move(dirs), TimeGrid::make(tau, wb.T), spec);
}

GridFunction make_data(const std::shared_ptr<const StencilDomain>& dom, const Workbench& wb) {
    if (!wb.data_csv.empty()) {
        std::istringstream is(wb.data_csv);
        return read_csv(dom, is);
    }
    if (wb.data) return GridFunction::sample(dom, wb.data);
    throw BuildError("field 'data_csv' is required: the problem has no built-in data");
}

SolveConfig solver_config(const json& cfg, int threads) {
    SolveConfig sc;
    sc.threads = threads;
    if (!cfg.contains("solver")) return sc;
    const json& s = cfg.at("solver");
    sc.tol = s.value("tol", sc.tol);
    sc.max_outer = s.value("max_outer", sc.max_outer);
    sc.max_picard = s.value("max_picard", sc.max_picard);
    sc.max_inner_sweeps = s.value("max_inner_sweeps", sc.max_inner_sweeps);
    sc.inner_tol_factor = s.value("inner_tol_factor", sc.inner_tol_factor);
    sc.damping = s.value("damping", sc.damping);
    if (s.value("inner", "") == std::string("direct")) sc.inner = InnerSolve::direct;
    if (s.value("outer", "") == std::string("value_iteration"))
        sc.outer = OuterMethod::value_iteration;
    return sc;
}

/// Sup-norm error against a reference closure; terminal slots are skipped for
/// stationary runs (their horizon slice is inert fill).
double sup_error(const GridFunction& u,
                 const std::function<double(double, std::span<const double>)>& exact,
                 bool skip_terminal) {
    const StencilDomain& dom = *u.domain();
    double worst = 0;
    for (const auto& lv : dom.levels()) {
        if (skip_terminal && lv.key.terminal) continue;
        for (std::int32_t pid : lv.pids) {
            std::int32_t s = dom.slot(static_cast<int>(&lv - dom.levels().data()), pid);
            if (!u.defined(s)) continue;
            auto x = dom.coords(pid);
            worst = std::max(worst, std::abs(u[s] - exact(lv.t, x)));
        }
    }
    return worst;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw BuildError("cannot write '" + p.string() + "'");
    out << text;
}

void write_json_file(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json solve_report_json(const SolveReport& sol) {
    json levels = json::array();
    for (const auto& lv : sol.levels)
        levels.push_back({{"level", lv.level},
                          {"outer_iterations", lv.outer_iterations},
                          {"picard_iterations", lv.picard_iterations},
                          {"inner_sweeps", lv.inner_sweeps},
                          {"residual", lv.residual}});
    return {{"converged", sol.converged}, {"monotone", sol.monotone},
            {"max_residual", sol.max_residual}, {"lambda", sol.lambda},
            {"message", sol.message}, {"levels", levels}};
}

// ---- runners -------------------------------------------------------------------

int run_solve(const json& cfg, const RunOptions& opt, json& rep) {
    Workbench wb = make_workbench(cfg);
    const double h = cfg.at("h").get<double>();
    const double tau = wb.elliptic ? 1.0 : tau_of(cfg, h);
    auto dom = make_domain(wb, h, tau);
    GridFunction data = make_data(dom, wb);
    SolveConfig sc = solver_config(cfg, opt.threads);
    SolveReport sol = wb.elliptic ? solve_elliptic(wb.pr, dom, data, sc)
                                  : solve_parabolic(wb.pr, dom, data, sc);

    rep = solve_report_json(sol);
    rep["kind"] = "solve";
    rep["problem"] = wb.pr.name;
    rep["h"] = h;
    rep["tau"] = wb.elliptic ? json(nullptr) : json(tau);
    rep["num_slots"] = dom->num_slots();
    rep["num_equation_points"] = static_cast<std::int64_t>(dom->count_Qo1());
    if (wb.exact) rep["sup_error"] = sup_error(sol.u, wb.exact, wb.elliptic);

    std::ostringstream csv;
    write_csv(sol.u, csv);
    write_text(opt.out_dir / "solution.csv", csv.str());
    if (!opt.quiet)
        std::cout << "solve " << wb.pr.name << ": " << (sol.converged ? "converged" : "FAILED")
                  << ", residual " << fmt_double(sol.max_residual) << "\n";
    return sol.converged ? exit_ok : exit_no_convergence;
}

int run_validate(const json& cfg, const RunOptions& opt, json& rep) {
    Workbench wb = make_workbench(cfg);
    const double h = cfg.at("h").get<double>();
    const double tau = wb.elliptic ? 1.0 : tau_of(cfg, h);
    auto dom = make_domain(wb, h, tau);

    std::vector<Assumption> which = all_assumptions();
    if (cfg.contains("assumptions")) {
        which.clear();
        for (const auto& n : cfg.at("assumptions"))
            which.push_back(*assumption_from_string(n.get<std::string>()));
    }
    ValidateOptions vo;
    vo.samples = cfg.value("samples", vo.samples);
    vo.seed = opt.seed;
    vo.threads = opt.threads;
    ValidationReport vr = validate_assumptions(wb.pr, *dom, which, vo);

    json checks = json::array();
    for (const auto& c : vr.checks)
        checks.push_back({{"name", to_string(c.id)}, {"applicable", c.applicable},
                          {"passed", c.passed}, {"sampled", c.sampled}, {"margin", c.margin},
                          {"witness", c.witness}});
    rep = {{"kind", "validate-assumptions"}, {"problem", wb.pr.name}, {"h", h},
           {"samples", vo.samples}, {"checks", checks}, {"all_passed", vr.all_passed()}};
    if (!opt.quiet)
        std::cout << "validate-assumptions " << wb.pr.name << ": "
                  << (vr.all_passed() ? "all passed" : "FAILED") << "\n";
    return vr.all_passed() ? exit_ok : exit_assumptions_failed;
}

int run_estimate_study(const json& cfg, const RunOptions& opt, json& rep) {
    Workbench wb = make_workbench(cfg);
    EstimateKind kind = *estimate_kind_from_string(cfg.at("estimate").get<std::string>());
    const double lambda_margin = cfg.value("lambda_margin", 0.0);

    EstimateOptions eo;
    eo.validate = cfg.value("validate", true);
    eo.samples = cfg.value("samples", eo.samples);
    eo.seed = opt.seed;
    eo.threads = opt.threads;

    StudyResult study;
    json rungs = json::array();
    for (const auto& hj : cfg.at("h_ladder")) {
        const double h = hj.get<double>();
        const double tau = wb.elliptic ? 1.0 : tau_of(cfg, h);
        auto dom = make_domain(wb, h, tau);
        GridFunction data = make_data(dom, wb);
        SolveConfig sc = solver_config(cfg, opt.threads);
        SolveReport sol = wb.elliptic ? solve_elliptic(wb.pr, dom, data, sc)
                                      : solve_parabolic(wb.pr, dom, data, sc);
        study.all_solves_converged = study.all_solves_converged && sol.converged;

        EstimateReport er = estimate_ratio(kind, sol.u, wb.pr, eo);
        StudyRow row;
        row.h = h;
        if (wb.exact) row.error = sup_error(sol.u, wb.exact, wb.elliptic);
        row.lhs = er.lhs;
        row.rhs = er.rhs;
        row.ratio = er.ratio;
        study.rows.push_back(row);

        rungs.push_back({{"h", h}, {"tau", wb.elliptic ? json(nullptr) : json(tau)},
                         {"converged", sol.converged}, {"lambda", er.lambda},
                         {"lambda_margin_met", er.lambda >= lambda_margin},
                         {"lhs", opt_json(er.lhs)}, {"rhs", opt_json(er.rhs)},
                         {"ratio", opt_json(er.ratio)}, {"lhs2", opt_json(er.lhs2)},
                         {"rhs2", opt_json(er.rhs2)}, {"ratio2", opt_json(er.ratio2)},
                         {"error", opt_json(row.error)},
                         {"assumptions_checked", er.assumptions_checked},
                         {"assumptions_met", er.assumptions_met}, {"notes", er.notes}});
    }
    std::vector<double> hs, errs;
    for (const auto& row : study.rows)
        if (row.error) {
            hs.push_back(row.h);
            errs.push_back(*row.error);
        }
    study.fitted_rate = fit_rate(hs, errs);

    std::optional<double> max_ratio;
    for (const auto& row : study.rows)
        if (row.ratio) max_into(max_ratio, *row.ratio);

    rep = {{"kind", "estimate-study"}, {"problem", wb.pr.name},
           {"estimate", to_string(kind)}, {"lambda_margin", lambda_margin},
           {"validate", eo.validate}, {"rungs", rungs},
           {"max_ratio", opt_json(max_ratio)}, {"fitted_rate", opt_json(study.fitted_rate)},
           {"all_solves_converged", study.all_solves_converged}};

    std::ostringstream csv;
    write_rate_csv(study, csv);
    write_text(opt.out_dir / "rate.csv", csv.str());
    if (!opt.quiet)
        std::cout << "estimate-study " << wb.pr.name << " (" << to_string(kind) << "): "
                  << study.rows.size() << " rungs, max ratio "
                  << (max_ratio ? fmt_double(*max_ratio) : "n/a") << "\n";
    return study.all_solves_converged ? exit_ok : exit_no_convergence;
}

int run_convergence(const json& cfg, const RunOptions& opt, json& rep) {
    Workbench wb = make_workbench(cfg);
    const std::string reference = cfg.value("reference", "exact");
    if (reference == "exact" && !wb.exact)
        throw BuildError("field 'reference': problem '" + wb.pr.name +
                         "' has no exact solution; use \"finest\"");

    struct Rung {
        double h = 0, tau = 0;
        std::shared_ptr<const StencilDomain> dom;
        SolveReport sol;
    };
    std::vector<Rung> rungs;
    bool all_conv = true;
    for (const auto& hj : cfg.at("h_ladder")) {
        Rung r;
        r.h = hj.get<double>();
        r.tau = wb.elliptic ? 1.0 : tau_of(cfg, r.h);
        r.dom = make_domain(wb, r.h, r.tau);
        GridFunction data = make_data(r.dom, wb);
        SolveConfig sc = solver_config(cfg, opt.threads);
        r.sol = wb.elliptic ? solve_elliptic(wb.pr, r.dom, data, sc)
                            : solve_parabolic(wb.pr, r.dom, data, sc);
        all_conv = all_conv && r.sol.converged;
        rungs.push_back(std::move(r));
    }

    std::size_t ref_idx = 0;
    for (std::size_t i = 1; i < rungs.size(); ++i)
        if (rungs[i].h < rungs[ref_idx].h) ref_idx = i;

    StudyResult study;
    json jr = json::array();
    for (std::size_t i = 0; i < rungs.size(); ++i) {
        const Rung& r = rungs[i];
        StudyRow row;
        row.h = r.h;
        if (reference == "exact") {
            row.error = sup_error(r.sol.u, wb.exact, wb.elliptic);
        } else if (i != ref_idx) {
            // compare on the shared initial slice; rung lattices must nest
            const Rung& f = rungs[ref_idx];
            const double gc = r.dom->dirs().base_step(), gf = f.dom->dirs().base_step();
            const auto scale = static_cast<Coord>(std::llround(gc / gf));
            if (std::abs(scale * gf - gc) > 1e-12 * gc)
                throw BuildError("field 'h_ladder': rung h = " + fmt_double(r.h) +
                                 " does not nest in the reference h = " + fmt_double(f.h));
            double worst = 0;
            for (std::int32_t s : r.dom->initial_slots()) {
                Point p = r.dom->point(r.dom->unslot(s).second);
                for (auto& c : p) c *= scale;
                std::int32_t fs = f.dom->slot(TimeKey::level(0), p);
                if (fs < 0)
                    throw BuildError("field 'h_ladder': grids do not align at h = " +
                                     fmt_double(r.h));
                worst = std::max(worst, std::abs(r.sol.u[s] - f.sol.u[fs]));
            }
            row.error = worst;
        }
        study.rows.push_back(row);
        jr.push_back({{"h", r.h}, {"tau", wb.elliptic ? json(nullptr) : json(r.tau)},
                      {"error", opt_json(row.error)}, {"converged", r.sol.converged},
                      {"max_residual", r.sol.max_residual}});
    }
    std::vector<double> hs, errs;
    for (const auto& row : study.rows)
        if (row.error) {
            hs.push_back(row.h);
            errs.push_back(*row.error);
        }
    study.fitted_rate = fit_rate(hs, errs);
    study.all_solves_converged = all_conv;

    rep = {{"kind", "convergence"}, {"problem", wb.pr.name}, {"reference", reference},
           {"rungs", jr}, {"fitted_rate", opt_json(study.fitted_rate)},
           {"all_solves_converged", all_conv}};

    std::ostringstream csv;
    write_rate_csv(study, csv);
    write_text(opt.out_dir / "rate.csv", csv.str());
    if (!opt.quiet)
        std::cout << "convergence " << wb.pr.name << ": fitted rate "
                  << (study.fitted_rate ? fmt_double(*study.fitted_rate) : "n/a") << "\n";
    return all_conv ? exit_ok : exit_no_convergence;
}

ScalarFn random_smooth(Rng& rng, int dim) {
    struct Wave {
        double amp, phase;
        std::vector<double> k;
    };
    double c0 = uniform(rng, -1, 1);
    std::vector<Wave> waves(3);
    for (auto& w : waves) {
        w.amp = uniform(rng, -1, 1);
        w.phase = uniform(rng, 0, 6.283185307179586);
        for (int i = 0; i < dim; ++i) w.k.push_back(uniform(rng, -2, 2));
    }
    return [c0, waves](std::span<const double> x) {
        double s = c0;
        for (const auto& w : waves) {
            double arg = w.phase;
            for (std::size_t i = 0; i < x.size(); ++i) arg += w.k[i] * x[i];
            s += w.amp * std::sin(arg);
        }
        return s;
    };
}

ScalarFn random_kinked(Rng& rng, int dim) {
    ScalarFn base = random_smooth(rng, dim);
    std::vector<double> v;
    for (int i = 0; i < dim; ++i) v.push_back(uniform(rng, -1, 1));
    double shift = uniform(rng, -0.5, 0.5), amp = uniform(rng, 0.2, 1.0);
    return [base, v, shift, amp](std::span<const double> x) {
        double dot = -shift;
        for (std::size_t i = 0; i < x.size(); ++i) dot += v[i] * x[i];
        return base(x) + amp * std::abs(dot);
    };
}

int run_identities(const json& cfg, const RunOptions& opt, json& rep) {
    const int trials = cfg.value("trials", 100);
    const bool kinked = cfg.value("kinked", true);
    std::vector<int> dims = {1, 2, 3};
    if (cfg.contains("dims")) dims = cfg.at("dims").get<std::vector<int>>();

    Rng rng(opt.seed);
    double w_shift = 0, w_sym = 0, w_mixed = 0, w_lap = 0, w_sq = 0;
    double min_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        int dim = dims[t % dims.size()];
        ScalarFn a = random_smooth(rng, dim);
        ScalarFn psi = (kinked && t % 2) ? random_kinked(rng, dim) : random_smooth(rng, dim);
        double nu = uniform(rng, 0.02, 1.0);
        std::vector<double> l1, l2;
        for (int i = 0; i < dim; ++i) {
            l1.push_back(uniform(rng, -1.5, 1.5));
            l2.push_back(uniform(rng, -1.5, 1.5));
        }
        std::vector<std::vector<double>> points(8);
        for (auto& p : points)
            for (int i = 0; i < dim; ++i) p.push_back(uniform(rng, -2, 2));

        IdentityReport r = verify_identities(a, psi, nu, l1, l2, points);
        w_shift = std::max(w_shift, r.product_shift / r.scale);
        w_sym = std::max(w_sym, r.product_symmetric / r.scale);
        w_mixed = std::max(w_mixed, r.product_mixed / r.scale);
        w_lap = std::max(w_lap, r.product_laplace / r.scale);
        w_sq = std::max(w_sq, r.square_laplace / r.scale);
        min_slack = std::min(min_slack, r.comparison_slack / r.scale);
    }

    rep = {{"kind", "verify-identities"}, {"trials", trials}, {"dims", dims}, {"kinked", kinked},
           {"worst_relative",
            {{"product_shift", w_shift}, {"product_symmetric", w_sym}, {"product_mixed", w_mixed},
             {"product_laplace", w_lap}, {"square_laplace", w_sq}}},
           {"min_comparison_slack_relative", min_slack}};
    if (!opt.quiet)
        std::cout << "verify-identities: " << trials << " trials, worst residual "
                  << fmt_double(std::max({w_shift, w_sym, w_mixed, w_lap, w_sq})) << "\n";
    return exit_ok;
}

int run_decompose(const json& cfg, const RunOptions& opt, json& rep) {
    MatrixField field;
    if (cfg.contains("preset")) {
        field.points = {{0.0, 0.0}};
        field.values = {Sym2{1.0, 0.0, 1.0}};
    } else {
        std::istringstream is(slurp(cfg.at("matrix_csv")));
        field = read_matrix_csv(is);
    }
    SmoothAbs psi(cfg.value("kappa", 1.0 / 3.0),
                  cfg.value("smooth_abs", "quartic") == std::string("mollified")
                      ? SmoothAbsKind::mollified
                      : SmoothAbsKind::quartic);
    DirectionalField w = decompose(field, psi);
    MatrixField back = reconstruct(w);

    double worst = 0, min_weight = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < field.size(); ++i) {
        worst = std::max({worst, std::abs(back.values[i].a11 - field.values[i].a11),
                          std::abs(back.values[i].a12 - field.values[i].a12),
                          std::abs(back.values[i].a22 - field.values[i].a22)});
        min_weight = std::min({min_weight, w.values[i].a11hat, w.values[i].a22hat,
                               w.values[i].a12hat, w.values[i].a1m2hat});
    }

    json lip = nullptr;
    auto pairs = grid_neighbor_pairs(field.points);
    if (!pairs.empty()) {
        LipschitzProbe p = lipschitz_probe(w, pairs);
        lip = {{"a11hat", p.a11hat}, {"a22hat", p.a22hat}, {"a12hat", p.a12hat},
               {"a1m2hat", p.a1m2hat}, {"max", p.max()}};
    }

    rep = {{"kind", "decompose"}, {"points", field.size()},
           {"smooth_abs", cfg.value("smooth_abs", "quartic")},
           {"kappa", cfg.value("kappa", 1.0 / 3.0)}, {"max_reconstruction_error", worst},
           {"min_weight", min_weight}, {"lipschitz", lip}};

    std::ostringstream csv;
    write_directional_csv(w, csv);
    write_text(opt.out_dir / "directional.csv", csv.str());
    if (!opt.quiet)
        std::cout << "decompose: " << field.size() << " points, reconstruction error "
                  << fmt_double(worst) << "\n";
    return exit_ok;
}

}  // namespace

std::expected<nlohmann::json, std::string> parse_config(const std::string& text) {
    using R = std::expected<nlohmann::json, std::string>;
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) return R(std::unexpect, "config is not valid json");
    if (auto err = validate_config(j)) return R(std::unexpect, std::move(*err));
    return j;
}

int run_experiment(const nlohmann::json& config, const RunOptions& options) {
    RunOptions opt = options;
    opt.threads = resolve_thread_count(opt.threads);
    try {
        fs::create_directories(opt.out_dir);

        char hex[20];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a(config.dump())));
        json manifest = {{"tool", kToolName}, {"version", kToolVersion},
                         {"schema_version", kSchemaVersion}, {"kind", config.at("kind")},
                         {"config_hash", hex}, {"seed", opt.seed}};
        write_json_file(opt.out_dir / "manifest.json", manifest);

        const std::string kind = config.at("kind");
        json rep;
        int code = 0;
        if (kind == "solve") code = run_solve(config, opt, rep);
        else if (kind == "validate-assumptions") code = run_validate(config, opt, rep);
        else if (kind == "estimate-study") code = run_estimate_study(config, opt, rep);
        else if (kind == "convergence") code = run_convergence(config, opt, rep);
        else if (kind == "verify-identities") code = run_identities(config, opt, rep);
        else code = run_decompose(config, opt, rep);

        rep["schema_version"] = kSchemaVersion;
        write_json_file(opt.out_dir / "report.json", rep);
        return code;
    } catch (const SolveError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return exit_no_convergence;
    } catch (const BuildError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_bad_config;
    }
}

}  // namespace bgrid
