#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scalecalc/expr.hpp"
#include "scalecalc/variational.hpp"

namespace scalecalc::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Deterministic JSON output
// ---------------------------------------------------------------------------

/// Fixed 17-significant-digit rendering so identical inputs give
/// byte-identical output files regardless of locale or library version.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    // force a '.' or exponent so the value round-trips as a float
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

namespace detail {

inline void dump_node(const json& j, std::string& out, int depth) {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    const std::string pad1(static_cast<std::size_t>(depth + 1) * 2, ' ');
    switch (j.type()) {
        case json::value_t::null: out += "null"; break;
        case json::value_t::boolean: out += j.get<bool>() ? "true" : "false"; break;
        case json::value_t::number_integer:
            out += std::to_string(j.get<long long>());
            break;
        case json::value_t::number_unsigned:
            out += std::to_string(j.get<unsigned long long>());
            break;
        case json::value_t::number_float: out += format_double(j.get<double>()); break;
        case json::value_t::string: out += json(j.get<std::string>()).dump(); break;
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                break;
            }
            out += "[\n";
            for (std::size_t k = 0; k < j.size(); ++k) {
                out += pad1;
                dump_node(j[k], out, depth + 1);
                if (k + 1 < j.size()) out += ",";
                out += "\n";
            }
            out += pad + "]";
            break;
        }
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                break;
            }
            out += "{\n";
            std::size_t k = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++k) {
                out += pad1 + json(it.key()).dump() + ": ";
                dump_node(it.value(), out, depth + 1);
                if (k + 1 < j.size()) out += ",";
                out += "\n";
            }
            out += pad + "}";
            break;
        }
        default: out += "null"; break;
    }
}

} // namespace detail

inline std::string dump_json(const json& j) {
    std::string out;
    detail::dump_node(j, out, 0);
    out += "\n";
    return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw Error("write to '" + path + "' failed");
}

inline json complex_json(cplx z) {
    return json{{"re", z.real()}, {"im", z.imag()}};
}

// ---------------------------------------------------------------------------
// Problem files
// ---------------------------------------------------------------------------

/// Geometric grid-refinement request: steps h0 * ratio^k for k = 0..rungs-1.
struct GridLadder {
    double h0;
    double ratio;
    int rungs;

    std::vector<double> steps() const {
        std::vector<double> s(static_cast<std::size_t>(rungs));
        for (int k = 0; k < rungs; ++k) s[static_cast<std::size_t>(k)] = h0 * std::pow(ratio, k);
        return s;
    }
};

/// A parsed problem file: everything needed to build VariationalProblem
/// instances at one or several grid steps.
struct ProblemSpec {
    std::string lagrangian_src;
    Expr lagrangian;
    int order = 1;
    double a = 0.0, b = 1.0;
    Regime regime;
    double h = 0.0;                     ///< plain step (finest rung when a ladder is given)
    std::optional<GridLadder> ladder;
    std::pair<double, double> t_scan;
    Tolerances tol;

    VariationalProblem make_problem(std::optional<double> h_override = {}) const {
        return VariationalProblem(lagrangian, order, a, b, regime, h_override.value_or(h), t_scan,
                                  tol);
    }
};

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(where + ": missing required field '" + key + "'");
    return *it;
}

inline double require_number(const json& j, const char* key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number()) throw SchemaError(where + "." + key + ": expected a number");
    return v.get<double>();
}

inline cplx number_or_pair(const json& v, const std::string& where) {
    if (v.is_number()) return cplx(v.get<double>(), 0.0);
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
        return cplx(v[0].get<double>(), v[1].get<double>());
    throw SchemaError(where + ": expected a number or a [re, im] pair");
}

} // namespace detail

inline ProblemSpec parse_problem(const json& j) {
    if (!j.is_object()) throw SchemaError("problem: top-level value must be an object");
    ProblemSpec spec;

    const json& lag = detail::require(j, "lagrangian", "problem");
    if (!lag.is_string()) throw SchemaError("problem.lagrangian: expected a string");
    spec.lagrangian_src = lag.get<std::string>();

    const json& ord = detail::require(j, "order", "problem");
    if (!ord.is_number_integer() || ord.get<long long>() < 1)
        throw SchemaError("problem.order: expected an integer >= 1");
    spec.order = static_cast<int>(ord.get<long long>());

    try {
        spec.lagrangian = parse_expr(spec.lagrangian_src, spec.order);
    } catch (const SyntaxError& e) {
        throw SchemaError(std::string("problem.lagrangian: ") + e.what());
    } catch (const Error& e) {
        throw SchemaError(std::string("problem.lagrangian: ") + e.what());
    }

    const json& iv = detail::require(j, "interval", "problem");
    if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number())
        throw SchemaError("problem.interval: expected [a, b] with two numbers");
    spec.a = iv[0].get<double>();
    spec.b = iv[1].get<double>();
    if (!(spec.a < spec.b)) throw SchemaError("problem.interval: requires a < b");

    const json& rg = detail::require(j, "regime", "problem");
    if (!rg.is_object()) throw SchemaError("problem.regime: expected an object");
    const json& ty = detail::require(rg, "type", "problem.regime");
    if (!ty.is_string()) throw SchemaError("problem.regime.type: expected a string");
    const std::string type = ty.get<std::string>();
    const std::string where = "problem.regime";
    if (type == "A") {
        spec.regime = RegimeA{detail::require_number(rg, "y_a", where)};
    } else if (type == "B") {
        spec.regime = RegimeB{};
    } else if (type == "C") {
        spec.regime = RegimeC{detail::require_number(rg, "y_a", where),
                              detail::require_number(rg, "y_T", where)};
    } else if (type == "D") {
        const json& ps = detail::require(rg, "psi", where);
        if (!ps.is_string()) throw SchemaError(where + ".psi: expected a string expression");
        Expr psi;
        try {
            psi = parse_expr(ps.get<std::string>(), spec.order);
        } catch (const Error& e) {
            throw SchemaError(where + ".psi: " + e.what());
        }
        spec.regime = RegimeD{detail::require_number(rg, "y_a", where), std::move(psi)};
    } else if (type == "fixedT") {
        const double T = detail::require_number(rg, "T", where);
        if (rg.contains("y_T")) {
            spec.regime = RegimeFixedT_C{T, detail::require_number(rg, "y_a", where),
                                         detail::require_number(rg, "y_T", where)};
        } else {
            std::optional<double> y_a;
            if (rg.contains("y_a")) y_a = detail::require_number(rg, "y_a", where);
            spec.regime = RegimeFixedT_AB{T, y_a};
        }
    } else if (type == "higher") {
        RegimeHigherOrder ho;
        ho.y_a = detail::require_number(rg, "y_a", where);
        const json& da = detail::require(rg, "derivs_a", where);
        if (!da.is_array()) throw SchemaError(where + ".derivs_a: expected an array");
        for (std::size_t k = 0; k < da.size(); ++k)
            ho.derivs_a.push_back(detail::number_or_pair(
                da[k], where + ".derivs_a[" + std::to_string(k) + "]"));
        if (static_cast<int>(ho.derivs_a.size()) != spec.order - 1)
            throw SchemaError(where + ".derivs_a: expected exactly " +
                              std::to_string(spec.order - 1) + " entries for order " +
                              std::to_string(spec.order));
        spec.regime = std::move(ho);
    } else {
        throw SchemaError("problem.regime.type: unknown regime '" + type +
                          "' (expected A, B, C, D, fixedT or higher)");
    }

    const json& gr = detail::require(j, "grid", "problem");
    if (!gr.is_object()) throw SchemaError("problem.grid: expected an object");
    if (gr.contains("h")) {
        if (!gr["h"].is_number() || !(gr["h"].get<double>() > 0.0))
            throw SchemaError("problem.grid.h: expected a positive number");
        spec.h = gr["h"].get<double>();
    } else if (gr.contains("ladder")) {
        const json& ld = gr["ladder"];
        if (!ld.is_object()) throw SchemaError("problem.grid.ladder: expected an object");
        GridLadder lad{detail::require_number(ld, "h0", "problem.grid.ladder"),
                       detail::require_number(ld, "ratio", "problem.grid.ladder"), 0};
        const json& ru = detail::require(ld, "rungs", "problem.grid.ladder");
        if (!ru.is_number_integer() || ru.get<long long>() < 1)
            throw SchemaError("problem.grid.ladder.rungs: expected an integer >= 1");
        lad.rungs = static_cast<int>(ru.get<long long>());
        if (!(lad.h0 > 0.0)) throw SchemaError("problem.grid.ladder.h0: must be positive");
        if (!(lad.ratio > 0.0) || lad.ratio >= 1.0)
            throw SchemaError("problem.grid.ladder.ratio: must lie in (0,1)");
        spec.ladder = lad;
        spec.h = lad.steps().back();
    } else {
        throw SchemaError("problem.grid: needs either 'h' or 'ladder'");
    }

    if (j.contains("t_scan")) {
        const json& ts = j["t_scan"];
        if (!ts.is_array() || ts.size() != 2 || !ts[0].is_number() || !ts[1].is_number())
            throw SchemaError("problem.t_scan: expected [lo, hi] with two numbers");
        spec.t_scan = {ts[0].get<double>(), ts[1].get<double>()};
    } else {
        spec.t_scan = {spec.a, spec.b};
    }

    if (j.contains("tolerances")) {
        const json& tl = j["tolerances"];
        if (!tl.is_object()) throw SchemaError("problem.tolerances: expected an object");
        if (tl.contains("residual"))
            spec.tol.residual = detail::require_number(tl, "residual", "problem.tolerances");
        if (tl.contains("newton_step"))
            spec.tol.newton_step = detail::require_number(tl, "newton_step", "problem.tolerances");
    }

    // validate grid/regime compatibility eagerly so schema errors surface
    // before any solve starts
    try {
        (void)spec.make_problem();
    } catch (const SchemaError&) {
        throw;
    } catch (const Error& e) {
        throw SchemaError(std::string("problem: ") + e.what());
    }
    return spec;
}

inline ProblemSpec load_problem(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SchemaError("cannot open problem file '" + path + "'");
    json j;
    try {
        j = json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("problem file '" + path + "': " + e.what());
    }
    return parse_problem(j);
}

// ---------------------------------------------------------------------------
// Residual reports
// ---------------------------------------------------------------------------

inline json residual_report_json(const ResidualReport& rep) {
    json conds = json::array();
    for (const auto& c : rep.conditions) {
        conds.push_back(json{{"label", c.label},
                             {"re", c.value.real()},
                             {"im", c.value.imag()},
                             {"magnitude", c.magnitude()}});
    }
    json warnings = json::array();
    for (const auto& w : rep.warnings) warnings.push_back(w);
    return json{{"el_norm", rep.el_norm},
                {"conditions", std::move(conds)},
                {"functional_value", complex_json(rep.functional_value)},
                {"verdict", rep.verdict},
                {"warnings", std::move(warnings)}};
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

namespace detail {
inline scalecalc::detail::FieldSet derivative_stack(const VariationalProblem& p,
                                                    const Candidate& c) {
    return scalecalc::detail::derivative_fields(c.y, p.order());
}
} // namespace detail

/// Writes t, re_y, im_y and the scale derivatives up to the problem order
/// on every grid node (halo included).  Derivative columns are blank on
/// the outermost layers where the stencil runs out of neighbours.
inline void write_trajectory_csv(const std::string& path, const VariationalProblem& p,
                                 const Candidate& c) {
    const int n = p.order();
    auto fs = detail::derivative_stack(p, c);
    std::ostringstream os;
    os << "t,re_y,im_y";
    for (int k = 1; k <= n; ++k) os << ",re_d" << k << "y,im_d" << k << "y";
    os << "\n";
    const Grid& g = c.y.grid();
    for (std::size_t j = 0; j < g.node_count(); ++j) {
        os << format_double(g.node(j)) << "," << format_double(c.y[j].real()) << ","
           << format_double(c.y[j].imag());
        for (int k = 1; k <= n; ++k) {
            const auto& dk = fs.d[static_cast<std::size_t>(k)];
            const long jj = static_cast<long>(j) - k;  // d^k grid lost k layers per side
            os << ",";
            if (jj >= 0 && jj < static_cast<long>(dk.size()))
                os << format_double(dk[static_cast<std::size_t>(jj)].real()) << ","
                   << format_double(dk[static_cast<std::size_t>(jj)].imag());
            else
                os << ",";
        }
        os << "\n";
    }
    write_text_file(path, os.str());
}

/**
 * Reads a candidate trajectory from CSV.  Only the t, re_y, im_y columns
 * are consumed; the node lattice must agree with the problem grid (same
 * a, same step, halo layers included) within 1e-9.  The core interval of
 * the candidate may end before the problem's b (free-T trajectories stop
 * at their terminal node).  T defaults to the last core node unless
 * overridden.
 */
inline Candidate read_trajectory_csv(const std::string& path, const VariationalProblem& p,
                                     std::optional<double> T_override = {}) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw GridMismatch("cannot open trajectory file '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw GridMismatch("trajectory file '" + path + "' is empty");
    // header row required; columns located by name
    std::vector<std::string> header;
    {
        std::stringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(cell);
        if (!header.empty() && !header[0].empty() && header[0].back() == '\r')
            header[0].pop_back();
    }
    auto col = [&](const std::string& name) -> long {
        for (std::size_t k = 0; k < header.size(); ++k) {
            std::string cell = header[k];
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            if (cell == name) return static_cast<long>(k);
        }
        return -1;
    };
    const long ct = col("t"), cre = col("re_y"), cim = col("im_y");
    if (ct < 0 || cre < 0 || cim < 0)
        throw GridMismatch("trajectory file '" + path + "' must have columns t, re_y, im_y");

    std::vector<double> ts;
    std::vector<cplx> ys;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        const auto need = static_cast<std::size_t>(std::max({ct, cre, cim})) + 1;
        if (cells.size() < need)
            throw GridMismatch("trajectory file '" + path + "' line " + std::to_string(lineno) +
                               ": too few columns");
        try {
            ts.push_back(std::stod(cells[static_cast<std::size_t>(ct)]));
            ys.emplace_back(std::stod(cells[static_cast<std::size_t>(cre)]),
                            std::stod(cells[static_cast<std::size_t>(cim)]));
        } catch (const std::exception&) {
            throw GridMismatch("trajectory file '" + path + "' line " + std::to_string(lineno) +
                               ": non-numeric value");
        }
    }
    const int halo = p.required_halo();
    const double h = p.grid_h();
    if (ts.size() < static_cast<std::size_t>(2 * halo + 2))
        throw GridMismatch("trajectory file '" + path + "': too few rows for halo depth " +
                           std::to_string(halo));
    const double t0_expected = p.a() - static_cast<double>(halo) * h;
    if (std::abs(ts.front() - t0_expected) > 1e-9)
        throw GridMismatch("trajectory grid mismatch: first node " + std::to_string(ts.front()) +
                           ", expected " + std::to_string(t0_expected));
    for (std::size_t j = 0; j < ts.size(); ++j)
        if (std::abs(ts[j] - (t0_expected + static_cast<double>(j) * h)) > 1e-9)
            throw GridMismatch("trajectory grid mismatch at row " + std::to_string(j + 2) +
                               ": node " + std::to_string(ts[j]) + " is off the problem lattice");
    const double b_csv = ts.back() - static_cast<double>(halo) * h;
    if (b_csv > p.b() + 1e-9)
        throw GridMismatch("trajectory grid extends past the problem interval");
    Grid g(p.a(), b_csv, h, halo);
    if (g.node_count() != ts.size())
        throw GridMismatch("trajectory grid mismatch: unexpected row count");
    const double T = T_override.value_or(b_csv);
    if (T < p.a() - 1e-12 || T > b_csv + 1e-12)
        throw GridMismatch("terminal point T outside the trajectory's core interval");
    return Candidate{SampledFn(std::move(g), std::move(ys)), T};
}

} // namespace scalecalc::io
