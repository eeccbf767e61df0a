#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "scalecalc/errors.hpp"

namespace scalecalc {

using cplx = std::complex<double>;

/**
 * Uniform grid over a core interval [a,b] with `halo` extra layers of
 * spacing h on each side.  Nodes are t_j = a - halo*h + j*h for
 * j = 0..node_count()-1; the step h doubles as the scale parameter, so
 * difference operators are exact index shifts.
 *
 * Immutable after construction.
 */
class Grid {
public:
    Grid(double a, double b, double h, int halo) : a_(a), b_(b), h_(h), halo_(halo) {
        if (!(h > 0.0) || h >= 1.0)
            throw BadStep("grid step must satisfy 0 < h < 1, got h=" + std::to_string(h));
        if (!(b >= a))
            throw BadStep("grid requires b >= a");
        if (halo < 0)
            throw BadStep("halo must be nonnegative");
        const double cells = (b - a) / h;
        const double rounded = std::round(cells);
        if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, std::abs(cells)))
            throw NonCommensurate("(b-a)/h = " + std::to_string(cells) + " is not integral");
        n_core_ = static_cast<std::size_t>(rounded);
    }

    double a() const { return a_; }
    double b() const { return b_; }
    double h() const { return h_; }
    int halo() const { return halo_; }

    /// Cells in the core interval [a,b].
    std::size_t core_cells() const { return n_core_; }
    std::size_t node_count() const { return n_core_ + 2 * static_cast<std::size_t>(halo_) + 1; }

    double node(std::size_t j) const { return a_ + (static_cast<double>(j) - halo_) * h_; }
    double front() const { return node(0); }
    double back() const { return node(node_count() - 1); }

    /// Index of the first core node (t = a).
    std::size_t core_begin() const { return static_cast<std::size_t>(halo_); }
    /// Index of the last core node (t = b).
    std::size_t core_end() const { return static_cast<std::size_t>(halo_) + n_core_; }

    bool operator==(const Grid& o) const {
        return a_ == o.a_ && b_ == o.b_ && h_ == o.h_ && halo_ == o.halo_;
    }

private:
    double a_, b_, h_;
    int halo_;
    std::size_t n_core_;
};

inline Grid make_grid(double a, double b, double h, int halo) {
    if (!(a < b)) throw BadStep("make_grid requires a < b");
    return Grid(a, b, h, halo);
}

/// Complex values sampled at every node of a Grid.  Finite entries only.
class SampledFn {
public:
    SampledFn(Grid grid, std::vector<cplx> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.size() != grid_.node_count())
            throw BadStep("value count " + std::to_string(values_.size()) +
                          " does not match node count " + std::to_string(grid_.node_count()));
        for (std::size_t j = 0; j < values_.size(); ++j) {
            if (!std::isfinite(values_[j].real()) || !std::isfinite(values_[j].imag()))
                throw NonFinite("non-finite value at node t=" + std::to_string(grid_.node(j)));
        }
    }

    const Grid& grid() const { return grid_; }
    const std::vector<cplx>& values() const& { return values_; }
    // rvalue access returns by value so iterating over a temporary is safe
    std::vector<cplx> values() && { return std::move(values_); }
    cplx operator[](std::size_t j) const { return values_[j]; }
    std::size_t size() const { return values_.size(); }

private:
    Grid grid_;
    std::vector<cplx> values_;
};

/// Pointwise evaluation of f at every grid node.
inline SampledFn sample(const std::function<cplx(double)>& f, const Grid& grid) {
    std::vector<cplx> vals(grid.node_count());
    for (std::size_t j = 0; j < vals.size(); ++j) vals[j] = f(grid.node(j));
    return SampledFn(grid, std::move(vals));
}

inline SampledFn sample_real(const std::function<double(double)>& f, const Grid& grid) {
    return sample([&](double t) { return cplx(f(t), 0.0); }, grid);
}

/// Linear interpolation between bracketing nodes; exact at nodes.
inline cplx interp_linear(const SampledFn& f, double t) {
    const Grid& g = f.grid();
    const double lo = g.front(), hi = g.back();
    const double eps = 1e-12 * std::max(1.0, std::abs(hi - lo));
    if (t < lo - eps || t > hi + eps)
        throw OutOfRange("interp_linear: t=" + std::to_string(t) + " outside grid span");
    double x = (t - lo) / g.h();
    if (x < 0.0) x = 0.0;
    auto j = static_cast<std::size_t>(x);
    if (j >= g.node_count() - 1) j = g.node_count() - 2;
    const double u = x - static_cast<double>(j);
    if (u <= 1e-12) return f[j];
    if (u >= 1.0 - 1e-12) return f[j + 1];
    return f[j] * (1.0 - u) + f[j + 1] * u;
}

/**
 * Trapezoid quadrature of f from a up to T (a <= T <= b).  Full cells are
 * summed exactly; a terminal partial cell uses linear interpolation at T,
 * so the rule is exact for piecewise-linear integrands and additive across
 * any split point.
 */
inline cplx quad_to(const SampledFn& f, double T) {
    const Grid& g = f.grid();
    const double eps = 1e-12 * std::max(1.0, g.b() - g.a());
    if (T < g.a() - eps || T > g.b() + eps)
        throw OutOfRange("quad_to: T=" + std::to_string(T) + " outside [a,b]");
    if (T < g.a()) T = g.a();
    if (T > g.b()) T = g.b();

    const std::size_t j0 = g.core_begin();
    // last full node at or before T
    double x = (T - g.a()) / g.h();
    auto m = static_cast<std::size_t>(x + 1e-12);
    if (j0 + m > g.core_end()) m = g.core_end() - j0;

    cplx acc(0.0, 0.0);
    for (std::size_t k = 0; k < m; ++k)
        acc += 0.5 * (f[j0 + k] + f[j0 + k + 1]) * g.h();
    const double tm = g.node(j0 + m);
    if (T > tm + eps) {
        const cplx fT = interp_linear(f, T);
        acc += 0.5 * (f[j0 + m] + fT) * (T - tm);
    }
    return acc;
}

} // namespace scalecalc
