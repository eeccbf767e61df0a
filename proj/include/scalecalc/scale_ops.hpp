#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "scalecalc/grid.hpp"

namespace scalecalc {

namespace detail {

inline Grid shrunk(const Grid& g, const char* who) {
    if (g.halo() < 1)
        throw HaloExhausted(std::string(who) + ": grid halo exhausted (halo=0)");
    return Grid(g.a(), g.b(), g.h(), g.halo() - 1);
}

} // namespace detail

/// h-forward difference (f(t+h)-f(t))/h.  Consumes one halo layer.
inline SampledFn forward_diff(const SampledFn& f) {
    Grid out = detail::shrunk(f.grid(), "forward_diff");
    const double h = out.h();
    std::vector<cplx> vals(out.node_count());
    for (std::size_t j = 0; j < vals.size(); ++j)
        vals[j] = (f[j + 2] - f[j + 1]) / h;
    return SampledFn(std::move(out), std::move(vals));
}

/// h-backward difference (f(t)-f(t-h))/h.  Consumes one halo layer.
inline SampledFn backward_diff(const SampledFn& f) {
    Grid out = detail::shrunk(f.grid(), "backward_diff");
    const double h = out.h();
    std::vector<cplx> vals(out.node_count());
    for (std::size_t j = 0; j < vals.size(); ++j)
        vals[j] = (f[j + 1] - f[j]) / h;
    return SampledFn(std::move(out), std::move(vals));
}

/**
 * h-scale derivative: (1/2)[(forward + backward) + i(forward - backward)].
 * The real part is the central difference quotient; the imaginary part
 * measures local asymmetry and is O(h) for C^2 functions.
 */
inline SampledFn hscale_derivative(const SampledFn& f) {
    Grid out = detail::shrunk(f.grid(), "hscale_derivative");
    const double h = out.h();
    std::vector<cplx> vals(out.node_count());
    const cplx iu(0.0, 1.0);
    for (std::size_t j = 0; j < vals.size(); ++j) {
        const cplx fwd = (f[j + 2] - f[j + 1]) / h;
        const cplx bwd = (f[j + 1] - f[j]) / h;
        vals[j] = 0.5 * ((fwd + bwd) + iu * (fwd - bwd));
    }
    return SampledFn(std::move(out), std::move(vals));
}

/// n-fold h-scale derivative; n = 0 is the identity.
inline SampledFn hscale_derivative_n(const SampledFn& f, int n) {
    if (n < 0) throw BadParams("hscale_derivative_n: n must be >= 0");
    if (f.grid().halo() < n)
        throw HaloExhausted("hscale_derivative_n: need halo >= " + std::to_string(n));
    SampledFn out = f;
    for (int k = 0; k < n; ++k) out = hscale_derivative(out);
    return out;
}

/// Pointwise h-scale derivative of a scalar map, no grid needed.
inline cplx hscale_at(const std::function<cplx(double)>& f, double t, double h) {
    const cplx fwd = (f(t + h) - f(t)) / h;
    const cplx bwd = (f(t) - f(t - h)) / h;
    return 0.5 * ((fwd + bwd) + cplx(0.0, 1.0) * (fwd - bwd));
}

struct LadderConfig {
    double h0 = 1.0 / 64.0;   ///< coarsest step
    double ratio = 0.5;       ///< geometric decay of the step
    int rungs = 5;
    double tol = 1e-6;        ///< per-node convergence tolerance (absolute)
};

/// Per-node Richardson-extrapolated limit of the h-scale derivative, with
/// the extrapolation remainder standing in for the non-convergent part.
struct LimitEstimate {
    std::vector<double> nodes;
    std::vector<cplx> value;
    std::vector<double> e_residual;
    std::vector<bool> converged;

    bool all_converged() const {
        return std::all_of(converged.begin(), converged.end(), [](bool c) { return c; });
    }
};

/**
 * Evaluates the h-scale derivative of f on a geometric step ladder and
 * Richardson-extrapolates rung values at each node of the coarse lattice
 * over [a,b].  The residual between the two finest extrapolants is the
 * computable proxy for the remainder left behind by the projection onto
 * the convergent part; a node is flagged converged when it falls below
 * the configured tolerance.
 */
inline LimitEstimate limit_ladder(const std::function<cplx(double)>& f, double a, double b,
                                  const LadderConfig& cfg = {}) {
    if (cfg.rungs < 3)
        throw InsufficientLadder("limit_ladder needs at least 3 rungs, got " +
                                 std::to_string(cfg.rungs));
    if (!(cfg.ratio > 0.0) || cfg.ratio >= 1.0)
        throw BadParams("ladder ratio must lie in (0,1)");
    Grid lattice = make_grid(a, b, cfg.h0, 0);

    LimitEstimate out;
    out.nodes.resize(lattice.node_count());
    out.value.resize(lattice.node_count());
    out.e_residual.resize(lattice.node_count());
    out.converged.resize(lattice.node_count());

    std::vector<double> hs(cfg.rungs);
    for (int k = 0; k < cfg.rungs; ++k) hs[k] = cfg.h0 * std::pow(cfg.ratio, k);

    std::vector<std::vector<cplx>> tableau(cfg.rungs);
    for (std::size_t j = 0; j < lattice.node_count(); ++j) {
        const double t = lattice.node(j);
        out.nodes[j] = t;
        // Neville-style elimination of successive powers of h
        for (int k = 0; k < cfg.rungs; ++k) {
            tableau[k].assign(k + 1, cplx(0, 0));
            tableau[k][0] = hscale_at(f, t, hs[k]);
            for (int m = 1; m <= k; ++m) {
                const double r = std::pow(cfg.ratio, m);
                tableau[k][m] = (tableau[k][m - 1] - r * tableau[k - 1][m - 1]) / (1.0 - r);
            }
        }
        const cplx best = tableau[cfg.rungs - 1][cfg.rungs - 1];
        const cplx prev = tableau[cfg.rungs - 2][cfg.rungs - 2];
        out.value[j] = best;
        out.e_residual[j] = std::abs(best - prev);
        out.converged[j] = out.e_residual[j] <= cfg.tol;
    }
    return out;
}

struct HolderEstimate {
    double alpha_hat;  ///< exponent estimate, clamped to (0,1]
    double c_hat;      ///< Holder constant estimate
    double fit_r2;
};

namespace detail {

struct LineFit {
    double slope, intercept, r2;
};

inline LineFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i]; syy += y[i] * y[i];
    }
    const double denom = n * sxx - sx * sx;
    LineFit fit{};
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    const double sstot = syy - sy * sy / n;
    double ssres = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = y[i] - (fit.slope * x[i] + fit.intercept);
        ssres += d * d;
    }
    fit.r2 = sstot > 0 ? 1.0 - ssres / sstot : 1.0;
    return fit;
}

} // namespace detail

/**
 * Estimates the Holder exponent of f on [a,b] by fitting
 * log(oscillation at scale s) against log s over a dyadic ladder of
 * scales.  The oscillation at scale s is the maximum of |f(t+s)-f(t)|
 * over a dense sample of t.
 */
inline HolderEstimate estimate_holder_exponent(const std::function<double(double)>& f, double a,
                                               double b, const std::vector<double>& scales) {
    if (scales.size() < 4)
        throw BadParams("estimate_holder_exponent needs at least 4 scales");
    std::vector<double> logs, logosc;
    for (double s : scales) {
        if (!(s > 0.0) || s >= (b - a)) throw BadParams("scale outside (0, b-a)");
        const double step = std::max(s / 8.0, (b - a) / 65536.0);
        double osc = 0.0;
        for (double t = a; t + s <= b; t += step)
            osc = std::max(osc, std::abs(f(t + s) - f(t)));
        if (osc <= 0.0)
            throw DegenerateFit("oscillation identically zero (constant function?)");
        logs.push_back(std::log(s));
        logosc.push_back(std::log(osc));
    }
    const auto fit = detail::least_squares_line(logs, logosc);
    HolderEstimate est{};
    est.alpha_hat = std::clamp(fit.slope, 1e-12, 1.0);
    est.c_hat = std::exp(fit.intercept);
    est.fit_r2 = fit.r2;
    return est;
}

/// Convenience: dyadic scales 2^-lo .. 2^-hi inclusive.
inline std::vector<double> dyadic_scales(int lo, int hi) {
    std::vector<double> s;
    for (int k = lo; k <= hi; ++k) s.push_back(std::ldexp(1.0, -k));
    return s;
}

} // namespace scalecalc
