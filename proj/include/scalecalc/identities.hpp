#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "scalecalc/scale_ops.hpp"

namespace scalecalc {

/**
 * Residuals of one scale-calculus identity measured across a step ladder.
 * `fitted_order` is the log-log slope of residual vs h; rungs whose
 * residual sits at the floating-point floor are excluded from the fit
 * (an all-floor report counts as exact).
 */
struct IdentityReport {
    std::vector<std::pair<double, double>> residual_per_h;
    double fitted_order = 0.0;
    bool exact = false;   ///< every rung at the round-off floor
    bool skipped = false; ///< identity not applicable (e.g. Taylor on non-C^2 input)
    bool pass = false;
};

namespace detail {

constexpr double kResidualFloor = 1e-13;

inline void finish_report(IdentityReport& rep, double tol) {
    std::vector<double> lh, lr;
    for (auto& [h, r] : rep.residual_per_h)
        if (r > kResidualFloor) {
            lh.push_back(std::log(h));
            lr.push_back(std::log(r));
        }
    rep.exact = lh.empty();
    if (lh.size() >= 2)
        rep.fitted_order = least_squares_line(lh, lr).slope;
    else
        rep.fitted_order = std::numeric_limits<double>::quiet_NaN();

    if (rep.exact) {
        rep.pass = true;
        return;
    }
    bool monotone = true;
    for (std::size_t k = 1; k < rep.residual_per_h.size(); ++k)
        if (rep.residual_per_h[k].second > rep.residual_per_h[k - 1].second * (1.0 + 1e-9))
            monotone = false;
    const double first = rep.residual_per_h.front().second;
    const double last = rep.residual_per_h.back().second;
    rep.pass = monotone && (last < tol || last <= 0.5 * first);
}

inline std::vector<double> ladder_steps(const LadderConfig& cfg) {
    std::vector<double> hs(cfg.rungs);
    for (int k = 0; k < cfg.rungs; ++k) hs[k] = cfg.h0 * std::pow(cfg.ratio, k);
    return hs;
}

} // namespace detail

/// max-node residual of the Leibniz rule applied at finite h:
/// box_h(f*g) - (box_h f * g + f * box_h g).
inline IdentityReport leibniz_residual(const std::function<double(double)>& f,
                                       const std::function<double(double)>& g, double a, double b,
                                       const LadderConfig& cfg = {}, double tol = 0.05) {
    IdentityReport rep;
    auto fc = [&](double t) { return cplx(f(t), 0); };
    auto gc = [&](double t) { return cplx(g(t), 0); };
    auto fg = [&](double t) { return cplx(f(t) * g(t), 0); };
    for (double h : detail::ladder_steps(cfg)) {
        Grid lattice = make_grid(a, b, h, 0);
        double worst = 0.0;
        for (std::size_t j = 0; j < lattice.node_count(); ++j) {
            const double t = lattice.node(j);
            const cplx lhs = hscale_at(fg, t, h);
            const cplx rhs = hscale_at(fc, t, h) * gc(t) + fc(t) * hscale_at(gc, t, h);
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        rep.residual_per_h.emplace_back(h, worst);
    }
    detail::finish_report(rep, tol);
    return rep;
}

/// Residual of the Barrow rule with left-Riemann quadrature, so that the
/// forward-difference part telescopes exactly and the residual isolates
/// the non-convergent remainder plus the backward boundary sliver.
inline IdentityReport barrow_residual(const std::function<double(double)>& f, double a, double b,
                                      const LadderConfig& cfg = {}, double tol = 0.05) {
    IdentityReport rep;
    auto fc = [&](double t) { return cplx(f(t), 0); };
    for (double h : detail::ladder_steps(cfg)) {
        Grid lattice = make_grid(a, b, h, 0);
        cplx sum(0, 0);
        for (std::size_t j = 0; j + 1 < lattice.node_count(); ++j)
            sum += hscale_at(fc, lattice.node(j), h) * h;
        rep.residual_per_h.emplace_back(h, std::abs(sum - cplx(f(b) - f(a), 0)));
    }
    detail::finish_report(rep, tol);
    return rep;
}

/// Residual of the integration-by-parts formula under trapezoid quadrature:
/// | int box f * g + int f * box g - [f g]_a^b |.
inline IdentityReport parts_residual(const std::function<double(double)>& f,
                                     const std::function<double(double)>& g, double a, double b,
                                     const LadderConfig& cfg = {}, double tol = 0.05) {
    IdentityReport rep;
    auto fc = [&](double t) { return cplx(f(t), 0); };
    auto gc = [&](double t) { return cplx(g(t), 0); };
    for (double h : detail::ladder_steps(cfg)) {
        Grid lattice = make_grid(a, b, h, 0);
        cplx q1(0, 0), q2(0, 0);
        for (std::size_t j = 0; j + 1 < lattice.node_count(); ++j) {
            const double t0 = lattice.node(j), t1 = lattice.node(j + 1);
            q1 += 0.5 * h * (hscale_at(fc, t0, h) * gc(t0) + hscale_at(fc, t1, h) * gc(t1));
            q2 += 0.5 * h * (fc(t0) * hscale_at(gc, t0, h) + fc(t1) * hscale_at(gc, t1, h));
        }
        const cplx boundary(f(b) * g(b) - f(a) * g(a), 0);
        rep.residual_per_h.emplace_back(h, std::abs(q1 + q2 - boundary));
    }
    detail::finish_report(rep, tol);
    return rep;
}

/**
 * First-order Taylor remainder fit.  For each offset d the remainder
 * |f(a+d) - f(a) - box_h f(a) * d| is measured with the step tied to the
 * offset (h = d/8); the report passes when the fitted slope is >= 1.8 or
 * the remainders sit at the round-off floor (affine f).
 */
inline IdentityReport taylor_order_fit(const std::function<double(double)>& f, double a,
                                       const std::vector<double>& offsets) {
    IdentityReport rep;
    auto fc = [&](double t) { return cplx(f(t), 0); };
    for (double d : offsets) {
        if (!(d > 0.0)) throw BadParams("taylor_order_fit: offsets must be positive");
        const double h = d / 8.0;
        const cplx dfa = hscale_at(fc, a, h);
        const double r = std::abs(cplx(f(a + d) - f(a), 0) - dfa * d);
        rep.residual_per_h.emplace_back(d, r);
    }
    detail::finish_report(rep, /*tol=*/1.0);
    if (!rep.exact) rep.pass = rep.fitted_order >= 1.8;
    return rep;
}

} // namespace scalecalc
