#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "scalecalc/errors.hpp"

namespace scalecalc {

/**
 * Truncated Weierstrass series
 *   W(t) = sum_{k=0}^{terms} amp^k cos(freq^k * pi * t).
 * With 0 < amp < 1 and amp*freq >= 1 the limit function is Holderian of
 * exponent -ln(amp)/ln(freq) and nowhere differentiable; the truncation
 * error is bounded by amp^{terms+1}/(1-amp).
 */
struct WeierstrassParams {
    double amp;
    double freq;
    int terms = 30;

    double exponent() const { return -std::log(amp) / std::log(freq); }
};

inline std::function<double(double)> weierstrass(const WeierstrassParams& p) {
    if (!(p.amp > 0.0) || !(p.amp < 1.0))
        throw BadParams("weierstrass: amp must lie in (0,1)");
    if (!(p.amp * p.freq >= 1.0))
        throw BadParams("weierstrass: need amp*freq >= 1 for the nondifferentiable regime");
    if (p.terms < 1) throw BadParams("weierstrass: terms must be >= 1");
    return [p](double t) {
        double acc = 0.0, ak = 1.0, bk = 1.0;
        for (int k = 0; k <= p.terms; ++k) {
            acc += ak * std::cos(bk * std::numbers::pi * t);
            ak *= p.amp;
            bk *= p.freq;
        }
        return acc;
    };
}

/// A closed-form function paired with its exact classical derivative.
struct CataloguePair {
    std::function<double(double)> fn;
    std::function<double(double)> deriv;
};

/**
 * Named smooth test functions: poly_k, sin, cos, exp, quadratic_shift(c).
 * Used as oracles where the scale derivative must collapse to the
 * classical one.
 */
inline CataloguePair smooth_catalogue(const std::string& name) {
    if (name == "sin")
        return {[](double t) { return std::sin(t); }, [](double t) { return std::cos(t); }};
    if (name == "cos")
        return {[](double t) { return std::cos(t); }, [](double t) { return -std::sin(t); }};
    if (name == "exp")
        return {[](double t) { return std::exp(t); }, [](double t) { return std::exp(t); }};
    if (name.rfind("poly_", 0) == 0) {
        int k;
        try {
            k = std::stoi(name.substr(5));
        } catch (...) {
            throw UnknownName("smooth_catalogue: bad polynomial degree in '" + name + "'");
        }
        if (k < 0) throw UnknownName("smooth_catalogue: negative degree");
        return {[k](double t) { return std::pow(t, k); },
                [k](double t) { return k == 0 ? 0.0 : k * std::pow(t, k - 1); }};
    }
    if (name.rfind("quadratic_shift(", 0) == 0 && name.back() == ')') {
        double c;
        try {
            c = std::stod(name.substr(16, name.size() - 17));
        } catch (...) {
            throw UnknownName("smooth_catalogue: bad shift in '" + name + "'");
        }
        return {[c](double t) { return 0.5 * (t - c) * (t - c); }, [c](double t) { return t - c; }};
    }
    throw UnknownName("smooth_catalogue: unknown function '" + name + "'");
}

} // namespace scalecalc
