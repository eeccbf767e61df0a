#include <doctest.h>

#include <cmath>

#include <scalecalc/holder_gen.hpp>
#include <scalecalc/scale_ops.hpp>

using namespace scalecalc;

namespace {
SampledFn on_grid(double (*f)(double), double a, double b, double h, int halo) {
    return sample_real(f, make_grid(a, b, h, halo));
}
} // namespace

TEST_CASE("forward_diff examples") {
    SampledFn id = on_grid([](double t) { return t; }, 0, 1, 0.1, 1);
    SampledFn d = forward_diff(id);
    for (std::size_t j = 0; j < d.size(); ++j)
        CHECK(std::abs(d[j] - cplx(1, 0)) < 1e-13);

    SampledFn c = on_grid([](double) { return 4.0; }, 0, 1, 0.1, 1);
    for (auto v : forward_diff(c).values()) CHECK(std::abs(v) < 1e-13);

    SampledFn sq = on_grid([](double t) { return t * t; }, 0, 1, 0.1, 1);
    SampledFn dsq = forward_diff(sq);
    // value at t = 1: (1.21 - 1) / 0.1
    const Grid& g = dsq.grid();
    std::size_t j1 = g.core_end();  // index of the last core node
    CHECK(g.node(j1) == doctest::Approx(1.0));
    CHECK(dsq[j1].real() == doctest::Approx(2.1).epsilon(1e-12));

    SampledFn bare = on_grid([](double t) { return t; }, 0, 1, 0.1, 0);
    CHECK_THROWS_AS(forward_diff(bare), HaloExhausted);
}

TEST_CASE("backward_diff examples") {
    SampledFn sq = on_grid([](double t) { return t * t; }, 0, 1, 0.1, 1);
    SampledFn dsq = backward_diff(sq);
    std::size_t j1 = dsq.grid().core_end();
    CHECK(dsq[j1].real() == doctest::Approx(1.9).epsilon(1e-12));
}

TEST_CASE("hscale_derivative of t^2 is 2t + ih") {
    const double h = 0.1;
    SampledFn sq = on_grid([](double t) { return t * t; }, 0, 1, h, 1);
    SampledFn d = hscale_derivative(sq);
    const Grid& g = d.grid();
    for (std::size_t j = 0; j < d.size(); ++j) {
        CHECK(std::abs(d[j] - cplx(2 * g.node(j), h)) < 1e-13);
    }
}

TEST_CASE("hscale_derivative of constants and affine functions") {
    SampledFn c = on_grid([](double) { return 7.0; }, 0, 1, 0.05, 1);
    for (auto v : hscale_derivative(c).values()) CHECK(std::abs(v) < 1e-13);

    SampledFn id = on_grid([](double t) { return t; }, 0, 1, 0.05, 1);
    for (auto v : hscale_derivative(id).values()) CHECK(std::abs(v - cplx(1, 0)) < 1e-13);
}

TEST_CASE("hscale_derivative real/imag split is central/second difference") {
    const double h = 0.125;
    Grid g = make_grid(0, 1, h, 1);
    SampledFn f = sample([](double t) { return cplx(std::sin(5 * t), std::exp(t)); }, g);
    SampledFn d = hscale_derivative(f);
    for (std::size_t j = 0; j < d.size(); ++j) {
        const cplx fp = f[j + 2], f0 = f[j + 1], fm = f[j];
        const cplx central = (fp - fm) / (2 * h);
        const cplx second = (fp - 2.0 * f0 + fm) / (2 * h);
        // the operator is complex-linear: central difference plus i times
        // the (scaled) second difference of the complex samples
        CHECK(std::abs(d[j] - (central + cplx(0, 1) * second)) < 1e-12);
    }
}

TEST_CASE("hscale_derivative linearity over complex constants") {
    Grid g = make_grid(0, 1, 0.1, 1);
    SampledFn f = sample([](double t) { return cplx(std::sin(t), t * t); }, g);
    SampledFn gfn = sample([](double t) { return cplx(std::cos(2 * t), -t); }, g);
    const cplx c1(2.0, -1.0), c2(0.5, 3.0);
    std::vector<cplx> combo(g.node_count());
    for (std::size_t j = 0; j < combo.size(); ++j) combo[j] = c1 * f[j] + c2 * gfn[j];
    SampledFn lhs = hscale_derivative(SampledFn(g, std::move(combo)));
    SampledFn df = hscale_derivative(f), dg = hscale_derivative(gfn);
    for (std::size_t j = 0; j < lhs.size(); ++j) {
        const cplx rhs = c1 * df[j] + c2 * dg[j];
        CHECK(std::abs(lhs[j] - rhs) <= 1e-12 * (1.0 + std::abs(rhs)));
    }
}

TEST_CASE("hscale_derivative_n recursion and identity") {
    SampledFn f = on_grid([](double t) { return std::sin(t); }, 0, 1, 0.1, 3);
    SampledFn n0 = hscale_derivative_n(f, 0);
    for (std::size_t j = 0; j < f.size(); ++j) CHECK(f[j] == n0[j]);

    SampledFn n1 = hscale_derivative_n(f, 1);
    SampledFn d1 = hscale_derivative(f);
    for (std::size_t j = 0; j < n1.size(); ++j) CHECK(n1[j] == d1[j]);

    SampledFn sq = on_grid([](double t) { return t * t; }, 0, 1, 0.05, 2);
    SampledFn d2 = hscale_derivative_n(sq, 2);
    for (auto v : d2.values()) CHECK(std::abs(v - cplx(2, 0)) < 1e-11);

    SampledFn c = on_grid([](double) { return 1.5; }, 0, 1, 0.1, 3);
    for (auto v : hscale_derivative_n(c, 3).values()) CHECK(std::abs(v) < 1e-10);

    CHECK_THROWS_AS(hscale_derivative_n(f, 4), HaloExhausted);
    CHECK_THROWS_AS(hscale_derivative_n(f, -1), BadParams);
}

TEST_CASE("limit_ladder extrapolates smooth derivatives") {
    auto sq = [](double t) { return cplx(t * t, 0); };
    LimitEstimate est = limit_ladder(sq, 0, 1, LadderConfig{0.1, 0.5, 3, 1e-6});
    CHECK(est.all_converged());
    for (std::size_t j = 0; j < est.nodes.size(); ++j) {
        CHECK(std::abs(est.value[j] - cplx(2 * est.nodes[j], 0)) < 1e-9);
        CHECK(est.e_residual[j] <= 1e-10);
    }

    auto s = [](double t) { return cplx(std::sin(t), 0); };
    LimitEstimate es = limit_ladder(s, 0, 1, {});
    CHECK(es.all_converged());
    for (std::size_t j = 0; j < es.nodes.size(); ++j)
        CHECK(std::abs(es.value[j] - cplx(std::cos(es.nodes[j]), 0)) < 1e-8);
}

TEST_CASE("limit_ladder flags nonconvergent nodes for Weierstrass input") {
    auto W = weierstrass({0.5, 3});
    auto f = [&](double t) { return cplx(W(t), 0); };
    LimitEstimate est = limit_ladder(f, 0, 1, LadderConfig{1.0 / 64, 0.5, 5, 1e-6});
    std::size_t diverged = 0;
    for (bool c : est.converged)
        if (!c) ++diverged;
    CHECK(diverged * 2 > est.converged.size());  // generic nodes blow up like h^(alpha-1)
}

TEST_CASE("limit_ladder requires three rungs") {
    auto f = [](double t) { return cplx(t, 0); };
    CHECK_THROWS_AS(limit_ladder(f, 0, 1, LadderConfig{0.1, 0.5, 2, 1e-6}), InsufficientLadder);
}

TEST_CASE("smooth consistency order of the scale derivative") {
    // max-node error vs the classical derivative decays with order >= 0.95
    std::vector<double> lh, le;
    for (int k = 4; k <= 8; ++k) {
        const double h = std::ldexp(1.0, -k);
        SampledFn f = on_grid([](double t) { return std::exp(t); }, 0, 1, h, 1);
        SampledFn d = hscale_derivative(f);
        double worst = 0;
        const Grid& g = d.grid();
        for (std::size_t j = g.core_begin(); j < g.core_end(); ++j)
            worst = std::max(worst, std::abs(d[j] - cplx(std::exp(g.node(j)), 0)));
        lh.push_back(std::log(h));
        le.push_back(std::log(worst));
    }
    const double slope = detail::least_squares_line(lh, le).slope;
    CHECK(slope >= 0.95);
}

TEST_CASE("estimate_holder_exponent on sqrt and linear functions") {
    auto root = [](double t) { return std::sqrt(std::abs(t)); };
    // 3-adic scales avoid the log-periodic envelope of lacunary inputs and
    // work equally well for smooth ones
    std::vector<double> scales;
    for (int k = 3; k <= 8; ++k) scales.push_back(std::pow(3.0, -k));
    HolderEstimate hs = estimate_holder_exponent(root, -1, 1, scales);
    CHECK(std::abs(hs.alpha_hat - 0.5) < 0.05);

    HolderEstimate lin = estimate_holder_exponent([](double t) { return t; }, 0, 1, scales);
    CHECK(lin.alpha_hat == doctest::Approx(1.0));

    CHECK_THROWS_AS(estimate_holder_exponent([](double) { return 2.0; }, 0, 1, scales),
                    DegenerateFit);
    CHECK_THROWS_AS(estimate_holder_exponent(root, 0, 1, {0.5, 0.25, 0.125}), BadParams);
}
