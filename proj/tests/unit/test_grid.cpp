#include <doctest.h>

#include <cmath>

#include <scalecalc/grid.hpp>

using namespace scalecalc;

TEST_CASE("make_grid node layout") {
    Grid g = make_grid(0, 1, 0.25, 1);
    CHECK(g.node_count() == 7);
    CHECK(g.node(0) == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(g.node(6) == doctest::Approx(1.25).epsilon(1e-14));
    CHECK(g.core_begin() == 1);
    CHECK(g.node(g.core_begin()) == doctest::Approx(0.0));
}

TEST_CASE("make_grid rejects non-commensurate steps") {
    CHECK_THROWS_AS(make_grid(0, 1, 0.3, 0), NonCommensurate);
}

TEST_CASE("make_grid large grid node count") {
    Grid g = make_grid(0, 2, 0.001, 2);
    CHECK(g.node_count() == 2005);
}

TEST_CASE("make_grid step validation") {
    CHECK_THROWS_AS(make_grid(0, 1, -0.1, 0), BadStep);
    CHECK_THROWS_AS(make_grid(0, 4, 2.0, 0), BadStep);  // h must stay below 1
    CHECK_THROWS_AS(make_grid(1, 0, 0.1, 0), BadStep);
}

TEST_CASE("sample evaluates pointwise") {
    Grid g = make_grid(0, 1, 0.5, 0);
    SampledFn f = sample([](double t) { return cplx(t, 0); }, g);
    CHECK(f.size() == 3);
    CHECK(f[0] == cplx(0, 0));
    CHECK(f[1] == cplx(0.5, 0));
    CHECK(f[2] == cplx(1, 0));

    SampledFn c = sample([](double) { return cplx(3, 0); }, g);
    for (std::size_t j = 0; j < c.size(); ++j) CHECK(c[j] == cplx(3, 0));
}

TEST_CASE("sample rejects singular values") {
    Grid g = make_grid(-1, 1, 0.5, 0);  // contains t = 0
    CHECK_THROWS_AS(sample([](double t) { return cplx(1.0 / t, 0); }, g), NonFinite);
}

TEST_CASE("quad_to constant and linear integrands") {
    Grid g = make_grid(0, 1, 0.1, 0);
    SampledFn one = sample([](double) { return cplx(1, 0); }, g);
    CHECK(quad_to(one, 0.55).real() == doctest::Approx(0.55).epsilon(1e-14));

    SampledFn lin = sample([](double t) { return cplx(t, 0); }, g);
    CHECK(quad_to(lin, 1.0).real() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("quad_to trapezoid error on t^2") {
    Grid g = make_grid(0, 1, 0.1, 0);
    SampledFn sq = sample([](double t) { return cplx(t * t, 0); }, g);
    CHECK(std::abs(quad_to(sq, 1.0).real() - 1.0 / 3.0) < 2e-3);
}

TEST_CASE("quad_to range checking and additivity") {
    Grid g = make_grid(0, 1, 0.125, 0);
    SampledFn f = sample([](double t) { return cplx(std::sin(3 * t), std::cos(t)); }, g);
    CHECK_THROWS_AS(quad_to(f, 1.5), OutOfRange);
    // additivity across a node s
    const double s = 0.5, T = 0.8;
    Grid left = make_grid(0, s, 0.125, 0);
    Grid right = make_grid(s, 1, 0.125, 0);
    cplx sum = quad_to(sample([](double t) { return cplx(std::sin(3 * t), std::cos(t)); }, left), s) +
               quad_to(sample([](double t) { return cplx(std::sin(3 * t), std::cos(t)); }, right), T);
    CHECK(std::abs(sum - quad_to(f, T)) < 1e-12 * (1.0 + std::abs(quad_to(f, T))));
}

TEST_CASE("interp_linear examples") {
    Grid g = make_grid(0, 1, 0.1, 0);
    SampledFn lin = sample([](double t) { return cplx(t, 0); }, g);
    CHECK(interp_linear(lin, 0.37).real() == doctest::Approx(0.37).epsilon(1e-13));
    CHECK(interp_linear(lin, 0.3) == lin[3]);  // exact at nodes

    SampledFn sq = sample([](double t) { return cplx(t * t, 0); }, g);
    CHECK(interp_linear(sq, 0.05).real() == doctest::Approx(0.005).epsilon(1e-13));

    CHECK_THROWS_AS(interp_linear(lin, 1.5), OutOfRange);
}

TEST_CASE("interp_linear exact for affine functions everywhere") {
    Grid g = make_grid(-1, 1, 0.25, 2);
    SampledFn f = sample([](double t) { return cplx(3 * t - 2, -t); }, g);
    for (double t = -1.4; t <= 1.4; t += 0.013)
        CHECK(std::abs(interp_linear(f, t) - cplx(3 * t - 2, -t)) < 1e-12);
}
