#include <doctest.h>

#include <cmath>
#include <vector>

#include <scalecalc/holder_gen.hpp>
#include <scalecalc/scale_ops.hpp>

using namespace scalecalc;

TEST_CASE("weierstrass value at zero is the geometric sum") {
    auto W = weierstrass({0.5, 3, 30});
    CHECK(std::abs(W(0.0) - 2.0) < 1e-8);  // sum of (1/2)^k, truncation < 2^-30 * 2
}

TEST_CASE("weierstrass periodicity for integer frequency") {
    auto W = weierstrass({0.5, 3, 20});
    for (double t = -1.0; t <= 1.0; t += 0.0937)
        CHECK(W(t + 2.0) == doctest::Approx(W(t)).epsilon(1e-9));
}

TEST_CASE("weierstrass truncation bound") {
    const int K = 12;
    auto Wk = weierstrass({0.5, 3, K});
    auto Wk5 = weierstrass({0.5, 3, K + 5});
    const double bound = std::pow(0.5, K + 1) / (1.0 - 0.5);
    for (double t = 0; t <= 2.0; t += 0.0117)
        CHECK(std::abs(Wk(t) - Wk5(t)) <= bound + 1e-15);
}

TEST_CASE("weierstrass parameter validation") {
    CHECK_THROWS_AS(weierstrass({1.5, 3}), BadParams);
    CHECK_THROWS_AS(weierstrass({0.5, 1.5}), BadParams);   // amp*freq < 1
    CHECK_THROWS_AS(weierstrass({0.5, 3, 0}), BadParams);
}

TEST_CASE("weierstrass exponent helper") {
    WeierstrassParams p{0.5, 3};
    CHECK(p.exponent() == doctest::Approx(std::log(2.0) / std::log(3.0)));
}

TEST_CASE("smooth_catalogue pairs") {
    auto s = smooth_catalogue("sin");
    CHECK(s.fn(0.3) == doctest::Approx(std::sin(0.3)));
    CHECK(s.deriv(0.3) == doctest::Approx(std::cos(0.3)));

    auto p2 = smooth_catalogue("poly_2");
    CHECK(p2.fn(1.5) == doctest::Approx(2.25));
    CHECK(p2.deriv(1.5) == doctest::Approx(3.0));

    auto q = smooth_catalogue("quadratic_shift(1)");
    CHECK(q.fn(0.0) == doctest::Approx(0.5));
    CHECK(q.deriv(0.0) == doctest::Approx(-1.0));

    CHECK_THROWS_AS(smooth_catalogue("sinh"), UnknownName);
    CHECK_THROWS_AS(smooth_catalogue("poly_x"), UnknownName);
}

TEST_CASE("exponent closure of sums (roughest term wins)") {
    // y with exponent alpha ~ 0.631, eta with larger exponent beta ~ 0.774:
    // the sum stays in the alpha class
    auto y = weierstrass({0.5, 3});
    auto eta = weierstrass({0.3, 4.7});
    const double alpha = WeierstrassParams{0.5, 3}.exponent();
    const double beta = WeierstrassParams{0.3, 4.7}.exponent();
    REQUIRE(beta >= alpha);
    std::vector<double> scales;
    for (int k = 3; k <= 8; ++k) scales.push_back(std::pow(3.0, -k));
    auto est = estimate_holder_exponent([&](double t) { return y(t) + eta(t); }, 0, 2, scales);
    CHECK(std::abs(est.alpha_hat - alpha) < 0.07);
}
