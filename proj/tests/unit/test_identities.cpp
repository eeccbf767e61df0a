#include <doctest.h>

#include <cmath>

#include <scalecalc/holder_gen.hpp>
#include <scalecalc/identities.hpp>

using namespace scalecalc;

namespace {
const LadderConfig kSmooth{1.0 / 64, 0.5, 5};
}

TEST_CASE("leibniz residual equals h exactly for f = g = identity") {
    auto id = [](double t) { return t; };
    IdentityReport rep = leibniz_residual(id, id, 0, 1, kSmooth);
    for (auto [h, r] : rep.residual_per_h) CHECK(std::abs(r - h) < 1e-13);
    CHECK(rep.pass);
}

TEST_CASE("leibniz residual vanishes when one factor is constant") {
    auto c = [](double) { return 3.0; };
    auto g = [](double t) { return std::sin(4 * t); };
    IdentityReport rep = leibniz_residual(c, g, 0, 1, kSmooth);
    // round-off only; may sit just above the exactness floor
    for (auto [h, r] : rep.residual_per_h) CHECK(r < 1e-12);
}

TEST_CASE("leibniz is symmetric bit-for-bit") {
    auto f = [](double t) { return std::sin(3 * t); };
    auto g = [](double t) { return std::exp(-t); };
    IdentityReport fg = leibniz_residual(f, g, 0, 1, kSmooth);
    IdentityReport gf = leibniz_residual(g, f, 0, 1, kSmooth);
    REQUIRE(fg.residual_per_h.size() == gf.residual_per_h.size());
    for (std::size_t k = 0; k < fg.residual_per_h.size(); ++k) {
        CHECK(fg.residual_per_h[k].first == gf.residual_per_h[k].first);
        CHECK(fg.residual_per_h[k].second == gf.residual_per_h[k].second);
    }
    CHECK(fg.fitted_order == gf.fitted_order);
}

TEST_CASE("barrow residual exact pins") {
    auto id = [](double t) { return t; };
    IdentityReport aff = barrow_residual(id, 0, 1, kSmooth);
    CHECK(aff.exact);  // telescoping is exact for affine f

    auto sq = [](double t) { return t * t; };
    IdentityReport rep = barrow_residual(sq, 0, 1, LadderConfig{0.1, 0.5, 3});
    // h = 0.1 rung: residual = |-0.1 + 0.1i|
    CHECK(std::abs(rep.residual_per_h[0].second - std::abs(cplx(-0.1, 0.1))) < 1e-12);
}

TEST_CASE("barrow order about one for C1 functions") {
    auto s = [](double t) { return std::sin(t); };
    IdentityReport rep = barrow_residual(s, 0, 1, kSmooth);
    CHECK(std::abs(rep.fitted_order - 1.0) < 0.2);
    CHECK(rep.pass);
}

TEST_CASE("integration by parts residuals") {
    auto id = [](double t) { return t; };
    IdentityReport rep = parts_residual(id, id, 0, 1, LadderConfig{1.0 / 1024, 0.5, 3});
    CHECK(rep.residual_per_h[0].second <= 1e-3);  // quadrature slivers only at h = 2^-10

    auto f = [](double t) { return std::sin(t); };
    auto g = [](double t) { return std::cos(t); };
    IdentityReport sc = parts_residual(f, g, 0, 1, kSmooth);
    CHECK(std::abs(sc.fitted_order - 1.0) < 0.3);
    CHECK(sc.pass);
}

TEST_CASE("taylor remainder slopes") {
    std::vector<double> offsets;
    for (int k = 0; k < 5; ++k) offsets.push_back(0.4 * std::pow(0.5, k));

    IdentityReport sq = taylor_order_fit([](double t) { return t * t; }, 0.0, offsets);
    CHECK(sq.fitted_order == doctest::Approx(2.0).epsilon(1e-6));  // closed form h = t/8
    CHECK(sq.pass);

    IdentityReport aff = taylor_order_fit([](double t) { return 3 * t - 1; }, 0.0, offsets);
    CHECK(aff.exact);
    CHECK(aff.pass);

    IdentityReport ex = taylor_order_fit([](double t) { return std::exp(t); }, 0.0, offsets);
    CHECK(ex.fitted_order >= 1.8);
    CHECK(ex.fitted_order <= 2.2);
    CHECK(ex.pass);
}

TEST_CASE("smooth ladders decay with order at least 0.9") {
    auto f = [](double t) { return std::sin(2 * t); };
    for (const IdentityReport& rep :
         {leibniz_residual(f, f, 0, 1, kSmooth), barrow_residual(f, 0, 1, kSmooth),
          parts_residual(f, f, 0, 1, kSmooth)}) {
        CHECK(rep.fitted_order >= 0.9);
        CHECK(rep.pass);
    }
}

TEST_CASE("weierstrass ladders decay monotonically on a frequency-matched ladder") {
    auto W = weierstrass({0.5, 3});
    // ratio 1/9 = 1/freq^2 keeps successive rungs on the same phase of the
    // log-periodic envelope, so the underlying h^(2a-1) decay is visible
    const LadderConfig cfg{1.0 / 9, 1.0 / 9, 4};
    for (const IdentityReport& rep :
         {leibniz_residual(W, W, 0, 1, cfg), barrow_residual(W, 0, 1, cfg)}) {
        for (std::size_t k = 1; k < rep.residual_per_h.size(); ++k)
            CHECK(rep.residual_per_h[k].second <
                  rep.residual_per_h[k - 1].second * (1.0 + 1e-9));
        CHECK(rep.pass);
    }
}
