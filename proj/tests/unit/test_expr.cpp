#include <doctest.h>

#include <cmath>
#include <random>

#include <scalecalc/expr.hpp>

using namespace scalecalc;

TEST_CASE("parse_expr basic structure") {
    Expr e = parse_expr("0.5*v^2 + y", 1);
    // evaluate rather than inspect the tree: 0.5*4 + 3 = 5
    CHECK(e.eval(0, cplx(3, 0), {cplx(2, 0)}) == cplx(5, 0));
    CHECK(e.max_v_index() == 1);
}

TEST_CASE("parse_expr order checking") {
    CHECK_NOTHROW(parse_expr("0.5*v2^2 + y", 2));
    CHECK_THROWS_AS(parse_expr("0.5*v2^2 + y", 1), OrderMismatch);
}

TEST_CASE("parse_expr psi example") {
    Expr psi = parse_expr("2 - t", 1);
    CHECK(psi.eval(0.5, cplx(0, 0), {}) == cplx(1.5, 0));
    CHECK(psi.str() == "2 - t");
}

TEST_CASE("parse_expr reports syntax errors with position") {
    try {
        parse_expr("0.5*v^", 1);
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.position == 6);
    }
    CHECK_THROWS_AS(parse_expr("0.5*w", 1), UnknownVariable);
    CHECK_THROWS_AS(parse_expr("", 1), SyntaxError);
}

TEST_CASE("precedence and associativity") {
    CHECK(parse_expr("2 + 3*4", 1).eval(0, {}, {}) == cplx(14, 0));
    CHECK(parse_expr("2*3^2", 1).eval(0, {}, {}) == cplx(18, 0));
    CHECK(parse_expr("2^3^2", 1).eval(0, {}, {}) == cplx(512, 0));  // right-assoc
    CHECK(parse_expr("-t^2", 1).eval(2, {}, {}) == cplx(4, 0));     // '-' binds in base
    CHECK(parse_expr("1 - 2 - 3", 1).eval(0, {}, {}) == cplx(-4, 0));
    CHECK(parse_expr("8/4/2", 1).eval(0, {}, {}) == cplx(1, 0));
}

TEST_CASE("imaginary literal") {
    CHECK(parse_expr("i*i", 1).eval(0, {}, {}) == cplx(-1, 0));
    CHECK(parse_expr("2 + 3*i", 1).eval(0, {}, {}) == cplx(2, 3));
}

TEST_CASE("eval examples") {
    Expr e = parse_expr("0.5*v^2 + y", 1);
    cplx r = e.eval(0.1, cplx(0, 0), {cplx(2, 0.1)});
    CHECK(std::abs(r - cplx(1.995, 0.2)) < 1e-14);

    CHECK(parse_expr("t", 1).eval(0.7, {}, {}) == cplx(0.7, 0));
    CHECK_THROWS_AS(parse_expr("1/(t-1)", 1).eval(1.0, {}, {}), DomainError);
    CHECK_THROWS_AS(parse_expr("log(t)", 1).eval(0.0, {}, {}), DomainError);
}

TEST_CASE("symbolic differentiation examples") {
    Expr L = parse_expr("0.5*v^2 + y", 1);
    Expr dLdv = L.diff({Var::V, 1});
    Expr dLdy = L.diff({Var::Y, 1});
    CHECK(dLdv.str() == "v1");
    CHECK(dLdy.str() == "1");

    Expr f = parse_expr("sin(v)*t", 1);
    Expr df = f.diff({Var::V, 1});
    for (double v = -1; v <= 1; v += 0.23) {
        const cplx got = df.eval(0.7, {}, {cplx(v, 0)});
        CHECK(std::abs(got - cplx(std::cos(v) * 0.7, 0)) < 1e-14);
    }
}

TEST_CASE("grad_lagrangian lengths match the order") {
    GradL g = grad_lagrangian(parse_expr("0.5*v2^2 + y", 2), 2);
    CHECK(g.dL_dv.size() == 2);
    CHECK(g.dL_dv[0].is_constant(cplx(0, 0)));
    CHECK(g.dL_dv[1].str() == "v2");
}

TEST_CASE("pretty-print parse round trip on canonical forms") {
    for (const char* src : {"0.5*v1^2 + y", "t*y - v1/2", "sin(t) + cos(y)", "exp(v1)*t^3",
                            "2 - t", "-(t + y)", "1/(1 + t^2)", "sqrt(t) + log(y)"}) {
        Expr e = parse_expr(src, 1);
        const std::string printed = e.str();
        Expr re = parse_expr(printed, 1);
        CHECK(re.str() == printed);  // printing is a fixed point
    }
}

TEST_CASE("derivatives agree with finite differences") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.2, 1.7);
    const char* srcs[] = {"0.5*v^2 + y", "sin(v)*t + y^2", "exp(y)*cos(v) + t*v",
                          "v^3 - y*v + t^2"};
    for (const char* src : srcs) {
        Expr L = parse_expr(src, 1);
        Expr dv = L.diff({Var::V, 1});
        Expr dy = L.diff({Var::Y, 1});
        for (int trial = 0; trial < 25; ++trial) {
            const double t = u(rng), y = u(rng), v = u(rng), eps = 1e-6;
            auto evalL = [&](double yy, double vv) {
                return L.eval(t, cplx(yy, 0), {cplx(vv, 0)}).real();
            };
            const double fd_v = (evalL(y, v + eps) - evalL(y, v - eps)) / (2 * eps);
            const double fd_y = (evalL(y + eps, v) - evalL(y - eps, v)) / (2 * eps);
            const double sv = dv.eval(t, cplx(y, 0), {cplx(v, 0)}).real();
            const double sy = dy.eval(t, cplx(y, 0), {cplx(v, 0)}).real();
            CHECK(std::abs(sv - fd_v) <= 1e-5 * (1.0 + std::abs(sv)));
            CHECK(std::abs(sy - fd_y) <= 1e-5 * (1.0 + std::abs(sy)));
        }
    }
}

TEST_CASE("real-coefficient derivatives stay real at real arguments") {
    Expr L = parse_expr("sin(v)*t + exp(y)", 1);
    Expr dv = L.diff({Var::V, 1});
    const cplx r = dv.eval(0.5, cplx(0.3, 0), {cplx(0.7, 0)});
    CHECK(std::abs(r.imag()) <= 1e-14);
}
