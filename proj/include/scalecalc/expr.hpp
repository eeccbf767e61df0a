#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "scalecalc/errors.hpp"
#include "scalecalc/grid.hpp"

namespace scalecalc {

/// Variable slot in a Lagrangian L(t, y, v1..vn).
struct Var {
    enum Kind { T, Y, V } kind;
    int index = 1;  // for V: 1..n

    bool operator==(const Var& o) const { return kind == o.kind && (kind != V || index == o.index); }
};

enum class FnId { Sin, Cos, Exp, Log, Sqrt };

/**
 * Immutable arithmetic expression tree over t, y, v1..vn with complex
 * constants.  Nodes are shared; copies are cheap.
 */
class Expr {
public:
    enum class Kind { Constant, Variable, Add, Sub, Mul, Div, Pow, Neg, Call };

    struct Node {
        Kind kind;
        cplx value{};       // Constant
        Var var{};          // Variable
        FnId fn{};          // Call
        std::shared_ptr<const Node> lhs, rhs;
    };

    Expr() : node_(constant_node(cplx(0, 0))) {}
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

    static Expr constant(cplx c) { return Expr(constant_node(c)); }
    static Expr constant(double c) { return constant(cplx(c, 0.0)); }
    static Expr variable(Var v) {
        auto n = std::make_shared<Node>();
        n->kind = Kind::Variable;
        n->var = v;
        return Expr(std::move(n));
    }
    static Expr t() { return variable({Var::T, 1}); }
    static Expr y() { return variable({Var::Y, 1}); }
    static Expr v(int index = 1) { return variable({Var::V, index}); }

    const Node& node() const { return *node_; }
    Kind kind() const { return node_->kind; }
    bool is_constant() const { return node_->kind == Kind::Constant; }
    bool is_constant(cplx c) const { return is_constant() && node_->value == c; }
    cplx constant_value() const { return node_->value; }
    Expr lhs() const { return Expr(node_->lhs); }
    Expr rhs() const { return Expr(node_->rhs); }

    // --- smart constructors with light simplification ---

    friend Expr operator+(const Expr& a, const Expr& b) {
        if (a.is_constant() && b.is_constant()) return constant(a.constant_value() + b.constant_value());
        if (a.is_constant(cplx(0, 0))) return b;
        if (b.is_constant(cplx(0, 0))) return a;
        return binary(Kind::Add, a, b);
    }
    friend Expr operator-(const Expr& a, const Expr& b) {
        if (a.is_constant() && b.is_constant()) return constant(a.constant_value() - b.constant_value());
        if (b.is_constant(cplx(0, 0))) return a;
        if (a.is_constant(cplx(0, 0))) return -b;
        return binary(Kind::Sub, a, b);
    }
    friend Expr operator*(const Expr& a, const Expr& b) {
        if (a.is_constant() && b.is_constant()) return constant(a.constant_value() * b.constant_value());
        if (a.is_constant(cplx(0, 0)) || b.is_constant(cplx(0, 0))) return constant(0.0);
        if (a.is_constant(cplx(1, 0))) return b;
        if (b.is_constant(cplx(1, 0))) return a;
        // fold nested constant factors: c1*(c2*x) -> (c1*c2)*x
        if (a.is_constant() && b.kind() == Kind::Mul && b.lhs().is_constant())
            return constant(a.constant_value() * b.lhs().constant_value()) * b.rhs();
        if (b.is_constant() && a.kind() == Kind::Mul && a.lhs().is_constant())
            return constant(b.constant_value() * a.lhs().constant_value()) * a.rhs();
        return binary(Kind::Mul, a, b);
    }
    friend Expr operator/(const Expr& a, const Expr& b) {
        if (b.is_constant(cplx(1, 0))) return a;
        if (a.is_constant(cplx(0, 0)) && !b.is_constant(cplx(0, 0))) return constant(0.0);
        if (a.is_constant() && b.is_constant() && b.constant_value() != cplx(0, 0))
            return constant(a.constant_value() / b.constant_value());
        return binary(Kind::Div, a, b);
    }
    friend Expr operator-(const Expr& a) {
        if (a.is_constant()) return constant(-a.constant_value());
        if (a.kind() == Kind::Neg) return a.lhs();
        auto n = std::make_shared<Node>();
        n->kind = Kind::Neg;
        n->lhs = a.node_;
        return Expr(std::move(n));
    }
    static Expr pow(const Expr& base, const Expr& exponent) {
        if (exponent.is_constant(cplx(0, 0))) return constant(1.0);
        if (exponent.is_constant(cplx(1, 0))) return base;
        if (base.is_constant() && exponent.is_constant())
            return constant(eval_pow(base.constant_value(), exponent.constant_value()));
        return binary(Kind::Pow, base, exponent);
    }
    static Expr call(FnId fn, const Expr& arg) {
        auto n = std::make_shared<Node>();
        n->kind = Kind::Call;
        n->fn = fn;
        n->lhs = arg.node_;
        return Expr(std::move(n));
    }

    /// Highest v-index referenced (0 if none).
    int max_v_index() const { return max_v(*node_); }
    bool references(Var v) const { return refs(*node_, v); }

    /// Complex evaluation; log/sqrt on principal branches.
    cplx eval(double t, cplx y, const std::vector<cplx>& v) const { return eval_node(*node_, t, y, v); }

    Expr diff(Var wrt) const { return diff_node(*node_, wrt); }

    std::string str() const { return print(*node_, 0); }

private:
    std::shared_ptr<const Node> node_;

    static std::shared_ptr<const Node> constant_node(cplx c) {
        auto n = std::make_shared<Node>();
        n->kind = Kind::Constant;
        n->value = c;
        return n;
    }
    static Expr binary(Kind k, const Expr& a, const Expr& b) {
        auto n = std::make_shared<Node>();
        n->kind = k;
        n->lhs = a.node_;
        n->rhs = b.node_;
        return Expr(std::move(n));
    }

    static int max_v(const Node& n) {
        int m = 0;
        if (n.kind == Kind::Variable && n.var.kind == Var::V) m = n.var.index;
        if (n.lhs) m = std::max(m, max_v(*n.lhs));
        if (n.rhs) m = std::max(m, max_v(*n.rhs));
        return m;
    }
    static bool refs(const Node& n, Var v) {
        if (n.kind == Kind::Variable && n.var == v) return true;
        if (n.lhs && refs(*n.lhs, v)) return true;
        if (n.rhs && refs(*n.rhs, v)) return true;
        return false;
    }

    static bool near_integer(double x, long long& out) {
        const double r = std::round(x);
        if (std::abs(x - r) <= 1e-12 && std::abs(r) <= 1e6) {
            out = static_cast<long long>(r);
            return true;
        }
        return false;
    }

    // Integer powers by repeated multiplication so real bases stay exactly real.
    static cplx eval_pow(cplx base, cplx expo) {
        long long k;
        if (expo.imag() == 0.0 && near_integer(expo.real(), k)) {
            if (k < 0) {
                if (base == cplx(0, 0)) throw DomainError("0 raised to a negative power");
                return cplx(1, 0) / eval_pow(base, cplx(static_cast<double>(-k), 0));
            }
            cplx acc(1, 0), b = base;
            auto e = static_cast<unsigned long long>(k);
            while (e) {
                if (e & 1ULL) acc *= b;
                b *= b;
                e >>= 1ULL;
            }
            return acc;
        }
        if (base == cplx(0, 0)) {
            if (expo.real() > 0) return cplx(0, 0);
            throw DomainError("0 raised to a non-positive power");
        }
        return std::pow(base, expo);
    }

    static cplx eval_node(const Node& n, double t, cplx y, const std::vector<cplx>& v) {
        switch (n.kind) {
            case Kind::Constant: return n.value;
            case Kind::Variable:
                switch (n.var.kind) {
                    case Var::T: return cplx(t, 0);
                    case Var::Y: return y;
                    case Var::V:
                        if (n.var.index < 1 || static_cast<std::size_t>(n.var.index) > v.size())
                            throw OrderMismatch("v" + std::to_string(n.var.index) +
                                                " evaluated with order " + std::to_string(v.size()));
                        return v[static_cast<std::size_t>(n.var.index) - 1];
                }
                break;
            case Kind::Add: return eval_node(*n.lhs, t, y, v) + eval_node(*n.rhs, t, y, v);
            case Kind::Sub: return eval_node(*n.lhs, t, y, v) - eval_node(*n.rhs, t, y, v);
            case Kind::Mul: return eval_node(*n.lhs, t, y, v) * eval_node(*n.rhs, t, y, v);
            case Kind::Div: {
                const cplx den = eval_node(*n.rhs, t, y, v);
                if (den == cplx(0, 0)) throw DomainError("division by zero");
                return eval_node(*n.lhs, t, y, v) / den;
            }
            case Kind::Pow:
                return eval_pow(eval_node(*n.lhs, t, y, v), eval_node(*n.rhs, t, y, v));
            case Kind::Neg: return -eval_node(*n.lhs, t, y, v);
            case Kind::Call: {
                const cplx x = eval_node(*n.lhs, t, y, v);
                switch (n.fn) {
                    case FnId::Sin: return std::sin(x);
                    case FnId::Cos: return std::cos(x);
                    case FnId::Exp: return std::exp(x);
                    case FnId::Log:
                        if (x == cplx(0, 0)) throw DomainError("log of zero");
                        return std::log(x);
                    case FnId::Sqrt: return std::sqrt(x);
                }
            }
        }
        throw Error("eval: malformed expression node");
    }

    static Expr diff_node(const Node& n, Var wrt) {
        switch (n.kind) {
            case Kind::Constant: return constant(0.0);
            case Kind::Variable: return constant(n.var == wrt ? 1.0 : 0.0);
            case Kind::Add: return diff_node(*n.lhs, wrt) + diff_node(*n.rhs, wrt);
            case Kind::Sub: return diff_node(*n.lhs, wrt) - diff_node(*n.rhs, wrt);
            case Kind::Mul: {
                Expr a(n.lhs), b(n.rhs);
                return diff_node(*n.lhs, wrt) * b + a * diff_node(*n.rhs, wrt);
            }
            case Kind::Div: {
                Expr a(n.lhs), b(n.rhs);
                return (diff_node(*n.lhs, wrt) * b - a * diff_node(*n.rhs, wrt)) / (b * b);
            }
            case Kind::Pow: {
                Expr u(n.lhs), w(n.rhs);
                Expr du = diff_node(*n.lhs, wrt);
                if (w.is_constant()) {
                    const cplx c = w.constant_value();
                    return constant(c) * pow(u, constant(c - cplx(1, 0))) * du;
                }
                Expr dw = diff_node(*n.rhs, wrt);
                return pow(u, w) * (dw * call(FnId::Log, u) + w * du / u);
            }
            case Kind::Neg: return -diff_node(*n.lhs, wrt);
            case Kind::Call: {
                Expr u(n.lhs);
                Expr du = diff_node(*n.lhs, wrt);
                switch (n.fn) {
                    case FnId::Sin: return call(FnId::Cos, u) * du;
                    case FnId::Cos: return -(call(FnId::Sin, u) * du);
                    case FnId::Exp: return call(FnId::Exp, u) * du;
                    case FnId::Log: return du / u;
                    case FnId::Sqrt: return du / (constant(2.0) * call(FnId::Sqrt, u));
                }
            }
        }
        throw Error("diff: malformed expression node");
    }

    static std::string print_const(cplx c) {
        std::ostringstream os;
        os.precision(15);
        if (c.imag() == 0.0) {
            os << c.real();
        } else if (c.real() == 0.0) {
            if (c.imag() == 1.0) return "i";
            if (c.imag() == -1.0) return "-i";
            os << c.imag() << "*i";
        } else {
            os << "(" << c.real() << (c.imag() < 0 ? "-" : "+");
            const double ai = std::abs(c.imag());
            if (ai != 1.0) os << ai << "*";
            os << "i)";
        }
        return os.str();
    }

    // prec: 0 additive, 1 multiplicative, 2 power, 3 atom
    static std::string print(const Node& n, int parent_prec) {
        std::string s;
        int prec = 3;
        switch (n.kind) {
            case Kind::Constant: {
                s = print_const(n.value);
                if (!s.empty() && s[0] == '-') prec = 1;
                break;
            }
            case Kind::Variable:
                switch (n.var.kind) {
                    case Var::T: s = "t"; break;
                    case Var::Y: s = "y"; break;
                    case Var::V: s = "v" + std::to_string(n.var.index); break;
                }
                break;
            case Kind::Add:
                s = print(*n.lhs, 0) + " + " + print(*n.rhs, 1);
                prec = 0;
                break;
            case Kind::Sub:
                s = print(*n.lhs, 0) + " - " + print(*n.rhs, 1);
                prec = 0;
                break;
            case Kind::Mul:
                s = print(*n.lhs, 1) + "*" + print(*n.rhs, 2);
                prec = 1;
                break;
            case Kind::Div:
                s = print(*n.lhs, 1) + "/" + print(*n.rhs, 2);
                prec = 1;
                break;
            case Kind::Pow:
                s = print(*n.lhs, 3) + "^" + print(*n.rhs, 3);
                prec = 2;
                break;
            case Kind::Neg:
                s = "-" + print(*n.lhs, 2);
                prec = 1;
                break;
            case Kind::Call: {
                const char* name = "";
                switch (n.fn) {
                    case FnId::Sin: name = "sin"; break;
                    case FnId::Cos: name = "cos"; break;
                    case FnId::Exp: name = "exp"; break;
                    case FnId::Log: name = "log"; break;
                    case FnId::Sqrt: name = "sqrt"; break;
                }
                s = std::string(name) + "(" + print(*n.lhs, 0) + ")";
                break;
            }
        }
        if (prec < parent_prec) return "(" + s + ")";
        return s;
    }
};

/// Partial derivatives of a Lagrangian with respect to y and each v_i.
struct GradL {
    Expr dL_dy;
    std::vector<Expr> dL_dv;
};

inline GradL grad_lagrangian(const Expr& L, int order) {
    GradL g;
    g.dL_dy = L.diff({Var::Y, 1});
    for (int i = 1; i <= order; ++i) g.dL_dv.push_back(L.diff({Var::V, i}));
    return g;
}

namespace detail {

/**
 * Recursive-descent parser for the grammar
 *   expr   := term (('+'|'-') term)*
 *   term   := factor (('*'|'/') factor)*
 *   factor := base ('^' factor)?
 *   base   := number | 'i' | var | fn '(' expr ')' | '(' expr ')' | '-' base
 */
class Parser {
public:
    Parser(std::string src, int order) : src_(std::move(src)), order_(order) {}

    Expr parse() {
        skip_ws();
        if (pos_ >= src_.size()) throw SyntaxError("empty expression", 0);
        Expr e = parse_expr();
        skip_ws();
        if (pos_ < src_.size())
            throw SyntaxError("unexpected trailing input '" + src_.substr(pos_) + "'", pos_);
        return e;
    }

private:
    std::string src_;
    int order_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    Expr parse_expr() {
        Expr e = parse_term();
        for (;;) {
            const char c = peek();
            if (c == '+') { ++pos_; e = e + parse_term(); }
            else if (c == '-') { ++pos_; e = e - parse_term(); }
            else break;
        }
        return e;
    }
    Expr parse_term() {
        Expr e = parse_factor();
        for (;;) {
            const char c = peek();
            if (c == '*') { ++pos_; e = e * parse_factor(); }
            else if (c == '/') { ++pos_; e = e / parse_factor(); }
            else break;
        }
        return e;
    }
    Expr parse_factor() {
        Expr base = parse_base();
        if (peek() == '^') {
            ++pos_;
            skip_ws();
            if (pos_ >= src_.size()) throw SyntaxError("missing exponent after '^'", pos_);
            return Expr::pow(base, parse_factor());  // right-associative
        }
        return base;
    }
    Expr parse_base() {
        const char c = peek();
        if (c == '\0') throw SyntaxError("unexpected end of input", pos_);
        if (c == '-') { ++pos_; return -parse_base(); }
        if (c == '(') {
            ++pos_;
            Expr e = parse_expr();
            if (peek() != ')') throw SyntaxError("missing ')'", pos_);
            ++pos_;
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();
        throw SyntaxError(std::string("unexpected character '") + c + "'", pos_);
    }
    Expr parse_number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
            ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
            if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
                pos_ = p;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            }
        }
        try {
            return Expr::constant(std::stod(src_.substr(start, pos_ - start)));
        } catch (...) {
            throw SyntaxError("bad numeric literal", start);
        }
    }
    Expr parse_ident() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string id = src_.substr(start, pos_ - start);
        if (id == "i") return Expr::constant(cplx(0, 1));
        if (id == "t") return Expr::t();
        if (id == "y") return Expr::y();
        if (id == "v") return Expr::v(1);
        if (id.size() > 1 && id[0] == 'v' &&
            std::all_of(id.begin() + 1, id.end(),
                        [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            const int k = std::stoi(id.substr(1));
            if (k < 1 || k > order_)
                throw OrderMismatch("variable v" + std::to_string(k) + " exceeds declared order " +
                                    std::to_string(order_));
            return Expr::v(k);
        }
        FnId fn;
        if (id == "sin") fn = FnId::Sin;
        else if (id == "cos") fn = FnId::Cos;
        else if (id == "exp") fn = FnId::Exp;
        else if (id == "log") fn = FnId::Log;
        else if (id == "sqrt") fn = FnId::Sqrt;
        else throw UnknownVariable("unknown identifier '" + id + "' at position " + std::to_string(start));
        if (peek() != '(') throw SyntaxError("expected '(' after function name '" + id + "'", pos_);
        ++pos_;
        Expr arg = parse_expr();
        if (peek() != ')') throw SyntaxError("missing ')'", pos_);
        ++pos_;
        return Expr::call(fn, arg);
    }
};

} // namespace detail

inline Expr parse_expr(const std::string& src, int order) {
    if (order < 1) throw BadParams("parse_expr: order must be >= 1");
    if (src.empty()) throw SyntaxError("empty expression", 0);
    return detail::Parser(src, order).parse();
}

} // namespace scalecalc
