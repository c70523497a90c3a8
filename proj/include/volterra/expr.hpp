#pragma once

#include "volterra/core.hpp"

#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace volterra {

/// Small arithmetic expression language used for functionals and drivers:
/// + - * / ^, unary minus, numbers, named variables, `pi`, and the functions
/// exp log sin cos tan sqrt tanh abs pow. Expressions are differentiated
/// symbolically, which is what gives cylindrical functionals their analytic
/// partials.
class Expression {
    enum class Op { constant, variable, add, sub, mul, div, pow, neg, exp, log, sin, cos, tan, sqrt, tanh, abs, sign };

    struct Node {
        Op op;
        double value = 0.0;
        int var = -1;
        std::shared_ptr<const Node> a, b;
    };
    using NodePtr = std::shared_ptr<const Node>;

public:
    Expression() : root_(constant(0.0)) {}

    /// Parse `text` with variables named by `variables` (index = position).
    static Expression parse(std::string_view text, std::vector<std::string> variables) {
        Parser p{text, variables};
        Expression e;
        e.root_ = p.parse_all();
        e.variables_ = std::move(variables);
        e.text_ = std::string(text);
        return e;
    }

    static Expression constant_expression(double c, std::vector<std::string> variables = {}) {
        Expression e;
        e.root_ = constant(c);
        e.variables_ = std::move(variables);
        e.text_ = std::to_string(c);
        return e;
    }

    double operator()(std::span<const double> vars) const { return eval(*root_, vars); }

    Expression derivative(int var) const {
        Expression e;
        e.root_ = diff(root_, var);
        e.variables_ = variables_;
        e.text_ = "d(" + text_ + ")/d" + (var >= 0 && var < static_cast<int>(variables_.size()) ? variables_[var] : "?");
        return e;
    }

    bool depends_on(int var) const { return uses(*root_, var); }
    bool is_zero() const { return root_->op == Op::constant && root_->value == 0.0; }
    const std::string& text() const noexcept { return text_; }
    const std::vector<std::string>& variables() const noexcept { return variables_; }

private:
    static NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
        return std::make_shared<const Node>(Node{op, 0.0, -1, std::move(a), std::move(b)});
    }
    static NodePtr constant(double c) { return std::make_shared<const Node>(Node{Op::constant, c, -1, nullptr, nullptr}); }
    static NodePtr variable(int v) { return std::make_shared<const Node>(Node{Op::variable, 0.0, v, nullptr, nullptr}); }
    static bool is_const(const NodePtr& n, double c) { return n->op == Op::constant && n->value == c; }
    static bool is_const(const NodePtr& n) { return n->op == Op::constant; }

    // constructors with light constant folding
    static NodePtr add(NodePtr a, NodePtr b) {
        if (is_const(a, 0.0)) return b;
        if (is_const(b, 0.0)) return a;
        if (is_const(a) && is_const(b)) return constant(a->value + b->value);
        return make(Op::add, std::move(a), std::move(b));
    }
    static NodePtr sub(NodePtr a, NodePtr b) {
        if (is_const(b, 0.0)) return a;
        if (is_const(a, 0.0)) return neg(std::move(b));
        if (is_const(a) && is_const(b)) return constant(a->value - b->value);
        return make(Op::sub, std::move(a), std::move(b));
    }
    static NodePtr mul(NodePtr a, NodePtr b) {
        if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
        if (is_const(a, 1.0)) return b;
        if (is_const(b, 1.0)) return a;
        if (is_const(a) && is_const(b)) return constant(a->value * b->value);
        return make(Op::mul, std::move(a), std::move(b));
    }
    static NodePtr div(NodePtr a, NodePtr b) {
        if (is_const(a, 0.0)) return constant(0.0);
        if (is_const(b, 1.0)) return a;
        if (is_const(a) && is_const(b)) return constant(a->value / b->value);
        return make(Op::div, std::move(a), std::move(b));
    }
    static NodePtr neg(NodePtr a) {
        if (is_const(a)) return constant(-a->value);
        return make(Op::neg, std::move(a));
    }
    static NodePtr pow(NodePtr a, NodePtr b) {
        if (is_const(b, 0.0)) return constant(1.0);
        if (is_const(b, 1.0)) return a;
        if (is_const(a) && is_const(b)) return constant(std::pow(a->value, b->value));
        return make(Op::pow, std::move(a), std::move(b));
    }
    static NodePtr unary(Op op, NodePtr a) {
        if (is_const(a)) {
            Node tmp{op, 0.0, -1, a, nullptr};
            return constant(eval(tmp, {}));
        }
        return make(op, std::move(a));
    }

    static double eval(const Node& n, std::span<const double> v) {
        switch (n.op) {
            case Op::constant: return n.value;
            case Op::variable: return v[static_cast<std::size_t>(n.var)];
            case Op::add: return eval(*n.a, v) + eval(*n.b, v);
            case Op::sub: return eval(*n.a, v) - eval(*n.b, v);
            case Op::mul: return eval(*n.a, v) * eval(*n.b, v);
            case Op::div: return eval(*n.a, v) / eval(*n.b, v);
            case Op::pow: {
                const double base = eval(*n.a, v);
                if (n.b->op == Op::constant) {
                    const double e = n.b->value;
                    if (e == 2.0) return base * base;
                    if (e == 3.0) return base * base * base;
                }
                return std::pow(base, eval(*n.b, v));
            }
            case Op::neg: return -eval(*n.a, v);
            case Op::exp: return std::exp(eval(*n.a, v));
            case Op::log: return std::log(eval(*n.a, v));
            case Op::sin: return std::sin(eval(*n.a, v));
            case Op::cos: return std::cos(eval(*n.a, v));
            case Op::tan: return std::tan(eval(*n.a, v));
            case Op::sqrt: return std::sqrt(eval(*n.a, v));
            case Op::tanh: return std::tanh(eval(*n.a, v));
            case Op::abs: return std::abs(eval(*n.a, v));
            case Op::sign: {
                const double x = eval(*n.a, v);
                return static_cast<double>((x > 0.0) - (x < 0.0));
            }
        }
        return 0.0;
    }

    static bool uses(const Node& n, int var) {
        if (n.op == Op::variable) return n.var == var;
        return (n.a && uses(*n.a, var)) || (n.b && uses(*n.b, var));
    }

    static NodePtr diff(const NodePtr& n, int var) {
        const auto& a = n->a;
        const auto& b = n->b;
        switch (n->op) {
            case Op::constant: return constant(0.0);
            case Op::variable: return constant(n->var == var ? 1.0 : 0.0);
            case Op::add: return add(diff(a, var), diff(b, var));
            case Op::sub: return sub(diff(a, var), diff(b, var));
            case Op::mul: return add(mul(diff(a, var), b), mul(a, diff(b, var)));
            case Op::div: return div(sub(mul(diff(a, var), b), mul(a, diff(b, var))), mul(b, b));
            case Op::pow: {
                if (is_const(b)) return mul(mul(b, pow(a, constant(b->value - 1.0))), diff(a, var));
                // a^b (b' log a + b a'/a)
                return mul(n, add(mul(diff(b, var), unary(Op::log, a)), div(mul(b, diff(a, var)), a)));
            }
            case Op::neg: return neg(diff(a, var));
            case Op::exp: return mul(n, diff(a, var));
            case Op::log: return div(diff(a, var), a);
            case Op::sin: return mul(unary(Op::cos, a), diff(a, var));
            case Op::cos: return neg(mul(unary(Op::sin, a), diff(a, var)));
            case Op::tan: return mul(add(constant(1.0), mul(n, n)), diff(a, var));
            case Op::sqrt: return div(diff(a, var), mul(constant(2.0), n));
            case Op::tanh: return mul(sub(constant(1.0), mul(n, n)), diff(a, var));
            case Op::abs: return mul(unary(Op::sign, a), diff(a, var));
            case Op::sign: return constant(0.0);
        }
        return constant(0.0);
    }

    struct Parser {
        std::string_view s;
        const std::vector<std::string>& vars;
        std::size_t pos = 0;

        [[noreturn]] void fail(const std::string& msg) const {
            throw ConfigError("", "expression '" + std::string(s) + "': " + msg + " at offset " + std::to_string(pos));
        }
        void skip() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(char c) {
            skip();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }
        NodePtr parse_all() {
            auto n = parse_sum();
            skip();
            if (pos != s.size()) fail("unexpected trailing input");
            return n;
        }
        NodePtr parse_sum() {
            auto lhs = parse_product();
            for (;;) {
                if (eat('+')) lhs = add(lhs, parse_product());
                else if (eat('-')) lhs = sub(lhs, parse_product());
                else return lhs;
            }
        }
        NodePtr parse_product() {
            auto lhs = parse_unary();
            for (;;) {
                if (eat('*')) lhs = mul(lhs, parse_unary());
                else if (eat('/')) lhs = div(lhs, parse_unary());
                else return lhs;
            }
        }
        NodePtr parse_unary() {
            if (eat('-')) return neg(parse_unary());
            if (eat('+')) return parse_unary();
            return parse_power();
        }
        NodePtr parse_power() {
            auto base = parse_primary();
            if (eat('^')) return pow(base, parse_unary());
            return base;
        }
        NodePtr parse_primary() {
            skip();
            if (pos >= s.size()) fail("unexpected end of input");
            if (eat('(')) {
                auto n = parse_sum();
                if (!eat(')')) fail("expected ')'");
                return n;
            }
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                const std::string rest(s.substr(pos));
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(rest, &used);
                } catch (...) {
                    fail("malformed number");
                }
                pos += used;
                return constant(v);
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                const std::size_t start = pos;
                while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
                const std::string name(s.substr(start, pos - start));
                skip();
                if (pos < s.size() && s[pos] == '(') {
                    ++pos;
                    auto arg = parse_sum();
                    if (name == "pow") {
                        if (!eat(',')) fail("pow expects two arguments");
                        auto e = parse_sum();
                        if (!eat(')')) fail("expected ')'");
                        return Expression::pow(arg, e);
                    }
                    if (!eat(')')) fail("expected ')'");
                    static const std::pair<const char*, Op> functions[] = {
                        {"exp", Op::exp},   {"log", Op::log},   {"sin", Op::sin},   {"cos", Op::cos},
                        {"tan", Op::tan},   {"sqrt", Op::sqrt}, {"tanh", Op::tanh}, {"abs", Op::abs}};
                    for (const auto& [fname, op] : functions) {
                        if (name == fname) return unary(op, arg);
                    }
                    fail("unknown function '" + name + "'");
                }
                if (name == "pi") return constant(std::numbers::pi);
                for (std::size_t i = 0; i < vars.size(); ++i) {
                    if (vars[i] == name) return variable(static_cast<int>(i));
                }
                fail("unknown variable '" + name + "'");
            }
            fail(std::string("unexpected character '") + c + "'");
        }
    };

    NodePtr root_;
    std::vector<std::string> variables_;
    std::string text_ = "0";
};

}  // namespace volterra
