#include <gtest/gtest.h>

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include "detm/expr.hpp"
#include "support.hpp"

using namespace detm::expr;

namespace {

// Evaluates while scanning, without building a tree. Same grammar and
// floating-point operations as the production evaluator, written separately.
class Reference {
public:
    Reference(std::string src, std::map<std::string, double> vars) : s_(std::move(src)), vars_(std::move(vars)) {}

    double run() {
        const double v = expr();
        ws();
        if (i_ != s_.size()) throw std::runtime_error("trailing input");
        return v;
    }

private:
    void ws() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    }
    bool eat(char c) {
        ws();
        if (i_ < s_.size() && s_[i_] == c) {
            ++i_;
            return true;
        }
        return false;
    }
    double expr() {
        double v = term();
        for (;;) {
            if (eat('+')) {
                v = v + term();
            } else if (eat('-')) {
                v = v - term();
            } else {
                return v;
            }
        }
    }
    double term() {
        double v = unary();
        for (;;) {
            if (eat('*')) {
                v = v * unary();
            } else if (eat('/')) {
                v = v / unary();
            } else {
                return v;
            }
        }
    }
    double unary() {
        if (eat('-')) return -unary();
        return power();
    }
    static double pw(double a, double b) {
        if (a < 0.0 && std::isfinite(b) && b != std::trunc(b)) throw std::domain_error("pow");
        return std::pow(a, b);
    }
    double power() {
        const double base = primary();
        if (eat('^')) return pw(base, unary());
        return base;
    }
    double primary() {
        ws();
        if (eat('(')) {
            const double v = expr();
            if (!eat(')')) throw std::runtime_error("paren");
            return v;
        }
        if (std::isdigit(static_cast<unsigned char>(s_[i_])) || s_[i_] == '.') {
            const char* begin = s_.c_str() + i_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            i_ += static_cast<std::size_t>(end - begin);
            return v;
        }
        std::size_t j = i_;
        while (j < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_')) ++j;
        const std::string name = s_.substr(i_, j - i_);
        i_ = j;
        if (eat('(')) {
            const double a = expr();
            std::optional<double> b;
            if (eat(',')) b = expr();
            if (!eat(')')) throw std::runtime_error("call");
            if (name == "sin") return std::sin(a);
            if (name == "cos") return std::cos(a);
            if (name == "tan") return std::tan(a);
            if (name == "exp") return std::exp(a);
            if (name == "abs") return std::abs(a);
            if (name == "ln") {
                if (!(a > 0.0)) throw std::domain_error("ln");
                return std::log(a);
            }
            if (name == "sqrt") {
                if (a < 0.0) throw std::domain_error("sqrt");
                return std::sqrt(a);
            }
            if (name == "min") return std::fmin(a, *b);
            if (name == "max") return std::fmax(a, *b);
            if (name == "pow") return pw(a, *b);
            throw std::runtime_error("fn");
        }
        return vars_.at(name);
    }

    std::string s_;
    std::map<std::string, double> vars_;
    std::size_t i_ = 0;
};

bool same_bits(double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return true;
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

double eval(std::string_view src, const Bindings& b = {}) { return Expression::parse(src).evaluate(b); }

}  // namespace

TEST(ExprParse, ConstantZero) {
    const auto e = Expression::parse("0");
    const auto* c = std::get_if<Constant>(&e.root().data);
    ASSERT_NE(c, nullptr);
    EXPECT_EQ(c->value, 0.0);
    EXPECT_TRUE(e.free_vars().empty());
}

TEST(ExprParse, SatelliteDriftTermTree) {
    const auto e = Expression::parse("0.1*sin(2*x1)");
    const auto* mul = std::get_if<Binary>(&e.root().data);
    ASSERT_NE(mul, nullptr);
    EXPECT_EQ(mul->op, BinaryOp::Mul);
    EXPECT_EQ(std::get<Constant>(mul->lhs->data).value, 0.1);
    const auto& call = std::get<Call>(mul->rhs->data);
    EXPECT_EQ(call.fn, Function::Sin);
    ASSERT_EQ(call.args.size(), 1u);
    const auto& inner = std::get<Binary>(call.args[0]->data);
    EXPECT_EQ(inner.op, BinaryOp::Mul);
    EXPECT_EQ(std::get<Constant>(inner.lhs->data).value, 2.0);
    EXPECT_EQ(std::get<Variable>(inner.rhs->data).name, "x1");
    EXPECT_EQ(e.free_vars(), std::vector<std::string>{"x1"});
}

TEST(ExprEval, PowerIsRightAssociative) {
    EXPECT_EQ(eval("2^3^2"), 512.0);
    EXPECT_EQ(eval("(2^3)^2"), 64.0);
}

TEST(ExprEval, NegationBindsLooserThanPower) {
    EXPECT_EQ(eval("-2^2"), -4.0);
    EXPECT_EQ(eval("(-2)^2"), 4.0);
    EXPECT_EQ(eval("2^-1"), 0.5);
    EXPECT_EQ(eval("--3"), 3.0);
}

TEST(ExprEval, Precedence) {
    EXPECT_EQ(eval("1 + 2 * 3"), 7.0);
    EXPECT_EQ(eval("8 / 4 / 2"), 1.0);
    EXPECT_EQ(eval("8 - 4 - 2"), 2.0);
    EXPECT_EQ(eval("2 * 3 ^ 2"), 18.0);
}

TEST(ExprEval, LinearCase) { EXPECT_EQ(eval("x1+x2", {{"x1", -2.0}, {"x2", 3.0}}), 1.0); }

TEST(ExprEval, SatelliteLyapunovAtInitialState) {
    const double x1 = -2.0;
    const double x2 = 3.0;
    const double s = std::sin(x1);
    const double by_hand = 47.0 / 36.0 * x1 * x1 + 10.0 / 9.0 * x1 * x2 + x2 * x2 - 0.2 * s * s;
    const double v = eval("47/36*x1^2+10/9*x1*x2+x2^2-1/5*sin(x1)^2", {{"x1", x1}, {"x2", x2}});
    EXPECT_NEAR(v, by_hand, 1e-14);
    EXPECT_NEAR(v, 7.390191193469194, 1e-13);
}

TEST(ExprEval, IdentityCase) { EXPECT_EQ(eval("exp(0)*sin(0)"), 0.0); }

TEST(ExprEval, FunctionsOfTwoArguments) {
    EXPECT_EQ(eval("min(3, -1)"), -1.0);
    EXPECT_EQ(eval("max(3, -1)"), 3.0);
    EXPECT_EQ(eval("pow(2, 10)"), 1024.0);
    EXPECT_EQ(eval("abs(-2.5)"), 2.5);
    EXPECT_EQ(eval("sqrt(16)"), 4.0);
    EXPECT_EQ(eval("ln(1)"), 0.0);
}

TEST(ExprEval, ScientificLiterals) {
    EXPECT_EQ(eval("1e3"), 1000.0);
    EXPECT_EQ(eval("2.5E-1"), 0.25);
    EXPECT_EQ(eval(".5"), 0.5);
}

TEST(ExprEval, DomainErrorsAreReported) {
    EXPECT_THROW(eval("ln(0)"), EvalError);
    EXPECT_THROW(eval("ln(-1)"), EvalError);
    EXPECT_THROW(eval("sqrt(-1)"), EvalError);
    EXPECT_THROW(eval("(-8)^(1/3)"), EvalError);
    EXPECT_THROW(eval("pow(-8, 0.5)"), EvalError);
    EXPECT_EQ(eval("(-2)^3"), -8.0);
}

TEST(ExprEval, DivisionByZeroIsInfinite) {
    EXPECT_EQ(eval("1/0"), std::numeric_limits<double>::infinity());
    EXPECT_EQ(eval("-1/0"), -std::numeric_limits<double>::infinity());
    EXPECT_EQ(eval("0^-1"), std::numeric_limits<double>::infinity());
}

TEST(ExprEval, UnboundVariable) {
    EXPECT_THROW(eval("x1 + 1"), EvalError);
    EXPECT_THROW(eval("x1 + y", {{"x1", 1.0}}), EvalError);
}

TEST(ExprParse, FreeVarsInFirstAppearanceOrder) {
    const auto e = Expression::parse("t + x2*x1 - t");
    EXPECT_EQ(e.free_vars(), (std::vector<std::string>{"t", "x2", "x1"}));
    EXPECT_TRUE(e.depends_on("x1"));
    EXPECT_FALSE(e.depends_on("x3"));
    const double vals[] = {1.0, 2.0, 3.0};
    EXPECT_EQ(e.evaluate(std::span<const double>(vals)), 1.0 + 2.0 * 3.0 - 1.0);
}

TEST(ExprParse, Errors) {
    auto offset_of = [](std::string_view src) -> std::optional<std::size_t> {
        try {
            Expression::parse(src);
        } catch (const ParseError& e) {
            return e.offset();
        }
        return std::nullopt;
    };
    EXPECT_TRUE(offset_of(""));
    EXPECT_TRUE(offset_of("   "));
    EXPECT_TRUE(offset_of("(x1 + 1"));
    EXPECT_TRUE(offset_of("x1 + 1)"));
    EXPECT_TRUE(offset_of("foo(1)"));
    EXPECT_TRUE(offset_of("1 2"));
    EXPECT_TRUE(offset_of("2x1"));
    EXPECT_TRUE(offset_of("sin + 1"));
    EXPECT_TRUE(offset_of("min(1)"));
    EXPECT_TRUE(offset_of("sin(1, 2)"));
    EXPECT_TRUE(offset_of("1 +"));
    EXPECT_TRUE(offset_of("1 $ 2"));
    EXPECT_EQ(offset_of("foo(1)"), 0u);
    EXPECT_EQ(offset_of("1 + 2 3"), 6u);
    EXPECT_EQ(offset_of("2x1"), 1u);
}

TEST(ExprEval, DeterministicBitForBit) {
    const auto e = Expression::parse("sin(x1)^2 + exp(-x1/3) * cos(x1*x1)");
    const Bindings b{{"x1", 0.731}};
    const double first = e.evaluate(b);
    for (int i = 0; i < 10; ++i) EXPECT_TRUE(same_bits(first, e.evaluate(b)));
}

TEST(ExprEval, ConcurrentEvaluationAgrees) {
    const auto e = Expression::parse("x1^3 - 2*sin(x1) + sqrt(abs(x1))");
    std::vector<double> results(8);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < results.size(); ++i) {
        threads.emplace_back([&, i] {
            double acc = 0.0;
            for (int k = 0; k < 2000; ++k) acc += e.evaluate(Bindings{{"x1", 0.001 * k}});
            results[i] = acc;
        });
    }
    for (auto& t : threads) t.join();
    for (double r : results) EXPECT_TRUE(same_bits(r, results[0]));
}

TEST(ExprBound, SlotLayout) {
    const std::vector<std::string> layout = {"x1", "x2", "u1", "t"};
    const BoundExpression f(Expression::parse("x2 - u1 * t"), layout);
    const double slots[] = {10.0, 3.0, 2.0, 0.5};
    EXPECT_EQ(f(slots), 2.0);
    EXPECT_THROW(BoundExpression(Expression::parse("x3"), layout), EvalError);
}

TEST(ExprProperty, MatchesReferenceEvaluatorOn1000RandomExpressions) {
    testing_support::Gen gen(20240611);
    const std::vector<std::string> vars = {"x1", "x2", "x3", "t"};
    int agreed_errors = 0;
    for (int n = 0; n < 1000; ++n) {
        const std::string src = gen.expression(gen.integer(1, 5), vars);
        Bindings b;
        std::map<std::string, double> plain;
        for (const auto& v : vars) {
            const double value = gen.uniform(-3.0, 3.0);
            b[v] = value;
            plain[v] = value;
        }
        std::optional<double> ours;
        std::optional<double> ref;
        try {
            ours = Expression::parse(src).evaluate(b);
        } catch (const EvalError&) {
        }
        try {
            ref = Reference(src, plain).run();
        } catch (const std::domain_error&) {
        }
        ASSERT_EQ(ours.has_value(), ref.has_value()) << src;
        if (ours) {
            ASSERT_TRUE(same_bits(*ours, *ref)) << src << ": " << *ours << " vs " << *ref;
        } else {
            ++agreed_errors;
        }
    }
    EXPECT_LT(agreed_errors, 500);
}

TEST(ExprProperty, PrettyPrintRoundTrip) {
    testing_support::Gen gen(7);
    const std::vector<std::string> vars = {"x1", "x2", "u1", "t"};
    for (int n = 0; n < 1000; ++n) {
        const std::string src = gen.expression(gen.integer(0, 6), vars);
        const auto e = Expression::parse(src);
        const std::string printed = to_string(e);
        const auto again = Expression::parse(printed);
        ASSERT_TRUE(same_structure(e.root(), again.root())) << src << " -> " << printed;
        EXPECT_EQ(to_string(again), printed);
    }
}

TEST(ExprProperty, EveryReferencedVariableIsFree) {
    testing_support::Gen gen(99);
    // None of these names occurs inside a function name.
    const std::vector<std::string> vars = {"x1", "x2", "y"};
    for (int n = 0; n < 300; ++n) {
        const std::string src = gen.expression(4, vars);
        const auto e = Expression::parse(src);
        for (const auto& v : vars) {
            const bool in_source = src.find(v) != std::string::npos;
            EXPECT_EQ(in_source, e.depends_on(v)) << src;
        }
    }
}
