#pragma once

// Scalar arithmetic expressions for configuration-defined dynamics.
//
// Grammar (standard infix):
//
//     expr    := term  (('+' | '-') term)*
//     term    := unary (('*' | '/') unary)*
//     unary   := '-' unary | power
//     power   := primary ('^' unary)?          right-associative
//     primary := number | identifier | identifier '(' args ')' | '(' expr ')'
//
// Functions: sin cos tan exp ln sqrt abs (one argument), min max pow (two).
// There is no implicit multiplication: "2x1" is rejected.

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace detm::expr {

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t offset, const std::string& message);
    /// Byte offset into the source where the error was detected.
    std::size_t offset() const noexcept { return offset_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t offset_;
    std::string detail_;
};

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Function { Sin, Cos, Tan, Exp, Ln, Sqrt, Abs, Min, Max, Pow };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Constant {
    double value;
};
struct Variable {
    std::string name;
    std::size_t index;  // position in Expression::free_vars()
};
struct Negate {
    NodePtr operand;
};
struct Binary {
    BinaryOp op;
    NodePtr lhs;
    NodePtr rhs;
};
struct Call {
    Function fn;
    std::vector<NodePtr> args;
};

struct Node {
    std::variant<Constant, Variable, Negate, Binary, Call> data;
};

/// Structural equality of two trees (constants compared bitwise-equal).
bool same_structure(const Node& a, const Node& b);

std::string_view function_name(Function fn);
std::size_t function_arity(Function fn);

using Bindings = std::map<std::string, double, std::less<>>;

/// Immutable parsed expression. Copies share the tree.
class Expression {
public:
    /// Parses `source`; throws ParseError.
    static Expression parse(std::string_view source);

    const Node& root() const noexcept { return *root_; }
    /// Variable names in order of first appearance.
    const std::vector<std::string>& free_vars() const noexcept { return free_vars_; }
    const std::string& source() const noexcept { return source_; }

    /// Throws EvalError on an unbound variable or a domain error.
    double evaluate(const Bindings& bindings) const;
    /// `values[i]` is the value of `free_vars()[i]`.
    double evaluate(std::span<const double> values) const;

    bool depends_on(std::string_view name) const;

private:
    Expression(NodePtr root, std::vector<std::string> free_vars, std::string source);

    NodePtr root_;
    std::vector<std::string> free_vars_;
    std::string source_;
};

/// Fully parenthesized rendering; reparses to a structurally identical tree.
std::string to_string(const Expression& e);
std::string to_string(const Node& n);

/// An expression with its free variables resolved against a fixed slot
/// layout, so evaluation is a plain span lookup.
class BoundExpression {
public:
    BoundExpression() = default;
    /// Throws EvalError if a free variable is not in `layout`.
    BoundExpression(Expression e, std::span<const std::string> layout);

    double operator()(std::span<const double> slots) const;
    const Expression& expression() const noexcept { return expr_; }

private:
    Expression expr_ = Expression::parse("0");
    std::vector<std::size_t> slot_of_var_;
};

}  // namespace detm::expr
