#include "detm/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <utility>

namespace detm::expr {

ParseError::ParseError(std::size_t offset, const std::string& message)
    : std::runtime_error("parse error at offset " + std::to_string(offset) + ": " + message),
      offset_(offset),
      detail_(message) {}

namespace {

struct FunctionInfo {
    std::string_view name;
    Function fn;
    std::size_t arity;
};

constexpr std::array<FunctionInfo, 10> kFunctions{{
    {"sin", Function::Sin, 1},
    {"cos", Function::Cos, 1},
    {"tan", Function::Tan, 1},
    {"exp", Function::Exp, 1},
    {"ln", Function::Ln, 1},
    {"sqrt", Function::Sqrt, 1},
    {"abs", Function::Abs, 1},
    {"min", Function::Min, 2},
    {"max", Function::Max, 2},
    {"pow", Function::Pow, 2},
}};

const FunctionInfo* find_function(std::string_view name) {
    for (const auto& f : kFunctions) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

NodePtr make(auto&& payload) {
    return std::make_shared<const Node>(Node{std::forward<decltype(payload)>(payload)});
}

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    NodePtr run() {
        skip_ws();
        if (pos_ == src_.size()) throw ParseError(pos_, "empty expression");
        NodePtr root = parse_expr();
        skip_ws();
        if (pos_ < src_.size()) {
            if (src_[pos_] == ')') throw ParseError(pos_, "unbalanced parentheses: unexpected ')'");
            throw ParseError(pos_, "trailing tokens after expression");
        }
        return root;
    }

    std::vector<std::string> take_vars() { return std::move(vars_); }

private:
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr parse_expr() {
        NodePtr lhs = parse_term();
        for (;;) {
            if (accept('+')) {
                lhs = make(Binary{BinaryOp::Add, lhs, parse_term()});
            } else if (accept('-')) {
                lhs = make(Binary{BinaryOp::Sub, lhs, parse_term()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_unary();
        for (;;) {
            if (accept('*')) {
                lhs = make(Binary{BinaryOp::Mul, lhs, parse_unary()});
            } else if (accept('/')) {
                lhs = make(Binary{BinaryOp::Div, lhs, parse_unary()});
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_unary() {
        if (accept('-')) return make(Negate{parse_unary()});
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_primary();
        if (accept('^')) return make(Binary{BinaryOp::Pow, base, parse_unary()});
        return base;
    }

    NodePtr parse_primary() {
        skip_ws();
        if (pos_ == src_.size()) throw ParseError(pos_, "unexpected end of expression");
        const char c = src_[pos_];
        if (c == '(') {
            const std::size_t open = pos_++;
            NodePtr inner = parse_expr();
            if (!accept(')')) {
                throw ParseError(pos_, "unbalanced parentheses: '(' at offset " + std::to_string(open) +
                                           " is never closed");
            }
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
        if (c == ')') throw ParseError(pos_, "unbalanced parentheses: unexpected ')'");
        throw ParseError(pos_, std::string("unexpected character '") + c + "'");
    }

    NodePtr parse_number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
                ++n;
            }
            return n;
        };
        std::size_t mantissa = digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            mantissa += digits();
        }
        if (mantissa == 0) throw ParseError(start, "malformed number");
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            const std::size_t save = pos_++;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (digits() == 0) pos_ = save;  // "2e" is 2 followed by identifier e
        }
        double value = 0.0;
        const auto* first = src_.data() + start;
        const auto* last = src_.data() + pos_;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec == std::errc::result_out_of_range) throw ParseError(start, "numeric literal out of range");
        if (ec != std::errc{} || ptr != last) throw ParseError(start, "malformed number");
        if (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
            throw ParseError(pos_, "implicit multiplication is not supported");
        }
        return make(Constant{value});
    }

    NodePtr parse_identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
            ++pos_;
        }
        std::string name(src_.substr(start, pos_ - start));
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '(') {
            const FunctionInfo* info = find_function(name);
            if (info == nullptr) throw ParseError(start, "unknown function '" + name + "'");
            ++pos_;
            std::vector<NodePtr> args;
            if (!accept(')')) {
                args.push_back(parse_expr());
                while (accept(',')) args.push_back(parse_expr());
                if (!accept(')')) {
                    throw ParseError(pos_, "unbalanced parentheses: call to '" + name + "' is never closed");
                }
            }
            if (args.size() != info->arity) {
                throw ParseError(start, "function '" + name + "' takes " + std::to_string(info->arity) +
                                            " argument(s), got " + std::to_string(args.size()));
            }
            return make(Call{info->fn, std::move(args)});
        }
        if (find_function(name) != nullptr) {
            throw ParseError(start, "function '" + name + "' used without arguments");
        }
        auto it = std::find(vars_.begin(), vars_.end(), name);
        const auto index = static_cast<std::size_t>(it - vars_.begin());
        if (it == vars_.end()) vars_.push_back(name);
        return make(Variable{std::move(name), index});
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::vector<std::string> vars_;
};

double checked_pow(double base, double exponent) {
    if (base < 0.0 && std::isfinite(exponent) && exponent != std::trunc(exponent)) {
        throw EvalError("domain error: negative base " + std::to_string(base) + " raised to non-integer power");
    }
    return std::pow(base, exponent);
}

template <class Lookup>
double eval_node(const Node& node, const Lookup& lookup) {
    return std::visit(
        [&](const auto& n) -> double {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Constant>) {
                return n.value;
            } else if constexpr (std::is_same_v<T, Variable>) {
                return lookup(n.index);
            } else if constexpr (std::is_same_v<T, Negate>) {
                return -eval_node(*n.operand, lookup);
            } else if constexpr (std::is_same_v<T, Binary>) {
                const double a = eval_node(*n.lhs, lookup);
                const double b = eval_node(*n.rhs, lookup);
                switch (n.op) {
                    case BinaryOp::Add: return a + b;
                    case BinaryOp::Sub: return a - b;
                    case BinaryOp::Mul: return a * b;
                    case BinaryOp::Div: return a / b;
                    case BinaryOp::Pow: return checked_pow(a, b);
                }
                return 0.0;
            } else {
                const double a = eval_node(*n.args[0], lookup);
                switch (n.fn) {
                    case Function::Sin: return std::sin(a);
                    case Function::Cos: return std::cos(a);
                    case Function::Tan: return std::tan(a);
                    case Function::Exp: return std::exp(a);
                    case Function::Ln:
                        if (!(a > 0.0)) throw EvalError("domain error: ln of non-positive value " + std::to_string(a));
                        return std::log(a);
                    case Function::Sqrt:
                        if (a < 0.0) throw EvalError("domain error: sqrt of negative value " + std::to_string(a));
                        return std::sqrt(a);
                    case Function::Abs: return std::fabs(a);
                    case Function::Min: return std::fmin(a, eval_node(*n.args[1], lookup));
                    case Function::Max: return std::fmax(a, eval_node(*n.args[1], lookup));
                    case Function::Pow: return checked_pow(a, eval_node(*n.args[1], lookup));
                }
                return 0.0;
            }
        },
        node.data);
}

void render(const Node& node, std::string& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Constant>) {
                std::array<char, 32> buf{};
                auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), n.value);
                out.append(buf.data(), ptr);
            } else if constexpr (std::is_same_v<T, Variable>) {
                out += n.name;
            } else if constexpr (std::is_same_v<T, Negate>) {
                out += "(-";
                render(*n.operand, out);
                out += ')';
            } else if constexpr (std::is_same_v<T, Binary>) {
                static constexpr std::array<char, 5> kSymbols{'+', '-', '*', '/', '^'};
                out += '(';
                render(*n.lhs, out);
                out += ' ';
                out += kSymbols[static_cast<std::size_t>(n.op)];
                out += ' ';
                render(*n.rhs, out);
                out += ')';
            } else {
                out += function_name(n.fn);
                out += '(';
                for (std::size_t i = 0; i < n.args.size(); ++i) {
                    if (i > 0) out += ", ";
                    render(*n.args[i], out);
                }
                out += ')';
            }
        },
        node.data);
}

}  // namespace

std::string_view function_name(Function fn) {
    for (const auto& f : kFunctions) {
        if (f.fn == fn) return f.name;
    }
    return "?";
}

std::size_t function_arity(Function fn) {
    for (const auto& f : kFunctions) {
        if (f.fn == fn) return f.arity;
    }
    return 0;
}

bool same_structure(const Node& a, const Node& b) {
    if (a.data.index() != b.data.index()) return false;
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b.data);
            if constexpr (std::is_same_v<T, Constant>) {
                return x.value == y.value;
            } else if constexpr (std::is_same_v<T, Variable>) {
                return x.name == y.name;
            } else if constexpr (std::is_same_v<T, Negate>) {
                return same_structure(*x.operand, *y.operand);
            } else if constexpr (std::is_same_v<T, Binary>) {
                return x.op == y.op && same_structure(*x.lhs, *y.lhs) && same_structure(*x.rhs, *y.rhs);
            } else {
                if (x.fn != y.fn || x.args.size() != y.args.size()) return false;
                for (std::size_t i = 0; i < x.args.size(); ++i) {
                    if (!same_structure(*x.args[i], *y.args[i])) return false;
                }
                return true;
            }
        },
        a.data);
}

Expression::Expression(NodePtr root, std::vector<std::string> free_vars, std::string source)
    : root_(std::move(root)), free_vars_(std::move(free_vars)), source_(std::move(source)) {}

Expression Expression::parse(std::string_view source) {
    Parser p(source);
    NodePtr root = p.run();
    return Expression(std::move(root), p.take_vars(), std::string(source));
}

double Expression::evaluate(const Bindings& bindings) const {
    std::vector<double> values;
    values.reserve(free_vars_.size());
    for (const auto& name : free_vars_) {
        auto it = bindings.find(name);
        if (it == bindings.end()) throw EvalError("unbound variable '" + name + "'");
        values.push_back(it->second);
    }
    return evaluate(values);
}

double Expression::evaluate(std::span<const double> values) const {
    if (values.size() < free_vars_.size()) throw EvalError("too few values for free variables");
    return eval_node(*root_, [&](std::size_t i) { return values[i]; });
}

bool Expression::depends_on(std::string_view name) const {
    return std::find(free_vars_.begin(), free_vars_.end(), name) != free_vars_.end();
}

std::string to_string(const Node& n) {
    std::string out;
    render(n, out);
    return out;
}

std::string to_string(const Expression& e) { return to_string(e.root()); }

BoundExpression::BoundExpression(Expression e, std::span<const std::string> layout) : expr_(std::move(e)) {
    slot_of_var_.reserve(expr_.free_vars().size());
    for (const auto& name : expr_.free_vars()) {
        auto it = std::find(layout.begin(), layout.end(), name);
        if (it == layout.end()) throw EvalError("variable '" + name + "' is not available here");
        slot_of_var_.push_back(static_cast<std::size_t>(it - layout.begin()));
    }
}

double BoundExpression::operator()(std::span<const double> slots) const {
    return eval_node(expr_.root(), [&](std::size_t i) { return slots[slot_of_var_[i]]; });
}

}  // namespace detm::expr
