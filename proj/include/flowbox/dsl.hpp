#pragma once

// Field definition language.
//
//   field    := '(' expr (',' expr)* ')' | expr          (bare expr only for n = 1)
//   expr     := term (('+' | '-') term)*
//   term     := unary (('*' | '/') unary)*
//   unary    := '-' unary | power
//   power    := primary ('^' ['-'] integer)?
//   primary  := number | variable | function '(' args ')' | '(' expr ')'
//
// Variables are x1..xn, with aliases x, y, z for n <= 3. Functions: abs, sin,
// cos, exp, sqrt (one argument), min, max (two), ifge(c, a, b) = c >= 0 ? a : b.

#include "flowbox/common.hpp"
#include "flowbox/field.hpp"

#include <cctype>
#include <charconv>
#include <memory>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace flowbox::dsl {

enum class ParseErrorKind { lexical, syntax, unknown_identifier, arity, dimension_mismatch };

inline const char* to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::lexical: return "lexical error";
    case ParseErrorKind::syntax: return "syntax error";
    case ParseErrorKind::unknown_identifier: return "unknown identifier";
    case ParseErrorKind::arity: return "arity error";
    case ParseErrorKind::dimension_mismatch: return "dimension mismatch";
  }
  return "error";
}

class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, std::size_t position, const std::string& message)
      : Error(ErrorKind::parse, std::string(to_string(kind)) + " at column " +
                                    std::to_string(position + 1) + ": " + message),
        kind_(kind),
        position_(position),
        message_(message) {}

  ParseErrorKind parse_kind() const noexcept { return kind_; }
  /// Zero-based offset into the source.
  std::size_t position() const noexcept { return position_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ParseErrorKind kind_;
  std::size_t position_;
  std::string message_;
};

enum class Op {
  number,
  variable,
  add,
  sub,
  mul,
  div,
  neg,
  pow,
  abs,
  sin,
  cos,
  exp,
  sqrt,
  min,
  max,
  ifge,
};

struct Node {
  Op op = Op::number;
  double value = 0.0;  // number
  int index = 0;       // variable (zero-based) or integer exponent for pow
  std::vector<Node> args;
  std::size_t position = 0;
};

/// Same operators, literals, variables and shape; source positions ignored.
inline bool same_structure(const Node& a, const Node& b) {
  if (a.op != b.op || a.args.size() != b.args.size()) return false;
  if (a.op == Op::number && a.value != b.value) return false;
  if ((a.op == Op::variable || a.op == Op::pow) && a.index != b.index) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!same_structure(a.args[i], b.args[i])) return false;
  }
  return true;
}

struct FieldExpr {
  int dimension = 0;
  std::vector<Node> components;
};

inline bool same_structure(const FieldExpr& a, const FieldExpr& b) {
  if (a.dimension != b.dimension || a.components.size() != b.components.size()) return false;
  for (std::size_t i = 0; i < a.components.size(); ++i) {
    if (!same_structure(a.components[i], b.components[i])) return false;
  }
  return true;
}

namespace detail {

enum class Tok { number, ident, plus, minus, star, slash, caret, lparen, rparen, comma, end };

struct Token {
  Tok kind;
  std::string_view text;
  std::size_t position;
  double value = 0.0;
  bool integral = false;
};

inline std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::size_t start = i;
      bool integral = true;
      while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
      if (i < src.size() && src[i] == '.') {
        integral = false;
        ++i;
        while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
      }
      if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
        integral = false;
        std::size_t j = i + 1;
        if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
        if (j >= src.size() || !std::isdigit(static_cast<unsigned char>(src[j]))) {
          throw ParseError(ParseErrorKind::lexical, j, "malformed exponent in numeric literal");
        }
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        i = j;
      }
      const std::string_view text = src.substr(start, i - start);
      if (text == ".") throw ParseError(ParseErrorKind::lexical, start, "stray '.'");
      double value = 0.0;
      const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(value)) {
        throw ParseError(ParseErrorKind::lexical, start,
                         "numeric literal '" + std::string(text) + "' is not a finite double");
      }
      out.push_back({Tok::number, text, start, value, integral});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = i;
      while (i < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) {
        ++i;
      }
      out.push_back({Tok::ident, src.substr(start, i - start), start});
      continue;
    }
    Tok kind;
    switch (c) {
      case '+': kind = Tok::plus; break;
      case '-': kind = Tok::minus; break;
      case '*': kind = Tok::star; break;
      case '/': kind = Tok::slash; break;
      case '^': kind = Tok::caret; break;
      case '(': kind = Tok::lparen; break;
      case ')': kind = Tok::rparen; break;
      case ',': kind = Tok::comma; break;
      default:
        throw ParseError(ParseErrorKind::lexical, i,
                         std::string("unexpected character '") + c + "'");
    }
    out.push_back({kind, src.substr(i, 1), i});
    ++i;
  }
  out.push_back({Tok::end, {}, src.size()});
  return out;
}

struct FunctionInfo {
  std::string_view name;
  Op op;
  std::size_t arity;
};

inline constexpr FunctionInfo kFunctions[] = {
    {"abs", Op::abs, 1}, {"sin", Op::sin, 1}, {"cos", Op::cos, 1},   {"exp", Op::exp, 1},
    {"sqrt", Op::sqrt, 1}, {"min", Op::min, 2}, {"max", Op::max, 2}, {"ifge", Op::ifge, 3},
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, int dimension) : toks_(std::move(tokens)), dim_(dimension) {}

  FieldExpr parse_field() {
    FieldExpr out;
    out.dimension = dim_;
    if (dim_ == 1) {
      out.components.push_back(expr());
    } else {
      if (peek().kind != Tok::lparen) {
        throw ParseError(ParseErrorKind::dimension_mismatch, peek().position,
                         "expected a component list '(e1, ..., e" + std::to_string(dim_) + ")'");
      }
      const std::size_t open = advance().position;
      out.components.push_back(expr());
      while (peek().kind == Tok::comma) {
        advance();
        out.components.push_back(expr());
      }
      expect(Tok::rparen, "')' closing the component list");
      if (out.components.size() != static_cast<std::size_t>(dim_)) {
        throw ParseError(ParseErrorKind::dimension_mismatch, open,
                         "expected " + std::to_string(dim_) + " components, found " +
                             std::to_string(out.components.size()));
      }
    }
    if (peek().kind != Tok::end) {
      throw ParseError(ParseErrorKind::syntax, peek().position,
                       "unexpected '" + std::string(peek().text) + "' after expression");
    }
    return out;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& advance() { return toks_[pos_++]; }

  void expect(Tok kind, const char* what) {
    if (peek().kind != kind) {
      const std::string found = peek().kind == Tok::end ? "end of input" : "'" + std::string(peek().text) + "'";
      throw ParseError(ParseErrorKind::syntax, peek().position,
                       std::string("expected ") + what + ", found " + found);
    }
    advance();
  }

  static Node binary(Op op, Node lhs, Node rhs, std::size_t position) {
    Node n;
    n.op = op;
    n.position = position;
    n.args.push_back(std::move(lhs));
    n.args.push_back(std::move(rhs));
    return n;
  }

  Node expr() {
    Node lhs = term();
    while (peek().kind == Tok::plus || peek().kind == Tok::minus) {
      const Token& t = advance();
      lhs = binary(t.kind == Tok::plus ? Op::add : Op::sub, std::move(lhs), term(), t.position);
    }
    return lhs;
  }

  Node term() {
    Node lhs = unary();
    while (peek().kind == Tok::star || peek().kind == Tok::slash) {
      const Token& t = advance();
      lhs = binary(t.kind == Tok::star ? Op::mul : Op::div, std::move(lhs), unary(), t.position);
    }
    return lhs;
  }

  Node unary() {
    if (peek().kind == Tok::minus) {
      Node n;
      n.op = Op::neg;
      n.position = advance().position;
      n.args.push_back(unary());
      return n;
    }
    return power();
  }

  Node power() {
    Node base = primary();
    if (peek().kind != Tok::caret) return base;
    const std::size_t at = advance().position;
    bool negative = false;
    if (peek().kind == Tok::minus) {
      negative = true;
      advance();
    }
    const Token& t = peek();
    if (t.kind != Tok::number || !t.integral) {
      throw ParseError(ParseErrorKind::syntax, t.position, "exponent must be an integer literal");
    }
    advance();
    if (t.value > 1024.0) {
      throw ParseError(ParseErrorKind::syntax, t.position, "exponent too large");
    }
    Node n;
    n.op = Op::pow;
    n.position = at;
    n.index = static_cast<int>(t.value) * (negative ? -1 : 1);
    n.args.push_back(std::move(base));
    return n;
  }

  Node primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::number: {
        advance();
        Node n;
        n.op = Op::number;
        n.value = t.value;
        n.position = t.position;
        return n;
      }
      case Tok::lparen: {
        advance();
        Node inner = expr();
        expect(Tok::rparen, "')'");
        return inner;
      }
      case Tok::ident: return identifier();
      default: {
        const std::string found = t.kind == Tok::end ? "end of input" : "'" + std::string(t.text) + "'";
        throw ParseError(ParseErrorKind::syntax, t.position, "expected an operand, found " + found);
      }
    }
  }

  Node identifier() {
    const Token& t = advance();
    for (const auto& fn : kFunctions) {
      if (fn.name != t.text) continue;
      if (peek().kind != Tok::lparen) {
        throw ParseError(ParseErrorKind::syntax, peek().position,
                         "expected '(' after function '" + std::string(fn.name) + "'");
      }
      advance();
      Node n;
      n.op = fn.op;
      n.position = t.position;
      if (peek().kind != Tok::rparen) {
        n.args.push_back(expr());
        while (peek().kind == Tok::comma) {
          advance();
          n.args.push_back(expr());
        }
      }
      expect(Tok::rparen, "')' closing the argument list");
      if (n.args.size() != fn.arity) {
        throw ParseError(ParseErrorKind::arity, t.position,
                         std::string(fn.name) + " takes " + std::to_string(fn.arity) +
                             " argument(s), got " + std::to_string(n.args.size()));
      }
      return n;
    }
    const int index = variable_index(t.text);
    if (index < 0 || index >= dim_) {
      throw ParseError(ParseErrorKind::unknown_identifier, t.position,
                       "'" + std::string(t.text) + "' is not a function or a variable of a " +
                           std::to_string(dim_) + "-dimensional field");
    }
    Node n;
    n.op = Op::variable;
    n.index = index;
    n.position = t.position;
    return n;
  }

  int variable_index(std::string_view name) const {
    if (dim_ <= 3 && name.size() == 1) {
      if (name == "x") return 0;
      if (name == "y") return 1;
      if (name == "z") return 2;
    }
    if (name.size() >= 2 && name[0] == 'x' && name[1] != '0') {
      int k = 0;
      const auto res = std::from_chars(name.data() + 1, name.data() + name.size(), k);
      if (res.ec == std::errc() && res.ptr == name.data() + name.size() && k >= 1) return k - 1;
    }
    return -1;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int dim_;
};

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline const char* op_name(Op op) {
  for (const auto& fn : kFunctions) {
    if (fn.op == op) return fn.name.data();
  }
  return "";
}

}  // namespace detail

inline FieldExpr parse_field(std::string_view source, int dimension) {
  if (dimension < 1) throw Error(ErrorKind::input, "dimension must be positive");
  bool blank = true;
  for (char c : source) blank = blank && std::isspace(static_cast<unsigned char>(c));
  if (blank) throw ParseError(ParseErrorKind::syntax, 0, "empty field source");
  detail::Parser parser(detail::lex(source), dimension);
  return parser.parse_field();
}

/// Canonical, fully parenthesized text. Literals use the shortest decimal that
/// round-trips, so reparsing yields an identical tree.
inline std::string print(const Node& n) {
  switch (n.op) {
    case Op::number: {
      // negative literals only arise from hand-built trees
      const std::string s = detail::format_number(n.value);
      return n.value < 0.0 ? "(" + s + ")" : s;
    }
    case Op::variable: return "x" + std::to_string(n.index + 1);
    case Op::add: return "(" + print(n.args[0]) + " + " + print(n.args[1]) + ")";
    case Op::sub: return "(" + print(n.args[0]) + " - " + print(n.args[1]) + ")";
    case Op::mul: return "(" + print(n.args[0]) + " * " + print(n.args[1]) + ")";
    case Op::div: return "(" + print(n.args[0]) + " / " + print(n.args[1]) + ")";
    case Op::neg: return "(-" + print(n.args[0]) + ")";
    case Op::pow: return "(" + print(n.args[0]) + "^" + std::to_string(n.index) + ")";
    default: {
      std::string s = std::string(detail::op_name(n.op)) + "(";
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) s += ", ";
        s += print(n.args[i]);
      }
      return s + ")";
    }
  }
}

inline std::string print(const FieldExpr& e) {
  if (e.dimension == 1) return print(e.components.front());
  std::string s = "(";
  for (std::size_t i = 0; i < e.components.size(); ++i) {
    if (i) s += ", ";
    s += print(e.components[i]);
  }
  return s + ")";
}

inline double eval_node(const Node& n, const Point& x) {
  auto fail = [&](const std::string& why) -> double {
    throw Error(ErrorKind::evaluation, why + " in subexpression " + print(n) + " at " + format_point(x));
  };
  auto checked = [&](double v) { return std::isfinite(v) ? v : fail("non-finite result"); };
  switch (n.op) {
    case Op::number: return n.value;
    case Op::variable: return x[n.index];
    case Op::add: return checked(eval_node(n.args[0], x) + eval_node(n.args[1], x));
    case Op::sub: return checked(eval_node(n.args[0], x) - eval_node(n.args[1], x));
    case Op::mul: return checked(eval_node(n.args[0], x) * eval_node(n.args[1], x));
    case Op::div: {
      const double num = eval_node(n.args[0], x);
      const double den = eval_node(n.args[1], x);
      if (den == 0.0) return fail("division by zero");
      return checked(num / den);
    }
    case Op::neg: return -eval_node(n.args[0], x);
    case Op::pow: {
      const double b = eval_node(n.args[0], x);
      if (n.index < 0 && b == 0.0) return fail("division by zero");
      double r = 1.0;
      const int e = n.index < 0 ? -n.index : n.index;
      for (int k = 0; k < e; ++k) r *= b;
      return checked(n.index < 0 ? 1.0 / r : r);
    }
    case Op::abs: return std::abs(eval_node(n.args[0], x));
    case Op::sin: return std::sin(eval_node(n.args[0], x));
    case Op::cos: return std::cos(eval_node(n.args[0], x));
    case Op::exp: return checked(std::exp(eval_node(n.args[0], x)));
    case Op::sqrt: {
      const double a = eval_node(n.args[0], x);
      if (a < 0.0) return fail("square root of a negative number");
      return std::sqrt(a);
    }
    case Op::min: return std::min(eval_node(n.args[0], x), eval_node(n.args[1], x));
    case Op::max: return std::max(eval_node(n.args[0], x), eval_node(n.args[1], x));
    case Op::ifge:
      return eval_node(n.args[0], x) >= 0.0 ? eval_node(n.args[1], x) : eval_node(n.args[2], x);
  }
  return fail("unknown operator");
}

inline Point eval_expr(const FieldExpr& e, const Point& x) {
  if (x.size() != e.dimension) {
    throw Error(ErrorKind::input, "point dimension " + std::to_string(x.size()) +
                                      " does not match field dimension " + std::to_string(e.dimension));
  }
  Point out(e.dimension);
  for (int i = 0; i < e.dimension; ++i) out[i] = eval_node(e.components[i], x);
  return out;
}

/// Wraps a parsed expression as a VectorField on B(center, radius). No
/// constants are declared unless the caller supplies them.
inline VectorField make_field(std::string_view source, int dimension, const Point& center,
                              double radius, std::optional<double> lipschitz = std::nullopt) {
  auto expr = std::make_shared<const FieldExpr>(parse_field(source, dimension));
  VectorField f;
  f.dimension = dimension;
  f.evaluate = [expr](const Point& x) { return eval_expr(*expr, x); };
  f.domain_center = center;
  f.domain_radius = radius;
  f.known_lipschitz = lipschitz;
  f.label = "dsl:" + std::to_string(dimension) + ":" + std::string(source);
  return f;
}

}  // namespace flowbox::dsl
