#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mmslab/core.hpp"

namespace mmslab {

/// Arithmetic expressions over point coordinates, used for initial data in
/// scenario files: `1 + 0.5*cos(2*pi*x)`, `exp(-((x-0.5)^2 + (y-0.5)^2)/0.02)`.
///
/// Grammar: + - * / ^ (right associative), unary minus, parentheses, numeric
/// literals, the constants pi and e, variables x y z (coordinates 0..2) and
/// the functions sin cos tan exp log sqrt abs tanh floor min max pow.
class Expression {
public:
  explicit Expression(std::string text) : text_(std::move(text))
  {
    pos_ = 0;
    root_ = parse_sum();
    skip();
    if (pos_ != text_.size()) error("unexpected '" + std::string(1, text_[pos_]) + "'");
  }

  [[nodiscard]] double operator()(std::span<const double> coords) const { return root_->eval(coords); }
  [[nodiscard]] const std::string& text() const { return text_; }

private:
  struct Node {
    virtual ~Node() = default;
    [[nodiscard]] virtual double eval(std::span<const double> c) const = 0;
  };
  using Ptr = std::unique_ptr<Node>;

  struct Constant : Node {
    double v;
    explicit Constant(double x) : v(x) {}
    double eval(std::span<const double>) const override { return v; }
  };
  struct Variable : Node {
    std::size_t k;
    explicit Variable(std::size_t i) : k(i) {}
    double eval(std::span<const double> c) const override
    {
      if (k >= c.size()) fail("expression uses coordinate ", "xyz"[k], " on a ", c.size(), "-d space");
      return c[k];
    }
  };
  struct Binary : Node {
    char op;
    Ptr a, b;
    Binary(char o, Ptr l, Ptr r) : op(o), a(std::move(l)), b(std::move(r)) {}
    double eval(std::span<const double> c) const override
    {
      const double x = a->eval(c), y = b->eval(c);
      switch (op) {
      case '+': return x + y;
      case '-': return x - y;
      case '*': return x * y;
      case '/': return x / y;
      default: return std::pow(x, y);
      }
    }
  };
  struct Negate : Node {
    Ptr a;
    explicit Negate(Ptr x) : a(std::move(x)) {}
    double eval(std::span<const double> c) const override { return -a->eval(c); }
  };
  struct Call : Node {
    std::string name;
    std::vector<Ptr> args;
    double eval(std::span<const double> c) const override
    {
      const double x = args[0]->eval(c);
      if (args.size() == 2) {
        const double y = args[1]->eval(c);
        if (name == "min") return std::min(x, y);
        if (name == "max") return std::max(x, y);
        return std::pow(x, y);
      }
      if (name == "sin") return std::sin(x);
      if (name == "cos") return std::cos(x);
      if (name == "tan") return std::tan(x);
      if (name == "exp") return std::exp(x);
      if (name == "log") return std::log(x);
      if (name == "sqrt") return std::sqrt(x);
      if (name == "abs") return std::abs(x);
      if (name == "tanh") return std::tanh(x);
      return std::floor(x);
    }
  };

  [[noreturn]] void error(const std::string& what) const
  {
    fail("expression '", text_, "' at column ", pos_ + 1, ": ", what);
  }

  void skip()
  {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c)
  {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Ptr parse_sum()
  {
    Ptr lhs = parse_product();
    for (;;) {
      if (accept('+')) lhs = std::make_unique<Binary>('+', std::move(lhs), parse_product());
      else if (accept('-')) lhs = std::make_unique<Binary>('-', std::move(lhs), parse_product());
      else return lhs;
    }
  }

  Ptr parse_product()
  {
    Ptr lhs = parse_unary();
    for (;;) {
      if (accept('*')) lhs = std::make_unique<Binary>('*', std::move(lhs), parse_unary());
      else if (accept('/')) lhs = std::make_unique<Binary>('/', std::move(lhs), parse_unary());
      else return lhs;
    }
  }

  Ptr parse_unary()
  {
    if (accept('-')) return std::make_unique<Negate>(parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Ptr parse_power()
  {
    Ptr base = parse_atom();
    if (accept('^')) return std::make_unique<Binary>('^', std::move(base), parse_unary());
    return base;
  }

  Ptr parse_atom()
  {
    skip();
    if (pos_ >= text_.size()) error("unexpected end of input");
    if (accept('(')) {
      Ptr inner = parse_sum();
      if (!accept(')')) error("expected ')'");
      return inner;
    }
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(text_.substr(pos_), &used);
      } catch (const std::exception&) {
        error("bad number");
      }
      pos_ += used;
      return std::make_unique<Constant>(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
      const std::string name = text_.substr(start, pos_ - start);
      if (name == "pi") return std::make_unique<Constant>(3.14159265358979323846);
      if (name == "e") return std::make_unique<Constant>(2.71828182845904523536);
      if (name == "x") return std::make_unique<Variable>(0);
      if (name == "y") return std::make_unique<Variable>(1);
      if (name == "z") return std::make_unique<Variable>(2);
      static const std::map<std::string, std::size_t> arity{
          {"sin", 1}, {"cos", 1}, {"tan", 1}, {"exp", 1}, {"log", 1},  {"sqrt", 1}, {"abs", 1},
          {"tanh", 1}, {"floor", 1}, {"min", 2}, {"max", 2}, {"pow", 2}};
      const auto it = arity.find(name);
      if (it == arity.end()) {
        pos_ = start;
        error("unknown name '" + name + "'");
      }
      auto call = std::make_unique<Call>();
      call->name = name;
      if (!accept('(')) error("expected '(' after " + name);
      call->args.push_back(parse_sum());
      for (std::size_t k = 1; k < it->second; ++k) {
        if (!accept(',')) error(name + " takes " + std::to_string(it->second) + " arguments");
        call->args.push_back(parse_sum());
      }
      if (!accept(')')) error("expected ')'");
      return call;
    }
    error("unexpected '" + std::string(1, c) + "'");
  }

  std::string text_;
  std::size_t pos_ = 0;
  Ptr root_;
};

/// Evaluates an expression at every labelled point.
inline ScalarField evaluate_on(const Expression& e, const std::vector<std::vector<double>>& labels)
{
  ScalarField f(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    f[i] = e(labels[i]);
    if (!std::isfinite(f[i])) fail("expression '", e.text(), "' is not finite at point ", i);
  }
  return f;
}

} // namespace mmslab
