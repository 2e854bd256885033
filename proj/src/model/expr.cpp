#include "jmgt/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "jmgt/errors.hpp"

namespace jmgt::model {

namespace {

// Recursive-descent parser over a fixed arithmetic grammar.
class Parser {
 public:
  Parser(const std::string& s, double x, double y) : s_(s), x_(x), y_(y) {}

  double parse() {
    const double v = expression();
    skip_ws();
    if (pos_ != s_.size()) {
      throw ConfigError("expression: trailing input at position " + std::to_string(pos_));
    }
    return v;
  }

 private:
  double expression() {
    double v = term();
    for (;;) {
      skip_ws();
      if (consume('+')) {
        v += term();
      } else if (consume('-')) {
        v -= term();
      } else {
        return v;
      }
    }
  }

  double term() {
    double v = factor();
    for (;;) {
      skip_ws();
      if (consume('*')) {
        v *= factor();
      } else if (consume('/')) {
        v /= factor();
      } else {
        return v;
      }
    }
  }

  double factor() {
    skip_ws();
    if (consume('-')) return -factor();
    if (consume('+')) return factor();
    if (consume('(')) {
      const double v = expression();
      expect(')');
      return v;
    }
    if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      return number();
    }
    return identifier();
  }

  double number() {
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) throw ConfigError("expression: invalid number");
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  double identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    const std::string name = s_.substr(start, pos_ - start);
    if (name.empty()) throw ConfigError("expression: unexpected character");
    if (name == "x") return x_;
    if (name == "y") return y_;
    if (name == "pi") return M_PI;
    if (name == "sin") return std::sin(parenthesized());
    if (name == "cos") return std::cos(parenthesized());
    if (name == "exp") return std::exp(parenthesized());
    throw ConfigError("expression: unknown identifier '" + name + "'");
  }

  double parenthesized() {
    skip_ws();
    expect('(');
    const double v = expression();
    expect(')');
    return v;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool consume(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!consume(c)) {
      throw ConfigError(std::string("expression: expected '") + c + "'");
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  double x_, y_;
};

}  // namespace

double eval_expression(const std::string& expr, double x, double y) {
  return Parser(expr, x, y).parse();
}

spectral::Field eval_on_grid(const std::string& expr, const spectral::Grid& grid) {
  spectral::Field f(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto xy = grid.coords(i);
    f[i] = eval_expression(expr, xy[0], xy[1]);
  }
  return f;
}

}  // namespace jmgt::model
