#pragma once

#include <stdexcept>
#include <string>

#include "nsym/expr.hpp"
#include "nsym/symbol.hpp"

namespace nsym {

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t position)
      : std::runtime_error(msg + " (at position " + std::to_string(position) + ")"),
        pos(position) {}
  std::size_t pos;
};

/// Recursive-descent parser for the expression grammar:
/// integers, decimals (exact rationals), identifiers, + - * / ^ with the
/// usual precedence (^ right-associative), unary minus, parentheses and
/// f(expr) for the eight elementary functions. Velocities are written
/// "<coord>dot". Returns the raw (un-normalized) tree.
Expr parse_expression(const std::string& text, const SymbolTable& context);

}  // namespace nsym
