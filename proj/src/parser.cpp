#include "nsym/parser.hpp"

#include <cctype>

namespace nsym {

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Lexer {
  const std::string& text;
  std::size_t pos = 0;
  Tok tok = Tok::End;
  std::string ident;
  Rational number;
  std::size_t tok_pos = 0;

  explicit Lexer(const std::string& t) : text(t) { advance(); }

  void advance() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    tok_pos = pos;
    if (pos >= text.size()) {
      tok = Tok::End;
      return;
    }
    char c = text[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t start = pos;
      bool seen_dot = false;
      while (pos < text.size() &&
             (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.')) {
        if (text[pos] == '.') {
          if (seen_dot) throw ParseError("malformed number", pos);
          seen_dot = true;
        }
        ++pos;
      }
      auto r = rational_from_decimal(text.substr(start, pos - start));
      if (!r) throw ParseError("malformed number", start);
      number = *r;
      tok = Tok::Number;
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) ||
                                   text[pos] == '_')) {
        ++pos;
      }
      ident = text.substr(start, pos - start);
      tok = Tok::Ident;
      return;
    }
    ++pos;
    switch (c) {
      case '+': tok = Tok::Plus; return;
      case '-': tok = Tok::Minus; return;
      case '*': tok = Tok::Star; return;
      case '/': tok = Tok::Slash; return;
      case '^': tok = Tok::Caret; return;
      case '(': tok = Tok::LParen; return;
      case ')': tok = Tok::RParen; return;
      default: throw ParseError(std::string("unexpected character '") + c + "'", pos - 1);
    }
  }
};

struct Parser {
  Lexer lex;
  const SymbolTable& context;

  Parser(const std::string& text, const SymbolTable& ctx) : lex(text), context(ctx) {}

  Expr parse() {
    Expr e = parse_sum();
    if (lex.tok != Tok::End) throw ParseError("trailing input", lex.tok_pos);
    return e;
  }

  Expr parse_sum() {
    Expr e = parse_term();
    while (lex.tok == Tok::Plus || lex.tok == Tok::Minus) {
      bool minus = lex.tok == Tok::Minus;
      lex.advance();
      Expr rhs = parse_term();
      e = minus ? e - rhs : e + rhs;
    }
    return e;
  }

  Expr parse_term() {
    Expr e = parse_unary();
    while (lex.tok == Tok::Star || lex.tok == Tok::Slash) {
      bool div = lex.tok == Tok::Slash;
      lex.advance();
      Expr rhs = parse_unary();
      e = div ? Expr::product({e, Expr::power(rhs, Rational(-1))}) : e * rhs;
    }
    return e;
  }

  Expr parse_unary() {
    if (lex.tok == Tok::Minus) {
      lex.advance();
      return -parse_unary();
    }
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (lex.tok != Tok::Caret) return base;
    lex.advance();
    // Right-associative; exponent must reduce to an exact rational.
    Expr exp = (lex.tok == Tok::Minus) ? [&] {
      lex.advance();
      return -parse_power();
    }() : parse_power();
    Expr n = normalize(exp);
    if (n.kind() != NodeKind::Number)
      throw ParseError("exponent must be a rational constant", lex.tok_pos);
    return Expr::power(base, n.number_value());
  }

  Expr parse_atom() {
    switch (lex.tok) {
      case Tok::Number: {
        Rational r = lex.number;
        lex.advance();
        return Expr::number(r);
      }
      case Tok::Ident: {
        std::string name = lex.ident;
        std::size_t at = lex.tok_pos;
        lex.advance();
        if (lex.tok == Tok::LParen) {
          auto f = func_from_name(name);
          if (!f) throw ParseError("unknown function: " + name, at);
          lex.advance();
          Expr arg = parse_sum();
          if (lex.tok != Tok::RParen) throw ParseError("expected ')'", lex.tok_pos);
          lex.advance();
          return Expr::function(*f, arg);
        }
        Symbol s = context.find(name);
        if (!s.valid()) throw ParseError("unknown identifier: " + name, at);
        return Expr::symbol(s);
      }
      case Tok::LParen: {
        lex.advance();
        Expr e = parse_sum();
        if (lex.tok != Tok::RParen) throw ParseError("expected ')'", lex.tok_pos);
        lex.advance();
        return e;
      }
      default:
        throw ParseError("expected expression", lex.tok_pos);
    }
  }
};

}  // namespace

Expr parse_expression(const std::string& text, const SymbolTable& context) {
  Parser p(text, context);
  return p.parse();
}

}  // namespace nsym
