#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsym/rational.hpp"
#include "nsym/symbol.hpp"

namespace nsym {

class Expr;

enum class NodeKind { Number, SymbolRef, Sum, Product, Power, Function };

enum class FuncKind { Sin, Cos, Tan, Sinh, Cosh, Tanh, Exp, Log };

const char* func_name(FuncKind f);
std::optional<FuncKind> func_from_name(const std::string& name);

struct ExprNode {
  NodeKind kind;
  std::size_t hash = 0;
  Rational number;          // Number; also Power exponent
  Symbol symbol;            // SymbolRef
  FuncKind func{};          // Function
  std::vector<Expr> kids;   // Sum/Product children; Power base; Function argument
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a zero test can neither cancel symbolically nor find a
/// nonzero witness; callers must treat this as failure, never as zero.
struct UndeterminedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonPolynomialVelocity : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ZeroCheck { Zero, NonZero, Undetermined };

struct ZeroTestOptions {
  int trials = 16;
  std::uint64_t seed = 0x5eed5eedULL;
  double tol = 1e-9;  // relative
};

/// Immutable symbolic expression over exact rationals, symbols and the eight
/// elementary functions. All operations are pure; normalized values are in a
/// canonical sum-of-monomials form (flattened, constants folded, tan/tanh
/// rewritten as quotients, sin/sinh powers reduced below 2 per argument).
class Expr {
 public:
  Expr();  // the number 0
  explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}

  static Expr number(const Rational& r);
  static Expr number(long n);
  static Expr symbol(const Symbol& s);
  static Expr sum(std::vector<Expr> terms);
  static Expr product(std::vector<Expr> factors);
  static Expr power(Expr base, Rational exponent);
  static Expr function(FuncKind f, Expr arg);

  NodeKind kind() const { return node_->kind; }
  const Rational& number_value() const { return node_->number; }
  const Symbol& symbol_value() const { return node_->symbol; }
  FuncKind func_kind() const { return node_->func; }
  const std::vector<Expr>& children() const { return node_->kids; }
  std::size_t hash() const { return node_->hash; }
  const ExprNode* raw() const { return node_.get(); }

  bool is_number() const { return node_->kind == NodeKind::Number; }
  bool is_zero_literal() const { return is_number() && number_value() == 0; }
  bool is_one_literal() const { return is_number() && number_value() == 1; }

  Expr operator+(const Expr& o) const;
  Expr operator-(const Expr& o) const;
  Expr operator*(const Expr& o) const;
  Expr operator-() const;

  std::string to_string() const;

 private:
  std::shared_ptr<const ExprNode> node_;
};

/// Structural total order on expressions (used for canonical forms).
int expr_compare(const Expr& a, const Expr& b);
bool expr_equal(const Expr& a, const Expr& b);

/// Canonical rewriting; idempotent and semantics-preserving.
Expr normalize(const Expr& e);

/// Partial derivative; symbols other than v are independent. Result normalized.
Expr differentiate(const Expr& e, const Symbol& v);

/// Simultaneous substitution followed by normalization.
Expr substitute(const Expr& e, const std::map<Symbol, Expr>& bindings);

/// d/ds = d/ds + xdot^a d/dx^a + xddot^a d/dxdot^a over the given coordinates.
/// Accelerations stay symbolic unless `accelerations` maps them to expressions
/// (the on-shell geodesic right-hand sides).
Expr total_s_derivative(const Expr& e, const Symbol& s, const std::vector<Symbol>& coords,
                        const std::map<Symbol, Expr>* accelerations = nullptr);

using EvalPoint = std::map<Symbol, double>;

/// Floating evaluation. Throws EvalError on unassigned symbols or domain errors.
double eval_at(const Expr& e, const EvalPoint& point);

/// Decision procedure: exact cancellation after clearing function denominators,
/// with a seeded random-sampling fallback. Never reports Zero from sampling.
ZeroCheck check_zero(const Expr& e, const ZeroTestOptions& opts = {});

/// check_zero collapsed to bool; Undetermined raises UndeterminedError.
bool is_zero(const Expr& e, const ZeroTestOptions& opts = {});

/// Velocity multi-index: exponent per velocity symbol, sorted by symbol.
using VelocityIndex = std::vector<std::pair<Symbol, int>>;

/// Exhaustive grading of a velocity-polynomial expression.
/// Throws NonPolynomialVelocity when velocities occur with negative/fractional
/// exponents or inside function arguments.
std::map<VelocityIndex, Expr> velocity_coefficients(const Expr& e);

int total_degree(const VelocityIndex& idx);

/// All symbols occurring in e.
std::vector<Symbol> free_symbols(const Expr& e);
bool depends_on(const Expr& e, const Symbol& v);
bool depends_on_kind(const Expr& e, SymbolKind kind);

struct NonLinearError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One term of a decomposition e = sum of coeff * unknown * key.
struct LinearTerm {
  Rational coeff;
  Symbol unknown;     // invalid when the term is unknown-free
  Expr monomial_key;  // canonical coefficient-1 monomial in the non-unknowns
};

/// Splits e into terms linear in the given unknowns. Throws NonLinearError
/// when an unknown occurs with exponent != 1, twice in one term, or inside a
/// function argument or opaque base.
std::vector<LinearTerm> linear_decomposition(const Expr& e, const std::vector<Symbol>& unknowns);

/// Leading (canonically first) coefficient of the normalized form; 0 for zero.
Rational leading_coefficient(const Expr& e);

/// q with a == q*b exactly (nonzero rational), or nullopt.
std::optional<Rational> proportionality_ratio(const Expr& a, const Expr& b);

}  // namespace nsym
