#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "nsym/expr.hpp"
#include "nsym/symbol.hpp"

namespace nsym {

struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Symmetric nondegenerate metric g_ab(x) over a coordinate system.
/// Entries depend only on coordinates and constant parameters; nondegeneracy
/// is checked numerically at seeded random sample points.
class Metric {
 public:
  Metric(std::shared_ptr<SymbolTable> table, std::vector<Symbol> coords,
         std::vector<Symbol> params, std::vector<std::vector<Expr>> g,
         EvalPoint param_bindings = {}, std::uint64_t seed = 0xC0FFEEULL);

  std::size_t dim() const { return coords_.size(); }
  const std::vector<Symbol>& coords() const { return coords_; }
  const std::vector<Symbol>& params() const { return params_; }
  Symbol s() const { return table_->curve_parameter(); }
  const SymbolTable& table() const { return *table_; }
  std::shared_ptr<SymbolTable> table_ptr() const { return table_; }
  const Expr& g(std::size_t i, std::size_t j) const { return g_[i][j]; }
  const std::vector<std::vector<Expr>>& components() const { return g_; }
  const EvalPoint& param_bindings() const { return bindings_; }

  /// Sign pattern of the eigenvalues at the reference sample point.
  const std::vector<int>& signature() const { return signature_; }

 private:
  std::shared_ptr<SymbolTable> table_;
  std::vector<Symbol> coords_;
  std::vector<Symbol> params_;
  std::vector<std::vector<Expr>> g_;
  EvalPoint bindings_;
  std::vector<int> signature_;
};

/// Gamma^a_{bc}, symmetric in the lower pair.
struct ChristoffelTable {
  std::size_t n = 0;
  std::vector<Expr> entries;  // a*n*n + b*n + c
  const Expr& at(std::size_t a, std::size_t b, std::size_t c) const {
    return entries[a * n * n + b * n + c];
  }
};

/// R^a_{bcd} with the index antisymmetries of the curvature tensor.
struct RiemannTable {
  std::size_t n = 0;
  std::vector<Expr> entries;  // ((a*n + b)*n + c)*n + d
  const Expr& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return entries[((a * n + b) * n + c) * n + d];
  }
};

struct CurvatureReport {
  ChristoffelTable christoffel;
  RiemannTable riemann;
  bool flat = false;
  std::vector<std::vector<Symbol>> flat_sections;  // maximal, ordered by size desc
};

/// L = g_ab xdot^a xdot^b.
Expr lagrangian_of(const Metric& m);

/// Exact inverse by adjugate over determinant; throws MetricError when the
/// symbolic determinant normalizes to zero.
std::vector<std::vector<Expr>> inverse_metric(const Metric& m);

ChristoffelTable christoffel(const Metric& m);

RiemannTable riemann(const Metric& m);

/// True iff every Riemann component is zero; Undetermined checks propagate.
bool is_flat(const Metric& m);

/// Maximal coordinate subsets S that split off as a metric product factor
/// (cross-block entries zero, each block depending only on its own
/// coordinates) with flat induced metric. Ordered by size descending.
std::vector<std::vector<Symbol>> flat_orthogonal_sections(const Metric& m);

/// Killing equation check for a coordinate vector field eta^a(x).
/// eta must be free of s and velocities.
bool killing_check(const Metric& m, const std::vector<Expr>& eta);

/// Geodesic right-hand sides xddot^a = -Gamma^a_{bc} xdot^b xdot^c.
std::vector<Expr> geodesic_rhs(const Metric& m);

CurvatureReport curvature_report(const Metric& m);

}  // namespace nsym
