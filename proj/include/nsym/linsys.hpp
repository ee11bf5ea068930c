#pragma once

#include <string>
#include <vector>

#include "nsym/expr.hpp"
#include "nsym/rational.hpp"
#include "nsym/symbol.hpp"

namespace nsym {

using RatRow = std::vector<Rational>;
using RatMatrix = std::vector<RatRow>;

/// Determining-system matrix: rows are indexed by (equation, basis monomial)
/// pairs, columns by the unknowns, and M c = 0 holds exactly when every
/// equation vanishes identically.
struct LinearSystem {
  RatMatrix matrix;
  std::vector<Symbol> unknowns;
  std::vector<Expr> row_keys;  // the basis monomial behind each row
};

/// Collects homogeneous equations that are linear in the unknowns onto their
/// independent basis monomials. Throws NonLinearError for nonlinear occurrences
/// and for unknown-free (inhomogeneous) terms.
LinearSystem linear_system_extract(const std::vector<Expr>& equations,
                                   const std::vector<Symbol>& unknowns);

/// Exact nullspace basis via fraction-free (Bareiss) forward elimination and
/// rational back-substitution to reduced echelon form. Basis vectors are scaled
/// to integer entries with content 1 and positive first nonzero entry; the
/// result is canonical for the row space (invariant under row shuffling).
std::vector<RatRow> rational_nullspace(const RatMatrix& m, std::size_t ncols);

/// Sparse-row variant for large determining systems; same canonical result.
using SparseRatRow = std::vector<std::pair<std::size_t, Rational>>;
std::vector<RatRow> rational_nullspace_sparse(const std::vector<SparseRatRow>& rows,
                                              std::size_t ncols);

/// Rank of the matrix (exact).
std::size_t rational_rank(const RatMatrix& m, std::size_t ncols);

/// Solves for y with target == sum_i y_i * rows_i, if possible (exact).
/// Returns empty optional when target is outside the row span.
std::optional<RatRow> express_in_span(const RatMatrix& rows, const RatRow& target);

}  // namespace nsym
