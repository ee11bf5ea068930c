#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nsym/expr.hpp"
#include "nsym/linsys.hpp"
#include "nsym/metric.hpp"

namespace nsym {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Point-symmetry generator xi(s,x) d/ds + eta^a(s,x) d/dx^a.
struct Generator {
  Expr xi;
  std::vector<Expr> eta;
};

enum class SymmetryClass { Isometry, LagrangianTranslation, New };
const char* class_name(SymmetryClass c);

/// A verified symmetry: the residual certificate re-normalizes to zero.
struct NoetherSymmetry {
  Generator gen;
  Expr gauge;
  Expr residual_certificate;
  SymmetryClass cls = SymmetryClass::New;
};

struct ConservedQuantity {
  Expr value;
  std::size_t source = 0;  // index into the owning report's symmetry list
};

/// Velocity-degree >= 2 part of the would-be gauge equation; evidence that the
/// candidate is excluded (dA/ds cannot be quadratic in velocities).
struct QuadraticObstruction {
  std::map<VelocityIndex, Expr> coefficients;
};

struct CurlObstruction {
  std::string detail;
};

using GaugeOutcome = std::variant<Expr, QuadraticObstruction, CurlObstruction>;

/// Finite solution space for the determining equations: xi/eta range over
/// {s^j x^beta phi}, j <= s_degree, |beta| <= coord_degree, phi in closure;
/// the gauge ansatz runs one degree higher in both s and coordinates.
struct AnsatzBasis {
  int s_degree = 2;
  int coord_degree = 2;
  std::vector<Expr> extra_functions;
  std::vector<Expr> closure;  // function monomials, contains 1
};

/// Builds the ansatz basis: closure = square-free products of the supplied
/// function monomials, validated to be differentially closed in the algebra
/// sense. Throws SolverError when the closure fails to stabilize.
AnsatzBasis make_ansatz(const Metric& m, int s_degree, int coord_degree,
                        std::vector<Expr> extra_functions = {});

/// etadot^a = d eta^a/ds - xdot^a d xi/ds (velocity-free total derivative).
std::vector<Expr> prolongation(const Metric& m, const Generator& g);

/// X L + L dxi/ds - dA/ds, normalized; zero iff (g, A) is a Noether symmetry.
Expr noether_residual(const Metric& m, const Expr& L, const Generator& g, const Expr& A);

/// Recovers the gauge by velocity grading and line integration, or returns
/// the obstruction that blocks it.
GaugeOutcome derive_gauge(const Metric& m, const Expr& L, const Generator& g);

/// T = xi (xdot^a L_xdot^a - L) - eta^a L_xdot^a + A.
ConservedQuantity conserved_quantity(const Metric& m, const Expr& L, const NoetherSymmetry& sym,
                                     std::size_t source_index = 0);

SymmetryClass classify(const Metric& m, const NoetherSymmetry& sym);

/// Basis of the determining-equation solution space within the ansatz,
/// classification-aligned (isometries, then d/ds, then the rest) and
/// independently re-verified.
std::vector<NoetherSymmetry> solve_noether(const Metric& m, const AnsatzBasis& basis);

Generator lie_bracket(const Metric& m, const Generator& x, const Generator& y);

struct StructureConstants {
  bool closed = true;
  std::optional<std::pair<std::size_t, std::size_t>> offending_pair;
  // Nonzero c^k_ij for i < j; c is antisymmetric in (i, j).
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, Rational>> c;
};

/// Expresses each pairwise bracket in the span of syms (exact linear solve).
/// Throws std::invalid_argument when syms are linearly dependent.
StructureConstants structure_constants(const Metric& m, const std::vector<NoetherSymmetry>& syms);

struct PredictedCounts {
  long total = 0;
  long isometries = 0;
  long lagrangian = 0;
  long new_laws = 0;
};

/// Flat n-space census: total (n^2+3n+6)/2 of which n(n-1)/2+n isometries,
/// one Lagrangian translation and n+2 new.
PredictedCounts predicted_flat_count(long n);

struct ConjectureResult {
  std::vector<Symbol> section;
  bool form_clause = false;   // s d/dx^i lies in the span and classifies as New
  bool count_clause = false;  // number of New symmetries == section dimension
  std::vector<std::string> details;
};

/// Checks the new-law conjecture clauses against a solved basis on a non-flat
/// metric with a maximal flat orthogonal section.
/// Throws std::invalid_argument when the metric is flat or has no section.
ConjectureResult conjecture_check(const Metric& m, const std::vector<NoetherSymmetry>& syms,
                                  const std::vector<std::vector<Symbol>>& sections);

/// Runs derive_gauge on s d/ds and asserts the quadratic obstruction, whose
/// degree-2 coefficients are the negated metric quadratic form. A missing
/// obstruction aborts with SolverError.
QuadraticObstruction scaling_exclusion_check(const Metric& m);

/// Exact membership of a generator in the span of solved symmetries, up to
/// scale (parameter denominators of the target are cleared first).
bool span_contains(const Metric& m, const std::vector<NoetherSymmetry>& syms,
                   const Generator& target);

}  // namespace nsym
