#include "nsym/metric.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nsym {

namespace {

double numeric_det(std::vector<std::vector<double>> a) {
  std::size_t n = a.size();
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    if (a[piv][c] == 0.0) return 0.0;
    if (piv != c) {
      std::swap(a[piv], a[c]);
      det = -det;
    }
    det *= a[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return det;
}

// Jacobi eigenvalue sweep for small symmetric matrices; only the signs of the
// eigenvalues are consumed.
std::vector<int> eigen_signs(std::vector<std::vector<double>> a) {
  std::size_t n = a.size();
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    }
    if (off < 1e-18) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-15) continue;
        double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<int> signs;
  for (std::size_t i = 0; i < n; ++i) signs.push_back(a[i][i] > 0 ? 1 : (a[i][i] < 0 ? -1 : 0));
  std::sort(signs.rbegin(), signs.rend());
  return signs;
}

}  // namespace

Metric::Metric(std::shared_ptr<SymbolTable> table, std::vector<Symbol> coords,
               std::vector<Symbol> params, std::vector<std::vector<Expr>> g,
               EvalPoint param_bindings, std::uint64_t seed)
    : table_(std::move(table)),
      coords_(std::move(coords)),
      params_(std::move(params)),
      g_(std::move(g)),
      bindings_(std::move(param_bindings)) {
  std::size_t n = coords_.size();
  if (n == 0) throw MetricError("metric needs at least one coordinate");
  if (g_.size() != n) throw MetricError("metric matrix dimension mismatch");
  for (auto& row : g_) {
    if (row.size() != n) throw MetricError("metric matrix dimension mismatch");
    for (auto& e : row) e = normalize(e);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!expr_equal(g_[i][j], g_[j][i]))
        throw MetricError("metric not symmetric at (" + coords_[i].name() + "," +
                          coords_[j].name() + ")");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (const auto& sym : free_symbols(g_[i][j])) {
        bool ok = sym.kind() == SymbolKind::Coordinate || sym.kind() == SymbolKind::Parameter;
        if (!ok)
          throw MetricError("metric entry g[" + coords_[i].name() + "," + coords_[j].name() +
                            "] depends on " + sym.name());
      }
    }
  }

  // Numeric nondegeneracy at 8 random points; bound parameters use their
  // bindings, everything else samples from +-[0.1, 2].
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.1, 2.0);
  auto sample_point = [&](bool reference) {
    EvalPoint pt = bindings_;
    for (const auto& p : params_) {
      if (!pt.count(p)) pt[p] = reference ? 1.0 : (rng() % 2 ? mag(rng) : -mag(rng));
    }
    for (const auto& c : coords_) {
      pt[c] = reference ? 0.3 : (rng() % 2 ? mag(rng) : -mag(rng));
    }
    return pt;
  };
  int checked = 0, attempts = 0;
  bool have_signature = false;
  while (checked < 8 && attempts < 80) {
    ++attempts;
    EvalPoint pt = sample_point(attempts == 1);
    std::vector<std::vector<double>> num(n, std::vector<double>(n));
    double scale = 0;
    try {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          num[i][j] = eval_at(g_[i][j], pt);
          scale = std::max(scale, std::abs(num[i][j]));
        }
      }
    } catch (const EvalError&) {
      continue;
    }
    double det = numeric_det(num);
    if (std::abs(det) <= 1e-9 * std::max(1.0, std::pow(scale, double(n))))
      throw MetricError("metric numerically degenerate at a sample point");
    if (!have_signature) {
      signature_ = eigen_signs(num);
      have_signature = true;
    }
    ++checked;
  }
  if (checked < 8) throw MetricError("could not sample the metric at nondegenerate points");
}

Expr lagrangian_of(const Metric& m) {
  std::vector<Expr> terms;
  std::size_t n = m.dim();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (m.g(a, b).is_zero_literal()) continue;
      terms.push_back(m.g(a, b) * Expr::symbol(m.coords()[a].velocity()) *
                      Expr::symbol(m.coords()[b].velocity()));
    }
  }
  return normalize(Expr::sum(std::move(terms)));
}

namespace {

Expr matrix_det(const std::vector<std::vector<Expr>>& a) {
  std::size_t n = a.size();
  if (n == 1) return a[0][0];
  std::vector<Expr> terms;
  for (std::size_t j = 0; j < n; ++j) {
    if (a[0][j].is_zero_literal()) continue;
    std::vector<std::vector<Expr>> minor;
    for (std::size_t r = 1; r < n; ++r) {
      std::vector<Expr> row;
      for (std::size_t c = 0; c < n; ++c) {
        if (c != j) row.push_back(a[r][c]);
      }
      minor.push_back(std::move(row));
    }
    Expr term = a[0][j] * matrix_det(minor);
    terms.push_back(j % 2 == 0 ? term : -term);
  }
  return normalize(Expr::sum(std::move(terms)));
}

// Generic inverse used for both the metric and flat-section blocks.
std::vector<std::vector<Expr>> invert_matrix(const std::vector<std::vector<Expr>>& g) {
  std::size_t n = g.size();
  Expr det = matrix_det(g);
  if (check_zero(det) == ZeroCheck::Zero) throw MetricError("degenerate metric: det == 0");
  Expr inv_det = normalize(Expr::power(det, Rational(-1)));
  std::vector<std::vector<Expr>> inv(n, std::vector<Expr>(n, Expr::number(0)));
  if (n == 1) {
    inv[0][0] = inv_det;
    return inv;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<std::vector<Expr>> minor;
      for (std::size_t r = 0; r < n; ++r) {
        if (r == i) continue;
        std::vector<Expr> row;
        for (std::size_t c = 0; c < n; ++c) {
          if (c != j) row.push_back(g[r][c]);
        }
        minor.push_back(std::move(row));
      }
      Expr cof = matrix_det(minor);
      if ((i + j) % 2 == 1) cof = -cof;
      // Adjugate transposes the cofactor matrix.
      inv[j][i] = normalize(cof * inv_det);
    }
  }
  return inv;
}

ChristoffelTable christoffel_of(const std::vector<std::vector<Expr>>& g,
                                const std::vector<Symbol>& coords) {
  std::size_t n = coords.size();
  auto ginv = invert_matrix(g);
  ChristoffelTable t;
  t.n = n;
  t.entries.assign(n * n * n, Expr::number(0));
  // dg[d][b] = d g_db / d x^c stored as dg[d*n+b][c]
  std::vector<std::vector<Expr>> dg(n * n, std::vector<Expr>(n, Expr::number(0)));
  for (std::size_t d = 0; d < n; ++d) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < n; ++c) dg[d * n + b][c] = differentiate(g[d][b], coords[c]);
    }
  }
  Expr half = Expr::number(Rational(1, 2));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = b; c < n; ++c) {
        std::vector<Expr> terms;
        for (std::size_t d = 0; d < n; ++d) {
          if (ginv[a][d].is_zero_literal()) continue;
          Expr bracket = dg[d * n + c][b] + dg[b * n + d][c] - dg[b * n + c][d];
          terms.push_back(ginv[a][d] * bracket);
        }
        Expr val = normalize(half * Expr::sum(std::move(terms)));
        t.entries[a * n * n + b * n + c] = val;
        t.entries[a * n * n + c * n + b] = val;
      }
    }
  }
  return t;
}

RiemannTable riemann_of(const ChristoffelTable& gamma, const std::vector<Symbol>& coords) {
  std::size_t n = coords.size();
  RiemannTable t;
  t.n = n;
  t.entries.assign(n * n * n * n, Expr::number(0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t d = c + 1; d < n; ++d) {
          Expr val = differentiate(gamma.at(a, b, d), coords[c]) -
                     differentiate(gamma.at(a, b, c), coords[d]);
          std::vector<Expr> terms{val};
          for (std::size_t e = 0; e < n; ++e) {
            terms.push_back(gamma.at(a, c, e) * gamma.at(e, b, d));
            terms.push_back(-(gamma.at(a, d, e) * gamma.at(e, b, c)));
          }
          Expr r = normalize(Expr::sum(std::move(terms)));
          t.entries[((a * n + b) * n + c) * n + d] = r;
          t.entries[((a * n + b) * n + d) * n + c] = normalize(-r);
        }
      }
    }
  }
  return t;
}

bool table_is_zero(const RiemannTable& t) {
  for (const auto& e : t.entries) {
    switch (check_zero(e)) {
      case ZeroCheck::Zero: break;
      case ZeroCheck::NonZero: return false;
      case ZeroCheck::Undetermined:
        throw UndeterminedError("curvature component undetermined: " + e.to_string());
    }
  }
  return true;
}

}  // namespace

std::vector<std::vector<Expr>> inverse_metric(const Metric& m) {
  return invert_matrix(m.components());
}

ChristoffelTable christoffel(const Metric& m) {
  return christoffel_of(m.components(), m.coords());
}

RiemannTable riemann(const Metric& m) { return riemann_of(christoffel(m), m.coords()); }

bool is_flat(const Metric& m) { return table_is_zero(riemann(m)); }

std::vector<std::vector<Symbol>> flat_orthogonal_sections(const Metric& m) {
  std::size_t n = m.dim();
  const auto& coords = m.coords();
  std::vector<std::vector<std::size_t>> qualifying;

  for (std::size_t mask = 1; mask < (std::size_t(1) << n); ++mask) {
    std::vector<std::size_t> inside, outside;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t(1) << i)) {
        inside.push_back(i);
      } else {
        outside.push_back(i);
      }
    }
    auto depends_only_on = [&](const Expr& e, const std::vector<std::size_t>& allowed) {
      for (const auto& sym : free_symbols(e)) {
        if (sym.kind() != SymbolKind::Coordinate) continue;
        bool ok = false;
        for (auto k : allowed) {
          if (coords[k] == sym) ok = true;
        }
        if (!ok) return false;
      }
      return true;
    };
    bool ok = true;
    // (a) cross-block entries vanish
    for (auto i : inside) {
      for (auto j : outside) {
        if (check_zero(m.g(i, j)) != ZeroCheck::Zero) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
    }
    // (b) block entries depend only on block coordinates, both sides
    if (ok) {
      for (auto i : inside) {
        for (auto j : inside) {
          if (!depends_only_on(m.g(i, j), inside)) ok = false;
        }
      }
      for (auto i : outside) {
        for (auto j : outside) {
          if (!depends_only_on(m.g(i, j), outside)) ok = false;
        }
      }
    }
    // (c) the induced block metric is flat
    if (ok) {
      std::vector<Symbol> sub_coords;
      std::vector<std::vector<Expr>> sub_g(inside.size(), std::vector<Expr>(inside.size()));
      for (std::size_t a = 0; a < inside.size(); ++a) {
        sub_coords.push_back(coords[inside[a]]);
        for (std::size_t b = 0; b < inside.size(); ++b) sub_g[a][b] = m.g(inside[a], inside[b]);
      }
      ok = table_is_zero(riemann_of(christoffel_of(sub_g, sub_coords), sub_coords));
    }
    if (ok) qualifying.push_back(inside);
  }

  // Keep only maximal subsets.
  std::vector<std::vector<std::size_t>> maximal;
  for (const auto& s : qualifying) {
    bool contained = false;
    for (const auto& t : qualifying) {
      if (t.size() <= s.size()) continue;
      if (std::includes(t.begin(), t.end(), s.begin(), s.end())) contained = true;
    }
    if (!contained) maximal.push_back(s);
  }
  std::sort(maximal.begin(), maximal.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a < b;
  });
  std::vector<std::vector<Symbol>> out;
  for (const auto& s : maximal) {
    std::vector<Symbol> syms;
    for (auto i : s) syms.push_back(coords[i]);
    out.push_back(std::move(syms));
  }
  return out;
}

bool killing_check(const Metric& m, const std::vector<Expr>& eta) {
  std::size_t n = m.dim();
  if (eta.size() != n) throw std::invalid_argument("killing_check: wrong component count");
  for (const auto& e : eta) {
    if (depends_on_kind(e, SymbolKind::Velocity) || depends_on(e, m.s()))
      throw std::invalid_argument("killing_check: field must be free of s and velocities");
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      std::vector<Expr> terms;
      for (std::size_t c = 0; c < n; ++c) {
        terms.push_back(eta[c] * differentiate(m.g(a, b), m.coords()[c]));
        terms.push_back(m.g(c, b) * differentiate(eta[c], m.coords()[a]));
        terms.push_back(m.g(a, c) * differentiate(eta[c], m.coords()[b]));
      }
      switch (check_zero(Expr::sum(std::move(terms)))) {
        case ZeroCheck::Zero: break;
        case ZeroCheck::NonZero: return false;
        case ZeroCheck::Undetermined:
          throw UndeterminedError("killing equation undetermined");
      }
    }
  }
  return true;
}

std::vector<Expr> geodesic_rhs(const Metric& m) {
  std::size_t n = m.dim();
  auto gamma = christoffel(m);
  std::vector<Expr> rhs;
  rhs.reserve(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<Expr> terms;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < n; ++c) {
        if (gamma.at(a, b, c).is_zero_literal()) continue;
        terms.push_back(-(gamma.at(a, b, c) * Expr::symbol(m.coords()[b].velocity()) *
                          Expr::symbol(m.coords()[c].velocity())));
      }
    }
    rhs.push_back(normalize(Expr::sum(std::move(terms))));
  }
  return rhs;
}

CurvatureReport curvature_report(const Metric& m) {
  CurvatureReport r;
  r.christoffel = christoffel(m);
  r.riemann = riemann_of(r.christoffel, m.coords());
  r.flat = table_is_zero(r.riemann);
  r.flat_sections = flat_orthogonal_sections(m);
  return r;
}

}  // namespace nsym
