#include "nsym/linsys.hpp"

#include <algorithm>
#include <map>

namespace nsym {

namespace {

struct ExprLess {
  bool operator()(const Expr& a, const Expr& b) const { return expr_compare(a, b) < 0; }
};

// Sparse integer row: sorted (column, value) pairs, content 1, first value > 0.
using SparseRow = std::vector<std::pair<std::size_t, Integer>>;

SparseRow integerize_sparse(const std::vector<std::pair<std::size_t, Rational>>& entries) {
  Integer denlcm = 1;
  for (const auto& [c, r] : entries) denlcm = lcm(denlcm, rat_den(r));
  SparseRow out;
  out.reserve(entries.size());
  Integer content = 0;
  for (const auto& [c, r] : entries) {
    if (r == 0) continue;
    Integer e = rat_num(r) * (denlcm / rat_den(r));
    content = gcd(content, boost::multiprecision::abs(e));
    out.emplace_back(c, e);
  }
  if (out.empty()) return out;
  bool flip = out.front().second < 0;
  for (auto& [c, e] : out) {
    if (content > 1) e /= content;
    if (flip) e = -e;
  }
  return out;
}

struct Echelon {
  RatMatrix rows;                       // reduced echelon rows, full width
  std::vector<std::size_t> pivot_cols;  // pivot column per row, ascending
  std::vector<std::size_t> forced_zero; // columns eliminated by singleton rows
};

// Elimination pipeline: singleton propagation, deduplication, fraction-free
// (Bareiss) forward elimination on the compacted core, rational back
// substitution. The reduced echelon form is canonical for the row space.
Echelon reduced_echelon_sparse(std::vector<SparseRow> rows, std::size_t ncols) {
  std::vector<bool> forced(ncols, false);

  // Repeatedly force to zero every unknown pinned by a single-entry row.
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& row : rows) {
      if (row.size() == 1) {
        if (!forced[row[0].first]) {
          forced[row[0].first] = true;
          changed = true;
        }
      }
    }
    if (!changed) break;
    for (auto& row : rows) {
      row.erase(std::remove_if(row.begin(), row.end(),
                               [&](const auto& e) { return forced[e.first]; }),
                row.end());
    }
    rows.erase(std::remove_if(rows.begin(), rows.end(),
                              [](const SparseRow& r) { return r.empty(); }),
               rows.end());
    for (auto& row : rows) {
      // Re-normalize content/sign so dedup keys stay canonical.
      Integer content = 0;
      for (const auto& [c, e] : row) content = gcd(content, boost::multiprecision::abs(e));
      bool flip = !row.empty() && row.front().second < 0;
      for (auto& [c, e] : row) {
        if (content > 1) e /= content;
        if (flip) e = -e;
      }
    }
  }

  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

  // Compact the surviving columns.
  std::vector<std::size_t> active;
  {
    std::vector<bool> used(ncols, false);
    for (const auto& row : rows) {
      for (const auto& [c, e] : row) used[c] = true;
    }
    for (std::size_t c = 0; c < ncols; ++c) {
      if (used[c] && !forced[c]) active.push_back(c);
    }
  }
  std::vector<std::size_t> col_index(ncols, 0);
  for (std::size_t i = 0; i < active.size(); ++i) col_index[active[i]] = i;

  std::size_t nact = active.size();
  std::vector<std::vector<Integer>> work(rows.size(), std::vector<Integer>(nact, Integer(0)));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [c, e] : rows[i]) work[i][col_index[c]] = e;
  }

  // Bareiss forward elimination; every row below the pivot is updated so the
  // exact-division invariant holds.
  std::size_t nrows = work.size();
  std::size_t piv_row = 0;
  Integer prev = 1;
  std::vector<std::size_t> pivots;  // in active-column space
  for (std::size_t col = 0; col < nact && piv_row < nrows; ++col) {
    std::size_t sel = piv_row;
    while (sel < nrows && work[sel][col] == 0) ++sel;
    if (sel == nrows) continue;
    std::swap(work[piv_row], work[sel]);
    const Integer pivot = work[piv_row][col];
    for (std::size_t i = piv_row + 1; i < nrows; ++i) {
      const Integer factor = work[i][col];
      for (std::size_t j = col + 1; j < nact; ++j) {
        work[i][j] = (work[i][j] * pivot - work[piv_row][j] * factor) / prev;
      }
      work[i][col] = 0;
    }
    prev = pivot;
    pivots.push_back(col);
    ++piv_row;
  }

  // Back-substitute to reduced form (rational).
  std::size_t rank = pivots.size();
  RatMatrix red(rank, RatRow(nact, Rational(0)));
  for (std::size_t r = 0; r < rank; ++r) {
    for (std::size_t j = 0; j < nact; ++j) red[r][j] = Rational(work[r][j]);
  }
  for (std::size_t r = rank; r-- > 0;) {
    std::size_t pc = pivots[r];
    Rational pv = red[r][pc];
    for (auto& e : red[r]) e /= pv;
    for (std::size_t i = 0; i < r; ++i) {
      Rational f = red[i][pc];
      if (f == 0) continue;
      for (std::size_t j = 0; j < nact; ++j) red[i][j] -= f * red[r][j];
    }
  }

  Echelon out;
  out.rows.assign(rank, RatRow(ncols, Rational(0)));
  for (std::size_t r = 0; r < rank; ++r) {
    for (std::size_t j = 0; j < nact; ++j) out.rows[r][active[j]] = red[r][j];
  }
  out.pivot_cols.reserve(rank);
  for (auto p : pivots) out.pivot_cols.push_back(active[p]);
  for (std::size_t c = 0; c < ncols; ++c) {
    if (forced[c]) out.forced_zero.push_back(c);
  }
  return out;
}

std::vector<SparseRow> to_sparse(const RatMatrix& m) {
  std::vector<SparseRow> rows;
  rows.reserve(m.size());
  for (const auto& row : m) {
    std::vector<std::pair<std::size_t, Rational>> entries;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] != 0) entries.emplace_back(c, row[c]);
    }
    SparseRow sr = integerize_sparse(entries);
    if (!sr.empty()) rows.push_back(std::move(sr));
  }
  return rows;
}

std::vector<RatRow> nullspace_from_echelon(const Echelon& ech, std::size_t ncols) {
  std::vector<bool> is_pivot(ncols, false);
  for (auto c : ech.pivot_cols) is_pivot[c] = true;
  for (auto c : ech.forced_zero) is_pivot[c] = true;

  std::vector<RatRow> basis;
  for (std::size_t f = 0; f < ncols; ++f) {
    if (is_pivot[f]) continue;
    RatRow v(ncols, Rational(0));
    v[f] = 1;
    for (std::size_t r = 0; r < ech.pivot_cols.size(); ++r) {
      v[ech.pivot_cols[r]] = -ech.rows[r][f];
    }
    // Scale to integer entries, content 1, first nonzero positive.
    std::vector<std::pair<std::size_t, Rational>> entries;
    for (std::size_t c = 0; c < ncols; ++c) {
      if (v[c] != 0) entries.emplace_back(c, v[c]);
    }
    SparseRow iv = integerize_sparse(entries);
    RatRow out(ncols, Rational(0));
    for (const auto& [c, e] : iv) out[c] = Rational(e);
    basis.push_back(std::move(out));
  }
  return basis;
}

}  // namespace

LinearSystem linear_system_extract(const std::vector<Expr>& equations,
                                   const std::vector<Symbol>& unknowns) {
  LinearSystem sys;
  sys.unknowns = unknowns;
  std::map<std::uint32_t, std::size_t> column;
  for (std::size_t j = 0; j < unknowns.size(); ++j) column[unknowns[j].seq()] = j;

  for (const auto& eq : equations) {
    auto terms = linear_decomposition(eq, unknowns);
    std::map<Expr, RatRow, ExprLess> rows;  // per-equation, keyed by monomial
    for (const auto& t : terms) {
      if (!t.unknown.valid())
        throw NonLinearError("inhomogeneous term without unknown: " + t.monomial_key.to_string());
      auto [it, fresh] = rows.try_emplace(t.monomial_key, RatRow(unknowns.size(), Rational(0)));
      it->second[column.at(t.unknown.seq())] += t.coeff;
    }
    for (auto& [key, row] : rows) {
      bool all_zero =
          std::all_of(row.begin(), row.end(), [](const Rational& r) { return r == 0; });
      if (all_zero) continue;
      sys.matrix.push_back(std::move(row));
      sys.row_keys.push_back(key);
    }
  }
  return sys;
}

std::vector<RatRow> rational_nullspace(const RatMatrix& m, std::size_t ncols) {
  Echelon ech = reduced_echelon_sparse(to_sparse(m), ncols);
  return nullspace_from_echelon(ech, ncols);
}

std::vector<RatRow> rational_nullspace_sparse(const std::vector<SparseRatRow>& rows,
                                              std::size_t ncols) {
  std::vector<SparseRow> work;
  work.reserve(rows.size());
  for (const auto& row : rows) {
    auto sorted = row;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<std::size_t, Rational>> merged;
    for (const auto& [c, v] : sorted) {
      if (!merged.empty() && merged.back().first == c) {
        merged.back().second += v;
      } else {
        merged.emplace_back(c, v);
      }
    }
    SparseRow sr = integerize_sparse(merged);
    if (!sr.empty()) work.push_back(std::move(sr));
  }
  Echelon ech = reduced_echelon_sparse(std::move(work), ncols);
  return nullspace_from_echelon(ech, ncols);
}

std::size_t rational_rank(const RatMatrix& m, std::size_t ncols) {
  Echelon ech = reduced_echelon_sparse(to_sparse(m), ncols);
  return ech.pivot_cols.size() + ech.forced_zero.size();
}

std::optional<RatRow> express_in_span(const RatMatrix& rows, const RatRow& target) {
  // Solve rows^T y = target on the augmented system.
  std::size_t k = rows.size();
  std::size_t n = target.size();
  RatMatrix aug(n, RatRow(k + 1, Rational(0)));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < k; ++i) aug[j][i] = rows[i][j];
    aug[j][k] = target[j];
  }
  std::size_t piv_row = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pivots;  // (row, col)
  for (std::size_t col = 0; col < k && piv_row < n; ++col) {
    std::size_t sel = piv_row;
    while (sel < n && aug[sel][col] == 0) ++sel;
    if (sel == n) continue;
    std::swap(aug[piv_row], aug[sel]);
    Rational pv = aug[piv_row][col];
    for (auto& e : aug[piv_row]) e /= pv;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == piv_row) continue;
      Rational f = aug[i][col];
      if (f == 0) continue;
      for (std::size_t j = 0; j <= k; ++j) aug[i][j] -= f * aug[piv_row][j];
    }
    pivots.emplace_back(piv_row, col);
    ++piv_row;
  }
  for (std::size_t i = piv_row; i < n; ++i) {
    if (aug[i][k] != 0) return std::nullopt;
  }
  RatRow y(k, Rational(0));
  for (const auto& [r, c] : pivots) y[c] = aug[r][k];
  return y;
}

}  // namespace nsym
