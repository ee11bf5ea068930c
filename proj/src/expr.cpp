#include "nsym/expr.hpp"

#include <boost/functional/hash.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace nsym {

namespace {

std::size_t hash_rational(const Rational& r) {
  boost::hash<Rational> h;
  return h(r);
}

std::size_t make_hash(NodeKind kind, const ExprNode& n) {
  std::size_t seed = static_cast<std::size_t>(kind) * 0x9e3779b97f4a7c15ULL;
  switch (kind) {
    case NodeKind::Number:
      boost::hash_combine(seed, hash_rational(n.number));
      break;
    case NodeKind::SymbolRef:
      boost::hash_combine(seed, n.symbol.seq());
      break;
    case NodeKind::Function:
      boost::hash_combine(seed, static_cast<int>(n.func));
      boost::hash_combine(seed, n.kids[0].hash());
      break;
    case NodeKind::Power:
      boost::hash_combine(seed, n.kids[0].hash());
      boost::hash_combine(seed, hash_rational(n.number));
      break;
    case NodeKind::Sum:
    case NodeKind::Product:
      for (const auto& k : n.kids) boost::hash_combine(seed, k.hash());
      break;
  }
  return seed;
}

// Nodes are hash-consed per thread: structurally equal trees share one node,
// so equality is usually a pointer comparison. Children of a candidate are
// interned already, which makes the bucket check shallow.
bool shallow_equal(const ExprNode& a, const ExprNode& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case NodeKind::Number:
      return a.number == b.number;
    case NodeKind::SymbolRef:
      return a.symbol.raw() == b.symbol.raw();
    case NodeKind::Function:
      if (a.func != b.func) return false;
      break;
    case NodeKind::Power:
      if (a.number != b.number) return false;
      break;
    default:
      break;
  }
  if (a.kids.size() != b.kids.size()) return false;
  for (std::size_t i = 0; i < a.kids.size(); ++i) {
    if (a.kids[i].raw() != b.kids[i].raw()) return false;
  }
  return true;
}

std::shared_ptr<const ExprNode> make_node(ExprNode n) {
  n.hash = make_hash(n.kind, n);
  thread_local std::unordered_map<std::size_t, std::vector<std::shared_ptr<const ExprNode>>>
      intern;
  auto& bucket = intern[n.hash];
  for (const auto& cand : bucket) {
    if (shallow_equal(*cand, n)) return cand;
  }
  auto sp = std::make_shared<const ExprNode>(std::move(n));
  bucket.push_back(sp);
  return sp;
}

}  // namespace

const char* func_name(FuncKind f) {
  switch (f) {
    case FuncKind::Sin: return "sin";
    case FuncKind::Cos: return "cos";
    case FuncKind::Tan: return "tan";
    case FuncKind::Sinh: return "sinh";
    case FuncKind::Cosh: return "cosh";
    case FuncKind::Tanh: return "tanh";
    case FuncKind::Exp: return "exp";
    case FuncKind::Log: return "log";
  }
  return "?";
}

std::optional<FuncKind> func_from_name(const std::string& name) {
  static const std::pair<const char*, FuncKind> table[] = {
      {"sin", FuncKind::Sin},   {"cos", FuncKind::Cos},   {"tan", FuncKind::Tan},
      {"sinh", FuncKind::Sinh}, {"cosh", FuncKind::Cosh}, {"tanh", FuncKind::Tanh},
      {"exp", FuncKind::Exp},   {"log", FuncKind::Log},
  };
  for (const auto& [n, f] : table) {
    if (name == n) return f;
  }
  return std::nullopt;
}

Expr::Expr() : node_(make_node(ExprNode{NodeKind::Number, 0, Rational(0), {}, {}, {}})) {}

Expr Expr::number(const Rational& r) {
  return Expr(make_node(ExprNode{NodeKind::Number, 0, r, {}, {}, {}}));
}
Expr Expr::number(long n) { return number(Rational(n)); }

Expr Expr::symbol(const Symbol& s) {
  ExprNode n{NodeKind::SymbolRef, 0, Rational(0), s, {}, {}};
  return Expr(make_node(std::move(n)));
}

Expr Expr::sum(std::vector<Expr> terms) {
  if (terms.empty()) return Expr::number(0);
  if (terms.size() == 1) return terms[0];
  ExprNode n{NodeKind::Sum, 0, Rational(0), {}, {}, std::move(terms)};
  return Expr(make_node(std::move(n)));
}

Expr Expr::product(std::vector<Expr> factors) {
  if (factors.empty()) return Expr::number(1);
  if (factors.size() == 1) return factors[0];
  ExprNode n{NodeKind::Product, 0, Rational(0), {}, {}, std::move(factors)};
  return Expr(make_node(std::move(n)));
}

Expr Expr::power(Expr base, Rational exponent) {
  ExprNode n{NodeKind::Power, 0, std::move(exponent), {}, {}, {std::move(base)}};
  return Expr(make_node(std::move(n)));
}

Expr Expr::function(FuncKind f, Expr arg) {
  ExprNode n{NodeKind::Function, 0, Rational(0), {}, f, {std::move(arg)}};
  return Expr(make_node(std::move(n)));
}

Expr Expr::operator+(const Expr& o) const { return Expr::sum({*this, o}); }
Expr Expr::operator-(const Expr& o) const { return Expr::sum({*this, -o}); }
Expr Expr::operator*(const Expr& o) const { return Expr::product({*this, o}); }
Expr Expr::operator-() const { return Expr::product({Expr::number(-1), *this}); }

int expr_compare(const Expr& a, const Expr& b) {
  if (a.raw() == b.raw()) return 0;
  auto rank = [](NodeKind k) {
    switch (k) {
      case NodeKind::Number: return 0;
      case NodeKind::SymbolRef: return 1;
      case NodeKind::Function: return 2;
      case NodeKind::Power: return 3;
      case NodeKind::Product: return 4;
      case NodeKind::Sum: return 5;
    }
    return 6;
  };
  if (rank(a.kind()) != rank(b.kind())) return rank(a.kind()) < rank(b.kind()) ? -1 : 1;
  switch (a.kind()) {
    case NodeKind::Number: {
      if (a.number_value() == b.number_value()) return 0;
      return a.number_value() < b.number_value() ? -1 : 1;
    }
    case NodeKind::SymbolRef: {
      auto sa = a.symbol_value().seq(), sb = b.symbol_value().seq();
      if (sa == sb) return 0;
      return sa < sb ? -1 : 1;
    }
    case NodeKind::Function: {
      if (a.func_kind() != b.func_kind())
        return static_cast<int>(a.func_kind()) < static_cast<int>(b.func_kind()) ? -1 : 1;
      return expr_compare(a.children()[0], b.children()[0]);
    }
    case NodeKind::Power: {
      int c = expr_compare(a.children()[0], b.children()[0]);
      if (c != 0) return c;
      if (a.number_value() == b.number_value()) return 0;
      return a.number_value() < b.number_value() ? -1 : 1;
    }
    case NodeKind::Sum:
    case NodeKind::Product: {
      std::size_t n = std::min(a.children().size(), b.children().size());
      for (std::size_t i = 0; i < n; ++i) {
        int c = expr_compare(a.children()[i], b.children()[i]);
        if (c != 0) return c;
      }
      if (a.children().size() == b.children().size()) return 0;
      return a.children().size() < b.children().size() ? -1 : 1;
    }
  }
  return 0;
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.raw() == b.raw()) return true;
  if (a.hash() != b.hash()) return false;
  return expr_compare(a, b) == 0;  // cross-thread nodes are not pointer-shared
}

// ---------------------------------------------------------------------------
// Internal polynomial form: map from monomial to rational coefficient, where a
// monomial is a sorted list of (atom, rational exponent) factors. Atoms are
// canonical subtrees: symbols, function applications, or opaque bases (sums
// and products kept whole under negative or fractional exponents).
// ---------------------------------------------------------------------------

namespace {

struct Factor {
  Expr atom;
  Rational exp;
};

struct Mono {
  std::vector<Factor> factors;  // sorted by atom order
  std::size_t hash = 0;

  void rehash() {
    std::size_t seed = 0x3c6ef372fe94f82aULL;
    for (const auto& f : factors) {
      boost::hash_combine(seed, f.atom.hash());
      boost::hash_combine(seed, hash_rational(f.exp));
    }
    hash = seed;
  }
};

struct MonoHash {
  std::size_t operator()(const Mono& m) const { return m.hash; }
};

struct MonoEq {
  bool operator()(const Mono& a, const Mono& b) const {
    if (a.hash != b.hash || a.factors.size() != b.factors.size()) return false;
    for (std::size_t i = 0; i < a.factors.size(); ++i) {
      if (!expr_equal(a.factors[i].atom, b.factors[i].atom)) return false;
      if (a.factors[i].exp != b.factors[i].exp) return false;
    }
    return true;
  }
};

struct MonoLess {
  bool operator()(const Mono& a, const Mono& b) const {
    std::size_t n = std::min(a.factors.size(), b.factors.size());
    for (std::size_t i = 0; i < n; ++i) {
      int c = expr_compare(a.factors[i].atom, b.factors[i].atom);
      if (c != 0) return c < 0;
      if (a.factors[i].exp != b.factors[i].exp) return a.factors[i].exp < b.factors[i].exp;
    }
    return a.factors.size() < b.factors.size();
  }
};

using Poly = std::unordered_map<Mono, Rational, MonoHash, MonoEq>;

Poly poly_zero() { return Poly{}; }

Poly poly_const(const Rational& r) {
  Poly p;
  if (r != 0) {
    Mono m;
    m.rehash();
    p.emplace(std::move(m), r);
  }
  return p;
}

void poly_add_term(Poly& p, Mono m, const Rational& c) {
  if (c == 0) return;
  auto it = p.find(m);
  if (it == p.end()) {
    p.emplace(std::move(m), c);
  } else {
    it->second += c;
    if (it->second == 0) p.erase(it);
  }
}

void poly_add_inplace(Poly& p, const Poly& q) {
  for (const auto& [m, c] : q) poly_add_term(p, m, c);
}

Poly mono_normal(Rational coeff, std::vector<Factor> factors);
Poly poly_mul(const Poly& a, const Poly& b);
Poly poly_pow_int(const Poly& p, long e);
Poly poly_of_expr(const Expr& e);
Expr expr_of_poly(const Poly& p);
Poly poly_pow_general(const Poly& p, const Rational& q);
Poly make_function(FuncKind f, const Poly& arg_poly);

// Memoization (nodes are interned, so pointers key structural identity).
constexpr std::size_t kCacheTermLimit = 4096;

struct PtrPairHash {
  std::size_t operator()(const std::pair<const void*, const void*>& p) const {
    std::size_t seed = std::hash<const void*>()(p.first);
    boost::hash_combine(seed, std::hash<const void*>()(p.second));
    return seed;
  }
};

bool is_opaque_sum(const Expr& atom) { return atom.kind() == NodeKind::Sum; }

// Factors needing the slow normalization path when they appear in a product.
bool factor_needs_rewrite(const Factor& f) {
  if (f.atom.kind() == NodeKind::Number) return true;
  if (f.atom.kind() == NodeKind::Function) {
    FuncKind fk = f.atom.func_kind();
    if (fk == FuncKind::Exp) return f.exp != 1;
    if (fk == FuncKind::Sin || fk == FuncKind::Sinh)
      return is_integer(f.exp) && f.exp >= 2;
    return false;
  }
  if (is_opaque_sum(f.atom)) return is_integer(f.exp) && f.exp > 0;
  return false;
}

const std::pair<const Mono, Rational>* poly_min_term(const Poly& p) {
  const std::pair<const Mono, Rational>* best = nullptr;
  MonoLess less;
  for (const auto& term : p) {
    if (!best || less(term.first, best->first)) best = &term;
  }
  return best;
}

Rational poly_leading(const Poly& p) {
  auto* t = poly_min_term(p);
  return t ? t->second : Rational(0);
}

Rational poly_content(const Poly& p) {
  Integer num_gcd = 0, den_lcm = 1;
  for (const auto& [m, c] : p) {
    num_gcd = gcd(num_gcd, boost::multiprecision::abs(rat_num(c)));
    den_lcm = lcm(den_lcm, rat_den(c));
  }
  if (num_gcd == 0) return Rational(1);
  return Rational(num_gcd, den_lcm);
}

Poly poly_scale(const Poly& p, const Rational& c) {
  Poly r;
  if (c == 0) return r;
  r.reserve(p.size());
  for (const auto& [m, k] : p) r.emplace(m, k * c);
  return r;
}

// Slow-path normalization of a flat factor list:
//  * merges equal atoms, folds rational-base powers,
//  * merges exp() factors into a single exp of the summed arguments,
//  * expands positive integer powers of opaque sums,
//  * rewrites sin^2 -> 1 - cos^2 and sinh^2 -> cosh^2 - 1.
Poly mono_normal(Rational coeff, std::vector<Factor> factors) {
  if (coeff == 0) return poly_zero();

  std::sort(factors.begin(), factors.end(), [](const Factor& x, const Factor& y) {
    return expr_compare(x.atom, y.atom) < 0;
  });
  std::vector<Factor> merged;
  for (auto& f : factors) {
    if (f.exp == 0) continue;
    if (!merged.empty() && expr_equal(merged.back().atom, f.atom)) {
      merged.back().exp += f.exp;
      if (merged.back().exp == 0) merged.pop_back();
    } else {
      merged.push_back(std::move(f));
    }
  }

  // Fold numeric atoms where exact; merge exp factors.
  std::vector<Factor> kept;
  Poly exp_arg;
  bool has_exp = false;
  for (auto& f : merged) {
    if (f.atom.kind() == NodeKind::Number) {
      if (auto v = rat_pow_exact(f.atom.number_value(), f.exp)) {
        coeff *= *v;
        continue;
      }
      kept.push_back(std::move(f));
      continue;
    }
    if (f.atom.kind() == NodeKind::Function && f.atom.func_kind() == FuncKind::Exp) {
      has_exp = true;
      poly_add_inplace(exp_arg, poly_scale(poly_of_expr(f.atom.children()[0]), f.exp));
      continue;
    }
    kept.push_back(std::move(f));
  }
  if (has_exp && !exp_arg.empty()) {
    kept.push_back(Factor{Expr::function(FuncKind::Exp, expr_of_poly(exp_arg)), Rational(1)});
    std::sort(kept.begin(), kept.end(), [](const Factor& x, const Factor& y) {
      return expr_compare(x.atom, y.atom) < 0;
    });
  }

  // Expansion triggers: opaque sums with positive integer exponents, and
  // sin/sinh with integer exponent >= 2.
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const Factor& f = kept[i];
    bool expand_sum = is_opaque_sum(f.atom) && is_integer(f.exp) && f.exp > 0;
    bool reduce_trig = false;
    if (f.atom.kind() == NodeKind::Function && is_integer(f.exp) && f.exp >= 2) {
      FuncKind fk = f.atom.func_kind();
      reduce_trig = (fk == FuncKind::Sin || fk == FuncKind::Sinh);
    }
    if (!expand_sum && !reduce_trig) continue;

    Factor picked = f;
    kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(i));
    Poly rest = mono_normal(coeff, std::move(kept));
    if (expand_sum) {
      long e = static_cast<long>(rat_num(picked.exp));
      thread_local std::unordered_map<std::pair<const void*, const void*>, Poly, PtrPairHash>
          pow_cache;
      auto key = std::make_pair(static_cast<const void*>(picked.atom.raw()),
                                reinterpret_cast<const void*>(static_cast<std::uintptr_t>(e)));
      auto it = pow_cache.find(key);
      if (it == pow_cache.end()) {
        Poly val = poly_pow_int(poly_of_expr(picked.atom), e);
        it = pow_cache.emplace(key, std::move(val)).first;
      }
      return poly_mul(rest, it->second);
    }
    long e = static_cast<long>(rat_num(picked.exp));
    long half = e / 2;
    long rem = e % 2;
    const Expr& u = picked.atom.children()[0];
    Poly square;  // sin^2 = 1 - cos^2 ; sinh^2 = cosh^2 - 1
    if (picked.atom.func_kind() == FuncKind::Sin) {
      poly_add_inplace(square, poly_const(Rational(1)));
      Mono m{{Factor{Expr::function(FuncKind::Cos, u), Rational(2)}}};
      m.rehash();
      poly_add_term(square, std::move(m), Rational(-1));
    } else {
      Mono m{{Factor{Expr::function(FuncKind::Cosh, u), Rational(2)}}};
      m.rehash();
      poly_add_term(square, std::move(m), Rational(1));
      poly_add_inplace(square, poly_const(Rational(-1)));
    }
    Poly out = poly_mul(rest, poly_pow_int(square, half));
    if (rem) {
      Mono m{{Factor{picked.atom, Rational(1)}}};
      m.rehash();
      Poly odd;
      odd.emplace(std::move(m), Rational(1));
      out = poly_mul(out, odd);
    }
    return out;
  }

  Mono m{std::move(kept)};
  m.rehash();
  Poly p;
  p.emplace(std::move(m), coeff);
  return p;
}

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly r;
  r.reserve(a.size() * std::min<std::size_t>(b.size(), 8));
  for (const auto& [ma, ca] : a) {
    for (const auto& [mb, cb] : b) {
      // Fast path: merge the two sorted factor lists; fall back to
      // mono_normal when a rewrite trigger shows up.
      std::vector<Factor> merged;
      merged.reserve(ma.factors.size() + mb.factors.size());
      bool slow = false;
      std::size_t i = 0, j = 0;
      while (i < ma.factors.size() && j < mb.factors.size()) {
        int cmp = expr_compare(ma.factors[i].atom, mb.factors[j].atom);
        if (cmp < 0) {
          merged.push_back(ma.factors[i++]);
        } else if (cmp > 0) {
          merged.push_back(mb.factors[j++]);
        } else {
          Factor f{ma.factors[i].atom, ma.factors[i].exp + mb.factors[j].exp};
          ++i;
          ++j;
          if (f.exp == 0) continue;
          if (factor_needs_rewrite(f)) slow = true;
          merged.push_back(std::move(f));
        }
      }
      for (; i < ma.factors.size(); ++i) merged.push_back(ma.factors[i]);
      for (; j < mb.factors.size(); ++j) merged.push_back(mb.factors[j]);
      if (!slow) {
        int exp_atoms = 0;
        for (const auto& f : merged) {
          if (factor_needs_rewrite(f)) {
            slow = true;
            break;
          }
          if (f.atom.kind() == NodeKind::Function && f.atom.func_kind() == FuncKind::Exp)
            ++exp_atoms;
        }
        if (exp_atoms > 1) slow = true;  // exp factors merge into one
      }
      if (slow) {
        poly_add_inplace(r, mono_normal(ca * cb, std::move(merged)));
      } else {
        Mono m{std::move(merged)};
        m.rehash();
        poly_add_term(r, std::move(m), ca * cb);
      }
    }
  }
  return r;
}

Poly poly_pow_int(const Poly& p, long e) {
  assert(e >= 0);
  Poly result = poly_const(Rational(1));
  Poly base = p;
  while (e > 0) {
    if (e & 1) result = poly_mul(result, base);
    e >>= 1;
    if (e) base = poly_mul(base, base);
  }
  return result;
}

// Canonical sign/content extraction: p = c * unit with the unit having
// positive leading coefficient and integer coprime coefficients.
std::pair<Rational, Poly> extract_unit(const Poly& p) {
  Rational c = poly_content(p);
  if (poly_leading(p) < 0) c = -c;
  return {c, poly_scale(p, Rational(1) / c)};
}

Poly poly_pow_general(const Poly& p, const Rational& q) {
  if (q == 0) return poly_const(Rational(1));
  if (p.empty()) {
    if (q > 0) return poly_zero();
    throw std::domain_error("zero base raised to a non-positive power");
  }
  if (is_integer(q)) {
    long e = static_cast<long>(rat_num(q));
    if (e > 0) return poly_pow_int(p, e);
    Poly b = poly_pow_int(p, -e);
    if (b.size() == 1) {
      const auto& [m, c] = *b.begin();
      std::vector<Factor> inv;
      inv.reserve(m.factors.size());
      for (const auto& f : m.factors) inv.push_back(Factor{f.atom, -f.exp});
      return mono_normal(Rational(1) / c, std::move(inv));
    }
    auto [content, unit] = extract_unit(b);
    Expr atom = expr_of_poly(unit);
    return mono_normal(rat_pow(content, -1), {Factor{atom, Rational(-1)}});
  }
  // Fractional exponent.
  if (p.size() == 1) {
    const auto& [m, c] = *p.begin();
    Rational out_coeff(1);
    Rational base_coeff = c;
    if (auto exact = rat_pow_exact(c, q)) {
      out_coeff = *exact;
      base_coeff = 1;
    }
    if (base_coeff == 1) {
      if (m.factors.empty()) return poly_const(out_coeff);
      if (m.factors.size() == 1 && m.factors[0].exp == 1) {
        return mono_normal(out_coeff, {Factor{m.factors[0].atom, q}});
      }
      Poly inner;
      inner.emplace(m, Rational(1));
      return mono_normal(out_coeff, {Factor{expr_of_poly(inner), q}});
    }
  }
  return mono_normal(Rational(1), {Factor{expr_of_poly(p), q}});
}

// Builds f(arg) as a polynomial: folds exact values, canonicalizes the
// argument sign by parity, rewrites tan/tanh as quotients.
Poly make_function(FuncKind f, const Poly& arg_poly) {
  if (f == FuncKind::Tan || f == FuncKind::Tanh) {
    FuncKind num = (f == FuncKind::Tan) ? FuncKind::Sin : FuncKind::Sinh;
    FuncKind den = (f == FuncKind::Tan) ? FuncKind::Cos : FuncKind::Cosh;
    return poly_mul(make_function(num, arg_poly),
                    poly_pow_general(make_function(den, arg_poly), Rational(-1)));
  }
  if (arg_poly.empty()) {
    switch (f) {
      case FuncKind::Sin:
      case FuncKind::Sinh: return poly_zero();
      case FuncKind::Cos:
      case FuncKind::Cosh:
      case FuncKind::Exp: return poly_const(Rational(1));
      default: break;
    }
  }
  if (f == FuncKind::Log && arg_poly.size() == 1 && arg_poly.begin()->first.factors.empty() &&
      arg_poly.begin()->second == 1) {
    return poly_zero();
  }
  bool negate = false;
  Poly arg = arg_poly;
  bool odd = (f == FuncKind::Sin || f == FuncKind::Sinh);
  bool even = (f == FuncKind::Cos || f == FuncKind::Cosh);
  if ((odd || even) && poly_leading(arg) < 0) {
    arg = poly_scale(arg, Rational(-1));
    negate = odd;
  }
  Expr atom = Expr::function(f, expr_of_poly(arg));
  Mono m{{Factor{atom, Rational(1)}}};
  m.rehash();
  Poly p;
  p.emplace(std::move(m), negate ? Rational(-1) : Rational(1));
  return p;
}

Poly poly_of_expr_uncached(const Expr& e) {
  switch (e.kind()) {
    case NodeKind::Number:
      return poly_const(e.number_value());
    case NodeKind::SymbolRef: {
      Mono m{{Factor{e, Rational(1)}}};
      m.rehash();
      Poly p;
      p.emplace(std::move(m), Rational(1));
      return p;
    }
    case NodeKind::Sum: {
      Poly p;
      for (const auto& k : e.children()) poly_add_inplace(p, poly_of_expr(k));
      return p;
    }
    case NodeKind::Product: {
      Poly p = poly_const(Rational(1));
      for (const auto& k : e.children()) p = poly_mul(p, poly_of_expr(k));
      return p;
    }
    case NodeKind::Power:
      return poly_pow_general(poly_of_expr(e.children()[0]), e.number_value());
    case NodeKind::Function:
      return make_function(e.func_kind(), poly_of_expr(e.children()[0]));
  }
  return poly_zero();
}

Poly poly_of_expr(const Expr& e) {
  if (e.kind() == NodeKind::Number || e.kind() == NodeKind::SymbolRef)
    return poly_of_expr_uncached(e);
  thread_local std::unordered_map<const ExprNode*, Poly> cache;
  auto it = cache.find(e.raw());
  if (it != cache.end()) return it->second;
  Poly p = poly_of_expr_uncached(e);
  if (p.size() <= kCacheTermLimit) cache.emplace(e.raw(), p);
  return p;
}

Expr expr_of_poly(const Poly& p) {
  if (p.empty()) return Expr::number(0);
  std::vector<const std::pair<const Mono, Rational>*> terms;
  terms.reserve(p.size());
  for (const auto& term : p) terms.push_back(&term);
  MonoLess less;
  std::sort(terms.begin(), terms.end(),
            [&](const auto* a, const auto* b) { return less(a->first, b->first); });
  std::vector<Expr> exprs;
  exprs.reserve(terms.size());
  for (const auto* term : terms) {
    const auto& [m, c] = *term;
    std::vector<Expr> factors;
    if (c != 1 || m.factors.empty()) factors.push_back(Expr::number(c));
    for (const auto& f : m.factors) {
      factors.push_back(f.exp == 1 ? f.atom : Expr::power(f.atom, f.exp));
    }
    exprs.push_back(factors.size() == 1 ? factors[0] : Expr::product(std::move(factors)));
  }
  return exprs.size() == 1 ? exprs[0] : Expr::sum(std::move(exprs));
}

}  // namespace

Expr normalize(const Expr& e) { return expr_of_poly(poly_of_expr(e)); }

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

namespace {

Poly poly_diff(const Poly& p, const Symbol& v);
Poly diff_atom_uncached(const Expr& atom, const Symbol& v);

Poly diff_atom(const Expr& atom, const Symbol& v) {
  if (atom.kind() == NodeKind::Number || atom.kind() == NodeKind::SymbolRef)
    return diff_atom_uncached(atom, v);
  thread_local std::unordered_map<std::pair<const void*, const void*>, Poly, PtrPairHash> cache;
  auto key = std::make_pair(static_cast<const void*>(atom.raw()),
                            static_cast<const void*>(v.raw()));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Poly p = diff_atom_uncached(atom, v);
  if (p.size() <= kCacheTermLimit) cache.emplace(key, p);
  return p;
}

Poly diff_atom_uncached(const Expr& atom, const Symbol& v) {
  switch (atom.kind()) {
    case NodeKind::Number:
      return poly_zero();
    case NodeKind::SymbolRef:
      return atom.symbol_value() == v ? poly_const(Rational(1)) : poly_zero();
    case NodeKind::Function: {
      const Expr& u = atom.children()[0];
      Poly du = poly_diff(poly_of_expr(u), v);
      if (du.empty()) return poly_zero();
      Poly fprime;
      switch (atom.func_kind()) {
        case FuncKind::Sin: fprime = make_function(FuncKind::Cos, poly_of_expr(u)); break;
        case FuncKind::Cos:
          fprime = poly_scale(make_function(FuncKind::Sin, poly_of_expr(u)), Rational(-1));
          break;
        case FuncKind::Sinh: fprime = make_function(FuncKind::Cosh, poly_of_expr(u)); break;
        case FuncKind::Cosh: fprime = make_function(FuncKind::Sinh, poly_of_expr(u)); break;
        case FuncKind::Exp: fprime = make_function(FuncKind::Exp, poly_of_expr(u)); break;
        case FuncKind::Log: fprime = poly_pow_general(poly_of_expr(u), Rational(-1)); break;
        case FuncKind::Tan:
        case FuncKind::Tanh:
          fprime = poly_zero();  // never present in canonical atoms
          break;
      }
      return poly_mul(fprime, du);
    }
    default:
      // Opaque sum/product/power bases: differentiate the expanded form.
      return poly_diff(poly_of_expr(atom), v);
  }
}

bool atom_mentions(const Expr& atom, const Symbol& v);

bool tree_mentions(const Expr& e, const Symbol& v) {
  switch (e.kind()) {
    case NodeKind::Number:
      return false;
    case NodeKind::SymbolRef:
      return e.symbol_value() == v;
    default:
      for (const auto& k : e.children()) {
        if (tree_mentions(k, v)) return true;
      }
      return false;
  }
}

bool atom_mentions(const Expr& atom, const Symbol& v) { return tree_mentions(atom, v); }

Poly poly_diff(const Poly& p, const Symbol& v) {
  Poly out;
  for (const auto& [m, c] : p) {
    for (std::size_t i = 0; i < m.factors.size(); ++i) {
      if (!atom_mentions(m.factors[i].atom, v)) continue;
      Poly da = diff_atom(m.factors[i].atom, v);
      if (da.empty()) continue;
      std::vector<Factor> rest;
      rest.reserve(m.factors.size());
      for (std::size_t j = 0; j < m.factors.size(); ++j) {
        if (j == i) {
          if (m.factors[i].exp != 1)
            rest.push_back(Factor{m.factors[i].atom, m.factors[i].exp - 1});
        } else {
          rest.push_back(m.factors[j]);
        }
      }
      // rest stays sorted and rewrite-free (it came from a canonical mono).
      bool fast = true;
      for (const auto& f : rest) {
        if (factor_needs_rewrite(f)) {
          fast = false;
          break;
        }
      }
      Poly term;
      if (fast) {
        Mono tm{std::move(rest)};
        tm.rehash();
        term.emplace(std::move(tm), c * m.factors[i].exp);
      } else {
        term = mono_normal(c * m.factors[i].exp, std::move(rest));
      }
      poly_add_inplace(out, poly_mul(term, da));
    }
  }
  return out;
}

}  // namespace

Expr differentiate(const Expr& e, const Symbol& v) {
  return expr_of_poly(poly_diff(poly_of_expr(e), v));
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

namespace {

Expr substitute_raw(const Expr& e, const std::map<Symbol, Expr>& bindings) {
  switch (e.kind()) {
    case NodeKind::Number:
      return e;
    case NodeKind::SymbolRef: {
      auto it = bindings.find(e.symbol_value());
      return it == bindings.end() ? e : it->second;
    }
    case NodeKind::Sum:
    case NodeKind::Product: {
      std::vector<Expr> kids;
      kids.reserve(e.children().size());
      for (const auto& k : e.children()) kids.push_back(substitute_raw(k, bindings));
      return e.kind() == NodeKind::Sum ? Expr::sum(std::move(kids))
                                       : Expr::product(std::move(kids));
    }
    case NodeKind::Power:
      return Expr::power(substitute_raw(e.children()[0], bindings), e.number_value());
    case NodeKind::Function:
      return Expr::function(e.func_kind(), substitute_raw(e.children()[0], bindings));
  }
  return e;
}

}  // namespace

Expr substitute(const Expr& e, const std::map<Symbol, Expr>& bindings) {
  return normalize(substitute_raw(e, bindings));
}

Expr total_s_derivative(const Expr& e, const Symbol& s, const std::vector<Symbol>& coords,
                        const std::map<Symbol, Expr>* accelerations) {
  Poly p = poly_of_expr(e);
  Poly out = poly_diff(p, s);
  for (const Symbol& q : coords) {
    Poly dq = poly_diff(p, q);
    if (!dq.empty()) {
      Mono vm{{Factor{Expr::symbol(q.velocity()), Rational(1)}}};
      vm.rehash();
      Poly vel;
      vel.emplace(std::move(vm), Rational(1));
      poly_add_inplace(out, poly_mul(vel, dq));
    }
    Poly dv = poly_diff(p, q.velocity());
    if (!dv.empty()) {
      Symbol acc = q.acceleration();
      Poly a;
      if (accelerations != nullptr) {
        auto it = accelerations->find(acc);
        if (it == accelerations->end())
          throw std::invalid_argument("missing acceleration substitution for " + acc.name());
        a = poly_of_expr(it->second);
      } else {
        Mono am{{Factor{Expr::symbol(acc), Rational(1)}}};
        am.rehash();
        a.emplace(std::move(am), Rational(1));
      }
      poly_add_inplace(out, poly_mul(a, dv));
    }
  }
  return expr_of_poly(out);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

double eval_rec(const Expr& e, const EvalPoint& point) {
  switch (e.kind()) {
    case NodeKind::Number:
      return to_double(e.number_value());
    case NodeKind::SymbolRef: {
      auto it = point.find(e.symbol_value());
      if (it == point.end()) throw EvalError("unassigned symbol: " + e.symbol_value().name());
      return it->second;
    }
    case NodeKind::Sum: {
      double v = 0;
      for (const auto& k : e.children()) v += eval_rec(k, point);
      return v;
    }
    case NodeKind::Product: {
      double v = 1;
      for (const auto& k : e.children()) v *= eval_rec(k, point);
      return v;
    }
    case NodeKind::Power: {
      double b = eval_rec(e.children()[0], point);
      double ex = to_double(e.number_value());
      if (b == 0 && ex < 0) throw EvalError("division by zero");
      double v = std::pow(b, ex);
      if (!std::isfinite(v)) throw EvalError("power out of domain");
      return v;
    }
    case NodeKind::Function: {
      double u = eval_rec(e.children()[0], point);
      double v = 0;
      switch (e.func_kind()) {
        case FuncKind::Sin: v = std::sin(u); break;
        case FuncKind::Cos: v = std::cos(u); break;
        case FuncKind::Tan: v = std::tan(u); break;
        case FuncKind::Sinh: v = std::sinh(u); break;
        case FuncKind::Cosh: v = std::cosh(u); break;
        case FuncKind::Tanh: v = std::tanh(u); break;
        case FuncKind::Exp: v = std::exp(u); break;
        case FuncKind::Log:
          if (u <= 0) throw EvalError("log of non-positive value");
          v = std::log(u);
          break;
      }
      if (!std::isfinite(v)) throw EvalError("function value out of range");
      return v;
    }
  }
  throw EvalError("unreachable");
}

}  // namespace

double eval_at(const Expr& e, const EvalPoint& point) {
  double v = eval_rec(e, point);
  if (!std::isfinite(v)) throw EvalError("non-finite result");
  return v;
}

// ---------------------------------------------------------------------------
// Zero test
// ---------------------------------------------------------------------------

namespace {

// Multiplies through by the atom powers needed to remove negative exponents.
// Returns false if negative exponents persist after a bounded number of rounds.
bool clear_denominators(Poly& p) {
  for (int round = 0; round < 8; ++round) {
    std::vector<Factor> multiplier;
    for (const auto& [m, c] : p) {
      for (const auto& f : m.factors) {
        if (f.exp < 0) {
          bool found = false;
          for (auto& g : multiplier) {
            if (expr_equal(g.atom, f.atom)) {
              Rational cand = -f.exp;
              if (cand > g.exp) g.exp = cand;
              found = true;
              break;
            }
          }
          if (!found) multiplier.push_back(Factor{f.atom, -f.exp});
        }
      }
    }
    if (multiplier.empty()) return true;
    // Append the raw multiplier factors to every term so that equal atoms
    // cancel by exponent addition before any expansion happens.
    Poly next;
    for (const auto& [m, c] : p) {
      std::vector<Factor> fs = m.factors;
      fs.insert(fs.end(), multiplier.begin(), multiplier.end());
      poly_add_inplace(next, mono_normal(c, std::move(fs)));
    }
    p = std::move(next);
  }
  for (const auto& [m, c] : p) {
    for (const auto& f : m.factors) {
      if (f.exp < 0) return false;
    }
  }
  return true;
}

void collect_symbols(const Expr& e, std::vector<Symbol>& out) {
  switch (e.kind()) {
    case NodeKind::Number:
      return;
    case NodeKind::SymbolRef: {
      for (const auto& s : out) {
        if (s == e.symbol_value()) return;
      }
      out.push_back(e.symbol_value());
      return;
    }
    default:
      for (const auto& k : e.children()) collect_symbols(k, out);
  }
}

}  // namespace

std::vector<Symbol> free_symbols(const Expr& e) {
  std::vector<Symbol> out;
  collect_symbols(e, out);
  std::sort(out.begin(), out.end());
  return out;
}

bool depends_on(const Expr& e, const Symbol& v) { return tree_mentions(e, v); }

bool depends_on_kind(const Expr& e, SymbolKind kind) {
  for (const auto& s : free_symbols(e)) {
    if (s.kind() == kind) return true;
  }
  return false;
}

ZeroCheck check_zero(const Expr& e, const ZeroTestOptions& opts) {
  Poly p = poly_of_expr(e);
  if (p.empty()) return ZeroCheck::Zero;
  Poly cleared = p;
  if (clear_denominators(cleared) && cleared.empty()) return ZeroCheck::Zero;

  // Sampling fallback: witness search on the normalized form.
  Expr norm = expr_of_poly(p);
  std::vector<Symbol> syms = free_symbols(norm);
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> mag(0.1, 2.0);
  std::uniform_int_distribution<int> coin(0, 1);
  int done = 0;
  int attempts = 0;
  const int max_attempts = opts.trials * 10;
  std::vector<Expr> terms;
  if (norm.kind() == NodeKind::Sum) {
    terms = norm.children();
  } else {
    terms = {norm};
  }
  while (done < opts.trials && attempts < max_attempts) {
    ++attempts;
    EvalPoint pt;
    for (const auto& s : syms) {
      double v = mag(rng);
      if (coin(rng)) v = -v;
      pt[s] = v;
    }
    try {
      double total = 0, scale = 0;
      for (const auto& t : terms) {
        double tv = eval_rec(t, pt);
        total += tv;
        scale += std::abs(tv);
      }
      if (!std::isfinite(total)) continue;
      if (std::abs(total) > opts.tol * (1.0 + scale)) return ZeroCheck::NonZero;
      ++done;
    } catch (const EvalError&) {
      continue;  // resample
    }
  }
  return ZeroCheck::Undetermined;
}

bool is_zero(const Expr& e, const ZeroTestOptions& opts) {
  switch (check_zero(e, opts)) {
    case ZeroCheck::Zero: return true;
    case ZeroCheck::NonZero: return false;
    case ZeroCheck::Undetermined:
      throw UndeterminedError("zero test undetermined for: " + e.to_string());
  }
  return false;
}

// ---------------------------------------------------------------------------
// Velocity grading
// ---------------------------------------------------------------------------

int total_degree(const VelocityIndex& idx) {
  int d = 0;
  for (const auto& [s, e] : idx) d += e;
  return d;
}

std::map<VelocityIndex, Expr> velocity_coefficients(const Expr& e) {
  Poly p = poly_of_expr(e);
  std::map<VelocityIndex, Poly> graded;
  for (const auto& [m, c] : p) {
    VelocityIndex idx;
    std::vector<Factor> rest;
    for (const auto& f : m.factors) {
      if (f.atom.kind() == NodeKind::SymbolRef &&
          f.atom.symbol_value().kind() == SymbolKind::Velocity) {
        if (!is_integer(f.exp) || f.exp < 0)
          throw NonPolynomialVelocity("velocity with exponent " + to_string(f.exp));
        idx.emplace_back(f.atom.symbol_value(), static_cast<int>(rat_num(f.exp)));
      } else {
        if (depends_on_kind(f.atom, SymbolKind::Velocity))
          throw NonPolynomialVelocity("velocity inside non-polynomial context: " +
                                      f.atom.to_string());
        rest.push_back(f);
      }
    }
    std::sort(idx.begin(), idx.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    Mono rm{std::move(rest)};
    rm.rehash();
    poly_add_term(graded[idx], std::move(rm), c);
  }
  std::map<VelocityIndex, Expr> out;
  for (const auto& [idx, poly] : graded) {
    if (poly.empty()) continue;
    out.emplace(idx, expr_of_poly(poly));
  }
  return out;
}

std::vector<LinearTerm> linear_decomposition(const Expr& e, const std::vector<Symbol>& unknowns) {
  std::set<std::uint32_t> seqs;
  for (const auto& u : unknowns) seqs.insert(u.seq());
  auto is_unknown = [&](const Symbol& s) -> bool { return seqs.count(s.seq()) != 0; };

  Poly p = poly_of_expr(e);
  std::vector<LinearTerm> out;
  out.reserve(p.size());
  for (const auto& [m, c] : p) {
    LinearTerm term;
    term.coeff = c;
    std::vector<Factor> rest;
    for (const auto& f : m.factors) {
      bool hit = f.atom.kind() == NodeKind::SymbolRef && is_unknown(f.atom.symbol_value());
      if (hit) {
        if (f.exp != 1)
          throw NonLinearError("unknown " + f.atom.symbol_value().name() + " with exponent " +
                               to_string(f.exp));
        if (term.unknown.valid())
          throw NonLinearError("product of unknowns " + term.unknown.name() + " and " +
                               f.atom.symbol_value().name());
        term.unknown = f.atom.symbol_value();
      } else {
        for (const auto& s : free_symbols(f.atom)) {
          if (is_unknown(s))
            throw NonLinearError("unknown " + s.name() +
                                 " inside non-linear context: " + f.atom.to_string());
        }
        rest.push_back(f);
      }
    }
    Mono rm{std::move(rest)};
    rm.rehash();
    Poly key;
    key.emplace(std::move(rm), Rational(1));
    term.monomial_key = expr_of_poly(key);
    out.push_back(std::move(term));
  }
  return out;
}

Rational leading_coefficient(const Expr& e) { return poly_leading(poly_of_expr(e)); }

std::optional<Rational> proportionality_ratio(const Expr& a, const Expr& b) {
  Poly pa = poly_of_expr(a), pb = poly_of_expr(b);
  if (pa.empty() || pb.empty()) return std::nullopt;
  const auto* la = poly_min_term(pa);
  const auto* lb = poly_min_term(pb);
  Rational q = la->second / lb->second;
  Poly diff = pa;
  for (const auto& [m, c] : pb) poly_add_term(diff, m, -c * q);
  if (diff.empty()) return q;
  if (check_zero(expr_of_poly(diff)) == ZeroCheck::Zero) return q;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace {

void print_expr(std::ostream& os, const Expr& e);

bool is_negative_term(const Expr& t) {
  if (t.kind() == NodeKind::Number) return t.number_value() < 0;
  if (t.kind() == NodeKind::Product && t.children()[0].kind() == NodeKind::Number)
    return t.children()[0].number_value() < 0;
  return false;
}

Expr negate_term(const Expr& t) {
  if (t.kind() == NodeKind::Number) return Expr::number(-t.number_value());
  if (t.kind() == NodeKind::Product && t.children()[0].kind() == NodeKind::Number) {
    std::vector<Expr> kids = t.children();
    Rational c = -kids[0].number_value();
    if (c == 1 && kids.size() > 1) {
      kids.erase(kids.begin());
    } else {
      kids[0] = Expr::number(c);
    }
    return kids.size() == 1 ? kids[0] : Expr::product(std::move(kids));
  }
  return Expr::product({Expr::number(-1), t});
}

void print_power_base(std::ostream& os, const Expr& base) {
  bool parens = base.kind() == NodeKind::Sum || base.kind() == NodeKind::Product ||
                base.kind() == NodeKind::Power ||
                (base.kind() == NodeKind::Number &&
                 (base.number_value() < 0 || !is_integer(base.number_value())));
  if (parens) os << "(";
  print_expr(os, base);
  if (parens) os << ")";
}

void print_power(std::ostream& os, const Expr& base, const Rational& exp) {
  print_power_base(os, base);
  os << "^";
  if (is_integer(exp) && exp > 0) {
    os << to_string(exp);
  } else {
    os << "(" << to_string(exp) << ")";
  }
}

void print_factor(std::ostream& os, const Expr& b, const Rational& e) {
  if (e == 1) {
    bool parens = b.kind() == NodeKind::Sum || b.kind() == NodeKind::Product;
    if (parens) os << "(";
    print_expr(os, b);
    if (parens) os << ")";
  } else {
    print_power(os, b, e);
  }
}

// Splits a product into numerator and denominator so the printed output stays
// inside the input grammar.
void print_product(std::ostream& os, const std::vector<Expr>& factors) {
  Rational coeff(1);
  std::vector<std::pair<Expr, Rational>> num, den;
  for (const auto& f : factors) {
    if (f.kind() == NodeKind::Number) {
      coeff *= f.number_value();
    } else if (f.kind() == NodeKind::Power) {
      const Rational& e = f.number_value();
      if (e < 0 && is_integer(e)) {
        den.emplace_back(f.children()[0], -e);
      } else {
        num.emplace_back(f.children()[0], e);
      }
    } else {
      num.emplace_back(f, Rational(1));
    }
  }
  bool neg = coeff < 0;
  if (neg) {
    coeff = -coeff;
    os << "-";
  }
  Integer cn = rat_num(coeff), cd = rat_den(coeff);

  std::size_t num_items = num.size() + (cn != 1 ? 1 : 0);
  if (num_items == 0) {
    os << "1";
  } else {
    bool first = true;
    if (cn != 1 || num.empty()) {
      os << cn.str();
      first = false;
    }
    for (const auto& [b, e] : num) {
      if (!first) os << "*";
      first = false;
      print_factor(os, b, e);
    }
  }
  std::size_t den_items = den.size() + (cd != 1 ? 1 : 0);
  if (den_items == 0) return;
  os << "/";
  if (den_items > 1) os << "(";
  bool first = true;
  if (cd != 1) {
    os << cd.str();
    first = false;
  }
  for (const auto& [b, e] : den) {
    if (!first) os << "*";
    first = false;
    print_factor(os, b, e);
  }
  if (den_items > 1) os << ")";
}

void print_expr(std::ostream& os, const Expr& e) {
  switch (e.kind()) {
    case NodeKind::Number: {
      const Rational& r = e.number_value();
      if (r < 0) {
        os << "-" << to_string(-r);
      } else {
        os << to_string(r);
      }
      return;
    }
    case NodeKind::SymbolRef:
      os << e.symbol_value().name();
      return;
    case NodeKind::Function:
      os << func_name(e.func_kind()) << "(";
      print_expr(os, e.children()[0]);
      os << ")";
      return;
    case NodeKind::Power:
      print_product(os, {e});
      return;
    case NodeKind::Product:
      print_product(os, e.children());
      return;
    case NodeKind::Sum: {
      bool first = true;
      for (const auto& t : e.children()) {
        if (first) {
          print_expr(os, t);
          first = false;
        } else if (is_negative_term(t)) {
          os << " - ";
          print_expr(os, negate_term(t));
        } else {
          os << " + ";
          print_expr(os, t);
        }
      }
      return;
    }
  }
}

}  // namespace

std::string Expr::to_string() const {
  std::ostringstream os;
  print_expr(os, *this);
  return os.str();
}

}  // namespace nsym
