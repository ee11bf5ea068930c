#include "nsym/rational.hpp"

#include <boost/multiprecision/integer.hpp>

#include <cctype>
#include <stdexcept>

namespace nsym {

Rational rat_pow(const Rational& r, long e) {
  if (e == 0) return Rational(1);
  if (r == 0) {
    if (e < 0) throw std::domain_error("0 raised to a negative power");
    return Rational(0);
  }
  Integer n = rat_num(r), d = rat_den(r);
  bool invert = e < 0;
  unsigned long k = invert ? static_cast<unsigned long>(-e) : static_cast<unsigned long>(e);
  Integer np = boost::multiprecision::pow(n, static_cast<unsigned>(k));
  Integer dp = boost::multiprecision::pow(d, static_cast<unsigned>(k));
  return invert ? Rational(dp, np) : Rational(np, dp);
}

namespace {

// Exact integer q-th root when n is a perfect q-th power.
std::optional<Integer> iroot_exact(const Integer& n, unsigned q) {
  if (n < 0) return std::nullopt;  // callers handle sign separately
  if (n == 0 || n == 1) return n;
  // Newton iteration on integers.
  Integer x = Integer(1) << (static_cast<unsigned>(boost::multiprecision::msb(n)) / q + 1);
  Integer prev = -1;
  while (x != prev) {
    prev = x;
    Integer xq1 = boost::multiprecision::pow(x, q - 1);
    x = ((q - 1) * x + n / xq1) / q;
  }
  while (boost::multiprecision::pow(x, q) > n) --x;
  if (boost::multiprecision::pow(x, q) == n) return x;
  return std::nullopt;
}

}  // namespace

std::optional<Rational> rat_pow_exact(const Rational& r, const Rational& e) {
  if (is_integer(e)) {
    if (rat_num(e) > 1000000 || rat_num(e) < -1000000) return std::nullopt;
    return rat_pow(r, static_cast<long>(rat_num(e)));
  }
  if (r == 0) {
    if (e < 0) return std::nullopt;
    return Rational(0);
  }
  Integer p = rat_num(e), q = rat_den(e);
  if (q > 64) return std::nullopt;
  unsigned uq = static_cast<unsigned>(q);
  Integer n = rat_num(r), d = rat_den(r);
  bool neg = n < 0;
  if (neg && uq % 2 == 0) return std::nullopt;
  auto rn = iroot_exact(neg ? Integer(-n) : n, uq);
  auto rd = iroot_exact(d, uq);
  if (!rn || !rd) return std::nullopt;
  Rational root(neg ? Integer(-*rn) : *rn, *rd);
  if (p > 64 || p < -64) return std::nullopt;
  return rat_pow(root, static_cast<long>(p));
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

std::optional<Rational> rational_from_decimal(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::string digits;
  long frac_len = -1;
  for (char c : text) {
    if (c == '.') {
      if (frac_len >= 0) return std::nullopt;
      frac_len = 0;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
      if (frac_len >= 0) ++frac_len;
    } else {
      return std::nullopt;
    }
  }
  if (digits.empty()) return std::nullopt;
  // Strip leading zeros: cpp_int's string constructor treats them as octal.
  std::size_t first = digits.find_first_not_of('0');
  digits = (first == std::string::npos) ? "0" : digits.substr(first);
  Integer n(digits);
  Integer d = 1;
  for (long i = 0; i < frac_len; ++i) d *= 10;
  return Rational(n, d);
}

std::string to_string(const Rational& r) {
  std::string s = rat_num(r).str();
  if (!is_integer(r)) s += "/" + rat_den(r).str();
  return s;
}

Integer gcd(const Integer& a, const Integer& b) { return boost::multiprecision::gcd(a, b); }
Integer lcm(const Integer& a, const Integer& b) { return boost::multiprecision::lcm(a, b); }

}  // namespace nsym
