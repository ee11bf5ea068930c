#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <optional>
#include <string>

namespace nsym {

using Integer = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline Integer rat_num(const Rational& r) { return boost::multiprecision::numerator(r); }
inline Integer rat_den(const Rational& r) { return boost::multiprecision::denominator(r); }

inline bool is_integer(const Rational& r) { return rat_den(r) == 1; }

inline int sign(const Rational& r) { return r.sign(); }

/// Exact r^e for integer e. Throws std::domain_error on 0^negative.
Rational rat_pow(const Rational& r, long e);

/// r^(p/q) when the result is exactly rational (perfect root), otherwise nullopt.
std::optional<Rational> rat_pow_exact(const Rational& r, const Rational& e);

double to_double(const Rational& r);

/// Decimal like "12.75" -> 51/4; plain integers pass through. Returns nullopt on malformed input.
std::optional<Rational> rational_from_decimal(const std::string& text);

std::string to_string(const Rational& r);

Integer gcd(const Integer& a, const Integer& b);
Integer lcm(const Integer& a, const Integer& b);

}  // namespace nsym
