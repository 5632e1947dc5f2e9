#pragma once

#include <boost/multiprecision/gmp.hpp>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace qpc {

using BigInt = boost::multiprecision::mpz_int;
using Rational = boost::multiprecision::mpq_rational;

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct CapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DepthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline BigInt num_of(const Rational& r) { return boost::multiprecision::numerator(r); }
inline BigInt den_of(const Rational& r) { return boost::multiprecision::denominator(r); }

inline BigInt floor_of(const Rational& r) {
  BigInt q, rem;
  boost::multiprecision::divide_qr(num_of(r), den_of(r), q, rem);
  if (rem < 0) q -= 1;
  return q;
}

inline BigInt ceil_of(const Rational& r) { return -floor_of(-r); }

// Representative of r modulo 1 in [0, 1).
inline Rational frac(const Rational& r) { return r - Rational(floor_of(r)); }

inline Rational abs_of(const Rational& r) { return r < 0 ? Rational(-r) : r; }

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline std::string to_string(const BigInt& v) { return v.str(); }

inline std::string to_string(const Rational& r) {
  if (den_of(r) == 1) return num_of(r).str();
  return num_of(r).str() + "/" + den_of(r).str();
}

// Parses "P/Q" or "P".
inline Rational parse_rational(const std::string& text) {
  auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return Rational(BigInt(text));
    BigInt p(text.substr(0, slash));
    BigInt q(text.substr(slash + 1));
    if (q == 0) throw DomainError("zero denominator in '" + text + "'");
    return Rational(p, q);
  } catch (const std::runtime_error&) {
    throw DomainError("cannot parse rational '" + text + "'");
  }
}

inline bool fits_int64(const BigInt& v) {
  static const BigInt lo = BigInt(std::numeric_limits<std::int64_t>::min());
  static const BigInt hi = BigInt(std::numeric_limits<std::int64_t>::max());
  return v >= lo && v <= hi;
}

inline std::int64_t to_int64(const BigInt& v) {
  if (!fits_int64(v)) throw CapError("integer exceeds 64 bits: " + v.str());
  return v.convert_to<std::int64_t>();
}

}  // namespace qpc
