#pragma once

// Exact rational arithmetic helpers and the extended log-norm value
// (a rational or -inf).  Log-norms are base-p logarithms of Gauss norms,
// so the whole norm calculus stays in Q.

#include <gmpxx.h>

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace pfuchs {

using Int = mpz_class;
using Rat = mpq_class;

struct error : std::runtime_error {
  std::string code;  // stable machine-readable identifier, e.g. "NonDescendable"
  error(std::string c, const std::string& msg) : std::runtime_error(msg), code(std::move(c)) {}
};

[[noreturn]] inline void fail(const std::string& code, const std::string& msg) {
  throw error(code, msg);
}

// Parses "a", "a/b", "-a/b".  Canonicalizes; rejects zero denominators.
inline Rat parse_rat(const std::string& s) {
  Rat q;
  if (q.set_str(s, 10) != 0) fail("BadRational", "cannot parse rational '" + s + "'");
  if (q.get_den() == 0) fail("BadRational", "zero denominator in '" + s + "'");
  q.canonicalize();
  return q;
}

inline std::string rat_str(const Rat& q) { return q.get_str(); }

// mpq_class(a, b) does not canonicalize; this does.
inline Rat rat_of(long num, long den) {
  Rat q(num, den);
  q.canonicalize();
  return q;
}
inline Rat rat_of(const Int& num, const Int& den) {
  Rat q(num, den);
  q.canonicalize();
  return q;
}

inline Int rat_num(const Rat& q) { return Int(q.get_num()); }
inline Int rat_den(const Rat& q) { return Int(q.get_den()); }

inline bool is_integer(const Rat& q) { return q.get_den() == 1; }

// floor(num/den) as Int
inline Int rat_floor(const Rat& q) {
  Int f;
  mpz_fdiv_q(f.get_mpz_t(), q.get_num_mpz_t(), q.get_den_mpz_t());
  return f;
}

inline Int pow_int(const Int& base, unsigned long e) {
  Int r;
  mpz_pow_ui(r.get_mpz_t(), base.get_mpz_t(), e);
  return r;
}

inline Int pow_p(long p, long e) {
  if (e < 0) fail("Internal", "pow_p negative exponent");
  return pow_int(Int(p), static_cast<unsigned long>(e));
}

// p-adic valuation of a nonzero integer.
inline long int_val_p(const Int& v, long p) {
  if (v == 0) fail("Internal", "valuation of zero integer");
  Int q, r, cur = v;
  long n = 0;
  Int P(p);
  for (;;) {
    mpz_fdiv_qr(q.get_mpz_t(), r.get_mpz_t(), cur.get_mpz_t(), P.get_mpz_t());
    if (r != 0) return n;
    cur = q;
    ++n;
  }
}

// v_p of a nonzero rational (num val minus den val).
inline long rat_val_p(const Rat& q, long p) {
  if (q == 0) fail("Internal", "valuation of zero rational");
  return int_val_p(rat_num(q), p) - int_val_p(rat_den(q), p);
}

// Modular inverse; requires gcd(a, m) = 1.
inline Int mod_inverse(const Int& a, const Int& m) {
  Int r;
  if (mpz_invert(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t()) == 0)
    fail("NotInvertible", "no inverse of " + a.get_str() + " mod " + m.get_str());
  return r;
}

inline Int mod_reduce(const Int& a, const Int& m) {
  Int r;
  mpz_fdiv_r(r.get_mpz_t(), a.get_mpz_t(), m.get_mpz_t());  // in [0, m)
  return r;
}

// A base-p log-norm: either -infinity (zero element) or an exact rational.
// Ordered: NegInf < every rational.
class LogNorm {
 public:
  LogNorm() : inf_(true) {}  // -inf
  explicit LogNorm(Rat v) : inf_(false), v_(std::move(v)) {}
  static LogNorm neg_inf() { return LogNorm(); }
  static LogNorm of(long num, long den = 1) { return LogNorm(rat_of(num, den)); }

  bool is_neg_inf() const { return inf_; }
  const Rat& value() const {
    if (inf_) fail("Internal", "LogNorm: value() of -inf");
    return v_;
  }

  friend bool operator==(const LogNorm& a, const LogNorm& b) {
    if (a.inf_ || b.inf_) return a.inf_ && b.inf_;
    return a.v_ == b.v_;
  }
  friend bool operator<(const LogNorm& a, const LogNorm& b) {
    if (a.inf_) return !b.inf_;
    if (b.inf_) return false;
    return a.v_ < b.v_;
  }
  friend bool operator<=(const LogNorm& a, const LogNorm& b) { return a < b || a == b; }
  friend bool operator>(const LogNorm& a, const LogNorm& b) { return b < a; }
  friend bool operator>=(const LogNorm& a, const LogNorm& b) { return b <= a; }

  // log of a product: -inf absorbs.
  friend LogNorm operator+(const LogNorm& a, const LogNorm& b) {
    if (a.inf_ || b.inf_) return neg_inf();
    return LogNorm(a.v_ + b.v_);
  }
  friend LogNorm operator+(const LogNorm& a, const Rat& r) {
    if (a.inf_) return neg_inf();
    return LogNorm(a.v_ + r);
  }

  static LogNorm max(const LogNorm& a, const LogNorm& b) { return a < b ? b : a; }

  std::string str() const { return inf_ ? std::string("-inf") : v_.get_str(); }

 private:
  bool inf_;
  Rat v_;
};

}  // namespace pfuchs
