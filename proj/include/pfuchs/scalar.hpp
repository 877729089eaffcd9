#pragma once

// Exact-arithmetic scalars.
//
// PadicScalar models an element of Q_p as p^shift * mantissa with the mantissa
// coprime to p.  A value is either
//   * exact      — the mantissa is a signed integer known exactly,
//   * truncated  — the mantissa is a residue in [1, p^rel_prec), i.e. the value
//                  is known modulo p^(shift + rel_prec),
//   * exact zero — the canonical zero,
//   * zero at tracked precision — a result that vanished modulo p^abs_prec in a
//                  computation whose inputs were only known to that precision.
// The last state is flagged, never silently collapsed to zero: operations may
// lose digits but never fabricate them.
//
// CycScalar models an element of Q_p(zeta) for zeta a primitive p^k-th root of
// unity, stored sparsely in the power basis 1, zeta, ..., zeta^(phi(p^k)-1)
// modulo the cyclotomic relation Phi_{p^k}(X) = sum_{j<p} X^(j p^(k-1)).

#include "pfuchs/rat.hpp"

#include <map>
#include <vector>

namespace pfuchs {

class PadicScalar {
 public:
  enum class Kind { ExactZero, ZeroAtPrec, Value };

  PadicScalar() : p_(0), kind_(Kind::ExactZero) {}

  static PadicScalar zero(long p) {
    PadicScalar x;
    x.p_ = p;
    return x;
  }
  // value == 0 mod p^abs_prec, deeper digits unknown
  static PadicScalar zero_at_prec(long p, long abs_prec);
  // exact integer value v, carrying working precision N for later divisions
  static PadicScalar from_int(long p, const Int& v, int N);
  // a/b with p not dividing b; exact iff b = +-1, else truncated to N digits
  static PadicScalar from_rational(long p, const Rat& q, int N);
  // truncated residue: value = p^shift * (m mod p^N), p coprime to m
  static PadicScalar from_parts(long p, long shift, const Int& mantissa, int N, bool exact);

  long p() const { return p_; }
  Kind kind() const { return kind_; }
  bool is_exact_zero() const { return kind_ == Kind::ExactZero; }
  bool is_zero_at_prec() const { return kind_ == Kind::ZeroAtPrec; }
  // true for both zero states: indistinguishable from 0 at tracked precision
  bool is_zeroish() const { return kind_ != Kind::Value; }
  bool is_exact() const { return kind_ == Kind::ExactZero || (kind_ == Kind::Value && exact_); }

  long shift() const { return shift_; }          // valuation (Value) / abs prec bound (ZeroAtPrec)
  const Int& mantissa() const { return mant_; }  // Value only
  int rel_prec() const { return prec_; }

  // valuation; error on zero states (use lognorm_upper for bounds)
  long val() const;
  // absolute precision: shift + rel_prec (Value, truncated), bound (ZeroAtPrec);
  // error for exact values (infinite)
  long abs_prec() const;
  bool has_finite_abs_prec() const { return kind_ == Kind::ZeroAtPrec || (kind_ == Kind::Value && !exact_); }

  // log_p |x|: exact for Value (= -val) and ExactZero (-inf);
  // for ZeroAtPrec returns the certified upper bound -abs_prec.
  LogNorm lognorm_upper() const;
  // true when lognorm_upper() is the exact norm (Value / ExactZero)
  bool lognorm_exact() const { return kind_ != Kind::ZeroAtPrec; }

  PadicScalar operator-() const;
  friend PadicScalar operator+(const PadicScalar& a, const PadicScalar& b);
  friend PadicScalar operator-(const PadicScalar& a, const PadicScalar& b) { return a + (-b); }
  friend PadicScalar operator*(const PadicScalar& a, const PadicScalar& b);

  PadicScalar invert() const;                  // error on zero states
  PadicScalar pow(long e) const;               // negative e via invert
  PadicScalar scale_pow_p(long e) const;       // multiply by p^e (exact shift)
  PadicScalar truncated_to(int N) const;       // cap relative precision
  PadicScalar as_inexact() const;              // drop the exact bit (keep digits)

  // residue of the value modulo p^k (requires val >= 0 and abs prec >= k)
  Int residue_mod_pk(long k) const;

  // a == b at the shared tracked precision
  friend bool equal_at_precision(const PadicScalar& a, const PadicScalar& b) {
    return (a - b).is_zeroish();
  }
  // exact structural equality of representations
  friend bool operator==(const PadicScalar& a, const PadicScalar& b);

  std::string str() const;  // debug rendering

 private:
  long p_;
  Kind kind_;
  long shift_ = 0;
  Int mant_ = 0;
  int prec_ = 0;
  bool exact_ = false;

  static PadicScalar make_value(long p, long shift, Int mant, int prec, bool exact);
  static void check_same_p(const PadicScalar& a, const PadicScalar& b);
};

// omega = |p|^(1/(p-1)) is the convergence radius of exp/log; its base-p
// log-value -1/(p-1) feeds the action-series tail estimates.
inline Rat omega_log(long p) { return Rat(-1, p - 1); }

// ---------------------------------------------------------------------------

class CycScalar {
 public:
  CycScalar() : p_(0), level_(0) {}
  CycScalar(long p, int level) : p_(p), level_(level) {}

  static CycScalar zero(long p, int level) { return CycScalar(p, level); }
  static CycScalar from_scalar(long p, int level, const PadicScalar& c);
  static CycScalar one(long p, int level, int N);
  // zeta^e for any integer e (reduced mod p^level, then mod the cyclotomic relation)
  static CycScalar root_power(long p, int level, const Int& e, int N);

  long p() const { return p_; }
  int level() const { return level_; }
  long phi() const;                     // phi(p^level)
  Int order() const { return pow_p(p_, level_); }

  bool is_exact_zero() const;           // no coordinates at all
  bool is_zeroish() const;              // no Value coordinates (zero at tracked precision)

  const std::map<long, PadicScalar>& coords() const { return c_; }
  PadicScalar coord(long i) const;      // dense view (zero(p) when absent)

  CycScalar operator-() const;
  friend CycScalar operator+(const CycScalar& a, const CycScalar& b);
  friend CycScalar operator-(const CycScalar& a, const CycScalar& b) { return a + (-b); }
  friend CycScalar operator*(const CycScalar& a, const CycScalar& b);
  CycScalar scale(const PadicScalar& c) const;

  // Galois action zeta -> zeta^a, a coprime to p
  CycScalar galois(const Int& a) const;
  // re-express at a higher level via zeta_k = zeta_{k'}^(p^(k'-k))
  CycScalar embed_to_level(int target) const;
  // inverse of embed_to_level: error NonDescendable unless supported exponents
  // are multiples of p^(level-target) at tracked precision
  CycScalar descend_to_level(int target) const;
  // constant coordinate; error NonDescendable if any other coordinate is a
  // nonzero Value.  ZeroAtPrec coordinates cap the result's absolute precision.
  PadicScalar descend_to_base() const;

  // Exact valuation via the (zeta-1)-power basis: v(sum d_j (zeta-1)^j)
  // = min_j (v(d_j) + j/phi) because the fractional parts are distinct.
  // Returns log_p|x| (upper bound when truncation hides low digits; the
  // `exact` flag reports whether the bound is attained).
  struct Norm {
    LogNorm upper;
    bool exact;
  };
  Norm lognorm() const;

  std::string str() const;

  // internal: insert c * zeta^e with reduction (used by arithmetic and builders)
  void add_term(long e, const PadicScalar& c);

 private:
  long p_;
  int level_;
  std::map<long, PadicScalar> c_;  // exponent in [0, phi) -> non-(exact-zero) coordinate

  void add_reduced(long e, const PadicScalar& c);  // e already in [0, p^level)
  void insert_raw(long e, const PadicScalar& c);   // e already in [0, phi)
  static void check_compat(const CycScalar& a, const CycScalar& b);
};

// zeta^(lambda mod p^k) for a p-adic integer lambda known to >= k digits.
CycScalar root_power_scalar(long p, int level, const PadicScalar& lambda, int N);
// same for an exact rational with p-coprime denominator
CycScalar root_power_rat(long p, int level, const Rat& lambda, int N);

}  // namespace pfuchs
