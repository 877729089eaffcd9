#include "pfuchs/scalar.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace pfuchs {

// ---------------------------------------------------------------- PadicScalar

void PadicScalar::check_same_p(const PadicScalar& a, const PadicScalar& b) {
  if (a.p_ != b.p_) fail("PrimeMismatch", "operands over different primes");
}

PadicScalar PadicScalar::zero_at_prec(long p, long abs_prec) {
  PadicScalar x;
  x.p_ = p;
  x.kind_ = Kind::ZeroAtPrec;
  x.shift_ = abs_prec;
  return x;
}

PadicScalar PadicScalar::make_value(long p, long shift, Int mant, int prec, bool exact) {
  if (prec <= 0 && !exact) return zero_at_prec(p, shift + prec);
  PadicScalar x;
  x.p_ = p;
  x.kind_ = Kind::Value;
  x.shift_ = shift;
  x.prec_ = prec;
  x.exact_ = exact;
  if (!exact) {
    x.mant_ = mod_reduce(mant, pow_p(p, prec));
    if (x.mant_ == 0) return zero_at_prec(p, shift + prec);
  } else {
    if (mant == 0) return zero(p);
    x.mant_ = std::move(mant);
  }
  // strip residual p factors so shift is the valuation
  long w = int_val_p(x.mant_, p);
  if (w > 0) {
    Int q;
    mpz_divexact(q.get_mpz_t(), x.mant_.get_mpz_t(), pow_p(p, w).get_mpz_t());
    x.mant_ = q;
    x.shift_ += w;
    if (!exact) {
      x.prec_ -= static_cast<int>(w);  // absolute precision is what was known
      if (x.prec_ <= 0) return zero_at_prec(p, x.shift_ + x.prec_);
    }
  }
  return x;
}

PadicScalar PadicScalar::from_int(long p, const Int& v, int N) {
  if (v == 0) return zero(p);
  return make_value(p, 0, v, N, /*exact=*/true);
}

PadicScalar PadicScalar::from_rational(long p, const Rat& q, int N) {
  if (q == 0) return zero(p);
  Int num = rat_num(q), den = rat_den(q);
  if (den == 1 || den == -1) return make_value(p, 0, num * den, N, true);
  long vd = int_val_p(den, p);
  if (vd != 0) fail("PPowerDenominator", "rational with p in denominator is not a p-adic integer: " + q.get_str());
  long vn = int_val_p(num, p);
  Int m = num / pow_p(p, vn);
  Int inv = mod_inverse(den, pow_p(p, N));
  return make_value(p, vn, m * inv, N, false);
}

PadicScalar PadicScalar::from_parts(long p, long shift, const Int& mantissa, int N, bool exact) {
  if (mantissa == 0) return exact ? zero(p) : zero_at_prec(p, shift + N);
  return make_value(p, shift, mantissa, N, exact);
}

long PadicScalar::val() const {
  if (kind_ != Kind::Value) fail("PrecisionExhausted", "valuation of a zero-at-precision or zero value");
  return shift_;
}

long PadicScalar::abs_prec() const {
  switch (kind_) {
    case Kind::ZeroAtPrec: return shift_;
    case Kind::Value:
      if (exact_) fail("Internal", "abs_prec of exact value");
      return shift_ + prec_;
    default: fail("Internal", "abs_prec of exact zero");
  }
}

LogNorm PadicScalar::lognorm_upper() const {
  switch (kind_) {
    case Kind::ExactZero: return LogNorm::neg_inf();
    case Kind::ZeroAtPrec: return LogNorm(Rat(-shift_));
    default: return LogNorm(Rat(-shift_));
  }
}

PadicScalar PadicScalar::operator-() const {
  PadicScalar r = *this;
  if (kind_ != Kind::Value) return r;
  if (exact_) {
    r.mant_ = -mant_;
  } else {
    r.mant_ = pow_p(p_, prec_) - mant_;
  }
  return r;
}

PadicScalar operator+(const PadicScalar& a, const PadicScalar& b) {
  PadicScalar::check_same_p(a, b);
  using K = PadicScalar::Kind;
  if (a.kind_ == K::ExactZero) return b;
  if (b.kind_ == K::ExactZero) return a;
  long p = a.p_;
  if (a.kind_ == K::ZeroAtPrec && b.kind_ == K::ZeroAtPrec)
    return PadicScalar::zero_at_prec(p, std::min(a.shift_, b.shift_));
  if (a.kind_ == K::ZeroAtPrec || b.kind_ == K::ZeroAtPrec) {
    const PadicScalar& z = a.kind_ == K::ZeroAtPrec ? a : b;
    const PadicScalar& v = a.kind_ == K::ZeroAtPrec ? b : a;
    long P = z.shift_;
    if (!v.exact_) P = std::min(P, v.shift_ + v.prec_);
    if (v.shift_ >= P) return PadicScalar::zero_at_prec(p, P);
    return PadicScalar::make_value(p, v.shift_, v.mant_, static_cast<int>(P - v.shift_), false);
  }
  // two values
  long s = std::min(a.shift_, b.shift_);
  Int sum = a.mant_ * pow_p(p, a.shift_ - s) + b.mant_ * pow_p(p, b.shift_ - s);
  bool exact = a.exact_ && b.exact_;
  if (exact) {
    if (sum == 0) return PadicScalar::zero(p);
    return PadicScalar::make_value(p, s, sum, std::min(a.prec_, b.prec_), true);
  }
  long P = std::numeric_limits<long>::max();
  if (!a.exact_) P = std::min(P, a.shift_ + a.prec_);
  if (!b.exact_) P = std::min(P, b.shift_ + b.prec_);
  // result known modulo p^P
  if (P - s > static_cast<long>(1u << 28)) fail("Internal", "precision overflow");
  Int red = mod_reduce(sum, pow_p(p, P - s));
  if (red == 0) return PadicScalar::zero_at_prec(p, P);
  return PadicScalar::make_value(p, s, red, static_cast<int>(P - s), false);
}

PadicScalar operator*(const PadicScalar& a, const PadicScalar& b) {
  PadicScalar::check_same_p(a, b);
  using K = PadicScalar::Kind;
  long p = a.p_;
  if (a.kind_ == K::ExactZero || b.kind_ == K::ExactZero) return PadicScalar::zero(p);
  if (a.kind_ == K::ZeroAtPrec || b.kind_ == K::ZeroAtPrec) {
    // shift_ is the valuation for values and the vanishing bound for
    // zero-at-precision operands; either way the product vanishes mod p^(sum)
    return PadicScalar::zero_at_prec(p, a.shift_ + b.shift_);
  }
  bool exact = a.exact_ && b.exact_;
  int N = std::min(a.prec_, b.prec_);
  return PadicScalar::make_value(p, a.shift_ + b.shift_, a.mant_ * b.mant_, N, exact);
}

PadicScalar PadicScalar::invert() const {
  if (kind_ == Kind::ExactZero) fail("DivisionByZero", "inverse of zero");
  if (kind_ == Kind::ZeroAtPrec) fail("PrecisionExhausted", "inverse of a value that is zero at tracked precision");
  if (exact_ && (mant_ == 1 || mant_ == -1)) return make_value(p_, -shift_, mant_, prec_, true);
  Int inv = mod_inverse(mod_reduce(mant_, pow_p(p_, prec_)), pow_p(p_, prec_));
  return make_value(p_, -shift_, inv, prec_, false);
}

PadicScalar PadicScalar::pow(long e) const {
  if (e < 0) return invert().pow(-e);
  PadicScalar acc = from_int(p_, 1, kind_ == Kind::Value ? prec_ : 32);
  PadicScalar base = *this;
  for (long k = e; k > 0; k >>= 1) {
    if (k & 1) acc = acc * base;
    if (k > 1) base = base * base;
  }
  return acc;
}

PadicScalar PadicScalar::scale_pow_p(long e) const {
  PadicScalar r = *this;
  if (kind_ == Kind::ExactZero) return r;
  r.shift_ += e;  // Value: valuation shifts; ZeroAtPrec: the bound shifts
  return r;
}

PadicScalar PadicScalar::truncated_to(int N) const {
  if (kind_ != Kind::Value) return *this;
  if (!exact_ && prec_ <= N) return *this;
  return make_value(p_, shift_, exact_ ? mod_reduce(mant_, pow_p(p_, N)) : mant_, N, false);
}

PadicScalar PadicScalar::as_inexact() const {
  if (kind_ != Kind::Value || !exact_) return *this;
  return make_value(p_, shift_, mod_reduce(mant_, pow_p(p_, prec_)), prec_, false);
}

Int PadicScalar::residue_mod_pk(long k) const {
  if (kind_ == Kind::ExactZero) return Int(0);
  if (kind_ == Kind::ZeroAtPrec) {
    if (shift_ < k) fail("PrecisionExhausted", "residue mod p^k beyond tracked precision");
    return Int(0);
  }
  if (shift_ < 0) fail("NotIntegral", "residue of a non-integral value");
  if (!exact_ && shift_ + prec_ < k) fail("PrecisionExhausted", "residue mod p^k beyond tracked precision");
  return mod_reduce(mant_ * pow_p(p_, shift_), pow_p(p_, k));
}

bool operator==(const PadicScalar& a, const PadicScalar& b) {
  if (a.p_ != b.p_ || a.kind_ != b.kind_) return false;
  if (a.kind_ != PadicScalar::Kind::Value) return a.kind_ == PadicScalar::Kind::ExactZero || a.shift_ == b.shift_;
  return a.shift_ == b.shift_ && a.exact_ == b.exact_ && a.mant_ == b.mant_ &&
         (a.exact_ || a.prec_ == b.prec_);
}

std::string PadicScalar::str() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::ExactZero: os << "0"; break;
    case Kind::ZeroAtPrec: os << "O(" << p_ << "^" << shift_ << ")"; break;
    case Kind::Value:
      os << mant_.get_str();
      if (shift_ != 0) os << "*" << p_ << "^" << shift_;
      if (exact_) os << " (exact)";
      else os << " + O(" << p_ << "^" << (shift_ + prec_) << ")";
      break;
  }
  return os.str();
}

// ----------------------------------------------------------------- CycScalar

long CycScalar::phi() const {
  if (level_ == 0) return 1;  // trivial extension
  long f = p_ - 1;
  for (int i = 1; i < level_; ++i) f *= p_;
  return f;
}

void CycScalar::check_compat(const CycScalar& a, const CycScalar& b) {
  if (a.p_ != b.p_ || a.level_ != b.level_) fail("LevelMismatch", "cyclotomic operands of different level or prime");
}

CycScalar CycScalar::from_scalar(long p, int level, const PadicScalar& c) {
  CycScalar z(p, level);
  z.insert_raw(0, c);
  return z;
}

CycScalar CycScalar::one(long p, int level, int N) {
  return from_scalar(p, level, PadicScalar::from_int(p, 1, N));
}

CycScalar CycScalar::root_power(long p, int level, const Int& e, int N) {
  CycScalar z(p, level);
  Int red = mod_reduce(e, pow_p(p, level));
  z.add_reduced(red.get_si(), PadicScalar::from_int(p, 1, N));
  return z;
}

bool CycScalar::is_exact_zero() const {
  for (auto& [e, c] : c_)
    if (!c.is_exact_zero()) return false;
  return true;
}

bool CycScalar::is_zeroish() const {
  for (auto& [e, c] : c_)
    if (!c.is_zeroish()) return false;
  return true;
}

PadicScalar CycScalar::coord(long i) const {
  auto it = c_.find(i);
  return it == c_.end() ? PadicScalar::zero(p_) : it->second;
}

void CycScalar::insert_raw(long e, const PadicScalar& c) {
  if (c.is_exact_zero()) return;
  auto it = c_.find(e);
  if (it == c_.end()) {
    c_.emplace(e, c);
  } else {
    PadicScalar s = it->second + c;
    if (s.is_exact_zero()) c_.erase(it);
    else it->second = s;
  }
}

void CycScalar::add_reduced(long e, const PadicScalar& c) {
  long f = phi();
  if (e < f) {
    insert_raw(e, c);
    return;
  }
  // zeta^e = -sum_{j<p-1} zeta^(e - phi + j p^(level-1)) for phi <= e < p^level
  long step = f / (p_ - 1);  // p^(level-1)
  PadicScalar neg = -c;
  for (long j = 0; j < p_ - 1; ++j) insert_raw(e - f + j * step, neg);
}

void CycScalar::add_term(long e, const PadicScalar& c) {
  Int red = mod_reduce(Int(e), order());
  add_reduced(red.get_si(), c);
}

CycScalar CycScalar::operator-() const {
  CycScalar r(p_, level_);
  for (auto& [e, c] : c_) r.c_.emplace(e, -c);
  return r;
}

CycScalar operator+(const CycScalar& a, const CycScalar& b) {
  CycScalar::check_compat(a, b);
  CycScalar r = a;
  for (auto& [e, c] : b.c_) r.insert_raw(e, c);
  return r;
}

CycScalar operator*(const CycScalar& a, const CycScalar& b) {
  CycScalar::check_compat(a, b);
  CycScalar r(a.p_, a.level_);
  Int ord = a.order();
  for (auto& [ea, ca] : a.c_)
    for (auto& [eb, cb] : b.c_) {
      long e = ea + eb;  // < 2 p^level, fits easily
      if (e >= ord.get_si()) e -= ord.get_si();
      r.add_reduced(e, ca * cb);
    }
  return r;
}

CycScalar CycScalar::scale(const PadicScalar& s) const {
  CycScalar r(p_, level_);
  if (s.is_exact_zero()) return r;
  for (auto& [e, c] : c_) r.insert_raw(e, c * s);
  return r;
}

CycScalar CycScalar::galois(const Int& a) const {
  if (mpz_gcd_ui(nullptr, a.get_mpz_t(), static_cast<unsigned long>(p_)) != 1)
    fail("BadGalois", "Galois exponent not coprime to p");
  CycScalar r(p_, level_);
  Int ord = order();
  for (auto& [e, c] : c_) {
    Int en = mod_reduce(a * e, ord);
    r.add_reduced(en.get_si(), c);
  }
  return r;
}

CycScalar CycScalar::embed_to_level(int target) const {
  if (target < level_) fail("LevelMismatch", "embed_to_level goes upward");
  if (target == level_) return *this;
  long f = 1;
  for (int i = level_; i < target; ++i) f *= p_;
  CycScalar r(p_, target);
  for (auto& [e, c] : c_) r.insert_raw(e * f, c);
  return r;
}

CycScalar CycScalar::descend_to_level(int target) const {
  if (target > level_) fail("LevelMismatch", "descend_to_level goes downward");
  if (target == level_) return *this;
  long f = 1;
  for (int i = target; i < level_; ++i) f *= p_;
  CycScalar r(p_, target);
  long cap = std::numeric_limits<long>::max();
  for (auto& [e, c] : c_) {
    if (e % f == 0) {
      r.insert_raw(e / f, c);
    } else if (c.is_zeroish()) {
      cap = std::min(cap, c.abs_prec());
    } else {
      fail("NonDescendable", "coordinate zeta^" + std::to_string(e) + " obstructs level descent");
    }
  }
  if (cap != std::numeric_limits<long>::max()) {
    CycScalar capped(p_, target);
    for (auto& [e, c] : r.c_) {
      PadicScalar noisy = c + PadicScalar::zero_at_prec(p_, cap);
      capped.insert_raw(e, noisy);
    }
    return capped;
  }
  return r;
}

PadicScalar CycScalar::descend_to_base() const {
  PadicScalar base = PadicScalar::zero(p_);
  long cap = std::numeric_limits<long>::max();
  for (auto& [e, c] : c_) {
    if (e == 0) {
      base = c;
    } else if (c.is_zeroish()) {
      if (c.is_zero_at_prec()) cap = std::min(cap, c.abs_prec());
    } else {
      fail("NonDescendable", "nonzero coordinate at zeta^" + std::to_string(e));
    }
  }
  if (cap != std::numeric_limits<long>::max()) base = base + PadicScalar::zero_at_prec(p_, cap);
  return base;
}

CycScalar::Norm CycScalar::lognorm() const {
  // transform to the (zeta-1)-power basis: d_j = sum_i binom(i, j) c_i
  if (c_.empty()) return {LogNorm::neg_inf(), true};
  long maxi = c_.rbegin()->first;
  long f = phi();
  bool have_exact = false, have_bound = false;
  Rat best_exact, best_bound;
  bool all_zeroish = true;
  for (long j = 0; j <= maxi; ++j) {
    PadicScalar d = PadicScalar::zero(p_);
    for (auto& [i, ci] : c_) {
      if (i < j) continue;
      Int b;
      mpz_bin_uiui(b.get_mpz_t(), static_cast<unsigned long>(i), static_cast<unsigned long>(j));
      d = d + ci * PadicScalar::from_int(p_, b, ci.is_exact() ? 32 : ci.rel_prec());
    }
    if (d.is_exact_zero()) continue;
    Rat vj;
    if (d.is_zero_at_prec()) {
      vj = Rat(d.abs_prec()) + rat_of(j, f);
      if (!have_bound || vj < best_bound) { have_bound = true; best_bound = vj; }
    } else {
      all_zeroish = false;
      vj = Rat(d.val()) + rat_of(j, f);
      if (!have_exact || vj < best_exact) { have_exact = true; best_exact = vj; }
    }
  }
  if (!have_exact && !have_bound) return {LogNorm::neg_inf(), true};
  if (all_zeroish) return {LogNorm(-best_bound), false};  // zero at tracked precision
  if (!have_bound || best_exact < best_bound) return {LogNorm(-best_exact), true};
  return {LogNorm(-std::min(best_exact, best_bound)), false};
}

std::string CycScalar::str() const {
  std::ostringstream os;
  if (c_.empty()) return "0";
  bool first = true;
  for (auto& [e, c] : c_) {
    if (!first) os << " + ";
    first = false;
    os << "(" << c.str() << ")";
    if (e > 0) os << "*z^" << e;
  }
  return os.str();
}

CycScalar root_power_scalar(long p, int level, const PadicScalar& lambda, int N) {
  if (level == 0) return CycScalar::one(p, 0, N);
  return CycScalar::root_power(p, level, lambda.residue_mod_pk(level), N);
}

CycScalar root_power_rat(long p, int level, const Rat& lambda, int N) {
  if (level == 0) return CycScalar::one(p, 0, N);
  Int pk = pow_p(p, level);
  Int num = rat_num(lambda), den = rat_den(lambda);
  if (mpz_divisible_ui_p(den.get_mpz_t(), static_cast<unsigned long>(p)))
    fail("PPowerDenominator", "exponent with p-power denominator has no root-of-unity power");
  Int r = mod_reduce(num * mod_inverse(den, pk), pk);
  return CycScalar::root_power(p, level, r, N);
}

}  // namespace pfuchs
