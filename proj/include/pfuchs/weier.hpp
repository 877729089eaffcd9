#pragma once

// Extremal-degree analysis and factorization of Laurent series along one
// designated variable, at a single radius point:
//
//   * is_bidistinguished — locate the least and greatest norm-attaining
//     degrees (nu, mu) along the variable and certify both coefficient
//     slabs as units; everything below nu and above mu must sit strictly
//     under the Gauss norm.
//   * shear_to_bidistinguished — monomial change of variables t_i ->
//     t_i (w t_n^s)^(j^(n-1-i)) spreading the norm-attaining exponents
//     into distinct degrees of the last variable.
//   * split_tails — f = g * t^mu * h with g = 1 + (positive tail smaller
//     than the whole) and h supported in nonpositive degrees, by a
//     contracting two-factor refinement.
//   * factor_monic_times_unit — f = P * u with P monic in the designated
//     variable and u a certified unit.
//
// All norms are base-p log norms at a radius point s (one rational per
// variable); the series machinery lives in laurent.hpp.

#include <algorithm>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pfuchs/laurent.hpp"
#include "pfuchs/rat.hpp"
#include "pfuchs/scalar.hpp"

namespace pfuchs {

// ---------------------------------------------------------------------------
// small helpers

inline ExpVec axis_vec(int nvars, int var, long k) {
  ExpVec e(nvars, 0);
  e[var] = k;
  return e;
}

// The degree-j slab of f along var: every term with e[var] == j, kept in the
// full n-variable representation (the var coordinate stays pinned at j).
template <class C>
Series<C> var_slab(const Series<C>& f, int var, long j) {
  Window w = f.window();
  w.lo[var] = w.hi[var] = j;
  Series<C> r(f.p(), f.nvars(), w);
  for (const auto& [e, c] : f.terms())
    if (e[var] == j) r.add_term(e, c);
  return r;
}

namespace detail {

inline long fit_long(const Int& z, const char* what) {
  if (!z.fits_slong_p())
    fail("WindowOverflow", std::string(what) + " exceeds the exponent range");
  return z.get_si();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// extremal-degree detection

// Certificate that f is two-sided dominated along one variable: the least
// and greatest degrees attaining the Gauss norm carry unit coefficient
// slabs, and all other degrees outside [lower_deg, upper_deg] sit strictly
// below the norm.  Degrees strictly between the extremes may attain the
// norm as well; they carry no condition.
template <class C>
struct BidistReport {
  bool pass = false;
  long lower_deg = 0;
  long upper_deg = 0;
  GaussNorm sup{LogNorm::neg_inf(), true};
  Series<C> lower_slab, upper_slab;  // coefficient slabs at the extremes
  typename Series<C>::UnitCheck lower_unit{}, upper_unit{};
  std::optional<Rat> margin;    // least positive log gap sup - |f_j t^j| over
                                // present degrees outside the attaining set;
                                // empty when every present degree attains
  std::optional<long> witness;  // offending degree when !pass
  std::string reason;           // empty when pass
};

// Decide the certificate at the radius point s.  Exact on finite support
// with exactly-normed coefficients; a truncated coefficient whose norm
// bound ties the Gauss norm makes membership undecidable and raises
// IndeterminateNorm.  Gaps measured against truncated bounds stay honest
// (bounds are conservative).
template <class C>
BidistReport<C> is_bidistinguished(const Series<C>& f, const std::vector<Rat>& s, int var) {
  if (var < 0 || var >= f.nvars()) fail("Dimension", "variable index out of range");
  if (f.empty()) fail("ZeroSeries", "extremal degrees of the zero series");

  // per-degree norm bounds along var
  std::map<long, GaussNorm> table;
  for (const auto& [e, c] : f.terms()) {
    GaussNorm g = CoeffTraits<C>::lognorm(c);
    GaussNorm t{g.upper + dot(e, s), g.exact};
    auto [it, fresh] = table.emplace(e[var], t);
    if (!fresh) it->second = gn_max(it->second, t);
  }
  GaussNorm sup{LogNorm::neg_inf(), true};
  for (const auto& [j, gn] : table) sup = gn_max(sup, gn);
  if (sup.upper.is_neg_inf()) fail("ZeroSeries", "series vanishes at tracked precision");
  if (!sup.exact)
    fail("IndeterminateNorm", "Gauss norm bound reached only by truncated coefficients");

  BidistReport<C> rep;
  rep.sup = sup;
  bool have = false;
  for (const auto& [j, gn] : table) {
    if (gn.upper == sup.upper) {
      if (!gn.exact)
        fail("IndeterminateNorm", "truncated coefficient slab ties the Gauss norm bound");
      if (!have) rep.lower_deg = j;
      rep.upper_deg = j;
      have = true;
    } else if (!gn.upper.is_neg_inf()) {
      Rat gap = sup.upper.value() - gn.upper.value();  // > 0
      if (!rep.margin || gap < *rep.margin) rep.margin = gap;
    }
  }

  const LogRadiusBox box = LogRadiusBox::point(s);
  rep.lower_slab = var_slab(f, var, rep.lower_deg);
  rep.upper_slab = var_slab(f, var, rep.upper_deg);
  rep.lower_unit = rep.lower_slab.is_unit_on_box(box);
  rep.upper_unit = rep.upper_slab.is_unit_on_box(box);
  if (!rep.lower_unit.unit) {
    rep.witness = rep.lower_deg;
    rep.reason = "lower extremal slab is not a certified unit";
    return rep;
  }
  if (!rep.upper_unit.unit) {
    rep.witness = rep.upper_deg;
    rep.reason = "upper extremal slab is not a certified unit";
    return rep;
  }
  rep.pass = true;
  return rep;
}

template <class C>
BidistReport<C> is_bidistinguished(const Series<C>& f, const std::vector<Rat>& s) {
  return is_bidistinguished(f, s, f.nvars() - 1);
}

// ---------------------------------------------------------------------------
// monomial shears

// The substitution t_i -> t_i * (w t_last^s_exp)^(j^(n-1-i)) for i < n-1,
// with w = p^w_pow chosen so |w t_last^s_exp| = 1 at the radius point.  An
// isometric ring automorphism; `inverse` applies the reverse substitution.
struct ShearMap {
  int nvars = 0;
  long j = 0;
  long s_exp = 0;  // positive exponent on the last variable
  Int w_pow;       // w = p^w_pow
};

template <class C>
Series<C> shear_apply(const Series<C>& f, const ShearMap& m, bool inverse = false) {
  const int n = f.nvars();
  if (n != m.nvars || n < 2) fail("Dimension", "shear arity mismatch");
  if (f.empty()) fail("ZeroSeries", "shear of the zero series");
  const long sign = inverse ? -1 : 1;
  std::vector<C> coef;
  std::vector<ExpVec> image;
  const C one = CoeffTraits<C>::one_like(f.terms().begin()->second);
  Int jp = 1;  // j^(n-1-i), built from the innermost variable outwards
  std::vector<Int> powers(n - 1);
  for (int i = n - 2; i >= 0; --i) {
    jp *= m.j;
    powers[i] = jp;
  }
  for (int i = 0; i < n - 1; ++i) {
    long wexp = detail::fit_long(sign * m.w_pow * powers[i], "shear scalar exponent");
    long texp = detail::fit_long(sign * Int(m.s_exp) * powers[i], "shear monomial exponent");
    coef.push_back(CoeffTraits<C>::scale_pow_p(one, wexp));
    ExpVec img = axis_vec(n, i, 1);
    img[n - 1] += texp;
    image.push_back(img);
  }
  coef.push_back(one);
  image.push_back(axis_vec(n, n - 1, 1));
  return f.monomial_substitute(coef, image);
}

template <class C>
struct ShearResult {
  Series<C> sheared;
  ShearMap map;
  long L = 0;                      // max attaining coordinate magnitude
  std::vector<ExpVec> attaining;   // norm-attaining exponents of the input
  bool input_bidistinguished = false;
  BidistReport<C> report;          // certificate for the sheared series
};

namespace detail {

template <class C>
ShearResult<C> shear_with(const Series<C>& f, const std::vector<Rat>& s,
                          std::vector<ExpVec> attaining, long L, long j) {
  const int n = f.nvars();
  const int var = n - 1;
  ShearResult<C> out;
  out.L = L;
  out.attaining = std::move(attaining);
  out.input_bidistinguished = is_bidistinguished(f, s, var).pass;

  ShearMap m;
  m.nvars = n;
  m.j = j;
  m.s_exp = fit_long(Int(rat_den(s[var])), "shear radius denominator");
  m.w_pow = rat_num(s[var]);  // s_exp * s_var, an integer by construction
  out.map = m;
  out.sheared = shear_apply(f, m);

  // predicted extremal degrees: the lex-least / lex-greatest attaining
  // exponents land at the ends, everything else strictly between
  const ExpVec& vlo = out.attaining.front();
  const ExpVec& vhi = out.attaining.back();
  Int lo = vlo[var], hi = vhi[var];
  Int jp = 1;
  for (int i = n - 2; i >= 0; --i) {
    jp *= j;
    lo += Int(m.s_exp) * jp * vlo[i];
    hi += Int(m.s_exp) * jp * vhi[i];
  }
  out.report = is_bidistinguished(out.sheared, s, var);
  if (!out.report.pass)
    fail("Internal", "shear produced a non-certified series: " + out.report.reason);
  if (Int(out.report.lower_deg) != lo || Int(out.report.upper_deg) != hi)
    fail("Internal", "sheared extremal degrees disagree with the predicted values");
  return out;
}

}  // namespace detail

// Shear f along the last variable until the extremal-degree certificate
// passes, with j = 3L + 1 and L the largest coordinate magnitude over the
// norm-attaining exponents.  The substitution is applied unconditionally
// (it is an isometry and preserves an already-passing certificate); the
// returned map allows exact inversion via shear_apply(.., true).
template <class C>
ShearResult<C> shear_to_bidistinguished(const Series<C>& f, const std::vector<Rat>& s) {
  if (f.nvars() < 2) fail("Dimension", "shear needs at least two variables");
  std::vector<ExpVec> attaining = f.argmax_exponents(s);
  long L = 0;
  for (const auto& e : attaining)
    for (long x : e) L = std::max(L, std::labs(x));
  return detail::shear_with(f, s, std::move(attaining), L, 3 * L + 1);
}

// Batch variant: one j = 3L + 1 with L taken over all inputs, so a single
// substitution works uniformly for the whole family.
template <class C>
std::vector<ShearResult<C>> shear_uniform(const std::vector<Series<C>>& fs,
                                          const std::vector<Rat>& s) {
  if (fs.empty()) return {};
  std::vector<std::vector<ExpVec>> att;
  long L = 0;
  for (const auto& f : fs) {
    if (f.nvars() < 2) fail("Dimension", "shear needs at least two variables");
    att.push_back(f.argmax_exponents(s));
    for (const auto& e : att.back())
      for (long x : e) L = std::max(L, std::labs(x));
  }
  std::vector<ShearResult<C>> out;
  out.reserve(fs.size());
  for (size_t i = 0; i < fs.size(); ++i)
    out.push_back(detail::shear_with(fs[i], s, std::move(att[i]), L, 3 * L + 1));
  return out;
}

// ---------------------------------------------------------------------------
// two-factor tail splitting

struct SplitOptions {
  std::optional<Rat> target_rel;  // log residual target relative to |f|; default -31
  int max_rounds = 64;
  bool incremental_error = false;  // maintain the defect by the update rule
                                   // instead of recomputing it from scratch
  std::optional<long> coeff_pad;   // half-width padding of the coefficient
                                   // frame in the non-designated variables
};

namespace detail {

template <class C>
struct EngineOut {
  Series<C> g, h;
  LogNorm defect = LogNorm::neg_inf();  // certified bound on |phi - g*h| at s
  int rounds = 0;
  std::optional<Rat> ratio;             // per-round contraction bound (log)
  std::vector<LogNorm> round_defects;   // defect bound entering each round
  Window frame;                         // coefficient frame used internally
};

// Refine phi = g * h with g = 1 + (positive var-support) and h supported in
// nonpositive var-degrees, assuming the Gauss norm of phi is attained on the
// degree-0 slab (a certified unit) and the positive part sits strictly
// below.  Each round solves the current defect E as du*b + dv by a top-down
// triangular pass — only the inverse of the degree-0 slab is ever needed —
// and updates (u, v); the defect then contracts at least by the gap between
// the positive tail and the whole.
//
// For finite-support input the var-support of every iterate stays inside
// fixed windows; in two or more variables the coefficient support can grow
// without bound, so products are clipped to a padded frame and every
// discarded term is measured into the certified defect.
template <class C>
EngineOut<C> backward_split(const Series<C>& phi, int var, const std::vector<Rat>& s,
                            const SplitOptions& opt) {
  const long p = phi.p();
  const int n = phi.nvars();
  const LogRadiusBox box = LogRadiusBox::point(s);
  const Rat target_rel = opt.target_rel.value_or(Rat(-31));
  if (target_rel >= 0) fail("BadTarget", "residual target must be negative");

  if (phi.empty()) fail("Internal", "tail split of the zero series");
  const long D = std::max<long>(*phi.max_exp(var), 1);
  const long mlo = std::min<long>(*phi.min_exp(var), 0);

  // symmetric padded frame for the non-designated variables (covers slab
  // inverses and their products); one extra digit of room per digit of the
  // residual target, since each round can extend the support by one step
  Window frame = phi.support_hull();
  {
    const Rat depth = -target_rel;  // > 0
    Int digits;
    mpz_cdiv_q(digits.get_mpz_t(), depth.get_num_mpz_t(), depth.get_den_mpz_t());
    long pad = opt.coeff_pad.value_or(8 + fit_long(digits, "residual target"));
    for (int i = 0; i < n; ++i) {
      if (i == var) continue;
      long lo = std::min(frame.lo[i], -frame.hi[i]) - pad;
      long hi = std::max(frame.hi[i], -frame.lo[i]) + pad;
      frame.lo[i] = lo;
      frame.hi[i] = hi;
    }
  }
  Window wu = frame, wv = frame, we = frame, winv = frame;
  wu.lo[var] = 1;
  wu.hi[var] = D;
  wv.lo[var] = mlo;
  wv.hi[var] = 0;
  we.lo[var] = mlo;
  we.hi[var] = D;
  winv.lo[var] = winv.hi[var] = 0;

  auto [b, e0] = phi.split_at(var, 0);
  Series<C> b0 = var_slab(b, var, 0);
  if (b0.empty() || b0.is_zeroish_all())
    fail("Internal", "tail split needs a degree-zero slab carrying the norm");
  const GaussNorm bn = b0.gauss_lognorm(s);
  const GaussNorm phin = phi.gauss_lognorm(s);
  if (!(bn.upper == phin.upper))
    fail("Internal", "degree-zero slab does not attain the Gauss norm");
  const Rat target_abs = phin.upper.value() + target_rel;

  EngineOut<C> out;
  out.frame = frame;
  if (!e0.empty()) {
    LogNorm q = e0.gauss_lognorm(s).upper;
    if (!q.is_neg_inf()) {
      if (!(q < bn.upper)) fail("Internal", "positive tail does not contract");
      out.ratio = q.value() - bn.upper.value();
    }
  }

  typename Series<C>::InvertResult inv =
      b0.invert_unit(box, winv, target_rel);

  const C one_c = CoeffTraits<C>::one_like(b0.terms().begin()->second);
  const Series<C> one_s = Series<C>::monomial(one_c, ExpVec(n, 0));
  Series<C> u = Series<C>::zero(p, n, wu);
  Series<C> v = Series<C>::zero(p, n, wv);
  Series<C> E = e0;
  LogNorm ledger = LogNorm::neg_inf();
  const ClipPolicy clip{true, box};

  while (true) {
    LogNorm en = E.empty() ? LogNorm::neg_inf() : E.gauss_lognorm(s).upper;
    en = LogNorm::max(en, ledger);
    out.defect = en;
    out.round_defects.push_back(en);
    if (!(en > LogNorm(target_abs))) break;  // reached the target
    if (ledger > LogNorm(target_abs))
      fail("WindowTooSmall", "clipped coefficient mass exceeds the residual target");
    if (E.is_zeroish_all())
      fail("PrecisionExhausted", "defect sits below tracked precision but above the target");
    if (out.rounds >= opt.max_rounds)
      fail("IterationBudget", "tail split did not reach the residual target in " +
                                  std::to_string(opt.max_rounds) + " rounds");
    ++out.rounds;

    // solve E = du * b + dv by killing positive slabs top-down; only the
    // degree-0 slab inverse enters, so du is as exact as the data allows
    Series<C> du = Series<C>::zero(p, n, wu);
    Series<C> r = E;
    const long top = r.max_exp(var) ? *r.max_exp(var) : 0;
    for (long jd = std::min(top, D); jd >= 1; --jd) {
      Series<C> rj = var_slab(r, var, jd);
      if (rj.empty() || rj.is_zeroish_all()) continue;
      auto [duj, rep] = (inv.inverse * rj).restrict_to(wu, clip);
      ledger = LogNorm::max(ledger, rep.max_discarded);
      if (duj.empty()) continue;
      du = du + duj;
      r = r - duj * b;
    }
    auto [rneg, rpos] = r.split_at(var, 0);
    // rpos holds whatever the truncated slab inverse could not cancel; it
    // stays inside the defect rather than being dropped
    auto [dv, repv] = rneg.restrict_to(wv, clip);
    ledger = LogNorm::max(ledger, repv.max_discarded);

    if (opt.incremental_error) {
      Series<C> E2 = rpos - du * v - u * dv - du * dv;
      u = u + du;
      v = v + dv;
      E = std::move(E2);
    } else {
      u = u + du;
      v = v + dv;
      E = phi - (one_s + u) * (b + v);
    }
    auto [E2, repe] = E.restrict_to(we, clip);
    ledger = LogNorm::max(ledger, repe.max_discarded);
    E = std::move(E2);
  }

  out.g = one_s + u;
  out.h = b + v;
  return out;
}

}  // namespace detail

template <class C>
struct TailSplit {
  Series<C> g, h;  // f ~= g * t^mu * h; g = 1 + positive tail, h nonpositive
  long mu = 0;
  LogNorm residual;  // certified bound on |f - g * t^mu * h| at s
  int rounds = 0;
  std::optional<Rat> ratio;            // per-round contraction bound (log)
  std::vector<LogNorm> round_defects;  // defect entering each round
  BidistReport<C> report;              // input certificate
};

// Split f (certified two-sided dominated along var) as g * t^mu * h: the
// upper extremal degree is shifted to zero and the positive tail is folded
// into g = 1 + u, leaving h supported in nonpositive degrees with the upper
// extremal slab as its (unit) constant term.  The defect of the returned
// pair is certified at or below the requested tolerance, or the operation
// errors out (IterationBudget / PrecisionExhausted / WindowTooSmall).
template <class C>
TailSplit<C> split_tails(const Series<C>& f, const std::vector<Rat>& s, int var,
                         const SplitOptions& opt = {}) {
  TailSplit<C> out;
  out.report = is_bidistinguished(f, s, var);
  if (!out.report.pass) fail("NotBidistinguished", out.report.reason);
  out.mu = out.report.upper_deg;

  Series<C> phi = f.shifted(axis_vec(f.nvars(), var, -out.mu));
  auto eng = detail::backward_split(phi, var, s, opt);
  out.g = std::move(eng.g);
  out.h = std::move(eng.h);
  out.rounds = eng.rounds;
  out.ratio = eng.ratio;
  out.round_defects = std::move(eng.round_defects);
  out.residual = eng.defect + (Rat(out.mu) * s[var]);
  return out;
}

template <class C>
TailSplit<C> split_tails(const Series<C>& f, const std::vector<Rat>& s,
                         const SplitOptions& opt = {}) {
  return split_tails(f, s, f.nvars() - 1, opt);
}

// ---------------------------------------------------------------------------
// monic-times-unit preparation

template <class C>
struct MonicFactor {
  Series<C> P, u;  // f ~= P * u
  long degree = 0;  // var-degree of the monic P: upper_deg - min support
  long shift = 0;   // monomial exponent t^shift carried by u
  LogNorm residual;  // measured bound on |f - P * u| at s
  typename Series<C>::UnitCheck unit_check;  // certification of u
  int rounds = 0;
  std::optional<Rat> ratio;
  BidistReport<C> report;
};

// Factor f = P * u with P monic in var of degree upper_deg - min_support
// (nonnegative var-support, top slab exactly 1) and u a certified unit of
// the shape t^m * h0 * (1 + tail).  The entire polynomial content below the
// upper extremal degree is absorbed into P; only the strictly-smaller tail
// above it goes into u.  The residual is measured directly on f - P*u, so
// every truncation along the way is reflected in the certificate.
template <class C>
MonicFactor<C> factor_monic_times_unit(const Series<C>& f, const std::vector<Rat>& s,
                                       int var, const SplitOptions& opt = {}) {
  MonicFactor<C> out;
  out.report = is_bidistinguished(f, s, var);
  if (!out.report.pass) fail("NotBidistinguished", out.report.reason);

  const int n = f.nvars();
  const LogRadiusBox box = LogRadiusBox::point(s);
  const long mu = out.report.upper_deg;
  const long m = *f.min_exp(var);
  out.degree = mu - m;
  out.shift = m;

  Series<C> phi = f.shifted(axis_vec(n, var, -mu));
  auto eng = detail::backward_split(phi, var, s, opt);
  out.rounds = eng.rounds;
  out.ratio = eng.ratio;

  // P = t^degree * h / h0: finite by construction (h lives in [-degree, 0])
  Series<C> h0 = var_slab(eng.h, var, 0);
  auto h0check = h0.is_unit_on_box(box);
  if (!h0check.unit)
    fail("NotUnit", "constant slab of the backward factor lost unit certification");
  Window winv = eng.frame;
  winv.lo[var] = winv.hi[var] = 0;
  auto h0inv = h0.invert_unit(box, winv, opt.target_rel.value_or(Rat(-31)));

  Window wp = eng.frame;
  wp.lo[var] = 0;
  wp.hi[var] = out.degree;
  auto [praw, repp] =
      (eng.h.shifted(axis_vec(n, var, out.degree)) * h0inv.inverse).restrict_to(wp, ClipPolicy{true, box});
  // force the top slab to an exact 1: the deviation (bounded by the slab
  // inverse residual) moves into the measured defect below
  Series<C> top = var_slab(praw, var, out.degree);
  Series<C> one_top =
      Series<C>::monomial(CoeffTraits<C>::one_like(h0.terms().begin()->second),
                          axis_vec(n, var, out.degree));
  out.P = praw - (top - one_top);
  out.u = (h0 * eng.g).shifted(axis_vec(n, var, m));

  Series<C> defect = f - out.P * out.u;
  LogNorm res = defect.empty() ? LogNorm::neg_inf() : defect.gauss_lognorm(s).upper;
  if (repp.clipped()) res = LogNorm::max(res, repp.max_discarded);
  out.residual = res;
  out.unit_check = out.u.is_unit_on_box(box);
  return out;
}

template <class C>
MonicFactor<C> factor_monic_times_unit(const Series<C>& f, const std::vector<Rat>& s,
                                       const SplitOptions& opt = {}) {
  return factor_monic_times_unit(f, s, f.nvars() - 1, opt);
}

}  // namespace pfuchs
