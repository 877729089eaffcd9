#pragma once

// Finite-support multivariate Laurent polynomials with exact norm evaluation.
//
// A Series<C> holds finitely many terms c * t^e (e in Z^n) over a coefficient
// ring C (PadicScalar or CycScalar).  Every series carries a per-variable
// exponent window: the frame inside which coefficients are tracked.  Exact
// operations (add, monomial shifts, part extraction) never clip; windowed
// multiplication and explicit restriction clip terms outside the target
// window and report the discarded mass as a norm bound on a caller-supplied
// log-radius box, so every inexact result carries its own error certificate.
//
// Norms: for a radius vector rho = p^s (s rational), the Gauss norm is
// max_e |c_e| rho^e; in base-p log form that is max_e (lognorm(c_e) + e.s),
// an exact rational (or -inf).  Monomials cannot cancel, so the max over
// terms is the exact norm whenever every contributing coefficient norm is
// exact; zero-at-precision coefficients degrade the result to a certified
// upper bound, flagged via GaussNorm::exact.  The sup norm over a box is the
// max over the 2^n vertices because each term's log-norm is affine in s.

#include "pfuchs/rat.hpp"
#include "pfuchs/scalar.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pfuchs {

using ExpVec = std::vector<long>;  // ordered lexicographically by std::vector

// Relative precision attached to exact small-integer scalars created
// internally (degree factors, +-1 units).  Far above any working precision
// used at desk scale, so it never becomes the binding constraint.
inline constexpr int kIntPrec = 256;

// ---------------------------------------------------------------------------
// Exponent windows and log-radius boxes

struct Window {
  std::vector<long> lo, hi;  // inclusive, lo <= hi componentwise

  Window() = default;
  Window(std::vector<long> l, std::vector<long> h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size()) fail("BadWindow", "window bound sizes differ");
    for (size_t i = 0; i < lo.size(); ++i)
      if (lo[i] > hi[i]) fail("BadWindow", "window lower bound exceeds upper bound");
  }
  static Window cube(int nvars, long lo, long hi) {
    return Window(std::vector<long>(nvars, lo), std::vector<long>(nvars, hi));
  }

  int nvars() const { return static_cast<int>(lo.size()); }

  bool contains(const ExpVec& e) const {
    for (size_t i = 0; i < lo.size(); ++i)
      if (e[i] < lo[i] || e[i] > hi[i]) return false;
    return true;
  }

  friend Window hull(const Window& a, const Window& b) {
    Window w;
    for (size_t i = 0; i < a.lo.size(); ++i) {
      w.lo.push_back(std::min(a.lo[i], b.lo[i]));
      w.hi.push_back(std::max(a.hi[i], b.hi[i]));
    }
    return w;
  }
  // Minkowski sum: contains every product-term exponent of factors in a, b.
  friend Window sum(const Window& a, const Window& b) {
    Window w;
    for (size_t i = 0; i < a.lo.size(); ++i) {
      w.lo.push_back(a.lo[i] + b.lo[i]);
      w.hi.push_back(a.hi[i] + b.hi[i]);
    }
    return w;
  }
  Window shifted(const ExpVec& d) const {
    Window w = *this;
    for (size_t i = 0; i < lo.size(); ++i) {
      w.lo[i] += d[i];
      w.hi[i] += d[i];
    }
    return w;
  }
};

// A box of log-radii s = log_p rho, one rational interval per variable.
// Degenerate intervals (single radius) are allowed.
struct LogRadiusBox {
  std::vector<Rat> lo, hi;

  LogRadiusBox() = default;
  LogRadiusBox(std::vector<Rat> l, std::vector<Rat> h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size()) fail("BadBox", "box bound sizes differ");
    for (size_t i = 0; i < lo.size(); ++i)
      if (lo[i] > hi[i]) fail("BadBox", "box lower bound exceeds upper bound");
  }
  static LogRadiusBox point(std::vector<Rat> s) { return LogRadiusBox(s, s); }

  int nvars() const { return static_cast<int>(lo.size()); }
  bool is_point() const { return lo == hi; }

  // All 2^n corner radius vectors (max is attained there: affine in s).
  std::vector<std::vector<Rat>> vertices() const {
    std::vector<std::vector<Rat>> out;
    const int n = nvars();
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      std::vector<Rat> v(n);
      for (int i = 0; i < n; ++i) v[i] = (mask >> i) & 1 ? hi[i] : lo[i];
      out.push_back(std::move(v));
    }
    return out;
  }

  // Move both walls of every variable inward by e >= 0 (log scale).
  LogRadiusBox shrunk(const Rat& e) const {
    if (e < 0) fail("BadBox", "negative shrink");
    LogRadiusBox b = *this;
    for (size_t i = 0; i < lo.size(); ++i) {
      b.lo[i] = lo[i] + e;
      b.hi[i] = hi[i] - e;
      if (b.lo[i] > b.hi[i]) fail("BadBox", "shrink collapses box");
    }
    return b;
  }
};

inline Rat dot(const ExpVec& e, const std::vector<Rat>& s) {
  Rat acc = 0;
  for (size_t i = 0; i < e.size(); ++i) acc += Rat(e[i]) * s[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Norm results and clipping certificates

// An upper bound on a base-p log-norm, with a flag telling whether the bound
// is attained (exact) or only certified from truncated coefficients.
struct GaussNorm {
  LogNorm upper;
  bool exact = true;
};

// max of two norm bounds: exact when some exact operand attains the result.
inline GaussNorm gn_max(const GaussNorm& a, const GaussNorm& b) {
  if (a.upper > b.upper) return a;
  if (b.upper > a.upper) return b;
  return GaussNorm{a.upper, a.exact || b.exact};
}

struct ClipPolicy {
  bool allow = false;                    // false: any clipped term is an error
  std::optional<LogRadiusBox> box;       // measure discarded mass on this box
};

struct ClipReport {
  long discarded_terms = 0;
  LogNorm max_discarded = LogNorm::neg_inf();  // sup bound over policy box
  bool measured = false;                       // true iff a box was supplied
  bool clipped() const { return discarded_terms > 0; }
};

// ---------------------------------------------------------------------------
// Coefficient traits: uniform view of PadicScalar / CycScalar

template <class C>
struct CoeffTraits;

template <>
struct CoeffTraits<PadicScalar> {
  static long prime(const PadicScalar& c) { return c.p(); }
  static bool is_exact_zero(const PadicScalar& c) { return c.is_exact_zero(); }
  static bool is_zeroish(const PadicScalar& c) { return c.is_zeroish(); }
  static GaussNorm lognorm(const PadicScalar& c) {
    return GaussNorm{c.lognorm_upper(), c.lognorm_exact()};
  }
  static PadicScalar one_like(const PadicScalar& sample) {
    return PadicScalar::from_int(sample.p(), 1, kIntPrec);
  }
  static PadicScalar scale_int(const PadicScalar& c, long k) {
    return c * PadicScalar::from_int(c.p(), k, kIntPrec);
  }
  static PadicScalar scale_pow_p(const PadicScalar& c, long k) { return c.scale_pow_p(k); }
  static PadicScalar pow(const PadicScalar& c, long e) { return c.pow(e); }
};

template <>
struct CoeffTraits<CycScalar> {
  static long prime(const CycScalar& c) { return c.p(); }
  static bool is_exact_zero(const CycScalar& c) { return c.is_exact_zero(); }
  static bool is_zeroish(const CycScalar& c) { return c.is_zeroish(); }
  static GaussNorm lognorm(const CycScalar& c) {
    CycScalar::Norm n = c.lognorm();
    return GaussNorm{n.upper, n.exact};
  }
  static CycScalar one_like(const CycScalar& sample) {
    return CycScalar::one(sample.p(), sample.level(), kIntPrec);
  }
  static CycScalar scale_int(const CycScalar& c, long k) {
    return c.scale(PadicScalar::from_int(c.p(), k, kIntPrec));
  }
  static CycScalar scale_pow_p(const CycScalar& c, long k) {
    return c.scale(PadicScalar::from_int(c.p(), 1, kIntPrec).scale_pow_p(k));
  }
  static CycScalar pow(const CycScalar& c, long e) {
    if (e < 0) fail("NotInvertible", "negative power of a cyclotomic coefficient");
    CycScalar acc = one_like(c);
    for (long i = 0; i < e; ++i) acc = acc * c;
    return acc;
  }
};

// ---------------------------------------------------------------------------
// Series

template <class C>
class Series {
 public:
  using Traits = CoeffTraits<C>;

  Series() : p_(0), nvars_(0) {}
  Series(long p, int nvars, Window window) : p_(p), nvars_(nvars), window_(std::move(window)) {
    if (window_.nvars() != nvars_) fail("BadWindow", "window dimension mismatch");
  }

  static Series zero(long p, int nvars, Window window) { return Series(p, nvars, std::move(window)); }

  static Series monomial(const C& c, const ExpVec& e, Window window) {
    Series f(Traits::prime(c), static_cast<int>(e.size()), std::move(window));
    f.add_term(e, c);
    return f;
  }
  // minimal window fitting the monomial
  static Series monomial(const C& c, const ExpVec& e) { return monomial(c, e, Window(e, e)); }

  long p() const { return p_; }
  int nvars() const { return nvars_; }
  const Window& window() const { return window_; }
  const std::map<ExpVec, C>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }
  long num_terms() const { return static_cast<long>(terms_.size()); }

  const C* coeff_ptr(const ExpVec& e) const {
    auto it = terms_.find(e);
    return it == terms_.end() ? nullptr : &it->second;
  }
  C coeff_or(const ExpVec& e, const C& zero_value) const {
    const C* c = coeff_ptr(e);
    return c ? *c : zero_value;
  }

  // Accumulate c * t^e.  Exact zeros are dropped; zero-at-precision
  // coefficients are kept as explicit error terms.
  void add_term(const ExpVec& e, const C& c) {
    if (static_cast<int>(e.size()) != nvars_) fail("Dimension", "exponent dimension mismatch");
    if (Traits::is_exact_zero(c)) return;
    if (!window_.contains(e)) fail("WindowOverflow", "term exponent outside the series window");
    auto it = terms_.find(e);
    if (it == terms_.end()) {
      terms_.emplace(e, c);
    } else {
      C s = it->second + c;
      if (Traits::is_exact_zero(s))
        terms_.erase(it);
      else
        it->second = std::move(s);
    }
  }

  void set_coeff(const ExpVec& e, const C& c) {
    if (static_cast<int>(e.size()) != nvars_) fail("Dimension", "exponent dimension mismatch");
    if (Traits::is_exact_zero(c)) {
      terms_.erase(e);
      return;
    }
    if (!window_.contains(e)) fail("WindowOverflow", "term exponent outside the series window");
    terms_.insert_or_assign(e, c);
  }

  // ---- exact ring operations -----------------------------------------

  Series operator-() const {
    Series r(p_, nvars_, window_);
    for (const auto& [e, c] : terms_) r.terms_.emplace(e, -c);
    return r;
  }

  friend Series operator+(const Series& a, const Series& b) {
    check_compat(a, b);
    Series r(a.p_, a.nvars_, hull(a.window_, b.window_));
    r.terms_ = a.terms_;
    for (const auto& [e, c] : b.terms_) {
      auto it = r.terms_.find(e);
      if (it == r.terms_.end()) {
        r.terms_.emplace(e, c);
      } else {
        C s = it->second + c;
        if (Traits::is_exact_zero(s))
          r.terms_.erase(it);
        else
          it->second = std::move(s);
      }
    }
    return r;
  }
  friend Series operator-(const Series& a, const Series& b) { return a + (-b); }

  // Exact product on the Minkowski-sum window: nothing is ever clipped.
  friend Series operator*(const Series& a, const Series& b) {
    check_compat(a, b);
    Series r(a.p_, a.nvars_, sum(a.window_, b.window_));
    ExpVec e(a.nvars_);
    for (const auto& [ea, ca] : a.terms_)
      for (const auto& [eb, cb] : b.terms_) {
        for (int i = 0; i < a.nvars_; ++i) e[i] = ea[i] + eb[i];
        r.add_term(e, ca * cb);
      }
    return r;
  }

  // Multiply every term by c * t^d (an exact Laurent-monomial scaling).
  Series times_monomial(const C& c, const ExpVec& d) const {
    Series r(p_, nvars_, window_.shifted(d));
    ExpVec e(nvars_);
    for (const auto& [e0, c0] : terms_) {
      for (int i = 0; i < nvars_; ++i) e[i] = e0[i] + d[i];
      r.add_term(e, c0 * c);
    }
    return r;
  }
  Series shifted(const ExpVec& d) const {
    Series r(p_, nvars_, window_.shifted(d));
    ExpVec e(nvars_);
    for (const auto& [e0, c0] : terms_) {
      for (int i = 0; i < nvars_; ++i) e[i] = e0[i] + d[i];
      r.terms_.emplace(e, c0);
    }
    return r;
  }

  // Apply fn to every coefficient, dropping exact zeros (precision bookwork
  // is the scalar layer's job).  fn: C -> C.
  template <class F>
  Series map_coeffs(F&& fn) const {
    Series r(p_, nvars_, window_);
    for (const auto& [e, c] : terms_) {
      C v = fn(c);
      if (!Traits::is_exact_zero(v)) r.terms_.emplace(e, std::move(v));
    }
    return r;
  }

  // t_var * d/dt_var: term exponents are unchanged, coefficients scale by
  // the integer exponent (so constants in t_var die exactly).
  Series log_derivative(int var) const {
    Series r(p_, nvars_, window_);
    for (const auto& [e, c] : terms_) {
      if (e[var] == 0) continue;
      C v = Traits::scale_int(c, e[var]);
      if (!Traits::is_exact_zero(v)) r.terms_.emplace(e, std::move(v));
    }
    return r;
  }

  // Substitute t_i -> c_i * t_i.  Negative exponents use pow(c_i, -1), so
  // each c_i must be invertible in C.
  Series scale_substitute(const std::vector<C>& c) const {
    if (static_cast<int>(c.size()) != nvars_) fail("Dimension", "substitution arity mismatch");
    Series r(p_, nvars_, window_);
    for (const auto& [e, c0] : terms_) {
      C v = c0;
      for (int i = 0; i < nvars_; ++i)
        if (e[i] != 0) v = v * Traits::pow(c[i], e[i]);
      if (!Traits::is_exact_zero(v)) r.add_term(e, v);
    }
    return r;
  }

  // General monomial substitution t_i -> coef_i * t^{image_i} (image_i in
  // Z^n).  The window maps to the hull of the images of the window corners
  // (each output coordinate is linear in the input exponent, so extremes are
  // attained at corners).
  Series monomial_substitute(const std::vector<C>& coef,
                             const std::vector<ExpVec>& image) const {
    if (static_cast<int>(coef.size()) != nvars_ || static_cast<int>(image.size()) != nvars_)
      fail("Dimension", "substitution arity mismatch");
    Window w = mapped_window(image);
    Series r(p_, nvars_, w);
    for (const auto& [e, c0] : terms_) {
      ExpVec img(nvars_, 0);
      for (int i = 0; i < nvars_; ++i)
        for (int j = 0; j < nvars_; ++j) img[j] += e[i] * image[i][j];
      C v = c0;
      for (int i = 0; i < nvars_; ++i)
        if (e[i] != 0) v = v * Traits::pow(coef[i], e[i]);
      if (!Traits::is_exact_zero(v)) r.add_term(img, v);
    }
    return r;
  }

  // ---- window restriction / clipping ----------------------------------

  std::pair<Series, ClipReport> restrict_to(const Window& w, const ClipPolicy& pol) const {
    if (w.nvars() != nvars_) fail("Dimension", "window dimension mismatch");
    Series r(p_, nvars_, w);
    ClipReport rep;
    rep.measured = pol.box.has_value();
    for (const auto& [e, c] : terms_) {
      if (w.contains(e)) {
        r.terms_.emplace(e, c);
        continue;
      }
      if (!pol.allow) fail("WindowOverflow", "clipping disallowed: term outside target window");
      ++rep.discarded_terms;
      if (pol.box) {
        LogNorm t = term_sup(e, c, *pol.box);
        rep.max_discarded = LogNorm::max(rep.max_discarded, t);
      }
    }
    return {std::move(r), rep};
  }

  // Split along one variable: terms with e[var] <= cut and the rest.  Exact
  // complementary decomposition, f = first + second.
  std::pair<Series, Series> split_at(int var, long cut) const {
    Window wlo = window_, whi = window_;
    wlo.hi[var] = std::min(window_.hi[var], cut);
    whi.lo[var] = std::max(window_.lo[var], cut + 1);
    // degenerate halves keep a consistent empty frame
    if (wlo.hi[var] < wlo.lo[var]) wlo.hi[var] = wlo.lo[var];
    if (whi.lo[var] > whi.hi[var]) whi.lo[var] = whi.hi[var];
    Series a(p_, nvars_, wlo), b(p_, nvars_, whi);
    for (const auto& [e, c] : terms_)
      (e[var] <= cut ? a : b).terms_.emplace(e, c);
    return {std::move(a), std::move(b)};
  }

  std::optional<long> min_exp(int var) const {
    std::optional<long> m;
    for (const auto& [e, c] : terms_)
      if (!m || e[var] < *m) m = e[var];
    return m;
  }
  std::optional<long> max_exp(int var) const {
    std::optional<long> m;
    for (const auto& [e, c] : terms_)
      if (!m || e[var] > *m) m = e[var];
    return m;
  }
  // tight window around the support (empty series: collapses to {0})
  Window support_hull() const {
    if (terms_.empty()) return Window(std::vector<long>(nvars_, 0), std::vector<long>(nvars_, 0));
    ExpVec lo = terms_.begin()->first, hi = lo;
    for (const auto& [e, c] : terms_)
      for (int i = 0; i < nvars_; ++i) {
        lo[i] = std::min(lo[i], e[i]);
        hi[i] = std::max(hi[i], e[i]);
      }
    return Window(lo, hi);
  }

  // all coefficients vanish at their tracked precision
  bool is_zeroish_all() const {
    for (const auto& [e, c] : terms_)
      if (!Traits::is_zeroish(c)) return false;
    return true;
  }

  // ---- norms ------------------------------------------------------------

  // log_p of the Gauss norm at radius p^s: max over terms of
  // lognorm(coeff) + e.s.  Exact when the max is certified by an exact
  // coefficient norm at least as large as every truncated bound.
  GaussNorm gauss_lognorm(const std::vector<Rat>& s) const {
    check_radius(s);
    GaussNorm best{LogNorm::neg_inf(), true};
    for (const auto& [e, c] : terms_) {
      GaussNorm g = Traits::lognorm(c);
      g.upper = g.upper + dot(e, s);
      best = gn_max(best, g);
    }
    return best;
  }

  // sup over the box = max over the 2^n vertices (term log-norms are affine
  // in s, and a max of affine functions on a box peaks at a vertex).
  GaussNorm sup_lognorm(const LogRadiusBox& box) const {
    check_box(box);
    GaussNorm best{LogNorm::neg_inf(), true};
    for (const auto& v : box.vertices()) best = gn_max(best, gauss_lognorm(v));
    return best;
  }

  // Exponents attaining the Gauss norm at s.  Requires the norm to be
  // exactly determined: every term whose upper bound reaches the max must
  // have an exact coefficient norm, else membership is indeterminate.
  std::vector<ExpVec> argmax_exponents(const std::vector<Rat>& s) const {
    if (terms_.empty()) fail("ZeroSeries", "argmax of the zero series");
    GaussNorm n = gauss_lognorm(s);
    if (n.upper.is_neg_inf()) fail("ZeroSeries", "argmax of a series that vanishes at tracked precision");
    std::vector<ExpVec> out;
    for (const auto& [e, c] : terms_) {
      GaussNorm g = Traits::lognorm(c);
      LogNorm t = g.upper + dot(e, s);
      if (t == n.upper) {
        if (!g.exact)
          fail("IndeterminateNorm", "truncated coefficient reaches the Gauss norm bound");
        out.push_back(e);
      }
    }
    return out;  // nonempty, in lexicographic order
  }

  // Componentwise difference (lex-max - lex-min) over the norm-attaining
  // exponent set.  Zero exactly when a single monomial dominates at s.
  ExpVec width_vector(const std::vector<Rat>& s) const {
    std::vector<ExpVec> am = argmax_exponents(s);  // lex-sorted
    const ExpVec& mn = am.front();
    const ExpVec& mx = am.back();
    ExpVec w(nvars_);
    for (int i = 0; i < nvars_; ++i) w[i] = mx[i] - mn[i];
    return w;
  }

  // ---- unit criterion and inversion --------------------------------------

  struct UnitCheck {
    bool unit = false;
    ExpVec index;   // dominant exponent when unit
    LogNorm gap;    // max over vertices of (best rival bound - dominant norm); < 0 iff unit
  };

  // f is a unit on the closed box iff one monomial strictly dominates all
  // others at every vertex (affine-gap argument extends this to the whole
  // box).  Only terms with exact coefficient norms can be certified
  // dominant; rivals may be truncated (their upper bounds are conservative).
  UnitCheck is_unit_on_box(const LogRadiusBox& box) const {
    check_box(box);
    if (terms_.empty()) fail("ZeroSeries", "unit test on the zero series");
    auto vertices = box.vertices();
    for (const auto& [e, c] : terms_) {
      GaussNorm g = Traits::lognorm(c);
      if (!g.exact || g.upper.is_neg_inf()) continue;  // cannot certify domination
      LogNorm gap = LogNorm::neg_inf();
      bool dominates = true;
      for (const auto& s : vertices) {
        LogNorm mine = g.upper + dot(e, s);
        LogNorm rival = LogNorm::neg_inf();
        for (const auto& [e2, c2] : terms_) {
          if (e2 == e) continue;
          rival = LogNorm::max(rival, Traits::lognorm(c2).upper + dot(e2, s));
        }
        if (!(rival < mine)) {
          dominates = false;
          break;
        }
        if (!rival.is_neg_inf()) gap = LogNorm::max(gap, LogNorm(rival.value() - mine.value()));
      }
      if (dominates) return UnitCheck{true, e, gap};
    }
    return UnitCheck{false, {}, LogNorm::of(0)};
  }

  struct InvertResult {
    Series inverse;
    ExpVec dominant;
    LogNorm residual_bound;  // sup over the box of f * inverse - 1
  };

  // Geometric inversion of a certified unit: with dominant term f_i t^i,
  //   f^{-1} = f_i^{-1} t^{-i} * sum_{j<=J} r^j,   r = 1 - f_i^{-1} t^{-i} f,
  // where |r| <= gap < 1 on the box.  Powers of r are clipped to the target
  // window; the returned residual bound covers both the analytic tail
  // (J+1 more factors of the gap) and all clipped mass, by ultrametricity.
  InvertResult invert_unit(const LogRadiusBox& box, const Window& out_window,
                           const Rat& target_residual_log) const {
    UnitCheck u = is_unit_on_box(box);
    if (!u.unit) fail("NotUnit", "no strictly dominant monomial on the box");
    if (target_residual_log >= 0) fail("BadTarget", "residual target must be negative");

    ExpVec minus_i(nvars_);
    for (int i = 0; i < nvars_; ++i) minus_i[i] = -u.index[i];
    if (!out_window.contains(minus_i))
      fail("WindowTooSmall", "output window must contain the dominant inverse exponent");

    const C& fi = *coeff_ptr(u.index);
    C fi_inv = Traits::pow(fi, -1);
    Series g0 = Series::monomial(fi_inv, minus_i);

    // r = 1 - g0 * f: the dominant term cancels (exactly, or down to a
    // tracked zero when f_i is truncated); every other term picks up a
    // factor below 1 on the box.
    Series one_s = Series::monomial(Traits::one_like(fi), ExpVec(nvars_, 0));
    Series r = one_s - g0 * (*this);

    InvertResult res{Series(p_, nvars_, out_window), u.index, LogNorm::neg_inf()};
    const Window acc_w = out_window.shifted(u.index);  // frame for sum of r^j

    if (r.empty() || r.is_zeroish_all()) {
      // pure monomial (up to tracked zeros): the inverse is g0 itself
      LogNorm q = r.sup_lognorm(box).upper;
      auto [inv, rep] = g0.restrict_to(out_window, ClipPolicy{true, box});
      res.inverse = std::move(inv);
      res.residual_bound = LogNorm::max(q, rep.max_discarded);
      return res;
    }

    LogNorm qn = r.sup_lognorm(box).upper;
    if (!(qn < LogNorm::of(0))) fail("Internal", "certified unit has non-contracting remainder");
    const Rat q = qn.value();  // < 0

    // smallest J with (J+1) * q <= target
    Rat ratio = target_residual_log / q;  // positive
    Int terms_needed;
    mpz_cdiv_q(terms_needed.get_mpz_t(), ratio.get_num_mpz_t(), ratio.get_den_mpz_t());
    if (terms_needed < 1) terms_needed = 1;
    if (terms_needed > 200000) fail("BadTarget", "residual target needs an absurd number of terms");
    const long J = terms_needed.get_si() - 1;  // include r^0 .. r^J

    ClipPolicy clip{true, box};
    LogNorm maxd = LogNorm::neg_inf();
    Series S = Series::zero(p_, nvars_, acc_w);
    {
      auto [p0, rep0] = one_s.restrict_to(acc_w, clip);
      S = S + p0;
      maxd = LogNorm::max(maxd, rep0.max_discarded);
    }
    Series P = one_s;
    long missing_power = J + 1;  // first power not accumulated
    for (long j = 1; j <= J; ++j) {
      auto [pj, rep] = (r * P).restrict_to(acc_w, clip);
      maxd = LogNorm::max(maxd, rep.max_discarded);
      P = std::move(pj);
      if (P.empty()) {
        // everything from r^j on lives outside the window; its mass is
        // bounded by max(clipped mass, j*q) by ultrametricity
        missing_power = j;
        break;
      }
      S = S + P;
    }

    auto [inv, rep_out] = (g0 * S).restrict_to(out_window, clip);
    res.inverse = std::move(inv);
    res.residual_bound = LogNorm::max(maxd, LogNorm(q * missing_power));
    if (rep_out.clipped()) {
      // mass clipped from the final result re-enters the residual through a
      // multiplication by f (support algebra keeps this branch dead: the
      // accumulator frame was chosen so g0 * S already fits out_window)
      res.residual_bound =
          LogNorm::max(res.residual_bound, sup_lognorm(box).upper + rep_out.max_discarded);
    }
    if (res.residual_bound > LogNorm(target_residual_log))
      fail("WindowTooSmall", "window cannot reach the requested residual bound");
    return res;
  }

  // ---- debug rendering ----------------------------------------------------

  std::string str() const {
    if (terms_.empty()) return "0";
    std::string out;
    for (const auto& [e, c] : terms_) {
      if (!out.empty()) out += " + ";
      out += "(" + c.str() + ")";
      for (int i = 0; i < nvars_; ++i)
        if (e[i] != 0) out += " t" + std::to_string(i) + "^" + std::to_string(e[i]);
    }
    return out;
  }

 private:
  long p_;
  int nvars_;
  Window window_;
  std::map<ExpVec, C> terms_;

  static void check_compat(const Series& a, const Series& b) {
    if (a.p_ != b.p_) fail("Dimension", "prime mismatch");
    if (a.nvars_ != b.nvars_) fail("Dimension", "variable-count mismatch");
  }
  void check_radius(const std::vector<Rat>& s) const {
    if (static_cast<int>(s.size()) != nvars_) fail("Dimension", "radius dimension mismatch");
  }
  void check_box(const LogRadiusBox& box) const {
    if (box.nvars() != nvars_) fail("Dimension", "box dimension mismatch");
  }
  static LogNorm term_sup(const ExpVec& e, const C& c, const LogRadiusBox& box) {
    LogNorm best = LogNorm::neg_inf();
    for (const auto& s : box.vertices())
      best = LogNorm::max(best, Traits::lognorm(c).upper + dot(e, s));
    return best;
  }
  Window mapped_window(const std::vector<ExpVec>& image) const {
    const int n = nvars_;
    std::vector<long> lo(n), hi(n);
    bool first = true;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      ExpVec corner(n), img(n, 0);
      for (int i = 0; i < n; ++i) corner[i] = (mask >> i) & 1 ? window_.hi[i] : window_.lo[i];
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) img[j] += corner[i] * image[i][j];
      for (int j = 0; j < n; ++j) {
        lo[j] = first ? img[j] : std::min(lo[j], img[j]);
        hi[j] = first ? img[j] : std::max(hi[j], img[j]);
      }
      first = false;
    }
    return Window(lo, hi);
  }
};

using PSeries = Series<PadicScalar>;
using CSeries = Series<CycScalar>;

// ---------------------------------------------------------------------------
// Conversions and root-of-unity substitution

// Embed a base-field series into the level-k cyclotomic extension.
inline CSeries embed_series(const PSeries& f, int level) {
  CSeries r(f.p(), f.nvars(), f.window());
  for (const auto& [e, c] : f.terms())
    r.set_coeff(e, CycScalar::from_scalar(f.p(), level, c));
  return r;
}

// Inverse of embed_series: every coefficient must descend (error otherwise).
inline PSeries descend_series(const CSeries& f, long p, int nvars, const Window& w) {
  PSeries r(p, nvars, w);
  for (const auto& [e, c] : f.terms()) {
    PadicScalar v = c.descend_to_base();
    if (!v.is_exact_zero()) r.set_coeff(e, v);
  }
  return r;
}
inline PSeries descend_series(const CSeries& f) {
  return descend_series(f, f.p(), f.nvars(), f.window());
}

// Substitute t_i -> zeta^{m_i} t_i on a cyclotomic-coefficient series: each
// term picks up zeta^{e.m}.  Exponents reduce modulo the root order, so
// negative Laurent exponents are handled exactly.
inline CSeries zeta_substitute(const CSeries& f, int level, const std::vector<Int>& m, int N) {
  if (static_cast<int>(m.size()) != f.nvars()) fail("Dimension", "substitution arity mismatch");
  CSeries r(f.p(), f.nvars(), f.window());
  for (const auto& [e, c] : f.terms()) {
    Int tw = 0;
    for (int i = 0; i < f.nvars(); ++i) tw += Int(e[i]) * m[i];
    r.set_coeff(e, c * CycScalar::root_power(f.p(), level, tw, N));
  }
  return r;
}

}  // namespace pfuchs
