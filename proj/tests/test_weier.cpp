#include "pfuchs/weier.hpp"

#include "doctest.h"

#include <map>
#include <optional>
#include <random>
#include <utility>
#include <vector>

using pfuchs::ExpVec;
using pfuchs::LogNorm;
using pfuchs::LogRadiusBox;
using pfuchs::PadicScalar;
using pfuchs::PSeries;
using pfuchs::Rat;
using pfuchs::rat_of;
using pfuchs::SplitOptions;
using pfuchs::Window;

namespace {

constexpr int N = 48;  // working precision for fixtures

// ---------------------------------------------------------------------------
// Independent oracles on raw (exponent, integer) fixtures.

namespace oracle {

long valp(long p, mpz_class v) {
  long k = 0;
  while (mpz_divisible_ui_p(v.get_mpz_t(), static_cast<unsigned long>(p))) {
    v /= p;
    ++k;
  }
  return k;
}

using Poly1 = std::map<long, mpz_class>;

// Degree-by-degree log-norm scan: sup, least/greatest attaining degree, and
// the least positive gap over the non-attaining degrees.
struct DegScan {
  Rat sup;
  long lo = 0, hi = 0;
  std::optional<Rat> margin;
};

DegScan scan(long p, const Poly1& f, const Rat& s) {
  std::map<long, Rat> table;
  for (const auto& [e, c] : f) {
    if (c == 0) continue;
    table[e] = Rat(-valp(p, c)) + Rat(e) * s;
  }
  REQUIRE(!table.empty());
  DegScan out;
  bool first = true;
  for (const auto& [e, t] : table) {
    if (first || t > out.sup) out.sup = t;
    first = false;
  }
  bool have = false;
  for (const auto& [e, t] : table) {
    if (t == out.sup) {
      if (!have) out.lo = e;
      out.hi = e;
      have = true;
    } else {
      Rat gap = out.sup - t;
      if (!out.margin || gap < *out.margin) out.margin = gap;
    }
  }
  return out;
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// fixture builders

PadicScalar C(long p, const mpz_class& v) { return PadicScalar::from_int(p, v, N); }

PSeries mk1(long p, const std::vector<std::pair<long, long>>& tc, long wlo, long whi) {
  PSeries f(p, 1, Window::cube(1, wlo, whi));
  for (const auto& [e, c] : tc) f.add_term({e}, C(p, c));
  return f;
}

PSeries mk2(long p, const std::vector<std::tuple<long, long, long>>& tc, const Window& w) {
  PSeries f(p, 2, w);
  for (const auto& [e0, e1, c] : tc) f.add_term({e0, e1}, C(p, c));
  return f;
}

oracle::Poly1 raw1(const std::vector<std::pair<long, long>>& tc) {
  oracle::Poly1 m;
  for (const auto& [e, c] : tc) m[e] += c;
  for (auto it = m.begin(); it != m.end();)
    it = it->second == 0 ? m.erase(it) : std::next(it);
  return m;
}

bool series_equal(const PSeries& a, const PSeries& b) {
  if (a.terms().size() != b.terms().size()) return false;
  for (const auto& [e, c] : a.terms()) {
    const PadicScalar* d = b.coeff_ptr(e);
    if (!d || !(c == *d)) return false;
  }
  return true;
}

template <class F>
std::string err_code(F&& fn) {
  try {
    fn();
  } catch (const pfuchs::error& e) {
    return e.code;
  }
  return "";
}

// |x| <= bound, also accepting an exactly-vanishing difference
bool within(const LogNorm& x, const Rat& bound) { return !(x > LogNorm(bound)); }

const std::vector<Rat> s0{Rat(0)};

}  // namespace

TEST_CASE("extremal-degree certificates match direct norm tables") {
  const long p = 3;

  // t^-1 + 1 + t: every degree attains, so no margin and no constraints
  // strictly inside the attaining range
  {
    auto rep = pfuchs::is_bidistinguished(mk1(p, {{-1, 1}, {0, 1}, {1, 1}}, -1, 1), s0, 0);
    CHECK(rep.pass);
    CHECK(rep.lower_deg == -1);
    CHECK(rep.upper_deg == 1);
    CHECK(rep.sup.upper == LogNorm::of(0));
    CHECK(rep.sup.exact);
    CHECK(!rep.margin.has_value());
    CHECK(rep.lower_unit.unit);
    CHECK(rep.upper_unit.unit);
    CHECK(!rep.witness.has_value());
  }

  // single monomial: both extremes at its degree
  {
    auto rep = pfuchs::is_bidistinguished(mk1(p, {{3, 7}}, 0, 4), {Rat(2)}, 0);
    CHECK(rep.pass);
    CHECK(rep.lower_deg == 3);
    CHECK(rep.upper_deg == 3);
    CHECK(rep.sup.upper == LogNorm::of(6));
    CHECK(!rep.margin.has_value());
  }

  // 3 + t across radii: the attaining set moves with s
  {
    PSeries f = mk1(p, {{0, 3}, {1, 1}}, 0, 1);
    auto r0 = pfuchs::is_bidistinguished(f, s0, 0);
    CHECK((r0.pass && r0.lower_deg == 1 && r0.upper_deg == 1));
    REQUIRE(r0.margin.has_value());
    CHECK(*r0.margin == Rat(1));
    auto rh = pfuchs::is_bidistinguished(f, {rat_of(-1, 2)}, 0);
    CHECK((rh.pass && rh.lower_deg == 1 && rh.upper_deg == 1));
    REQUIRE(rh.margin.has_value());
    CHECK(*rh.margin == rat_of(1, 2));
    auto r1 = pfuchs::is_bidistinguished(f, {Rat(-1)}, 0);
    CHECK((r1.pass && r1.lower_deg == 0 && r1.upper_deg == 1));
    CHECK(!r1.margin.has_value());
    auto r2 = pfuchs::is_bidistinguished(f, {Rat(-2)}, 0);
    CHECK((r2.pass && r2.lower_deg == 0 && r2.upper_deg == 0));
    REQUIRE(r2.margin.has_value());
    CHECK(*r2.margin == Rat(1));
  }

  // randomized cross-check against the degree scan
  {
    std::mt19937_64 rng(0x5eedbd);
    std::uniform_int_distribution<long> coef(-200, 200), expo(-4, 4), nterms(1, 6), si(0, 7);
    const std::vector<Rat> radii{Rat(0), Rat(1), Rat(-1), rat_of(1, 2), rat_of(-1, 2),
                                 Rat(2),  Rat(-2), rat_of(1, 3)};
    for (long pr : {2L, 3L, 5L}) {
      for (int trial = 0; trial < 70; ++trial) {
        std::vector<std::pair<long, long>> tc;
        for (long i = 0, n = nterms(rng); i < n; ++i) tc.emplace_back(expo(rng), coef(rng));
        oracle::Poly1 raw = raw1(tc);
        if (raw.empty()) continue;
        Rat s = radii[si(rng)];
        auto rep = pfuchs::is_bidistinguished(mk1(pr, tc, -4, 4), {s}, 0);
        auto want = oracle::scan(pr, raw, s);
        CHECK(rep.pass);  // univariate slabs over exact scalars are monomials
        CHECK(rep.lower_deg == want.lo);
        CHECK(rep.upper_deg == want.hi);
        CHECK(rep.sup.upper == LogNorm(want.sup));
        CHECK(rep.margin.has_value() == want.margin.has_value());
        if (want.margin) CHECK(*rep.margin == *want.margin);
        // the extremal slabs are the single matching monomials
        CHECK(rep.lower_slab.terms().size() == 1);
        CHECK((*rep.lower_slab.coeff_ptr({want.lo}) == C(pr, raw.at(want.lo))));
        CHECK(rep.upper_slab.terms().size() == 1);
        CHECK((*rep.upper_slab.coeff_ptr({want.hi}) == C(pr, raw.at(want.hi))));
      }
    }
  }

  // two variables: 1 + t1 + t2 fails because the degree-0 slab 1 + t1 has no
  // dominant monomial at the unit radius
  {
    PSeries f = mk2(p, {{0, 0, 1}, {1, 0, 1}, {0, 1, 1}}, Window::cube(2, 0, 1));
    auto rep = pfuchs::is_bidistinguished(f, {Rat(0), Rat(0)}, 1);
    CHECK(!rep.pass);
    CHECK(rep.lower_deg == 0);
    CHECK(rep.upper_deg == 1);
    CHECK(rep.witness.has_value());
    CHECK(*rep.witness == 0);
    CHECK(!rep.reason.empty());
  }

  // a coefficient that vanishes at tracked precision contributes its bound
  // to the margin but cannot join the attaining set
  {
    PSeries f(p, 1, Window::cube(1, 0, 1));
    f.add_term({0}, C(p, 1));
    f.add_term({1}, PadicScalar::zero_at_prec(p, 5));
    auto rep = pfuchs::is_bidistinguished(f, s0, 0);
    CHECK(rep.pass);
    CHECK(rep.lower_deg == 0);
    CHECK(rep.upper_deg == 0);
    REQUIRE(rep.margin.has_value());
    CHECK(*rep.margin == Rat(5));
  }

  // a tracked zero tying the sup makes membership undecidable
  {
    PSeries f(p, 1, Window::cube(1, 0, 1));
    f.add_term({0}, PadicScalar::zero_at_prec(p, 0));
    f.add_term({1}, C(p, 1));
    CHECK(err_code([&] { pfuchs::is_bidistinguished(f, s0, 0); }) == "IndeterminateNorm");
  }

  CHECK(err_code([&] {
          pfuchs::is_bidistinguished(PSeries(p, 1, Window::cube(1, 0, 0)), s0, 0);
        }) == "ZeroSeries");
  CHECK(err_code([&] {
          pfuchs::is_bidistinguished(mk1(p, {{0, 1}}, 0, 0), s0, 2);
        }) == "Dimension");
}

TEST_CASE("monomial shears land on the predicted extremal degrees") {
  const long p = 3;
  const std::vector<Rat> s00{Rat(0), Rat(0)};

  // t1 + t2 at the unit radius: already certified, but the substitution is
  // applied regardless and separates the attaining exponents
  {
    PSeries f = mk2(p, {{1, 0, 1}, {0, 1, 1}}, Window::cube(2, 0, 1));
    auto sh = pfuchs::shear_to_bidistinguished(f, s00);
    CHECK(sh.input_bidistinguished);
    CHECK(sh.L == 1);
    CHECK(sh.map.j == 4);
    CHECK(sh.map.s_exp == 1);
    CHECK((sh.map.w_pow == 0));
    CHECK(series_equal(sh.sheared, mk2(p, {{1, 4, 1}, {0, 1, 1}}, sh.sheared.window())));
    CHECK(sh.report.pass);
    CHECK(sh.report.lower_deg == 1);
    CHECK(sh.report.upper_deg == 4);
    // exact inverse substitution recovers the input
    CHECK(series_equal(pfuchs::shear_apply(sh.sheared, sh.map, true), f));
  }

  // 1 + t1 + t2: fails before, passes after
  {
    PSeries f = mk2(p, {{0, 0, 1}, {1, 0, 1}, {0, 1, 1}}, Window::cube(2, 0, 1));
    CHECK(!pfuchs::is_bidistinguished(f, s00, 1).pass);
    auto sh = pfuchs::shear_to_bidistinguished(f, s00);
    CHECK(!sh.input_bidistinguished);
    CHECK(sh.map.j == 4);
    CHECK(series_equal(sh.sheared, mk2(p, {{0, 0, 1}, {1, 4, 1}, {0, 1, 1}}, sh.sheared.window())));
    CHECK(sh.report.pass);
    CHECK(sh.report.lower_deg == 0);
    CHECK(sh.report.upper_deg == 4);
  }

  // t1 + 3 t2 with |t2| = 3: the substitution scalar w = 3 keeps the shear
  // an isometry, and the sheared coefficients pick up exact powers of p
  {
    PSeries f = mk2(p, {{1, 0, 1}, {0, 1, 3}}, Window::cube(2, 0, 1));
    const std::vector<Rat> s{Rat(0), Rat(1)};
    auto sh = pfuchs::shear_to_bidistinguished(f, s);
    CHECK(sh.map.j == 4);
    CHECK(sh.map.s_exp == 1);
    CHECK((sh.map.w_pow == 1));
    CHECK(series_equal(sh.sheared, mk2(p, {{1, 4, 81}, {0, 1, 3}}, sh.sheared.window())));
    CHECK(sh.report.lower_deg == 1);
    CHECK(sh.report.upper_deg == 4);
    auto gf = f.gauss_lognorm(s);
    auto gs = sh.sheared.gauss_lognorm(s);
    CHECK(gf.upper == gs.upper);
  }

  // fractional radius: s_exp clears the denominator
  {
    PSeries f = mk2(p, {{1, 0, 1}, {0, 2, 3}}, Window::cube(2, 0, 2));
    const std::vector<Rat> s{Rat(0), rat_of(1, 2)};
    auto sh = pfuchs::shear_to_bidistinguished(f, s);
    CHECK(sh.map.s_exp == 2);
    CHECK((sh.map.w_pow == 1));
    // the attaining exponent (0,2) pushes the coordinate bound to 2, so j = 7
    CHECK(sh.map.j == 7);
    CHECK(sh.report.lower_deg == 2);
    CHECK(sh.report.upper_deg == 14);
    CHECK(series_equal(pfuchs::shear_apply(sh.sheared, sh.map, true), f));
  }

  // randomized: the shear is an isometry and exactly invertible
  {
    std::mt19937_64 rng(0x5eed5e);
    std::uniform_int_distribution<long> coef(-40, 40), expo(-2, 2), nterms(1, 5), si(0, 3);
    const std::vector<Rat> radii{Rat(0), Rat(1), Rat(-1), rat_of(1, 2)};
    for (int trial = 0; trial < 40; ++trial) {
      PSeries f(p, 2, Window::cube(2, -2, 2));
      for (long i = 0, n = nterms(rng); i < n; ++i)
        f.add_term({expo(rng), expo(rng)}, C(p, coef(rng)));
      if (f.empty()) continue;
      std::vector<Rat> s{radii[si(rng)], radii[si(rng)]};
      auto sh = pfuchs::shear_to_bidistinguished(f, s);
      CHECK(sh.report.pass);
      auto gf = f.gauss_lognorm(s);
      auto gs = sh.sheared.gauss_lognorm(s);
      CHECK(gf.upper == gs.upper);
      CHECK(gf.exact == gs.exact);
      CHECK(series_equal(pfuchs::shear_apply(sh.sheared, sh.map, true), f));
    }
  }

  // batch form: one j serves the whole family
  {
    std::vector<PSeries> fs{mk2(p, {{1, 0, 1}, {0, 1, 1}}, Window::cube(2, 0, 1)),
                            mk2(p, {{0, 0, 1}, {2, 0, 1}, {0, 1, 1}}, Window::cube(2, 0, 2))};
    auto out = pfuchs::shear_uniform(fs, s00);
    REQUIRE(out.size() == 2);
    CHECK(out[0].map.j == 7);  // L = 2 from the second series
    CHECK(out[1].map.j == 7);
    CHECK(out[0].report.pass);
    CHECK(out[1].report.pass);
    CHECK(out[0].report.lower_deg == 1);
    CHECK(out[0].report.upper_deg == 7);
    CHECK(out[1].report.lower_deg == 0);
    CHECK(out[1].report.upper_deg == 14);
  }

  CHECK(err_code([&] {
          pfuchs::shear_to_bidistinguished(mk1(p, {{0, 1}}, 0, 0), s0);
        }) == "Dimension");
}

TEST_CASE("tail splitting certifies planted two-sided factorizations") {
  const long p = 3;

  // a unit constant splits trivially
  {
    auto out = pfuchs::split_tails(mk1(p, {{0, 7}}, 0, 0), s0, 0);
    CHECK(out.mu == 0);
    CHECK(out.rounds == 0);
    CHECK(out.residual.is_neg_inf());
    CHECK(series_equal(out.g, mk1(p, {{0, 1}}, 0, 0)));
    CHECK(series_equal(out.h, mk1(p, {{0, 7}}, 0, 0)));
    CHECK(!out.ratio.has_value());
  }

  // no positive tail: g = 1 and h is the input
  {
    PSeries f = mk1(p, {{-1, 3}, {0, 1}}, -1, 0);
    auto out = pfuchs::split_tails(f, s0, 0);
    CHECK(out.mu == 0);
    CHECK(out.rounds == 0);
    CHECK(out.residual.is_neg_inf());
    CHECK(series_equal(out.g, mk1(p, {{0, 1}}, 0, 0)));
    CHECK(series_equal(out.h, f));
  }

  // (1 + 3t)(1 + 3t^-1) = 3t^-1 + 10 + 3t: the refinement converges to the
  // planted pair, one contraction digit per round
  {
    PSeries f = mk1(p, {{0, 1}, {1, 3}}, 0, 1) * mk1(p, {{0, 1}, {-1, 3}}, -1, 0);
    auto out = pfuchs::split_tails(f, s0, 0);
    CHECK(out.mu == 0);
    CHECK(within(out.residual, Rat(-31)));
    CHECK(out.rounds >= 1);
    CHECK(out.rounds <= 64);
    REQUIRE(out.ratio.has_value());
    CHECK(*out.ratio == Rat(-1));

    // coefficientwise agreement with the planted factors
    REQUIRE(out.g.coeff_ptr({1}) != nullptr);
    CHECK(within((*out.g.coeff_ptr({1}) - C(p, 3)).lognorm_upper(), Rat(-24)));
    REQUIRE(out.g.coeff_ptr({0}) != nullptr);
    CHECK((*out.g.coeff_ptr({0}) == C(p, 1)));
    REQUIRE(out.h.coeff_ptr({-1}) != nullptr);
    CHECK(within((*out.h.coeff_ptr({-1}) - C(p, 3)).lognorm_upper(), Rat(-24)));
    REQUIRE(out.h.coeff_ptr({0}) != nullptr);
    CHECK(within((*out.h.coeff_ptr({0}) - C(p, 1)).lognorm_upper(), Rat(-24)));

    // certified multiply-back
    PSeries err = f - out.g * out.h;
    CHECK(!(err.gauss_lognorm(s0).upper > out.residual));

    // the defect contracts at least by the certified ratio every round
    REQUIRE(out.round_defects.size() == static_cast<size_t>(out.rounds) + 1);
    CHECK(out.round_defects.front() == LogNorm::of(-1));
    for (size_t i = 0; i + 1 < out.round_defects.size(); ++i)
      CHECK(!(out.round_defects[i + 1] > out.round_defects[i] + *out.ratio));
  }

  // nonzero upper extremal degree and a fractional radius
  {
    PSeries f = mk1(p, {{0, 1}, {1, 3}}, 0, 1) * mk1(p, {{0, 1}, {-1, 3}}, -1, 0);
    f = f.shifted({2});
    const std::vector<Rat> s{rat_of(-1, 4)};
    auto out = pfuchs::split_tails(f, s, 0);
    CHECK(out.mu == 2);
    CHECK(out.rounds <= 64);
    PSeries err = f - (out.g * out.h).shifted({2});
    CHECK(!(err.gauss_lognorm(s).upper > out.residual));
    REQUIRE(out.ratio.has_value());
    // ratio is measured on the recentered series 3 t^-1 + 10 + 3 t: the positive
    // tail sits at -1 - 1/4 while the degree-zero slab sits at 0
    CHECK(*out.ratio == rat_of(-5, 4));
  }

  // two variables: the degree-zero slab inverse is a genuine series and the
  // split fills in the whole fiber expansion
  {
    PSeries f = mk2(p, {{1, 1, 1}, {0, 2, 1}, {0, 3, 3}}, Window::cube(2, 0, 3));
    const std::vector<Rat> s{Rat(0), Rat(0)};
    auto out = pfuchs::split_tails(f, s, 1);
    CHECK(out.mu == 2);
    CHECK(within(out.residual, Rat(-31)));
    PSeries err = f - (out.g * out.h).shifted({0, 2});
    CHECK(!(err.gauss_lognorm(s).upper > out.residual));
    // the positive tail solves g = 1 + a(t1) t2 with a = 3 + a^2 t1, so
    // a = 3 + 9 t1 + 54 t1^2 + ...
    REQUIRE(out.g.coeff_ptr({0, 1}) != nullptr);
    CHECK((*out.g.coeff_ptr({0, 1}) == C(p, 3)));
    REQUIRE(out.g.coeff_ptr({1, 1}) != nullptr);
    CHECK((*out.g.coeff_ptr({1, 1}) == C(p, 9)));
    REQUIRE(out.g.coeff_ptr({2, 1}) != nullptr);
    CHECK((*out.g.coeff_ptr({2, 1}) == C(p, 54)));
    // and h = t1 t2^-1 + c(t1) with c = 1 - a t1
    REQUIRE(out.h.coeff_ptr({1, -1}) != nullptr);
    CHECK((*out.h.coeff_ptr({1, -1}) == C(p, 1)));
    REQUIRE(out.h.coeff_ptr({1, 0}) != nullptr);
    CHECK((*out.h.coeff_ptr({1, 0}) == C(p, -3)));
    REQUIRE(out.h.coeff_ptr({2, 0}) != nullptr);
    CHECK((*out.h.coeff_ptr({2, 0}) == C(p, -9)));
  }

  // error paths
  {
    PSeries bad = mk2(p, {{0, 0, 1}, {1, 0, 1}, {0, 1, 1}}, Window::cube(2, 0, 1));
    CHECK(err_code([&] { pfuchs::split_tails(bad, {Rat(0), Rat(0)}, 1); }) ==
          "NotBidistinguished");

    PSeries f = mk1(p, {{0, 1}, {1, 3}}, 0, 1) * mk1(p, {{0, 1}, {-1, 3}}, -1, 0);
    SplitOptions tight;
    tight.max_rounds = 3;
    CHECK(err_code([&] { pfuchs::split_tails(f, s0, 0, tight); }) == "IterationBudget");

    // truncated data: the defect hits the tracked-precision floor
    PSeries g(p, 1, Window::cube(1, 0, 1));
    g.add_term({0}, C(p, 1));
    g.add_term({1}, PadicScalar::from_int(p, 3, 4).as_inexact());
    CHECK(err_code([&] { pfuchs::split_tails(g, s0, 0); }) == "PrecisionExhausted");
    SplitOptions loose;
    loose.target_rel = Rat(-4);
    auto ok = pfuchs::split_tails(g, s0, 0, loose);
    CHECK(ok.residual == LogNorm::of(-5));
    CHECK(within((*ok.g.coeff_ptr({1}) - PadicScalar::from_int(p, 3, 4)).lognorm_upper(),
                 Rat(-4)));

    // a too-small coefficient frame is detected, not silently absorbed
    PSeries h = mk2(p, {{1, 1, 1}, {0, 2, 1}, {0, 3, 3}}, Window::cube(2, 0, 3));
    SplitOptions cramped;
    cramped.coeff_pad = 3;
    CHECK(err_code([&] { pfuchs::split_tails(h, {Rat(0), Rat(0)}, 1, cramped); }) ==
          "WindowTooSmall");
  }
}

TEST_CASE("monic-times-unit preparation recovers frozen factors") {
  const long p = 3;

  // t^-1 + 1 + t = (t^2 + t + 1) * t^-1, exactly
  {
    auto out = pfuchs::factor_monic_times_unit(mk1(p, {{-1, 1}, {0, 1}, {1, 1}}, -1, 1), s0, 0);
    CHECK(out.degree == 2);
    CHECK(out.shift == -1);
    CHECK(out.rounds == 0);
    CHECK(out.residual.is_neg_inf());
    CHECK(series_equal(out.P, mk1(p, {{0, 1}, {1, 1}, {2, 1}}, 0, 2)));
    CHECK(series_equal(out.u, mk1(p, {{-1, 1}}, -1, -1)));
    CHECK(out.unit_check.unit);
  }

  // t + 3 at |t| = 3^(-1/2): the monomial dominates, P is the input itself
  {
    auto out = pfuchs::factor_monic_times_unit(mk1(p, {{0, 3}, {1, 1}}, 0, 1),
                                               {rat_of(-1, 2)}, 0);
    CHECK(out.degree == 1);
    CHECK(out.shift == 0);
    CHECK(out.residual.is_neg_inf());
    CHECK(series_equal(out.P, mk1(p, {{0, 3}, {1, 1}}, 0, 1)));
    CHECK(series_equal(out.u, mk1(p, {{0, 1}}, 0, 0)));
    CHECK(out.unit_check.unit);
  }

  // 1 + 3t at the unit radius: trivial monic part, the whole series is a unit
  {
    PSeries f = mk1(p, {{0, 1}, {1, 3}}, 0, 1);
    auto out = pfuchs::factor_monic_times_unit(f, s0, 0);
    CHECK(out.degree == 0);
    CHECK(out.shift == 0);
    CHECK(out.rounds == 1);
    CHECK(out.residual.is_neg_inf());
    CHECK(series_equal(out.P, mk1(p, {{0, 1}}, 0, 0)));
    CHECK(series_equal(out.u, f));
    CHECK(out.unit_check.unit);
  }

  // two variables: t1 t2 + t2^2 + 3 t2^3 = (t2 + c(t1)) * u where -c is the
  // small root of t1 + x + 3x^2; the root is computed here by an independent
  // fixed-point iteration x <- -t1 - 3x^2
  {
    PSeries f = mk2(p, {{1, 1, 1}, {0, 2, 1}, {0, 3, 3}}, Window::cube(2, 0, 3));
    const std::vector<Rat> s{Rat(0), Rat(0)};
    auto out = pfuchs::factor_monic_times_unit(f, s, 1);
    CHECK(out.degree == 1);
    CHECK(out.shift == 1);
    CHECK(within(out.residual, Rat(-31)));
    CHECK(out.unit_check.unit);
    // monic in t2 with polynomial support [0, 1]
    CHECK(*out.P.min_exp(1) == 0);
    CHECK(*out.P.max_exp(1) == 1);
    PSeries top = pfuchs::var_slab(out.P, 1, 1);
    CHECK(top.terms().size() == 1);
    CHECK((*top.coeff_ptr({0, 1}) == C(p, 1)));

    // fixed-point root, trimmed to t1-degree <= 24 each step
    const Window wr = Window::cube(2, 0, 24);
    const LogRadiusBox box = LogRadiusBox::point(s);
    PSeries x(p, 2, wr);
    x.add_term({1, 0}, C(p, -1));
    for (int it = 0; it < 26; ++it) {
      PSeries next(p, 2, wr);
      next.add_term({1, 0}, C(p, -1));
      next = next - (x * x).restrict_to(wr, pfuchs::ClipPolicy{true, box}).first.map_coeffs(
                        [&](const PadicScalar& c) { return c * C(p, 3); });
      x = std::move(next);
    }
    // P's constant slab c satisfies c = -x up to the certified residual
    PSeries c = pfuchs::var_slab(out.P, 1, 0);
    PSeries diff = c + x;  // compare through settled t1-degrees
    PSeries low =
        diff.restrict_to(Window({0, 0}, {20, 0}), pfuchs::ClipPolicy{true, box}).first;
    CHECK(within(low.gauss_lognorm(s).upper, Rat(-20)));
  }
}

TEST_CASE("random monic-times-unit products are recovered coefficientwise") {
  std::mt19937_64 rng(0x5eedfa);
  std::uniform_int_distribution<long> degd(0, 4), shm(-2, 2), small(-8, 8), pick(0, 2);
  const long primes[3] = {2, 3, 5};

  int done = 0;
  while (done < 100) {
    const long p = primes[pick(rng)];
    const long d = degd(rng);
    const long m = shm(rng);

    // planted P: monic of degree d, unit constant term so the factorization
    // boundary sits exactly at t^m
    std::vector<std::pair<long, long>> pc;
    pc.emplace_back(d, 1);
    for (long j = 1; j < d; ++j) pc.emplace_back(j, small(rng));
    long a0 = small(rng);
    while (a0 == 0 || a0 % p == 0) a0 = small(rng);
    if (d > 0) pc.emplace_back(0L, a0);
    PSeries P = mk1(p, pc, 0, std::max(d, 1L));

    // planted unit: c * t^m * (1 + p-small tail)
    long c = small(rng);
    while (c == 0 || c % p == 0) c = small(rng);
    std::vector<std::pair<long, long>> uc{{m, c}};
    for (long k = 1; k <= 3; ++k) uc.emplace_back(m + k, p * small(rng) * c);
    PSeries U = mk1(p, uc, m, m + 3);

    PSeries f = P * U;
    auto out = pfuchs::factor_monic_times_unit(f, s0, 0);
    ++done;

    CHECK(out.degree == d);
    CHECK(out.shift == m);
    CHECK(within(out.residual, Rat(-31)));
    CHECK(out.unit_check.unit);
    std::map<long, long> pmap;
    for (const auto& [e, cc] : pc) pmap[e] = cc;
    for (long j = 0; j <= d; ++j) {
      auto it = pmap.find(j);
      PadicScalar want = C(p, it == pmap.end() ? 0 : it->second);
      const PadicScalar* got = out.P.coeff_ptr({j});
      PadicScalar diff = (got ? *got : PadicScalar::zero(p)) - want;
      CHECK(within(diff.lognorm_upper(), Rat(-28)));
    }
    for (const auto& [e, cc] : uc) {
      const PadicScalar* got = out.u.coeff_ptr({e});
      PadicScalar diff = (got ? *got : PadicScalar::zero(p)) - C(p, cc);
      CHECK(within(diff.lognorm_upper(), Rat(-28)));
    }
  }
}

TEST_CASE("unit perturbations preserve the extremal degrees") {
  const long p = 3;
  std::mt19937_64 rng(0x5eedc4);
  std::uniform_int_distribution<long> degd(0, 3), shm(-2, 2), small(-8, 8);

  for (int trial = 0; trial < 60; ++trial) {
    const long d = degd(rng);
    const long m = shm(rng);
    std::vector<std::pair<long, long>> pc{{d, 1}};
    long a0 = small(rng);
    while (a0 == 0 || a0 % p == 0) a0 = small(rng);
    if (d > 0) pc.emplace_back(0L, a0);
    for (long j = 1; j < d; ++j) pc.emplace_back(j, small(rng));
    long c = small(rng);
    while (c == 0 || c % p == 0) c = small(rng);
    PSeries f = mk1(p, pc, 0, std::max(d, 1L)) *
                mk1(p, {{m, c}, {m + 1, 3 * small(rng)}}, m, m + 1);
    auto before = pfuchs::is_bidistinguished(f, s0, 0);
    REQUIRE(before.pass);

    // 1 + x with |x| < 1 on both sides of the window
    std::vector<std::pair<long, long>> xc{{0, 1}};
    for (long e = -2; e <= 2; ++e)
      if (e != 0) xc.emplace_back(e, 3 * small(rng));
    PSeries g = mk1(p, xc, -2, 2) * f;
    auto after = pfuchs::is_bidistinguished(g, s0, 0);
    CHECK(after.pass);
    CHECK(after.lower_deg == before.lower_deg);
    CHECK(after.upper_deg == before.upper_deg);
    CHECK(after.sup.upper == before.sup.upper);
  }
}

TEST_CASE("defect bookkeeping modes agree") {
  const long p = 3;
  PSeries f = mk1(p, {{0, 1}, {1, 3}}, 0, 1) * mk1(p, {{0, 1}, {-1, 3}}, -1, 0);

  SplitOptions fresh;
  SplitOptions incr;
  incr.incremental_error = true;

  auto a = pfuchs::split_tails(f, s0, 0, fresh);
  auto b = pfuchs::split_tails(f, s0, 0, incr);
  CHECK(a.rounds == b.rounds);
  CHECK(series_equal(a.g, b.g));
  CHECK(series_equal(a.h, b.h));

  // same agreement through the bivariate engine
  PSeries h2 = mk2(p, {{1, 1, 1}, {0, 2, 1}, {0, 3, 3}}, Window::cube(2, 0, 3));
  const std::vector<Rat> s2{Rat(0), Rat(0)};
  auto a2 = pfuchs::split_tails(h2, s2, 1, fresh);
  auto b2 = pfuchs::split_tails(h2, s2, 1, incr);
  CHECK(a2.rounds == b2.rounds);
  CHECK(series_equal(a2.g, b2.g));
  CHECK(series_equal(a2.h, b2.h));

  // truncated data: the two defect paths agree within the certified residual
  PSeries g(p, 1, Window::cube(1, 0, 1));
  g.add_term({0}, C(p, 1));
  g.add_term({1}, PadicScalar::from_int(p, 3, 4).as_inexact());
  SplitOptions la = fresh, lb = incr;
  la.target_rel = Rat(-4);
  lb.target_rel = Rat(-4);
  auto ta = pfuchs::split_tails(g, s0, 0, la);
  auto tb = pfuchs::split_tails(g, s0, 0, lb);
  PSeries dg = ta.g - tb.g;
  PSeries dh = ta.h - tb.h;
  CHECK((dg.empty() || within(dg.gauss_lognorm(s0).upper, Rat(-4))));
  CHECK((dh.empty() || within(dh.gauss_lognorm(s0).upper, Rat(-4))));
}
