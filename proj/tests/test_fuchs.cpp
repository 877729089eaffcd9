#include "pfuchs/fuchs.hpp"

#include "doctest.h"

#include <utility>
#include <vector>

using pfuchs::certified_provider;
using pfuchs::compute_S;
using pfuchs::constant_basis;
using pfuchs::CSeries;
using pfuchs::CycScalar;
using pfuchs::decompose;
using pfuchs::DecomposeOptions;
using pfuchs::descend_exponent;
using pfuchs::DescentOptions;
using pfuchs::DiffModule;
using pfuchs::direct_sum;
using pfuchs::ExpCoord;
using pfuchs::ExponentEntry;
using pfuchs::ExponentMultiset;
using pfuchs::ExpVec;
using pfuchs::gamma_action_exact;
using pfuchs::gamma_action_series;
using pfuchs::GammaMatrix;
using pfuchs::Int;
using pfuchs::LogNorm;
using pfuchs::LogRadiusBox;
using pfuchs::Mat;
using pfuchs::PadicScalar;
using pfuchs::projector_sequence;
using pfuchs::PSeries;
using pfuchs::Rat;
using pfuchs::rat_of;
using pfuchs::shrink_box;
using pfuchs::StandardForm;
using pfuchs::sublevel_action;
using pfuchs::telescoping_check;
using pfuchs::tensor;
using pfuchs::verify_exponent_certificate;
using pfuchs::weak_equiv;
using pfuchs::Window;

namespace {

constexpr int N = 48;

PadicScalar C(long p, long v) { return PadicScalar::from_int(p, v, N); }
PadicScalar Q(long p, long num, long den) {
  return PadicScalar::from_rational(p, rat_of(num, den), N);
}

PSeries pzero(long p, int nv = 1) { return PSeries::zero(p, nv, Window::cube(nv, 0, 0)); }
PSeries pconst(long /*p*/, const PadicScalar& c, int nv = 1) {
  return PSeries::monomial(c, ExpVec(static_cast<size_t>(nv), 0));
}
PSeries pmono(const PadicScalar& c, long e) { return PSeries::monomial(c, {e}); }

CSeries cmono(const CycScalar& c, long e) { return CSeries::monomial(c, {e}); }

ExponentEntry rat_entry(long p, std::vector<Rat> rs) {
  ExponentEntry e;
  for (auto& r : rs) e.coords.push_back(ExpCoord::rational(p, std::move(r)));
  return e;
}

ExponentMultiset ms(std::vector<ExponentEntry> es) {
  ExponentMultiset m;
  m.entries = std::move(es);
  return m;
}

Mat<PadicScalar> zero2(long p) {
  const PadicScalar z = PadicScalar::zero(p);
  return Mat<PadicScalar>::from_rows({{z, z}, {z, z}});
}

StandardForm rank1_form(long p, const Rat& a) {
  StandardForm sf;
  sf.p = p;
  sf.nvars = 1;
  sf.rank = 1;
  sf.lambda = {rat_entry(p, {a})};
  sf.nilpotent = {Mat<PadicScalar>::from_rows({{PadicScalar::zero(p)}})};
  return sf;
}

StandardForm diag_form(long p, const Rat& a, const Rat& b) {
  StandardForm sf;
  sf.p = p;
  sf.nvars = 1;
  sf.rank = 2;
  sf.lambda = {rat_entry(p, {a}), rat_entry(p, {b})};
  sf.nilpotent = {zero2(p)};
  return sf;
}

StandardForm unipotent_form(long p) {
  StandardForm sf = diag_form(p, Rat(0), Rat(0));
  const PadicScalar z = PadicScalar::zero(p);
  sf.nilpotent = {Mat<PadicScalar>::from_rows({{z, C(p, 1)}, {z, z}})};
  return sf;
}

bool ps_matches(const PSeries& got, const PSeries& want) {
  return (got + (-want)).is_zeroish_all();
}

bool sc_near(const PadicScalar& got, const PadicScalar& want) {
  const LogNorm d = (got - want).lognorm_upper();
  return d.is_neg_inf() || d <= LogNorm(Rat(-40));
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

const LogRadiusBox box0 = LogRadiusBox::point({Rat(0)});
const LogNorm tol40 = LogNorm(Rat(-40));

// the running rank-2 example: exponents {0, 1/2} twisted by [[1, t], [0, 1]]
DiffModule twisted_pair(long p) {
  DiffModule m = DiffModule::from_standard_form(diag_form(p, Rat(0), rat_of(1, 2)), box0);
  Mat<PSeries> u = Mat<PSeries>::from_rows(
      {{pconst(p, C(p, 1)), pmono(C(p, 1), 1)}, {pzero(p), pconst(p, C(p, 1))}});
  return m.apply_twist(u, box0).module;
}

}  // namespace

TEST_CASE("character averages recover planted solution columns") {
  // trivial module: the average at exponent zero is the identity
  DiffModule triv = DiffModule::from_standard_form(rank1_form(3, Rat(0)), box0);
  auto sa0 = compute_S(gamma_action_exact(triv, 1), ms({rat_entry(3, {Rat(0)})}));
  CHECK(ps_matches(sa0.s.at(0, 0), pconst(3, C(3, 1))));
  CHECK(!sa0.prec_in);
  CHECK(!sa0.prec_out);

  // exponent 1/2 at p = 3: the matching character keeps the column, any
  // other character annihilates it
  DiffModule half = DiffModule::from_standard_form(rank1_form(3, rat_of(1, 2)), box0);
  GammaMatrix e2 = gamma_action_exact(half, 2);
  auto hit = compute_S(e2, ms({rat_entry(3, {rat_of(1, 2)})}));
  CHECK(ps_matches(hit.s.at(0, 0), pconst(3, C(3, 1))));
  // the residue representative 5 mod 9 names the same character
  auto hit5 = compute_S(e2, ms({rat_entry(3, {Rat(5)})}));
  CHECK(ps_matches(hit5.s.at(0, 0), pconst(3, C(3, 1))));
  auto miss = compute_S(e2, ms({rat_entry(3, {Rat(0)})}));
  CHECK(miss.s.at(0, 0).is_zeroish_all());

  // twisted pair: the average assembles the inverse twist exactly
  DiffModule mtw = twisted_pair(3);
  auto tw = compute_S(gamma_action_exact(mtw, 2),
                      ms({rat_entry(3, {Rat(0)}), rat_entry(3, {rat_of(1, 2)})}));
  CHECK(ps_matches(tw.s.at(0, 0), pconst(3, C(3, 1))));
  CHECK(ps_matches(tw.s.at(0, 1), pmono(C(3, -1), 1)));
  CHECK(tw.s.at(1, 0).is_zeroish_all());
  CHECK(ps_matches(tw.s.at(1, 1), pconst(3, C(3, 1))));
  CHECK(tw.prec_in.has_value() == false);

  // an inexact twist coefficient makes the precision ledger bite: the
  // output is poorer than the input by exactly n * k digits
  DiffModule base = DiffModule::from_standard_form(diag_form(3, Rat(0), rat_of(1, 2)), box0);
  Mat<PSeries> uq = Mat<PSeries>::from_rows(
      {{pconst(3, C(3, 1)), pmono(Q(3, 1, 2), 1)}, {pzero(3), pconst(3, C(3, 1))}});
  DiffModule mq = base.apply_twist(uq, box0).module;
  auto sq = compute_S(gamma_action_exact(mq, 2),
                      ms({rat_entry(3, {Rat(0)}), rat_entry(3, {rat_of(1, 2)})}));
  REQUIRE(sq.prec_in.has_value());
  REQUIRE(sq.prec_out.has_value());
  CHECK(*sq.prec_out == *sq.prec_in - 2);

  // refusals: truncated tables and mismatched multisets
  CHECK(err_code([&] {
          compute_S(gamma_action_series(half, 1, 4), ms({rat_entry(3, {Rat(0)})}));
        }) == "NotExact");
  CHECK(err_code([&] { compute_S(e2, ms({})); }) == "Dimension");
  CHECK(err_code([&] {
          compute_S(e2, ms({rat_entry(3, {Rat(0), Rat(0)})}));
        }) == "Dimension");
}

TEST_CASE("sublevel reads agree with directly computed tables") {
  DiffModule half = DiffModule::from_standard_form(rank1_form(3, rat_of(1, 2)), box0);
  GammaMatrix e2 = gamma_action_exact(half, 2);
  GammaMatrix down = sublevel_action(e2, 1);
  GammaMatrix direct = gamma_action_exact(half, 1);
  CHECK(down.level == 1);
  CHECK(down.table.size() == 3);
  for (long a = 0; a < 3; ++a) {
    CSeries diff = down.at_raw({a}).at(0, 0) - direct.at_raw({a}).at(0, 0);
    CHECK(diff.is_zeroish_all());
  }
  CHECK(sublevel_action(e2, 2).table.size() == 9);
  CHECK(err_code([&] { sublevel_action(e2, 0); }) == "Dimension");
  CHECK(err_code([&] { sublevel_action(e2, 3); }) == "Dimension");
}

TEST_CASE("digit sums telescope between consecutive levels") {
  DiffModule triv = DiffModule::from_standard_form(rank1_form(3, Rat(0)), box0);
  CHECK(telescoping_check(gamma_action_exact(triv, 1), ms({rat_entry(3, {Rat(0)})}))
            .is_neg_inf());

  DiffModule half = DiffModule::from_standard_form(rank1_form(3, rat_of(1, 2)), box0);
  CHECK(telescoping_check(gamma_action_exact(half, 2), ms({rat_entry(3, {rat_of(1, 2)})}))
            .is_neg_inf());

  DiffModule mtw = twisted_pair(3);
  CHECK(telescoping_check(gamma_action_exact(mtw, 2),
                          ms({rat_entry(3, {Rat(0)}), rat_entry(3, {rat_of(1, 2)})}))
            .is_neg_inf());
}

TEST_CASE("digit descent pins exponent residues level by level") {
  // 1/2 = ... + 1*9 + 1*3 + 2 at p = 3: residues 2, 5, 14
  DiffModule half = DiffModule::from_standard_form(rank1_form(3, rat_of(1, 2)), box0);
  auto ds = descend_exponent(certified_provider(half), 3);
  REQUIRE(ds.trace.size() == 3);
  CHECK(ds.trace[0].chosen == std::vector<long>{2});
  CHECK(ds.trace[1].chosen == std::vector<long>{1});
  CHECK(ds.trace[2].chosen == std::vector<long>{1});
  for (const auto& lvl : ds.trace) {
    CHECK(lvl.candidates.size() == 3);
    CHECK(lvl.det_constant == LogNorm(Rat(0)));
  }
  REQUIRE(ds.A.size() == 1);
  const ExpCoord& c = ds.A.entries[0].coords[0];
  CHECK(!c.is_exact());
  CHECK(c.residue(3) == Int(14));
  CHECK(c.padic().abs_prec() == 3);

  // a unipotent block does not disturb the zero exponent
  DiffModule uni = DiffModule::from_standard_form(unipotent_form(3), box0);
  auto du = descend_exponent(certified_provider(uni), 2);
  REQUIRE(du.A.size() == 2);
  for (const auto& en : du.A.entries) CHECK(en.coords[0].residue(2) == Int(0));
  CHECK(du.trace[0].candidates.size() == 9);

  // the twisted pair recovers {0, 5 mod 9} in basis order
  DiffModule mtw = twisted_pair(3);
  auto dt = descend_exponent(certified_provider(mtw), 2);
  REQUIRE(dt.A.size() == 2);
  CHECK(dt.A.entries[0].coords[0].residue(2) == Int(0));
  CHECK(dt.A.entries[1].coords[0].residue(2) == Int(5));

  // both tie-break policies land on weakly equivalent answers
  DescentOptions big;
  big.prefer_large_digits = true;
  auto dt2 = descend_exponent(certified_provider(mtw), 2, big);
  CHECK(dt2.A.entries[0].coords[0].residue(2) == Int(0));
  CHECK(dt2.A.entries[1].coords[0].residue(2) == Int(5));
  CHECK(weak_equiv(dt.A, dt2.A, 2, 16).within_budget);

  // a table with no unit column admits no digit at all
  auto spoiled = [&](int k) {
    GammaMatrix e = gamma_action_exact(half, k);
    const CycScalar one = CycScalar::one(3, k, N);
    for (auto& [a, ea] : e.table)
      ea = ea.map([&](const CSeries& s) { return s * cmono(one, 1); });
    return e;
  };
  CHECK(err_code([&] { descend_exponent(spoiled, 1); }) == "NoAdmissibleDigit");

  // the candidate enumeration refuses to explode
  GammaMatrix big_meta;
  big_meta.p = 5;
  big_meta.nvars = 2;
  big_meta.rank = 4;
  big_meta.level = 1;
  big_meta.box = LogRadiusBox::point({Rat(0), Rat(0)});
  CHECK(err_code([&] {
          descend_exponent([&](int) { return big_meta; }, 1);
        }) == "Budget");
}

TEST_CASE("exponent certificates measure the transformation law") {
  DiffModule half = DiffModule::from_standard_form(rank1_form(3, rat_of(1, 2)), box0);
  auto prov = certified_provider(half);
  auto cert = verify_exponent_certificate(prov, ms({rat_entry(3, {rat_of(1, 2)})}), 1, 2, box0);
  CHECK(cert.valid());
  CHECK(cert.growth_l == Rat(0));
  REQUIRE(cert.levels.size() == 2);
  for (const auto& rec : cert.levels) {
    CHECK(rec.semilinearity_residual.is_neg_inf());
    CHECK(rec.det_constant_lognorm == LogNorm(Rat(0)));
    CHECK(rec.sup_lognorm_s == LogNorm(Rat(0)));
    CHECK(rec.invertible);
    REQUIRE(rec.inverse_excess.has_value());
    CHECK(*rec.inverse_excess == Rat(0));
  }

  // the wrong exponent kills the determinant witness but not the law:
  // a zero average transforms correctly and certifies nothing
  auto bad = verify_exponent_certificate(prov, ms({rat_entry(3, {Rat(0)})}), 1, 2, box0);
  CHECK(!bad.valid());
  CHECK(bad.law_ok);
  CHECK(!bad.det_witness_ok);
  for (const auto& rec : bad.levels) {
    CHECK(!rec.invertible);
    CHECK(rec.det_constant_lognorm.is_neg_inf());
  }

  // twisted pair: S = U^{-1} passes with exact zero residuals
  DiffModule mtw = twisted_pair(3);
  auto ctw = verify_exponent_certificate(
      certified_provider(mtw), ms({rat_entry(3, {Rat(0)}), rat_entry(3, {rat_of(1, 2)})}),
      1, 2, box0);
  CHECK(ctw.valid());
  CHECK(ctw.growth_l == Rat(0));
  CHECK(ps_matches(ctw.levels[1].s.at(0, 1), pmono(C(3, -1), 1)));
  for (const auto& rec : ctw.levels) {
    CHECK(rec.semilinearity_residual.is_neg_inf());
    CHECK(rec.invertible);
  }

  // truncated tables are refused outright
  CHECK(err_code([&] {
          verify_exponent_certificate([&](int k) { return gamma_action_series(half, k, 4); },
                                      ms({rat_entry(3, {rat_of(1, 2)})}), 1, 1, box0);
        }) == "NotExact");
}

TEST_CASE("spectral projectors isolate direct factors") {
  // a genuine direct sum projects onto diag(1, 0) at every level
  DiffModule m0 = DiffModule::from_standard_form(rank1_form(3, Rat(0)), box0);
  DiffModule mh = DiffModule::from_standard_form(rank1_form(3, rat_of(1, 2)), box0);
  DiffModule sum = direct_sum(m0, mh);
  const ExponentMultiset a_sum = sum.certification().standard.exponent();
  auto rep = projector_sequence(sum, certified_provider(sum), a_sum, {0}, 1, 2, box0);
  REQUIRE(rep.ks == std::vector<int>{1, 2});
  CHECK(rep.skipped.empty());
  for (const auto& nk : rep.n_k) {
    CHECK(ps_matches(nk.at(0, 0), pconst(3, C(3, 1))));
    CHECK(nk.at(0, 1).is_zeroish_all());
    CHECK(nk.at(1, 0).is_zeroish_all());
    CHECK(nk.at(1, 1).is_zeroish_all());
  }
  REQUIRE(rep.decay.size() == 1);
  CHECK(rep.decay[0].is_neg_inf());
  CHECK(rep.converged);
  CHECK(rep.idempotency_residual.is_neg_inf());
  CHECK(rep.horizontality_residual.is_neg_inf());

  // twisted pair: the projector carries the off-diagonal correction t
  DiffModule mtw = twisted_pair(3);
  const ExponentMultiset a_tw =
      ms({rat_entry(3, {Rat(0)}), rat_entry(3, {rat_of(1, 2)})});
  auto rtw = projector_sequence(mtw, certified_provider(mtw), a_tw, {0}, 1, 2, box0);
  for (const auto& nk : rtw.n_k) {
    CHECK(ps_matches(nk.at(0, 0), pconst(3, C(3, 1))));
    CHECK(ps_matches(nk.at(0, 1), pmono(C(3, 1), 1)));
    CHECK(nk.at(1, 0).is_zeroish_all());
    CHECK(nk.at(1, 1).is_zeroish_all());
  }
  CHECK(rtw.converged);
  CHECK(rtw.idempotency_residual.is_neg_inf());
  CHECK(rtw.horizontality_residual <= tol40);

  // integer-linked exponents cannot be split
  DiffModule linked = DiffModule::from_standard_form(diag_form(3, Rat(0), Rat(3)), box0);
  const ExponentMultiset a_linked = linked.certification().standard.exponent();
  CHECK(err_code([&] {
          projector_sequence(linked, certified_provider(linked), a_linked, {0}, 1, 2, box0);
        }) == "InvalidPartition");

  // a split needs two non-empty sides
  CHECK(err_code([&] {
          projector_sequence(sum, certified_provider(sum), a_sum, {0, 1}, 1, 2, box0);
        }) == "Dimension");
  CHECK(err_code([&] {
          projector_sequence(sum, certified_provider(sum), a_sum, {}, 1, 2, box0);
        }) == "Dimension");
}

TEST_CASE("projected bases split twisted modules into certified factors") {
  DiffModule mtw = twisted_pair(3);
  auto dec = decompose(mtw, {{0}, {1}}, box0);
  REQUIRE(dec.factors.size() == 2);
  CHECK(dec.projectors.size() == 1);

  const auto& f0 = dec.factors[0];
  CHECK(f0.block == std::vector<int>{0});
  CHECK(ps_matches(f0.basis.at(0, 0), pconst(3, C(3, 1))));
  CHECK(f0.basis.at(1, 0).is_zeroish_all());
  CHECK(f0.module.theta()[0].at(0, 0).is_zeroish_all());
  CHECK(f0.module.certified());
  // the model exponent is pinned mod 3^2, so the honest gap floor is -2
  CHECK(f0.model_residual <= LogNorm(Rat(-2)));
  CHECK(f0.certificate.valid());
  CHECK(f0.certificate.A.entries[0].coords[0].residue(2) == Int(0));
  CHECK(f0.exponent_match.within_budget);

  const auto& f1 = dec.factors[1];
  CHECK(f1.block == std::vector<int>{1});
  CHECK(ps_matches(f1.basis.at(0, 0), pmono(C(3, -1), 1)));
  CHECK(ps_matches(f1.basis.at(1, 0), pconst(3, C(3, 1))));
  CHECK(ps_matches(f1.module.theta()[0].at(0, 0), pconst(3, Q(3, 1, 2))));
  CHECK(f1.module.certified());
  CHECK(f1.model_residual <= LogNorm(Rat(-2)));
  CHECK(f1.certificate.valid());
  CHECK(f1.certificate.A.entries[0].coords[0].residue(2) == Int(5));
  CHECK(f1.exponent_match.within_budget);

  CHECK(dec.assembled_det_gap < LogNorm(Rat(0)));

  // the permuted partition returns the same bases in the other order
  auto dep = decompose(mtw, {{1}, {0}}, box0);
  CHECK(ps_matches(dep.factors[0].basis.at(0, 0), pmono(C(3, -1), 1)));
  CHECK(ps_matches(dep.factors[0].basis.at(1, 0), pconst(3, C(3, 1))));
  CHECK(dep.factors[0].certificate.A.entries[0].coords[0].residue(2) == Int(5));
  CHECK(ps_matches(dep.factors[1].basis.at(0, 0), pconst(3, C(3, 1))));

  // structural refusals
  CHECK(err_code([&] { decompose(mtw, {{0}, {0, 1}}, box0); }) == "Dimension");
  CHECK(err_code([&] { decompose(mtw, {{0}}, box0); }) == "Dimension");
  DiffModule linked = DiffModule::from_standard_form(diag_form(3, Rat(0), Rat(3)), box0);
  CHECK(err_code([&] { decompose(linked, {{0}, {1}}, box0); }) == "InvalidPartition");
  DiffModule bare = DiffModule::general({Mat<PSeries>::from_rows({{pzero(3)}})});
  CHECK(err_code([&] { decompose(bare, {{0}}, box0); }) == "Uncertified");
}

TEST_CASE("rank-4 splits peel four exponent classes at p = 5") {
  DiffModule a = direct_sum(DiffModule::from_standard_form(rank1_form(5, Rat(0)), box0),
                            DiffModule::from_standard_form(rank1_form(5, rat_of(1, 2)), box0));
  DiffModule b = direct_sum(DiffModule::from_standard_form(rank1_form(5, Rat(0)), box0),
                            DiffModule::from_standard_form(rank1_form(5, rat_of(1, 3)), box0));
  DiffModule four = tensor(a, b);
  // twist by kron([[1, t], [0, 1]], I); the inverse restores e3 -> e3 - t e1
  const PSeries one5 = pconst(5, C(5, 1));
  const PSeries z5 = pzero(5);
  const PSeries t5 = pmono(C(5, 1), 1);
  Mat<PSeries> u4 = Mat<PSeries>::from_rows({{one5, z5, t5, z5},
                                             {z5, one5, z5, t5},
                                             {z5, z5, one5, z5},
                                             {z5, z5, z5, one5}});
  DiffModule mtw = four.apply_twist(u4, box0).module;

  auto dec = decompose(mtw, {{0}, {1}, {2}, {3}}, box0);
  REQUIRE(dec.factors.size() == 4);
  CHECK(dec.projectors.size() == 3);
  CHECK(dec.assembled_det_gap < LogNorm(Rat(0)));

  // exponents come back as 0, 1/3, 1/2, 5/6 modulo 25
  const std::vector<long> want_res = {0, 17, 13, 5};
  for (int i = 0; i < 4; ++i) {
    const auto& f = dec.factors[i];
    CHECK(f.certificate.valid());
    CHECK(f.exponent_match.within_budget);
    CHECK(f.certificate.A.entries[0].coords[0].residue(2) == Int(want_res[i]));
    CHECK(f.module.certified());
    CHECK(f.model_residual <= LogNorm(Rat(-2)));
  }

  // bases: the two untouched coordinates and the two sheared ones
  CHECK(ps_matches(dec.factors[0].basis.at(0, 0), one5));
  CHECK(ps_matches(dec.factors[1].basis.at(1, 0), one5));
  CHECK(ps_matches(dec.factors[2].basis.at(2, 0), one5));
  CHECK(ps_matches(dec.factors[2].basis.at(0, 0), pmono(C(5, -1), 1)));
  CHECK(ps_matches(dec.factors[3].basis.at(3, 0), one5));
  CHECK(ps_matches(dec.factors[3].basis.at(1, 0), pmono(C(5, -1), 1)));
}

TEST_CASE("constant bases normalize connections to their constant parts") {
  // untwisted unipotent block: the basis is already constant
  DiffModule uni = DiffModule::from_standard_form(unipotent_form(3), box0);
  auto cb = constant_basis(uni, rat_entry(3, {Rat(0)}), 1, 2, box0);
  CHECK(ps_matches(cb.basis.at(0, 0), pconst(3, C(3, 1))));
  CHECK(cb.basis.at(0, 1).is_zeroish_all());
  CHECK(cb.basis.at(1, 0).is_zeroish_all());
  CHECK(ps_matches(cb.basis.at(1, 1), pconst(3, C(3, 1))));
  REQUIRE(cb.decay.size() == 1);
  CHECK(cb.decay[0].is_neg_inf());
  CHECK(cb.converged);
  CHECK(cb.constancy_residual.is_neg_inf());
  REQUIRE(cb.constants.size() == 1);
  CHECK(sc_near(cb.constants[0].at(0, 1), C(3, 1)));
  CHECK(sc_near(cb.constants[0].at(0, 0), PadicScalar::zero(3)));
  CHECK(cb.nilpotency[0].is_neg_inf());

  // rank-1 exponent 1/2: the constant is the exponent itself
  DiffModule half = DiffModule::from_standard_form(rank1_form(3, rat_of(1, 2)), box0);
  auto ch = constant_basis(half, rat_entry(3, {rat_of(1, 2)}), 1, 2, box0);
  CHECK(ps_matches(ch.basis.at(0, 0), pconst(3, C(3, 1))));
  CHECK(sc_near(ch.constants[0].at(0, 0), Q(3, 1, 2)));
  CHECK(ch.nilpotency[0] <= tol40);
  CHECK(ch.constancy_residual <= tol40);

  // twisted unipotent block: the recovered basis is the inverse twist and
  // the constant part is the nilpotent block
  Mat<PSeries> u = Mat<PSeries>::from_rows(
      {{pconst(3, C(3, 1)), pmono(C(3, 1), 1)}, {pzero(3), pconst(3, C(3, 1))}});
  DiffModule utw = uni.apply_twist(u, box0).module;
  auto ct = constant_basis(utw, rat_entry(3, {Rat(0)}), 1, 2, box0);
  CHECK(ps_matches(ct.basis.at(0, 0), pconst(3, C(3, 1))));
  CHECK(ps_matches(ct.basis.at(0, 1), pmono(C(3, -1), 1)));
  CHECK(ct.basis.at(1, 0).is_zeroish_all());
  CHECK(ps_matches(ct.basis.at(1, 1), pconst(3, C(3, 1))));
  CHECK(sc_near(ct.constants[0].at(0, 1), C(3, 1)));
  CHECK(sc_near(ct.constants[0].at(1, 0), PadicScalar::zero(3)));
  CHECK(ct.nilpotency[0].is_neg_inf());
  CHECK(ct.constancy_residual <= tol40);
  CHECK(ct.converged);

  // a mismatched exponent leaves nothing to normalize
  CHECK(err_code([&] {
          constant_basis(half, rat_entry(3, {Rat(0)}), 1, 2, box0);
        }) == "NotUnit");
  CHECK(err_code([&] {
          constant_basis(half, rat_entry(3, {rat_of(1, 2)}), 2, 1, box0);
        }) == "Dimension");
  CHECK(err_code([&] {
          constant_basis(half, rat_entry(3, {Rat(0), Rat(0)}), 1, 2, box0);
        }) == "Dimension");
}

TEST_CASE("splitting then normalizing recovers the planted standard form") {
  DiffModule mtw = twisted_pair(3);
  auto dec = decompose(mtw, {{0}, {1}}, box0);
  auto c0 = constant_basis(dec.factors[0].module, rat_entry(3, {Rat(0)}), 1, 2, box0);
  CHECK(sc_near(c0.constants[0].at(0, 0), PadicScalar::zero(3)));
  auto c1 = constant_basis(dec.factors[1].module, rat_entry(3, {rat_of(1, 2)}), 1, 2, box0);
  CHECK(sc_near(c1.constants[0].at(0, 0), Q(3, 1, 2)));
  CHECK(c1.nilpotency[0] <= tol40);

  // a nilpotent part rides along invisibly: the split factor reports a
  // visible model distance, and the normalization recovers the nilpotent
  // constant that the averages alone cannot see
  DiffModule uni = DiffModule::from_standard_form(unipotent_form(3), box0);
  DiffModule half = DiffModule::from_standard_form(rank1_form(3, rat_of(1, 2)), box0);
  const PSeries one3 = pconst(3, C(3, 1));
  const PSeries z3 = pzero(3);
  Mat<PSeries> u3 = Mat<PSeries>::from_rows(
      {{one3, z3, pmono(C(3, 1), 1)}, {z3, one3, z3}, {z3, z3, one3}});
  DiffModule three = direct_sum(uni, half).apply_twist(u3, box0).module;
  auto dec3 = decompose(three, {{0, 1}, {2}}, box0);
  REQUIRE(dec3.factors.size() == 2);

  const auto& g0 = dec3.factors[0];
  CHECK(g0.block == std::vector<int>{0, 1});
  CHECK(g0.module.certified());
  CHECK(g0.certificate.valid());
  CHECK(g0.model_residual == LogNorm(Rat(0)));  // the hidden nilpotent 1
  auto cn = constant_basis(g0.module, rat_entry(3, {Rat(0)}), 1, 2, box0);
  CHECK(sc_near(cn.constants[0].at(0, 1), C(3, 1)));
  CHECK(sc_near(cn.constants[0].at(1, 0), PadicScalar::zero(3)));
  CHECK(cn.nilpotency[0] <= tol40);
  CHECK(cn.converged);

  const auto& g1 = dec3.factors[1];
  CHECK(g1.model_residual <= LogNorm(Rat(-2)));
  CHECK(ps_matches(g1.basis.at(0, 0), pmono(C(3, -1), 1)));
  CHECK(ps_matches(g1.basis.at(2, 0), one3));
  auto cg = constant_basis(g1.module, rat_entry(3, {rat_of(1, 2)}), 1, 2, box0);
  CHECK(sc_near(cg.constants[0].at(0, 0), Q(3, 1, 2)));
}
