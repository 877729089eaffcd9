#include "pfuchs/fuchs.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace pfuchs {

namespace {

constexpr int kRootPrec = 64;  // scalar precision for character factors
constexpr double kMaxDigitCandidates = 200000.0;

PSeries const_series(long p, int nvars, const PadicScalar& c) {
  if (c.is_exact_zero()) return PSeries::zero(p, nvars, Window::cube(nvars, 0, 0));
  return PSeries::monomial(c, ExpVec(static_cast<size_t>(nvars), 0));
}

PSeries one_series(long p, int nvars) {
  return const_series(p, nvars, PadicScalar::from_int(p, 1, kIntPrec));
}

Mat<PSeries> to_series_matrix(const Mat<PadicScalar>& a, int nvars) {
  if (a.empty()) fail("Dimension", "empty matrix");
  const long p = a.at(0, 0).p();
  return a.map([&](const PadicScalar& c) { return const_series(p, nvars, c); });
}

Mat<PSeries> dlog(const Mat<PSeries>& m, int var) {
  return m.map([&](const PSeries& s) { return s.log_derivative(var); });
}

Mat<CSeries> to_cyc_matrix(const Mat<PSeries>& a, int level) {
  return a.map([&](const PSeries& s) { return to_cyc_series(s, level); });
}

Window work_window_or_default(const CertifyOptions& opt, int nvars) {
  return opt.work_window ? *opt.work_window : Window::cube(nvars, -40, 40);
}

// restrict with a clip ledger folded into `ledger`
Mat<PSeries> restricted(const Mat<PSeries>& a, const Window& w, const LogRadiusBox& box,
                        LogNorm& ledger) {
  auto [r, clip] = mat_restrict(a, w, ClipPolicy{true, box});
  ledger = std::max(ledger, clip.max_discarded);
  return std::move(r);
}

// odometer over [0, radix)^slots, last slot fastest (lexicographic scan)
class Odometer {
 public:
  Odometer(int slots, long radix) : d_(static_cast<size_t>(slots), 0), radix_(radix) {}
  const std::vector<long>& digits() const { return d_; }
  bool advance() {
    int i = static_cast<int>(d_.size()) - 1;
    while (i >= 0 && d_[i] == radix_ - 1) d_[i--] = 0;
    if (i < 0) return false;
    ++d_[i];
    return true;
  }

 private:
  std::vector<long> d_;
  long radix_;
};

std::vector<std::vector<Int>> residue_matrix(const ExponentMultiset& A, int k) {
  std::vector<std::vector<Int>> res(A.entries.size());
  for (size_t j = 0; j < A.entries.size(); ++j)
    for (const ExpCoord& c : A.entries[j].coords) res[j].push_back(c.residue(k));
  return res;
}

// diag(zeta_a^{sign * <a, A_j>}) as a constant cyclotomic series matrix
Mat<CSeries> char_diag(long p, int k, int nvars, const std::vector<long>& a,
                       const std::vector<std::vector<Int>>& res, int sign, int prec) {
  std::vector<CSeries> d;
  d.reserve(res.size());
  for (const auto& row : res) {
    Int dot = 0;
    for (size_t i = 0; i < row.size(); ++i) dot += Int(a[i]) * row[i];
    d.push_back(CSeries::monomial(CycScalar::root_power(p, k, Int(sign * dot), prec),
                                  ExpVec(static_cast<size_t>(nvars), 0)));
  }
  return mat_diag(d);
}

void check_table(const GammaMatrix& e, int k) {
  if (!e.exact) fail("NotExact", "this computation requires an exact action table");
  if (e.level != k) fail("BadGammaTable", "provider returned a table at the wrong level");
}

Mat<PadicScalar> constant_term(const Mat<PSeries>& a, long p) {
  return a.map([&](const PSeries& s) {
    const PadicScalar* c = s.coeff_ptr(ExpVec(static_cast<size_t>(s.nvars()), 0));
    return c != nullptr ? *c : PadicScalar::zero(p);
  });
}

Mat<PadicScalar> invert_constant(const Mat<PadicScalar>& r, long p) {
  PadicScalar dinv;
  try {
    dinv = mat_det(r).invert();
  } catch (const error&) {
    fail("NotUnit", "constant normalization factor is singular");
  }
  const PadicScalar one = PadicScalar::from_int(p, 1, kRootPrec);
  return mat_adjugate(r, one).map([&](const PadicScalar& c) { return c * dinv; });
}

ExponentEntry zero_entry(long p, int nvars) {
  ExponentEntry en;
  for (int i = 0; i < nvars; ++i) en.coords.push_back(ExpCoord::rational(p, Rat(0)));
  return en;
}

}  // namespace

// ---------------------------------------------------------------------------
// Providers and sublevel reads

GammaProvider certified_provider(const DiffModule& mod, const ModuleOptions& opt) {
  auto m = std::make_shared<DiffModule>(mod);
  auto o = std::make_shared<ModuleOptions>(opt);
  auto cache = std::make_shared<std::map<int, GammaMatrix>>();
  return [m, o, cache](int k) -> GammaMatrix {
    auto it = cache->find(k);
    if (it == cache->end()) it = cache->emplace(k, gamma_action_exact(*m, k, *o)).first;
    return it->second;
  };
}

GammaMatrix sublevel_action(const GammaMatrix& e, int j) {
  if (j < 1 || j > e.level) fail("Dimension", "target level must lie in [1, level]");
  if (!e.exact) fail("NotExact", "sublevel reads need an exact table");
  if (j == e.level) return e;
  GammaMatrix out;
  out.p = e.p;
  out.nvars = e.nvars;
  out.level = j;
  out.rank = e.rank;
  out.box = e.box;
  out.exact = true;
  out.tail_bound = e.tail_bound;
  out.twist_residual = e.twist_residual;
  const Int factor = pow_p(e.p, e.level - j);
  Odometer a(e.nvars, pow_p(e.p, j).get_si());
  do {
    std::vector<long> src(a.digits());
    for (long& x : src) x = Int(Int(x) * factor).get_si();
    const Mat<CSeries>& ea = e.at_raw(src);
    out.table.emplace(a.digits(), ea.map([&](const CSeries& s) {
      return s.map_coeffs([&](const CycScalar& c) { return c.descend_to_level(j); });
    }));
  } while (a.advance());
  return out;
}

// ---------------------------------------------------------------------------
// Character averages

SAverage compute_S(const GammaMatrix& e, const ExponentMultiset& A) {
  if (!e.exact) fail("NotExact", "character averages require an exact action table");
  const long p = e.p;
  const int n = e.nvars, k = e.level, m = e.rank;
  if (m <= 0 || e.table.empty()) fail("Dimension", "empty action table");
  if (A.size() != m) fail("Dimension", "one exponent entry per basis column is required");
  for (const auto& en : A.entries)
    if (en.n() != n) fail("Dimension", "exponent arity does not match the table");
  const auto res = residue_matrix(A, k);

  SAverage out;
  auto fold_prec = [&](const PadicScalar& c) {
    if (c.has_finite_abs_prec())
      out.prec_in = out.prec_in ? std::min(*out.prec_in, c.abs_prec()) : c.abs_prec();
  };
  std::optional<Mat<CSeries>> acc;
  for (const auto& [a, ea] : e.table) {
    for (const CSeries& s : ea.raw())
      for (const auto& [ex, c] : s.terms())
        for (const auto& [idx, coord] : c.coords()) fold_prec(coord);
    Mat<CSeries> term = ea * char_diag(p, k, n, a, res, -1, kRootPrec);
    acc = acc ? *acc + term : std::move(term);
  }

  const long nk = static_cast<long>(n) * k;
  out.s = acc->map([&](const CSeries& cs) {
    PSeries r(p, n, cs.window());
    for (const auto& [ex, c] : cs.terms()) {
      PadicScalar d = c.descend_to_base().scale_pow_p(-nk);
      if (!d.is_exact_zero()) r.add_term(ex, d);
    }
    return r;
  });
  for (const PSeries& s : out.s.raw())
    for (const auto& [ex, c] : s.terms())
      if (c.has_finite_abs_prec())
        out.prec_out = out.prec_out ? std::min(*out.prec_out, c.abs_prec()) : c.abs_prec();
  if (out.prec_in && out.prec_out && *out.prec_out != *out.prec_in - nk)
    fail("Internal", "average lost a different amount of precision than its ledger");
  return out;
}

LogNorm telescoping_check(const GammaMatrix& e, const ExponentMultiset& A) {
  if (!e.exact) fail("NotExact", "telescoping needs an exact table");
  if (e.level < 1) fail("Dimension", "telescoping needs a table at level >= 1");
  const long p = e.p;
  const int n = e.nvars, k = e.level - 1;

  Mat<PSeries> sk;
  if (k == 0) {
    sk = mat_identity(e.rank, one_series(p, n));
    if (A.size() != e.rank) fail("Dimension", "one exponent entry per basis column is required");
  } else {
    sk = compute_S(sublevel_action(e, k), A).s;
  }

  const Int pk = pow_p(p, k);
  std::optional<Mat<PSeries>> acc;
  Odometer b(n, p);
  do {
    ExponentMultiset shifted;
    for (const auto& en : A.entries) {
      ExponentEntry sh;
      for (int i = 0; i < n; ++i)
        sh.coords.push_back(ExpCoord::rational(p, Rat(Int(pk * b.digits()[i]))));
      shifted.entries.push_back(entry_add(en, sh));
    }
    Mat<PSeries> t = compute_S(e, shifted).s;
    acc = acc ? *acc + t : std::move(t);
  } while (b.advance());
  return mat_sup_lognorm(*acc - sk, e.box).upper;
}

// ---------------------------------------------------------------------------
// Digit descent

DescentResult descend_exponent(const GammaProvider& provider, int k_max,
                               const DescentOptions& opt) {
  if (k_max < 1) fail("Dimension", "descent needs at least one level");
  GammaMatrix e1 = provider(1);
  check_table(e1, 1);
  const long p = e1.p;
  const int n = e1.nvars, m = e1.rank;
  const int slots = m * n;
  if (std::pow(static_cast<double>(p), static_cast<double>(slots)) > kMaxDigitCandidates)
    fail("Budget", "digit enumeration p^{rank * nvars} is too large");

  std::vector<std::vector<Int>> cur(m, std::vector<Int>(n, Int(0)));
  DescentResult out;
  for (int k = 1; k <= k_max; ++k) {
    GammaMatrix e = k == 1 ? std::move(e1) : provider(k);
    check_table(e, k);
    if (e.p != p || e.rank != m || e.nvars != n)
      fail("BadGammaTable", "provider returned a mismatched table");
    const Int pk1 = pow_p(p, k - 1);

    DescentLevel lvl;
    lvl.k = k;
    std::optional<size_t> best;
    Odometer d(slots, p);
    do {
      ExponentMultiset B;
      for (int j = 0; j < m; ++j) {
        ExponentEntry en;
        for (int i = 0; i < n; ++i)
          en.coords.push_back(
              ExpCoord::rational(p, Rat(Int(cur[j][i] + pk1 * d.digits()[j * n + i]))));
        B.entries.push_back(std::move(en));
      }
      PSeries det = mat_det(compute_S(e, B).s);
      const PadicScalar* c0 = det.coeff_ptr(ExpVec(static_cast<size_t>(n), 0));
      lvl.candidates.push_back(
          {d.digits(), c0 != nullptr ? c0->lognorm_upper() : LogNorm::neg_inf()});
      const size_t idx = lvl.candidates.size() - 1;
      if (!best) {
        best = idx;
      } else {
        const LogNorm& score = lvl.candidates[idx].det_constant;
        const LogNorm& top = lvl.candidates[*best].det_constant;
        if (top < score || (opt.prefer_large_digits && !(score < top))) best = idx;
      }
    } while (d.advance());

    lvl.chosen = lvl.candidates[*best].digits;
    lvl.det_constant = lvl.candidates[*best].det_constant;
    if (lvl.det_constant < LogNorm(opt.admissibility))
      fail("NoAdmissibleDigit",
           "no digit extension keeps the determinant constant admissible");
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < n; ++i) cur[j][i] += pk1 * lvl.chosen[j * n + i];
    out.trace.push_back(std::move(lvl));
  }

  for (int j = 0; j < m; ++j) {
    ExponentEntry en;
    for (int i = 0; i < n; ++i) {
      const Int& r = cur[j][i];
      PadicScalar x;
      if (r == 0) {
        x = PadicScalar::zero_at_prec(p, k_max);
      } else {
        PadicScalar v = PadicScalar::from_int(p, r, kRootPrec);
        x = v.as_inexact().truncated_to(static_cast<int>(k_max - v.val()));
      }
      en.coords.push_back(ExpCoord::truncated(x));
    }
    out.A.entries.push_back(std::move(en));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Certification

ExponentCertificate verify_exponent_certificate(const GammaProvider& provider,
                                                const ExponentMultiset& A, int k_lo,
                                                int k_hi, const LogRadiusBox& box,
                                                const CertifyOptions& opt) {
  if (k_lo < 1 || k_hi < k_lo) fail("Dimension", "bad level range");
  ExponentCertificate out;
  out.A = A;
  const int m = A.size();
  Rat l(0);

  for (int k = k_lo; k <= k_hi; ++k) {
    GammaMatrix e = provider(k);
    check_table(e, k);
    const long p = e.p;
    const int n = e.nvars;
    const Window W = work_window_or_default(opt, n);
    SAverage sa = compute_S(e, A);

    LevelRecord rec;
    rec.k = k;
    rec.s = sa.s;
    const auto res = residue_matrix(A, k);
    const Mat<CSeries> sc = to_cyc_matrix(sa.s, k);
    LogNorm law = sa.clip_ledger;
    for (const auto& [a, ea] : e.table) {
      std::vector<Int> ai(a.begin(), a.end());
      Mat<CSeries> rot =
          sc.map([&](const CSeries& s) { return rotate_series(s, ai, opt.prec); });
      Mat<CSeries> rhs = sc * char_diag(p, k, n, a, res, +1, opt.prec);
      law = std::max(law, mat_sup_lognorm(ea * rot - rhs, box).upper);
    }
    rec.semilinearity_residual = law;
    rec.sup_lognorm_s = mat_sup_lognorm(sa.s, box).upper;
    PSeries det = mat_det(sa.s);
    const PadicScalar* c0 = det.coeff_ptr(ExpVec(static_cast<size_t>(n), 0));
    rec.det_constant_lognorm = c0 != nullptr ? c0->lognorm_upper() : LogNorm::neg_inf();
    try {
      auto inv = invert_unit_matrix(sa.s, box, W, opt.target_rel);
      rec.invertible = true;
      rec.inverse_sup_lognorm = mat_sup_lognorm(inv.inverse, box).upper;
    } catch (const error&) {
      rec.invertible = false;
    }
    if (!rec.sup_lognorm_s.is_neg_inf()) {
      Rat q(rec.sup_lognorm_s.value() / Rat(static_cast<long>(k)));
      if (q > l) l = q;
    }
    out.levels.push_back(std::move(rec));
  }

  out.growth_l = l;
  out.law_ok = true;
  out.det_witness_ok = true;
  for (auto& rec : out.levels) {
    if (!(rec.semilinearity_residual <= LogNorm(opt.law_tol))) out.law_ok = false;
    if (rec.det_constant_lognorm < LogNorm(Rat(0))) out.det_witness_ok = false;
    if (rec.invertible && !rec.inverse_sup_lognorm.is_neg_inf())
      rec.inverse_excess =
          Rat(rec.inverse_sup_lognorm.value() - Rat(m - 1) * Rat(static_cast<long>(rec.k)) * l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral projectors

LogRadiusBox shrink_box(const LogRadiusBox& box) {
  std::vector<Rat> lo, hi;
  for (int i = 0; i < box.nvars(); ++i) {
    Rat c((box.lo[i] + box.hi[i]) / Rat(2));
    Rat q((box.hi[i] - box.lo[i]) / Rat(4));
    lo.push_back(Rat(c - q));
    hi.push_back(Rat(c + q));
  }
  return LogRadiusBox(lo, hi);
}

ProjectorReport projector_sequence(const DiffModule& mod, const GammaProvider& provider,
                                   const ExponentMultiset& A, const std::vector<int>& block,
                                   int k_lo, int k_hi, const LogRadiusBox& box,
                                   const ProjectorOptions& opt) {
  if (k_lo < 1 || k_hi < k_lo) fail("Dimension", "bad level range");
  const int m = A.size();
  std::vector<bool> in_block(static_cast<size_t>(m), false);
  for (int j : block) {
    if (j < 0 || j >= m || in_block[static_cast<size_t>(j)])
      fail("Dimension", "block indices must be distinct entries of the multiset");
    in_block[static_cast<size_t>(j)] = true;
  }
  std::vector<int> comp;
  for (int j = 0; j < m; ++j)
    if (!in_block[static_cast<size_t>(j)]) comp.push_back(j);
  if (block.empty() || comp.empty()) fail("Dimension", "a split needs two non-empty sides");
  RecursiveCheck rc = check_partition_recursive(A, {block, comp});
  if (rc.status == PartitionStatus::Invalid)
    fail("InvalidPartition", "the two sides are linked by integer differences");
  if (rc.status == PartitionStatus::Inconclusive)
    fail("InvalidPartition", "the partition cannot be validated at this precision");

  ProjectorReport rep;
  rep.shrunk = shrink_box(box);
  const long p = mod.p();
  const int n = mod.nvars();
  const Window W = work_window_or_default(opt.cert, n);
  std::vector<PSeries> chi;
  for (int j = 0; j < m; ++j)
    chi.push_back(in_block[static_cast<size_t>(j)]
                      ? one_series(p, n)
                      : PSeries::zero(p, n, Window::cube(n, 0, 0)));
  const Mat<PSeries> chi_mat = mat_diag(chi);

  LogNorm ledger = LogNorm::neg_inf();
  for (int k = k_lo; k <= k_hi; ++k) {
    GammaMatrix e = provider(k);
    check_table(e, k);
    SAverage sa = compute_S(e, A);
    MatInverse<PadicScalar> inv;
    try {
      inv = invert_unit_matrix(sa.s, rep.shrunk, W, opt.cert.target_rel);
    } catch (const error&) {
      rep.skipped.push_back(k);
      continue;
    }
    rep.ks.push_back(k);
    rep.n_k.push_back(restricted(sa.s * chi_mat * inv.inverse, W, rep.shrunk, ledger));
  }
  if (rep.n_k.empty())
    fail("NotUnit", "no level in range had an invertible average on the shrunk box");

  for (size_t i = 0; i + 1 < rep.n_k.size(); ++i)
    rep.decay.push_back(mat_sup_lognorm(rep.n_k[i] - rep.n_k[i + 1], rep.shrunk).upper);
  rep.limit = rep.n_k.back();
  rep.idempotency_residual =
      std::max(ledger, mat_sup_lognorm(rep.limit * rep.limit - rep.limit, rep.shrunk).upper);
  LogNorm horiz = LogNorm::neg_inf();
  for (int i = 0; i < n; ++i) {
    Mat<PSeries> h = dlog(rep.limit, i) + mod.theta()[i] * rep.limit - rep.limit * mod.theta()[i];
    horiz = std::max(horiz, mat_sup_lognorm(h, rep.shrunk).upper);
  }
  rep.horizontality_residual = horiz;

  int run = 0;
  bool all_exact = !rep.decay.empty();
  int satisfied = 0;
  for (size_t i = 0; i < rep.decay.size(); ++i) {
    const bool adjacent = rep.ks[i + 1] == rep.ks[i] + 1;
    const bool ok =
        adjacent && rep.decay[i] <= LogNorm(Rat(Rat(static_cast<long>(rep.ks[i])) * opt.log_tau));
    run = ok ? run + 1 : 0;
    if (ok) ++satisfied;
    if (!rep.decay[i].is_neg_inf()) all_exact = false;
  }
  rep.converged = run >= opt.consecutive ||
                  (all_exact && satisfied == static_cast<int>(rep.decay.size()));
  return rep;
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

// Conjugated sub-action: E'(a) = block of P^{-1}(t) E(a) P(zeta_a t).
GammaProvider block_provider(GammaProvider parent, const Mat<PSeries>& pmat,
                             const Mat<PSeries>& pinv, int lo, int size, Window w,
                             LogRadiusBox box, int prec) {
  auto P = std::make_shared<Mat<PSeries>>(pmat);
  auto Pi = std::make_shared<Mat<PSeries>>(pinv);
  auto cache = std::make_shared<std::map<int, GammaMatrix>>();
  return [parent, P, Pi, lo, size, w, box, prec, cache](int k) -> GammaMatrix {
    if (auto it = cache->find(k); it != cache->end()) return it->second;
    GammaMatrix e = parent(k);
    check_table(e, k);
    GammaMatrix out;
    out.p = e.p;
    out.nvars = e.nvars;
    out.level = k;
    out.rank = size;
    out.box = box;
    out.exact = e.exact;
    out.tail_bound = e.tail_bound;
    out.twist_residual = e.twist_residual;
    const Mat<CSeries> pic = Pi->map([&](const PSeries& s) { return to_cyc_series(s, k); });
    std::vector<int> idx;
    for (int i = 0; i < size; ++i) idx.push_back(lo + i);
    for (const auto& [a, ea] : e.table) {
      std::vector<Int> ai(a.begin(), a.end());
      Mat<CSeries> rot = P->map([&](const PSeries& s) { return rotate_series(s, k, ai, prec); });
      auto [mr, clip] = mat_restrict(pic * ea * rot, w, ClipPolicy{true, box});
      out.twist_residual = std::max(out.twist_residual, clip.max_discarded);
      out.table.emplace(a, mr.submatrix(idx, idx));
    }
    out.validate();
    cache->emplace(k, out);
    return out;
  };
}

// Projected basis columns: for each selected index j the j-th column of the
// projector image, reduced against the columns already taken and normalized
// at a unit pivot (largest sup norm, then smallest dominant exponent).
std::vector<std::vector<PSeries>> projected_columns(const Mat<PSeries>& nmat,
                                                    const std::vector<int>& sel,
                                                    const LogRadiusBox& box, const Window& w,
                                                    const Rat& target_rel, LogNorm& ledger) {
  const int m = nmat.rows();
  std::vector<std::vector<PSeries>> cols;
  std::vector<int> pivot_rows;
  for (int j : sel) {
    std::vector<PSeries> v;
    v.reserve(static_cast<size_t>(m));
    for (int r = 0; r < m; ++r) v.push_back(nmat.at(r, j));
    for (size_t q = 0; q < cols.size(); ++q) {
      const PSeries f = v[static_cast<size_t>(pivot_rows[q])];
      if (f.empty()) continue;
      for (int r = 0; r < m; ++r) {
        auto [red, clip] =
            (v[static_cast<size_t>(r)] - cols[q][static_cast<size_t>(r)] * f)
                .restrict_to(w, ClipPolicy{true, box});
        ledger = std::max(ledger, clip.max_discarded);
        v[static_cast<size_t>(r)] = std::move(red);
      }
    }
    int best = -1;
    LogNorm best_norm = LogNorm::neg_inf();
    long best_l1 = 0;
    for (int r = 0; r < m; ++r) {
      if (std::find(pivot_rows.begin(), pivot_rows.end(), r) != pivot_rows.end()) continue;
      const PSeries& s = v[static_cast<size_t>(r)];
      if (s.empty()) continue;
      auto uc = s.is_unit_on_box(box);
      if (!uc.unit) continue;
      LogNorm norm = s.sup_lognorm(box).upper;
      long l1 = 0;
      for (long x : uc.index) l1 += x < 0 ? -x : x;
      if (best < 0 || best_norm < norm || (!(norm < best_norm) && l1 < best_l1)) {
        best = r;
        best_norm = norm;
        best_l1 = l1;
      }
    }
    if (best < 0)
      fail("NotUnit", "no unit pivot available while extracting a factor basis");
    auto inv = v[static_cast<size_t>(best)].invert_unit(box, w, target_rel);
    for (int r = 0; r < m; ++r) {
      auto [sc, clip] =
          (v[static_cast<size_t>(r)] * inv.inverse).restrict_to(w, ClipPolicy{true, box});
      ledger = std::max(ledger, clip.max_discarded);
      v[static_cast<size_t>(r)] = std::move(sc);
    }
    pivot_rows.push_back(best);
    cols.push_back(std::move(v));
  }
  return cols;
}

Mat<PSeries> from_columns(const std::vector<std::vector<PSeries>>& cols) {
  const int m = static_cast<int>(cols.front().size());
  std::vector<std::vector<PSeries>> rows(static_cast<size_t>(m));
  for (int r = 0; r < m; ++r)
    for (const auto& c : cols) rows[static_cast<size_t>(r)].push_back(c[static_cast<size_t>(r)]);
  return Mat<PSeries>::from_rows(std::move(rows));
}

struct SplitNode {
  ExponentMultiset A;                     // entries indexed by local columns
  std::vector<std::vector<int>> blocks;   // local column indices per block
  std::vector<std::vector<int>> orig;     // original entry ids per block
  Mat<PSeries> carrier;                   // local basis in the parent coordinates
  std::vector<Mat<PSeries>> theta;        // local connection matrices
  GammaProvider provider;                 // local action
};

}  // namespace

Decomposition decompose(const DiffModule& mod, const std::vector<std::vector<int>>& blocks,
                        const LogRadiusBox& box, const DecomposeOptions& opt) {
  const ExponentMultiset A = mod.certification().standard.exponent();
  const int m = mod.rank();
  const long p = mod.p();
  const int n = mod.nvars();
  if (blocks.size() < 1) fail("Dimension", "at least one block is required");
  std::vector<bool> seen(static_cast<size_t>(m), false);
  for (const auto& b : blocks) {
    if (b.empty()) fail("Dimension", "blocks must be non-empty");
    for (int j : b) {
      if (j < 0 || j >= m || seen[static_cast<size_t>(j)])
        fail("Dimension", "blocks must partition the exponent entries");
      seen[static_cast<size_t>(j)] = true;
    }
  }
  for (bool s : seen)
    if (!s) fail("Dimension", "blocks must partition the exponent entries");
  if (blocks.size() > 1) {
    RecursiveCheck rc = check_partition_recursive(A, blocks);
    if (rc.status == PartitionStatus::Invalid)
      fail("InvalidPartition", "blocks are linked by integer differences");
    if (rc.status == PartitionStatus::Inconclusive)
      fail("InvalidPartition", "the partition cannot be validated at this precision");
  }

  const CertifyOptions& co = opt.projector.cert;
  const Window W = work_window_or_default(co, n);
  ModuleOptions mo;
  mo.work_window = W;
  mo.target_rel = co.target_rel;
  mo.prec = co.prec;

  Decomposition out;
  out.assembled_det_gap = LogNorm::neg_inf();
  const long h_eff = opt.h_max > 0 ? std::min<long>(opt.h_max, opt.k_hi) : opt.k_hi;

  std::function<void(SplitNode&&)> process = [&](SplitNode&& node) {
    if (node.blocks.size() == 1) {
      DescentResult ds = descend_exponent(node.provider, opt.k_hi);
      ExponentCertificate cert =
          verify_exponent_certificate(node.provider, ds.A, opt.k_lo, opt.k_hi, box, co);
      ExponentMultiset prescribed;
      for (int j : node.blocks[0]) prescribed.entries.push_back(node.A.entries[j]);
      WeakEquivResult match = weak_equiv(ds.A, prescribed, h_eff, opt.c_max);

      // the certificate earns the factor its own certification: the deepest
      // invertible average conjugates it onto the constant model with the
      // descended exponents and no nilpotent part (the torsion action is
      // blind to nilpotent contributions, so they stay out of the model and
      // the distance to the measured connection is reported instead)
      const LevelRecord* top = nullptr;
      for (const auto& rec : cert.levels)
        if (rec.invertible) top = &rec;
      LogNorm model_residual = LogNorm::neg_inf();
      DiffModule fm = [&]() -> DiffModule {
        if (!cert.valid() || top == nullptr) return DiffModule::general(std::move(node.theta), mo);
        const int rloc = static_cast<int>(ds.A.entries.size());
        StandardForm sf;
        sf.p = p;
        sf.nvars = n;
        sf.rank = rloc;
        sf.lambda = ds.A.entries;
        sf.nilpotent.assign(
            static_cast<size_t>(n),
            Mat<PadicScalar>::from_rows(std::vector<std::vector<PadicScalar>>(
                static_cast<size_t>(rloc),
                std::vector<PadicScalar>(static_cast<size_t>(rloc), PadicScalar::zero(p)))));
        MatInverse<PadicScalar> sinv = invert_unit_matrix(top->s, box, W, co.target_rel);
        Certification fc;
        fc.standard = sf;
        fc.twist = sinv.inverse;
        fc.box = box;
        DiffModule certified =
            DiffModule::with_certification(std::move(node.theta), std::move(fc), mo);
        DiffModule model =
            DiffModule::from_standard_form(sf, box, mo).apply_twist(sinv.inverse, box, mo).module;
        for (int i = 0; i < n; ++i)
          model_residual = std::max(
              model_residual,
              mat_sup_lognorm(certified.theta()[i] - model.theta()[i], box).upper);
        return certified;
      }();
      out.factors.push_back({node.orig[0], node.carrier, std::move(fm), std::move(cert), match,
                             model_residual});
      return;
    }

    // peel the first block off the rest
    DiffModule lm = DiffModule::general(node.theta, mo);
    const std::vector<int>& B = node.blocks[0];
    ProjectorReport rep = projector_sequence(lm, node.provider, node.A, B, opt.k_lo,
                                             opt.k_hi, box, opt.projector);
    const int r = lm.rank();
    const int rb = static_cast<int>(B.size());
    std::vector<int> C;
    for (const auto& blk : node.blocks)
      if (&blk != &node.blocks[0]) C.insert(C.end(), blk.begin(), blk.end());

    LogNorm ledger = LogNorm::neg_inf();
    const Mat<PSeries> id = mat_identity(r, one_series(p, n));
    auto cb = projected_columns(rep.limit, B, box, W, co.target_rel, ledger);
    auto cc = projected_columns(id - rep.limit, C, box, W, co.target_rel, ledger);
    out.projectors.push_back(std::move(rep));
    std::vector<std::vector<PSeries>> all = cb;
    all.insert(all.end(), cc.begin(), cc.end());
    Mat<PSeries> P = from_columns(all);
    MatInverse<PadicScalar> pinv = invert_unit_matrix(P, box, W, co.target_rel);

    std::vector<Mat<PSeries>> theta_new;
    for (int i = 0; i < n; ++i)
      theta_new.push_back(
          restricted(pinv.inverse * (node.theta[i] * P + dlog(P, i)), W, box, ledger));

    // local column order after the change of basis: B entries then C entries
    auto sub_node = [&](int lo, const std::vector<int>& local,
                        std::vector<std::vector<int>> sub_blocks,
                        std::vector<std::vector<int>> sub_orig) {
      SplitNode s;
      for (int j : local) s.A.entries.push_back(node.A.entries[j]);
      s.blocks = std::move(sub_blocks);
      s.orig = std::move(sub_orig);
      std::vector<int> rows_all, cols_sel;
      // the carrier maps local columns back to the ORIGINAL coordinates, so
      // its row count is the outer rank, not the rank at this node
      for (int i = 0; i < node.carrier.rows(); ++i) rows_all.push_back(i);
      for (int i = 0; i < static_cast<int>(local.size()); ++i) cols_sel.push_back(lo + i);
      LogNorm carrier_clip = LogNorm::neg_inf();
      s.carrier = restricted(node.carrier * P, W, box, carrier_clip)
                      .submatrix(rows_all, cols_sel);
      std::vector<int> idx = cols_sel;
      for (int i = 0; i < n; ++i) s.theta.push_back(theta_new[i].submatrix(idx, idx));
      s.provider = block_provider(node.provider, P, pinv.inverse, lo,
                                  static_cast<int>(local.size()), W, box, co.prec);
      return s;
    };

    // the peeled block becomes a leaf node; the rest keeps its block structure
    std::vector<std::vector<int>> b_blocks{std::vector<int>(B.size())};
    for (size_t i = 0; i < B.size(); ++i) b_blocks[0][static_cast<size_t>(i)] = static_cast<int>(i);
    process(sub_node(0, B, std::move(b_blocks), {node.orig[0]}));

    std::vector<std::vector<int>> c_blocks;
    std::vector<std::vector<int>> c_orig(node.orig.begin() + 1, node.orig.end());
    {
      // re-index the remaining blocks against the C column order
      std::map<int, int> local_of;
      for (size_t i = 0; i < C.size(); ++i) local_of[C[static_cast<size_t>(i)]] = static_cast<int>(i);
      for (size_t bi = 1; bi < node.blocks.size(); ++bi) {
        std::vector<int> blk;
        for (int j : node.blocks[bi]) blk.push_back(local_of.at(j));
        c_blocks.push_back(std::move(blk));
      }
    }
    process(sub_node(rb, C, std::move(c_blocks), std::move(c_orig)));
  };

  SplitNode root;
  root.A = A;
  root.blocks = blocks;
  root.orig = blocks;
  root.carrier = mat_identity(m, one_series(p, n));
  root.theta = mod.theta();
  root.provider = certified_provider(mod, mo);
  process(std::move(root));

  // reorder factors to the prescribed block order (the peeling recursion
  // already emits them that way) and assemble the full basis
  std::vector<std::vector<PSeries>> cols;
  for (const auto& f : out.factors)
    for (int c = 0; c < f.basis.cols(); ++c) {
      std::vector<PSeries> col;
      for (int rr = 0; rr < f.basis.rows(); ++rr) col.push_back(f.basis.at(rr, c));
      cols.push_back(std::move(col));
    }
  out.assembled = from_columns(cols);
  auto uc = mat_det(out.assembled).is_unit_on_box(box);
  if (!uc.unit) fail("NotUnit", "the assembled factor basis is not complete");
  out.assembled_det_gap = uc.gap;
  return out;
}

// ---------------------------------------------------------------------------
// Constant basis

ConstantBasisResult constant_basis(const DiffModule& mod, const ExponentEntry& lambda,
                                   int k0, int k_max, const LogRadiusBox& box,
                                   const ConstantBasisOptions& opt) {
  if (k0 < 1 || k_max < k0) fail("Dimension", "bad level range");
  const long p = mod.p();
  const int n = mod.nvars();
  const int m = mod.rank();
  if (lambda.n() != n) fail("Dimension", "exponent arity does not match the module");
  const Window W = work_window_or_default(opt.cert, n);
  ModuleOptions mo;
  mo.work_window = W;
  mo.target_rel = opt.cert.target_rel;
  mo.prec = opt.cert.prec;
  GammaProvider base = certified_provider(mod, mo);
  const int prec = opt.cert.prec;

  // untwist by the character of lambda: E'(a) = E(a) zeta_a^{-<a, lambda>}
  GammaProvider prov = [base, lambda, p, n, prec](int k) -> GammaMatrix {
    GammaMatrix e = base(k);
    std::vector<Int> res;
    for (int i = 0; i < n; ++i) res.push_back(lambda.coords[i].residue(k));
    for (auto& [a, ea] : e.table) {
      Int dot = 0;
      for (int i = 0; i < n; ++i) dot += Int(a[i]) * res[i];
      const CycScalar w = CycScalar::root_power(p, k, Int(-dot), prec);
      ea = ea.map([&](const CSeries& s) {
        return s.map_coeffs([&](const CycScalar& c) { return c * w; });
      });
    }
    return e;
  };

  ExponentMultiset A0;
  for (int j = 0; j < m; ++j) A0.entries.push_back(zero_entry(p, n));
  std::vector<Mat<PSeries>> S;
  for (int k = k0; k <= k_max; ++k) {
    GammaMatrix e = prov(k);
    check_table(e, k);
    S.push_back(compute_S(e, A0).s);
  }

  ConstantBasisResult out;
  LogNorm ledger = LogNorm::neg_inf();
  const Mat<PSeries> id = mat_identity(m, one_series(p, n));
  const PadicScalar sone = PadicScalar::from_int(p, 1, kRootPrec);
  Mat<PadicScalar> R = mat_identity(m, sone);
  for (int k = k0; k < k_max; ++k) {
    const size_t i = static_cast<size_t>(k - k0);
    auto inv = invert_unit_matrix(S[i], box, W, opt.cert.target_rel);
    Mat<PSeries> T =
        restricted(to_series_matrix(R, n) * inv.inverse * S[i + 1], W, box, ledger);
    Mat<PadicScalar> Rn = constant_term(T, p);
    Mat<PadicScalar> Rni = invert_constant(Rn, p);
    LogNorm dk = std::max(
        ledger, mat_sup_lognorm(T * to_series_matrix(Rni, n) - id, box).upper);
    out.decay.push_back(dk);
    if (!(dk <= LogNorm(Rat(Rat(static_cast<long>(k)) * opt.log_tau))))
      fail("DecayViolation", "normalized averages stopped contracting");
    R = std::move(Rn);
  }

  out.basis = restricted(S.back() * to_series_matrix(invert_constant(R, p), n), W, box, ledger);
  auto binv = invert_unit_matrix(out.basis, box, W, opt.cert.target_rel);
  for (int i = 0; i < n; ++i) {
    Mat<PSeries> th =
        restricted(binv.inverse * (mod.theta()[i] * out.basis + dlog(out.basis, i)), W, box,
                   ledger);
    Mat<PadicScalar> c = constant_term(th, p);
    out.constancy_residual = std::max(
        out.constancy_residual, mat_sup_lognorm(th - to_series_matrix(c, n), box).upper);
    const ExpCoord& li = lambda.coords[static_cast<size_t>(i)];
    const PadicScalar lam =
        li.is_exact() ? PadicScalar::from_rational(p, li.rat(), kRootPrec) : li.padic();
    Mat<PadicScalar> nil =
        c - mat_identity(m, sone).map([&](const PadicScalar& x) { return x * lam; });
    LogNorm worst = LogNorm::neg_inf();
    for (const PadicScalar& ms : principal_minor_sums(nil)) worst = std::max(worst, ms.lognorm_upper());
    out.nilpotency.push_back(worst);
    out.constants.push_back(std::move(c));
  }
  out.converged = true;
  return out;
}

}  // namespace pfuchs
