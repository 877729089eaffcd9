#include "pfuchs/diffmod.hpp"

#include <algorithm>
#include <functional>

namespace pfuchs {

namespace {

constexpr int kFormPrec = 64;  // internal precision for invariant checks

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

std::vector<Rat> zero_radii(int nvars) { return std::vector<Rat>(nvars, Rat(0)); }

bool same_box(const LogRadiusBox& a, const LogRadiusBox& b) {
  return a.lo == b.lo && a.hi == b.hi;
}

Window work_window_or_default(const ModuleOptions& opt, int nvars) {
  return opt.work_window ? *opt.work_window : Window::cube(nvars, -40, 40);
}

// scale a scalar matrix into the series world entry by entry
Mat<PSeries> scale_series_matrix(const Mat<PSeries>& m, const PadicScalar& c) {
  return m.map([&](const PSeries& s) {
    return s.map_coeffs([&](const PadicScalar& x) { return x * c; });
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Series plumbing

CSeries to_cyc_series(const PSeries& f, int level) {
  CSeries r(f.p(), f.nvars(), f.window());
  for (const auto& [e, c] : f.terms()) r.add_term(e, CycScalar::from_scalar(f.p(), level, c));
  return r;
}

CSeries rotate_series(const CSeries& f, const std::vector<Int>& a, int N) {
  if (static_cast<int>(a.size()) != f.nvars())
    fail("Dimension", "rotation tuple arity mismatch");
  CSeries r(f.p(), f.nvars(), f.window());
  if (f.empty()) return r;
  const int level = f.terms().begin()->second.level();
  for (const auto& [e, c] : f.terms()) {
    Int dot = 0;
    for (int i = 0; i < f.nvars(); ++i) dot += a[i] * e[i];
    r.add_term(e, c * CycScalar::root_power(f.p(), level, dot, N));
  }
  return r;
}

CSeries rotate_series(const PSeries& f, int level, const std::vector<Int>& a, int N) {
  return rotate_series(to_cyc_series(f, level), a, N);
}

// ---------------------------------------------------------------------------
// StandardForm

void StandardForm::validate() const {
  if (p < 2) fail("BadStandardForm", "prime not set");
  if (nvars < 1 || rank < 1) fail("Dimension", "standard form needs nvars >= 1 and rank >= 1");
  if (static_cast<int>(lambda.size()) != rank)
    fail("Dimension", "one exponent entry per basis vector required");
  for (const auto& e : lambda) {
    if (e.n() != nvars) fail("Dimension", "exponent entry arity mismatch");
    for (const auto& c : e.coords)
      if (c.p() != p) fail("BadStandardForm", "exponent coordinate prime mismatch");
  }
  if (static_cast<int>(nilpotent.size()) != nvars)
    fail("Dimension", "one nilpotent matrix per direction required");
  for (const auto& s : nilpotent) {
    if (!s.square() || s.rows() != rank)
      fail("Dimension", "nilpotent matrix shape mismatch");
    for (int i = 0; i < rank; ++i)
      for (int j = 0; j < rank; ++j)
        if (s.at(i, j).p() != p) fail("BadStandardForm", "nilpotent entry prime mismatch");
  }

  // nilpotency: S_i^rank vanishes at tracked precision
  for (int i = 0; i < nvars; ++i) {
    Mat<PadicScalar> pw = nilpotent[i];
    for (int r = 1; r < rank; ++r) pw = pw * nilpotent[i];
    for (int a = 0; a < rank; ++a)
      for (int b = 0; b < rank; ++b)
        if (!pw.at(a, b).is_zeroish())
          fail("BadStandardForm", "constant part is not nilpotent in direction " +
                                      std::to_string(i));
  }

  // the full family {Lambda_i, S_j} commutes; this is what makes the
  // normalized shape canonical (semisimple parts are polynomials in the
  // full constants, so a genuine standard form always satisfies it)
  std::vector<Mat<PadicScalar>> lam;
  for (int i = 0; i < nvars; ++i) lam.push_back(lambda_matrix(i, kFormPrec));
  auto check_zero = [&](const Mat<PadicScalar>& m, const char* what) {
    for (int a = 0; a < rank; ++a)
      for (int b = 0; b < rank; ++b)
        if (!m.at(a, b).is_zeroish()) fail("BadStandardForm", what);
  };
  for (int i = 0; i < nvars; ++i)
    for (int j = 0; j < nvars; ++j) {
      if (i < j) check_zero(commutator(nilpotent[i], nilpotent[j]),
                            "nilpotent parts do not commute");
      check_zero(commutator(lam[i], nilpotent[j]),
                 "diagonal and nilpotent parts do not commute");
    }
}

Mat<PadicScalar> StandardForm::lambda_matrix(int i, int N) const {
  if (i < 0 || i >= nvars) fail("Dimension", "direction out of range");
  std::vector<PadicScalar> d;
  for (const auto& e : lambda) {
    const ExpCoord& c = e.coords[static_cast<size_t>(i)];
    d.push_back(c.is_exact() ? PadicScalar::from_rational(p, c.rat(), N) : c.padic());
  }
  return mat_diag(d);
}

ExponentMultiset StandardForm::exponent() const {
  ExponentMultiset ms{lambda};
  ms.validate();
  return ms;
}

// ---------------------------------------------------------------------------
// DiffModule

void DiffModule::finish_construction(const ModuleOptions& opt, const LogRadiusBox* box) {
  if (theta_.empty()) fail("Dimension", "a module needs at least one direction");
  nvars_ = static_cast<int>(theta_.size());
  for (const auto& th : theta_)
    if (!th.square() || th.empty() || th.rows() != theta_.front().rows())
      fail("Dimension", "connection matrices must be square of equal rank");
  rank_ = theta_.front().rows();
  p_ = theta_.front().at(0, 0).p();
  for (const auto& th : theta_)
    for (int i = 0; i < rank_; ++i)
      for (int j = 0; j < rank_; ++j)
        if (th.at(i, j).p() != p_ || th.at(i, j).nvars() != nvars_)
          fail("Dimension", "connection entry prime or arity mismatch");

  // integrability: the log-derivations commute, so their matrices must
  // satisfy t_i d(Theta_j) - t_j d(Theta_i) + [Theta_i, Theta_j] = 0
  integ_ = LogNorm::neg_inf();
  for (int i = 0; i < nvars_; ++i)
    for (int j = i + 1; j < nvars_; ++j) {
      Mat<PSeries> r =
          dlog(theta_[j], i) - dlog(theta_[i], j) + commutator(theta_[i], theta_[j]);
      LogNorm n = box ? mat_sup_lognorm(r, *box).upper
                      : mat_gauss_lognorm(r, zero_radii(nvars_)).upper;
      integ_ = std::max(integ_, n);
    }
  if (integ_ > LogNorm(opt.integrability_tol))
    fail("NotIntegrable", "integrability defect above tolerance");
}

DiffModule DiffModule::general(std::vector<Mat<PSeries>> theta, const ModuleOptions& opt) {
  DiffModule m;
  m.theta_ = std::move(theta);
  m.finish_construction(opt, nullptr);
  return m;
}

DiffModule DiffModule::from_standard_form(const StandardForm& sf, const LogRadiusBox& box,
                                          const ModuleOptions& opt) {
  sf.validate();
  if (box.nvars() != sf.nvars) fail("Dimension", "box arity mismatch");
  DiffModule m;
  for (int i = 0; i < sf.nvars; ++i)
    m.theta_.push_back(
        to_series_matrix(sf.lambda_matrix(i, opt.prec) + sf.nilpotent[i], sf.nvars));
  m.finish_construction(opt, &box);
  Certification cert;
  cert.standard = sf;
  cert.twist = mat_identity(sf.rank, one_series(sf.p, sf.nvars));
  cert.box = box;
  m.cert_ = std::move(cert);
  return m;
}

DiffModule DiffModule::with_certification(std::vector<Mat<PSeries>> theta, Certification cert,
                                          const ModuleOptions& opt) {
  cert.standard.validate();
  if (!cert.twist.square() || cert.twist.rows() != cert.standard.rank)
    fail("Dimension", "twist shape does not match the standard form");
  if (cert.box.nvars() != cert.standard.nvars) fail("Dimension", "box arity mismatch");
  DiffModule m;
  m.theta_ = std::move(theta);
  m.finish_construction(opt, &cert.box);
  if (m.p_ != cert.standard.p || m.nvars_ != cert.standard.nvars ||
      m.rank_ != cert.standard.rank)
    fail("Dimension", "certification does not match the connection shape");
  m.cert_ = std::move(cert);
  return m;
}

const Certification& DiffModule::certification() const {
  if (!cert_) fail("Uncertified", "module carries no certified standard form");
  return *cert_;
}

DiffModule::TwistResult DiffModule::apply_twist(const Mat<PSeries>& u, const LogRadiusBox& box,
                                                const ModuleOptions& opt) const {
  if (!u.square() || u.rows() != rank_) fail("Dimension", "twist shape mismatch");
  const Window w = work_window_or_default(opt, nvars_);
  auto inv = invert_unit_matrix(u, box, w, opt.target_rel);

  const ClipPolicy clip{true, box};
  LogNorm ledger = inv.residual;
  DiffModule m;
  for (int i = 0; i < nvars_; ++i) {
    Mat<PSeries> raw = inv.inverse * theta_[i] * u + inv.inverse * dlog(u, i);
    auto [cut, rep] = mat_restrict(raw, w, clip);
    ledger = std::max(ledger, rep.max_discarded);
    m.theta_.push_back(std::move(cut));
  }
  m.finish_construction(opt, &box);

  if (cert_) {
    Certification cert;
    cert.standard = cert_->standard;
    auto [tw, rep] = mat_restrict(cert_->twist * u, w, clip);
    ledger = std::max(ledger, rep.max_discarded);
    cert.twist = std::move(tw);
    if (!mat_det(cert.twist).is_unit_on_box(box).unit)
      fail("NotUnit", "composed twist determinant is not a unit on the box");
    cert.box = box;
    m.cert_ = std::move(cert);
  }
  return TwistResult{std::move(m), ledger};
}

DiffModule direct_sum(const DiffModule& a, const DiffModule& b, const ModuleOptions& opt) {
  if (a.p() != b.p() || a.nvars() != b.nvars())
    fail("Dimension", "direct sum needs matching prime and arity");
  DiffModule m;
  for (int i = 0; i < a.nvars(); ++i)
    m.theta_.push_back(block_diag(a.theta()[i], b.theta()[i]));
  const LogRadiusBox* box = nullptr;
  std::optional<Certification> cert;
  if (a.certified() && b.certified() &&
      same_box(a.certification().box, b.certification().box)) {
    const auto& ca = a.certification();
    const auto& cb = b.certification();
    Certification c;
    c.standard.p = a.p();
    c.standard.nvars = a.nvars();
    c.standard.rank = a.rank() + b.rank();
    c.standard.lambda = ca.standard.lambda;
    c.standard.lambda.insert(c.standard.lambda.end(), cb.standard.lambda.begin(),
                             cb.standard.lambda.end());
    for (int i = 0; i < a.nvars(); ++i)
      c.standard.nilpotent.push_back(
          block_diag(ca.standard.nilpotent[i], cb.standard.nilpotent[i]));
    c.standard.validate();
    c.twist = block_diag(ca.twist, cb.twist);
    c.box = ca.box;
    cert = std::move(c);
    box = &cert->box;
  }
  m.finish_construction(opt, box);
  m.cert_ = std::move(cert);
  return m;
}

DiffModule tensor(const DiffModule& a, const DiffModule& b, const ModuleOptions& opt) {
  if (a.p() != b.p() || a.nvars() != b.nvars())
    fail("Dimension", "tensor product needs matching prime and arity");
  const Mat<PSeries> ia = mat_identity(a.rank(), one_series(a.p(), a.nvars()));
  const Mat<PSeries> ib = mat_identity(b.rank(), one_series(b.p(), b.nvars()));
  DiffModule m;
  for (int i = 0; i < a.nvars(); ++i)
    m.theta_.push_back(kron(a.theta()[i], ib) + kron(ia, b.theta()[i]));
  const LogRadiusBox* box = nullptr;
  std::optional<Certification> cert;
  if (a.certified() && b.certified() &&
      same_box(a.certification().box, b.certification().box)) {
    const auto& ca = a.certification();
    const auto& cb = b.certification();
    const Mat<PadicScalar> sia = mat_identity(a.rank(), PadicScalar::from_int(a.p(), 1, kIntPrec));
    const Mat<PadicScalar> sib = mat_identity(b.rank(), PadicScalar::from_int(b.p(), 1, kIntPrec));
    Certification c;
    c.standard.p = a.p();
    c.standard.nvars = a.nvars();
    c.standard.rank = a.rank() * b.rank();
    for (const auto& ea : ca.standard.lambda)
      for (const auto& eb : cb.standard.lambda) c.standard.lambda.push_back(entry_add(ea, eb));
    for (int i = 0; i < a.nvars(); ++i)
      c.standard.nilpotent.push_back(kron(ca.standard.nilpotent[i], sib) +
                                     kron(sia, cb.standard.nilpotent[i]));
    c.standard.validate();
    c.twist = kron(ca.twist, cb.twist);
    c.box = ca.box;
    cert = std::move(c);
    box = &cert->box;
  }
  m.finish_construction(opt, box);
  m.cert_ = std::move(cert);
  return m;
}

DiffModule dual(const DiffModule& a, const ModuleOptions& opt) {
  DiffModule m;
  for (int i = 0; i < a.nvars(); ++i) m.theta_.push_back(-a.theta()[i].transpose());
  const LogRadiusBox* box = nullptr;
  std::optional<Certification> cert;
  if (a.certified()) {
    const auto& ca = a.certification();
    Certification c;
    c.standard.p = a.p();
    c.standard.nvars = a.nvars();
    c.standard.rank = a.rank();
    for (const auto& e : ca.standard.lambda) c.standard.lambda.push_back(entry_negate(e));
    for (int i = 0; i < a.nvars(); ++i)
      c.standard.nilpotent.push_back(-ca.standard.nilpotent[i].transpose());
    c.standard.validate();
    // the dual basis transforms by the inverse transpose of the twist
    const Window w = work_window_or_default(opt, a.nvars());
    c.twist = invert_unit_matrix(ca.twist.transpose(), ca.box, w, opt.target_rel).inverse;
    c.box = ca.box;
    cert = std::move(c);
    box = &cert->box;
  }
  m.finish_construction(opt, box);
  m.cert_ = std::move(cert);
  return m;
}

// ---------------------------------------------------------------------------
// GammaMatrix

const Mat<CSeries>& GammaMatrix::at(const std::vector<Int>& a) const {
  if (static_cast<int>(a.size()) != nvars) fail("Dimension", "action tuple arity mismatch");
  const Int order_k = pow_p(p, level);
  std::vector<long> key(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    Int r = a[i] % order_k;
    if (r < 0) r += order_k;
    key[i] = r.get_si();
  }
  return at_raw(key);
}

const Mat<CSeries>& GammaMatrix::at_raw(const std::vector<long>& key) const {
  auto it = table.find(key);
  if (it == table.end()) fail("BadGammaTable", "missing action tuple");
  return it->second;
}

void GammaMatrix::validate() const {
  Int expect = 1;
  for (int i = 0; i < nvars; ++i) expect *= pow_p(p, level);
  if (Int(static_cast<long>(table.size())) != expect)
    fail("BadGammaTable", "action table is incomplete");
  const Int order_k = pow_p(p, level);
  for (const auto& [key, m] : table) {
    if (static_cast<int>(key.size()) != nvars) fail("BadGammaTable", "tuple arity mismatch");
    for (long a : key)
      if (a < 0 || Int(a) >= order_k) fail("BadGammaTable", "tuple entry out of range");
    if (!m.square() || m.rows() != rank) fail("BadGammaTable", "entry shape mismatch");
  }
  // E(identity) = I, up to the declared construction slack
  const Mat<CSeries>& e0 = at_raw(std::vector<long>(static_cast<size_t>(nvars), 0));
  const CSeries* sample = nullptr;
  for (const auto& x : e0.raw())
    if (!x.empty()) sample = &x;
  if (sample == nullptr) fail("BadGammaTable", "identity action is zero");
  const CycScalar cone = CoeffTraits<CycScalar>::one_like(sample->terms().begin()->second);
  const CSeries one = CSeries::monomial(cone, ExpVec(static_cast<size_t>(nvars), 0));
  Mat<CSeries> d = e0 - mat_identity(rank, one);
  LogNorm slack = std::max(tail_bound, twist_residual);
  LogNorm n = mat_sup_lognorm(d, box).upper;
  if (!mat_is_zeroish(d) && n > slack)
    fail("BadGammaTable", "identity tuple does not act as the identity");
}

// ---------------------------------------------------------------------------
// Exact action

namespace {

// iterate over all tuples in [0, p^k)^n
class TupleCounter {
 public:
  TupleCounter(long bound, int n) : bound_(bound), key_(static_cast<size_t>(n), 0) {}
  const std::vector<long>& key() const { return key_; }
  bool advance() {
    for (size_t i = key_.size(); i-- > 0;) {
      if (++key_[i] < bound_) return true;
      key_[i] = 0;
    }
    return false;
  }

 private:
  long bound_;
  std::vector<long> key_;
};

}  // namespace

GammaMatrix gamma_action_exact(const DiffModule& mod, int k, const ModuleOptions& opt) {
  const Certification& cert = mod.certification();
  if (k < 1) fail("Dimension", "level must be positive");
  const long p = mod.p();
  const int n = mod.nvars();
  const int m = mod.rank();
  const int N = opt.prec;
  const StandardForm& sf = cert.standard;

  // residues of every exponent coordinate mod p^k (errors out when a
  // truncated coordinate is not known that deep)
  std::vector<std::vector<Int>> res(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i)
      res[static_cast<size_t>(j)].push_back(sf.lambda[static_cast<size_t>(j)].coords[static_cast<size_t>(i)].residue(k));

  // twist ingredients; the identity-twist case stays exact with no inverse
  const Window w = work_window_or_default(opt, n);
  auto inv = invert_unit_matrix(cert.twist, cert.box, w, opt.target_rel);
  Mat<CSeries> uinv_c = to_cyc_matrix(inv.inverse, k);
  LogNorm ledger = inv.residual;

  GammaMatrix out;
  out.p = p;
  out.nvars = n;
  out.level = k;
  out.rank = m;
  out.box = cert.box;
  out.exact = true;

  const long pk = pow_p(p, k).get_si();
  const ClipPolicy clip{true, cert.box};
  TupleCounter ctr(pk, n);
  do {
    const std::vector<long>& a = ctr.key();
    // diagonal constant part: basis vector j scales by zeta^{<a, lambda_j>}
    std::vector<CSeries> diag;
    for (int j = 0; j < m; ++j) {
      Int e = 0;
      for (int i = 0; i < n; ++i) e += Int(a[i]) * res[static_cast<size_t>(j)][static_cast<size_t>(i)];
      diag.push_back(CSeries::monomial(CycScalar::root_power(p, k, e, N),
                                       ExpVec(static_cast<size_t>(n), 0)));
    }
    Mat<CSeries> e0 = mat_diag(diag);

    std::vector<Int> ai(a.begin(), a.end());
    Mat<CSeries> urot =
        cert.twist.map([&](const PSeries& s) { return rotate_series(s, k, ai, N); });
    auto [ek, rep] = mat_restrict(uinv_c * e0 * urot, w, clip);
    ledger = std::max(ledger, rep.max_discarded);
    out.table.emplace(a, std::move(ek));
  } while (ctr.advance());

  out.twist_residual = ledger;
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Truncated action

GammaMatrix gamma_action_series(const DiffModule& mod, int k, int order,
                                const ModuleOptions& opt) {
  if (k < 1) fail("Dimension", "level must be positive");
  if (order < 0) fail("Dimension", "order must be nonnegative");
  const long p = mod.p();
  const int n = mod.nvars();
  const int m = mod.rank();
  const int N = opt.prec;
  const LogRadiusBox box =
      mod.certified() ? mod.certification().box : LogRadiusBox::point(zero_radii(n));
  const Window w = work_window_or_default(opt, n);
  const ClipPolicy clip{true, box};

  // layered Taylor coefficients: M_alpha is the matrix of binom(tD, alpha)
  // on the basis, built by
  //   M_{alpha + e_i} = (Theta_i M + t_i d(M) - alpha_i M) / (alpha_i + 1)
  std::map<std::vector<int>, Mat<PSeries>> layers;
  layers.emplace(std::vector<int>(static_cast<size_t>(n), 0),
                 mat_identity(m, one_series(p, n)));
  LogNorm clip_ledger = LogNorm::neg_inf();
  Rat max_layer_norm(0);  // |M_0| = 1
  for (int total = 1; total <= order; ++total) {
    std::map<std::vector<int>, Mat<PSeries>> next;
    for (const auto& [alpha, mat] : layers) {
      int weight = 0;
      for (int x : alpha) weight += x;
      if (weight != total - 1) {
        next.emplace(alpha, mat);
        continue;
      }
      next.emplace(alpha, mat);
      for (int i = 0; i < n; ++i) {
        std::vector<int> up = alpha;
        up[static_cast<size_t>(i)] += 1;
        if (next.count(up) || layers.count(up)) continue;
        const long ai = alpha[static_cast<size_t>(i)];
        Mat<PSeries> grown = mod.theta()[i] * mat + dlog(mat, i);
        if (ai != 0) {
          const PadicScalar shift = PadicScalar::from_int(p, -ai, N);
          grown = grown + scale_series_matrix(mat, shift);
        }
        const PadicScalar div = PadicScalar::from_int(p, ai + 1, N).invert();
        auto [cut, rep] = mat_restrict(scale_series_matrix(grown, div), w, clip);
        clip_ledger = std::max(clip_ledger, rep.max_discarded);
        LogNorm nb = mat_sup_lognorm(cut, box).upper;
        if (!nb.is_neg_inf()) max_layer_norm = std::max(max_layer_norm, nb.value());
        next.emplace(std::move(up), std::move(cut));
      }
    }
    layers = std::move(next);
  }

  // cyclotomic copies of the layers, shared across all tuples
  std::map<std::vector<int>, Mat<CSeries>> cyc_layers;
  for (const auto& [alpha, mat] : layers) cyc_layers.emplace(alpha, to_cyc_matrix(mat, k));

  GammaMatrix out;
  out.p = p;
  out.nvars = n;
  out.level = k;
  out.rank = m;
  out.box = box;
  out.exact = false;
  out.order = order;

  const long pk = pow_p(p, k).get_si();
  const CycScalar cyc_one = CycScalar::one(p, k, N);
  TupleCounter ctr(pk, n);
  do {
    const std::vector<long>& a = ctr.key();
    // (zeta^{a_i} - 1) powers per direction
    std::vector<std::vector<CycScalar>> pw(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      CycScalar z1 = CycScalar::root_power(p, k, a[i], N) - cyc_one;
      pw[static_cast<size_t>(i)].push_back(cyc_one);
      for (int r = 1; r <= order; ++r)
        pw[static_cast<size_t>(i)].push_back(pw[static_cast<size_t>(i)].back() * z1);
    }
    std::optional<Mat<CSeries>> acc;
    for (const auto& [alpha, mat] : cyc_layers) {
      CycScalar c = cyc_one;
      for (int i = 0; i < n; ++i) c = c * pw[static_cast<size_t>(i)][static_cast<size_t>(alpha[static_cast<size_t>(i)])];
      if (c.is_exact_zero()) continue;
      Mat<CSeries> term = mat.map([&](const CSeries& s) {
        return s.map_coeffs([&](const CycScalar& x) { return x * c; });
      });
      acc = acc ? *acc + term : std::move(term);
    }
    out.table.emplace(a, std::move(*acc));
  } while (ctr.advance());

  // heuristic tail: one more factor of |zeta - 1| <= p^{-1/phi(p^k)} beyond
  // the deepest computed layer, whose norms we measured
  const Rat lz = Rat(-1) / Rat(Int((p - 1) * pow_p(p, k - 1)).get_si());
  out.tail_bound =
      std::max(LogNorm(max_layer_norm + Rat(order + 1) * lz), clip_ledger);
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Action laws

ActionLawReport verify_action_laws(const GammaMatrix& e, int prec) {
  e.validate();
  ActionLawReport rep;
  const Int order_k = pow_p(e.p, e.level);
  const long pk = order_k.get_si();

  // cocycle: E(a+b) = E(a) * (a^* E(b)) for all pairs
  for (const auto& [a, ea] : e.table) {
    std::vector<Int> ai(a.begin(), a.end());
    for (const auto& [b, eb] : e.table) {
      std::vector<long> ab(a.size());
      for (size_t i = 0; i < a.size(); ++i) ab[i] = (a[i] + b[i]) % pk;
      Mat<CSeries> rot =
          eb.map([&](const CSeries& s) { return rotate_series(s, ai, prec); });
      Mat<CSeries> d = e.at_raw(ab) - ea * rot;
      rep.group_law_residual =
          std::max(rep.group_law_residual, mat_sup_lognorm(d, e.box).upper);
    }
  }

  // Galois equivariance: sigma_c fixes t and sends zeta to zeta^c, so
  // applying it coefficientwise to E(a) must give E(c a)
  for (long c = 2; c < pk; ++c) {
    if (c % e.p == 0) continue;
    for (const auto& [a, ea] : e.table) {
      std::vector<long> ca(a.size());
      for (size_t i = 0; i < a.size(); ++i) ca[i] = (a[i] * c) % pk;
      Mat<CSeries> g = ea.map([&](const CSeries& s) {
        return s.map_coeffs([&](const CycScalar& x) { return x.galois(c); });
      });
      Mat<CSeries> d = e.at_raw(ca) - g;
      rep.galois_residual = std::max(rep.galois_residual, mat_sup_lognorm(d, e.box).upper);
    }
  }

  // least l >= 0 with sup |E(a)| <= l * k
  Rat l(0);
  for (const auto& [a, ea] : e.table) {
    LogNorm n = mat_sup_lognorm(ea, e.box).upper;
    if (!n.is_neg_inf() && n.value() > 0) l = std::max(l, Rat(n.value() / Rat(e.level)));
  }
  rep.growth_l = l;
  return rep;
}

}  // namespace pfuchs
