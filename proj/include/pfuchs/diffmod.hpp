#pragma once

// Differential modules over p-adic Laurent-series rings at desk scale:
// connection matrices for the log-derivations t_i d/dt_i, certified
// standard forms (constant diagonal-plus-nilpotent connections reached by
// a unit gauge twist), and the action of the p-power torsion group
// (t_1,...,t_n) -> (zeta_1 t_1, ..., zeta_n t_n) on a fixed basis.
//
// Two action paths exist.  For certified modules the action matrix is
// exact: on a standard form the group acts by zeta^Lambda alone -- the
// nilpotent part drops out because the p-adic logarithm of a p-power root
// of unity is zero -- and a gauge twist U conjugates the constant action
// into U(t)^{-1} E(zeta) U(zeta t).  For general modules only the Taylor
// partial sum sum_{|alpha| <= order} (zeta-1)^alpha binom(tD, alpha) is
// available, flagged as truncated and carrying a heuristic tail estimate.

#include "pfuchs/expcalc.hpp"
#include "pfuchs/matrix.hpp"

#include <map>
#include <optional>
#include <vector>

namespace pfuchs {

using PSeries = Series<PadicScalar>;
using CSeries = Series<CycScalar>;

// ---------------------------------------------------------------------------
// Series plumbing between the scalar towers

// reinterpret p-adic coefficients as constants of the level-k cyclotomic ring
CSeries to_cyc_series(const PSeries& f, int level);

// the substitution t_i -> zeta^{a_i} t_i at the given level: exponents are
// unchanged and the coefficient of t^e picks up zeta^{<a,e>}
CSeries rotate_series(const CSeries& f, const std::vector<Int>& a, int N);
CSeries rotate_series(const PSeries& f, int level, const std::vector<Int>& a, int N);

// ---------------------------------------------------------------------------
// Standard forms

// A constant connection in normalized shape: direction i acts by
// Lambda_i + S_i with Lambda_i diagonal (the exponent entries) and S_i
// nilpotent, all matrices commuting across directions and parts.
struct StandardForm {
  long p = 0;
  int nvars = 0;
  int rank = 0;
  // lambda[j] = exponent entry of basis vector j (one coordinate per
  // direction); every coordinate is a p-adic integer by construction
  std::vector<ExponentEntry> lambda;
  // nilpotent[i] = S_i
  std::vector<Mat<PadicScalar>> nilpotent;

  // shape, nilpotency (S_i^rank tracked-zero), and commutation of the full
  // family {Lambda_i, S_j}; throws BadStandardForm / Dimension
  void validate() const;

  // Lambda_i as a diagonal scalar matrix at working precision N
  Mat<PadicScalar> lambda_matrix(int i, int N) const;
  // the exponent multiset {lambda[0], ..., lambda[rank-1]}
  ExponentMultiset exponent() const;
};

// ---------------------------------------------------------------------------
// Differential modules

struct Certification {
  StandardForm standard;
  Mat<PSeries> twist;  // basis change U: current basis = standard basis * U
  LogRadiusBox box;    // where det(U) is certified to be a unit
};

struct ModuleOptions {
  Rat integrability_tol = Rat(-24);  // reject modules with a worse residual
  std::optional<Window> work_window; // frame for twist inverses (default: wide cube)
  Rat target_rel = Rat(-31);         // residual target for series inversions
  int prec = 48;                     // scalar working precision
};

class DiffModule {
 public:
  // a bare connection: n matrices for t_i d/dt_i on the implicit basis
  static DiffModule general(std::vector<Mat<PSeries>> theta, const ModuleOptions& opt = {});
  // the constant connection Theta_i = Lambda_i + S_i of a standard form,
  // certified with the identity twist
  static DiffModule from_standard_form(const StandardForm& sf, const LogRadiusBox& box,
                                       const ModuleOptions& opt = {});
  // a measured connection adopting an externally earned certification (for
  // example from a transformation-law certificate): shapes are validated
  // and integrability is re-measured, but the coherence of the twist with
  // the connection is the caller's evidence, not re-derived here
  static DiffModule with_certification(std::vector<Mat<PSeries>> theta, Certification cert,
                                       const ModuleOptions& opt = {});

  long p() const { return p_; }
  int nvars() const { return nvars_; }
  int rank() const { return rank_; }
  const std::vector<Mat<PSeries>>& theta() const { return theta_; }
  bool certified() const { return cert_.has_value(); }
  const Certification& certification() const;  // error Uncertified when absent
  // integrability defect max_{i<j} |t_i d(Theta_j) - t_j d(Theta_i) + [Theta_i, Theta_j]|
  // measured at construction (on the certified box, or at radius 0)
  LogNorm integrability_residual() const { return integ_; }

  // gauge transform by a unit matrix U: Theta'_i = U^{-1} Theta_i U + U^{-1} t_i d(U).
  // Certified provenance composes (new twist = old twist * U); the returned
  // inverse_residual is the measured defect of the computed U^{-1}.
  struct TwistResult;  // defined below, once this class is complete
  TwistResult apply_twist(const Mat<PSeries>& u, const LogRadiusBox& box,
                          const ModuleOptions& opt = {}) const;

 private:
  DiffModule() = default;
  void finish_construction(const ModuleOptions& opt, const LogRadiusBox* box);

  long p_ = 0;
  int nvars_ = 0;
  int rank_ = 0;
  std::vector<Mat<PSeries>> theta_;
  std::optional<Certification> cert_;
  LogNorm integ_ = LogNorm::neg_inf();

  friend DiffModule direct_sum(const DiffModule&, const DiffModule&, const ModuleOptions&);
  friend DiffModule tensor(const DiffModule&, const DiffModule&, const ModuleOptions&);
  friend DiffModule dual(const DiffModule&, const ModuleOptions&);
};

struct DiffModule::TwistResult {
  DiffModule module;
  LogNorm inverse_residual;
};

// Theta block-diagonal / Kronecker-sum / negated-transpose constructions;
// certification propagates when every input is certified over the same box
// (for dual the twist inverts, so its defect obeys opt.target_rel).
DiffModule direct_sum(const DiffModule& a, const DiffModule& b, const ModuleOptions& opt = {});
DiffModule tensor(const DiffModule& a, const DiffModule& b, const ModuleOptions& opt = {});
DiffModule dual(const DiffModule& a, const ModuleOptions& opt = {});

// ---------------------------------------------------------------------------
// The torsion action

struct GammaMatrix {
  long p = 0;
  int nvars = 0;
  int level = 0;  // k: the acting roots have order p^k
  int rank = 0;
  LogRadiusBox box;  // norms are measured here
  bool exact = true; // false for Taylor partial sums
  int order = -1;                            // truncation order when !exact
  LogNorm tail_bound = LogNorm::neg_inf();   // heuristic tail estimate when !exact
  LogNorm twist_residual = LogNorm::neg_inf();  // defect of the twist inverse used

  // key: exponent tuple a in [0, p^k)^n of a fixed primitive p^k-th root
  std::map<std::vector<long>, Mat<CSeries>> table;

  // lookup with reduction mod p^k
  const Mat<CSeries>& at(const std::vector<Int>& a) const;
  const Mat<CSeries>& at_raw(const std::vector<long>& key) const;
  // completeness and E(identity) = I; throws BadGammaTable
  void validate() const;
};

// Exact action of the level-k torsion group on a certified module:
// E(zeta) = prod_i zeta_i^{Lambda_i} on the standard basis, conjugated by
// the twist, E'(zeta) = U(t)^{-1} E(zeta) U(zeta t).  Requires every
// exponent coordinate to be known modulo p^k.
GammaMatrix gamma_action_exact(const DiffModule& mod, int k, const ModuleOptions& opt = {});

// Taylor partial sum over |alpha| <= order for a general module; the caller
// vouches for the growth condition on binom(tD, alpha) (it cannot be
// certified from finitely many coefficients).  The tail estimate combines
// the measured norm of the deepest computed layer with one more factor of
// |zeta - 1| per omitted order.
GammaMatrix gamma_action_series(const DiffModule& mod, int k, int order,
                                const ModuleOptions& opt = {});

// Consistency report for an action table: the cocycle law
// E(a+b) = E(a) * (a^* E(b)), Galois equivariance sigma_c(E(a)) = E(c a),
// and the least growth exponent l with sup |E| <= l*k on the stored box.
struct ActionLawReport {
  LogNorm group_law_residual = LogNorm::neg_inf();
  LogNorm galois_residual = LogNorm::neg_inf();
  Rat growth_l = Rat(0);
};
ActionLawReport verify_action_laws(const GammaMatrix& e, int prec = 48);

}  // namespace pfuchs
