#pragma once
// Exponent engine on top of the torsion-action tables: character averages
// S_{k,A}, digit-by-digit descent of exponent residues, transformation-law
// certificates, spectral projector sequences, direct-sum splitting along a
// partition of the exponents, and recovery of a basis with constant
// connection matrices.
//
// Every routine here consumes exact action tables (GammaMatrix with
// exact == true); truncated Taylor tables are refused because none of the
// certificates below survive an unquantified tail.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "pfuchs/diffmod.hpp"
#include "pfuchs/expcalc.hpp"
#include "pfuchs/matrix.hpp"

namespace pfuchs {

// Levels are requested one at a time; callers that need several levels of
// the same module should hand out a memoizing provider (certified_provider
// below) instead of recomputing tables.
using GammaProvider = std::function<GammaMatrix(int)>;

// Memoized exact action of a certified module; one table per level is
// computed on first request and shared afterwards.
GammaProvider certified_provider(const DiffModule& mod, const ModuleOptions& opt = {});

// Reads the level-j action out of a level-k table (j <= k): E_j(a) is
// E_k(p^{k-j} a) with every coefficient descended to the level-j subfield.
// Exact tables only.
GammaMatrix sublevel_action(const GammaMatrix& e, int j);

// Character average S_{k,A} = p^{-nk} sum_a E(a) zeta_a^{-A}: column j of
// the action table is averaged against the character attached to the j-th
// exponent entry, and the result descends to plain p-adic coefficients.
// When any input coefficient carries finite absolute precision, the output
// loses exactly n*k digits; the pair (prec_in, prec_out) records that
// ledger and the loss is asserted on every call.
struct SAverage {
  Mat<PSeries> s;
  std::optional<long> prec_in;   // least finite absolute precision entering
  std::optional<long> prec_out;  // least finite absolute precision leaving
  LogNorm clip_ledger = LogNorm::neg_inf();  // mass discarded by windowing
};
SAverage compute_S(const GammaMatrix& e, const ExponentMultiset& A);

// Consistency of consecutive averages: for a level-(k+1) table this
// measures | sum_b S_{k+1, A + p^k b} - S_{k,A} | on the table's box, the
// sum running over digit vectors b in [0,p)^n.  Exact identities in the
// averaging make this vanish; it is the cheapest smoke test for a provider.
LogNorm telescoping_check(const GammaMatrix& e, const ExponentMultiset& A);

// --- digit descent -------------------------------------------------------

struct DescentOptions {
  // Tie-break among digit vectors whose determinant constants share the
  // maximal norm: false keeps the lexicographically smallest vector, true
  // the largest.  Results for either setting are weakly equivalent.
  bool prefer_large_digits = false;
  // A digit vector is admissible when the constant term of det S has log
  // norm at least this value (0 = a genuine p-adic unit).
  Rat admissibility = Rat(0);
};
struct DescentCandidate {
  std::vector<long> digits;  // entry-major, then direction
  LogNorm det_constant;      // log norm of the constant term of det S
};
struct DescentLevel {
  int k = 0;
  std::vector<DescentCandidate> candidates;  // full enumeration in scan order
  std::vector<long> chosen;
  LogNorm det_constant = LogNorm::neg_inf();
};
struct DescentResult {
  // Exponent residues fixed modulo p^{k_max}; coordinates are truncated
  // scalars carrying exactly that much absolute precision.
  ExponentMultiset A;
  std::vector<DescentLevel> trace;
};
// Greedy refinement of exponent residues: at each level k = 1..k_max every
// extension of the current residues by one more digit per coordinate is
// scored by the determinant constant of its average, and the best
// admissible one is kept.  Throws NoAdmissibleDigit when no extension
// reaches the admissibility bar, Budget when p^{m*n} candidates per level
// is too large to enumerate.
DescentResult descend_exponent(const GammaProvider& provider, int k_max,
                               const DescentOptions& opt = {});

// --- certification -------------------------------------------------------

struct CertifyOptions {
  Rat law_tol = Rat(-24);             // transformation-law residual bound
  Rat target_rel = Rat(-31);          // inversion target for S_k^{-1}
  std::optional<Window> work_window;  // defaults to cube(n, -40, 40)
  int prec = 48;                      // scalar precision for root powers
};
struct LevelRecord {
  int k = 0;
  Mat<PSeries> s;
  // max_a | E(a) S(zeta_a t) - S(t) zeta_a^A | on the box
  LogNorm semilinearity_residual = LogNorm::neg_inf();
  LogNorm det_constant_lognorm = LogNorm::neg_inf();
  LogNorm sup_lognorm_s = LogNorm::neg_inf();
  bool invertible = false;
  LogNorm inverse_sup_lognorm = LogNorm::neg_inf();
  // measured |S^{-1}| minus the growth bound (m-1)*k*l, when invertible
  std::optional<Rat> inverse_excess;
};
struct ExponentCertificate {
  ExponentMultiset A;
  std::vector<LevelRecord> levels;
  Rat growth_l = Rat(0);  // least l with sup |S_k| <= l*k over the range
  bool law_ok = false;        // every semilinearity residual within law_tol
  bool det_witness_ok = false;  // det constant is a unit-or-better at every level
  bool valid() const { return law_ok && det_witness_ok; }
};
// Certifies a proposed exponent multiset over a level range: for each k the
// average S_k is formed and the transformation law E(a) S(zeta_a t) =
// S(t) zeta_a^A is measured per torsion element, the determinant constant
// is checked to be a unit, and the inverse (when it exists on the box) is
// compared against the growth bound.  Failures are recorded in the
// returned flags, not thrown; only structural misuse throws.
ExponentCertificate verify_exponent_certificate(const GammaProvider& provider,
                                                const ExponentMultiset& A, int k_lo,
                                                int k_hi, const LogRadiusBox& box,
                                                const CertifyOptions& opt = {});

// --- spectral projectors -------------------------------------------------

// Concentric shrink: each direction's interval [lo, hi] is replaced by
// [c - w/4, c + w/4] with c the center and w the width.  Projector decay is
// only meaningful strictly inside the box where S_k was certified.
LogRadiusBox shrink_box(const LogRadiusBox& box);

struct ProjectorOptions {
  Rat log_tau = Rat(-1);  // decay slope: require |N_k - N_{k+1}| <= k * log_tau
  int consecutive = 3;    // sustained-decay run length for convergence
  CertifyOptions cert;
};
struct ProjectorReport {
  std::vector<int> ks;       // levels with an invertible average
  std::vector<int> skipped;  // levels where inversion failed on the shrunk box
  std::vector<Mat<PSeries>> n_k;  // N_k = S_k diag(chi_B) S_k^{-1}
  std::vector<LogNorm> decay;     // |N_{ks[i]} - N_{ks[i+1]}| on the shrunk box
  LogRadiusBox shrunk;
  Mat<PSeries> limit;  // last computed N_k
  LogNorm idempotency_residual = LogNorm::neg_inf();    // |N^2 - N|
  LogNorm horizontality_residual = LogNorm::neg_inf();  // |t dN + Theta N - N Theta|
  bool converged = false;
};
// Spectral projector onto the factor spanned by the exponent entries in
// `block`: requires the two-sided partition {block, complement} to pass the
// recursive integer-distance test (InvalidPartition otherwise), then tracks
// N_k = S_k diag(chi_block) S_k^{-1} over the level range on the shrunk
// box.  Levels whose average is not invertible are skipped and reported.
// Convergence means the trailing decay measurements sit below k * log_tau
// for `consecutive` steps (an all-exact agreement counts immediately).
ProjectorReport projector_sequence(const DiffModule& mod, const GammaProvider& provider,
                                   const ExponentMultiset& A, const std::vector<int>& block,
                                   int k_lo, int k_hi, const LogRadiusBox& box,
                                   const ProjectorOptions& opt = {});

// --- splitting -----------------------------------------------------------

struct DecomposeOptions {
  int k_lo = 1;
  int k_hi = 2;
  // Weak-equivalence budget used to match each factor's independently
  // descended exponents against its prescribed block; h_max <= 0 means
  // "use k_hi" (residues deeper than the certified level are not known).
  long h_max = 0;
  long c_max = 64;
  ProjectorOptions projector;
};
struct Factor {
  std::vector<int> block;  // entry indices into the parent exponent multiset
  Mat<PSeries> basis;      // factor basis, columns in the parent coordinates
  // The factor connection.  When the certificate is valid and the top
  // certified average is invertible, the module adopts the earned
  // certification (standard form = descended exponents with no nilpotent
  // part, twist = the inverse average), so it can feed the constant-basis
  // normalization directly.
  DiffModule module;
  ExponentCertificate certificate;  // re-certification of the block exponents
  WeakEquivResult exponent_match;   // independent descent vs the prescribed block
  // distance between the extracted connection and the certified model.  The
  // model exponents are only pinned mod p^{k_hi}, so clean factors report
  // about -k_hi here; a residual near 0 flags structure the torsion action
  // cannot see (such as nilpotent parts inside one exponent class).
  LogNorm model_residual = LogNorm::neg_inf();
};
struct Decomposition {
  std::vector<Factor> factors;           // in the order of the prescribed blocks
  Mat<PSeries> assembled;                // all factor bases side by side
  LogNorm assembled_det_gap;             // unit-certificate gap of det(assembled)
  std::vector<ProjectorReport> projectors;  // one per binary split performed
};
// Splits a certified module into direct factors along a partition of its
// exponent entries.  The partition must pass the recursive
// integer-distance test; the split is performed one block at a time via
// the spectral projector, bases are extracted by unit-pivot column
// reduction of N and I - N, and every factor is re-certified (law
// residuals, determinant witness, and an independent exponent descent
// matched within the weak-equivalence budget).  The assembled basis must
// be a unit on the box or the decomposition fails.
Decomposition decompose(const DiffModule& mod, const std::vector<std::vector<int>>& blocks,
                        const LogRadiusBox& box, const DecomposeOptions& opt = {});

// --- constant basis ------------------------------------------------------

struct ConstantBasisOptions {
  Rat log_tau = Rat(-1);  // decay slope for the normalized iteration
  CertifyOptions cert;
};
struct ConstantBasisResult {
  // Basis change to a frame with constant connection matrices; normalized
  // only up to a constant right factor.
  Mat<PSeries> basis;
  // Connection matrices in the new frame (their constant terms); entry i is
  // lambda_i * I + N_i with N_i the commuting nilpotent part.
  std::vector<Mat<PadicScalar>> constants;
  std::vector<LogNorm> decay;  // |I - T_k R_{k+1}^{-1}| per normalization step
  LogNorm constancy_residual = LogNorm::neg_inf();  // |Theta'' - constants| on the box
  std::vector<LogNorm> nilpotency;  // minor-sum norms of constants[i] - lambda_i I
  bool converged = false;
};
// For a certified module whose exponent entries all equal `lambda`, builds
// a basis in which every connection matrix is the constant
// lambda_i I + N_i.  The action is untwisted by the character of lambda,
// averages S_k are taken at the zero exponent, and the constant right
// factors R_k are normalized step by step: T_k = R_k S_k^{-1} S_{k+1},
// R_{k+1} = constant term of T_k (which must be invertible).  A decay
// measurement above k * log_tau throws DecayViolation; the final basis is
// S_{k_max} R_{k_max}^{-1}.
ConstantBasisResult constant_basis(const DiffModule& mod, const ExponentEntry& lambda,
                                   int k0, int k_max, const LogRadiusBox& box,
                                   const ConstantBasisOptions& opt = {});

}  // namespace pfuchs
