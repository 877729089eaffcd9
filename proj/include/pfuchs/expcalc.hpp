#pragma once

// Abstract p-adic exponent calculus on multisets in Z_p^n.
//
// The basic quantity is the balanced residue bracket: for x known modulo
// p^m with residue r, bracket(x, m) = min(r, p^m - r).  It measures how
// close x is to a multiple of p^m and drives both the Liouville growth
// profile (p^m/m scaling) and the weak-equivalence distance between
// exponent multisets (bottleneck matching of bracket costs).
//
// Coordinates are either exact rationals with denominator coprime to p
// (classification and coset splitting are then exact) or truncated p-adic
// integers (all answers degrade honestly to three-valued results: a
// truncated coordinate can always be extended to an integer, so
// integrality can be refuted only through exact data).

#include "pfuchs/rat.hpp"
#include "pfuchs/scalar.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pfuchs {

// ---------------------------------------------------------------------------
// Entries and multisets

// One coordinate of an exponent entry: an element of Z_p.
class ExpCoord {
 public:
  // rational with denominator coprime to p
  static ExpCoord rational(long p, const Rat& x);
  // truncated p-adic integer (valuation >= 0 at tracked precision)
  static ExpCoord truncated(const PadicScalar& x);

  long p() const { return p_; }
  bool is_exact() const { return exact_; }
  const Rat& rat() const;            // exact coordinates only
  const PadicScalar& padic() const;  // truncated coordinates only

  // residue modulo p^m; PrecisionExhausted when not known that deep
  Int residue(long m) const;

  // integer test: known for exact coordinates, indeterminate for truncated
  // ones (every truncated p-adic integer extends to an integer)
  std::optional<bool> is_integer() const;

  ExpCoord operator-() const;
  friend ExpCoord operator+(const ExpCoord& a, const ExpCoord& b);
  friend ExpCoord operator-(const ExpCoord& a, const ExpCoord& b) { return a + (-b); }

  std::string str() const;

 private:
  ExpCoord() = default;
  long p_ = 0;
  bool exact_ = false;
  Rat rat_;
  PadicScalar pad_;
};

struct ExponentEntry {
  std::vector<ExpCoord> coords;
  int n() const { return static_cast<int>(coords.size()); }
};

ExponentEntry entry_add(const ExponentEntry& a, const ExponentEntry& b);
ExponentEntry entry_negate(const ExponentEntry& a);
ExponentEntry entry_sub(const ExponentEntry& a, const ExponentEntry& b);

// A finite multiset of entries; duplicates are meaningful, order is not.
struct ExponentMultiset {
  std::vector<ExponentEntry> entries;
  int size() const { return static_cast<int>(entries.size()); }
  int n() const { return entries.empty() ? 0 : entries.front().n(); }
  bool all_exact() const;
  void validate() const;  // uniform prime and arity
};

// ---------------------------------------------------------------------------
// Bracket and Liouville growth

// min(r, p^m - r) for a residue r in [0, p^m)
Int bracket_residue(long p, const Int& r, long m);
// bracket of a coordinate known mod p^m
Int bracket(const ExpCoord& x, long m);

// The exact prefix of the growth sequence (p^m/m) <x/p^m> = bracket(x,m)/m
// for m = 1..m_max, with a coarse monotonicity summary: x is p-adic
// Liouville iff the liminf of the full sequence is finite, which a finite
// prefix can suggest but never certify.
struct LiouvilleProfile {
  std::vector<Rat> values;     // values[m-1] = bracket(x, m) / m
  Rat prefix_min;              // min over the prefix
  long argmin_m = 0;           // smallest m attaining prefix_min
  long nondecreasing_from = 0; // smallest m such that values[m..] never decreases
};
LiouvilleProfile liouville_profile(const ExpCoord& x, long m_max);

// Exact dichotomy for rational elements of Z_(p): integers are integers,
// and every non-integer rational has balanced residues growing like
// p^m / (2 * denominator), so it is never p-adic Liouville.
enum class RationalClass { Integer, NonLiouvilleNonInteger };
RationalClass classify_rational(long p, const Rat& x);

// ---------------------------------------------------------------------------
// Weak and strict equivalence

// Weak equivalence with certified constant: for each horizon h <= h_max a
// bottleneck-optimal permutation sigma_h matching B to A is computed under
// the cost max_i bracket((A_{sigma(j)} - B_j)_i, h); the certificate is
// c = max_h cost_h / h.  Failure means no c <= c_max exists up to h_max
// (which never disproves weak equivalence outright).
struct WeakEquivResult {
  bool within_budget = false;
  Rat c;                                    // certified constant over h <= h_max
  long binding_h = 0;                       // horizon attaining c
  std::vector<Int> cost_per_h;              // bottleneck cost at each h
  std::vector<std::vector<int>> sigma_per_h;  // sigma_h[j] = index in A matched to B_j
};
WeakEquivResult weak_equiv(const ExponentMultiset& A, const ExponentMultiset& B, long h_max,
                           const Rat& c_max);

enum class EquivStatus { Equivalent, NotEquivalent, Inconclusive };

// Strict equivalence: a permutation with all coordinate differences in Z.
// Exact entries decide edges exactly; truncated entries can only produce
// "possible" edges, so a certified matching uses exact edges alone, and
// refutation may use possible edges conservatively.
struct StrictEquivResult {
  EquivStatus status = EquivStatus::Inconclusive;
  std::vector<int> sigma;  // B-index -> A-index when Equivalent
};
StrictEquivResult strict_equiv(const ExponentMultiset& A, const ExponentMultiset& B);

// ---------------------------------------------------------------------------
// Multiset algebra

ExponentMultiset ms_union(const ExponentMultiset& A, const ExponentMultiset& B);
// all pairwise sums {a + b}: the exponent of a tensor product
ExponentMultiset ms_pairwise_sum(const ExponentMultiset& A, const ExponentMultiset& B);
// {-a}: the exponent of a dual
ExponentMultiset ms_negate(const ExponentMultiset& A);
// {a_i - a_j} over all ordered pairs, |A|^2 entries
ExponentMultiset ms_difference(const ExponentMultiset& A);

// ---------------------------------------------------------------------------
// Coset partitions and Liouville partitions

// Partition indices of A into Z^n-cosets (all pairwise coordinate
// differences integers).  Exact entries only: truncated entries cannot
// certify membership, error code "Inconclusive".
std::vector<std::vector<int>> partition_cosets(const ExponentMultiset& A);

enum class PartitionStatus { Valid, Invalid, Inconclusive };

// Cross-block test in one direction r: every difference of r-th coordinates
// across distinct blocks must be a non-Liouville non-integer (automatic for
// non-integer rationals).  An exact integer difference is a certified
// Invalid witness; truncated differences leave Inconclusive.
struct DirectionCheck {
  PartitionStatus status = PartitionStatus::Inconclusive;
  // witness for Invalid: entries a (in block_l) and b (in block_m)
  int block_l = -1, block_m = -1, entry_a = -1, entry_b = -1;
};
DirectionCheck check_partition_direction(const ExponentMultiset& A,
                                         const std::vector<std::vector<int>>& blocks, int r);

// Recursive validity: the given blocks admit a tree of direction splits —
// at each node some direction r groups the blocks into >= 2 clusters with
// all cross-cluster r-differences non-integer, recursing until single
// blocks remain (the one-block base case is trivially valid).
struct PartitionTreeNode {
  std::vector<int> block_ids;             // blocks covered by this node
  int direction = -1;                     // split direction; -1 at leaves
  std::vector<PartitionTreeNode> children;
};
struct RecursiveCheck {
  PartitionStatus status = PartitionStatus::Inconclusive;
  PartitionTreeNode tree;       // witness tree when Valid
  int stuck_block_a = -1, stuck_block_b = -1;  // inseparable pair when Invalid
};
RecursiveCheck check_partition_recursive(const ExponentMultiset& A,
                                         const std::vector<std::vector<int>>& blocks);

// Convenience: the canonical maximal split of A itself — coset blocks plus
// a recursive direction tree over them (exact entries only).
struct LiouvillePartition {
  std::vector<std::vector<int>> blocks;  // Z^n-coset blocks of entry indices
  RecursiveCheck check;
};
LiouvillePartition liouville_partition(const ExponentMultiset& A);

}  // namespace pfuchs
