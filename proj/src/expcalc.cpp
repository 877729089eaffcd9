#include "pfuchs/expcalc.hpp"

#include <algorithm>
#include <optional>

namespace pfuchs {

namespace {

// relative precision carried by mixed rational/truncated coordinate
// arithmetic; pure rational paths stay exact and never consult this
constexpr int kCoordPrec = 96;

}  // namespace

// ---------------------------------------------------------------------------
// ExpCoord

ExpCoord ExpCoord::rational(long p, const Rat& x) {
  if (x != 0 && int_val_p(rat_den(x), p) != 0)
    fail("PPowerDenominator", "coordinate with p in its denominator is not a p-adic integer");
  ExpCoord c;
  c.p_ = p;
  c.exact_ = true;
  c.rat_ = x;
  return c;
}

ExpCoord ExpCoord::truncated(const PadicScalar& x) {
  if (x.p() <= 0) fail("Internal", "coordinate scalar carries no prime");
  if (x.kind() == PadicScalar::Kind::Value && x.val() < 0)
    fail("NotIntegral", "coordinate with negative valuation is not a p-adic integer");
  if (x.is_zero_at_prec() && x.shift() < 0)
    fail("NotIntegral", "zero-at-precision coordinate with a bound above 1");
  ExpCoord c;
  c.p_ = x.p();
  c.exact_ = false;
  c.pad_ = x;
  return c;
}

const Rat& ExpCoord::rat() const {
  if (!exact_) fail("Internal", "rat() on a truncated coordinate");
  return rat_;
}
const PadicScalar& ExpCoord::padic() const {
  if (exact_) fail("Internal", "padic() on an exact coordinate");
  return pad_;
}

Int ExpCoord::residue(long m) const {
  if (m < 0) fail("BadArgument", "negative residue depth");
  Int pm = pow_p(p_, m);
  if (exact_) {
    if (rat_ == 0) return Int(0);
    return mod_reduce(rat_num(rat_) * mod_inverse(rat_den(rat_), pm), pm);
  }
  return pad_.residue_mod_pk(m);
}

std::optional<bool> ExpCoord::is_integer() const {
  if (exact_) return pfuchs::is_integer(rat_);
  // an exact p-adic integer (mantissa * p^shift, shift >= 0) is an integer;
  // a truncated one extends to an integer and to non-integers alike
  if (pad_.is_exact()) return true;
  return std::nullopt;
}

ExpCoord ExpCoord::operator-() const {
  ExpCoord c = *this;
  if (exact_)
    c.rat_ = -rat_;
  else
    c.pad_ = -pad_;
  return c;
}

ExpCoord operator+(const ExpCoord& a, const ExpCoord& b) {
  if (a.p_ != b.p_) fail("PrimeMismatch", "coordinates over different primes");
  if (a.exact_ && b.exact_) return ExpCoord::rational(a.p_, a.rat_ + b.rat_);
  PadicScalar pa = a.exact_ ? PadicScalar::from_rational(a.p_, a.rat_, kCoordPrec) : a.pad_;
  PadicScalar pb = b.exact_ ? PadicScalar::from_rational(b.p_, b.rat_, kCoordPrec) : b.pad_;
  return ExpCoord::truncated(pa + pb);
}

std::string ExpCoord::str() const { return exact_ ? rat_.get_str() : pad_.str(); }

ExponentEntry entry_add(const ExponentEntry& a, const ExponentEntry& b) {
  if (a.n() != b.n()) fail("Dimension", "entry arity mismatch");
  ExponentEntry r;
  for (int i = 0; i < a.n(); ++i) r.coords.push_back(a.coords[i] + b.coords[i]);
  return r;
}
ExponentEntry entry_negate(const ExponentEntry& a) {
  ExponentEntry r;
  for (const ExpCoord& c : a.coords) r.coords.push_back(-c);
  return r;
}
ExponentEntry entry_sub(const ExponentEntry& a, const ExponentEntry& b) {
  return entry_add(a, entry_negate(b));
}

bool ExponentMultiset::all_exact() const {
  for (const ExponentEntry& e : entries)
    for (const ExpCoord& c : e.coords)
      if (!c.is_exact()) return false;
  return true;
}

void ExponentMultiset::validate() const {
  if (entries.empty()) return;
  const int arity = entries.front().n();
  long p = 0;
  for (const ExponentEntry& e : entries) {
    if (e.n() != arity) fail("Dimension", "entries of mixed arity");
    if (e.n() == 0) fail("Dimension", "empty exponent entry");
    for (const ExpCoord& c : e.coords) {
      if (p == 0) p = c.p();
      if (c.p() != p) fail("PrimeMismatch", "entries over different primes");
    }
  }
}

// ---------------------------------------------------------------------------
// Bracket and Liouville growth

Int bracket_residue(long p, const Int& r, long m) {
  Int pm = pow_p(p, m);
  if (r < 0 || r >= pm) fail("Internal", "residue out of range");
  Int other = pm - r;
  return r < other ? r : other;
}

Int bracket(const ExpCoord& x, long m) {
  if (m < 1) fail("BadArgument", "bracket depth must be positive");
  return bracket_residue(x.p(), x.residue(m), m);
}

LiouvilleProfile liouville_profile(const ExpCoord& x, long m_max) {
  if (m_max < 1) fail("BadArgument", "profile horizon must be positive");
  LiouvilleProfile prof;
  for (long m = 1; m <= m_max; ++m) {
    Rat v = rat_of(bracket(x, m), Int(m));
    prof.values.push_back(v);
    if (prof.argmin_m == 0 || v < prof.prefix_min) {
      prof.prefix_min = v;
      prof.argmin_m = m;
    }
  }
  prof.nondecreasing_from = m_max;
  for (long m = m_max - 1; m >= 1; --m) {
    if (prof.values[m - 1] <= prof.values[m])
      prof.nondecreasing_from = m;
    else
      break;
  }
  return prof;
}

RationalClass classify_rational(long p, const Rat& x) {
  if (x != 0 && int_val_p(rat_den(x), p) != 0)
    fail("PPowerDenominator", "rational with p in its denominator is not a p-adic integer");
  if (is_integer(x)) return RationalClass::Integer;
  // for a/w with w > 1 coprime to p, the balanced residue mod p^m is at
  // least (p^m - |a'|)/w for a bounded numerator a', so p^m/m times it
  // diverges: non-integer rationals are never p-adic Liouville
  return RationalClass::NonLiouvilleNonInteger;
}

// ---------------------------------------------------------------------------
// bipartite matching (augmenting paths; desk-scale sizes)

namespace {

bool kuhn_augment(int b, const std::vector<std::vector<int>>& adj, std::vector<int>& match_of_a,
                  std::vector<int>& match_of_b, std::vector<char>& visited) {
  for (int a : adj[b]) {
    if (visited[a]) continue;
    visited[a] = 1;
    if (match_of_a[a] < 0 || kuhn_augment(match_of_a[a], adj, match_of_a, match_of_b, visited)) {
      match_of_a[a] = b;
      match_of_b[b] = a;
      return true;
    }
  }
  return false;
}

// adj[b] lists admissible a-partners; returns sigma with sigma[b] = a, or
// nothing when no perfect matching exists
std::optional<std::vector<int>> perfect_matching(const std::vector<std::vector<int>>& adj,
                                                 int m_a) {
  const int m_b = static_cast<int>(adj.size());
  if (m_a != m_b) return std::nullopt;
  std::vector<int> match_of_a(m_a, -1), match_of_b(m_b, -1);
  for (int b = 0; b < m_b; ++b) {
    std::vector<char> visited(m_a, 0);
    if (!kuhn_augment(b, adj, match_of_a, match_of_b, visited)) return std::nullopt;
  }
  return match_of_b;
}

}  // namespace

// ---------------------------------------------------------------------------
// weak equivalence

WeakEquivResult weak_equiv(const ExponentMultiset& A, const ExponentMultiset& B, long h_max,
                           const Rat& c_max) {
  A.validate();
  B.validate();
  if (A.size() != B.size()) fail("Cardinality", "multisets of different size");
  if (h_max < 1) fail("BadArgument", "horizon must be positive");
  WeakEquivResult res;
  res.c = 0;
  const int m = A.size();
  if (m == 0) {
    res.within_budget = true;
    res.binding_h = 1;
    res.cost_per_h.assign(h_max, Int(0));
    res.sigma_per_h.assign(h_max, {});
    return res;
  }
  if (A.n() != B.n()) fail("Dimension", "multisets of different arity");
  const int n = A.n();

  // coordinatewise differences, shared across horizons
  std::vector<std::vector<ExponentEntry>> diff(m, std::vector<ExponentEntry>(m));
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) diff[a][b] = entry_sub(A.entries[a], B.entries[b]);

  for (long h = 1; h <= h_max; ++h) {
    std::vector<std::vector<Int>> cost(m, std::vector<Int>(m));
    std::vector<Int> pool;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        Int worst = 0;
        for (int i = 0; i < n; ++i) worst = std::max(worst, bracket(diff[a][b].coords[i], h));
        cost[a][b] = worst;
        pool.push_back(worst);
      }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    // smallest threshold admitting a perfect matching (bottleneck optimum)
    auto feasible = [&](const Int& thr) {
      std::vector<std::vector<int>> adj(m);
      for (int b = 0; b < m; ++b)
        for (int a = 0; a < m; ++a)
          if (cost[a][b] <= thr) adj[b].push_back(a);
      return perfect_matching(adj, m);
    };
    size_t lo = 0, hi = pool.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (feasible(pool[mid]))
        hi = mid;
      else
        lo = mid + 1;
    }
    std::optional<std::vector<int>> sigma = feasible(pool[lo]);
    if (!sigma) fail("Internal", "bottleneck search lost its matching");
    res.cost_per_h.push_back(pool[lo]);
    res.sigma_per_h.push_back(*sigma);

    Rat ch = rat_of(pool[lo], Int(h));
    if (res.binding_h == 0 || ch > res.c) {
      res.c = ch;
      res.binding_h = h;
    }
  }
  res.within_budget = res.c <= c_max;
  return res;
}

// ---------------------------------------------------------------------------
// strict equivalence

namespace {

enum class EdgeKind { Certified, Possible, Impossible };

EdgeKind edge_kind(const ExponentEntry& a, const ExponentEntry& b) {
  bool all_certified = true;
  for (int i = 0; i < a.n(); ++i) {
    std::optional<bool> isint = (a.coords[i] - b.coords[i]).is_integer();
    if (!isint.has_value())
      all_certified = false;
    else if (!*isint)
      return EdgeKind::Impossible;
  }
  return all_certified ? EdgeKind::Certified : EdgeKind::Possible;
}

}  // namespace

StrictEquivResult strict_equiv(const ExponentMultiset& A, const ExponentMultiset& B) {
  A.validate();
  B.validate();
  if (A.size() != B.size()) fail("Cardinality", "multisets of different size");
  StrictEquivResult res;
  const int m = A.size();
  if (m == 0) {
    res.status = EquivStatus::Equivalent;
    return res;
  }
  if (A.n() != B.n()) fail("Dimension", "multisets of different arity");

  std::vector<std::vector<int>> certified(m), possible(m);
  for (int b = 0; b < m; ++b)
    for (int a = 0; a < m; ++a) {
      switch (edge_kind(A.entries[a], B.entries[b])) {
        case EdgeKind::Certified:
          certified[b].push_back(a);
          possible[b].push_back(a);
          break;
        case EdgeKind::Possible:
          possible[b].push_back(a);
          break;
        case EdgeKind::Impossible:
          break;
      }
    }

  if (std::optional<std::vector<int>> sigma = perfect_matching(certified, m)) {
    res.status = EquivStatus::Equivalent;
    res.sigma = *sigma;
    return res;
  }
  // benefit of the doubt for truncated data: if even possible edges cannot
  // be matched, non-equivalence is certified
  res.status = perfect_matching(possible, m) ? EquivStatus::Inconclusive
                                             : EquivStatus::NotEquivalent;
  return res;
}

// ---------------------------------------------------------------------------
// multiset algebra

ExponentMultiset ms_union(const ExponentMultiset& A, const ExponentMultiset& B) {
  A.validate();
  B.validate();
  if (A.size() > 0 && B.size() > 0 && A.n() != B.n())
    fail("Dimension", "multisets of different arity");
  ExponentMultiset r = A;
  r.entries.insert(r.entries.end(), B.entries.begin(), B.entries.end());
  return r;
}

ExponentMultiset ms_pairwise_sum(const ExponentMultiset& A, const ExponentMultiset& B) {
  A.validate();
  B.validate();
  if (A.size() > 0 && B.size() > 0 && A.n() != B.n())
    fail("Dimension", "multisets of different arity");
  ExponentMultiset r;
  for (const ExponentEntry& a : A.entries)
    for (const ExponentEntry& b : B.entries) r.entries.push_back(entry_add(a, b));
  return r;
}

ExponentMultiset ms_negate(const ExponentMultiset& A) {
  A.validate();
  ExponentMultiset r;
  for (const ExponentEntry& a : A.entries) r.entries.push_back(entry_negate(a));
  return r;
}

ExponentMultiset ms_difference(const ExponentMultiset& A) {
  return ms_pairwise_sum(A, ms_negate(A));
}

// ---------------------------------------------------------------------------
// coset partitions

namespace {

// integer-difference test for a single coordinate pair; nullopt = unknown
std::optional<bool> coord_diff_integer(const ExpCoord& a, const ExpCoord& b) {
  return (a - b).is_integer();
}

bool entries_same_coset_exact(const ExponentEntry& a, const ExponentEntry& b) {
  for (int i = 0; i < a.n(); ++i) {
    std::optional<bool> isint = coord_diff_integer(a.coords[i], b.coords[i]);
    if (!isint.has_value()) fail("Internal", "coset test on non-exact data");
    if (!*isint) return false;
  }
  return true;
}

void validate_blocks(const ExponentMultiset& A, const std::vector<std::vector<int>>& blocks) {
  std::vector<char> seen(A.size(), 0);
  for (const std::vector<int>& blk : blocks) {
    if (blk.empty()) fail("BadPartition", "empty block");
    for (int i : blk) {
      if (i < 0 || i >= A.size()) fail("BadPartition", "block index out of range");
      if (seen[i]) fail("BadPartition", "entry listed twice");
      seen[i] = 1;
    }
  }
  for (int i = 0; i < A.size(); ++i)
    if (!seen[i]) fail("BadPartition", "entry missing from the partition");
}

}  // namespace

std::vector<std::vector<int>> partition_cosets(const ExponentMultiset& A) {
  A.validate();
  if (!A.all_exact())
    fail("Inconclusive", "coset membership of truncated entries cannot be certified");
  const int m = A.size();
  std::vector<int> block_of(m, -1);
  std::vector<std::vector<int>> blocks;
  for (int i = 0; i < m; ++i) {
    if (block_of[i] >= 0) continue;
    blocks.push_back({i});
    block_of[i] = static_cast<int>(blocks.size()) - 1;
    for (int j = i + 1; j < m; ++j) {
      if (block_of[j] >= 0) continue;
      if (entries_same_coset_exact(A.entries[i], A.entries[j])) {
        blocks.back().push_back(j);
        block_of[j] = block_of[i];
      }
    }
  }
  return blocks;
}

DirectionCheck check_partition_direction(const ExponentMultiset& A,
                                         const std::vector<std::vector<int>>& blocks, int r) {
  A.validate();
  validate_blocks(A, blocks);
  if (A.size() > 0 && (r < 0 || r >= A.n())) fail("BadArgument", "direction out of range");
  DirectionCheck out;
  bool uncertain = false;
  for (size_t l = 0; l < blocks.size(); ++l)
    for (size_t m2 = l + 1; m2 < blocks.size(); ++m2)
      for (int a : blocks[l])
        for (int b : blocks[m2]) {
          std::optional<bool> isint =
              coord_diff_integer(A.entries[a].coords[r], A.entries[b].coords[r]);
          if (!isint.has_value()) {
            uncertain = true;
          } else if (*isint) {
            // an integer difference across blocks: certified failure
            // (non-integer rationals are automatically non-Liouville)
            out.status = PartitionStatus::Invalid;
            out.block_l = static_cast<int>(l);
            out.block_m = static_cast<int>(m2);
            out.entry_a = a;
            out.entry_b = b;
            return out;
          }
        }
  out.status = uncertain ? PartitionStatus::Inconclusive : PartitionStatus::Valid;
  return out;
}

namespace {

// does any cross pair between the two blocks have an integer r-difference?
bool blocks_r_linked(const ExponentMultiset& A, const std::vector<int>& u,
                     const std::vector<int>& v, int r) {
  for (int a : u)
    for (int b : v) {
      std::optional<bool> isint =
          coord_diff_integer(A.entries[a].coords[r], A.entries[b].coords[r]);
      if (!isint.has_value()) fail("Internal", "recursive check on non-exact data");
      if (*isint) return true;
    }
  return false;
}

// backtracking search for a split tree over the given block ids
std::optional<PartitionTreeNode> split_tree(const ExponentMultiset& A,
                                            const std::vector<std::vector<int>>& blocks,
                                            const std::vector<int>& ids, int n,
                                            std::pair<int, int>& stuck) {
  PartitionTreeNode node;
  node.block_ids = ids;
  if (ids.size() <= 1) return node;  // one-block base case: trivially valid

  for (int r = 0; r < n; ++r) {
    // cluster the blocks by r-linkage (an equivalence closure: connected
    // components of the linkage graph)
    const int k = static_cast<int>(ids.size());
    std::vector<int> comp(k, -1);
    int ncomp = 0;
    for (int i = 0; i < k; ++i) {
      if (comp[i] >= 0) continue;
      comp[i] = ncomp;
      std::vector<int> stack{i};
      while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v = 0; v < k; ++v)
          if (comp[v] < 0 && blocks_r_linked(A, blocks[ids[u]], blocks[ids[v]], r)) {
            comp[v] = ncomp;
            stack.push_back(v);
          }
      }
      ++ncomp;
    }
    if (ncomp < 2) continue;  // this direction does not separate anything

    // cross-cluster r-differences are non-integer by construction; recurse
    PartitionTreeNode attempt;
    attempt.block_ids = ids;
    attempt.direction = r;
    bool ok = true;
    for (int c = 0; c < ncomp && ok; ++c) {
      std::vector<int> sub;
      for (int i = 0; i < k; ++i)
        if (comp[i] == c) sub.push_back(ids[i]);
      std::optional<PartitionTreeNode> child = split_tree(A, blocks, sub, n, stuck);
      if (!child)
        ok = false;
      else
        attempt.children.push_back(std::move(*child));
    }
    if (ok) return attempt;
  }
  stuck = {ids[0], ids[1]};
  return std::nullopt;
}

}  // namespace

RecursiveCheck check_partition_recursive(const ExponentMultiset& A,
                                         const std::vector<std::vector<int>>& blocks) {
  A.validate();
  validate_blocks(A, blocks);
  RecursiveCheck out;
  if (!A.all_exact()) {
    out.status = PartitionStatus::Inconclusive;
    return out;
  }
  std::vector<int> ids(blocks.size());
  for (size_t i = 0; i < blocks.size(); ++i) ids[i] = static_cast<int>(i);
  std::pair<int, int> stuck{-1, -1};
  if (std::optional<PartitionTreeNode> tree =
          split_tree(A, blocks, ids, A.size() ? A.n() : 0, stuck)) {
    out.status = PartitionStatus::Valid;
    out.tree = std::move(*tree);
  } else {
    out.status = PartitionStatus::Invalid;
    out.stuck_block_a = stuck.first;
    out.stuck_block_b = stuck.second;
  }
  return out;
}

LiouvillePartition liouville_partition(const ExponentMultiset& A) {
  LiouvillePartition out;
  out.blocks = partition_cosets(A);
  out.check = check_partition_recursive(A, out.blocks);
  return out;
}

}  // namespace pfuchs
