#pragma once

// Small dense matrices over the exact coefficient types: p-adic scalars,
// cyclotomic scalars, and Laurent series over either.  Every rank in this
// project stays tiny (tensor products top out around 4), so determinants
// and adjugates use cofactor expansion and characteristic-polynomial
// coefficients come from sums of principal minors; nothing here needs --
// or wants -- pivoted elimination over an approximate field.
//
// The element type only has to provide +, unary and binary -, and *.
// Functions that must synthesize a multiplicative identity take it as an
// explicit `one` argument (an additive zero is always derivable as
// one - one, which works for scalars and series alike).

#include "pfuchs/laurent.hpp"

#include <utility>
#include <vector>

namespace pfuchs {

template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, const T& fill)
      : rows_(rows), cols_(cols), e_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) fail("Dimension", "negative matrix dimension");
  }
  // rows must be nonempty and rectangular
  static Mat from_rows(std::vector<std::vector<T>> rows) {
    if (rows.empty() || rows.front().empty())
      fail("Dimension", "matrix literal needs at least one row and column");
    Mat m;
    m.rows_ = static_cast<int>(rows.size());
    m.cols_ = static_cast<int>(rows.front().size());
    m.e_.reserve(static_cast<size_t>(m.rows_) * m.cols_);
    for (auto& r : rows) {
      if (static_cast<int>(r.size()) != m.cols_)
        fail("Dimension", "ragged matrix literal");
      for (auto& x : r) m.e_.push_back(std::move(x));
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }
  bool empty() const { return e_.empty(); }

  T& at(int i, int j) { return e_[index(i, j)]; }
  const T& at(int i, int j) const { return e_[index(i, j)]; }

  Mat transpose() const {
    Mat r;
    r.rows_ = cols_;
    r.cols_ = rows_;
    r.e_.reserve(e_.size());
    for (int j = 0; j < cols_; ++j)
      for (int i = 0; i < rows_; ++i) r.e_.push_back(at(i, j));
    return r;
  }

  // drop row i and column j (for cofactor expansion)
  Mat minor_dropping(int di, int dj) const {
    if (rows_ < 2 || cols_ < 2) fail("Dimension", "minor of a degenerate matrix");
    Mat r;
    r.rows_ = rows_ - 1;
    r.cols_ = cols_ - 1;
    r.e_.reserve(static_cast<size_t>(r.rows_) * r.cols_);
    for (int i = 0; i < rows_; ++i) {
      if (i == di) continue;
      for (int j = 0; j < cols_; ++j)
        if (j != dj) r.e_.push_back(at(i, j));
    }
    return r;
  }

  // square submatrix picking the given row/column indices (principal when
  // used for both); indices must be strictly increasing
  Mat submatrix(const std::vector<int>& ri, const std::vector<int>& ci) const {
    Mat r;
    r.rows_ = static_cast<int>(ri.size());
    r.cols_ = static_cast<int>(ci.size());
    r.e_.reserve(ri.size() * ci.size());
    for (int i : ri)
      for (int j : ci) r.e_.push_back(at(i, j));
    return r;
  }

  template <class F>
  auto map(F&& fn) const -> Mat<std::decay_t<decltype(fn(std::declval<const T&>()))>> {
    Mat<std::decay_t<decltype(fn(std::declval<const T&>()))>> r;
    r.set_shape(rows_, cols_);
    for (const T& x : e_) r.raw().push_back(fn(x));
    return r;
  }

  Mat operator-() const {
    Mat r;
    r.rows_ = rows_;
    r.cols_ = cols_;
    r.e_.reserve(e_.size());
    for (const T& x : e_) r.e_.push_back(-x);
    return r;
  }
  friend Mat operator+(const Mat& a, const Mat& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_)
      fail("Dimension", "matrix sum shape mismatch");
    Mat r;
    r.rows_ = a.rows_;
    r.cols_ = a.cols_;
    r.e_.reserve(a.e_.size());
    for (size_t i = 0; i < a.e_.size(); ++i) r.e_.push_back(a.e_[i] + b.e_[i]);
    return r;
  }
  friend Mat operator-(const Mat& a, const Mat& b) { return a + (-b); }
  friend Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols_ != b.rows_) fail("Dimension", "matrix product shape mismatch");
    Mat r;
    r.rows_ = a.rows_;
    r.cols_ = b.cols_;
    r.e_.reserve(static_cast<size_t>(a.rows_) * b.cols_);
    for (int i = 0; i < a.rows_; ++i)
      for (int j = 0; j < b.cols_; ++j) {
        T acc = a.at(i, 0) * b.at(0, j);
        for (int l = 1; l < a.cols_; ++l) acc = acc + a.at(i, l) * b.at(l, j);
        r.e_.push_back(std::move(acc));
      }
    return r;
  }

  // entrywise scaling (coefficient rings here are commutative, so one side
  // suffices)
  Mat scaled(const T& c) const {
    Mat r;
    r.rows_ = rows_;
    r.cols_ = cols_;
    r.e_.reserve(e_.size());
    for (const T& x : e_) r.e_.push_back(x * c);
    return r;
  }

  // plumbing for map(): expose the flat storage of a freshly shaped matrix
  void set_shape(int rows, int cols) {
    rows_ = rows;
    cols_ = cols;
    e_.clear();
    e_.reserve(static_cast<size_t>(rows) * cols);
  }
  std::vector<T>& raw() { return e_; }
  const std::vector<T>& raw() const { return e_; }

 private:
  size_t index(int i, int j) const {
    if (i < 0 || i >= rows_ || j < 0 || j >= cols_)
      fail("Dimension", "matrix index out of range");
    return static_cast<size_t>(i) * cols_ + j;
  }

  int rows_ = 0, cols_ = 0;
  std::vector<T> e_;  // row-major
};

// ---------------------------------------------------------------------------
// Constructions

template <class T>
Mat<T> mat_identity(int m, const T& one) {
  Mat<T> r(m, m, one - one);
  for (int i = 0; i < m; ++i) r.at(i, i) = one;
  return r;
}

template <class T>
Mat<T> mat_diag(const std::vector<T>& d) {
  const int m = static_cast<int>(d.size());
  if (m == 0) fail("Dimension", "empty diagonal");
  Mat<T> r(m, m, d.front() - d.front());
  for (int i = 0; i < m; ++i) r.at(i, i) = d[i];
  return r;
}

// Kronecker product; entry ((i,k),(j,l)) = a(i,j) * b(k,l) with the left
// factor owning the coarse index
template <class T>
Mat<T> kron(const Mat<T>& a, const Mat<T>& b) {
  if (a.empty() || b.empty()) fail("Dimension", "Kronecker factor is empty");
  Mat<T> r;
  r.set_shape(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < b.rows(); ++k)
      for (int j = 0; j < a.cols(); ++j)
        for (int l = 0; l < b.cols(); ++l) r.raw().push_back(a.at(i, j) * b.at(k, l));
  return r;
}

template <class T>
Mat<T> block_diag(const Mat<T>& a, const Mat<T>& b) {
  if (a.empty() || b.empty()) fail("Dimension", "block-diagonal factor is empty");
  const T zero = a.at(0, 0) - a.at(0, 0);
  Mat<T> r(a.rows() + b.rows(), a.cols() + b.cols(), zero);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) r.at(i, j) = a.at(i, j);
  for (int i = 0; i < b.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) r.at(a.rows() + i, a.cols() + j) = b.at(i, j);
  return r;
}

template <class T>
Mat<T> commutator(const Mat<T>& a, const Mat<T>& b) {
  return a * b - b * a;
}

template <class T>
T mat_trace(const Mat<T>& a) {
  if (!a.square() || a.empty()) fail("Dimension", "trace needs a nonempty square matrix");
  T acc = a.at(0, 0);
  for (int i = 1; i < a.rows(); ++i) acc = acc + a.at(i, i);
  return acc;
}

// ---------------------------------------------------------------------------
// Determinant, adjugate, characteristic coefficients (cofactor scale)

template <class T>
T mat_det(const Mat<T>& a) {
  if (!a.square() || a.empty()) fail("Dimension", "determinant needs a nonempty square matrix");
  const int m = a.rows();
  if (m == 1) return a.at(0, 0);
  if (m == 2) return a.at(0, 0) * a.at(1, 1) - a.at(0, 1) * a.at(1, 0);
  T acc = a.at(0, 0) * mat_det(a.minor_dropping(0, 0));
  for (int j = 1; j < m; ++j) {
    T term = a.at(0, j) * mat_det(a.minor_dropping(0, j));
    acc = (j % 2 == 0) ? acc + term : acc - term;
  }
  return acc;
}

// adj(a) with a * adj(a) = adj(a) * a = det(a) * I; `one` seeds the 1x1 case
template <class T>
Mat<T> mat_adjugate(const Mat<T>& a, const T& one) {
  if (!a.square() || a.empty()) fail("Dimension", "adjugate needs a nonempty square matrix");
  const int m = a.rows();
  if (m == 1) return Mat<T>(1, 1, one);
  Mat<T> r(m, m, one - one);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      T c = mat_det(a.minor_dropping(j, i));  // transposed cofactor
      r.at(i, j) = ((i + j) % 2 == 0) ? std::move(c) : -c;
    }
  return r;
}

// c_j = sum of all j x j principal minors, j = 1..m, so that
// det(xI - a) = x^m - c_1 x^(m-1) + c_2 x^(m-2) - ... + (-1)^m c_m.
// A matrix is nilpotent exactly when every c_j vanishes.
template <class T>
std::vector<T> principal_minor_sums(const Mat<T>& a) {
  if (!a.square() || a.empty())
    fail("Dimension", "principal minors need a nonempty square matrix");
  const int m = a.rows();
  std::vector<T> out;
  for (int j = 1; j <= m; ++j) {
    std::vector<int> idx(j);
    for (int i = 0; i < j; ++i) idx[i] = i;
    std::optional<T> acc;
    while (true) {
      T minor = mat_det(a.submatrix(idx, idx));
      acc = acc ? *acc + minor : std::move(minor);
      // advance the increasing index tuple
      int i = j - 1;
      while (i >= 0 && idx[i] == m - j + i) --i;
      if (i < 0) break;
      ++idx[i];
      for (int l = i + 1; l < j; ++l) idx[l] = idx[l - 1] + 1;
    }
    out.push_back(std::move(*acc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Norm bookkeeping for matrices of series

template <class C>
GaussNorm mat_gauss_lognorm(const Mat<Series<C>>& a, const std::vector<Rat>& s) {
  GaussNorm n{LogNorm::neg_inf(), true};
  for (const auto& x : a.raw()) n = gn_max(n, x.gauss_lognorm(s));
  return n;
}

template <class C>
GaussNorm mat_sup_lognorm(const Mat<Series<C>>& a, const LogRadiusBox& box) {
  GaussNorm n{LogNorm::neg_inf(), true};
  for (const auto& x : a.raw()) n = gn_max(n, x.sup_lognorm(box));
  return n;
}

template <class C>
bool mat_is_zeroish(const Mat<Series<C>>& a) {
  for (const auto& x : a.raw())
    if (!x.is_zeroish_all()) return false;
  return true;
}

// restrict every entry, accumulating one clip ledger
template <class C>
std::pair<Mat<Series<C>>, ClipReport> mat_restrict(const Mat<Series<C>>& a, const Window& w,
                                                   const ClipPolicy& policy) {
  Mat<Series<C>> r;
  r.set_shape(a.rows(), a.cols());
  ClipReport total;
  for (const auto& x : a.raw()) {
    auto [s, rep] = x.restrict_to(w, policy);
    r.raw().push_back(std::move(s));
    total.discarded_terms += rep.discarded_terms;
    total.max_discarded = std::max(total.max_discarded, rep.max_discarded);
    total.measured = total.measured || rep.measured;
  }
  return {std::move(r), total};
}

// ---------------------------------------------------------------------------
// Inversion of a series matrix that is a unit on a box: adjugate divided by
// the determinant (itself inverted by the certified geometric expansion).
// The residual is measured directly on I - U * inverse and I - inverse * U.

template <class C>
struct MatInverse {
  Mat<Series<C>> inverse;
  typename Series<C>::UnitCheck det_check;  // unit certificate for det U
  LogNorm residual;                         // measured two-sided defect on the box
};

template <class C>
MatInverse<C> invert_unit_matrix(const Mat<Series<C>>& u, const LogRadiusBox& box,
                                 const Window& out_window, const Rat& target_rel) {
  if (!u.square() || u.empty()) fail("Dimension", "inverse needs a nonempty square matrix");
  const Series<C>* sample = nullptr;
  for (const auto& x : u.raw())
    if (!x.empty()) sample = &x;
  if (sample == nullptr) fail("NotUnit", "inverse of the zero matrix");
  const C cone = CoeffTraits<C>::one_like(sample->terms().begin()->second);
  const Series<C> one =
      Series<C>::monomial(cone, ExpVec(static_cast<size_t>(u.at(0, 0).nvars()), 0));

  Series<C> det = mat_det(u);
  auto inv_det = det.invert_unit(box, out_window, target_rel);
  Mat<Series<C>> adj = mat_adjugate(u, one);
  auto [inv, clip] = mat_restrict(adj.scaled(inv_det.inverse), out_window,
                                  ClipPolicy{true, box});

  MatInverse<C> out;
  out.det_check = det.is_unit_on_box(box);
  const Mat<Series<C>> id = mat_identity(u.rows(), one);
  LogNorm res = mat_sup_lognorm(id - u * inv, box).upper;
  res = std::max(res, mat_sup_lognorm(id - inv * u, box).upper);
  out.residual = std::max(res, clip.max_discarded);
  out.inverse = std::move(inv);
  return out;
}

}  // namespace pfuchs
