#ifndef CHAINCART_SUBSPACE_HPP
#define CHAINCART_SUBSPACE_HPP

#include <algorithm>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace chaincart {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised for shape and dimension violations in the linear-algebra layer.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/**
 * @brief A linear subspace of R^ambient_dim stored as an orthonormal basis.
 *
 * The zero subspace is an empty (ambient_dim x 0) basis. `tol` is the
 * dimensionless rank threshold (relative to the largest singular value of the
 * matrix the basis was extracted from) that decided the dimension.
 */
class Subspace {
 public:
  Subspace() = default;

  static Subspace zero(Index ambient_dim) {
    return Subspace(ambient_dim, MatrixXd(ambient_dim, 0), 0.0);
  }

  static Subspace full(Index ambient_dim) {
    return Subspace(ambient_dim, MatrixXd::Identity(ambient_dim, ambient_dim),
                    default_rtol(ambient_dim, ambient_dim));
  }

  /// Wraps a basis that the caller guarantees is orthonormal.
  static Subspace from_orthonormal(MatrixXd basis, double tol) {
    const Index n = basis.rows();
    return Subspace(n, std::move(basis), tol);
  }

  Index ambient_dim() const { return ambient_; }
  Index dim() const { return basis_.cols(); }
  bool is_zero() const { return basis_.cols() == 0; }
  const MatrixXd& basis() const { return basis_; }
  double tol() const { return tol_; }

  /// Orthogonal projector onto the subspace.
  MatrixXd projector() const { return basis_ * basis_.transpose(); }

  /// Component of x orthogonal to the subspace.
  VectorXd residual_of(const VectorXd& x) const {
    if (is_zero()) return x;
    return x - basis_ * (basis_.transpose() * x);
  }

  /// Default relative rank threshold max(rows, cols) * machine epsilon.
  static double default_rtol(Index rows, Index cols) {
    return static_cast<double>(std::max(rows, cols)) *
           std::numeric_limits<double>::epsilon();
  }

 private:
  Subspace(Index ambient, MatrixXd basis, double tol)
      : ambient_(ambient), basis_(std::move(basis)), tol_(tol) {}

  Index ambient_ = 0;
  MatrixXd basis_;
  double tol_ = 0.0;
};

namespace detail {

struct RankSplit {
  Eigen::JacobiSVD<MatrixXd> svd;
  Index rank = 0;
  double rtol = 0.0;
};

// `abs_tol` is an absolute singular-value threshold; when absent the threshold
// is max(rows, cols) * eps * sigma_max(scale_source), where the scale source
// defaults to M itself.
inline RankSplit rank_split(const MatrixXd& m, std::optional<double> abs_tol,
                            std::optional<double> scale = std::nullopt) {
  RankSplit out{Eigen::JacobiSVD<MatrixXd>(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV)};
  const auto& sv = out.svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double ref = scale.value_or(smax);
  const double rtol_default = Subspace::default_rtol(m.rows(), m.cols());
  const double thresh = abs_tol.value_or(rtol_default * ref);
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > thresh) ++out.rank;
  }
  // Stored tolerance is dimensionless and floored so nonempty bases carry tol > 0.
  const double rel = ref > 0.0 ? thresh / ref : 0.0;
  out.rtol = std::max(rel, rtol_default);
  return out;
}

inline void require_same_ambient(const Subspace& s, const Subspace& t,
                                 const char* op) {
  if (s.ambient_dim() != t.ambient_dim()) {
    throw ShapeError(std::string(op) + ": ambient dimension mismatch (" +
                     std::to_string(s.ambient_dim()) + " vs " +
                     std::to_string(t.ambient_dim()) + ")");
  }
}

}  // namespace detail

/// Column space of M.
inline Subspace image(const MatrixXd& m, std::optional<double> tol = std::nullopt) {
  if (m.rows() == 0 || m.cols() == 0) throw ShapeError("image: degenerate shape");
  auto split = detail::rank_split(m, tol);
  return Subspace::from_orthonormal(split.svd.matrixU().leftCols(split.rank),
                                    split.rtol);
}

/// Null space {x : Mx = 0}.
inline Subspace kernel(const MatrixXd& m, std::optional<double> tol = std::nullopt) {
  if (m.cols() == 0) throw ShapeError("kernel: degenerate shape");
  if (m.rows() == 0) return Subspace::full(m.cols());
  auto split = detail::rank_split(m, tol);
  const Index n = m.cols();
  return Subspace::from_orthonormal(split.svd.matrixV().rightCols(n - split.rank),
                                    split.rtol);
}

inline Subspace sum(const Subspace& s, const Subspace& t,
                    std::optional<double> tol = std::nullopt) {
  detail::require_same_ambient(s, t, "sum");
  if (s.is_zero()) return t;
  if (t.is_zero()) return s;
  MatrixXd stacked(s.ambient_dim(), s.dim() + t.dim());
  stacked << s.basis(), t.basis();
  return image(stacked, tol);
}

/// S ∩ T from the null space of [basis_S, -basis_T].
inline Subspace intersect(const Subspace& s, const Subspace& t,
                          std::optional<double> tol = std::nullopt) {
  detail::require_same_ambient(s, t, "intersect");
  if (s.is_zero() || t.is_zero()) return Subspace::zero(s.ambient_dim());
  MatrixXd stacked(s.ambient_dim(), s.dim() + t.dim());
  stacked << s.basis(), -t.basis();
  const Subspace coeffs = kernel(stacked, tol);
  if (coeffs.is_zero()) return Subspace::zero(s.ambient_dim());
  const MatrixXd vecs = s.basis() * coeffs.basis().topRows(s.dim());
  // Re-orthonormalize. The coefficient map is injective (each kernel vector
  // splits its norm evenly between the two halves), so the rank is coeffs.dim().
  Eigen::JacobiSVD<MatrixXd> svd(vecs, Eigen::ComputeThinU);
  return Subspace::from_orthonormal(svd.matrixU().leftCols(coeffs.dim()), coeffs.tol());
}

/// {x : Ax ∈ S}, i.e. ker(N^T A) with N an orthonormal complement of S. Rank is
/// judged against the scale of A. Using N rather than I - P_S avoids the
/// cancellation that leaves O(eps |A|) noise when S is nearly the whole space.
inline Subspace preimage(const MatrixXd& a, const Subspace& s,
                         std::optional<double> tol = std::nullopt) {
  if (a.rows() != a.cols()) throw ShapeError("preimage: A must be square");
  if (a.rows() != s.ambient_dim()) throw ShapeError("preimage: A and S dimensions differ");
  if (a.rows() == 0) throw ShapeError("preimage: degenerate shape");
  const Index n = a.rows();
  if (s.dim() == n) return Subspace::full(n);
  MatrixXd pa = a;
  if (!s.is_zero()) {
    const Eigen::HouseholderQR<MatrixXd> qr(s.basis());
    const MatrixXd q = qr.householderQ();
    pa = q.rightCols(n - s.dim()).transpose() * a;
  }
  const double a_scale = n > 0 ? Eigen::JacobiSVD<MatrixXd>(a).singularValues()(0) : 0.0;
  auto split = detail::rank_split(pa, tol, a_scale);
  return Subspace::from_orthonormal(split.svd.matrixV().rightCols(n - split.rank),
                                    split.rtol);
}

struct Containment {
  bool contained = false;
  double residual = 0.0;
};

/// Whether T ⊂ S. The residual is the largest orthogonal-to-S component of a
/// T basis vector; the default threshold is 10 * max(S.tol, T.tol).
inline Containment contains(const Subspace& s, const Subspace& t,
                            std::optional<double> tol = std::nullopt) {
  detail::require_same_ambient(s, t, "contains");
  Containment out;
  for (Index j = 0; j < t.dim(); ++j) {
    out.residual = std::max(out.residual, s.residual_of(t.basis().col(j)).norm());
  }
  const double thresh = tol.value_or(10.0 * std::max(s.tol(), t.tol()));
  out.contained = out.residual <= thresh;
  return out;
}

/// Euclidean distance from x to the subspace.
inline double distance(const Subspace& s, const VectorXd& x) {
  return s.residual_of(x).norm();
}

}  // namespace chaincart

#endif  // CHAINCART_SUBSPACE_HPP
