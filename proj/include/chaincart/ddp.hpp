#ifndef CHAINCART_DDP_HPP
#define CHAINCART_DDP_HPP

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "chaincart/model.hpp"
#include "chaincart/subspace.hpp"

namespace chaincart {

class FriendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DdpOptions {
  /// Dimensionless rank threshold for the subspace iteration, scaled by the
  /// spectral norm of each matrix whose rank is decided. Unset falls back to
  /// the per-operation default max(rows, cols) * eps * sigma_max, which is too
  /// tight for chains beyond six links.
  std::optional<double> rank_rtol = 1e-10;
  /// Threshold on the containment, invariance and chain residuals.
  double verify_tol = 1e-8;
};

struct InvariantSubspaceResult {
  Subspace subspace;
  int iterations = 0;
  /// dim(V_0), dim(V_1), ... up to the fixed point.
  std::vector<Index> dims;
};

struct DecouplingSolution {
  Subspace v_star;
  MatrixXd friend_matrix;
  bool decouplable = false;
  double containment_residual = 0.0;
  double invariance_residual = 0.0;
  double chain_residual = 0.0;
  int iterations = 0;
};

namespace detail {

inline double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<MatrixXd>(m).singularValues()(0);
}

inline std::optional<double> scaled(std::optional<double> rtol, double scale) {
  if (!rtol) return std::nullopt;
  return *rtol * scale;
}

}  // namespace detail

/// One step V -> ker H ∩ A^{-1}(V + Im B) of the invariant subspace algorithm.
inline Subspace isa_step(const MatrixXd& a, const Subspace& im_b, const Subspace& ker_h,
                         const Subspace& v, const DdpOptions& opts = {}) {
  const Subspace widened = sum(v, im_b, opts.rank_rtol);
  const Subspace pre = preimage(a, widened, detail::scaled(opts.rank_rtol, detail::spectral_norm(a)));
  return intersect(ker_h, pre, opts.rank_rtol);
}

/// Largest (A, B)-controlled invariant subspace inside ker_h, by the fixed-point
/// iteration V_0 = ker H, V_{k+1} = ker H ∩ A^{-1}(V_k + Im B).
inline InvariantSubspaceResult maximal_controlled_invariant(const MatrixXd& a, const MatrixXd& b,
                                                            const Subspace& ker_h,
                                                            const DdpOptions& opts = {}) {
  if (a.rows() != a.cols() || a.rows() != ker_h.ambient_dim() || b.rows() != a.rows()) {
    throw ShapeError("maximal_controlled_invariant: inconsistent dimensions");
  }
  const Subspace im_b = b.cols() == 0 ? Subspace::zero(a.rows()) : image(b, detail::scaled(opts.rank_rtol, detail::spectral_norm(b)));
  InvariantSubspaceResult out;
  Subspace v = ker_h;
  out.dims.push_back(v.dim());
  // Dimensions strictly decrease until the fixed point, so ambient_dim + 1 steps suffice.
  for (Index k = 0; k <= a.rows(); ++k) {
    Subspace next = isa_step(a, im_b, ker_h, v, opts);
    ++out.iterations;
    out.dims.push_back(next.dim());
    const bool fixed = next.dim() == v.dim();
    v = std::move(next);
    if (fixed) break;
  }
  out.subspace = std::move(v);
  return out;
}

/// max over basis vectors v of dist(Av, V + Im B) / |Av|, with 0/0 read as 0.
inline double check_controlled_invariance(const MatrixXd& a, const MatrixXd& b, const Subspace& v,
                                          const DdpOptions& opts = {}) {
  if (a.rows() != v.ambient_dim() || b.rows() != a.rows()) {
    throw ShapeError("check_controlled_invariance: inconsistent dimensions");
  }
  const Subspace im_b = b.cols() == 0 ? Subspace::zero(a.rows()) : image(b, detail::scaled(opts.rank_rtol, detail::spectral_norm(b)));
  const Subspace target = sum(v, im_b, opts.rank_rtol);
  const double floor = Subspace::default_rtol(a.rows(), a.cols()) * detail::spectral_norm(a);
  double worst = 0.0;
  for (Index j = 0; j < v.dim(); ++j) {
    const VectorXd av = a * v.basis().col(j);
    const double len = av.norm();
    if (len <= floor) continue;
    worst = std::max(worst, distance(target, av) / len);
  }
  return worst;
}

/// max_j dist((A + BF) v_j, V) / |A| over the basis of V.
inline double invariance_residual(const MatrixXd& a, const MatrixXd& b, const MatrixXd& f,
                                  const Subspace& v) {
  const MatrixXd closed = a + b * f;
  const double scale = std::max(detail::spectral_norm(a), 1e-300);
  double worst = 0.0;
  for (Index j = 0; j < v.dim(); ++j) {
    worst = std::max(worst, distance(v, closed * v.basis().col(j)));
  }
  return worst / scale;
}

/**
 * @brief A friend F of V, i.e. (A + BF) V ⊂ V.
 *
 * Each basis vector v_j gives the least-squares system [V | B] (a_j; w_j) = A v_j
 * and F v_j = -w_j. F vanishes on the orthogonal complement of V.
 */
inline MatrixXd compute_friend(const MatrixXd& a, const MatrixXd& b, const Subspace& v,
                               const DdpOptions& opts = {}) {
  if (a.rows() != v.ambient_dim() || b.rows() != a.rows()) {
    throw ShapeError("compute_friend: inconsistent dimensions");
  }
  const Index m = b.cols();
  if (v.is_zero()) return MatrixXd::Zero(m, a.cols());
  MatrixXd lhs(a.rows(), v.dim() + m);
  lhs << v.basis(), b;
  const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(lhs);
  const MatrixXd coeffs = cod.solve(a * v.basis());
  const MatrixXd w = coeffs.bottomRows(m);
  MatrixXd f = -w * v.basis().transpose();
  const double res = invariance_residual(a, b, f, v);
  if (!(res <= opts.verify_tol)) throw FriendError("subspace not controlled invariant");
  return f;
}

/// Scale-free form of H [E, (A+BF)E, ..., (A+BF)^{N-1}E] = 0: the largest
/// |H (A+BF)^k E| entry normalized by |(A+BF)^k| |E|.
inline double verify_decoupling(const LinearModel& model, const MatrixXd& f) {
  const Index dim = model.A.rows();
  if (f.rows() != model.B.cols() || f.cols() != dim) {
    throw ShapeError("verify_decoupling: feedback has wrong shape");
  }
  const MatrixXd closed = model.A + model.B * f;
  const double e_norm = detail::spectral_norm(model.E);
  if (e_norm == 0.0) return 0.0;
  MatrixXd power = MatrixXd::Identity(dim, dim);
  double worst = 0.0;
  for (Index k = 0; k < dim; ++k) {
    if (k > 0) power = closed * power;
    const double scale = detail::spectral_norm(power) * e_norm;
    if (scale == 0.0) break;
    worst = std::max(worst, (model.H * (power * model.E)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

inline DecouplingSolution solve_ddp(const LinearModel& model, const DdpOptions& opts = {}) {
  const Index dim = model.A.rows();
  DecouplingSolution sol;
  const Subspace ker_h = kernel(model.H, detail::scaled(opts.rank_rtol, detail::spectral_norm(model.H)));
  auto mci = maximal_controlled_invariant(model.A, model.B, ker_h, opts);
  sol.v_star = std::move(mci.subspace);
  sol.iterations = mci.iterations;
  sol.friend_matrix = MatrixXd::Zero(model.B.cols(), dim);

  const Subspace im_e = image(model.E, detail::scaled(opts.rank_rtol, detail::spectral_norm(model.E)));
  const Containment c = contains(sol.v_star, im_e, opts.verify_tol);
  sol.containment_residual = c.residual;
  if (!c.contained) return sol;

  sol.friend_matrix = compute_friend(model.A, model.B, sol.v_star, opts);
  sol.invariance_residual = invariance_residual(model.A, model.B, sol.friend_matrix, sol.v_star);
  sol.chain_residual = verify_decoupling(model, sol.friend_matrix);
  sol.decouplable = true;
  return sol;
}

/// {x : Hx = 0, x_{4n+1} = x_{4n+3}, x_{4n+2} = x_{4n+4}} (1-based), i.e. the
/// last two links share their tilt coordinates.
inline Subspace proof_candidate_subspace(const LinearModel& model) {
  const Index n = model.n;
  if (n < 2) throw ModelError("proof_candidate_subspace: requires at least two links");
  const Index dim = model.A.rows();
  MatrixXd constraints = MatrixXd::Zero(4, dim);
  constraints.topRows(2) = model.H;
  const Index prev = model.layout.link_tilt(n - 1);
  const Index last = model.layout.link_tilt(n);
  for (Index k = 0; k < 2; ++k) {
    constraints(2 + k, prev + k) = 1.0;
    constraints(2 + k, last + k) = -1.0;
  }
  return kernel(constraints);
}

}  // namespace chaincart

#endif  // CHAINCART_DDP_HPP
