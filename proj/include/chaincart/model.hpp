#ifndef CHAINCART_MODEL_HPP
#define CHAINCART_MODEL_HPP

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace chaincart {

using Eigen::Index;
using Eigen::Matrix2d;
using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Physical parameters of the cart and the n links (SI units). Link masses are
/// point masses at the distal end of each massless link.
struct ChainCartParams {
  double m_cart = 1.0;
  std::vector<double> masses;
  std::vector<double> lengths;
  double g = 9.81;

  Index links() const { return static_cast<Index>(masses.size()); }

  void validate() const {
    if (masses.empty()) throw ModelError("params: at least one link is required");
    if (masses.size() != lengths.size()) {
      throw ModelError("params: masses has " + std::to_string(masses.size()) +
                       " entries but lengths has " + std::to_string(lengths.size()));
    }
    if (!(m_cart > 0.0) || !std::isfinite(m_cart)) {
      throw ModelError("params: cart mass must be positive");
    }
    for (std::size_t i = 0; i < masses.size(); ++i) {
      if (!(masses[i] > 0.0) || !std::isfinite(masses[i])) {
        throw ModelError("params: link mass " + std::to_string(i + 1) + " must be positive");
      }
      if (!(lengths[i] > 0.0) || !std::isfinite(lengths[i])) {
        throw ModelError("params: link length " + std::to_string(i + 1) + " must be positive");
      }
    }
    if (!(g > 0.0) || !std::isfinite(g)) throw ModelError("params: gravity must be positive");
  }

  /// Mass carried at and beyond link i (1-based): sum_{a=i}^n m_a.
  double tail_mass(Index i) const {
    double total = 0.0;
    for (Index a = i; a <= links(); ++a) total += masses[static_cast<std::size_t>(a - 1)];
    return total;
  }

  double length(Index i) const { return lengths[static_cast<std::size_t>(i - 1)]; }
  double mass(Index i) const { return masses[static_cast<std::size_t>(i - 1)]; }

  static ChainCartParams uniform(Index n, double m_cart = 1.0) {
    ChainCartParams p;
    p.m_cart = m_cart;
    p.masses.assign(static_cast<std::size_t>(n), 1.0);
    p.lengths.assign(static_cast<std::size_t>(n), 1.0);
    return p;
  }
};

/// Equilibrium selector: s_i = +1 for q_i = e3 (along gravity), -1 for q_i = -e3.
struct EquilibriumConfig {
  std::vector<int> s;

  Index links() const { return static_cast<Index>(s.size()); }
  int sign(Index i) const { return s[static_cast<std::size_t>(i - 1)]; }

  void validate(Index n) const {
    if (links() != n) {
      throw ModelError("equilibrium: sign tuple has " + std::to_string(s.size()) +
                       " entries but the chain has " + std::to_string(n) + " links");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != 1 && s[i] != -1) {
        throw ModelError("equilibrium: sign " + std::to_string(i + 1) + " must be +1 or -1");
      }
    }
  }

  static EquilibriumConfig hanging(Index n) {
    return {std::vector<int>(static_cast<std::size_t>(n), 1)};
  }
  static EquilibriumConfig inverted(Index n) {
    return {std::vector<int>(static_cast<std::size_t>(n), -1)};
  }
  /// (+1, -1, +1, ...), the folded configuration.
  static EquilibriumConfig alternating(Index n) {
    EquilibriumConfig eq;
    for (Index i = 0; i < n; ++i) eq.s.push_back(i % 2 == 0 ? 1 : -1);
    return eq;
  }

  std::string tuple_string() const {
    std::string out;
    for (int v : s) out += (v > 0 ? '+' : '-');
    return out;
  }
};

/// Cross-product matrix: hat(x) * y == x.cross(y).
inline Matrix3d hat(const Vector3d& x) {
  Matrix3d m;
  // clang-format off
  m <<    0.0, -x(2),  x(1),
         x(2),   0.0, -x(0),
        -x(1),  x(0),   0.0;
  // clang-format on
  return m;
}

/// C = [e1 | e2], the embedding of the cart plane into R^3.
inline Eigen::Matrix<double, 3, 2> plane_embedding() {
  Eigen::Matrix<double, 3, 2> c = Eigen::Matrix<double, 3, 2>::Zero();
  c(0, 0) = 1.0;
  c(1, 1) = 1.0;
  return c;
}

/// C^T hat(e3) C = [[0, -1], [1, 0]], the planar quarter turn.
inline Matrix2d quarter_turn() {
  Matrix2d j;
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

struct MassBlocks {
  double m00 = 0.0;
  /// Scalar coefficient of the cart-link block M_0i = C^T * coupling[i-1].
  std::vector<double> coupling;
  /// Link-link table M_ij, symmetric n x n.
  MatrixXd links;
};

inline MassBlocks mass_blocks(const ChainCartParams& p) {
  p.validate();
  const Index n = p.links();
  MassBlocks mb;
  mb.m00 = p.m_cart + p.tail_mass(1);
  mb.links.resize(n, n);
  for (Index i = 1; i <= n; ++i) {
    mb.coupling.push_back(p.tail_mass(i) * p.length(i));
    for (Index j = 1; j <= i; ++j) {
      const double mij = p.tail_mass(i) * p.length(j) * p.length(i);
      mb.links(i - 1, j - 1) = mij;
      mb.links(j - 1, i - 1) = mij;
    }
  }
  return mb;
}

/// Index map of the linear state
/// X = [dv | C^T dw_1 .. C^T dw_n | dx | C^T xi_1 .. C^T xi_n] (0-based offsets).
struct StateLayout {
  Index n = 0;

  Index dim() const { return 4 * n + 4; }
  Index half() const { return 2 * n + 2; }
  Index cart_velocity() const { return 0; }
  Index link_rate(Index i) const { return 2 * i; }
  Index cart_position() const { return 2 * n + 2; }
  Index link_tilt(Index i) const { return 2 * n + 2 + 2 * i; }

  /// One name per block, in state order.
  std::vector<std::string> block_names() const {
    std::vector<std::string> names{"dv"};
    for (Index i = 1; i <= n; ++i) names.push_back("CT_domega_" + std::to_string(i));
    names.push_back("dx");
    for (Index i = 1; i <= n; ++i) names.push_back("CT_xi_" + std::to_string(i));
    return names;
  }
};

struct LinearModel {
  MatrixXd A, B, E, H;
  Index n = 0;
  StateLayout layout;
};

/// L1 = [[M_xx, M_xq], [M_qx, M_qq]], the (2n+2)-square linearized mass matrix.
inline MatrixXd build_L1(const ChainCartParams& p, const EquilibriumConfig& eq) {
  const MassBlocks mb = mass_blocks(p);
  const Index n = p.links();
  eq.validate(n);
  const Matrix2d j = quarter_turn();
  MatrixXd l1 = MatrixXd::Zero(2 * n + 2, 2 * n + 2);
  l1.topLeftCorner<2, 2>() = mb.m00 * Matrix2d::Identity();
  for (Index i = 1; i <= n; ++i) {
    const Matrix2d mxq = -eq.sign(i) * mb.coupling[static_cast<std::size_t>(i - 1)] * j;
    l1.block<2, 2>(0, 2 * i) = mxq;
    l1.block<2, 2>(2 * i, 0) = mxq.transpose();
    for (Index k = 1; k <= n; ++k) {
      const double sij = i == k ? 1.0 : eq.sign(i) * eq.sign(k);
      l1.block<2, 2>(2 * i, 2 * k) = sij * mb.links(i - 1, k - 1) * Matrix2d::Identity();
    }
  }
  return l1;
}

/// G_qq = diag(s_i * (sum_{a>=i} m_a) * g * l_i * I2).
inline MatrixXd build_Gqq(const ChainCartParams& p, const EquilibriumConfig& eq) {
  p.validate();
  const Index n = p.links();
  eq.validate(n);
  MatrixXd g = MatrixXd::Zero(2 * n, 2 * n);
  for (Index i = 1; i <= n; ++i) {
    g.block<2, 2>(2 * (i - 1), 2 * (i - 1)) =
        eq.sign(i) * p.tail_mass(i) * p.g * p.length(i) * Matrix2d::Identity();
  }
  return g;
}

/**
 * @brief Root-free SPD factorization L1 = Q D Q^T of the chain mass matrix.
 *
 * With l_0 = 1, m_0 = m_cart and T = blockdiag(I2, s_1 J, ..., s_n J), the
 * factor is Q = T (P kron I2) where P(i, a) = l_i for i <= a and D = diag(m_a).
 * Applying Q^{-1} reduces to quarter turns, divisions by l_i and adjacent
 * differences, so the block-tridiagonal zero pattern of L1^{-1} is exact.
 */
class ChainMassFactor {
 public:
  ChainMassFactor(const ChainCartParams& p, const EquilibriumConfig& eq)
      : n_(p.links()) {
    p.validate();
    eq.validate(n_);
    lengths_.push_back(1.0);
    pivots_.push_back(p.m_cart);
    signs_.push_back(1);
    for (Index i = 1; i <= n_; ++i) {
      lengths_.push_back(p.length(i));
      pivots_.push_back(p.mass(i));
      signs_.push_back(eq.sign(i));
    }
    double largest = 0.0;
    double smallest = pivots_.front();
    for (double m : pivots_) {
      largest = std::max(largest, m);
      smallest = std::min(smallest, m);
    }
    if (!(smallest > 0.0) || smallest < largest * std::numeric_limits<double>::epsilon()) {
      throw ModelError("mass matrix singular");
    }
  }

  Index size() const { return 2 * n_ + 2; }

  /// Solves L1 * X = rhs column by column.
  MatrixXd solve(const MatrixXd& rhs) const {
    if (rhs.rows() != size()) throw ModelError("mass solve: right-hand side has wrong row count");
    MatrixXd out(rhs.rows(), rhs.cols());
    for (Index c = 0; c < rhs.cols(); ++c) out.col(c) = solve_vector(rhs.col(c));
    return out;
  }

  /// Q D Q^T assembled densely, for cross-checking against build_L1.
  MatrixXd reconstruct() const {
    MatrixXd q = MatrixXd::Zero(size(), size());
    for (Index i = 0; i <= n_; ++i) {
      for (Index a = i; a <= n_; ++a) q.block<2, 2>(2 * i, 2 * a) = lengths_[at(i)] * turn(i);
    }
    VectorXd d(size());
    for (Index a = 0; a <= n_; ++a) d.segment<2>(2 * a).setConstant(pivots_[at(a)]);
    return q * d.asDiagonal() * q.transpose();
  }

 private:
  static std::size_t at(Index i) { return static_cast<std::size_t>(i); }

  Matrix2d turn(Index i) const {
    return i == 0 ? Matrix2d::Identity() : Matrix2d(signs_[at(i)] * quarter_turn());
  }

  // J^T y and J y are sign-flipped swaps, exact in floating point.
  Vector2d turn_transpose_apply(Index i, const Vector2d& y) const {
    if (i == 0) return y;
    return signs_[at(i)] * Vector2d(y(1), -y(0));
  }
  Vector2d turn_apply(Index i, const Vector2d& y) const {
    if (i == 0) return y;
    return signs_[at(i)] * Vector2d(-y(1), y(0));
  }

  VectorXd solve_vector(const VectorXd& b) const {
    std::vector<Vector2d> r(at(n_ + 1));
    for (Index i = 0; i <= n_; ++i) {
      r[at(i)] = turn_transpose_apply(i, b.segment<2>(2 * i)) / lengths_[at(i)];
    }
    // P^{-1} = U^{-1} diag(1/l) with U upper-triangular ones: adjacent differences.
    std::vector<Vector2d> c(at(n_ + 1));
    for (Index a = 0; a <= n_; ++a) {
      c[at(a)] = (a < n_ ? Vector2d(r[at(a)] - r[at(a + 1)]) : r[at(a)]) / pivots_[at(a)];
    }
    VectorXd x(size());
    for (Index i = 0; i <= n_; ++i) {
      const Vector2d diff = i > 0 ? Vector2d(c[at(i)] - c[at(i - 1)]) : c[at(i)];
      x.segment<2>(2 * i) = turn_apply(i, diff / lengths_[at(i)]);
    }
    return x;
  }

  Index n_;
  std::vector<double> lengths_;
  std::vector<double> pivots_;
  std::vector<int> signs_;
};

/// Linearization about the equilibrium selected by `eq`, with dz/dt = p on the
/// kinematic rows, u entering the first link's rate equation and w the cart's.
inline LinearModel linearize(const ChainCartParams& p, const EquilibriumConfig& eq) {
  p.validate();
  const Index n = p.links();
  eq.validate(n);
  const ChainMassFactor factor(p, eq);
  const Index half = 2 * n + 2;

  MatrixXd stiffness = MatrixXd::Zero(half, half);
  stiffness.bottomRightCorner(2 * n, 2 * n) = build_Gqq(p, eq);

  LinearModel lm;
  lm.n = n;
  lm.layout = StateLayout{n};
  lm.A = MatrixXd::Zero(2 * half, 2 * half);
  lm.A.topRightCorner(half, half) = -factor.solve(stiffness);
  lm.A.bottomLeftCorner(half, half).setIdentity();

  MatrixXd u_gen = MatrixXd::Zero(half, 2);
  u_gen.block<2, 2>(2, 0).setIdentity();
  MatrixXd w_gen = MatrixXd::Zero(half, 2);
  w_gen.topRows<2>().setIdentity();

  lm.B = MatrixXd::Zero(2 * half, 2);
  lm.B.topRows(half) = factor.solve(u_gen);
  lm.E = MatrixXd::Zero(2 * half, 2);
  lm.E.topRows(half) = factor.solve(w_gen);

  lm.H = MatrixXd::Zero(2, 2 * half);
  lm.H.block<2, 2>(0, lm.layout.link_rate(n)).setIdentity();

  if (!lm.A.allFinite() || !lm.B.allFinite() || !lm.E.allFinite()) {
    throw ModelError("mass matrix singular");
  }
  return lm;
}

/// Configuration and velocities of the nonlinear system on (S^2)^n x R^2.
struct NonlinearState {
  Vector2d x = Vector2d::Zero();
  Vector2d v = Vector2d::Zero();
  std::vector<Vector3d> q;
  std::vector<Vector3d> omega;

  Index links() const { return static_cast<Index>(q.size()); }

  void validate(double tol = 1e-9) const {
    if (q.size() != omega.size()) throw ModelError("state: q and omega differ in length");
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (std::abs(q[i].norm() - 1.0) > tol) {
        throw ModelError("state: q_" + std::to_string(i + 1) + " is not a unit vector");
      }
      if (std::abs(q[i].dot(omega[i])) > tol) {
        throw ModelError("state: omega_" + std::to_string(i + 1) + " is not orthogonal to q");
      }
    }
  }
};

inline NonlinearState equilibrium_state(const ChainCartParams& p, const EquilibriumConfig& eq) {
  p.validate();
  eq.validate(p.links());
  NonlinearState st;
  for (Index i = 1; i <= p.links(); ++i) {
    st.q.push_back(eq.sign(i) * Vector3d::UnitZ());
    st.omega.push_back(Vector3d::Zero());
  }
  return st;
}

struct Accelerations {
  Vector2d cart = Vector2d::Zero();
  std::vector<Vector3d> omega_dot;
};

namespace detail {

struct NonlinearSystem {
  MatrixXd mass;
  VectorXd rhs;
};

// Mass matrix and right-hand side of the Euler-Lagrange equations in
// (x'', w_1', ..., w_n'). The input u is a planar torque on link 1, projected to
// the tangent space of q_1; the disturbance w is a force on the cart.
inline NonlinearSystem assemble(const ChainCartParams& p, const NonlinearState& st,
                                const Vector2d& u, const Vector2d& w) {
  const MassBlocks mb = mass_blocks(p);
  const Index n = p.links();
  if (st.links() != n) throw ModelError("state: link count does not match params");
  const auto c = plane_embedding();
  const Index dim = 2 + 3 * n;
  NonlinearSystem sys{MatrixXd::Zero(dim, dim), VectorXd::Zero(dim)};

  std::vector<Matrix3d> qh;
  for (const auto& q : st.q) qh.push_back(hat(q));
  const auto idx = [](Index i) { return static_cast<std::size_t>(i - 1); };

  sys.mass.topLeftCorner<2, 2>() = mb.m00 * Matrix2d::Identity();
  Vector2d cart_rhs = w;
  for (Index i = 1; i <= n; ++i) {
    const double coup = mb.coupling[idx(i)];
    const Eigen::Matrix<double, 2, 3> m0i = -coup * c.transpose() * qh[idx(i)];
    sys.mass.block<2, 3>(0, 2 + 3 * (i - 1)) = m0i;
    sys.mass.block<3, 2>(2 + 3 * (i - 1), 0) = m0i.transpose();
    cart_rhs += coup * st.omega[idx(i)].squaredNorm() * c.transpose() * st.q[idx(i)];
  }
  sys.rhs.head<2>() = cart_rhs;

  for (Index i = 1; i <= n; ++i) {
    const Index row = 2 + 3 * (i - 1);
    Vector3d r = p.tail_mass(i) * p.g * p.length(i) * qh[idx(i)] * Vector3d::UnitZ();
    for (Index j = 1; j <= n; ++j) {
      const Index col = 2 + 3 * (j - 1);
      if (j == i) {
        sys.mass.block<3, 3>(row, col) = mb.links(i - 1, i - 1) * Matrix3d::Identity();
        continue;
      }
      sys.mass.block<3, 3>(row, col) = -mb.links(i - 1, j - 1) * qh[idx(i)] * qh[idx(j)];
      r += mb.links(i - 1, j - 1) * st.omega[idx(j)].squaredNorm() * qh[idx(i)] * st.q[idx(j)];
    }
    if (i == 1) r -= qh[0] * qh[0] * (c * u);
    sys.rhs.segment<3>(row) = r;
  }
  return sys;
}

}  // namespace detail

inline Accelerations nonlinear_accelerations(const ChainCartParams& p, const NonlinearState& st,
                                             const Vector2d& u, const Vector2d& w) {
  const auto sys = detail::assemble(p, st, u, w);
  Eigen::LLT<MatrixXd> llt(sys.mass);
  if (llt.info() != Eigen::Success) throw ModelError("nonlinear mass matrix singular");
  const VectorXd sol = llt.solve(sys.rhs);
  if (!sol.allFinite()) throw ModelError("nonlinear mass matrix singular");
  Accelerations acc;
  acc.cart = sol.head<2>();
  for (Index i = 0; i < p.links(); ++i) acc.omega_dot.push_back(sol.segment<3>(2 + 3 * i));
  return acc;
}

/// Gravitational potential, minimal in the hanging configuration.
inline double potential_energy(const ChainCartParams& p, const NonlinearState& st) {
  double v = 0.0;
  for (Index i = 1; i <= p.links(); ++i) {
    v -= p.tail_mass(i) * p.g * p.length(i) * st.q[static_cast<std::size_t>(i - 1)].z();
  }
  return v;
}

inline double kinetic_energy(const ChainCartParams& p, const NonlinearState& st) {
  const auto sys = detail::assemble(p, st, Vector2d::Zero(), Vector2d::Zero());
  VectorXd vel(2 + 3 * p.links());
  vel.head<2>() = st.v;
  for (Index i = 0; i < p.links(); ++i) vel.segment<3>(2 + 3 * i) = st.omega[static_cast<std::size_t>(i)];
  return 0.5 * vel.dot(sys.mass * vel);
}

inline double energy(const ChainCartParams& p, const NonlinearState& st) {
  return kinetic_energy(p, st) + potential_energy(p, st);
}

/// exp(hat(axis)) * v by the Rodrigues formula.
inline Vector3d rotate(const Vector3d& axis, const Vector3d& v) {
  const double angle = axis.norm();
  if (angle == 0.0) return v;
  const Vector3d k = axis / angle;
  return v * std::cos(angle) + k.cross(v) * std::sin(angle) +
         k * k.dot(v) * (1.0 - std::cos(angle));
}

/// Nonlinear state whose linear coordinates are X: the cart is copied, each
/// link is rotated by exp(hat(C * C^T xi_i)) away from s_i e3, and each
/// angular velocity is C * C^T dw_i projected onto the tangent plane.
inline NonlinearState state_from_linear(const ChainCartParams& p, const EquilibriumConfig& eq,
                                        const VectorXd& x) {
  const StateLayout layout{p.links()};
  if (x.size() != layout.dim()) throw ModelError("state_from_linear: wrong state dimension");
  const auto c = plane_embedding();
  NonlinearState st = equilibrium_state(p, eq);
  st.v = x.segment<2>(layout.cart_velocity());
  st.x = x.segment<2>(layout.cart_position());
  for (Index i = 1; i <= p.links(); ++i) {
    auto& q = st.q[static_cast<std::size_t>(i - 1)];
    q = rotate(c * x.segment<2>(layout.link_tilt(i)), q).normalized();
    const Vector3d w = c * x.segment<2>(layout.link_rate(i));
    st.omega[static_cast<std::size_t>(i - 1)] = w - q * q.dot(w);
  }
  return st;
}

/// Inverse of state_from_linear: xi_i is recovered through the exact log map
/// of the rotation taking s_i e3 to q_i about a horizontal axis.
inline VectorXd linear_coordinates(const EquilibriumConfig& eq, const NonlinearState& st) {
  const StateLayout layout{eq.links()};
  if (st.links() != eq.links()) throw ModelError("linear_coordinates: link count mismatch");
  VectorXd x = VectorXd::Zero(layout.dim());
  x.segment<2>(layout.cart_velocity()) = st.v;
  x.segment<2>(layout.cart_position()) = st.x;
  for (Index i = 1; i <= eq.links(); ++i) {
    const Vector3d& q = st.q[static_cast<std::size_t>(i - 1)];
    const double s = eq.sign(i);
    const double planar = std::hypot(q.x(), q.y());
    const double angle = std::atan2(planar, s * q.z());
    // angle / sin(angle) -> 1 as the tilt vanishes.
    const double gain = planar > 0.0 ? angle / planar : 1.0;
    x.segment<2>(layout.link_tilt(i)) = s * gain * Vector2d(-q.y(), q.x());
    x.segment<2>(layout.link_rate(i)) = st.omega[static_cast<std::size_t>(i - 1)].head<2>();
  }
  return x;
}

/// First-order link direction predicted by linear coordinates:
/// q_i ~ s_i e3 + xi_i x (s_i e3).
inline std::vector<Vector3d> linear_directions(const EquilibriumConfig& eq, const VectorXd& x) {
  const StateLayout layout{eq.links()};
  const auto c = plane_embedding();
  std::vector<Vector3d> out;
  for (Index i = 1; i <= eq.links(); ++i) {
    const Vector3d base = eq.sign(i) * Vector3d::UnitZ();
    out.push_back(base + (c * x.segment<2>(layout.link_tilt(i))).cross(base));
  }
  return out;
}

}  // namespace chaincart

#endif  // CHAINCART_MODEL_HPP
