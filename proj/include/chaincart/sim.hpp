#ifndef CHAINCART_SIM_HPP
#define CHAINCART_SIM_HPP

#include <cmath>
#include <functional>
#include <future>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaincart/model.hpp"

namespace chaincart {

/// Raised when a run leaves the finite range or hits a singular mass matrix.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, double time)
      : std::runtime_error(what + " at t=" + std::to_string(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

struct DisturbanceSignal {
  enum class Kind { zero, step, sine };

  Kind kind = Kind::zero;
  Vector2d amplitude = Vector2d::Zero();
  double t0 = 0.0;
  double frequency_hz = 0.0;
  double phase = 0.0;

  static DisturbanceSignal none() { return {}; }
  static DisturbanceSignal step(Vector2d amp, double t0 = 0.0) {
    DisturbanceSignal w;
    w.kind = Kind::step;
    w.amplitude = amp;
    w.t0 = t0;
    return w;
  }
  static DisturbanceSignal sine(Vector2d amp, double hz, double phase = 0.0) {
    DisturbanceSignal w;
    w.kind = Kind::sine;
    w.amplitude = amp;
    w.frequency_hz = hz;
    w.phase = phase;
    return w;
  }

  void validate() const {
    if (!amplitude.allFinite()) throw std::invalid_argument("signal: amplitude must be finite");
    if (kind == Kind::sine && !(frequency_hz > 0.0)) {
      throw std::invalid_argument("signal: sine frequency must be positive");
    }
  }

  Vector2d operator()(double t) const {
    switch (kind) {
      case Kind::zero:
        return Vector2d::Zero();
      case Kind::step:
        return t >= t0 ? amplitude : Vector2d::Zero();
      case Kind::sine:
        return amplitude * std::sin(2.0 * std::numbers::pi * frequency_hz * t + phase);
    }
    return Vector2d::Zero();
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind) {
      case Kind::zero:
        os << "zero";
        break;
      case Kind::step:
        os << "step amplitude=(" << amplitude(0) << "," << amplitude(1) << ") t0=" << t0;
        break;
      case Kind::sine:
        os << "sine amplitude=(" << amplitude(0) << "," << amplitude(1)
           << ") frequency_hz=" << frequency_hz << " phase=" << phase;
        break;
    }
    return os.str();
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<VectorXd> states;
  std::vector<Vector2d> outputs;
  std::string meta;

  std::size_t size() const { return times.size(); }
};

/// Number of integration steps covering [0, t_end]: floor(t_end / dt), robust
/// to t_end / dt landing a rounding error below an integer.
inline long step_count(double t_end, double dt) {
  if (!(dt > 0.0) || !(t_end >= dt)) {
    throw std::invalid_argument("simulation: require dt > 0 and t_end >= dt");
  }
  const double ratio = t_end / dt;
  const double nearest = std::round(ratio);
  return static_cast<long>(std::abs(ratio - nearest) <= 1e-9 * nearest ? nearest : std::floor(ratio));
}

/// One classical fourth-order Runge-Kutta step of dx/dt = f(t, x).
template <typename Vec, typename Rhs>
Vec rk4_step(const Rhs& f, double t, const Vec& x, double dt) {
  const Vec k1 = f(t, x);
  const Vec k2 = f(t + 0.5 * dt, Vec(x + 0.5 * dt * k1));
  const Vec k3 = f(t + 0.5 * dt, Vec(x + 0.5 * dt * k2));
  const Vec k4 = f(t + dt, Vec(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates dx/dt = (A + BF) x + E w(t) from x0, sampling y = Hx.
inline Trajectory simulate_linear(const LinearModel& model, const MatrixXd& f,
                                  const DisturbanceSignal& w, const VectorXd& x0, double t_end,
                                  double dt) {
  const Index dim = model.A.rows();
  if (x0.size() != dim) throw std::invalid_argument("simulate_linear: x0 has wrong dimension");
  if (f.rows() != model.B.cols() || f.cols() != dim) {
    throw std::invalid_argument("simulate_linear: feedback has wrong shape");
  }
  w.validate();
  const long steps = step_count(t_end, dt);
  const MatrixXd closed = model.A + model.B * f;
  const auto rhs = [&](double t, const VectorXd& x) -> VectorXd {
    return closed * x + model.E * w(t);
  };

  Trajectory traj;
  traj.meta = "linear n=" + std::to_string(model.n) + " signal=" + w.describe();
  traj.times.reserve(static_cast<std::size_t>(steps + 1));
  VectorXd x = x0;
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k > 0) {
      x = rk4_step(rhs, static_cast<double>(k - 1) * dt, x, dt);
      if (!x.allFinite()) throw SimulationError("divergence", t);
    }
    traj.times.push_back(t);
    traj.outputs.push_back(model.H * x);
    traj.states.push_back(x);
  }
  return traj;
}

/// State feedback for the nonlinear model: u = controller(t, state).
using Controller = std::function<Vector2d(double, const NonlinearState&)>;

inline Controller zero_controller() {
  return [](double, const NonlinearState&) { return Vector2d::Zero(); };
}

/// u = F * X, with X the linear coordinates of the state about `eq`.
inline Controller linear_feedback(const MatrixXd& f, const EquilibriumConfig& eq) {
  return [f, eq](double, const NonlinearState& st) -> Vector2d {
    return f * linear_coordinates(eq, st);
  };
}

namespace detail {

// Packed layout: [x (2) | v (2) | q_1..q_n (3n) | w_1..w_n (3n)].
inline VectorXd pack(const NonlinearState& st) {
  const Index n = st.links();
  VectorXd out(4 + 6 * n);
  out.head<2>() = st.x;
  out.segment<2>(2) = st.v;
  for (Index i = 0; i < n; ++i) {
    out.segment<3>(4 + 3 * i) = st.q[static_cast<std::size_t>(i)];
    out.segment<3>(4 + 3 * n + 3 * i) = st.omega[static_cast<std::size_t>(i)];
  }
  return out;
}

inline NonlinearState unpack(const VectorXd& y, Index n) {
  NonlinearState st;
  st.x = y.head<2>();
  st.v = y.segment<2>(2);
  for (Index i = 0; i < n; ++i) {
    st.q.push_back(y.segment<3>(4 + 3 * i));
    st.omega.push_back(y.segment<3>(4 + 3 * n + 3 * i));
  }
  return st;
}

// Renormalize every q_i and remove the component of w_i along q_i.
inline void project_to_manifold(VectorXd& y, Index n) {
  for (Index i = 0; i < n; ++i) {
    auto q = y.segment<3>(4 + 3 * i);
    q.normalize();
    auto w = y.segment<3>(4 + 3 * n + 3 * i);
    w -= q * q.dot(w);
  }
}

}  // namespace detail

/// Fixed-step RK4 on the Euler-Lagrange equations with q_i' = w_i x q_i,
/// projecting back onto (S^2)^n after each step. Output samples are C^T w_n.
inline Trajectory simulate_nonlinear(const ChainCartParams& p, const Controller& controller,
                                     const DisturbanceSignal& w, const NonlinearState& init,
                                     double t_end, double dt) {
  p.validate();
  w.validate();
  init.validate();
  const Index n = p.links();
  if (init.links() != n) throw std::invalid_argument("simulate_nonlinear: link count mismatch");
  const long steps = step_count(t_end, dt);

  const auto rhs = [&](double t, const VectorXd& y) -> VectorXd {
    const NonlinearState st = detail::unpack(y, n);
    const Accelerations acc = nonlinear_accelerations(p, st, controller(t, st), w(t));
    VectorXd dy(y.size());
    dy.head<2>() = st.v;
    dy.segment<2>(2) = acc.cart;
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      dy.segment<3>(4 + 3 * i) = st.omega[k].cross(st.q[k]);
      dy.segment<3>(4 + 3 * n + 3 * i) = acc.omega_dot[k];
    }
    return dy;
  };

  Trajectory traj;
  traj.meta = "nonlinear n=" + std::to_string(n) + " signal=" + w.describe();
  VectorXd y = detail::pack(init);
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k > 0) {
      try {
        y = rk4_step(rhs, static_cast<double>(k - 1) * dt, y, dt);
      } catch (const ModelError& e) {
        throw SimulationError(e.what(), t);
      }
      if (!y.allFinite()) throw SimulationError("divergence", t);
      detail::project_to_manifold(y, n);
    }
    traj.times.push_back(t);
    traj.outputs.push_back(y.segment<2>(4 + 3 * n + 3 * (n - 1)));
    traj.states.push_back(y);
  }
  return traj;
}

inline NonlinearState nonlinear_state_at(const Trajectory& traj, std::size_t k, Index n) {
  return detail::unpack(traj.states.at(k), n);
}

struct DifferenceSeries {
  std::vector<double> times;
  /// y(disturbed) - y(undisturbed) under the supplied feedback.
  std::vector<Vector2d> with_feedback;
  /// The same difference with F = 0.
  std::vector<Vector2d> without_feedback;

  /// Largest |difference| on output axis `axis` for the chosen series.
  static double peak(const std::vector<Vector2d>& series, Index axis) {
    double m = 0.0;
    for (const auto& v : series) m = std::max(m, std::abs(v(axis)));
    return m;
  }
};

/// Four zero-initial-state runs, {F, 0} x {w, zero}; returns the per-axis
/// output differences disturbed minus undisturbed for both feedback settings.
inline DifferenceSeries difference_experiment(const LinearModel& model, const MatrixXd& f,
                                              const DisturbanceSignal& w, double t_end, double dt) {
  const VectorXd x0 = VectorXd::Zero(model.A.rows());
  const MatrixXd open = MatrixXd::Zero(model.B.cols(), model.A.rows());
  const auto none = DisturbanceSignal::none();
  const auto run = [&](const MatrixXd& gain, const DisturbanceSignal& sig) {
    return simulate_linear(model, gain, sig, x0, t_end, dt);
  };
  auto fw = std::async(std::launch::async, run, std::cref(f), std::cref(w));
  auto f0 = std::async(std::launch::async, run, std::cref(f), std::cref(none));
  auto ow = std::async(std::launch::async, run, std::cref(open), std::cref(w));
  auto o0 = std::async(std::launch::async, run, std::cref(open), std::cref(none));
  const Trajectory with_w = fw.get(), with_0 = f0.get(), open_w = ow.get(), open_0 = o0.get();

  DifferenceSeries out;
  out.times = with_w.times;
  for (std::size_t k = 0; k < with_w.size(); ++k) {
    out.with_feedback.push_back(with_w.outputs[k] - with_0.outputs[k]);
    out.without_feedback.push_back(open_w.outputs[k] - open_0.outputs[k]);
  }
  return out;
}

/// Per-sample C^T xi_n, the last link's tilt, from a linear trajectory.
inline std::vector<Vector2d> link_position_series(const Trajectory& traj, const LinearModel& model) {
  std::vector<Vector2d> out;
  out.reserve(traj.size());
  const Index offset = model.layout.link_tilt(model.n);
  for (const auto& x : traj.states) {
    if (x.size() != model.layout.dim()) {
      throw std::invalid_argument("link_position_series: trajectory layout does not match model");
    }
    out.push_back(x.segment<2>(offset));
  }
  return out;
}

struct LinearizationGap {
  /// max_t max_i |q_i(t) - (s_i e3 + xi_i(t) x s_i e3)|, the configuration-space gap.
  double direction_gap = 0.0;
  /// max_t |X_nonlinear(t) - X_linear(t)| in linear coordinates.
  double coordinate_gap = 0.0;
};

/// Linear and nonlinear runs from state_from_linear(eps * dir) with w = 0 and
/// u = F X (F = 0 gives free motion).
inline LinearizationGap linearization_gap(const ChainCartParams& p, const EquilibriumConfig& eq,
                                          const VectorXd& direction, double eps, double t_end,
                                          double dt, const std::optional<MatrixXd>& f = std::nullopt) {
  const LinearModel lm = linearize(p, eq);
  const MatrixXd gain = f.value_or(MatrixXd::Zero(lm.B.cols(), lm.layout.dim()));
  const VectorXd x0 = eps * direction;
  const Trajectory lin = simulate_linear(lm, gain, DisturbanceSignal::none(), x0, t_end, dt);
  const Controller ctrl = f ? linear_feedback(gain, eq) : zero_controller();
  const Trajectory nl = simulate_nonlinear(p, ctrl, DisturbanceSignal::none(),
                                           state_from_linear(p, eq, x0), t_end, dt);
  LinearizationGap gap;
  for (std::size_t k = 0; k < lin.size(); ++k) {
    const NonlinearState st = nonlinear_state_at(nl, k, p.links());
    const auto predicted = linear_directions(eq, lin.states[k]);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      gap.direction_gap = std::max(gap.direction_gap, (st.q[i] - predicted[i]).norm());
    }
    gap.coordinate_gap =
        std::max(gap.coordinate_gap, (linear_coordinates(eq, st) - lin.states[k]).norm());
  }
  return gap;
}

}  // namespace chaincart

#endif  // CHAINCART_SIM_HPP
