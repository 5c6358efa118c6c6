#include "ibctrl/slip.hpp"

#include <boost/numeric/odeint.hpp>

#include <array>
#include <cmath>

namespace ibctrl {

namespace odeint = boost::numeric::odeint;
using StanceState = std::array<double, 4>;  // r, theta, r_dot, theta_dot

Eigen::Vector4d stance_dynamics(const SlipParams& params, const Eigen::Vector4d& polar) {
  params.validate();
  const double r = polar(0), theta = polar(1), r_dot = polar(2), theta_dot = polar(3);
  if (!(r > 0.0)) throw std::invalid_argument("stance_dynamics: leg fully compressed (r <= 0)");
  Eigen::Vector4d dot;
  dot(0) = r_dot;
  dot(1) = theta_dot;
  dot(2) = r * theta_dot * theta_dot - params.gravity * std::cos(theta) +
           params.stiffness / params.mass * (params.rest_length - r);
  dot(3) = (params.gravity * std::sin(theta) - 2.0 * r_dot * theta_dot) / r;
  return dot;
}

double stance_energy(const SlipParams& params, const Eigen::Vector4d& polar) {
  const double r = polar(0), theta = polar(1), r_dot = polar(2), theta_dot = polar(3);
  const double compression = params.rest_length - r;
  return 0.5 * params.mass * (r_dot * r_dot + r * r * theta_dot * theta_dot) +
         params.mass * params.gravity * r * std::cos(theta) +
         0.5 * params.stiffness * compression * compression;
}

namespace {

struct StanceResult {
  double t_liftoff;
  StanceState state;
};

// Integrate the stance phase until r crosses rest length from below with
// r_dot > 0. Adaptive dopri5 with dense output; events located by
//   sign-change bracketing plus bisection on the interpolant.
StanceResult integrate_stance(const SlipParams& params, const StanceState& y0,
                              const ReturnMapOptions& opts, HopTrace* trace, double d_foot) {
  auto rhs = [&params](const StanceState& y, StanceState& dydt, double) {
    const Eigen::Vector4d dot =
        stance_dynamics(params, Eigen::Vector4d(y[0], y[1], y[2], y[3]));
    dydt = {dot(0), dot(1), dot(2), dot(3)};
  };

  auto record = [&](double t, const StanceState& y) {
    if (trace == nullptr) return;
    trace->push_back({t, 0, y[0], y[1], y[2], y[3], d_foot - y[0] * std::sin(y[1]),
                      y[0] * std::cos(y[1])});
  };

  auto stepper = odeint::make_dense_output(opts.abs_tol, opts.rel_tol,
                                           odeint::runge_kutta_dopri5<StanceState>());
  stepper.initialize(y0, 0.0, 1e-4);
  record(0.0, y0);

  const double r_max = params.rest_length;
  auto liftoff_fn = [&](const StanceState& y) { return y[0] - r_max; };

  while (stepper.current_time() < opts.max_stance_time) {
    stepper.do_step(rhs);
    const double t0 = stepper.previous_time();
    const double t1 = stepper.current_time();
    const StanceState& y1 = stepper.current_state();

    if (y1[0] * std::cos(y1[1]) <= 0.0)
      throw FailedHop(FailedHop::Phase::kStance, "head reached the ground during stance");
    if (!(std::isfinite(y1[0]) && std::isfinite(y1[1]) && std::isfinite(y1[2]) &&
          std::isfinite(y1[3])))
      throw FailedHop(FailedHop::Phase::kStance, "non-finite stance state");

    // liftoff: r - r_max crosses zero from below with positive radial speed
    if (liftoff_fn(y1) >= 0.0 && y1[2] > 0.0) {
      double lo = t0, hi = t1;
      StanceState y_mid;
      while (hi - lo > opts.event_time_tol) {
        const double mid = 0.5 * (lo + hi);
        stepper.calc_state(mid, y_mid);
        if (liftoff_fn(y_mid) >= 0.0)
          hi = mid;
        else
          lo = mid;
      }
      StanceState y_event;
      stepper.calc_state(hi, y_event);
      record(hi, y_event);
      return {hi, y_event};
    }
    record(t1, y1);
  }
  throw FailedHop(FailedHop::Phase::kStance, "no liftoff: spring never re-extended");
}

}  // namespace

TouchdownState return_map(const SlipParams& params, const TouchdownState& state,
                          double delta_theta, const ReturnMapOptions& opts, HopTrace* trace) {
  params.validate();
  if (!(std::abs(state.theta) < M_PI / 2.0))
    throw std::invalid_argument("return_map: touchdown angle must satisfy |theta| < pi/2");
  if (!state.to_vector().allFinite() || !std::isfinite(delta_theta))
    throw std::invalid_argument("return_map: non-finite touchdown state or input");
  if (state.r_dot >= 0.0)
    throw FailedHop(FailedHop::Phase::kStance, "no spring compression at touchdown");

  const double r_max = params.rest_length;
  const double g = params.gravity;
  // foot plant position; the head at touchdown sits at d
  const double d_foot = state.d + r_max * std::sin(state.theta);

  const StanceState y0{r_max, state.theta, state.r_dot, state.theta_dot};
  const StanceResult lift = integrate_stance(params, y0, opts, trace, d_foot);

  const double theta_lo = lift.state[1];
  const double rd_lo = lift.state[2];
  const double thd_lo = lift.state[3];
  // Cartesian head state at liftoff (foot at the origin of the hop frame)
  const double x_lo = d_foot - r_max * std::sin(theta_lo);
  const double z_lo = r_max * std::cos(theta_lo);
  const double vx = -rd_lo * std::sin(theta_lo) - r_max * thd_lo * std::cos(theta_lo);
  const double vz = rd_lo * std::cos(theta_lo) - r_max * thd_lo * std::sin(theta_lo);
  // travel direction from the stance arc traversal (left-right symmetric)
  const double direction = state.theta - theta_lo;
  if (vx * direction < 0.0 || (vx == 0.0 && direction != 0.0))
    throw FailedHop(FailedHop::Phase::kFlight, "backward flight at liftoff");

  const double theta_next = state.theta + delta_theta;
  if (!(std::abs(theta_next) < M_PI / 2.0))
    throw FailedHop(FailedHop::Phase::kFlight, "commanded touchdown angle beyond pi/2");
  const double z_td = r_max * std::cos(theta_next);

  // descend branch of z_lo + vz t - g t^2 / 2 = z_td
  const double disc = vz * vz - 2.0 * g * (z_td - z_lo);
  if (disc < 0.0)
    throw FailedHop(FailedHop::Phase::kFlight, "apex below required touchdown height");
  const double t_flight = (vz + std::sqrt(disc)) / g;
  if (!(t_flight > 0.0))
    throw FailedHop(FailedHop::Phase::kFlight, "touchdown height unreachable on descent");

  if (trace != nullptr) {
    const int samples = 50;
    for (int i = 1; i <= samples; ++i) {
      const double t = t_flight * i / samples;
      const double z = z_lo + vz * t - 0.5 * g * t * t;
      // leg angle is only defined at the contact events; report the flown arc
      trace->push_back({lift.t_liftoff + t, 1, r_max, theta_next, 0.0, 0.0, x_lo + vx * t, z});
    }
  }

  TouchdownState next;
  next.d = x_lo + vx * t_flight;
  next.theta = theta_next;
  const double vz_td = vz - g * t_flight;
  next.r_dot = -vx * std::sin(theta_next) + vz_td * std::cos(theta_next);
  next.theta_dot = (-vx * std::cos(theta_next) - vz_td * std::sin(theta_next)) / r_max;
  return next;
}

namespace {

ReturnMapJacobian jacobian_at_step(const SlipParams& params, const TouchdownState& state,
                                   double delta_theta, const ReturnMapOptions& opts,
                                   double scale) {
  ReturnMapJacobian jac;
  const Eigen::Vector4d s = state.to_vector();
  for (int i = 0; i < 4; ++i) {
    const double h = scale * std::max(1.0, std::abs(s(i)));
    Eigen::Vector4d hi = s, lo = s;
    hi(i) += h;
    lo(i) -= h;
    try {
      jac.A.col(i) = (return_map(params, TouchdownState::from_vector(hi), delta_theta, opts)
                          .to_vector() -
                      return_map(params, TouchdownState::from_vector(lo), delta_theta, opts)
                          .to_vector()) /
                     (2.0 * h);
    } catch (const FailedHop& e) {
      throw std::runtime_error(
          std::string("linearize_return_map: hop failed inside the stencil (") + e.what() +
          "); try smaller steps or a different nominal");
    }
  }
  const double h = scale * std::max(1.0, std::abs(delta_theta));
  try {
    jac.B = (return_map(params, state, delta_theta + h, opts).to_vector() -
             return_map(params, state, delta_theta - h, opts).to_vector()) /
            (2.0 * h);
  } catch (const FailedHop& e) {
    throw std::runtime_error(
        std::string("linearize_return_map: hop failed inside the stencil (") + e.what() +
        "); try smaller steps or a different nominal");
  }
  return jac;
}

}  // namespace

ReturnMapJacobian linearize_return_map(const SlipParams& params, const TouchdownState& state,
                                       double delta_theta, const ReturnMapOptions& opts) {
  const ReturnMapJacobian coarse = jacobian_at_step(params, state, delta_theta, opts, 1e-6);
  const ReturnMapJacobian fine = jacobian_at_step(params, state, delta_theta, opts, 5e-7);
  const double scale = std::max(1.0, fine.A.cwiseAbs().maxCoeff());
  const double disagreement =
      std::max((coarse.A - fine.A).cwiseAbs().maxCoeff(), (coarse.B - fine.B).cwiseAbs().maxCoeff());
  if (disagreement > 1e-4 * scale)
    throw std::runtime_error("linearize_return_map: Richardson consistency check failed (" +
                             std::to_string(disagreement) + ")");
  return fine;
}

}  // namespace ibctrl
