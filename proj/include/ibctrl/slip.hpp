#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace ibctrl {

// Spring-loaded inverted pendulum: point mass on a massless spring leg.
// Touchdown state [d, theta, r_dot, theta_dot] with theta measured from
// vertical, positive in the direction of travel (the foot lands ahead of the
// head). The input is the change applied to the next touchdown angle.
struct SlipParams {
  double mass = 1.0;
  double stiffness = 300.0;
  double gravity = 9.8;
  double rest_length = 1.0;

  void validate() const {
    if (!(mass > 0.0 && stiffness > 0.0 && gravity > 0.0 && rest_length > 0.0))
      throw std::invalid_argument("SlipParams: all parameters must be positive");
  }
};

struct TouchdownState {
  double d = 0.0;
  double theta = 0.0;
  double r_dot = 0.0;
  double theta_dot = 0.0;

  Eigen::Vector4d to_vector() const { return {d, theta, r_dot, theta_dot}; }
  static TouchdownState from_vector(const Eigen::Vector4d& v) {
    return {v(0), v(1), v(2), v(3)};
  }
};

struct FailedHop : std::runtime_error {
  enum class Phase { kStance, kFlight };
  FailedHop(Phase in_phase, const std::string& diagnostic)
      : std::runtime_error(std::string("FailedHop[") +
                           (in_phase == Phase::kStance ? "stance" : "flight") + "]: " +
                           diagnostic),
        phase(in_phase) {}
  Phase phase;
};

// Stance derivative in polar coordinates about the foot: state (r, theta,
// r_dot, theta_dot). Conservative dynamics, no damping. Throws for r <= 0.
Eigen::Vector4d stance_dynamics(const SlipParams& params, const Eigen::Vector4d& polar);

// Total stance energy 1/2 M (rdot^2 + r^2 thdot^2) + M g r cos(th)
// + 1/2 k (r_max - r)^2.
double stance_energy(const SlipParams& params, const Eigen::Vector4d& polar);

struct HopSample {
  double t;
  int phase;  // 0 stance, 1 flight
  double r, theta, r_dot, theta_dot;
  double x, z;  // head position in world coordinates
};
using HopTrace = std::vector<HopSample>;

struct ReturnMapOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-11;
  double event_time_tol = 1e-12;
  double max_stance_time = 10.0;
};

// Touchdown-to-touchdown map: integrates the stance phase to the liftoff
// event (r back to rest length with positive radial speed, located by
// sign-change bracketing and bisection), then advances the closed-form
// ballistic flight to the touchdown event where the leg, set to
// theta + delta_theta, reaches the ground on descent. Throws FailedHop when
// the hop cannot complete.
TouchdownState return_map(const SlipParams& params, const TouchdownState& state,
                          double delta_theta, const ReturnMapOptions& opts = {},
                          HopTrace* trace = nullptr);

// Central-difference Jacobians of the return map; a Richardson step-halving
// check (h vs h/2) must agree to 1e-4 relative or the call throws.
struct ReturnMapJacobian {
  Eigen::Matrix4d A;
  Eigen::Vector4d B;
};
ReturnMapJacobian linearize_return_map(const SlipParams& params, const TouchdownState& state,
                                       double delta_theta, const ReturnMapOptions& opts = {});

// Fixed point of the paper's running gait under the frozen angle convention.
inline TouchdownState slip_gait_fixed_point() { return {0.0, 0.3927, -3.273, -6.788}; }

}  // namespace ibctrl
