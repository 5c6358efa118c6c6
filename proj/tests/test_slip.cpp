#include "ibctrl/slip.hpp"

#include <cmath>

#include "doctest.h"

using namespace ibctrl;

TEST_CASE("stance dynamics force balance") {
  SlipParams p;
  // spring at rest length exerts zero force: radial acceleration = -g
  Eigen::Vector4d rest(p.rest_length, 0.0, 0.0, 0.0);
  CHECK(stance_dynamics(p, rest)(2) == doctest::Approx(-p.gravity));

  // equilibrium compression r = r_max - M g / k
  Eigen::Vector4d eq(p.rest_length - p.mass * p.gravity / p.stiffness, 0.0, 0.0, 0.0);
  CHECK(stance_dynamics(p, eq)(2) == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS(stance_dynamics(p, Eigen::Vector4d(-0.1, 0.0, 0.0, 0.0)));
}

TEST_CASE("stance energy conserved along integrated arcs") {
  SlipParams p;
  HopTrace trace;
  return_map(p, slip_gait_fixed_point(), 0.0, {}, &trace);
  double e0 = -1.0;
  int stance_samples = 0;
  for (const HopSample& s : trace) {
    if (s.phase != 0) continue;
    const double e = stance_energy(p, Eigen::Vector4d(s.r, s.theta, s.r_dot, s.theta_dot));
    if (e0 < 0.0)
      e0 = e;
    else
      CHECK(std::abs(e - e0) / std::abs(e0) < 1e-8);
    ++stance_samples;
  }
  CHECK(stance_samples > 10);
}

TEST_CASE("return map fixed point residual") {
  SlipParams p;
  const TouchdownState fp = slip_gait_fixed_point();
  const TouchdownState next = return_map(p, fp, 0.0);
  CHECK(std::abs(next.theta - fp.theta) < 1e-2);
  CHECK(std::abs(next.r_dot - fp.r_dot) < 1e-2);
  CHECK(std::abs(next.theta_dot - fp.theta_dot) < 1e-2);
  CHECK(next.d > fp.d + 0.5);  // advanced by one stride
}

TEST_CASE("return map mirror symmetry") {
  SlipParams p;
  const TouchdownState fp = slip_gait_fixed_point();
  const double dtheta = 0.02;
  const TouchdownState fwd = return_map(p, fp, dtheta);
  TouchdownState mirrored{fp.d, -fp.theta, fp.r_dot, -fp.theta_dot};
  const TouchdownState bwd = return_map(p, mirrored, -dtheta);
  CHECK(bwd.d - fp.d == doctest::Approx(-(fwd.d - fp.d)).epsilon(1e-10));
  CHECK(bwd.theta == doctest::Approx(-fwd.theta).epsilon(1e-10));
  CHECK(bwd.r_dot == doctest::Approx(fwd.r_dot).epsilon(1e-10));
  CHECK(bwd.theta_dot == doctest::Approx(-fwd.theta_dot).epsilon(1e-10));
}

TEST_CASE("return map event tolerance self-convergence") {
  SlipParams p;
  const TouchdownState fp = slip_gait_fixed_point();
  ReturnMapOptions coarse;
  ReturnMapOptions fine;
  fine.rel_tol = coarse.rel_tol / 2.0;
  fine.abs_tol = coarse.abs_tol / 2.0;
  const Eigen::Vector4d a = return_map(p, fp, 0.01, coarse).to_vector();
  const Eigen::Vector4d b = return_map(p, fp, 0.01, fine).to_vector();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("return map determinism and translation invariance") {
  SlipParams p;
  const TouchdownState fp = slip_gait_fixed_point();
  const Eigen::Vector4d a = return_map(p, fp, 0.005).to_vector();
  const Eigen::Vector4d b = return_map(p, fp, 0.005).to_vector();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // bitwise identical

  TouchdownState shifted = fp;
  shifted.d += 2.75;
  const Eigen::Vector4d c = return_map(p, shifted, 0.005).to_vector();
  CHECK(c(0) == a(0) + 2.75);  // exact: d enters additively only
  CHECK((c.tail(3) - a.tail(3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("return map failure modes") {
  SlipParams p;
  // no compression at touchdown
  CHECK_THROWS_AS(return_map(p, {0.0, 0.3, 1.0, -6.0}, 0.0), FailedHop);
  // commanded angle beyond pi/2
  CHECK_THROWS_AS(return_map(p, slip_gait_fixed_point(), 2.0), FailedHop);
  // a huge touchdown-angle change puts the required height above the apex
  bool failed = false;
  try {
    return_map(p, {0.0, 0.4, -0.05, -0.4}, -0.39);
  } catch (const FailedHop& e) {
    failed = true;
    CHECK(e.phase == FailedHop::Phase::kFlight);
  }
  CHECK(failed);
}

TEST_CASE("linearized return map structure") {
  SlipParams p;
  const TouchdownState fp = slip_gait_fixed_point();
  const ReturnMapJacobian jac = linearize_return_map(p, fp, 0.0);

  // dynamics are translation invariant in d: first column is (1,0,0,0)
  CHECK(jac.A(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(jac.A(1, 0)) < 1e-10);
  CHECK(std::abs(jac.A(2, 0)) < 1e-10);
  CHECK(std::abs(jac.A(3, 0)) < 1e-10);

  // the touchdown angle affects the next state
  CHECK(jac.B.cwiseAbs().maxCoeff() > 1e-3);

  // eigenvalues agree between two independent integrator tolerance settings
  ReturnMapOptions tight;
  tight.rel_tol = 1e-11;
  tight.abs_tol = 1e-13;
  const ReturnMapJacobian jac2 = linearize_return_map(p, fp, 0.0, tight);
  const Eigen::Vector4cd ev1 = jac.A.eigenvalues();
  const Eigen::Vector4cd ev2 = jac2.A.eigenvalues();
  for (int i = 0; i < 4; ++i) CHECK(std::abs(ev1(i) - ev2(i)) < 1e-4 * std::abs(ev2(i)) + 1e-6);
}
