#include "ibctrl/nlg_ib.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ibctrl/util.hpp"

namespace ibctrl {

NominalTrajectory rollout(const NonlinearModel& model, const VectorXd& x0,
                          const std::vector<VectorXd>& inputs) {
  NominalTrajectory traj;
  traj.states.reserve(inputs.size() + 1);
  traj.states.push_back(x0);
  traj.inputs = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    VectorXd next = model.step(traj.states.back(), inputs[t]);
    if (!next.allFinite())
      throw std::runtime_error("rollout: non-finite state at t=" + std::to_string(t + 1));
    traj.states.push_back(std::move(next));
  }
  return traj;
}

double trajectory_cost(const QuadCost& cost, const NominalTrajectory& traj) {
  const int T = static_cast<int>(traj.inputs.size());
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    const VectorXd dx = traj.states[t] - cost.g[t];
    const VectorXd du = traj.inputs[t] - cost.w[t];
    total += 0.5 * dx.dot(cost.Q[t] * dx) + 0.5 * du.dot(cost.R[t] * du);
  }
  const VectorXd dxT = traj.states[T] - cost.g[T];
  return total + 0.5 * dxT.dot(cost.Q[T] * dxT);
}

Linearization linearize_along_trajectory(const NonlinearModel& model,
                                         const NominalTrajectory& traj) {
  const int T = static_cast<int>(traj.inputs.size());
  const int n = model.state_dim;
  const int m = model.input_dim;
  Linearization lin;
  lin.A.resize(T);
  lin.B.resize(T);
  for (int t = 0; t < T; ++t) {
    lin.A[t].resize(n, n);
    lin.B[t].resize(n, m);
    for (int i = 0; i < n; ++i) {
      const double h = std::max(1e-6, 1e-6 * std::abs(traj.states[t](i)));
      VectorXd hi = traj.states[t], lo = traj.states[t];
      hi(i) += h;
      lo(i) -= h;
      lin.A[t].col(i) =
          (model.step(hi, traj.inputs[t]) - model.step(lo, traj.inputs[t])) / (2.0 * h);
      if (!lin.A[t].col(i).allFinite())
        throw std::runtime_error("linearize: non-finite Jacobian in state coordinate " +
                                 std::to_string(i) + " at t=" + std::to_string(t));
    }
    for (int j = 0; j < m; ++j) {
      const double h = std::max(1e-6, 1e-6 * std::abs(traj.inputs[t](j)));
      VectorXd hi = traj.inputs[t], lo = traj.inputs[t];
      hi(j) += h;
      lo(j) -= h;
      lin.B[t].col(j) =
          (model.step(traj.states[t], hi) - model.step(traj.states[t], lo)) / (2.0 * h);
      if (!lin.B[t].col(j).allFinite())
        throw std::runtime_error("linearize: non-finite Jacobian in input coordinate " +
                                 std::to_string(j) + " at t=" + std::to_string(t));
    }
  }
  return lin;
}

QuadCost quadraticize_cost(const QuadCost& cost, const NominalTrajectory& traj) {
  const int T = static_cast<int>(traj.inputs.size());
  QuadCost out = cost;
  for (int t = 0; t <= T; ++t) {
    out.g[t] = cost.g[t] - traj.states[t];
    if (t < T) out.w[t] = cost.w[t] - traj.inputs[t];
  }
  return out;
}

namespace {

MatrixXd clip_to_psd(const MatrixXd& H, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (H + H.transpose().eval()));
  if (es.eigenvalues().minCoeff() >= 0.0) return 0.5 * (H + H.transpose().eval());
  log_warn(what + ": indefinite Hessian clipped to PSD (min eigenvalue " +
           std::to_string(es.eigenvalues().minCoeff()) + ")");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

QuadCost quadraticize_smooth_cost(const StageCostFn& stage, const TerminalCostFn& terminal,
                                  int input_dim, const NominalTrajectory& traj) {
  const int T = static_cast<int>(traj.inputs.size());
  const int n = static_cast<int>(traj.states[0].size());
  const int m = input_dim;
  QuadCost out;
  out.Q.resize(T + 1);
  out.R.resize(T + 1);
  out.g.resize(T + 1);
  out.w.resize(T + 1);

  auto hessian_and_gradient = [](const std::function<double(const VectorXd&)>& f,
                                 const VectorXd& at, MatrixXd& H, VectorXd& grad) {
    const int dim = static_cast<int>(at.size());
    H.resize(dim, dim);
    grad.resize(dim);
    VectorXd h(dim);
    for (int i = 0; i < dim; ++i) h(i) = std::max(1e-5, 1e-5 * std::abs(at(i)));
    const double f0 = f(at);
    for (int i = 0; i < dim; ++i) {
      VectorXd hi = at, lo = at;
      hi(i) += h(i);
      lo(i) -= h(i);
      const double fp = f(hi), fm = f(lo);
      grad(i) = (fp - fm) / (2.0 * h(i));
      H(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
      for (int j = i + 1; j < dim; ++j) {
        VectorXd pp = at, pm = at, mp = at, mm = at;
        pp(i) += h(i); pp(j) += h(j);
        pm(i) += h(i); pm(j) -= h(j);
        mp(i) -= h(i); mp(j) += h(j);
        mm(i) -= h(i); mm(j) -= h(j);
        H(i, j) = H(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h(i) * h(j));
      }
    }
  };

  for (int t = 0; t < T; ++t) {
    // joint expansion in (dx, du), then split; cross terms are dropped after
    // the PSD projection of the blocks
    const VectorXd& xs = traj.states[t];
    const VectorXd& us = traj.inputs[t];
    MatrixXd Hx;
    VectorXd gx;
    hessian_and_gradient([&](const VectorXd& x) { return stage(x, us, t); }, xs, Hx, gx);
    MatrixXd Hu;
    VectorXd gu;
    hessian_and_gradient([&](const VectorXd& u) { return stage(xs, u, t); }, us, Hu, gu);
    out.Q[t] = clip_to_psd(Hx, "quadraticize_smooth_cost state block t=" + std::to_string(t));
    out.R[t] = clip_to_psd(Hu, "quadraticize_smooth_cost input block t=" + std::to_string(t));
    // 1/2 (z - g)'Q(z - g) with gradient Q(z - g) at z = 0: g = -Q^+ grad
    out.g[t] = -Eigen::CompleteOrthogonalDecomposition<MatrixXd>(out.Q[t]).solve(gx);
    out.w[t] = -Eigen::CompleteOrthogonalDecomposition<MatrixXd>(out.R[t]).solve(gu);
  }
  MatrixXd HT;
  VectorXd gT;
  hessian_and_gradient([&](const VectorXd& x) { return terminal(x); }, traj.states[T], HT, gT);
  out.Q[T] = clip_to_psd(HT, "quadraticize_smooth_cost terminal");
  out.g[T] = -Eigen::CompleteOrthogonalDecomposition<MatrixXd>(out.Q[T]).solve(gT);
  out.R[T] = MatrixXd::Zero(m, m);
  out.w[T] = VectorXd::Zero(m);
  return out;
}

NLGSolution solve_nlg(const NonlinearModel& model, const QuadCost& cost,
                      const Gaussian& init, const std::vector<VectorXd>& nominal_inputs,
                      const NLGOptions& opts) {
  if (opts.outer_iterations <= 0 || !(opts.trajectory_tol > 0.0))
    throw std::invalid_argument("solve_nlg: invalid options");
  const int T = static_cast<int>(nominal_inputs.size());

  NLGSolution out;
  out.nominal = rollout(model, init.mean(), nominal_inputs);
  // the nominal must support a linearization; candidates are held to the
  // same standard below, so the loop never starts from an unusable iterate
  out.linear = linearize_along_trajectory(model, out.nominal);
  double current_cost = trajectory_cost(cost, out.nominal);
  out.cost_trace.push_back(current_cost);

  LGSystem perturbation;
  perturbation.process_cov = model.process_cov;
  perturbation.init_mean = VectorXd::Zero(model.state_dim);
  perturbation.init_cov = init.cov();
  perturbation.horizon = T;
  perturbation.beta = opts.beta;

  for (int it = 1; it <= opts.outer_iterations; ++it) {
    out.status.iterations = it;
    perturbation.A = out.linear.A;
    perturbation.B = out.linear.B;
    out.lg = solve_lg(perturbation, quadraticize_cost(cost, out.nominal), opts.lg);

    // closed-loop mean of the perturbation system
    std::vector<VectorXd> delta_u(T);
    VectorXd dx = VectorXd::Zero(model.state_dim);
    for (int t = 0; t < T; ++t) {
      const VectorXd trv_mean = out.lg.encoders[t].C * dx + out.lg.encoders[t].a;
      delta_u[t] = out.lg.policies[t].K * trv_mean + out.lg.policies[t].h;
      dx = out.linear.A[t] * dx + out.linear.B[t] * delta_u[t];
    }

    double step = 1.0;
    double accepted_step = 1.0;
    NominalTrajectory candidate;
    Linearization candidate_linear;
    double candidate_cost = 0.0;
    bool accepted = false;
    for (int shrink = 0; shrink <= opts.max_shrinks; ++shrink) {
      std::vector<VectorXd> inputs(T);
      for (int t = 0; t < T; ++t) inputs[t] = out.nominal.inputs[t] + step * delta_u[t];
      try {
        candidate = rollout(model, init.mean(), inputs);
        candidate_cost = trajectory_cost(cost, candidate);
        if (opts.line_search && candidate_cost > current_cost + 1e-12) {
          step *= opts.shrink_factor;
          continue;
        }
        candidate_linear = linearize_along_trajectory(model, candidate);
        accepted = true;
        break;
      } catch (const std::exception& e) {
        if (!opts.line_search)
          throw std::runtime_error("solve_nlg: rollout failed at outer iteration " +
                                   std::to_string(it) + ": " + e.what());
        step *= opts.shrink_factor;
      }
    }
    if (!accepted) {
      // no linearizable descent step available: stationary under backtracking
      out.status.converged = true;
      break;
    }

    double delta = 0.0;
    for (int t = 0; t <= T; ++t)
      delta = std::max(delta, (candidate.states[t] - out.nominal.states[t]).cwiseAbs().maxCoeff());
    for (int t = 0; t < T; ++t)
      delta = std::max(delta, (candidate.inputs[t] - out.nominal.inputs[t]).cwiseAbs().maxCoeff());

    out.nominal = candidate;
    out.linear = candidate_linear;
    current_cost = candidate_cost;
    out.cost_trace.push_back(current_cost);

    if (delta < opts.trajectory_tol) {
      out.status.converged = true;
      break;
    }
  }

  // final perturbation solution around the converged nominal
  perturbation.A = out.linear.A;
  perturbation.B = out.linear.B;
  out.lg = solve_lg(perturbation, quadraticize_cost(cost, out.nominal), opts.lg);
  return out;
}

}  // namespace ibctrl
