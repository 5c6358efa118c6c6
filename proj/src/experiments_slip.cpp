#include <cmath>
#include <stdexcept>

#include "experiments_detail.hpp"
#include "ibctrl/experiments.hpp"

namespace ibctrl {

SlipScenario make_slip_scenario(double beta) {
  SlipScenario s;
  s.beta = beta;
  s.init_mean = slip_gait_fixed_point().to_vector();
  s.init_cov = 1e-3 * MatrixXd::Identity(4, 4);
  s.process_cov = 1e-4 * (VectorXd(4) << 1.0, 0.1, 0.5, 0.5).finished().asDiagonal();
  s.believed_meas_cov = 1e-4 * MatrixXd::Identity(4, 4);
  return s;
}

QuadCost SlipScenario::cost() const {
  // stage cost 1/2 R u^2 only; terminal (d - goal)^2 via Q_T = diag(2,0,0,0)
  MatrixXd Q = MatrixXd::Zero(4, 4);
  MatrixXd R = MatrixXd::Constant(1, 1, input_cost);
  MatrixXd QT = MatrixXd::Zero(4, 4);
  QT(0, 0) = 2.0;
  VectorXd gT = VectorXd::Zero(4);
  gT(0) = goal_d;
  return QuadCost::constant(Q, R, VectorXd::Zero(4), VectorXd::Zero(1), QT, gT, horizon);
}

NonlinearModel SlipScenario::model() const {
  NonlinearModel m;
  const SlipParams p = params;
  m.step = [p](const VectorXd& x, const VectorXd& u) -> VectorXd {
    return return_map(p, TouchdownState::from_vector(x), u(0)).to_vector();
  };
  m.process_cov.assign(horizon, process_cov);
  m.state_dim = 4;
  m.input_dim = 1;
  return m;
}

IlqgBaseline solve_ilqg(const NonlinearModel& model, const QuadCost& cost, const VectorXd& x0,
                        const std::vector<VectorXd>& initial_inputs, int max_iterations,
                        double tol) {
  const int T = static_cast<int>(initial_inputs.size());
  IlqgBaseline out;
  out.nominal = rollout(model, x0, initial_inputs);
  out.linear = linearize_along_trajectory(model, out.nominal);
  double current_cost = trajectory_cost(cost, out.nominal);

  for (int it = 0; it < max_iterations; ++it) {
    const QuadCost local = quadraticize_cost(cost, out.nominal);

    // Riccati backward pass on the perturbation system
    out.gains.assign(T, MatrixXd());
    std::vector<VectorXd> feedforward(T);
    MatrixXd S = local.Q[T];
    VectorXd s = -local.Q[T] * local.g[T];
    for (int t = T - 1; t >= 0; --t) {
      const MatrixXd& A = out.linear.A[t];
      const MatrixXd& B = out.linear.B[t];
      const MatrixXd H = local.R[t] + B.transpose() * S * B;
      const Eigen::LDLT<MatrixXd> ldlt(H);
      out.gains[t] = -ldlt.solve(B.transpose() * S * A);
      feedforward[t] = -ldlt.solve(B.transpose() * s - local.R[t] * local.w[t]);
      const MatrixXd closed = A + B * out.gains[t];
      const MatrixXd S_new = local.Q[t] + out.gains[t].transpose() * local.R[t] * out.gains[t] +
                             closed.transpose() * S * closed;
      s = -local.Q[t] * local.g[t] +
          out.gains[t].transpose() * local.R[t] * (feedforward[t] - local.w[t]) +
          closed.transpose() * (S * B * feedforward[t] + s);
      S = 0.5 * (S_new + S_new.transpose().eval());
    }

    // forward pass with backtracking on the feedforward step
    double step = 1.0;
    bool accepted = false;
    NominalTrajectory candidate;
    Linearization candidate_linear;
    double candidate_cost = 0.0;
    for (int shrink = 0; shrink < 12; ++shrink) {
      std::vector<VectorXd> inputs(T);
      candidate.states.assign(1, out.nominal.states[0]);
      bool rollout_ok = true;
      for (int t = 0; t < T; ++t) {
        const VectorXd dx = candidate.states.back() - out.nominal.states[t];
        inputs[t] = out.nominal.inputs[t] + step * feedforward[t] + out.gains[t] * dx;
        try {
          candidate.states.push_back(model.step(candidate.states.back(), inputs[t]));
        } catch (const std::exception&) {
          rollout_ok = false;
          break;
        }
      }
      if (rollout_ok) {
        candidate.inputs = inputs;
        candidate_cost = trajectory_cost(cost, candidate);
        if (candidate_cost <= current_cost + 1e-12) {
          try {
            candidate_linear = linearize_along_trajectory(model, candidate);
            accepted = true;
            break;
          } catch (const std::exception&) {
            // candidate sits on a hop-feasibility boundary
          }
        }
      }
      step *= 0.5;
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    const double improvement = current_cost - candidate_cost;
    out.nominal = candidate;
    out.linear = candidate_linear;
    current_cost = candidate_cost;
    if (improvement < tol) {
      out.converged = true;
      break;
    }
  }
  // gains for the final nominal
  const QuadCost local = quadraticize_cost(cost, out.nominal);
  MatrixXd S = local.Q[T];
  VectorXd s = -local.Q[T] * local.g[T];
  out.gains.assign(T, MatrixXd());
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd& A = out.linear.A[t];
    const MatrixXd& B = out.linear.B[t];
    const MatrixXd H = local.R[t] + B.transpose() * S * B;
    const Eigen::LDLT<MatrixXd> ldlt(H);
    out.gains[t] = -ldlt.solve(B.transpose() * S * A);
    const VectorXd ff = -ldlt.solve(B.transpose() * s - local.R[t] * local.w[t]);
    const MatrixXd closed = A + B * out.gains[t];
    const MatrixXd S_new = local.Q[t] + out.gains[t].transpose() * local.R[t] * out.gains[t] +
                           closed.transpose() * S * closed;
    s = -local.Q[t] * local.g[t] + out.gains[t].transpose() * local.R[t] * (ff - local.w[t]) +
        closed.transpose() * (S * B * ff + s);
    S = 0.5 * (S_new + S_new.transpose().eval());
  }
  return out;
}

namespace {

struct SlipTrialDraws {
  MatrixXd meas_cov;                 // actual measurement covariance
  MatrixXd meas_chol;                // its factor
  VectorXd x0;
  std::vector<VectorXd> process;     // [T]
  std::vector<VectorXd> meas_white;  // [T], standard normal, shared by policies
};

SlipTrialDraws draw_trial(const SlipScenario& sc, std::uint64_t master, int trial,
                          const SlipMcOptions& opts) {
  RngStream rng = RngStream::substream(master, static_cast<std::uint64_t>(trial) * 2);
  SlipTrialDraws d;
  if (opts.fixed_meas_cov.has_value()) {
    d.meas_cov = *opts.fixed_meas_cov;
  } else {
    MatrixXd S(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) S(i, j) = rng.uniform();
    d.meas_cov = sc.actual_meas_scale * S.transpose() * S;
  }
  if (opts.zero_noise) d.meas_cov = MatrixXd::Zero(4, 4);
  Eigen::LLT<MatrixXd> llt(d.meas_cov + 1e-300 * MatrixXd::Identity(4, 4));
  d.meas_chol = llt.matrixL();

  d.x0 = opts.zero_noise ? sc.init_mean : rng.gaussian(sc.init_mean, sc.init_cov);
  d.process.resize(sc.horizon);
  d.meas_white.resize(sc.horizon);
  for (int t = 0; t < sc.horizon; ++t) {
    d.process[t] =
        opts.zero_noise ? VectorXd::Zero(4).eval() : rng.gaussian(VectorXd::Zero(4), sc.process_cov);
    d.meas_white[t] = rng.normal_vector(4);
  }
  return d;
}

// One closed-loop rollout; `controller(t, y) -> u` owns the filter state.
template <typename Controller>
SlipTrialRecord run_slip_trial(const SlipScenario& sc, const SlipTrialDraws& draws,
                               const QuadCost& cost, Controller&& controller,
                               const std::string& policy, int trial) {
  SlipTrialRecord rec;
  rec.trial = trial;
  rec.policy = policy;
  const SlipParams params = sc.params;
  VectorXd x = draws.x0;
  double total = 0.0;
  for (int t = 0; t < sc.horizon; ++t) {
    const VectorXd y = x + draws.meas_chol * draws.meas_white[t];
    VectorXd u;
    try {
      u = controller(t, y);
    } catch (const std::exception&) {
      rec.failed = true;
      break;
    }
    rec.inputs.push_back(u(0));
    const VectorXd du = u - cost.w[t];
    total += 0.5 * du.dot(cost.R[t] * du);
    try {
      x = return_map(params, TouchdownState::from_vector(x), u(0)).to_vector() +
          draws.process[t];
    } catch (const FailedHop&) {
      rec.failed = true;
      break;
    }
  }
  if (!rec.failed) {
    const VectorXd dx = x - cost.g[sc.horizon];
    total += 0.5 * dx.dot(cost.Q[sc.horizon] * dx);
    rec.total_cost = total;
    rec.final_d = x(0);
  }
  return rec;
}

}  // namespace

SlipStudy run_slip_mc(const SlipScenario& scenario, const NLGSolution& trv_solution,
                      const IlqgBaseline& baseline, const SlipMcOptions& opts) {
  const QuadCost cost = scenario.cost();
  const int T = scenario.horizon;

  // induced TRV system for the perturbation filter around the TRV nominal
  LGSystem perturbation;
  perturbation.A = trv_solution.linear.A;
  perturbation.B = trv_solution.linear.B;
  perturbation.process_cov.assign(T, scenario.process_cov);
  perturbation.init_mean = VectorXd::Zero(4);
  perturbation.init_cov = scenario.init_cov;
  perturbation.horizon = T;
  perturbation.beta = scenario.beta;
  const LGSensor believed{MatrixXd::Identity(4, 4), scenario.believed_meas_cov};
  const InducedTRVSystem induced =
      build_induced_lg(perturbation, trv_solution.lg.encoders, trv_solution.lg.gaussians,
                       believed);

  SlipStudy study;
  study.records.resize(2 * opts.n_trials);

  detail::parallel_trials(opts.n_trials, opts.threads, [&](int trial) {
    const SlipTrialDraws draws = draw_trial(scenario, opts.master_seed, trial, opts);
    const std::uint64_t seed =
        RngStream::derive_seed(opts.master_seed, static_cast<std::uint64_t>(trial) * 2 + 1);

    // iLQG baseline: Kalman filter on the full perturbation state with the
    // believed measurement covariance
    {
      VectorXd mean = VectorXd::Zero(4);
      MatrixXd cov = scenario.init_cov;
      VectorXd du_prev = VectorXd::Zero(1);
      auto controller = [&](int t, const VectorXd& y) -> VectorXd {
        if (t > 0) {
          mean = baseline.linear.A[t - 1] * mean + baseline.linear.B[t - 1] * du_prev;
          cov = baseline.linear.A[t - 1] * cov * baseline.linear.A[t - 1].transpose() +
                scenario.process_cov;
        }
        const VectorXd innovation = y - baseline.nominal.states[t] - mean;
        const MatrixXd S = cov + scenario.believed_meas_cov;
        const MatrixXd gain = S.ldlt().solve(cov).transpose();
        mean += gain * innovation;
        const MatrixXd closed = MatrixXd::Identity(4, 4) - gain;
        cov = closed * cov * closed.transpose() +
              gain * scenario.believed_meas_cov * gain.transpose();
        du_prev = baseline.gains[t] * mean;
        return baseline.nominal.inputs[t] + du_prev;
      };
      SlipTrialRecord rec =
          run_slip_trial(scenario, draws, cost, controller, "ilqg-kf", trial);
      rec.seed = seed;
      study.records[trial] = rec;
    }

    // TRV policy: Kalman filter on the induced TRV system
    {
      Gaussian belief(induced.init_mean, induced.init_cov);
      VectorXd du_prev = VectorXd::Zero(1);
      auto controller = [&](int t, const VectorXd& y) -> VectorXd {
        const VectorXd dy = y - trv_solution.nominal.states[t];
        if (t > 0) belief = kalman_predict(induced, t - 1, du_prev, belief);
        belief = kalman_update(induced, t, dy, belief);
        const VectorXd trv = belief.mean();
        du_prev = trv_solution.lg.policies[t].K * trv + trv_solution.lg.policies[t].h;
        return trv_solution.nominal.inputs[t] + du_prev;
      };
      SlipTrialRecord rec = run_slip_trial(scenario, draws, cost, controller, "trv-kf", trial);
      rec.seed = seed;
      study.records[opts.n_trials + trial] = rec;
    }
  });

  // penalty = 10x the worst successful cost in the batch
  double worst = 0.0;
  for (const SlipTrialRecord& rec : study.records)
    if (!rec.failed) worst = std::max(worst, rec.total_cost);
  study.penalty_cost = 10.0 * worst;

  std::vector<double> ok_ilqg, ok_trv, all_ilqg, all_trv;
  for (int trial = 0; trial < opts.n_trials; ++trial) {
    const SlipTrialRecord& a = study.records[trial];
    const SlipTrialRecord& b = study.records[opts.n_trials + trial];
    if (a.failed)
      ++study.failed_ilqg;
    else
      ok_ilqg.push_back(a.total_cost);
    if (b.failed)
      ++study.failed_trv;
    else
      ok_trv.push_back(b.total_cost);
    all_ilqg.push_back(a.failed ? study.penalty_cost : a.total_cost);
    all_trv.push_back(b.failed ? study.penalty_cost : b.total_cost);
  }
  study.cost_ilqg = summarize(ok_ilqg);
  study.cost_trv = summarize(ok_trv);
  study.cost_ilqg_all = summarize(all_ilqg);
  study.cost_trv_all = summarize(all_trv);
  return study;
}

BetaSweepResult beta_sweep_slip(const SlipScenario& scenario, double beta_lo, double beta_hi,
                                int count, double cost_threshold, const NLGOptions& opts) {
  if (!(beta_lo > 0.0) || !(beta_hi > beta_lo) || count < 2)
    throw std::invalid_argument("beta_sweep: invalid interval");
  const NonlinearModel model = scenario.model();
  const QuadCost cost = scenario.cost();
  const Gaussian init(scenario.init_mean, scenario.init_cov);
  const std::vector<VectorXd> gait(scenario.horizon, VectorXd::Zero(1));

  BetaSweepResult out;
  for (int i = 0; i < count; ++i) {
    const double beta = beta_lo + (beta_hi - beta_lo) * i / (count - 1);
    NLGOptions local = opts;
    local.beta = beta;
    const NLGSolution sol = solve_nlg(model, cost, init, gait, local);
    // fully-observed closed-loop expected cost: deterministic nominal part
    // plus the Gaussian perturbation part
    LGSystem perturbation;
    perturbation.A = sol.linear.A;
    perturbation.B = sol.linear.B;
    perturbation.process_cov.assign(scenario.horizon, scenario.process_cov);
    perturbation.init_mean = VectorXd::Zero(4);
    perturbation.init_cov = scenario.init_cov;
    perturbation.horizon = scenario.horizon;
    perturbation.beta = beta;
    const double expected =
        trajectory_cost(cost, sol.nominal) +
        lg_expected_cost(perturbation, quadraticize_cost(cost, sol.nominal), sol.lg.encoders,
                         sol.lg.policies);
    out.entries.push_back({beta, expected, sol.status.converged});
  }
  for (int i = 0; i < count; ++i)
    if (out.entries[i].expected_cost < cost_threshold) {
      out.selected_index = i;
      out.threshold_met = true;
      break;
    }
  if (!out.threshold_met) {
    int best = 0;
    for (int i = 1; i < count; ++i)
      if (out.entries[i].expected_cost < out.entries[best].expected_cost) best = i;
    out.selected_index = best;
  }
  return out;
}

}  // namespace ibctrl
