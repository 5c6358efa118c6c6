#include "ibctrl/discrete_ib.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ibctrl/util.hpp"

namespace ibctrl {

void DiscreteSystem::validate() const {
  if (n_states <= 0 || n_inputs <= 0 || n_trvs <= 0)
    throw std::invalid_argument("DiscreteSystem: nonpositive dimension");
  if (horizon <= 0) throw std::invalid_argument("DiscreteSystem: nonpositive horizon");
  if (!(beta > 0.0)) throw std::invalid_argument("DiscreteSystem: beta must be positive");
  if (static_cast<int>(transitions.size()) != horizon ||
      static_cast<int>(stage_costs.size()) != horizon)
    throw std::invalid_argument("DiscreteSystem: per-stage array length != horizon");
  for (int t = 0; t < horizon; ++t) {
    if (transitions[t].rows() != n_states * n_inputs || transitions[t].cols() != n_states)
      throw std::invalid_argument("DiscreteSystem: transition table shape at t=" +
                                  std::to_string(t));
    CondTable check(transitions[t]);  // row-stochastic or throws
    if (stage_costs[t].rows() != n_states || stage_costs[t].cols() != n_inputs)
      throw std::invalid_argument("DiscreteSystem: cost shape at t=" + std::to_string(t));
  }
  if (terminal_cost.size() != n_states)
    throw std::invalid_argument("DiscreteSystem: terminal cost length");
  Categorical check_init(init);
}

namespace {

void check_shapes(const DiscreteSystem& sys, const std::vector<MatrixXd>& encoders,
                  const std::vector<MatrixXd>& policies) {
  if (static_cast<int>(encoders.size()) != sys.horizon ||
      static_cast<int>(policies.size()) != sys.horizon)
    throw std::invalid_argument("discrete-ib: encoder/policy length != horizon");
  for (int t = 0; t < sys.horizon; ++t) {
    if (encoders[t].rows() != sys.n_states || encoders[t].cols() != sys.n_trvs)
      throw std::invalid_argument("discrete-ib: encoder shape at t=" + std::to_string(t));
    if (policies[t].rows() != sys.n_trvs || policies[t].cols() != sys.n_inputs)
      throw std::invalid_argument("discrete-ib: policy shape at t=" + std::to_string(t));
  }
}

// c_t(x, u) + sum_x' p_t(x'|x,u) nu_{t+1}(x'), as an n_states x n_inputs matrix.
MatrixXd stage_q_values(const DiscreteSystem& sys, int t, const VectorXd& value_next) {
  MatrixXd q(sys.n_states, sys.n_inputs);
  for (int x = 0; x < sys.n_states; ++x)
    for (int u = 0; u < sys.n_inputs; ++u)
      q(x, u) = sys.stage_costs[t](x, u) +
                sys.transitions[t].row(x * sys.n_inputs + u).dot(value_next);
  return q;
}

}  // namespace

DiscreteMarginals propagate_marginals(const DiscreteSystem& sys,
                                      const std::vector<MatrixXd>& encoders,
                                      const std::vector<MatrixXd>& policies) {
  check_shapes(sys, encoders, policies);
  DiscreteMarginals out;
  out.state.resize(sys.horizon + 1);
  out.trv.resize(sys.horizon);
  out.state[0] = sys.init;
  for (int t = 0; t < sys.horizon; ++t) {
    out.trv[t] = encoders[t].transpose() * out.state[t];
    const MatrixXd input_given_state = encoders[t] * policies[t];  // n_states x n_inputs
    VectorXd next = VectorXd::Zero(sys.n_states);
    for (int x = 0; x < sys.n_states; ++x) {
      if (out.state[t](x) <= 0.0) continue;
      for (int u = 0; u < sys.n_inputs; ++u) {
        const double w = out.state[t](x) * input_given_state(x, u);
        if (w <= 0.0) continue;
        next += w * sys.transitions[t].row(x * sys.n_inputs + u).transpose();
      }
    }
    const double total = next.sum();
    if (!(total > 0.0)) throw std::runtime_error("propagate_marginals: mass vanished");
    out.state[t + 1] = next / total;
  }
  return out;
}

EncoderUpdate update_encoders(const DiscreteSystem& sys, const DiscreteMarginals& marginals,
                              const std::vector<MatrixXd>& policies) {
  EncoderUpdate out;
  out.encoders.assign(sys.horizon, MatrixXd::Zero(sys.n_states, sys.n_trvs));
  out.values.assign(sys.horizon + 1, VectorXd());
  out.values[sys.horizon] = sys.terminal_cost;

  for (int t = sys.horizon - 1; t >= 0; --t) {
    const VectorXd& w = marginals.trv[t];  // lagged TRV marginal
    if (!(w.sum() > 0.0))
      throw std::runtime_error("update_encoders: degenerate TRV marginal at t=" +
                               std::to_string(t));
    const MatrixXd q_xu = stage_q_values(sys, t, out.values[t + 1]);
    const MatrixXd cond_value = q_xu * policies[t].transpose();  // E[c+nu' | x, trv]
    VectorXd value_t(sys.n_states);
    for (int x = 0; x < sys.n_states; ++x) {
      double e_min = std::numeric_limits<double>::infinity();
      for (int k = 0; k < sys.n_trvs; ++k)
        if (w(k) > 0.0) e_min = std::min(e_min, cond_value(x, k));
      // Normalizer relative to the support minimum: sum_k w_k exp(-beta d_k)
      // with d_k >= 0, accumulated through expm1 so that nu stays accurate
      // for beta down to 1e-12.
      double shifted = 0.0;
      double z = 0.0;
      for (int k = 0; k < sys.n_trvs; ++k) {
        if (w(k) <= 0.0) continue;
        const double d = cond_value(x, k) - e_min;
        shifted += w(k) * std::expm1(-sys.beta * d);
        const double unnorm = w(k) * std::exp(-sys.beta * d);
        out.encoders[t](x, k) = unnorm;
        z += unnorm;
      }
      if (!(z > 0.0))
        throw std::runtime_error("update_encoders: zero partition function at t=" +
                                 std::to_string(t) + ", x=" + std::to_string(x));
      out.encoders[t].row(x) /= z;
      value_t(x) = e_min - std::log1p(shifted) / sys.beta;
    }
    out.values[t] = value_t;
  }
  return out;
}

std::vector<MatrixXd> update_policies(const DiscreteSystem& sys,
                                      const DiscreteMarginals& marginals,
                                      const std::vector<MatrixXd>& encoders,
                                      const std::vector<VectorXd>& values) {
  constexpr double kTieTol = 1e-12;
  std::vector<MatrixXd> policies(sys.horizon);
  for (int t = 0; t < sys.horizon; ++t) {
    const MatrixXd q_xu = stage_q_values(sys, t, values[t + 1]);
    // weights(trv, x) = q_t(trv|x) p_t(x)
    const MatrixXd weights = encoders[t].transpose() * marginals.state[t].asDiagonal();
    MatrixXd policy = MatrixXd::Zero(sys.n_trvs, sys.n_inputs);
    for (int k = 0; k < sys.n_trvs; ++k) {
      const double mass = weights.row(k).sum();
      if (!(mass > 0.0)) {
        policy.row(k).setConstant(1.0 / sys.n_inputs);
        continue;
      }
      const VectorXd expected = (weights.row(k) * q_xu).transpose() / mass;
      const double best = expected.minCoeff();
      int count = 0;
      for (int u = 0; u < sys.n_inputs; ++u)
        if (expected(u) <= best + kTieTol) ++count;
      for (int u = 0; u < sys.n_inputs; ++u)
        if (expected(u) <= best + kTieTol) policy(k, u) = 1.0 / count;
    }
    policies[t] = policy;
  }
  return policies;
}

std::vector<VectorXd> backward_values(const DiscreteSystem& sys,
                                      const DiscreteMarginals& marginals,
                                      const std::vector<MatrixXd>& encoders,
                                      const std::vector<MatrixXd>& policies) {
  std::vector<VectorXd> values(sys.horizon + 1);
  values[sys.horizon] = sys.terminal_cost;
  for (int t = sys.horizon - 1; t >= 0; --t) {
    const MatrixXd q_xu = stage_q_values(sys, t, values[t + 1]);
    const MatrixXd cond_value = q_xu * policies[t].transpose();
    const Categorical trv_marginal(marginals.trv[t]);
    VectorXd value_t(sys.n_states);
    for (int x = 0; x < sys.n_states; ++x) {
      const VectorXd row = encoders[t].row(x).transpose();
      value_t(x) = row.dot(cond_value.row(x).transpose()) +
                   kl_divergence(Categorical(row), trv_marginal) / sys.beta;
    }
    values[t] = value_t;
  }
  return values;
}

double expected_cost(const DiscreteSystem& sys, const DiscreteSolution& solution) {
  double total = 0.0;
  for (int t = 0; t < sys.horizon; ++t) {
    const MatrixXd input_given_state = solution.encoders[t] * solution.policies[t];
    for (int x = 0; x < sys.n_states; ++x) {
      const double px = solution.marginals[t](x);
      if (px <= 0.0) continue;
      total += px * input_given_state.row(x).dot(sys.stage_costs[t].row(x));
    }
  }
  total += solution.marginals[sys.horizon].dot(sys.terminal_cost);
  return total;
}

double evaluate_objective(const DiscreteSystem& sys, const DiscreteSolution& solution) {
  double objective = expected_cost(sys, solution);
  for (int t = 0; t < sys.horizon; ++t)
    objective += mutual_information(Categorical(solution.marginals[t]),
                                    CondTable(solution.encoders[t])) /
                 sys.beta;
  return objective;
}

namespace {

DiscreteSolution solve_single(const DiscreteSystem& sys, const SolverOptions& opts) {
  RngStream rng(opts.seed);
  DiscreteSolution sol;
  sol.encoders.resize(sys.horizon);
  sol.policies.assign(sys.horizon,
                      MatrixXd::Constant(sys.n_trvs, sys.n_inputs, 1.0 / sys.n_inputs));
  for (int t = 0; t < sys.horizon; ++t) {
    MatrixXd enc(sys.n_states, sys.n_trvs);
    for (int x = 0; x < sys.n_states; ++x) {
      VectorXd row(sys.n_trvs);
      for (int k = 0; k < sys.n_trvs; ++k) row(k) = rng.uniform() + 1e-12;
      enc.row(x) = row.transpose() / row.sum();
    }
    sol.encoders[t] = enc;
  }

  // A policy update against the randomized encoders before the first encoder
  // sweep; starting with the encoder step from a permutation-symmetric policy
  // leaves every conditional value constant across TRVs and the iteration
  // parked at the uninformative fixed point.
  DiscreteMarginals marg = propagate_marginals(sys, sol.encoders, sol.policies);
  sol.values = backward_values(sys, marg, sol.encoders, sol.policies);
  sol.policies = update_policies(sys, marg, sol.encoders, sol.values);
  marg = propagate_marginals(sys, sol.encoders, sol.policies);
  sol.marginals = marg.state;
  sol.trv_marginals = marg.trv;
  sol.objective_trace.push_back(evaluate_objective(sys, sol));

  for (int it = 1; it <= opts.max_iterations; ++it) {
    std::vector<MatrixXd> prev_enc = sol.encoders;
    std::vector<MatrixXd> prev_pol = sol.policies;

    EncoderUpdate upd = update_encoders(sys, marg, sol.policies);
    sol.encoders = upd.encoders;
    sol.values = upd.values;
    sol.policies = update_policies(sys, marg, sol.encoders, sol.values);
    marg = propagate_marginals(sys, sol.encoders, sol.policies);
    sol.marginals = marg.state;
    sol.trv_marginals = marg.trv;

    const double objective = evaluate_objective(sys, sol);
    const double delta = std::abs(objective - sol.objective_trace.back());
    sol.objective_trace.push_back(objective);
    sol.status.iterations = it;

    double param_delta = 0.0;
    if (opts.param_tol > 0.0) {
      for (int t = 0; t < sys.horizon; ++t) {
        param_delta = std::max(param_delta,
                               (sol.encoders[t] - prev_enc[t]).cwiseAbs().maxCoeff());
        param_delta = std::max(param_delta,
                               (sol.policies[t] - prev_pol[t]).cwiseAbs().maxCoeff());
      }
    }
    if (delta < opts.objective_tol && (opts.param_tol <= 0.0 || param_delta < opts.param_tol)) {
      sol.status.converged = true;
      break;
    }
  }
  return sol;
}

}  // namespace

DiscreteSolution solve(const DiscreteSystem& sys, const SolverOptions& opts) {
  sys.validate();
  if (opts.max_iterations <= 0 || !(opts.objective_tol > 0.0) || opts.restarts <= 0)
    throw std::invalid_argument("solve: invalid solver options");
  if (opts.restarts == 1) return solve_single(sys, opts);
  DiscreteSolution best;
  double best_objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    SolverOptions local = opts;
    local.seed = RngStream::derive_seed(opts.seed, r);
    local.restarts = 1;
    DiscreteSolution candidate = solve_single(sys, local);
    if (candidate.objective_trace.back() < best_objective) {
      best_objective = candidate.objective_trace.back();
      best = std::move(candidate);
    }
  }
  return best;
}

double encoder_fonc_residual(const DiscreteSystem& sys, const DiscreteSolution& solution) {
  double residual = 0.0;
  for (int t = 0; t < sys.horizon; ++t) {
    const VectorXd& w = solution.trv_marginals[t];
    const MatrixXd q_xu = stage_q_values(sys, t, solution.values[t + 1]);
    const MatrixXd cond_value = q_xu * solution.policies[t].transpose();
    for (int x = 0; x < sys.n_states; ++x) {
      double e_min = std::numeric_limits<double>::infinity();
      for (int k = 0; k < sys.n_trvs; ++k)
        if (w(k) > 0.0) e_min = std::min(e_min, cond_value(x, k));
      VectorXd rhs = VectorXd::Zero(sys.n_trvs);
      for (int k = 0; k < sys.n_trvs; ++k)
        if (w(k) > 0.0) rhs(k) = w(k) * std::exp(-sys.beta * (cond_value(x, k) - e_min));
      rhs /= rhs.sum();
      residual = std::max(residual,
                          (solution.encoders[t].row(x).transpose() - rhs).cwiseAbs().maxCoeff());
    }
  }
  return residual;
}

}  // namespace ibctrl
