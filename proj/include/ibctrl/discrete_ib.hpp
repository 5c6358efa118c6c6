#pragma once

#include <cstdint>
#include <vector>

#include "ibctrl/probdist.hpp"

namespace ibctrl {

// Finite-horizon stochastic control problem on finite state/input/TRV spaces.
// transitions[t] is row-stochastic with row index x * n_inputs + u and one
// column per successor state.
struct DiscreteSystem {
  int n_states = 0;
  int n_inputs = 0;
  int n_trvs = 0;
  std::vector<MatrixXd> transitions;  // [T], (n_states*n_inputs) x n_states
  std::vector<MatrixXd> stage_costs;  // [T], n_states x n_inputs
  VectorXd terminal_cost;             // n_states
  VectorXd init;                      // distribution over states
  int horizon = 0;
  double beta = 1.0;

  void validate() const;
  // p_t(x' | x, u)
  double transition(int t, int x, int u, int x_next) const {
    return transitions[t](x * n_inputs + u, x_next);
  }
};

struct SolveStatus {
  bool converged = false;
  int iterations = 0;
};

struct SolverOptions {
  int max_iterations = 30;
  double objective_tol = 1e-9;
  // Extra stopping condition on the sup-norm change of all solution
  // parameters; 0 disables it.
  double param_tol = 0.0;
  std::uint64_t seed = 0;
  // The alternating scheme is not convex; with restarts > 1 the solver runs
  // from that many seeded initializations and keeps the best final
  // objective.
  int restarts = 1;
};

struct DiscreteMarginals {
  std::vector<VectorXd> state;  // [T+1]
  std::vector<VectorXd> trv;    // [T]
};

struct DiscreteSolution {
  std::vector<MatrixXd> encoders;  // [T], n_states x n_trvs, rows q_t(. | x)
  std::vector<MatrixXd> policies;  // [T], n_trvs x n_inputs, rows pi_t(. | trv)
  std::vector<VectorXd> marginals;      // [T+1]
  std::vector<VectorXd> trv_marginals;  // [T]
  std::vector<VectorXd> values;         // [T+1], values[T] == terminal_cost
  std::vector<double> objective_trace;
  SolveStatus status;
};

// Step 1: forward propagation of p_t(x) and q_t(trv) through the composed
// kernel p_t(x'|x) = sum_{u,trv} p_t(x'|x,u) pi_t(u|trv) q_t(trv|x).
DiscreteMarginals propagate_marginals(const DiscreteSystem& sys,
                                      const std::vector<MatrixXd>& encoders,
                                      const std::vector<MatrixXd>& policies);

// Step 2: backward sweep evaluating the Boltzmann encoder
//   q_t(trv|x) = q_t(trv) exp(-beta E[nu_{t+1} + c_t | x, trv]) / Z_t(x)
// against the lagged TRV marginals, together with the cost-to-go
//   nu_t(x) = E[c_t + nu_{t+1} | x] + (1/beta) KL(q_t(.|x) || q_t(.))
// which equals -(1/beta) log Z_t(x) at the Boltzmann form. values[T] is the
// terminal cost. Throws if a row normalizer degenerates to zero.
struct EncoderUpdate {
  std::vector<MatrixXd> encoders;
  std::vector<VectorXd> values;  // [T+1]
};
EncoderUpdate update_encoders(const DiscreteSystem& sys, const DiscreteMarginals& marginals,
                              const std::vector<MatrixXd>& policies);

// Step 3: with p and q fixed the policy program is linear, so each row is an
// exact argmin of the expected c_t + nu_{t+1}; ties within 1e-12 get uniform
// mass over the argmin set. Rows conditioned on a zero-mass TRV stay uniform.
std::vector<MatrixXd> update_policies(const DiscreteSystem& sys,
                                      const DiscreteMarginals& marginals,
                                      const std::vector<MatrixXd>& encoders,
                                      const std::vector<VectorXd>& values);

// Cost-to-go of a fixed (encoder, policy) pair:
//   nu_t(x) = E[c_t + nu_{t+1} | x] + (1/beta) KL(q_t(.|x) || q_t(.)).
std::vector<VectorXd> backward_values(const DiscreteSystem& sys,
                                      const DiscreteMarginals& marginals,
                                      const std::vector<MatrixXd>& encoders,
                                      const std::vector<MatrixXd>& policies);

// Objective sum_t [E c_t + (1/beta) I(x_t; trv_t)] + E c_T under the
// solution's stored marginals.
double evaluate_objective(const DiscreteSystem& sys, const DiscreteSolution& solution);

// Closed-loop expected cost alone (no information term).
double expected_cost(const DiscreteSystem& sys, const DiscreteSolution& solution);

// Alternate steps 1-3 until the objective change is below tolerance or the
// iteration cap is reached. Convergence is not guaranteed; the returned
// status distinguishes the two exits.
DiscreteSolution solve(const DiscreteSystem& sys, const SolverOptions& opts);

// Max entrywise violation of the Boltzmann first-order condition at the
// stored solution (used by tests and diagnostics).
double encoder_fonc_residual(const DiscreteSystem& sys, const DiscreteSolution& solution);

}  // namespace ibctrl
