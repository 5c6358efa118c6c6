#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ibctrl/discrete_ib.hpp"
#include "ibctrl/nlg_ib.hpp"
#include "ibctrl/slip.hpp"
#include "ibctrl/trv_filter.hpp"

namespace ibctrl {

// ---------------------------------------------------------------------------
// scenarios

// Five states in a line (indices 0..4): goal at 2, absorbing lava at 4.
// Moving into the goal earns reward 5, every other move -1; terminal reward
// +10 in the goal, -10 in the lava. Rewards are negated into costs so one
// minimization convention serves all solvers.
struct LavaScenario {
  DiscreteSystem system;
  DiscreteSensor sensor;  // localizes correctly with probability `accuracy`
  int goal_state = 2;
  int lava_state = 4;
  double accuracy = 0.5;
};
LavaScenario make_lava_scenario(double beta = 0.001, int n_trvs = 3);

// Hop to d = 3.2 in three touchdowns from the running-gait fixed point.
struct SlipScenario {
  SlipParams params;
  int horizon = 3;
  double beta = 23.11;
  double goal_d = 3.2;
  double input_cost = 10.0;  // R_t
  VectorXd init_mean;
  MatrixXd init_cov;
  MatrixXd process_cov;        // per-hop additive touchdown noise
  MatrixXd believed_meas_cov;  // filter design value
  double actual_meas_scale = 1e-3;  // per-trial actual cov = scale * S'S

  QuadCost cost() const;       // absolute-coordinate quadratic cost
  NonlinearModel model() const;
};
SlipScenario make_slip_scenario(double beta = 23.11);

// ---------------------------------------------------------------------------
// baselines

// Full-state MDP optimum by value iteration. Ties between actions resolve
// toward the higher index (the motion toward the goal side in the lava
// layout).
struct MdpPolicy {
  std::vector<std::vector<int>> action;  // [T][n_states]
  std::vector<VectorXd> values;          // [T+1]
};
MdpPolicy solve_mdp(const DiscreteSystem& sys);

// Plain iLQR around a nominal trajectory plus time-varying LQR gains:
// u_t = inputs[t] + K[t] (x - states[t]). Independent of the bottleneck
// solvers.
struct IlqgBaseline {
  NominalTrajectory nominal;
  std::vector<MatrixXd> gains;  // [T]
  Linearization linear;
  bool converged = false;
};
IlqgBaseline solve_ilqg(const NonlinearModel& model, const QuadCost& cost, const VectorXd& x0,
                        const std::vector<VectorXd>& initial_inputs, int max_iterations = 100,
                        double tol = 1e-9);

// ---------------------------------------------------------------------------
// monte carlo

struct SummaryStats {
  int count = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  double minimum = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, maximum = 0.0;
};
SummaryStats summarize(std::vector<double> values);

struct LavaTrialRecord {
  int trial = 0;
  std::string policy;
  std::uint64_t seed = 0;
  int start_state = 0;
  std::vector<int> states;        // [T+1]
  std::vector<int> observations;  // [T]
  std::vector<int> actions;       // [T]
  double total_reward = 0.0;
  bool entered_lava = false;
};

struct LavaStudy {
  std::vector<LavaTrialRecord> records;  // grouped by policy, ordered by trial
  SummaryStats reward_mdp_mle, reward_trv_mle, reward_trv_sampled;
  int lava_count_mdp_mle = 0, lava_count_trv_mle = 0, lava_count_trv_sampled = 0;
};

// Simulates the closed loop with the faulty sensor for the three policies of
// the study: the exact-MDP baseline with a full-state Bayes filter acting at
// its MLE state, the TRV policy with the TRV filter acting at the MLE TRV,
// and the TRV policy sampling the TRV at the MLE state estimate.
LavaStudy run_lava_mc(const LavaScenario& scenario, const DiscreteSolution& solution,
                      int n_trials, std::uint64_t master_seed, int threads = 1);

struct SlipTrialRecord {
  int trial = 0;
  std::string policy;
  std::uint64_t seed = 0;
  double total_cost = 0.0;
  double final_d = 0.0;
  bool failed = false;  // FailedHop during the rollout
  std::vector<double> inputs;
};

struct SlipStudy {
  std::vector<SlipTrialRecord> records;
  SummaryStats cost_ilqg, cost_trv;       // successful trials
  int failed_ilqg = 0, failed_trv = 0;
  double penalty_cost = 0.0;              // assigned to failed trials
  SummaryStats cost_ilqg_all, cost_trv_all;  // with penalties included
};

struct SlipMcOptions {
  int n_trials = 500;
  std::uint64_t master_seed = 0;
  int threads = 1;
  // when set, every trial uses this measurement covariance instead of the
  // random per-trial draw (the correctly-modeled ablation)
  std::optional<MatrixXd> fixed_meas_cov;
  bool zero_noise = false;  // deterministic ablation
};

SlipStudy run_slip_mc(const SlipScenario& scenario, const NLGSolution& trv_solution,
                      const IlqgBaseline& baseline, const SlipMcOptions& opts);

// ---------------------------------------------------------------------------
// beta sweep

struct BetaSweepEntry {
  double beta = 0.0;
  double expected_cost = 0.0;
  bool converged = false;
};
struct BetaSweepResult {
  std::vector<BetaSweepEntry> entries;
  int selected_index = -1;
  bool threshold_met = false;
};

// Solves the scenario on `count` evenly spaced betas and selects the lowest
// beta whose fully-observed closed-loop expected cost is below the threshold;
// if none qualifies, the best-cost beta is returned flagged.
BetaSweepResult beta_sweep_lava(const LavaScenario& scenario, double beta_lo, double beta_hi,
                                int count, double cost_threshold, const SolverOptions& opts);
BetaSweepResult beta_sweep_slip(const SlipScenario& scenario, double beta_lo, double beta_hi,
                                int count, double cost_threshold, const NLGOptions& opts);

// ---------------------------------------------------------------------------
// robustness bound (Donsker-Varadhan / entropic risk)

// Exact joint distributions of (x_t, mle-trv_t, u_t) for the lava closed loop
// with the faulty sensor, by enumeration over observation histories.
struct DiscreteClosedLoopJoints {
  // per t: joint[t][x](trv, u); terminal state marginal at the end
  std::vector<std::vector<MatrixXd>> joint;
  VectorXd terminal;
  double expected_cost = 0.0;
};
DiscreteClosedLoopJoints enumerate_lava_closed_loop(const LavaScenario& scenario,
                                                    const DiscreteSolution& solution);

struct BoundStage {
  double premise_lhs = 0.0;  // KL(p~ || p)
  double premise_rhs = 0.0;  // I(x; trv)/beta
  double entropic = 0.0;     // rho(c_t) under the offline loop
  double information = 0.0;  // I(x_t; trv_t)
  double empirical = 0.0;    // E_{p~} c_t
  bool premise_ok = false;
};
struct BoundReport {
  std::vector<BoundStage> stages;  // [T+1], terminal has information 0
  double rhs_total = 0.0;
  double empirical_total = 0.0;
  double slack = 0.0;  // rhs - empirical
  bool all_premises_hold = false;
};

BoundReport evaluate_robustness_bound(const DiscreteSystem& sys, const DiscreteSolution& solution,
                                      const DiscreteClosedLoopJoints& online);

// Gaussian closed form of the same report for an LG solution under linear
// (Kalman) TRV filtering with the given sensor.
BoundReport evaluate_robustness_bound_lg(const LGSystem& sys, const QuadCost& cost,
                                         const LGSolution& solution, const LGSensor& sensor);

// Entropic risk of a quadratic form 1/2 (z-c)'H(z-c) under z ~ N(mean, cov);
// +inf when the exponential moment diverges.
double gaussian_entropic_risk(const VectorXd& mean, const MatrixXd& cov, const MatrixXd& H,
                              const VectorXd& center);

}  // namespace ibctrl
