#include <cmath>
#include <stdexcept>

#include "experiments_detail.hpp"
#include "ibctrl/experiments.hpp"

namespace ibctrl {

namespace {

constexpr int kLavaStates = 5;
constexpr int kGoal = 2;
constexpr int kLava = 4;
constexpr int kLeft = 0;
constexpr int kRight = 1;
constexpr int kHorizon = 5;

int lava_next(int x, int u) {
  if (x == kLava) return kLava;  // absorbing
  return u == kLeft ? std::max(x - 1, 0) : std::min(x + 1, kLavaStates - 1);
}

}  // namespace

LavaScenario make_lava_scenario(double beta, int n_trvs) {
  LavaScenario out;
  DiscreteSystem& sys = out.system;
  sys.n_states = kLavaStates;
  sys.n_inputs = 2;
  sys.n_trvs = n_trvs;
  sys.horizon = kHorizon;
  sys.beta = beta;

  MatrixXd trans = MatrixXd::Zero(kLavaStates * 2, kLavaStates);
  MatrixXd costs(kLavaStates, 2);
  for (int x = 0; x < kLavaStates; ++x)
    for (int u = 0; u < 2; ++u) {
      const int next = lava_next(x, u);
      trans(x * 2 + u, next) = 1.0;
      const double reward = (next == kGoal && x != kGoal) ? 5.0 : -1.0;
      costs(x, u) = -reward;
    }
  sys.transitions.assign(kHorizon, trans);
  sys.stage_costs.assign(kHorizon, costs);
  sys.terminal_cost = VectorXd::Zero(kLavaStates);
  sys.terminal_cost(kGoal) = -10.0;
  sys.terminal_cost(kLava) = 10.0;
  sys.init = (VectorXd(kLavaStates) << 0.3, 0.4, 0.0, 0.3, 0.0).finished();

  out.accuracy = 0.5;
  MatrixXd sensor(kLavaStates, kLavaStates);
  sensor.setConstant((1.0 - out.accuracy) / (kLavaStates - 1));
  for (int x = 0; x < kLavaStates; ++x) sensor(x, x) = out.accuracy;
  out.sensor.table = sensor;
  out.goal_state = kGoal;
  out.lava_state = kLava;
  return out;
}

MdpPolicy solve_mdp(const DiscreteSystem& sys) {
  MdpPolicy out;
  out.values.resize(sys.horizon + 1);
  out.action.assign(sys.horizon, std::vector<int>(sys.n_states, 0));
  out.values[sys.horizon] = sys.terminal_cost;
  for (int t = sys.horizon - 1; t >= 0; --t) {
    VectorXd v(sys.n_states);
    for (int x = 0; x < sys.n_states; ++x) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int u = 0; u < sys.n_inputs; ++u) {
        const double q = sys.stage_costs[t](x, u) +
                         sys.transitions[t].row(x * sys.n_inputs + u).dot(out.values[t + 1]);
        // ties resolve toward the higher-indexed action
        if (q <= best) {
          best = q;
          arg = u;
        }
      }
      v(x) = best;
      out.action[t][x] = arg;
    }
    out.values[t] = v;
  }
  return out;
}

namespace {

struct LavaPolicyRunner {
  const LavaScenario& scenario;
  const DiscreteSolution& solution;
  const InducedDiscreteTables& induced;
  const MdpPolicy& mdp;

  LavaTrialRecord run(const std::string& policy, int trial, int start,
                      std::uint64_t stream_seed) const {
    const DiscreteSystem& sys = scenario.system;
    RngStream rng(stream_seed);
    LavaTrialRecord rec;
    rec.trial = trial;
    rec.policy = policy;
    rec.seed = stream_seed;
    rec.start_state = start;

    int x = start;
    rec.states.push_back(x);
    VectorXd state_belief = sys.init;     // full-state filters
    VectorXd trv_belief = induced.init_belief;  // TRV filter
    double reward = 0.0;

    for (int t = 0; t < sys.horizon; ++t) {
      const int y = rng.categorical(scenario.sensor.table.row(x).transpose());
      rec.observations.push_back(y);

      int u = 0;
      if (policy == "trv-mle") {
        const DiscreteBelief bel = bayes_measure(induced, t, y, trv_belief);
        u = mle_control(bel, solution.policies[t], rng);
        if (t + 1 < sys.horizon) trv_belief = bayes_process(induced, t, u, bel.probs);
      } else {
        // full-state measurement update
        VectorXd posterior = state_belief.cwiseProduct(scenario.sensor.table.col(y));
        if (posterior.sum() > 0.0)
          posterior /= posterior.sum();
        else
          posterior = state_belief;
        int mle = 0;
        for (int i = 1; i < sys.n_states; ++i)
          if (posterior(i) > posterior(mle)) mle = i;
        if (policy == "mdp-mle") {
          u = mdp.action[t][mle];
        } else {  // trv-sampled
          const int trv = sample_trv_given_state(solution.encoders[t], mle, rng);
          u = rng.categorical(solution.policies[t].row(trv).transpose());
        }
        // full-state process update with the chosen input
        VectorXd next_belief = VectorXd::Zero(sys.n_states);
        for (int i = 0; i < sys.n_states; ++i) {
          if (posterior(i) <= 0.0) continue;
          next_belief += posterior(i) * sys.transitions[t].row(i * sys.n_inputs + u).transpose();
        }
        state_belief = next_belief / next_belief.sum();
      }
      rec.actions.push_back(u);

      reward -= sys.stage_costs[t](x, u);
      x = rng.categorical(sys.transitions[t].row(x * sys.n_inputs + u).transpose());
      rec.states.push_back(x);
      if (x == scenario.lava_state) rec.entered_lava = true;
    }
    reward -= sys.terminal_cost(x);
    rec.total_reward = reward;
    return rec;
  }
};

}  // namespace

LavaStudy run_lava_mc(const LavaScenario& scenario, const DiscreteSolution& solution,
                      int n_trials, std::uint64_t master_seed, int threads) {
  const InducedDiscreteTables induced =
      precompute_induced_discrete(scenario.system, solution, scenario.sensor);
  const MdpPolicy mdp = solve_mdp(scenario.system);
  const LavaPolicyRunner runner{scenario, solution, induced, mdp};

  const std::vector<std::string> policies = {"mdp-mle", "trv-mle", "trv-sampled"};
  LavaStudy study;
  study.records.resize(policies.size() * n_trials);

  // substream layout: 4 slots per trial (start draw + one per policy)
  detail::parallel_trials(n_trials, threads, [&](int trial) {
    const std::uint64_t base = static_cast<std::uint64_t>(trial) * 4;
    RngStream trial_stream = RngStream::substream(master_seed, base);
    const int start = trial_stream.categorical(scenario.system.init);
    for (std::size_t p = 0; p < policies.size(); ++p) {
      const std::uint64_t seed = RngStream::derive_seed(master_seed, base + 1 + p);
      study.records[p * n_trials + trial] = runner.run(policies[p], trial, start, seed);
    }
  });

  std::vector<double> rewards[3];
  int lava_counts[3] = {0, 0, 0};
  for (std::size_t p = 0; p < policies.size(); ++p) {
    for (int trial = 0; trial < n_trials; ++trial) {
      const LavaTrialRecord& rec = study.records[p * n_trials + trial];
      rewards[p].push_back(rec.total_reward);
      if (rec.entered_lava) ++lava_counts[p];
    }
  }
  study.reward_mdp_mle = summarize(rewards[0]);
  study.reward_trv_mle = summarize(rewards[1]);
  study.reward_trv_sampled = summarize(rewards[2]);
  study.lava_count_mdp_mle = lava_counts[0];
  study.lava_count_trv_mle = lava_counts[1];
  study.lava_count_trv_sampled = lava_counts[2];
  return study;
}

BetaSweepResult beta_sweep_lava(const LavaScenario& scenario, double beta_lo, double beta_hi,
                                int count, double cost_threshold, const SolverOptions& opts) {
  if (!(beta_lo > 0.0) || !(beta_hi > beta_lo) || count < 2)
    throw std::invalid_argument("beta_sweep: invalid interval");
  BetaSweepResult out;
  for (int i = 0; i < count; ++i) {
    const double beta = beta_lo + (beta_hi - beta_lo) * i / (count - 1);
    DiscreteSystem sys = scenario.system;
    sys.beta = beta;
    const DiscreteSolution sol = solve(sys, opts);
    out.entries.push_back({beta, expected_cost(sys, sol), sol.status.converged});
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

DiscreteClosedLoopJoints enumerate_lava_closed_loop(const LavaScenario& scenario,
                                                    const DiscreteSolution& solution) {
  const DiscreteSystem& sys = scenario.system;
  const InducedDiscreteTables induced =
      precompute_induced_discrete(sys, solution, scenario.sensor);
  const int n_obs = static_cast<int>(scenario.sensor.table.cols());

  DiscreteClosedLoopJoints out;
  out.joint.assign(sys.horizon,
                   std::vector<MatrixXd>(sys.n_states, MatrixXd::Zero(sys.n_trvs, sys.n_inputs)));
  out.terminal = VectorXd::Zero(sys.n_states);

  struct Node {
    int t;
    int x;
    VectorXd belief;  // TRV belief before the measurement at time t
    double prob;
  };
  std::vector<Node> stack;
  for (int x = 0; x < sys.n_states; ++x)
    if (sys.init(x) > 0.0) stack.push_back({0, x, induced.init_belief, sys.init(x)});

  std::size_t expansions = 0;
  while (!stack.empty()) {
    Node node = stack.back();
    stack.pop_back();
    if (++expansions > 50'000'000)
      throw std::runtime_error("enumerate_lava_closed_loop: state space blow-up");
    if (node.t == sys.horizon) {
      out.terminal(node.x) += node.prob;
      continue;
    }
    for (int y = 0; y < n_obs; ++y) {
      const double py = scenario.sensor.table(node.x, y);
      if (py <= 0.0) continue;
      const DiscreteBelief posterior = bayes_measure(induced, node.t, y, node.belief);
      const int trv = Categorical::normalized(posterior.probs).argmax();
      for (int u = 0; u < sys.n_inputs; ++u) {
        const double pu = solution.policies[node.t](trv, u);
        if (pu <= 0.0) continue;
        const double branch = node.prob * py * pu;
        out.joint[node.t][node.x](trv, u) += branch;
        VectorXd next_belief;
        if (node.t + 1 < sys.horizon)
          next_belief = bayes_process(induced, node.t, u, posterior.probs);
        for (int xn = 0; xn < sys.n_states; ++xn) {
          const double px = sys.transition(node.t, node.x, u, xn);
          if (px <= 0.0) continue;
          stack.push_back({node.t + 1, xn, next_belief, branch * px});
        }
      }
    }
  }

  for (int t = 0; t < sys.horizon; ++t)
    for (int x = 0; x < sys.n_states; ++x)
      for (int k = 0; k < sys.n_trvs; ++k)
        for (int u = 0; u < sys.n_inputs; ++u)
          out.expected_cost += out.joint[t][x](k, u) * sys.stage_costs[t](x, u);
  out.expected_cost += out.terminal.dot(sys.terminal_cost);
  return out;
}

}  // namespace ibctrl
