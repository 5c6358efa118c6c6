#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ibctrl/lg_ib.hpp"

namespace ibctrl {

// Deterministic one-step model x_{t+1} = f(x_t, u_t) with additive Gaussian
// noise applied per discrete step.
struct NonlinearModel {
  std::function<VectorXd(const VectorXd&, const VectorXd&)> step;
  std::vector<MatrixXd> process_cov;  // [T]
  int state_dim = 0;
  int input_dim = 0;
};

struct NominalTrajectory {
  std::vector<VectorXd> states;  // [T+1]
  std::vector<VectorXd> inputs;  // [T]
};

// x_{t+1} = f(x_t, u_t) applied from states[0] over the given inputs.
NominalTrajectory rollout(const NonlinearModel& model, const VectorXd& x0,
                          const std::vector<VectorXd>& inputs);

// Deterministic cost of a nominal trajectory.
double trajectory_cost(const QuadCost& cost, const NominalTrajectory& traj);

struct Linearization {
  std::vector<MatrixXd> A;  // [T]
  std::vector<MatrixXd> B;  // [T]
};

// Central-difference Jacobians of f along the trajectory, per-coordinate
// steps h_i = max(1e-6, 1e-6 |value_i|). Throws naming the coordinate and
// time on a non-finite entry.
Linearization linearize_along_trajectory(const NonlinearModel& model,
                                         const NominalTrajectory& traj);

// Perturbation cost delta_c(dx, du) = c(xhat + dx, uhat + du) expanded around
// the nominal; exact for the quadratic family (shifted goals).
QuadCost quadraticize_cost(const QuadCost& cost, const NominalTrajectory& traj);

// Quadraticization of a general smooth cost by second-order central
// differences; indefinite Hessians are clipped to PSD with a warning.
using StageCostFn = std::function<double(const VectorXd&, const VectorXd&, int)>;
using TerminalCostFn = std::function<double(const VectorXd&)>;
QuadCost quadraticize_smooth_cost(const StageCostFn& stage, const TerminalCostFn& terminal,
                                  int input_dim, const NominalTrajectory& traj);

struct NLGOptions {
  double beta = 1.0;             // information weight of the perturbation problem
  int outer_iterations = 50;
  double trajectory_tol = 1e-6;  // sup-norm change of the nominal
  bool line_search = true;       // backtracking on the rolled-out true cost
  double shrink_factor = 0.5;
  int max_shrinks = 10;
  LGSolverOptions lg;
};

struct NLGSolution {
  NominalTrajectory nominal;
  LGSolution lg;          // perturbation solution around the final nominal
  Linearization linear;   // Jacobians at the final nominal
  std::vector<double> cost_trace;  // rolled-out true cost per accepted iterate
  SolveStatus status;
};

// iLQR-style outer loop: linearize, quadraticize, solve the perturbation LG
// problem, shift the nominal by the closed-loop mean perturbation (with
// backtracking if the rolled-out cost increases), repeat until the nominal
// stops moving.
NLGSolution solve_nlg(const NonlinearModel& model, const QuadCost& cost,
                      const Gaussian& init, const std::vector<VectorXd>& nominal_inputs,
                      const NLGOptions& opts);

}  // namespace ibctrl
