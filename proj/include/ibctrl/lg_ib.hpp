#pragma once

#include <vector>

#include "ibctrl/discrete_ib.hpp"  // SolveStatus, SolverOptions
#include "ibctrl/probdist.hpp"

namespace ibctrl {

// x_{t+1} = A_t x_t + B_t u_t + eps_t, eps_t ~ N(0, process_cov[t]),
// x_0 ~ N(init_mean, init_cov).
struct LGSystem {
  std::vector<MatrixXd> A;            // [T], n x n
  std::vector<MatrixXd> B;            // [T], n x m
  std::vector<MatrixXd> process_cov;  // [T], n x n PSD
  VectorXd init_mean;
  MatrixXd init_cov;
  int horizon = 0;
  double beta = 1.0;

  int state_dim() const { return static_cast<int>(init_mean.size()); }
  int input_dim() const { return static_cast<int>(B.empty() ? 0 : B[0].cols()); }
  void validate() const;
};

// c_t(x,u) = 1/2 (x-g_t)' Q_t (x-g_t) + 1/2 (u-w_t)' R_t (u-w_t); index T holds
// the terminal state cost and R[T] is required to be zero.
struct QuadCost {
  std::vector<MatrixXd> Q;  // [T+1]
  std::vector<MatrixXd> R;  // [T+1], R[T] == 0
  std::vector<VectorXd> g;  // [T+1]
  std::vector<VectorXd> w;  // [T+1]

  void validate(int n, int m, int horizon) const;
  static QuadCost constant(const MatrixXd& Q, const MatrixXd& R, const VectorXd& g,
                           const VectorXd& w, const MatrixXd& terminal_Q,
                           const VectorXd& terminal_g, int horizon);
};

// trv_t = C_t x_t + a_t + eta_t, eta_t ~ N(0, noise_cov); noise_cov is kept
// strictly positive definite (eigenvalue floor 1e-10), rank deficiency of the
// encoder is carried by C_t.
struct AffineEncoder {
  MatrixXd C;          // k x n
  VectorXd a;          // k
  MatrixXd noise_cov;  // k x k
};

// u_t = K_t trv_t + h_t.
struct AffinePolicy {
  MatrixXd K;  // m x k
  VectorXd h;  // m
};

// nu_t(x) = 1/2 x' P_t x + b_t' x + constant (constant untracked).
struct QuadValue {
  MatrixXd P;
  VectorXd b;
};

struct GaussianTrajectory {
  std::vector<Gaussian> state;  // [T+1]
  std::vector<Gaussian> trv;    // [T]
};

struct LGSolution {
  std::vector<AffineEncoder> encoders;  // [T]
  std::vector<AffinePolicy> policies;   // [T]
  std::vector<QuadValue> values;        // [T+1]
  GaussianTrajectory gaussians;
  std::vector<double> objective_trace;
  SolveStatus status;
};

// Closed-loop propagation of the state and TRV Gaussians. Covariances are
// symmetrized and clipped to PSD; clips beyond 1e-6 raise.
GaussianTrajectory propagate_gaussians(const LGSystem& sys,
                                       const std::vector<AffineEncoder>& encoders,
                                       const std::vector<AffinePolicy>& policies);

// Quadratic cost-to-go recursion with
//   G_t = C_t' (C_t Sigma_x C_t' + noise_cov)^{-1} C_t,
//   M_t = A_t + B_t K_t C_t:
//   P_t = Q_t + G_t / beta + C_t'K_t'R_t K_t C_t + M_t' P_{t+1} M_t,
//   b_t = M_t'P_{t+1}B_t(h_t + K_t a_t) - Q_t g_t - G_t xbar_t / beta
//         + C_t'K_t'R_t(K_t a_t + h_t - w_t) + M_t' b_{t+1},
// terminated by P_T = Q_T, b_T = -Q_T g_T.
std::vector<QuadValue> backward_value(const LGSystem& sys, const QuadCost& cost,
                                      const std::vector<AffineEncoder>& encoders,
                                      const std::vector<AffinePolicy>& policies,
                                      const GaussianTrajectory& gaussians);

// Solves the stage-t first-order conditions
//   noise_cov^{-1} = Sigma_trv^{-1} + beta K'(B'P_{t+1}B + R)K,
//   C = -beta noise_cov K'B'P_{t+1}A,
//   a = -noise_cov (beta K'B'(b_{t+1} + P_{t+1}B h) + beta K'R(h - w)
//        - Sigma_trv^{-1} trv_mean)
// by damped fixed-point iteration (the conditions are coupled through
// Sigma_trv and trv_mean). Returns the encoder and the achieved residual.
struct EncoderStageResult {
  AffineEncoder encoder;
  double residual = 0.0;
  bool converged = false;
};
EncoderStageResult solve_encoder_fonc(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R,
                                      const VectorXd& w, const AffinePolicy& policy,
                                      const QuadValue& value_next, const Gaussian& state,
                                      double beta, const AffineEncoder& init,
                                      double residual_tol = 1e-10, int max_sweeps = 200);

// Backward sweep: per stage, solve the encoder conditions against the lagged
// state Gaussians, then advance the value recursion with the new encoder.
struct LGEncoderUpdate {
  std::vector<AffineEncoder> encoders;
  std::vector<QuadValue> values;
  bool converged = true;  // false if an inner fixed point missed tolerance
};
LGEncoderUpdate update_encoders(const LGSystem& sys, const QuadCost& cost,
                                const std::vector<AffinePolicy>& policies,
                                const std::vector<AffineEncoder>& encoders_init,
                                const GaussianTrajectory& gaussians);

// Exact minimizer of the stage quadratic J(K_t, h_t): solves the stationarity
// system; minimum-norm solution when R + B'P_{t+1}B is singular.
AffinePolicy policy_qp_stage(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R,
                             const VectorXd& w, const QuadValue& value_next,
                             const Gaussian& state, const AffineEncoder& encoder);
std::vector<AffinePolicy> update_policies(const LGSystem& sys, const QuadCost& cost,
                                          const std::vector<AffineEncoder>& encoders,
                                          const std::vector<QuadValue>& values,
                                          const GaussianTrajectory& gaussians);

// Gradient of the stage objective J at (K, h), for optimality checks.
struct PolicyGradient {
  MatrixXd dK;
  VectorXd dh;
};
PolicyGradient policy_qp_gradient(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R,
                                  const VectorXd& w, const QuadValue& value_next,
                                  const Gaussian& state, const AffineEncoder& encoder,
                                  const AffinePolicy& policy);

// Expected quadratic cost of the closed loop (no information term).
double lg_expected_cost(const LGSystem& sys, const QuadCost& cost,
                        const std::vector<AffineEncoder>& encoders,
                        const std::vector<AffinePolicy>& policies);

// Full objective: expected cost plus (1/beta) sum_t I(x_t; trv_t) with the
// Gaussian closed form.
double evaluate_lg_objective(const LGSystem& sys, const QuadCost& cost,
                             const LGSolution& solution);

struct LGSolverOptions : SolverOptions {
  int trv_dim = -1;                 // defaults to the state dimension
  double fonc_residual_tol = 1e-10;
  int fonc_max_sweeps = 200;
  LGSolverOptions() {
    param_tol = 1e-10;  // FONC residuals need parameter-level convergence
  }
};

LGSolution solve_lg(const LGSystem& sys, const QuadCost& cost, const LGSolverOptions& opts);

// Max entrywise residual of the three stage conditions over all stages,
// evaluated at the stored solution (conditions in solved form: errors on C,
// a and noise_cov themselves).
double lg_fonc_residual(const LGSystem& sys, const QuadCost& cost, const LGSolution& solution);

}  // namespace ibctrl
