#pragma once

#include <vector>

#include "ibctrl/discrete_ib.hpp"
#include "ibctrl/lg_ib.hpp"
#include "ibctrl/util.hpp"

namespace ibctrl {

// Measurement models y_t given x_t.
struct DiscreteSensor {
  MatrixXd table;  // n_states x n_obs, row-stochastic
};
struct LGSensor {
  MatrixXd D;          // l x n
  MatrixXd noise_cov;  // l x l PSD
};

// Offline-precomputed filter tables on the TRV chain:
//   q_t(trv' | trv, u) = sum_{x'} q_{t+1}(trv'|x') sum_x p_t(x'|x,u) p_t(x|trv)
//   sigma_t(y | trv)   = sum_x sigma_t(y|x) p_t(x|trv)
// with p_t(x|trv) by Bayes inversion of the encoder against the solution
// marginals. Rows conditioned on a zero-mass TRV are uniform placeholders,
// flagged unreachable.
struct InducedDiscreteTables {
  std::vector<MatrixXd> trv_transitions;       // [T-1], (n_trvs*n_inputs) x n_trvs
  std::vector<MatrixXd> trv_sensors;           // [T], n_trvs x n_obs
  std::vector<std::vector<bool>> unreachable;  // [T][n_trvs]
  VectorXd init_belief;                        // q_0 marginal
  int n_trvs = 0;
  int n_inputs = 0;
};

InducedDiscreteTables precompute_induced_discrete(const DiscreteSystem& sys,
                                                  const DiscreteSolution& solution,
                                                  const DiscreteSensor& sensor);

struct DiscreteBelief {
  VectorXd probs;
  // set when a measurement zeroed the posterior and the filter fell back to
  // the predicted belief
  bool degenerate_observation = false;
};

// Process update with q_{t-1}(trv_t | trv_{t-1}, u_{t-1}).
VectorXd bayes_process(const InducedDiscreteTables& tables, int t_prev, int input,
                       const VectorXd& belief);
// Measurement update with sigma_t(y | trv); total mass zero falls back to the
// prediction with the degenerate flag set.
DiscreteBelief bayes_measure(const InducedDiscreteTables& tables, int t, int obs,
                             const VectorXd& predicted);
// Combined step into time t: process with (u_{t-1}, belief at t-1), then
// integrate y_t.
DiscreteBelief bayes_step(const InducedDiscreteTables& tables, int t, int input_prev, int obs,
                          const VectorXd& belief_prev);

// Induced linear-Gaussian system on the TRVs (process for t = 0..T-2,
// measurement for t = 0..T-1):
//   trv_{t+1} = A[t] trv_t + B[t] u_t + r[t] + eps,  eps ~ N(0, process_cov[t])
//   y_t       = D[t] trv_t + offset[t] + omega,      omega ~ N(0, meas_cov[t])
struct InducedTRVSystem {
  std::vector<MatrixXd> A, B;
  std::vector<VectorXd> r;
  std::vector<MatrixXd> process_cov;
  std::vector<MatrixXd> D;
  std::vector<VectorXd> offset;
  std::vector<MatrixXd> meas_cov;
  VectorXd init_mean;
  MatrixXd init_cov;
};

InducedTRVSystem build_induced_lg(const LGSystem& sys, const std::vector<AffineEncoder>& encoders,
                                  const GaussianTrajectory& gaussians, const LGSensor& sensor);

Gaussian kalman_predict(const InducedTRVSystem& induced, int t_prev, const VectorXd& input,
                        const Gaussian& belief);
// Joseph-form measurement update; throws if the innovation covariance is
// singular.
Gaussian kalman_update(const InducedTRVSystem& induced, int t, const VectorXd& obs,
                       const Gaussian& predicted);
Gaussian kalman_step(const InducedTRVSystem& induced, int t, const VectorXd& input_prev,
                     const VectorXd& obs, const Gaussian& belief_prev);

// Normalized innovation squared of a measurement under the predicted belief
// (chi-square consistency statistic).
double innovation_nis(const InducedTRVSystem& induced, int t, const VectorXd& obs,
                      const Gaussian& predicted);

// Control extraction at the maximum-likelihood TRV. Discrete beliefs take the
// argmax (lowest index on ties) and sample the policy row; one-hot rows give
// their support point. Gaussian beliefs use the mean with the affine policy.
int mle_control(const DiscreteBelief& belief, const MatrixXd& policy, RngStream& rng);
VectorXd mle_control(const Gaussian& belief, const AffinePolicy& policy);

// Sampling-based TRV draw q_t(trv | x) (exposed for completeness; the
// experiments use the MLE path).
int sample_trv_given_state(const MatrixXd& encoder, int state, RngStream& rng);
VectorXd sample_trv_given_state(const AffineEncoder& encoder, const VectorXd& state,
                                RngStream& rng);

}  // namespace ibctrl
