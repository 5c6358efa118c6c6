#include "ibctrl/trv_filter.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ibctrl {

InducedDiscreteTables precompute_induced_discrete(const DiscreteSystem& sys,
                                                  const DiscreteSolution& solution,
                                                  const DiscreteSensor& sensor) {
  if (sensor.table.rows() != sys.n_states)
    throw std::invalid_argument("precompute_induced_discrete: sensor row count");
  CondTable sensor_check(sensor.table);
  const int n_obs = static_cast<int>(sensor.table.cols());

  InducedDiscreteTables out;
  out.n_trvs = sys.n_trvs;
  out.n_inputs = sys.n_inputs;
  out.trv_transitions.resize(sys.horizon - 1);
  out.trv_sensors.resize(sys.horizon);
  out.unreachable.assign(sys.horizon, std::vector<bool>(sys.n_trvs, false));
  out.init_belief = solution.trv_marginals[0];

  // p_t(x | trv) by Bayes inversion, one row per trv
  std::vector<MatrixXd> state_given_trv(sys.horizon);
  for (int t = 0; t < sys.horizon; ++t) {
    MatrixXd inv(sys.n_trvs, sys.n_states);
    for (int k = 0; k < sys.n_trvs; ++k) {
      const double mass = solution.trv_marginals[t](k);
      if (mass <= 0.0) {
        inv.row(k).setConstant(1.0 / sys.n_states);
        out.unreachable[t][k] = true;
        continue;
      }
      for (int x = 0; x < sys.n_states; ++x)
        inv(k, x) = solution.encoders[t](x, k) * solution.marginals[t](x) / mass;
      inv.row(k) /= inv.row(k).sum();
    }
    state_given_trv[t] = inv;
    out.trv_sensors[t] = inv * sensor.table;
    for (int k = 0; k < sys.n_trvs; ++k) {
      const double rs = out.trv_sensors[t].row(k).sum();
      if (std::abs(rs - 1.0) > 1e-10)
        throw std::runtime_error("precompute_induced_discrete: sensor row " +
                                 std::to_string(k) + " sums to " + std::to_string(rs));
      out.trv_sensors[t].row(k) /= rs;
    }
  }

  for (int t = 0; t + 1 < sys.horizon; ++t) {
    MatrixXd table(sys.n_trvs * sys.n_inputs, sys.n_trvs);
    for (int k = 0; k < sys.n_trvs; ++k) {
      for (int u = 0; u < sys.n_inputs; ++u) {
        // p_t(x' | trv, u) then push through the next encoder
        VectorXd next_state = VectorXd::Zero(sys.n_states);
        for (int x = 0; x < sys.n_states; ++x) {
          const double w = state_given_trv[t](k, x);
          if (w <= 0.0) continue;
          next_state += w * sys.transitions[t].row(x * sys.n_inputs + u).transpose();
        }
        VectorXd row = solution.encoders[t + 1].transpose() * next_state;
        const double rs = row.sum();
        if (rs <= 0.0)
          row.setConstant(1.0 / sys.n_trvs);
        else
          row /= rs;
        table.row(k * sys.n_inputs + u) = row.transpose();
      }
    }
    out.trv_transitions[t] = table;
  }
  return out;
}

VectorXd bayes_process(const InducedDiscreteTables& tables, int t_prev, int input,
                       const VectorXd& belief) {
  const MatrixXd& table = tables.trv_transitions.at(t_prev);
  VectorXd predicted = VectorXd::Zero(tables.n_trvs);
  for (int k = 0; k < tables.n_trvs; ++k) {
    if (belief(k) <= 0.0) continue;
    predicted += belief(k) * table.row(k * tables.n_inputs + input).transpose();
  }
  const double total = predicted.sum();
  if (!(total > 0.0)) throw std::runtime_error("bayes_process: predicted mass vanished");
  return predicted / total;
}

DiscreteBelief bayes_measure(const InducedDiscreteTables& tables, int t, int obs,
                             const VectorXd& predicted) {
  if (obs < 0 || obs >= tables.trv_sensors.at(t).cols())
    throw std::invalid_argument("bayes_measure: observation out of range");
  DiscreteBelief out;
  out.probs = predicted.cwiseProduct(tables.trv_sensors[t].col(obs));
  const double total = out.probs.sum();
  if (total > 0.0) {
    out.probs /= total;
  } else {
    // impossible observation under the belief: fall back to the prediction
    out.probs = predicted;
    out.degenerate_observation = true;
  }
  return out;
}

DiscreteBelief bayes_step(const InducedDiscreteTables& tables, int t, int input_prev, int obs,
                          const VectorXd& belief_prev) {
  return bayes_measure(tables, t, obs, bayes_process(tables, t - 1, input_prev, belief_prev));
}

namespace {

MatrixXd sym(const MatrixXd& m) { return 0.5 * (m + m.transpose().eval()); }

MatrixXd inverse_spd(const MatrixXd& m, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(m));
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
  if (lo <= kPsdTol * std::max(1.0, hi))
    throw std::runtime_error(what + ": singular covariance");
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

InducedTRVSystem build_induced_lg(const LGSystem& sys, const std::vector<AffineEncoder>& encoders,
                                  const GaussianTrajectory& gaussians, const LGSensor& sensor) {
  const int T = sys.horizon;
  if (static_cast<int>(encoders.size()) != T)
    throw std::invalid_argument("build_induced_lg: encoder count");
  InducedTRVSystem out;
  out.A.resize(std::max(0, T - 1));
  out.B.resize(std::max(0, T - 1));
  out.r.resize(std::max(0, T - 1));
  out.process_cov.resize(std::max(0, T - 1));
  out.D.resize(T);
  out.offset.resize(T);
  out.meas_cov.resize(T);

  for (int t = 0; t < T; ++t) {
    const AffineEncoder& enc = encoders[t];
    const VectorXd& xbar = gaussians.state[t].mean();
    const MatrixXd& xcov = gaussians.state[t].cov();
    const MatrixXd trv_cov = sym(enc.C * xcov * enc.C.transpose() + enc.noise_cov);
    const MatrixXd trv_prec = inverse_spd(trv_cov, "build_induced_lg");
    const VectorXd trv_mean = enc.C * xbar + enc.a;
    // MMSE conditionals of x given trv
    const MatrixXd gain = xcov * enc.C.transpose() * trv_prec;  // n x k
    const MatrixXd cond_cov = sym(xcov - gain * enc.C * xcov);

    out.D[t] = sensor.D * gain;
    out.offset[t] = sensor.D * xbar - out.D[t] * trv_mean;
    out.meas_cov[t] = sym(sensor.D * cond_cov * sensor.D.transpose() + sensor.noise_cov);

    if (t == 0) {
      out.init_mean = trv_mean;
      out.init_cov = trv_cov;
    }
    if (t + 1 < T) {
      const AffineEncoder& enc_next = encoders[t + 1];
      out.A[t] = enc_next.C * sys.A[t] * gain;
      out.B[t] = enc_next.C * sys.B[t];
      out.r[t] = -out.A[t] * trv_mean + enc_next.C * sys.A[t] * xbar + enc_next.a;
      const MatrixXd next_state_cond =
          sym(sys.A[t] * cond_cov * sys.A[t].transpose() + sys.process_cov[t]);
      out.process_cov[t] =
          sym(enc_next.C * next_state_cond * enc_next.C.transpose() + enc_next.noise_cov);
    }
  }
  return out;
}

Gaussian kalman_predict(const InducedTRVSystem& induced, int t_prev, const VectorXd& input,
                        const Gaussian& belief) {
  const VectorXd mean = induced.A.at(t_prev) * belief.mean() + induced.B[t_prev] * input +
                        induced.r[t_prev];
  const MatrixXd cov = sym(induced.A[t_prev] * belief.cov() * induced.A[t_prev].transpose() +
                           induced.process_cov[t_prev]);
  return Gaussian(mean, cov);
}

Gaussian kalman_update(const InducedTRVSystem& induced, int t, const VectorXd& obs,
                       const Gaussian& predicted) {
  const MatrixXd& D = induced.D.at(t);
  const VectorXd innovation = obs - (D * predicted.mean() + induced.offset[t]);
  const MatrixXd S = sym(D * predicted.cov() * D.transpose() + induced.meas_cov[t]);
  const MatrixXd S_inv = inverse_spd(S, "kalman_update: innovation covariance");
  const MatrixXd gain = predicted.cov() * D.transpose() * S_inv;
  const VectorXd mean = predicted.mean() + gain * innovation;
  const MatrixXd closed = MatrixXd::Identity(D.cols(), D.cols()) - gain * D;
  // Joseph form
  const MatrixXd cov = sym(closed * predicted.cov() * closed.transpose() +
                           gain * induced.meas_cov[t] * gain.transpose());
  return Gaussian(mean, cov);
}

Gaussian kalman_step(const InducedTRVSystem& induced, int t, const VectorXd& input_prev,
                     const VectorXd& obs, const Gaussian& belief_prev) {
  return kalman_update(induced, t, obs, kalman_predict(induced, t - 1, input_prev, belief_prev));
}

double innovation_nis(const InducedTRVSystem& induced, int t, const VectorXd& obs,
                      const Gaussian& predicted) {
  const MatrixXd& D = induced.D.at(t);
  const VectorXd innovation = obs - (D * predicted.mean() + induced.offset[t]);
  const MatrixXd S = sym(D * predicted.cov() * D.transpose() + induced.meas_cov[t]);
  return innovation.dot(inverse_spd(S, "innovation_nis") * innovation);
}

int mle_control(const DiscreteBelief& belief, const MatrixXd& policy, RngStream& rng) {
  const int trv = Categorical::normalized(belief.probs).argmax();
  return rng.categorical(policy.row(trv).transpose());
}

VectorXd mle_control(const Gaussian& belief, const AffinePolicy& policy) {
  return policy.K * belief.mean() + policy.h;
}

int sample_trv_given_state(const MatrixXd& encoder, int state, RngStream& rng) {
  return rng.categorical(encoder.row(state).transpose());
}

VectorXd sample_trv_given_state(const AffineEncoder& encoder, const VectorXd& state,
                                RngStream& rng) {
  return encoder.C * state + encoder.a +
         rng.gaussian(VectorXd::Zero(encoder.a.size()), encoder.noise_cov);
}

}  // namespace ibctrl
