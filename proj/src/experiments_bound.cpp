#include <cmath>
#include <stdexcept>

#include "ibctrl/experiments.hpp"

namespace ibctrl {

namespace {

constexpr double kPremiseSlack = 1e-12;

// KL between two joint tables laid out as [x](trv, u); +inf on support
// violation.
double joint_kl(const std::vector<MatrixXd>& online, const std::vector<MatrixXd>& offline) {
  double kl = 0.0;
  for (std::size_t x = 0; x < online.size(); ++x)
    for (int k = 0; k < online[x].rows(); ++k)
      for (int u = 0; u < online[x].cols(); ++u) {
        const double p = online[x](k, u);
        if (p <= 0.0) continue;
        const double q = offline[x](k, u);
        if (q <= 0.0) return infinite_divergence();
        kl += p * std::log(p / q);
      }
  return std::max(kl, 0.0);
}

}  // namespace

BoundReport evaluate_robustness_bound(const DiscreteSystem& sys, const DiscreteSolution& solution,
                                      const DiscreteClosedLoopJoints& online) {
  BoundReport report;
  report.stages.resize(sys.horizon + 1);
  for (int t = 0; t < sys.horizon; ++t) {
    BoundStage& stage = report.stages[t];
    // offline closed-loop joint p_t(x, trv, u)
    std::vector<MatrixXd> offline(sys.n_states);
    MatrixXd xu_weights = MatrixXd::Zero(sys.n_states, sys.n_inputs);
    for (int x = 0; x < sys.n_states; ++x) {
      offline[x] = MatrixXd::Zero(sys.n_trvs, sys.n_inputs);
      for (int k = 0; k < sys.n_trvs; ++k)
        for (int u = 0; u < sys.n_inputs; ++u) {
          offline[x](k, u) =
              solution.marginals[t](x) * solution.encoders[t](x, k) * solution.policies[t](k, u);
          xu_weights(x, u) += offline[x](k, u);
        }
    }
    stage.premise_lhs = joint_kl(online.joint[t], offline);
    stage.information =
        mutual_information(Categorical(solution.marginals[t]), CondTable(solution.encoders[t]));
    stage.premise_rhs = stage.information / sys.beta;
    stage.premise_ok = stage.premise_lhs <= stage.premise_rhs + kPremiseSlack;

    // entropic risk of c_t under the offline loop, max-shifted
    double cmax = -std::numeric_limits<double>::infinity();
    for (int x = 0; x < sys.n_states; ++x)
      for (int u = 0; u < sys.n_inputs; ++u)
        if (xu_weights(x, u) > 0.0) cmax = std::max(cmax, sys.stage_costs[t](x, u));
    double acc = 0.0;
    for (int x = 0; x < sys.n_states; ++x)
      for (int u = 0; u < sys.n_inputs; ++u)
        if (xu_weights(x, u) > 0.0)
          acc += xu_weights(x, u) * std::exp(sys.stage_costs[t](x, u) - cmax);
    stage.entropic = cmax + std::log(acc);

    for (int x = 0; x < sys.n_states; ++x)
      for (int k = 0; k < sys.n_trvs; ++k)
        for (int u = 0; u < sys.n_inputs; ++u)
          stage.empirical += online.joint[t][x](k, u) * sys.stage_costs[t](x, u);
  }

  // terminal stage: no encoder, information 0, premise compares the state
  // marginals
  BoundStage& last = report.stages[sys.horizon];
  last.information = 0.0;
  last.premise_rhs = 0.0;
  last.premise_lhs =
      kl_divergence(Categorical(online.terminal), Categorical(solution.marginals[sys.horizon]));
  last.premise_ok = last.premise_lhs <= kPremiseSlack;
  last.entropic = entropic_risk(sys.terminal_cost, Categorical(solution.marginals[sys.horizon]));
  last.empirical = online.terminal.dot(sys.terminal_cost);

  report.all_premises_hold = true;
  for (const BoundStage& stage : report.stages) {
    report.rhs_total += stage.entropic + stage.premise_rhs;
    report.empirical_total += stage.empirical;
    report.all_premises_hold = report.all_premises_hold && stage.premise_ok;
  }
  report.slack = report.rhs_total - report.empirical_total;
  return report;
}

double gaussian_entropic_risk(const VectorXd& mean, const MatrixXd& cov, const MatrixXd& H,
                              const VectorXd& center) {
  const int n = static_cast<int>(mean.size());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (cov + cov.transpose().eval()));
  const MatrixXd root = es.eigenvectors() *
                        es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                        es.eigenvectors().transpose();
  const VectorXd m = mean - center;
  const MatrixXd M = root * H * root;
  Eigen::SelfAdjointEigenSolver<MatrixXd> mes(0.5 * (M + M.transpose().eval()));
  const double top = mes.eigenvalues().maxCoeff();
  if (top >= 1.0) return std::numeric_limits<double>::infinity();
  const VectorXd v = root * (H * m);
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(1.0 - mes.eigenvalues()(i));
  const MatrixXd eye_minus = MatrixXd::Identity(n, n) - M;
  const VectorXd solve_v = eye_minus.ldlt().solve(v);
  return 0.5 * m.dot(H * m) - 0.5 * logdet + 0.5 * v.dot(solve_v);
}

BoundReport evaluate_robustness_bound_lg(const LGSystem& sys, const QuadCost& cost,
                                         const LGSolution& solution, const LGSensor& sensor) {
  const int T = sys.horizon;
  const int n = sys.state_dim();
  const int k = static_cast<int>(solution.encoders[0].C.rows());
  const InducedTRVSystem induced =
      build_induced_lg(sys, solution.encoders, solution.gaussians, sensor);

  // Deterministic filter covariances and gains (believed model = simulated
  // model here).
  std::vector<MatrixXd> gains(T);
  std::vector<MatrixXd> post_cov(T);
  {
    MatrixXd predicted = induced.init_cov;
    for (int t = 0; t < T; ++t) {
      const MatrixXd& D = induced.D[t];
      const MatrixXd S = D * predicted * D.transpose() + induced.meas_cov[t];
      gains[t] = S.transpose().ldlt().solve(D * predicted.transpose()).transpose();
      const MatrixXd closed = MatrixXd::Identity(k, k) - gains[t] * D;
      post_cov[t] = closed * predicted * closed.transpose() +
                    gains[t] * induced.meas_cov[t] * gains[t].transpose();
      if (t + 1 < T)
        predicted = induced.A[t] * post_cov[t] * induced.A[t].transpose() +
                    induced.process_cov[t];
    }
  }

  // Joint Gaussian over (x_t, m_t) where m_t is the posterior filter mean:
  // everything is affine in past noises, so propagate mean and covariance of
  // the augmented vector.
  BoundReport report;
  report.stages.resize(T + 1);

  VectorXd aug_mean(n + k);
  MatrixXd aug_cov = MatrixXd::Zero(n + k, n + k);
  // before the first measurement: x_0 and the deterministic prior mean
  aug_mean.head(n) = sys.init_mean;
  aug_mean.tail(k) = induced.init_mean;
  aug_cov.topLeftCorner(n, n) = sys.init_cov;

  for (int t = 0; t <= T; ++t) {
    if (t > 0) {
      // predict both blocks with u_{t-1} = K m_{t-1} + h
      const MatrixXd& K = solution.policies[t - 1].K;
      const VectorXd& h = solution.policies[t - 1].h;
      MatrixXd F = MatrixXd::Zero(n + k, n + k);
      F.topLeftCorner(n, n) = sys.A[t - 1];
      F.topRightCorner(n, k) = sys.B[t - 1] * K;
      VectorXd c = VectorXd::Zero(n + k);
      c.head(n) = sys.B[t - 1] * h;
      if (t < T + 1 && t - 1 < static_cast<int>(induced.A.size())) {
        F.bottomRightCorner(k, k) = induced.A[t - 1] + induced.B[t - 1] * K;
        c.tail(k) = induced.B[t - 1] * h + induced.r[t - 1];
      }
      MatrixXd noise = MatrixXd::Zero(n + k, n + k);
      noise.topLeftCorner(n, n) = sys.process_cov[t - 1];
      aug_mean = F * aug_mean + c;
      aug_cov = F * aug_cov * F.transpose() + noise;
    }
    if (t == T) break;

    // measurement update of the m block: m <- m + G (D x + omega - D~ m - off)
    const MatrixXd& G = gains[t];
    const MatrixXd& Dt = induced.D[t];
    MatrixXd U = MatrixXd::Identity(n + k, n + k);
    U.bottomLeftCorner(k, n) = G * sensor.D;
    U.bottomRightCorner(k, k) = MatrixXd::Identity(k, k) - G * Dt;
    VectorXd off = VectorXd::Zero(n + k);
    off.tail(k) = -G * induced.offset[t];
    MatrixXd meas_noise = MatrixXd::Zero(n + k, n + k);
    meas_noise.bottomRightCorner(k, k) = G * sensor.noise_cov * G.transpose();
    aug_mean = U * aug_mean + off;
    aug_cov = U * aug_cov * U.transpose() + meas_noise;
    aug_cov = 0.5 * (aug_cov + aug_cov.transpose().eval());

    BoundStage& stage = report.stages[t];
    // online joint over (x, trv := m)
    const Gaussian online(aug_mean, aug_cov);
    // offline joint over (x, trv)
    VectorXd off_mean(n + k);
    off_mean.head(n) = solution.gaussians.state[t].mean();
    off_mean.tail(k) = solution.gaussians.trv[t].mean();
    MatrixXd off_cov(n + k, n + k);
    const MatrixXd& xcov = solution.gaussians.state[t].cov();
    const MatrixXd cross = xcov * solution.encoders[t].C.transpose();
    off_cov.topLeftCorner(n, n) = xcov;
    off_cov.topRightCorner(n, k) = cross;
    off_cov.bottomLeftCorner(k, n) = cross.transpose();
    off_cov.bottomRightCorner(k, k) = solution.gaussians.trv[t].cov();
    const Gaussian offline(off_mean, 0.5 * (off_cov + off_cov.transpose().eval()));

    stage.premise_lhs = kl_divergence(online, offline);
    stage.information = mutual_information(solution.gaussians.state[t], solution.encoders[t].C,
                                           solution.encoders[t].noise_cov);
    stage.premise_rhs = stage.information / sys.beta;
    stage.premise_ok = stage.premise_lhs <= stage.premise_rhs + kPremiseSlack;

    // entropic risk of c_t under the offline (x, u) joint
    const MatrixXd& K = solution.policies[t].K;
    const int m_dim = static_cast<int>(K.rows());
    MatrixXd J = MatrixXd::Zero(n + m_dim, n + k);
    J.topLeftCorner(n, n).setIdentity();
    J.bottomRightCorner(m_dim, k) = K;
    VectorXd shift = VectorXd::Zero(n + m_dim);
    shift.tail(m_dim) = solution.policies[t].h;
    MatrixXd H = MatrixXd::Zero(n + m_dim, n + m_dim);
    H.topLeftCorner(n, n) = cost.Q[t];
    H.bottomRightCorner(m_dim, m_dim) = cost.R[t];
    VectorXd center(n + m_dim);
    center.head(n) = cost.g[t];
    center.tail(m_dim) = cost.w[t];

    const VectorXd xu_off_mean = J * off_mean + shift;
    const MatrixXd xu_off_cov = J * offline.cov() * J.transpose();
    stage.entropic = gaussian_entropic_risk(xu_off_mean, xu_off_cov, H, center);

    // empirical expected cost under the online joint
    const VectorXd xu_on_mean = J * aug_mean + shift;
    const MatrixXd xu_on_cov = J * aug_cov * J.transpose();
    const VectorXd d = xu_on_mean - center;
    stage.empirical = 0.5 * d.dot(H * d) + 0.5 * (H * xu_on_cov).trace();
  }

  // terminal stage
  BoundStage& last = report.stages[T];
  const Gaussian online_terminal(aug_mean.head(n),
                                 MatrixXd(aug_cov.topLeftCorner(n, n)));
  last.premise_lhs = kl_divergence(online_terminal, solution.gaussians.state[T]);
  last.premise_rhs = 0.0;
  last.information = 0.0;
  last.premise_ok = last.premise_lhs <= kPremiseSlack;
  last.entropic = gaussian_entropic_risk(solution.gaussians.state[T].mean(),
                                         solution.gaussians.state[T].cov(), cost.Q[T],
                                         cost.g[T]);
  const VectorXd dT = aug_mean.head(n) - cost.g[T];
  last.empirical =
      0.5 * dT.dot(cost.Q[T] * dT) + 0.5 * (cost.Q[T] * aug_cov.topLeftCorner(n, n)).trace();

  report.all_premises_hold = true;
  for (const BoundStage& stage : report.stages) {
    report.rhs_total += stage.entropic + stage.premise_rhs;
    report.empirical_total += stage.empirical;
    report.all_premises_hold = report.all_premises_hold && stage.premise_ok;
  }
  report.slack = report.rhs_total - report.empirical_total;
  return report;
}

}  // namespace ibctrl
