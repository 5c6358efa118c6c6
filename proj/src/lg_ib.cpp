#include "ibctrl/lg_ib.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ibctrl/util.hpp"

namespace ibctrl {

namespace {

constexpr double kNoiseFloor = 1e-10;   // eigenvalue floor for encoder noise
constexpr double kCovClipTol = 1e-6;    // largest tolerated PSD clip in propagation

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose().eval()); }

void check_psd(const MatrixXd& m, const std::string& what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(what + ": not square");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kPsdTol)
    throw std::invalid_argument(what + ": not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kPsdTol)
    throw std::invalid_argument(what + ": negative eigenvalue " +
                                std::to_string(es.eigenvalues().minCoeff()));
}

MatrixXd psd_clip(const MatrixXd& m, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  const double clip = -es.eigenvalues().minCoeff();
  if (clip > kCovClipTol)
    throw std::runtime_error(what + ": covariance clip " + std::to_string(clip) +
                             " exceeds tolerance");
  if (clip <= 0.0) return symmetrize(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
         es.eigenvectors().transpose();
}

MatrixXd pd_floor(const MatrixXd& m, double floor) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  if (es.eigenvalues().minCoeff() >= floor) return symmetrize(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(floor).asDiagonal() *
         es.eigenvectors().transpose();
}

MatrixXd inverse_pd(const MatrixXd& m, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m));
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::runtime_error(what + ": singular covariance");
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

void LGSystem::validate() const {
  const int n = state_dim();
  if (n <= 0) throw std::invalid_argument("LGSystem: empty state");
  if (horizon <= 0) throw std::invalid_argument("LGSystem: nonpositive horizon");
  if (!(beta > 0.0)) throw std::invalid_argument("LGSystem: beta must be positive");
  if (static_cast<int>(A.size()) != horizon || static_cast<int>(B.size()) != horizon ||
      static_cast<int>(process_cov.size()) != horizon)
    throw std::invalid_argument("LGSystem: per-stage array length != horizon");
  const int m = input_dim();
  for (int t = 0; t < horizon; ++t) {
    if (A[t].rows() != n || A[t].cols() != n || B[t].rows() != n || B[t].cols() != m)
      throw std::invalid_argument("LGSystem: matrix shape at t=" + std::to_string(t));
    check_psd(process_cov[t], "LGSystem: process_cov[" + std::to_string(t) + "]");
  }
  check_psd(init_cov, "LGSystem: init_cov");
}

void QuadCost::validate(int n, int m, int horizon) const {
  if (static_cast<int>(Q.size()) != horizon + 1 || static_cast<int>(R.size()) != horizon + 1 ||
      static_cast<int>(g.size()) != horizon + 1 || static_cast<int>(w.size()) != horizon + 1)
    throw std::invalid_argument("QuadCost: arrays must have horizon+1 entries");
  for (int t = 0; t <= horizon; ++t) {
    if (Q[t].rows() != n || Q[t].cols() != n || g[t].size() != n)
      throw std::invalid_argument("QuadCost: state term shape at t=" + std::to_string(t));
    if (R[t].rows() != m || R[t].cols() != m || w[t].size() != m)
      throw std::invalid_argument("QuadCost: input term shape at t=" + std::to_string(t));
    check_psd(Q[t], "QuadCost: Q[" + std::to_string(t) + "]");
    check_psd(R[t], "QuadCost: R[" + std::to_string(t) + "]");
  }
  if (R[horizon].cwiseAbs().maxCoeff() != 0.0)
    throw std::invalid_argument("QuadCost: terminal R must be zero");
}

QuadCost QuadCost::constant(const MatrixXd& Q, const MatrixXd& R, const VectorXd& g,
                            const VectorXd& w, const MatrixXd& terminal_Q,
                            const VectorXd& terminal_g, int horizon) {
  QuadCost cost;
  cost.Q.assign(horizon + 1, Q);
  cost.R.assign(horizon + 1, R);
  cost.g.assign(horizon + 1, g);
  cost.w.assign(horizon + 1, w);
  cost.Q[horizon] = terminal_Q;
  cost.g[horizon] = terminal_g;
  cost.R[horizon] = MatrixXd::Zero(R.rows(), R.cols());
  return cost;
}

GaussianTrajectory propagate_gaussians(const LGSystem& sys,
                                       const std::vector<AffineEncoder>& encoders,
                                       const std::vector<AffinePolicy>& policies) {
  if (static_cast<int>(encoders.size()) != sys.horizon ||
      static_cast<int>(policies.size()) != sys.horizon)
    throw std::invalid_argument("propagate_gaussians: length mismatch");
  GaussianTrajectory out;
  out.state.reserve(sys.horizon + 1);
  out.trv.reserve(sys.horizon);
  out.state.emplace_back(sys.init_mean, psd_clip(sys.init_cov, "propagate_gaussians"));
  for (int t = 0; t < sys.horizon; ++t) {
    const AffineEncoder& enc = encoders[t];
    const AffinePolicy& pol = policies[t];
    const VectorXd& xbar = out.state[t].mean();
    const MatrixXd& xcov = out.state[t].cov();
    const VectorXd trv_mean = enc.C * xbar + enc.a;
    const MatrixXd trv_cov = symmetrize(enc.C * xcov * enc.C.transpose() + enc.noise_cov);
    out.trv.emplace_back(trv_mean, trv_cov);

    const MatrixXd closed = sys.A[t] + sys.B[t] * pol.K * enc.C;
    const VectorXd mean_next = sys.A[t] * xbar + sys.B[t] * (pol.K * trv_mean + pol.h);
    MatrixXd cov_next = closed * xcov * closed.transpose() +
                        sys.B[t] * pol.K * enc.noise_cov * pol.K.transpose() *
                            sys.B[t].transpose() +
                        sys.process_cov[t];
    out.state.emplace_back(mean_next, psd_clip(cov_next, "propagate_gaussians[t=" +
                                                             std::to_string(t) + "]"));
  }
  return out;
}

namespace {

struct ValueStage {
  MatrixXd P;
  VectorXd b;
};

ValueStage value_stage(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                       const MatrixXd& R, const VectorXd& g, const VectorXd& w,
                       const AffineEncoder& enc, const AffinePolicy& pol,
                       const Gaussian& state, const QuadValue& next, double beta) {
  const MatrixXd trv_cov =
      symmetrize(enc.C * state.cov() * enc.C.transpose() + enc.noise_cov);
  const MatrixXd trv_prec = inverse_pd(trv_cov, "backward_value");
  const MatrixXd G = enc.C.transpose() * trv_prec * enc.C;
  const MatrixXd M = A + B * pol.K * enc.C;
  const MatrixXd KC = pol.K * enc.C;
  ValueStage out;
  out.P = symmetrize(Q + G / beta + KC.transpose() * R * KC +
                     M.transpose() * next.P * M);
  out.b = M.transpose() * next.P * B * (pol.h + pol.K * enc.a) - Q * g -
          G * state.mean() / beta +
          enc.C.transpose() * pol.K.transpose() * R * (pol.K * enc.a + pol.h - w) +
          M.transpose() * next.b;
  return out;
}

}  // namespace

std::vector<QuadValue> backward_value(const LGSystem& sys, const QuadCost& cost,
                                      const std::vector<AffineEncoder>& encoders,
                                      const std::vector<AffinePolicy>& policies,
                                      const GaussianTrajectory& gaussians) {
  std::vector<QuadValue> values(sys.horizon + 1);
  values[sys.horizon].P = cost.Q[sys.horizon];
  values[sys.horizon].b = -cost.Q[sys.horizon] * cost.g[sys.horizon];
  for (int t = sys.horizon - 1; t >= 0; --t) {
    ValueStage s = value_stage(sys.A[t], sys.B[t], cost.Q[t], cost.R[t], cost.g[t], cost.w[t],
                               encoders[t], policies[t], gaussians.state[t], values[t + 1],
                               sys.beta);
    values[t].P = s.P;
    values[t].b = s.b;
  }
  return values;
}

namespace {

struct FoncTerms {
  MatrixXd W;      // beta K'(B'P'B + R)K
  MatrixXd N;      // beta K'B'P'A
  VectorXd c_vec;  // beta K'(B'(b' + P'Bh) + R(h - w))
};

FoncTerms fonc_terms(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R, const VectorXd& w,
                     const AffinePolicy& pol, const QuadValue& next, double beta) {
  FoncTerms f;
  const MatrixXd BtPB = B.transpose() * next.P * B;
  f.W = beta * pol.K.transpose() * (BtPB + R) * pol.K;
  f.W = 0.5 * (f.W + f.W.transpose().eval());
  f.N = beta * pol.K.transpose() * B.transpose() * next.P * A;
  f.c_vec = beta * pol.K.transpose() *
            (B.transpose() * (next.b + next.P * B * pol.h) + R * (pol.h - w));
  return f;
}

double fonc_residual_at(const FoncTerms& f, const AffineEncoder& enc, const Gaussian& state) {
  const MatrixXd trv_cov =
      symmetrize(enc.C * state.cov() * enc.C.transpose() + enc.noise_cov);
  const MatrixXd trv_prec = inverse_pd(trv_cov, "encoder fonc");
  const VectorXd trv_mean = enc.C * state.mean() + enc.a;
  const MatrixXd noise_star = pd_floor(inverse_pd(trv_prec + f.W, "encoder fonc"), kNoiseFloor);
  const double r_noise = (enc.noise_cov - noise_star).cwiseAbs().maxCoeff();
  const double r_c = (enc.C + enc.noise_cov * f.N).cwiseAbs().maxCoeff();
  const double r_a =
      (enc.a + enc.noise_cov * (f.c_vec - trv_prec * trv_mean)).cwiseAbs().maxCoeff();
  return std::max({r_noise, r_c, r_a});
}

}  // namespace

EncoderStageResult solve_encoder_fonc(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R,
                                      const VectorXd& w, const AffinePolicy& policy,
                                      const QuadValue& value_next, const Gaussian& state,
                                      double beta, const AffineEncoder& init,
                                      double residual_tol, int max_sweeps) {
  const FoncTerms f = fonc_terms(A, B, R, w, policy, value_next, beta);
  EncoderStageResult out;
  out.encoder = init;
  out.encoder.noise_cov = pd_floor(out.encoder.noise_cov, kNoiseFloor);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    out.residual = fonc_residual_at(f, out.encoder, state);
    if (out.residual < residual_tol) {
      out.converged = true;
      return out;
    }
    const MatrixXd trv_cov = symmetrize(out.encoder.C * state.cov() * out.encoder.C.transpose() +
                                        out.encoder.noise_cov);
    const MatrixXd trv_prec = inverse_pd(trv_cov, "encoder fonc");
    const VectorXd trv_mean = out.encoder.C * state.mean() + out.encoder.a;
    const MatrixXd noise_new =
        pd_floor(inverse_pd(trv_prec + f.W, "encoder fonc"), kNoiseFloor);
    const MatrixXd c_new = -noise_new * f.N;
    const VectorXd a_new = -noise_new * (f.c_vec - trv_prec * trv_mean);
    // damped half-step; the three conditions are mutually coupled
    out.encoder.noise_cov = pd_floor(0.5 * (out.encoder.noise_cov + noise_new), kNoiseFloor);
    out.encoder.C = 0.5 * (out.encoder.C + c_new);
    out.encoder.a = 0.5 * (out.encoder.a + a_new);
  }
  out.residual = fonc_residual_at(f, out.encoder, state);
  out.converged = out.residual < residual_tol;
  return out;
}

LGEncoderUpdate update_encoders(const LGSystem& sys, const QuadCost& cost,
                                const std::vector<AffinePolicy>& policies,
                                const std::vector<AffineEncoder>& encoders_init,
                                const GaussianTrajectory& gaussians) {
  LGEncoderUpdate out;
  out.encoders.resize(sys.horizon);
  out.values.resize(sys.horizon + 1);
  out.values[sys.horizon].P = cost.Q[sys.horizon];
  out.values[sys.horizon].b = -cost.Q[sys.horizon] * cost.g[sys.horizon];
  for (int t = sys.horizon - 1; t >= 0; --t) {
    EncoderStageResult res =
        solve_encoder_fonc(sys.A[t], sys.B[t], cost.R[t], cost.w[t], policies[t],
                           out.values[t + 1], gaussians.state[t], sys.beta, encoders_init[t]);
    if (!res.converged) {
      out.converged = false;
      log_debug("encoder fonc at t=" + std::to_string(t) + " stalled at residual " +
                std::to_string(res.residual));
    }
    out.encoders[t] = res.encoder;
    ValueStage s =
        value_stage(sys.A[t], sys.B[t], cost.Q[t], cost.R[t], cost.g[t], cost.w[t],
                    out.encoders[t], policies[t], gaussians.state[t], out.values[t + 1],
                    sys.beta);
    out.values[t].P = s.P;
    out.values[t].b = s.b;
  }
  return out;
}

AffinePolicy policy_qp_stage(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R,
                             const VectorXd& w, const QuadValue& value_next,
                             const Gaussian& state, const AffineEncoder& encoder) {
  const MatrixXd H = symmetrize(R + B.transpose() * value_next.P * B);
  Eigen::SelfAdjointEigenSolver<MatrixXd> hes(H);
  const double hmin = hes.eigenvalues().minCoeff();
  const double hmax = hes.eigenvalues().cwiseAbs().maxCoeff();
  if (hmin < -kPsdTol * std::max(1.0, hmax))
    throw std::runtime_error("policy_qp: indefinite Hessian, min eigenvalue " +
                             std::to_string(hmin));

  const MatrixXd trv_cov =
      symmetrize(encoder.C * state.cov() * encoder.C.transpose() + encoder.noise_cov);
  const VectorXd trv_mean = encoder.C * state.mean() + encoder.a;

  // Stationarity: H (K trv_mean + h) = R w - B'(P' A xbar + b'),
  //               H K Sigma_trv = -B' P' A Sigma_x C'.
  const VectorXd rhs_mean =
      R * w - B.transpose() * (value_next.P * (A * state.mean()) + value_next.b);
  const MatrixXd rhs_gain =
      -B.transpose() * value_next.P * A * state.cov() * encoder.C.transpose();

  AffinePolicy pol;
  const double rel_floor = kPsdTol * std::max(1.0, hmax);
  if (hmin > rel_floor) {
    Eigen::LDLT<MatrixXd> ldlt(H);
    pol.K = Eigen::LLT<MatrixXd>(trv_cov)
                .solve(ldlt.solve(rhs_gain).transpose())
                .transpose();
    pol.h = ldlt.solve(rhs_mean) - pol.K * trv_mean;
  } else {
    // Rank-deficient Hessian: minimum-norm stationary point.
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(H);
    const MatrixXd y = cod.solve(rhs_gain);
    pol.K = Eigen::LLT<MatrixXd>(trv_cov).solve(y.transpose()).transpose();
    pol.h = cod.solve(rhs_mean) - pol.K * trv_mean;
  }
  return pol;
}

std::vector<AffinePolicy> update_policies(const LGSystem& sys, const QuadCost& cost,
                                          const std::vector<AffineEncoder>& encoders,
                                          const std::vector<QuadValue>& values,
                                          const GaussianTrajectory& gaussians) {
  std::vector<AffinePolicy> out(sys.horizon);
  for (int t = 0; t < sys.horizon; ++t)
    out[t] = policy_qp_stage(sys.A[t], sys.B[t], cost.R[t], cost.w[t], values[t + 1],
                             gaussians.state[t], encoders[t]);
  return out;
}

PolicyGradient policy_qp_gradient(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R,
                                  const VectorXd& w, const QuadValue& value_next,
                                  const Gaussian& state, const AffineEncoder& encoder,
                                  const AffinePolicy& policy) {
  const MatrixXd trv_cov =
      symmetrize(encoder.C * state.cov() * encoder.C.transpose() + encoder.noise_cov);
  const VectorXd trv_mean = encoder.C * state.mean() + encoder.a;
  const MatrixXd H = symmetrize(R + B.transpose() * value_next.P * B);
  const VectorXd u_mean = policy.K * trv_mean + policy.h;
  PolicyGradient g;
  g.dh = R * (u_mean - w) +
         B.transpose() * (value_next.P * (A * state.mean() + B * u_mean) + value_next.b);
  g.dK = g.dh * trv_mean.transpose() + H * policy.K * trv_cov +
         B.transpose() * value_next.P * A * state.cov() * encoder.C.transpose();
  return g;
}

double lg_expected_cost(const LGSystem& sys, const QuadCost& cost,
                        const std::vector<AffineEncoder>& encoders,
                        const std::vector<AffinePolicy>& policies) {
  const GaussianTrajectory traj = propagate_gaussians(sys, encoders, policies);
  double total = 0.0;
  for (int t = 0; t < sys.horizon; ++t) {
    const VectorXd dx = traj.state[t].mean() - cost.g[t];
    total += 0.5 * dx.dot(cost.Q[t] * dx) + 0.5 * (cost.Q[t] * traj.state[t].cov()).trace();
    const VectorXd u_mean = policies[t].K * traj.trv[t].mean() + policies[t].h;
    const MatrixXd u_cov = policies[t].K * traj.trv[t].cov() * policies[t].K.transpose();
    const VectorXd du = u_mean - cost.w[t];
    total += 0.5 * du.dot(cost.R[t] * du) + 0.5 * (cost.R[t] * u_cov).trace();
  }
  const VectorXd dxT = traj.state[sys.horizon].mean() - cost.g[sys.horizon];
  total += 0.5 * dxT.dot(cost.Q[sys.horizon] * dxT) +
           0.5 * (cost.Q[sys.horizon] * traj.state[sys.horizon].cov()).trace();
  return total;
}

double evaluate_lg_objective(const LGSystem& sys, const QuadCost& cost,
                             const LGSolution& solution) {
  double total = lg_expected_cost(sys, cost, solution.encoders, solution.policies);
  for (int t = 0; t < sys.horizon; ++t)
    total += mutual_information(solution.gaussians.state[t], solution.encoders[t].C,
                                solution.encoders[t].noise_cov) /
             sys.beta;
  return total;
}

namespace {

LGSolution solve_lg_single(const LGSystem& sys, const QuadCost& cost,
                           const LGSolverOptions& opts) {
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  const int k = opts.trv_dim > 0 ? opts.trv_dim : n;

  RngStream rng(opts.seed);
  LGSolution sol;
  sol.encoders.resize(sys.horizon);
  sol.policies.resize(sys.horizon);
  for (int t = 0; t < sys.horizon; ++t) {
    AffineEncoder enc;
    enc.C = MatrixXd::Zero(k, n);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < n; ++j) enc.C(i, j) = rng.uniform(-1e-2, 1e-2);
    enc.a = VectorXd::Zero(k);
    enc.noise_cov = MatrixXd::Identity(k, k);
    sol.encoders[t] = enc;
    sol.policies[t] = AffinePolicy{MatrixXd::Zero(m, k), VectorXd::Zero(m)};
  }

  // With K = 0 the first-order conditions collapse C to zero, so run one
  // policy update against the initial encoder before the first encoder sweep.
  sol.gaussians = propagate_gaussians(sys, sol.encoders, sol.policies);
  sol.values = backward_value(sys, cost, sol.encoders, sol.policies, sol.gaussians);
  sol.policies = update_policies(sys, cost, sol.encoders, sol.values, sol.gaussians);
  sol.gaussians = propagate_gaussians(sys, sol.encoders, sol.policies);
  sol.objective_trace.push_back(evaluate_lg_objective(sys, cost, sol));

  for (int it = 1; it <= opts.max_iterations; ++it) {
    std::vector<AffineEncoder> prev_enc = sol.encoders;
    std::vector<AffinePolicy> prev_pol = sol.policies;

    LGEncoderUpdate upd = update_encoders(sys, cost, sol.policies, sol.encoders, sol.gaussians);
    sol.encoders = upd.encoders;
    sol.values = upd.values;
    sol.policies = update_policies(sys, cost, sol.encoders, sol.values, sol.gaussians);
    sol.gaussians = propagate_gaussians(sys, sol.encoders, sol.policies);

    const double objective = evaluate_lg_objective(sys, cost, sol);
    const double delta = std::abs(objective - sol.objective_trace.back());
    sol.objective_trace.push_back(objective);
    sol.status.iterations = it;

    double param_delta = 0.0;
    for (int t = 0; t < sys.horizon; ++t) {
      param_delta = std::max(
          {param_delta, (sol.encoders[t].C - prev_enc[t].C).cwiseAbs().maxCoeff(),
           (sol.encoders[t].a - prev_enc[t].a).cwiseAbs().maxCoeff(),
           (sol.encoders[t].noise_cov - prev_enc[t].noise_cov).cwiseAbs().maxCoeff(),
           (sol.policies[t].K - prev_pol[t].K).cwiseAbs().maxCoeff(),
           (sol.policies[t].h - prev_pol[t].h).cwiseAbs().maxCoeff()});
    }
    if (delta < opts.objective_tol && (opts.param_tol <= 0.0 || param_delta < opts.param_tol)) {
      sol.status.converged = true;
      break;
    }
  }
  return sol;
}

}  // namespace

LGSolution solve_lg(const LGSystem& sys, const QuadCost& cost, const LGSolverOptions& opts) {
  sys.validate();
  cost.validate(sys.state_dim(), sys.input_dim(), sys.horizon);
  if (opts.max_iterations <= 0 || !(opts.objective_tol > 0.0) || opts.restarts <= 0)
    throw std::invalid_argument("solve_lg: invalid solver options");
  if (opts.restarts == 1) return solve_lg_single(sys, cost, opts);
  LGSolution best;
  double best_objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    LGSolverOptions local = opts;
    local.seed = RngStream::derive_seed(opts.seed, r);
    local.restarts = 1;
    LGSolution candidate = solve_lg_single(sys, cost, local);
    if (candidate.objective_trace.back() < best_objective) {
      best_objective = candidate.objective_trace.back();
      best = std::move(candidate);
    }
  }
  return best;
}

double lg_fonc_residual(const LGSystem& sys, const QuadCost& cost, const LGSolution& solution) {
  double residual = 0.0;
  for (int t = 0; t < sys.horizon; ++t) {
    const FoncTerms f = fonc_terms(sys.A[t], sys.B[t], cost.R[t], cost.w[t],
                                   solution.policies[t], solution.values[t + 1], sys.beta);
    residual = std::max(residual,
                        fonc_residual_at(f, solution.encoders[t], solution.gaussians.state[t]));
  }
  return residual;
}

}  // namespace ibctrl
