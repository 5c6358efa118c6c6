#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace ibctrl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// All information quantities are in nats (natural logarithm).

inline constexpr double kProbSumTol = 1e-12;
inline constexpr double kPsdTol = 1e-10;

inline double infinite_divergence() { return std::numeric_limits<double>::infinity(); }

// Finite distribution. Entries are nonnegative and sum to 1 within 1e-12.
class Categorical {
 public:
  explicit Categorical(VectorXd probs);
  static Categorical uniform(int n);
  static Categorical delta(int n, int index);
  // Normalizes a nonnegative weight vector with positive total mass.
  static Categorical normalized(const VectorXd& weights);

  const VectorXd& probs() const { return probs_; }
  double operator()(int i) const { return probs_(i); }
  int size() const { return static_cast<int>(probs_.size()); }
  int argmax() const;  // lowest index wins ties

 private:
  VectorXd probs_;
};

// Multivariate normal. Covariance is symmetrized ((S + S^T)/2) on
// construction; eigenvalues must be >= -1e-10.
class Gaussian {
 public:
  Gaussian(VectorXd mean, MatrixXd cov);

  const VectorXd& mean() const { return mean_; }
  const MatrixXd& cov() const { return cov_; }
  int dim() const { return static_cast<int>(mean_.size()); }

 private:
  VectorXd mean_;
  MatrixXd cov_;
};

// Row-stochastic table; row i is the distribution conditioned on symbol i.
class CondTable {
 public:
  explicit CondTable(MatrixXd table);
  static CondTable uniform(int rows, int cols);

  const MatrixXd& table() const { return table_; }
  VectorXd row(int i) const { return table_.row(i).transpose(); }
  int rows() const { return static_cast<int>(table_.rows()); }
  int cols() const { return static_cast<int>(table_.cols()); }

  // Output marginal sum_i p(i) table(i, .) for an input marginal p.
  VectorXd push_forward(const VectorXd& marginal) const;

 private:
  MatrixXd table_;
};

// log sum_i exp(v_i), max-shifted. Empty input yields -inf.
double log_sum_exp(const VectorXd& v);

// KL(p || q) in nats. Conventions: 0 log(0/q) = 0; p log(p/0) = +inf
// (returned as an infinite value, not thrown, so callers can treat it as a
// barrier).
double kl_divergence(const Categorical& p, const Categorical& q);

// Closed-form Gaussian KL. Throws if q has a singular covariance; a singular
// p covariance yields +inf.
double kl_divergence(const Gaussian& p, const Gaussian& q);

// I(x; y) = KL(p(x,y) || p(x) p(y)) for y | x ~ conditional.row(x).
double mutual_information(const Categorical& marginal, const CondTable& conditional);

// Mutual information through the affine-Gaussian channel
// y = C x + a + eta, eta ~ N(0, noise_cov):
//   I = 1/2 log det(C Sigma_x C^T + noise_cov) - 1/2 log det(noise_cov).
// Throws if noise_cov is singular.
double mutual_information(const Gaussian& marginal, const MatrixXd& channel_gain,
                          const MatrixXd& noise_cov);

// Entropic risk log sum_i w_i exp(c_i), computed with a max-shifted
// exponential sum.
double entropic_risk(const VectorXd& cost_values, const Categorical& weights);

}  // namespace ibctrl
