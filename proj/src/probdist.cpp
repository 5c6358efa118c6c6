#include "ibctrl/probdist.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ibctrl {

Categorical::Categorical(VectorXd probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0) throw std::invalid_argument("Categorical: empty probability vector");
  if ((probs_.array() < 0.0).any())
    throw std::invalid_argument("Categorical: negative probability entry");
  const double total = probs_.sum();
  if (std::abs(total - 1.0) > kProbSumTol)
    throw std::invalid_argument("Categorical: probabilities sum to " + std::to_string(total));
}

Categorical Categorical::uniform(int n) {
  return Categorical(VectorXd::Constant(n, 1.0 / n));
}

Categorical Categorical::delta(int n, int index) {
  VectorXd p = VectorXd::Zero(n);
  p(index) = 1.0;
  return Categorical(std::move(p));
}

Categorical Categorical::normalized(const VectorXd& weights) {
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("Categorical: negative weight");
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("Categorical: zero total weight");
  return Categorical(weights / total);
}

int Categorical::argmax() const {
  int best = 0;
  for (int i = 1; i < size(); ++i)
    if (probs_(i) > probs_(best)) best = i;
  return best;
}

Gaussian::Gaussian(VectorXd mean, MatrixXd cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
    throw std::invalid_argument("Gaussian: dimension mismatch");
  const double asym = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
  if (asym > kPsdTol)
    throw std::invalid_argument("Gaussian: covariance asymmetry " + std::to_string(asym));
  cov_ = 0.5 * (cov_ + cov_.transpose().eval());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kPsdTol)
    throw std::invalid_argument("Gaussian: covariance has eigenvalue " +
                                std::to_string(es.eigenvalues().minCoeff()));
}

CondTable::CondTable(MatrixXd table) : table_(std::move(table)) {
  if (table_.rows() == 0 || table_.cols() == 0)
    throw std::invalid_argument("CondTable: empty table");
  if ((table_.array() < 0.0).any()) throw std::invalid_argument("CondTable: negative entry");
  for (int i = 0; i < table_.rows(); ++i) {
    const double total = table_.row(i).sum();
    if (std::abs(total - 1.0) > kProbSumTol)
      throw std::invalid_argument("CondTable: row " + std::to_string(i) + " sums to " +
                                  std::to_string(total));
  }
}

CondTable CondTable::uniform(int rows, int cols) {
  return CondTable(MatrixXd::Constant(rows, cols, 1.0 / cols));
}

VectorXd CondTable::push_forward(const VectorXd& marginal) const {
  if (marginal.size() != table_.rows())
    throw std::invalid_argument("CondTable: marginal dimension mismatch");
  return table_.transpose() * marginal;
}

double log_sum_exp(const VectorXd& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

double kl_divergence(const Categorical& p, const Categorical& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_divergence: dimension mismatch");
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;  // 0 log(0/q) = 0
    if (q(i) <= 0.0) return infinite_divergence();
    kl += p(i) * std::log(p(i) / q(i));
  }
  return std::max(kl, 0.0);
}

double kl_divergence(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) throw std::invalid_argument("kl_divergence: dimension mismatch");
  const int n = p.dim();
  Eigen::SelfAdjointEigenSolver<MatrixXd> qes(q.cov());
  const double qmin = qes.eigenvalues().minCoeff();
  const double qmax = qes.eigenvalues().maxCoeff();
  if (qmin <= kPsdTol * std::max(1.0, qmax))
    throw std::invalid_argument("kl_divergence: singular covariance in q");
  const MatrixXd qinv = qes.eigenvectors() *
                        qes.eigenvalues().cwiseInverse().asDiagonal() *
                        qes.eigenvectors().transpose();
  const double logdet_q = qes.eigenvalues().array().log().sum();

  Eigen::SelfAdjointEigenSolver<MatrixXd> pes(p.cov());
  const double pmin = pes.eigenvalues().minCoeff();
  if (pmin <= 0.0) return infinite_divergence();  // degenerate p
  const double logdet_p = pes.eigenvalues().array().log().sum();

  const VectorXd dm = q.mean() - p.mean();
  const double kl = 0.5 * ((qinv * p.cov()).trace() + dm.dot(qinv * dm) - n + logdet_q - logdet_p);
  return std::max(kl, 0.0);
}

double mutual_information(const Categorical& marginal, const CondTable& conditional) {
  if (marginal.size() != conditional.rows())
    throw std::invalid_argument("mutual_information: dimension mismatch");
  const VectorXd out = conditional.push_forward(marginal.probs());
  double info = 0.0;
  for (int i = 0; i < marginal.size(); ++i) {
    if (marginal(i) <= 0.0) continue;
    for (int j = 0; j < conditional.cols(); ++j) {
      const double c = conditional.table()(i, j);
      if (c <= 0.0) continue;
      info += marginal(i) * c * std::log(c / out(j));
    }
  }
  return std::max(info, 0.0);
}

double mutual_information(const Gaussian& marginal, const MatrixXd& channel_gain,
                          const MatrixXd& noise_cov) {
  if (channel_gain.cols() != marginal.dim() || noise_cov.rows() != channel_gain.rows() ||
      noise_cov.rows() != noise_cov.cols())
    throw std::invalid_argument("mutual_information: dimension mismatch");
  const MatrixXd out_cov =
      channel_gain * marginal.cov() * channel_gain.transpose() + noise_cov;
  Eigen::SelfAdjointEigenSolver<MatrixXd> noise_es(0.5 * (noise_cov + noise_cov.transpose()));
  const double nmin = noise_es.eigenvalues().minCoeff();
  const double nmax = noise_es.eigenvalues().maxCoeff();
  if (nmin <= kPsdTol * std::max(1.0, nmax))
    throw std::invalid_argument("mutual_information: singular channel noise covariance");
  Eigen::SelfAdjointEigenSolver<MatrixXd> out_es(0.5 * (out_cov + out_cov.transpose()));
  const double info =
      0.5 * (out_es.eigenvalues().array().log().sum() - noise_es.eigenvalues().array().log().sum());
  return std::max(info, 0.0);
}

double entropic_risk(const VectorXd& cost_values, const Categorical& weights) {
  if (cost_values.size() != weights.size())
    throw std::invalid_argument("entropic_risk: dimension mismatch");
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < weights.size(); ++i)
    if (weights(i) > 0.0) m = std::max(m, cost_values(i));
  double s = 0.0;
  for (int i = 0; i < weights.size(); ++i)
    if (weights(i) > 0.0) s += weights(i) * std::exp(cost_values(i) - m);
  return m + std::log(s);
}

}  // namespace ibctrl
