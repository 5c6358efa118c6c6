#include "ibctrl/probdist.hpp"

#include <cmath>

#include "doctest.h"
#include "ibctrl/util.hpp"

using namespace ibctrl;

namespace {

Categorical random_categorical(RngStream& rng, int n) {
  VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = rng.uniform() + 1e-6;
  return Categorical::normalized(w);
}

}  // namespace

TEST_CASE("categorical invariants") {
  CHECK_THROWS(Categorical(VectorXd::Constant(3, 0.5)));
  VectorXd neg(2);
  neg << 1.2, -0.2;
  CHECK_THROWS(Categorical(neg));
  Categorical u = Categorical::uniform(4);
  CHECK(u(2) == doctest::Approx(0.25));
  VectorXd tied(3);
  tied << 0.4, 0.4, 0.2;
  CHECK(Categorical(tied).argmax() == 0);  // lowest index wins ties
}

TEST_CASE("gaussian construction symmetrizes and validates") {
  MatrixXd cov(2, 2);
  cov << 1.0, 0.2, 0.2, 1.0;
  Gaussian g(VectorXd::Zero(2), cov);
  CHECK((g.cov() - g.cov().transpose()).norm() == 0.0);

  MatrixXd asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS(Gaussian(VectorXd::Zero(2), asym));

  MatrixXd indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS(Gaussian(VectorXd::Zero(2), indef));
}

TEST_CASE("kl divergence identity and closed forms") {
  VectorXd p(2);
  p << 0.3, 0.7;
  CHECK(kl_divergence(Categorical(p), Categorical(p)) == doctest::Approx(0.0).epsilon(1e-12));

  // scalar Gaussian KL(N(1,1) || N(0,1)) = 1/2 (mu^2 + s^2 - 1 - ln s^2)
  Gaussian a((VectorXd(1) << 1.0).finished(), MatrixXd::Identity(1, 1));
  Gaussian b(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  CHECK(kl_divergence(a, b) == doctest::Approx(0.5).epsilon(1e-12));

  // direct summation oracle for KL([.5,.5] || [.9,.1])
  VectorXd q(2);
  q << 0.9, 0.1;
  const double oracle = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(kl_divergence(Categorical(p.setConstant(0.5)), Categorical(q)) ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("kl support conventions") {
  VectorXd p(2), q(2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  CHECK(kl_divergence(Categorical(p), Categorical(q)) == doctest::Approx(std::log(2.0)));
  // support violation: an infinite result, not an exception
  CHECK(std::isinf(kl_divergence(Categorical(q), Categorical(p))));

  // singular q covariance is an error
  Gaussian g0(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  Gaussian gsing(VectorXd::Zero(1), MatrixXd::Zero(1, 1));
  CHECK_THROWS(kl_divergence(g0, gsing));
  CHECK(std::isinf(kl_divergence(gsing, g0)));
}

TEST_CASE("kl nonnegativity over random pairs") {
  RngStream rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 7);
    Categorical p = random_categorical(rng, n);
    Categorical q = random_categorical(rng, n);
    CHECK(kl_divergence(p, q) >= -1e-12);
  }
}

TEST_CASE("mutual information discrete") {
  // conditional rows all equal -> independence
  MatrixXd rows(3, 2);
  rows << 0.4, 0.6, 0.4, 0.6, 0.4, 0.6;
  CHECK(mutual_information(Categorical::uniform(3), CondTable(rows)) ==
        doctest::Approx(0.0).epsilon(1e-14));

  // deterministic bijective channel on 2 symbols, uniform marginal -> ln 2
  MatrixXd flip(2, 2);
  flip << 0.0, 1.0, 1.0, 0.0;
  CHECK(mutual_information(Categorical::uniform(2), CondTable(flip)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("mutual information equals joint-vs-product kl") {
  RngStream rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 18);
    const int m = 2 + static_cast<int>(rng.uniform() * 6);
    Categorical marginal = random_categorical(rng, n);
    MatrixXd table(n, m);
    for (int i = 0; i < n; ++i) table.row(i) = random_categorical(rng, m).probs().transpose();
    CondTable cond(table);

    // explicit joint and product-of-marginals, flattened
    const VectorXd out = cond.push_forward(marginal.probs());
    VectorXd joint(n * m), product(n * m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        joint(i * m + j) = marginal(i) * table(i, j);
        product(i * m + j) = marginal(i) * out(j);
      }
    const double via_kl = kl_divergence(Categorical(joint), Categorical(product));
    CHECK(mutual_information(marginal, cond) == doctest::Approx(via_kl).epsilon(1e-10));
  }
}

TEST_CASE("gaussian mutual information determinant formula") {
  // scalar: C=1, Sigma_x=1, Sigma_eta=1 -> 1/2 ln 2
  Gaussian x(VectorXd::Zero(1), MatrixXd::Identity(1, 1));
  CHECK(mutual_information(x, MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)) ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

  // numeric joint-integration oracle on a grid for the same scalar channel
  const double dx = 0.01;
  double info = 0.0;
  auto normal_pdf = [](double v, double var) {
    return std::exp(-0.5 * v * v / var) / std::sqrt(2.0 * M_PI * var);
  };
  for (double xv = -8.0; xv <= 8.0; xv += dx)
    for (double yv = -8.0; yv <= 8.0; yv += dx) {
      const double pxy = normal_pdf(xv, 1.0) * normal_pdf(yv - xv, 1.0);
      const double py = normal_pdf(yv, 2.0);
      if (pxy > 1e-300) info += pxy * std::log(normal_pdf(yv - xv, 1.0) / py) * dx * dx;
    }
  CHECK(info == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-4));

  CHECK_THROWS(mutual_information(x, MatrixXd::Identity(1, 1), MatrixXd::Zero(1, 1)));
}

TEST_CASE("entropic risk") {
  // constant cost c under any weights -> c
  VectorXd c = VectorXd::Constant(3, 3.0);
  RngStream rng(3);
  CHECK(entropic_risk(c, random_categorical(rng, 3)) == doctest::Approx(3.0).epsilon(1e-14));

  // direct evaluation oracle: costs [0, ln 3], weights [.5, .5] -> ln 2
  VectorXd c2(2);
  c2 << 0.0, std::log(3.0);
  CHECK(entropic_risk(c2, Categorical::uniform(2)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Jensen check on [0, 10] with weights [.9, .1]
  VectorXd c3(2);
  c3 << 0.0, 10.0;
  VectorXd w3(2);
  w3 << 0.9, 0.1;
  const double risk = entropic_risk(c3, Categorical(w3));
  CHECK(risk == doctest::Approx(std::log(0.9 + 0.1 * std::exp(10.0))).epsilon(1e-12));
  CHECK(risk >= 1.0);
}

TEST_CASE("entropic risk properties over random instances") {
  RngStream rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 8);
    Categorical w = random_categorical(rng, n);
    VectorXd c(n);
    for (int i = 0; i < n; ++i) c(i) = rng.uniform(-20.0, 20.0);
    const double risk = entropic_risk(c, w);
    CHECK(risk >= w.probs().dot(c) - 1e-10);  // Jensen
    const double shift = rng.uniform(-5.0, 5.0);
    CHECK(entropic_risk(c.array() + shift, w) - shift == doctest::Approx(risk).epsilon(1e-12));
  }
}

TEST_CASE("log_sum_exp stability") {
  VectorXd v(3);
  v << 1000.0, 1000.0, 1000.0;
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(3.0)));
  v << -1000.0, -1000.0, -1001.0;
  CHECK(std::isfinite(log_sum_exp(v)));
}
