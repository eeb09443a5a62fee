#include <doctest.h>

#include <cmath>
#include <random>

#include "photonstat/fit.hpp"

using namespace photonstat;
using fitting::Matrix;
using fitting::Vector;

TEST_CASE("straight line by least squares matches the normal equations") {
  const std::vector<double> x{0, 1, 2, 3, 4, 5}, y{1.1, 2.9, 5.2, 7.1, 8.8, 11.2};
  auto fn = [&](const Vector& p, Vector& r, Matrix& J) {
    for (Eigen::Index i = 0; i < 6; ++i) {
      r(i) = y[static_cast<std::size_t>(i)] - (p(0) + p(1) * x[static_cast<std::size_t>(i)]);
      J(i, 0) = -1.0;
      J(i, 1) = -x[static_cast<std::size_t>(i)];
    }
  };
  const auto sol = fitting::levenberg_marquardt(fn, 6, Vector::Zero(2));
  Matrix A(6, 2);
  Vector b(6);
  for (int i = 0; i < 6; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = x[static_cast<std::size_t>(i)];
    b(i) = y[static_cast<std::size_t>(i)];
  }
  const Vector exact = (A.transpose() * A).ldlt().solve(A.transpose() * b);
  CHECK(sol.converged);
  CHECK(sol.params(0) == doctest::Approx(exact(0)).epsilon(1e-9));
  CHECK(sol.params(1) == doctest::Approx(exact(1)).epsilon(1e-9));
  const Matrix cov = (A.transpose() * A).inverse();
  CHECK(sol.covariance(1, 1) == doctest::Approx(cov(1, 1)).epsilon(1e-6));
  double chi2 = (b - A * sol.params).squaredNorm();
  CHECK(sol.objective == doctest::Approx(chi2).epsilon(1e-9));
}

TEST_CASE("parameters without curvature are flagged unconstrained") {
  auto fn = [](const Vector& p, Vector& r, Matrix& J) {
    for (Eigen::Index i = 0; i < 4; ++i) {
      r(i) = static_cast<double>(i) - p(0);
      J(i, 0) = -1.0;
      J(i, 1) = 0.0;  // p(1) never enters the model
    }
  };
  const auto sol = fitting::levenberg_marquardt(fn, 4, Vector::Zero(2));
  CHECK(sol.params(0) == doctest::Approx(1.5));
  CHECK(sol.constrained[0]);
  CHECK_FALSE(sol.constrained[1]);
}

TEST_CASE("Poisson MLE of a constant rate is the sample mean") {
  std::mt19937_64 rng(3);
  std::poisson_distribution<int> pd(7.5);
  std::vector<double> y(500);
  double sum = 0.0;
  for (auto& v : y) sum += v = pd(rng);
  auto fn = [&](const Vector& p, Vector& mu, Matrix& J) {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(y.size()); ++i) {
      mu(i) = std::exp(p(0));
      J(i, 0) = std::exp(p(0));
    }
  };
  Vector init(1);
  init << 0.0;
  const auto sol = fitting::poisson_mle(fn, y, init);
  const double mean = sum / static_cast<double>(y.size());
  CHECK(sol.converged);
  CHECK(std::exp(sol.params(0)) == doctest::Approx(mean).epsilon(1e-6));
  // Fisher information of log-rate is N * mean.
  CHECK(sol.covariance(0, 0) == doctest::Approx(1.0 / sum).epsilon(1e-3));
}

TEST_CASE("FitResult parameter lookup") {
  FitResult f;
  f.parameters = {{"a", 1.0, 0.1, true}, {"b", 2.0, 0.2, false}};
  CHECK(f.value("b") == 2.0);
  CHECK(f.uncertainty("a") == 0.1);
  CHECK_FALSE(f.parameter("b").constrained);
  CHECK_THROWS(f.parameter("c"));
}
