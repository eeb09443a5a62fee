#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace photonstat {

struct FitParameter {
  std::string name;
  double value = 0.0;
  double uncertainty = 0.0;  // 1 sigma
  // False when the data carry no information about this parameter (for
  // example a decay time whose amplitude fitted to zero).
  bool constrained = true;
};

// Outcome of any model fit. Uncertainties are finite iff `converged`.
struct FitResult {
  std::string model_name;
  std::vector<FitParameter> parameters;
  // sqrt(sum of squared weighted residuals); see `residual_kind`.
  double residual_norm = 0.0;
  // "weighted_least_squares": residuals (y - f) / sigma.
  // "poisson_pearson": residuals (y - mu) / sqrt(mu) over the fit window.
  std::string residual_kind;
  bool converged = false;
  int iterations = 0;

  const FitParameter& parameter(std::string_view name) const;
  double value(std::string_view name) const { return parameter(name).value; }
  double uncertainty(std::string_view name) const { return parameter(name).uncertainty; }
};

namespace fitting {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Fills weighted residuals r = (y - f(p)) / sigma and J = dr/dp.
using ResidualFn = std::function<void(const Vector& params, Vector& residuals, Matrix& jacobian)>;

struct LeastSquaresOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-12;
  // Scale the covariance by chi^2 / dof (weights known only up to a factor).
  bool scale_covariance = false;
};

struct Solution {
  Vector params;
  Matrix covariance;
  std::vector<bool> constrained;
  double objective = 0.0;  // chi^2 or Poisson log-likelihood
  bool converged = false;
  int iterations = 0;
};

// Levenberg-Marquardt with Marquardt diagonal scaling.
Solution levenberg_marquardt(const ResidualFn& fn, std::size_t n_residuals, Vector initial,
                             const LeastSquaresOptions& options = {});

// Fills expected counts mu(p) and dmu/dp for every bin.
using ExpectationFn = std::function<void(const Vector& params, Vector& mu, Matrix& jacobian)>;

struct PoissonOptions {
  int max_iterations = 200;
  // Stop once |delta log L| / |log L| falls below this.
  double relative_tolerance = 1e-9;
};

// Maximum-likelihood fit of Poisson counts by damped Fisher scoring.
// `objective` in the result is the log-likelihood sum(y ln mu - mu).
Solution poisson_mle(const ExpectationFn& fn, std::span<const double> counts, Vector initial,
                     const PoissonOptions& options = {});

// Pseudo-inverse of a symmetric information matrix; directions with
// negligible curvature are reported unconstrained.
Matrix covariance_from_information(const Matrix& information, std::vector<bool>& constrained);

}  // namespace fitting
}  // namespace photonstat
