#include "photonstat/fit.hpp"

#include <cmath>
#include <limits>

#include "photonstat/error.hpp"

namespace photonstat {

const FitParameter& FitResult::parameter(std::string_view name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw Error(ErrorCode::InvalidArgument, "no fit parameter named " + std::string(name));
}

namespace fitting {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

constexpr double kMaxDamping = 1e12;

}  // namespace

Matrix covariance_from_information(const Matrix& information, std::vector<bool>& constrained) {
  const auto n = information.rows();
  constrained.assign(static_cast<std::size_t>(n), true);
  Vector scale = Vector::Zero(n);
  const double max_diag = information.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double d = information(k, k);
    if (!(d > 1e-300) || !(d > 1e-14 * max_diag)) {
      constrained[static_cast<std::size_t>(k)] = false;
    } else {
      scale(k) = 1.0 / std::sqrt(d);
    }
  }
  // Work on the correlation-scaled matrix so the eigenvalue cut is unit-free.
  Matrix scaled = scale.asDiagonal() * information * scale.asDiagonal();
  for (Eigen::Index k = 0; k < n; ++k)
    if (!constrained[static_cast<std::size_t>(k)]) scaled(k, k) = 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(scaled);
  const Vector& values = eig.eigenvalues();
  const Matrix& vectors = eig.eigenvectors();
  const double top = values.cwiseAbs().maxCoeff();
  Matrix pinv = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (values(j) > 1e-10 * top && values(j) > 0.0) {
      pinv += vectors.col(j) * vectors.col(j).transpose() / values(j);
    } else {
      for (Eigen::Index k = 0; k < n; ++k)
        if (vectors(k, j) * vectors(k, j) > 0.5) constrained[static_cast<std::size_t>(k)] = false;
    }
  }
  return scale.asDiagonal() * pinv * scale.asDiagonal();
}

Solution levenberg_marquardt(const ResidualFn& fn, std::size_t n_residuals, Vector initial,
                             const LeastSquaresOptions& options) {
  const auto n = initial.size();
  Solution s;
  s.params = std::move(initial);
  Vector r(static_cast<Eigen::Index>(n_residuals));
  Matrix J(static_cast<Eigen::Index>(n_residuals), n);
  fn(s.params, r, J);
  if (!all_finite(r) || !J.allFinite()) throw Error(ErrorCode::FitDiverged, "model not finite at the initial guess");
  double cost = r.squaredNorm();

  Vector r_new(r.size());
  Matrix J_new(J.rows(), J.cols());
  double lambda = 1e-3;
  for (s.iterations = 0; s.iterations < options.max_iterations; ++s.iterations) {
    if (cost == 0.0) {
      s.converged = true;
      break;
    }
    const Matrix A = J.transpose() * J;
    const Vector g = J.transpose() * r;
    bool stepped = false;
    while (lambda <= kMaxDamping) {
      Matrix damped = A;
      for (Eigen::Index k = 0; k < n; ++k) damped(k, k) += lambda * std::max(A(k, k), 1e-30);
      const Vector delta = damped.ldlt().solve(-g);
      if (!all_finite(delta)) {
        lambda *= 10.0;
        continue;
      }
      const Vector trial = s.params + delta;
      fn(trial, r_new, J_new);
      const double trial_cost = all_finite(r_new) ? r_new.squaredNorm() : std::numeric_limits<double>::infinity();
      if (trial_cost < cost) {
        const double improvement = cost - trial_cost;
        const bool small_step = delta.norm() <= options.relative_tolerance * (s.params.norm() + options.relative_tolerance);
        s.params = trial;
        std::swap(r, r_new);
        std::swap(J, J_new);
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-12);
        stepped = true;
        if (improvement <= options.relative_tolerance * cost || small_step) s.converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) {
      // No descent direction left at any damping: numerically at a minimum.
      s.converged = true;
      break;
    }
    if (s.converged) {
      ++s.iterations;
      break;
    }
  }
  fn(s.params, r, J);
  s.objective = r.squaredNorm();
  s.covariance = covariance_from_information(J.transpose() * J, s.constrained);
  if (options.scale_covariance) {
    const auto dof = static_cast<double>(n_residuals) - static_cast<double>(n);
    if (dof > 0) s.covariance *= s.objective / dof;
  }
  if (!all_finite(s.params) || !s.covariance.allFinite()) s.converged = false;
  return s;
}

namespace {

double log_likelihood(std::span<const double> y, const Vector& mu) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double yi = y[static_cast<std::size_t>(i)];
    ll += (yi > 0.0 ? yi * std::log(mu(i)) : 0.0) - mu(i);
  }
  return ll;
}

bool positive(const Vector& mu) { return mu.allFinite() && (mu.array() > 0.0).all(); }

}  // namespace

Solution poisson_mle(const ExpectationFn& fn, std::span<const double> counts, Vector initial,
                     const PoissonOptions& options) {
  const auto m = static_cast<Eigen::Index>(counts.size());
  const auto n = initial.size();
  Solution s;
  s.params = std::move(initial);
  Vector mu(m), mu_new(m);
  Matrix J(m, n), J_new(m, n);
  fn(s.params, mu, J);
  if (!positive(mu) || !J.allFinite()) throw Error(ErrorCode::FitDiverged, "expectation not positive at the initial guess");
  double ll = log_likelihood(counts, mu);

  Vector y(m);
  for (Eigen::Index i = 0; i < m; ++i) y(i) = counts[static_cast<std::size_t>(i)];

  double lambda = 1e-3;
  for (s.iterations = 0; s.iterations < options.max_iterations; ++s.iterations) {
    const Vector inv_mu = mu.cwiseInverse();
    const Vector score = J.transpose() * (y.cwiseProduct(inv_mu) - Vector::Ones(m));
    const Matrix fisher = J.transpose() * inv_mu.asDiagonal() * J;
    bool stepped = false;
    while (lambda <= kMaxDamping) {
      Matrix damped = fisher;
      for (Eigen::Index k = 0; k < n; ++k) damped(k, k) += lambda * std::max(fisher(k, k), 1e-30);
      const Vector delta = damped.ldlt().solve(score);
      if (!all_finite(delta)) {
        lambda *= 10.0;
        continue;
      }
      const Vector trial = s.params + delta;
      fn(trial, mu_new, J_new);
      if (positive(mu_new) && J_new.allFinite()) {
        const double ll_new = log_likelihood(counts, mu_new);
        if (ll_new > ll) {
          const double change = std::fabs(ll_new - ll) / std::max(std::fabs(ll_new), 1e-300);
          s.params = trial;
          std::swap(mu, mu_new);
          std::swap(J, J_new);
          ll = ll_new;
          lambda = std::max(lambda / 10.0, 1e-12);
          stepped = true;
          if (change < options.relative_tolerance) s.converged = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!stepped) {
      s.converged = true;
      break;
    }
    if (s.converged) {
      ++s.iterations;
      break;
    }
  }
  fn(s.params, mu, J);
  s.objective = log_likelihood(counts, mu);
  s.covariance = covariance_from_information(J.transpose() * mu.cwiseInverse().asDiagonal() * J, s.constrained);
  if (!all_finite(s.params) || !s.covariance.allFinite()) s.converged = false;
  return s;
}

}  // namespace fitting
}  // namespace photonstat
