#include "dtr/linalg.hpp"

#include <cmath>
#include <string>

#include "dtr/errors.hpp"

namespace dtr::linalg {

OlsState::OlsState(Eigen::Index d, Eigen::Index k)
    : sigma_(Matrix::Zero(d, d)), cross_(Matrix::Zero(d, k)) {
  DTR_REQUIRE(d >= 1 && k >= 1, "OlsState: dimensions must be positive");
}

void OlsState::update(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  DTR_REQUIRE(x.size() == dim(), "ols_update: x has dimension " + std::to_string(x.size()) +
                                     ", expected " + std::to_string(dim()));
  DTR_REQUIRE(y.size() == targets(), "ols_update: y has dimension " +
                                         std::to_string(y.size()) + ", expected " +
                                         std::to_string(targets()));
  sigma_.noalias() += x * x.transpose();
  cross_.noalias() += x * y.transpose();
  ++n_;
}

void OlsState::update(const Eigen::Ref<const Vector>& x, double y) {
  DTR_REQUIRE(targets() == 1, "ols_update: scalar target on a multi-target state");
  DTR_REQUIRE(x.size() == dim(), "ols_update: x has dimension " + std::to_string(x.size()) +
                                     ", expected " + std::to_string(dim()));
  sigma_.noalias() += x * x.transpose();
  cross_.col(0) += y * x;
  ++n_;
}

std::optional<Matrix> OlsState::try_solve() const {
  if (n_ == 0 || dim() == 0) return std::nullopt;
  if (dim() == 1) {
    const double s = sigma_(0, 0);
    if (!(s >= kSingularityTolerance)) return std::nullopt;
    return Matrix(cross_ / s);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_, Eigen::ComputeEigenvectors);
  const auto& lambda = eig.eigenvalues();
  const double lmin = lambda(0);
  const double lmax = lambda(lambda.size() - 1);
  if (!(lmin >= kSingularityTolerance * std::max(1.0, lmax))) return std::nullopt;
  const Matrix& v = eig.eigenvectors();
  return Matrix(v * lambda.cwiseInverse().asDiagonal() * (v.transpose() * cross_));
}

Matrix OlsState::solve() const {
  auto b = try_solve();
  if (!b) {
    throw EstimatorUnavailable(n_ == 0 ? "ols_solve: no samples"
                                       : "ols_solve: design matrix is singular");
  }
  return *std::move(b);
}

double min_eigenvalue(const Matrix& m) {
  DTR_REQUIRE(m.rows() == m.cols() && m.rows() > 0, "min_eigenvalue: matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  DTR_REQUIRE((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
              "min_eigenvalue: matrix is not symmetric");
  if (m.rows() == 1) return m(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

double sigmoid(double z) noexcept {
  if (z >= 0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

LogisticFit logistic_fit(const Matrix& features, const Vector& labels, int max_iter,
                         double tol) {
  const Eigen::Index n = features.rows();
  const Eigen::Index p = features.cols();
  DTR_REQUIRE(p >= 1, "logistic_fit: no features");
  DTR_REQUIRE(n >= p, "logistic_fit: need at least as many rows as features");
  DTR_REQUIRE(labels.size() == n, "logistic_fit: label count does not match rows");
  for (Eigen::Index i = 0; i < n; ++i) {
    DTR_REQUIRE(labels(i) == 0.0 || labels(i) == 1.0, "logistic_fit: labels must be 0 or 1");
  }

  LogisticFit fit;
  fit.coefficients = Vector::Zero(p);
  Vector& beta = fit.coefficients;

  for (int it = 0; it < max_iter; ++it) {
    fit.iterations = it + 1;
    const Vector eta = features * beta;
    Vector prob(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = sigmoid(eta(i));
      weight(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-12);
    }
    const Vector grad = features.transpose() * (labels - prob);
    Matrix hess = features.transpose() * weight.asDiagonal() * features;
    hess.diagonal().array() += 1e-12 * std::max(1.0, hess.trace());
    const Vector step = hess.ldlt().solve(grad);
    beta += step;

    const double norm = beta.norm();
    if (!std::isfinite(norm) || norm > LogisticFit::kMaxCoefficientNorm) {
      if (!std::isfinite(norm)) beta = beta.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
      const double clamped_norm = beta.norm();
      if (clamped_norm > 0) beta *= LogisticFit::kMaxCoefficientNorm / clamped_norm;
      fit.separation = true;
      fit.converged = false;
      return fit;
    }
    if (step.cwiseAbs().maxCoeff() < tol) {
      fit.converged = true;
      break;
    }
  }
  // Separable data can stall the Newton steps before the norm cap is hit,
  // because the weights vanish as the fitted probabilities saturate.
  const Vector eta = features * beta;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) worst = std::max(worst, std::abs(labels(i) - sigmoid(eta(i))));
  if (worst < 1e-4) {
    const double norm = beta.norm();
    if (norm > 0) beta *= LogisticFit::kMaxCoefficientNorm / norm;
    fit.separation = true;
    fit.converged = false;
  }
  return fit;
}

}  // namespace dtr::linalg
