#pragma once

#include <Eigen/Dense>

#include <optional>

namespace dtr::linalg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// sigma is considered singular when lambda_min < kSingularityTolerance *
// max(1, lambda_max).
inline constexpr double kSingularityTolerance = 1e-10;

// Running least-squares accumulator for Y = B^T X + noise with X in R^d and
// Y in R^k. Holds sigma = sum x x^T, cross = sum x y^T and the sample count.
// Solves are recomputed from the sums on every call.
class OlsState {
 public:
  OlsState() = default;
  OlsState(Eigen::Index d, Eigen::Index k);

  void update(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y);
  void update(const Eigen::Ref<const Vector>& x, double y);

  // d x k estimate sigma^{-1} cross. Throws EstimatorUnavailable when sigma
  // is empty or singular.
  Matrix solve() const;
  std::optional<Matrix> try_solve() const;

  const Matrix& sigma() const noexcept { return sigma_; }
  const Matrix& cross() const noexcept { return cross_; }
  long count() const noexcept { return n_; }
  Eigen::Index dim() const noexcept { return sigma_.rows(); }
  Eigen::Index targets() const noexcept { return cross_.cols(); }

 private:
  Matrix sigma_;
  Matrix cross_;
  long n_ = 0;
};

// Smallest eigenvalue of a symmetric matrix. Throws ContractViolation when m
// is not square or not symmetric.
double min_eigenvalue(const Matrix& m);

struct LogisticFit {
  Vector coefficients;
  int iterations = 0;
  bool converged = false;
  // Coefficient norm diverged (perfect or quasi separation). The returned
  // coefficients are scaled back to kMaxCoefficientNorm.
  bool separation = false;

  static constexpr double kMaxCoefficientNorm = 30.0;
};

// Maximum-likelihood logistic regression by iteratively reweighted least
// squares. labels are 0/1. Requires rows >= cols.
LogisticFit logistic_fit(const Matrix& features, const Vector& labels, int max_iter = 100,
                         double tol = 1e-8);

double sigmoid(double z) noexcept;

}  // namespace dtr::linalg
