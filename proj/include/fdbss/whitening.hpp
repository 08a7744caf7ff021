#pragma once

#include <Eigen/Dense>

#include "fdbss/errors.hpp"
#include "fdbss/signal.hpp"

namespace fdbss {

// Per-bin decorrelation to identity covariance. V maps centered observations
// to white coordinates, V_inv maps back.
struct WhiteningTransform {
  int bin = 0;
  Eigen::MatrixXcd V;      // N x M whitener
  Eigen::MatrixXcd V_inv;  // M x N dewhitener
  Eigen::VectorXcd mean;   // per-channel mean removed before whitening

  Eigen::MatrixXcd apply(const Eigen::MatrixXcd& X) const {
    return V * (X.colwise() - mean);
  }
};

// Eigendecomposition of the sample covariance. Throws DegenerateBinError when
// the smallest eigenvalue falls below rank_tol times the largest.
inline WhiteningTransform compute_whitener(const Eigen::MatrixXcd& X, int bin = 0,
                                           double rank_tol = 1e-12) {
  const Eigen::Index m = X.rows();
  const Eigen::Index t = X.cols();
  if (m == 0 || t == 0) throw DataError("compute_whitener: empty data");
  if (t < m) throw DataError("compute_whitener: fewer frames than channels");

  WhiteningTransform w;
  w.bin = bin;
  w.mean = X.rowwise().mean();
  const Eigen::MatrixXcd centered = X.colwise() - w.mean;
  Eigen::MatrixXcd cov = centered * centered.adjoint() / static_cast<double>(t);
  cov = 0.5 * (cov + cov.adjoint().eval());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw DataError("compute_whitener: eigendecomposition failed");
  const Eigen::VectorXd evals = eig.eigenvalues();  // ascending
  const double lambda_max = evals[m - 1];
  if (!(lambda_max > 0) || evals[0] < rank_tol * lambda_max)
    throw DegenerateBinError("compute_whitener: rank-deficient covariance");

  const Eigen::VectorXd inv_sqrt = evals.cwiseSqrt().cwiseInverse();
  w.V = inv_sqrt.asDiagonal() * eig.eigenvectors().adjoint();
  w.V_inv = eig.eigenvectors() * evals.cwiseSqrt().asDiagonal();
  return w;
}

// Closest unitary matrix to W in Frobenius norm: W (W^H W)^{-1/2}.
inline Eigen::MatrixXcd symmetric_orthogonalize(const Eigen::MatrixXcd& W,
                                                double rank_tol = 1e-12) {
  Eigen::MatrixXcd gram = W.adjoint() * W;
  gram = 0.5 * (gram + gram.adjoint().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
  if (eig.info() != Eigen::Success)
    throw DataError("symmetric_orthogonalize: eigendecomposition failed");
  const Eigen::VectorXd evals = eig.eigenvalues();
  if (!(evals[evals.size() - 1] > 0) || evals[0] < rank_tol * evals[evals.size() - 1])
    throw DataError("symmetric_orthogonalize: singular matrix");
  const Eigen::VectorXd inv_sqrt = evals.cwiseSqrt().cwiseInverse();
  return W * (eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().adjoint());
}

}  // namespace fdbss
