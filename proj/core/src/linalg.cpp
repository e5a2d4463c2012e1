// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <sstream>

namespace dpgm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t square_dim(const Tensor& a, const char* op) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ShapeError(std::string(op) + ": expected a square matrix, got " +
                     shape_string(a.shape()));
  }
  return a.dim(0);
}

Eigen::Map<const RowMat> as_matrix(const Tensor& a) {
  return Eigen::Map<const RowMat>(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                                  static_cast<Eigen::Index>(a.cols()));
}

Tensor from_matrix(const RowMat& m, Shape shape) {
  Tensor out(std::move(shape));
  Eigen::Map<RowMat>(out.data().data(), m.rows(), m.cols()) = m;
  return out;
}

Eigen::LLT<RowMat> factor(const Tensor& a, const char* op) {
  square_dim(a, op);
  Eigen::LLT<RowMat> llt(as_matrix(a));
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << op << ": matrix not positive definite (min eigenvalue "
        << min_eigenvalue_symmetric(a) << ")";
    throw NumericalError(msg.str());
  }
  return llt;
}

}  // namespace

Tensor identity(std::size_t n) {
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
  return out;
}

Tensor cholesky(const Tensor& a) {
  const auto llt = factor(a, "cholesky");
  RowMat l = llt.matrixL();
  return from_matrix(l, a.shape());
}

double log_det_spd(const Tensor& a) {
  const auto llt = factor(a, "log_det_spd");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Tensor inverse_spd(const Tensor& a) {
  const auto n = static_cast<Eigen::Index>(square_dim(a, "inverse_spd"));
  const auto llt = factor(a, "inverse_spd");
  RowMat inv = llt.solve(RowMat::Identity(n, n));
  return from_matrix(inv, a.shape());
}

Tensor solve_spd(const Tensor& a, const Tensor& b) {
  const std::size_t n = square_dim(a, "solve_spd");
  if (b.rows() != n || b.rank() == 0 || b.rank() > 2) {
    throw ShapeError("solve_spd: rhs " + shape_string(b.shape()) + " vs matrix " +
                     shape_string(a.shape()));
  }
  const auto llt = factor(a, "solve_spd");
  RowMat x = llt.solve(as_matrix(b));
  return from_matrix(x, b.shape());
}

double min_eigenvalue_symmetric(const Tensor& a) {
  square_dim(a, "min_eigenvalue_symmetric");
  Eigen::SelfAdjointEigenSolver<RowMat> es(as_matrix(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double mvn_log_density(std::span<const double> x, std::span<const double> mean,
                       const Tensor& cov) {
  const std::size_t n = square_dim(cov, "mvn_log_density");
  if (x.size() != n || mean.size() != n) {
    throw ShapeError("mvn_log_density: point/mean size vs covariance " +
                     shape_string(cov.shape()));
  }
  const auto llt = factor(cov, "mvn_log_density");
  Eigen::VectorXd diff(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) diff[static_cast<Eigen::Index>(i)] = x[i] - mean[i];
  const Eigen::VectorXd w = llt.matrixL().solve(diff);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + log_det +
                 static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
}

}  // namespace dpgm
