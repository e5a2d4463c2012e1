// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <span>

#include "dpgm/tensor.hpp"

namespace dpgm {

// Small dense linear algebra on [n, n] tensors; symmetric positive definite
// inputs unless stated otherwise.

Tensor identity(std::size_t n);

/// Lower-triangular L with a = L L^T. Throws NumericalError naming the
/// smallest eigenvalue when `a` is not positive definite.
Tensor cholesky(const Tensor& a);
double log_det_spd(const Tensor& a);
Tensor inverse_spd(const Tensor& a);
/// Solves a x = b for b of shape [n] or [n, m].
Tensor solve_spd(const Tensor& a, const Tensor& b);
double min_eigenvalue_symmetric(const Tensor& a);

/// log N(x; mean, cov) with full covariance.
double mvn_log_density(std::span<const double> x, std::span<const double> mean,
                       const Tensor& cov);

}  // namespace dpgm
