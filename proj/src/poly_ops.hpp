#pragma once

// Power-sum formulation of the Newton step for polynomial observable sets.
// For o_m = c_m x^e (1-D) or c_m x^a y^b (2-D) the Gram matrix J J^T and the
// observable means are linear combinations of power sums, and J^T y is a
// polynomial in the sample coordinates, so no M x N matrix is ever formed.

#include <cstddef>
#include <span>
#include <vector>

#include "pos/linsolve.hpp"
#include "pos/observables.hpp"

namespace pos::detail {

struct MeansAndGram {
  std::vector<double> means;
  DenseMatrix gram;
};

/// Observable means and J J^T for a polynomial set.
MeansAndGram poly_means_and_gram(const ObservableSet& obs, std::span<const double> data,
                                 std::size_t n_samples);

/// data += J^T y for a polynomial set; returns |J^T y|^2.
double poly_apply_update(const ObservableSet& obs, std::span<double> data, std::size_t n_samples,
                         std::span<const double> y);

/// Dense Jacobian rows (1/N) grad o_m(x_n), as in jacobian().
DenseMatrix dense_jacobian(const ObservableSet& obs, std::span<const double> data,
                           std::size_t n_samples);

}  // namespace pos::detail
