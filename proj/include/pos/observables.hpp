#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pos/ensemble.hpp"

namespace pos {

/// A single observable o(x) on R^d with first and second derivatives.
struct Observable {
  std::string name;
  std::function<double(std::span<const double>)> value;
  /// writes d entries
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  /// writes d*d entries, row-major
  std::function<void(std::span<const double>, std::span<double>)> hessian;
};

/// M observables with their targets.
///
/// Polynomial sets (x^e in 1-D, x^a y^b in 2-D, each with a constant factor)
/// are recognised by the optimizers, which then work on power sums instead of
/// the dense Jacobian. Any other set goes through the generic path.
class ObservableSet {
 public:
  enum class Kind { monomial, cross_moment, generic };

  ObservableSet() = default;

  /// x^1 .. x^M in one dimension.
  static ObservableSet monomials(int M, std::vector<double> targets = {});
  /// x^e for the listed exponents (each >= 1).
  static ObservableSet powers(std::vector<int> exponents, std::vector<double> targets = {});
  /// x^a y^b in two dimensions; pairs with a + b >= 1.
  static ObservableSet cross_moments(std::vector<std::array<int, 2>> exponents,
                                     std::vector<double> targets = {});
  static ObservableSet generic(std::size_t dim, std::vector<Observable> items,
                               std::vector<double> targets = {});

  Kind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> targets() const noexcept { return targets_; }
  /// Throws InvalidInput on size mismatch or non-finite entries.
  void set_targets(std::vector<double> targets);
  bool has_targets() const noexcept { return targets_.size() == size_; }

  /// o_m -> c_m o_m and mu_m -> c_m mu_m.
  ObservableSet scaled(std::span<const double> factors) const;

  /// Constant factor of observable m (1 unless scaled()).
  double factor(std::size_t m) const noexcept { return factors_[m]; }
  /// Exponent of observable m: {e, 0} for monomial sets, {a, b} for cross moments.
  std::array<int, 2> exponent(std::size_t m) const noexcept { return exponents_[m]; }
  /// Largest total polynomial degree (0 for generic sets).
  int degree() const noexcept;

  std::string name(std::size_t m) const;
  double value(std::size_t m, std::span<const double> x) const;
  void gradient(std::size_t m, std::span<const double> x, std::span<double> out) const;
  void hessian(std::size_t m, std::span<const double> x, std::span<double> out) const;

  /// Sample means (1/N) sum_n o_m(x_n) for every m.
  std::vector<double> sample_means(const Ensemble& X) const;
  std::vector<double> sample_means(std::span<const double> data, std::size_t n_samples) const;

  /// Means of |o_m(x_n)|, used to size rounding-error floors.
  std::vector<double> abs_means(std::span<const double> data, std::size_t n_samples) const;

 private:
  Kind kind_ = Kind::generic;
  std::size_t size_ = 0;
  std::size_t dim_ = 1;
  std::vector<std::array<int, 2>> exponents_;
  std::vector<double> factors_;
  std::vector<Observable> items_;
  std::vector<double> targets_;
};

}  // namespace pos
