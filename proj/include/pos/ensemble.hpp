#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pos {

/// N_S trajectories of dimension d stored sample-major: sample n occupies
/// data()[n*d, n*d + d). Entries are always finite.
class Ensemble {
 public:
  Ensemble() = default;

  /// Throws InvalidInput on shape mismatch, zero sizes or non-finite data.
  Ensemble(std::vector<double> data, std::size_t n_samples, std::size_t dim);

  /// One-dimensional convenience constructor.
  explicit Ensemble(std::vector<double> data);

  static Ensemble constant(std::size_t n_samples, std::size_t dim, double value);

  std::size_t n_samples() const noexcept { return n_samples_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> sample(std::size_t n) const noexcept {
    return {data_.data() + n * dim_, dim_};
  }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Mutable access for the stepping engines. Callers that write through this
  /// must restore the finiteness invariant (see check_finite()).
  std::span<double> mutable_data() noexcept { return data_; }

  /// Throws NumericError naming the first sample holding a NaN/Inf.
  void check_finite() const;

  friend bool operator==(const Ensemble&, const Ensemble&) = default;

 private:
  std::vector<double> data_;
  std::size_t n_samples_ = 0;
  std::size_t dim_ = 0;
};

}  // namespace pos
