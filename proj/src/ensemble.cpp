#include "pos/ensemble.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "pos/error.hpp"

namespace pos {

Ensemble::Ensemble(std::vector<double> data, std::size_t n_samples, std::size_t dim)
    : data_(std::move(data)), n_samples_(n_samples), dim_(dim) {
  if (n_samples_ == 0 || dim_ == 0) throw InvalidInput("ensemble needs at least one sample and dimension");
  if (data_.size() != n_samples_ * dim_)
    throw InvalidInput("ensemble data has " + std::to_string(data_.size()) + " entries, expected " +
                       std::to_string(n_samples_ * dim_));
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i])) throw InvalidInput("non-finite ensemble entry at sample " + std::to_string(i / dim_));
}

Ensemble::Ensemble(std::vector<double> data) {
  const std::size_t n = data.size();
  *this = Ensemble(std::move(data), n, 1);
}

Ensemble Ensemble::constant(std::size_t n_samples, std::size_t dim, double value) {
  return Ensemble(std::vector<double>(n_samples * dim, value), n_samples, dim);
}

void Ensemble::check_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (!std::isfinite(data_[i])) throw NumericError("non-finite ensemble entry", i / dim_);
}

}  // namespace pos
