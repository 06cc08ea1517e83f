#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace pos {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the arguments was violated.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// The diffusion matrix handed to the individual step has a negative diagonal.
class InvalidDiffusion : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Floating point trouble: non-finite drift, diffusion or iterate, SVD failure.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what,
                        std::optional<std::size_t> sample = std::nullopt)
      : Error(sample ? what + " (sample " + std::to_string(*sample) + ")" : what),
        sample_(sample) {}

  std::optional<std::size_t> sample() const noexcept { return sample_; }

 private:
  std::optional<std::size_t> sample_;
};

/// The M x M Gram matrix is numerically singular.
class SingularGram : public NumericError {
 public:
  explicit SingularGram(double rcond)
      : NumericError("singular Gram matrix (reciprocal condition " + std::to_string(rcond) + ")"),
        rcond_(rcond) {}

  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

/// Invalid run configuration (CLI / JSON).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV input, with 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace pos
