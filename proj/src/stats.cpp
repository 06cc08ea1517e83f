#include "pos/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>

#include "pos/error.hpp"
#include "pos/kernels.hpp"

namespace pos {

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void check_order(int M) {
  if (M < 1) throw InvalidInput("moment order must be at least 1");
  if (M > kernels::kMaxPower) throw InvalidInput("moment order above " + std::to_string(kernels::kMaxPower));
}

}  // namespace

const char* to_string(AttemptStatus s) noexcept {
  switch (s) {
    case AttemptStatus::converged: return "converged";
    case AttemptStatus::non_convergence: return "non_convergence";
    case AttemptStatus::divergence: return "divergence";
    case AttemptStatus::singular: return "singular";
  }
  return "unknown";
}

MomentVector raw_moments(std::span<const double> x, int M) {
  check_order(M);
  if (x.empty()) throw InvalidInput("raw moments of an empty ensemble");
  std::vector<double> sums(static_cast<std::size_t>(M + 1));
  const double* w[1] = {nullptr};
  kernels::active().power_sums(x.data(), x.size(), w, 1, M, sums.data());
  MomentVector out(static_cast<std::size_t>(M));
  const double n = static_cast<double>(x.size());
  for (int m = 1; m <= M; ++m) out[m - 1] = sums[m] / n;
  return out;
}

MomentVector raw_moments(const Ensemble& X, int M) {
  if (X.empty()) throw InvalidInput("raw moments of an empty ensemble");
  if (X.dim() != 1) throw InvalidInput("raw moments need a one-dimensional ensemble");
  return raw_moments(X.data(), M);
}

MomentVector central_moments(std::span<const double> x, int M) {
  check_order(M);
  if (x.empty()) throw InvalidInput("central moments of an empty ensemble");
  const double mean = kernels::active().sum(x.data(), x.size()) / static_cast<double>(x.size());
  std::vector<double> c(x.begin(), x.end());
  for (double& v : c) v -= mean;
  MomentVector out = raw_moments(c, M);
  out[0] = 0.0;
  return out;
}

double normal_moment(int m, double sigma) {
  if (m < 1) throw InvalidInput("moment order must be at least 1");
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  if (m % 2 == 1) return 0.0;
  double df = 1.0;
  for (int k = m - 1; k > 1; k -= 2) df *= k;
  return std::pow(sigma, m) * df;
}

MomentVector normal_moments(int M, double mean, double sigma) {
  check_order(M);
  MomentVector central(static_cast<std::size_t>(M));
  for (int m = 1; m <= M; ++m) central[m - 1] = normal_moment(m, sigma);
  return raw_from_central(mean, central);
}

std::pair<double, double> special_targets(double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  return {std::exp(0.5 * sigma * sigma), sigma * std::sqrt(2.0 / std::numbers::pi)};
}

MomentVector raw_from_central(double mean, const MomentVector& central) {
  const int M = static_cast<int>(central.size());
  MomentVector raw(central.size());
  for (int m = 1; m <= M; ++m) {
    double s = std::pow(mean, m);  // p = 0 term, central_0 = 1
    for (int p = 1; p <= m; ++p) s += binomial(m, p) * central[p - 1] * std::pow(mean, m - p);
    raw[m - 1] = s;
  }
  return raw;
}

MomentVector central_from_raw(const MomentVector& raw) {
  if (raw.empty()) return {};
  const int M = static_cast<int>(raw.size());
  const double mu = raw[0];
  MomentVector c(raw.size());
  for (int m = 1; m <= M; ++m) {
    double s = std::pow(-mu, m);
    for (int p = 1; p <= m; ++p) s += binomial(m, p) * raw[p - 1] * std::pow(-mu, m - p);
    c[m - 1] = s;
  }
  c[0] = 0.0;
  return c;
}

MomentVector cumulants_from_moments(const MomentVector& raw) {
  const int M = static_cast<int>(raw.size());
  MomentVector k(raw.size());
  for (int m = 1; m <= M; ++m) {
    double s = raw[m - 1];
    for (int p = 1; p < m; ++p) s -= binomial(m - 1, p - 1) * k[p - 1] * raw[m - p - 1];
    k[m - 1] = s;
  }
  return k;
}

MomentVector moments_from_cumulants(const MomentVector& kappa) {
  const int M = static_cast<int>(kappa.size());
  MomentVector raw(kappa.size());
  for (int m = 1; m <= M; ++m) {
    double s = kappa[m - 1];
    for (int p = 1; p < m; ++p) s += binomial(m - 1, p - 1) * kappa[p - 1] * raw[m - p - 1];
    raw[m - 1] = s;
  }
  return raw;
}

MomentVector sample_cumulants(std::span<const double> x, int M) {
  MomentVector c = central_moments(x, M);
  MomentVector k = cumulants_from_moments(c);
  k[0] = kernels::active().sum(x.data(), x.size()) / static_cast<double>(x.size());
  return k;
}

std::vector<double> normalized_static_error(const Ensemble& X, const MomentVector& targets,
                                            double sigma, std::size_t n_samples) {
  if (n_samples == 0) throw InvalidInput("N_S must be positive");
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  if (targets.empty()) return {};
  const MomentVector mom = raw_moments(X, static_cast<int>(targets.size()));
  std::vector<double> r(targets.size());
  double fact = 1.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int m = static_cast<int>(i) + 1;
    fact *= m;
    const double scale = std::pow(sigma, m) * std::sqrt(fact / static_cast<double>(n_samples));
    r[i] = std::abs(mom[i] - targets[i]) / scale;
  }
  return r;
}

double normalized_special_error(double r_tilde, std::size_t n_samples, SpecialScaling scaling) {
  if (n_samples == 0) throw InvalidInput("N_S must be positive");
  const double s = std::sqrt(static_cast<double>(n_samples));
  return scaling == SpecialScaling::divide_sqrt_n ? r_tilde / s : r_tilde * s;
}

double relative_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("relative distance of differently shaped ensembles");
  const auto& k = kernels::active();
  const double nb = k.sum_squares(b.data(), b.size());
  if (!(nb > 0.0)) throw InvalidInput("relative distance to a zero-norm reference");
  return std::sqrt(k.diff_sum_squares(a.data(), b.data(), a.size()) / nb);
}

double relative_distance(const Ensemble& A, const Ensemble& B) {
  if (A.n_samples() != B.n_samples() || A.dim() != B.dim())
    throw InvalidInput("relative distance of differently shaped ensembles");
  return relative_distance(A.data(), B.data());
}

double cost_metric(double wall_seconds, double r_tilde) {
  if (!(wall_seconds >= 0.0)) throw InvalidInput("wall time must be non-negative");
  return wall_seconds * r_tilde * r_tilde;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw InvalidInput("percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return values[lo] + f * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

double geometric_mean(std::span<const double> values, std::size_t* zero_count) {
  double s = 0.0;
  std::size_t n = 0, zeros = 0;
  for (double v : values) {
    if (v < 0.0 || !std::isfinite(v)) throw InvalidInput("geometric mean needs finite non-negative values");
    if (v == 0.0) {
      ++zeros;
      continue;
    }
    s += std::log(v);
    ++n;
  }
  if (zero_count) *zero_count = zeros;
  return n == 0 ? 0.0 : std::exp(s / static_cast<double>(n));
}

LogHistogram log_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (!(lo > 0.0 && hi > lo) || bins == 0) throw InvalidInput("bad histogram range");
  LogHistogram h;
  h.edges.resize(bins + 1);
  h.counts.assign(bins, 0);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(bins));
  for (double v : values) {
    if (v == 0.0) {
      ++h.zeros;
      continue;
    }
    const double t = (std::log10(v) - a) / (b - a) * static_cast<double>(bins);
    const auto k = static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(bins) - 0.5));
    ++h.counts[k];
  }
  return h;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("line fit needs at least two points");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidInput("line fit needs distinct x values");
  LineFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.slope_lo = f.slope_hi = f.slope;
  if (n > 2) {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = y[i] - (f.intercept + f.slope * x[i]);
      sse += e * e;
    }
    const double se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
    const boost::math::students_t dist(static_cast<double>(n - 2));
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.slope_lo = f.slope - t * se;
    f.slope_hi = f.slope + t * se;
  }
  return f;
}

LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw InvalidInput("log-log fit needs positive x");
    lx[i] = std::log10(x[i]);
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0)) throw InvalidInput("log-log fit needs positive y");
    ly[i] = std::log10(y[i]);
  }
  return fit_line(lx, ly);
}

}  // namespace pos
