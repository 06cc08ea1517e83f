#include "pos/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

#include "pos/error.hpp"

namespace pos {

namespace {

SdeModel additive_1d(std::string label, std::function<double(double)> a, double b) {
  SdeModel m;
  m.label = std::move(label);
  m.dim = m.noise_dim = 1;
  m.drift = [a = std::move(a)](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a(x[i]);
  };
  m.diffusion = [b](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), b);
  };
  return m;
}

}  // namespace

SdeModel ou_model(const OuParams& p) {
  if (!(p.g > 0.0)) throw InvalidInput("OU decay rate g must be positive");
  SdeModel m;
  m.label = "ou";
  m.dim = m.noise_dim = 1;
  m.drift = [f = p.f, g = p.g](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f - g * x[i];
  };
  m.diffusion = [b = p.b](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), b);
  };
  return m;
}

SdeModel cubic_model() {
  return additive_1d("cubic", [](double x) { return x - x * x * x; }, 1.0);
}

SdeModel irregular_model() {
  return additive_1d("irregular", [](double x) { return x * (1.0 - std::abs(x)); }, 1.0);
}

SdeModel laser_model(double b) {
  if (!(b > 0.0)) throw InvalidInput("laser noise amplitude b must be positive");
  SdeModel m;
  m.label = "laser";
  m.dim = m.noise_dim = 2;
  m.drift = [](std::span<const double> xy, std::span<double> out) {
    for (std::size_t i = 0; i + 1 < xy.size(); i += 2) {
      const double x = xy[i], y = xy[i + 1];
      const double g = 1.0 - x * x - y * y;
      out[i] = g * x;
      out[i + 1] = g * y;
    }
  };
  m.diffusion = [b](std::span<const double>, std::span<double> out) {
    for (std::size_t i = 0; i + 3 < out.size(); i += 4) {
      out[i] = b;
      out[i + 1] = 0.0;
      out[i + 2] = 0.0;
      out[i + 3] = b;
    }
  };
  return m;
}

SdeModel constant_model(double a, double b, std::size_t dim) {
  if (dim == 0) throw InvalidInput("model dimension must be positive");
  SdeModel m;
  m.label = "constant";
  m.dim = m.noise_dim = dim;
  m.drift = [a](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), a); };
  m.diffusion = [b, dim](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t s = 0; s < out.size(); s += dim * dim)
      for (std::size_t i = 0; i < dim; ++i) out[s + i * dim + i] = b;
  };
  return m;
}

std::vector<SdeModel> model_catalog() {
  return {ou_model(), cubic_model(), irregular_model(), laser_model(1.0)};
}

OuExact ou_exact_moments(const OuParams& p, double t, int M) {
  if (M < 1) throw InvalidInput("moment order must be at least 1");
  if (!(p.g > 0.0)) throw InvalidInput("OU decay rate g must be positive");
  if (!(t >= 0.0)) throw InvalidInput("time must be non-negative");
  OuExact e;
  const double decay = std::exp(-p.g * t);
  e.mean = p.f / p.g * (1.0 - decay) + decay * p.init_mean;
  // 1 - e^{-2gt} without cancellation for small t
  const double grow = -std::expm1(-2.0 * p.g * t);
  e.variance = decay * decay * p.init_std * p.init_std + p.b * p.b / (2.0 * p.g) * grow;
  MomentVector central(static_cast<std::size_t>(M), 0.0);
  if (e.variance > 0.0) {
    const double sd = std::sqrt(e.variance);
    for (int m = 2; m <= M; m += 2) central[m - 1] = normal_moment(m, sd);
  }
  e.raw = raw_from_central(e.mean, central);
  e.cumulants.assign(static_cast<std::size_t>(M), 0.0);
  e.cumulants[0] = e.mean;
  if (M >= 2) e.cumulants[1] = e.variance;
  return e;
}

SteadyStateWeight cubic_weight() {
  return {[](double x) { return x * x - 0.5 * x * x * x * x; }, 6.0, 64};
}

SteadyStateWeight irregular_weight() {
  return {[](double x) { return x * x - 2.0 / 3.0 * std::abs(x) * x * x; }, 8.0, 64};
}

double steady_state_expectation(const SteadyStateWeight& w, const std::function<double(double)>& f) {
  if (!w.log_weight || !(w.half_width > 0.0) || w.panels == 0) throw InvalidInput("bad steady-state weight");
  using Rule = boost::math::quadrature::gauss<double, 20>;
  const auto& nodes = Rule::abscissa();
  const auto& weights = Rule::weights();

  // collect (x, rule weight) over [-L, 0] and [0, L]
  const double L = w.half_width;
  const double h = L / static_cast<double>(w.panels);
  std::vector<double> xs, ws;
  for (int side = -1; side <= 1; side += 2)
    for (std::size_t p = 0; p < w.panels; ++p) {
      const double lo = side * static_cast<double>(p) * h;
      const double mid = lo + side * 0.5 * h;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double off = 0.5 * h * nodes[i];
        if (nodes[i] == 0.0) {
          xs.push_back(mid);
          ws.push_back(0.5 * h * weights[i]);
        } else {
          xs.push_back(mid - off);
          ws.push_back(0.5 * h * weights[i]);
          xs.push_back(mid + off);
          ws.push_back(0.5 * h * weights[i]);
        }
      }
    }
  double lmax = -std::numeric_limits<double>::infinity();
  std::vector<double> ls(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ls[i] = w.log_weight(xs[i]);
    lmax = std::max(lmax, ls[i]);
  }
  const double edge = std::max(w.log_weight(-L), w.log_weight(L));
  if (!std::isfinite(lmax) || !(edge - lmax < std::log(1e-30)))
    throw InvalidInput("steady-state weight is not negligible at the integration boundary");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double wt = ws[i] * std::exp(ls[i] - lmax);
    num += wt * f(xs[i]);
    den += wt;
  }
  return num / den;
}

double laser_nss(double b) {
  if (!(b > 0.0) || !std::isfinite(b)) throw InvalidInput("laser noise amplitude b must be positive");
  const double e = std::exp(-1.0 / (2.0 * b * b));
  return 1.0 + std::sqrt(2.0 / std::numbers::pi) * b * e / (1.0 + std::erf(1.0 / (std::numbers::sqrt2 * b)));
}

ObservableSet laser_observables() {
  std::vector<std::array<int, 2>> e;
  for (int deg = 1; deg <= 4; ++deg)
    for (int a = deg; a >= 0; --a) e.push_back({a, deg - a});
  for (int a = 4; a >= 1; --a) e.push_back({a, 5 - a});
  return ObservableSet::cross_moments(std::move(e));
}

ObservableSet laser_observables_degree4() {
  std::vector<std::array<int, 2>> e;
  for (int deg = 1; deg <= 4; ++deg)
    for (int a = deg; a >= 0; --a) e.push_back({a, deg - a});
  return ObservableSet::cross_moments(std::move(e));
}

std::vector<double> isotropic_normal_cross_moments(const ObservableSet& obs, double s) {
  if (obs.kind() != ObservableSet::Kind::cross_moment) throw InvalidInput("need a cross-moment set");
  std::vector<double> t(obs.size());
  for (std::size_t m = 0; m < obs.size(); ++m) {
    const auto [a, b] = obs.exponent(m);
    const double ma = a == 0 ? 1.0 : normal_moment(a, s);
    const double mb = b == 0 ? 1.0 : normal_moment(b, s);
    t[m] = obs.factor(m) * ma * mb;
  }
  return t;
}

ObservableSet moments_exp_abs(int M) {
  if (M < 1) throw InvalidInput("moment order must be at least 1");
  std::vector<Observable> items;
  for (int m = 1; m <= M; ++m) {
    items.push_back({"x^" + std::to_string(m),
                     [m](std::span<const double> x) { return std::pow(x[0], m); },
                     [m](std::span<const double> x, std::span<double> g) { g[0] = m * std::pow(x[0], m - 1); },
                     [m](std::span<const double> x, std::span<double> h) {
                       h[0] = m >= 2 ? m * (m - 1) * std::pow(x[0], m - 2) : 0.0;
                     }});
  }
  items.push_back({"exp", [](std::span<const double> x) { return std::exp(x[0]); },
                   [](std::span<const double> x, std::span<double> g) { g[0] = std::exp(x[0]); },
                   [](std::span<const double> x, std::span<double> h) { h[0] = std::exp(x[0]); }});
  items.push_back({"abs", [](std::span<const double> x) { return std::abs(x[0]); },
                   [](std::span<const double> x, std::span<double> g) {
                     g[0] = x[0] > 0.0 ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0);
                   },
                   [](std::span<const double>, std::span<double> h) { h[0] = 0.0; }});
  return ObservableSet::generic(1, std::move(items));
}

}  // namespace pos
