#include "pos/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "pos/error.hpp"
#include "pos/kernels.hpp"
#include "pos/models.hpp"
#include "pos/planner.hpp"
#include "pos/rng.hpp"
#include "pos/static_pos.hpp"

namespace pos::bench {

namespace {

struct NamedScenario {
  Scenario s;
  const char* name;
};

constexpr NamedScenario kScenarios[] = {
    {Scenario::static_opt, "static"},
    {Scenario::onestep_combined, "onestep-combined"},
    {Scenario::onestep_individual, "onestep-individual"},
    {Scenario::sde_ou, "sde-ou"},
    {Scenario::sde_cubic, "sde-cubic"},
    {Scenario::sde_irregular, "sde-irregular"},
    {Scenario::sde_laser, "sde-laser"},
    {Scenario::plan, "plan"},
};

bool is_sde(Scenario s) {
  return s == Scenario::sde_ou || s == Scenario::sde_cubic || s == Scenario::sde_irregular ||
         s == Scenario::sde_laser;
}

bool is_onestep(Scenario s) {
  return s == Scenario::onestep_combined || s == Scenario::onestep_individual;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean_of(const std::vector<double>& v) {
  return kernels::active().sum(v.data(), v.size()) / static_cast<double>(v.size());
}

std::vector<double> standard_normals(const NoiseStream& ns, std::uint32_t step, NoisePurpose p, std::size_t n) {
  std::vector<double> z(n);
  ns.fill(step, p, z);
  return z;
}

CsvRecord base_record(const RunConfig& cfg, std::size_t n_samples, std::size_t n_steps, double dt,
                      double param, std::size_t attempt) {
  CsvRecord r;
  r.scenario = to_string(cfg.scenario);
  r.method = cfg.scenario == Scenario::static_opt || cfg.scenario == Scenario::plan ? "static"
                                                                                      : pos::to_string(cfg.method);
  if (cfg.scenario == Scenario::plan) r.method = "plan";
  r.seed = cfg.seed;
  r.n_samples = n_samples;
  r.n_steps = n_steps;
  r.dt = dt;
  r.param = param;
  r.attempt = attempt;
  return r;
}

int report_order(const RunConfig& cfg) { return std::max(cfg.M, cfg.report_moments); }

// ---- JSON ----------------------------------------------------------------

using nlohmann::json;

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ConfigError("config key '" + key + "' must be an integer");
  const auto x = v.get<std::int64_t>();
  if (x < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(x);
}

template <class T, class F>
std::vector<T> scalar_or_list(const json& v, const std::string& key, F one) {
  std::vector<T> out;
  if (v.is_array()) {
    for (const auto& e : v) out.push_back(one(e, key));
  } else {
    out.push_back(one(v, key));
  }
  return out;
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

// ---- CSV -----------------------------------------------------------------

constexpr const char* kColumns[] = {"schema", "scenario", "method",    "seed",         "n_samples", "n_steps",
                                    "dt",     "param",    "attempt",   "m",            "observable", "value",
                                    "reference", "iterations", "distance", "wall_seconds", "cost", "status"};
constexpr std::size_t kColumnCount = sizeof(kColumns) / sizeof(kColumns[0]);

void put(std::string& s, double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, r.ptr);
}

template <class I>
void put_int(std::string& s, I v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, r.ptr);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (;;) {
    const std::size_t c = line.find(',', start);
    if (c == std::string_view::npos) {
      f.push_back(line.substr(start));
      return f;
    }
    f.push_back(line.substr(start, c - start));
    start = c + 1;
  }
}

template <class T>
T parse_num(std::string_view s, std::size_t line, const char* col) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
    throw ParseError(std::string("bad ") + col + " '" + std::string(s) + "'", line);
  return v;
}

// ---- summary helpers -------------------------------------------------------

std::string sci(double v) {
  std::ostringstream o;
  o << std::scientific << std::setprecision(3) << v;
  return o.str();
}

}  // namespace

const char* to_string(Scenario s) noexcept {
  for (const auto& n : kScenarios)
    if (n.s == s) return n.name;
  return "unknown";
}

Scenario scenario_from_string(std::string_view s) {
  for (const auto& n : kScenarios)
    if (s == n.name) return n.s;
  throw ConfigError("unknown scenario '" + std::string(s) + "'");
}

double RunConfig::horizon_value() const {
  if (horizon) return *horizon;
  if (!dt.empty()) return dt.front() * static_cast<double>(n_steps);
  throw ConfigError("neither dt nor horizon given");
}

void RunConfig::validate() const {
  if (n_samples.empty()) throw ConfigError("n_samples must not be empty");
  for (std::size_t n : n_samples)
    if (n < 2) throw ConfigError("n_samples must be at least 2");
  if (attempts < 1) throw ConfigError("attempts must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (M < 1 || M > 20) throw ConfigError("M must be in [1, 20]");
  if (report_moments < 1 || report_moments > 20) throw ConfigError("report_moments must be in [1, 20]");
  for (double h : dt)
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("dt must be positive and finite");
  if (horizon && (!(*horizon > 0.0) || !std::isfinite(*horizon)))
    throw ConfigError("horizon must be positive and finite");
  for (double v : {sigma, noise, init_std, ou_g, ou_b, plan_p, plan_c, plan_sigma})
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("scale parameters must be positive and finite");
  for (double v : {drift, init_mean, ou_f})
    if (!std::isfinite(v)) throw ConfigError("model parameters must be finite");

  if (is_onestep(scenario)) {
    if (dt.empty()) throw ConfigError("one-step scenarios need dt");
    if (horizon) throw ConfigError("one-step scenarios take dt, not horizon");
    const Method want = scenario == Scenario::onestep_combined ? Method::combined : Method::individual;
    if (method != want)
      throw ConfigError(std::string("scenario ") + to_string(scenario) + " runs the " + pos::to_string(want) +
                        " method");
  }
  if (is_sde(scenario)) {
    if (n_steps < 1) throw ConfigError("n_steps must be at least 1");
    if (dt.size() > 1) throw ConfigError("SDE scenarios take a single dt");
    if (dt.empty() == !horizon.has_value()) throw ConfigError("give exactly one of dt and horizon with n_steps");
    if (scenario == Scenario::sde_laser) {
      if (laser_b.empty()) throw ConfigError("laser_b must not be empty");
      for (double b : laser_b)
        if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("laser_b entries must be positive");
    }
  }
  if (scenario == Scenario::plan && plan_budget < 1) throw ConfigError("plan_budget must be at least 1");
}

RunConfig default_config(Scenario s) {
  RunConfig c;
  c.scenario = s;
  switch (s) {
    case Scenario::static_opt:
    case Scenario::plan:
      break;
    case Scenario::onestep_combined:
      c.dt = {1e-4};
      c.method = Method::combined;
      break;
    case Scenario::onestep_individual:
      c.dt = {0.1};
      c.method = Method::individual;
      break;
    case Scenario::sde_ou:
      c.n_samples = {1000, 10000};
      c.n_steps = 1000;
      c.horizon = 1.0;
      c.attempts = 8;
      c.method = Method::individual;
      c.init_mean = 0.5;
      c.init_std = 0.1;
      break;
    case Scenario::sde_cubic:
    case Scenario::sde_irregular:
      c.n_samples = {4096};
      c.n_steps = 12500;
      c.horizon = 25.0;
      c.attempts = 8;
      c.init_mean = 0.0;
      c.init_std = std::numbers::sqrt2 / 2.0;
      break;
    case Scenario::sde_laser:
      c.n_samples = {16384};
      c.n_steps = 5000;
      c.horizon = 10.0;
      c.attempts = 8;
      c.init_mean = 0.0;
      c.init_std = std::numbers::sqrt2 / 2.0;
      break;
  }
  return c;
}

void apply_json(RunConfig& cfg, std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (auto it = j.find("scenario"); it != j.end()) {
    const Scenario s = scenario_from_string(get_as<std::string>(*it, "scenario"));
    if (s != cfg.scenario) cfg = default_config(s);
  }
  for (const auto& [key, v] : j.items()) {
    if (key == "scenario") continue;
    if (key == "n_samples") cfg.n_samples = scalar_or_list<std::size_t>(v, key, get_count);
    else if (key == "n_steps") cfg.n_steps = get_count(v, key);
    else if (key == "dt") cfg.dt = scalar_or_list<double>(v, key, get_double);
    else if (key == "horizon") {
      if (v.is_null()) cfg.horizon.reset();
      else cfg.horizon = get_double(v, key);
    } else if (key == "attempts") cfg.attempts = get_count(v, key);
    else if (key == "M") cfg.M = static_cast<int>(get_count(v, key));
    else if (key == "report_moments") cfg.report_moments = static_cast<int>(get_count(v, key));
    else if (key == "laser_degree4") cfg.laser_degree4 = get_as<bool>(v, key);
    else if (key == "method") {
      try {
        cfg.method = method_from_string(get_as<std::string>(v, key));
      } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "seed") cfg.seed = get_count(v, key);
    else if (key == "out") cfg.out = get_as<std::string>(v, key);
    else if (key == "workers") cfg.workers = get_count(v, key);
    else if (key == "timing") cfg.timing = get_as<bool>(v, key);
    else if (key == "special") {
      const auto s = get_as<std::string>(v, key);
      if (s == "divide_sqrt_n") cfg.special = SpecialScaling::divide_sqrt_n;
      else if (s == "multiply_sqrt_n") cfg.special = SpecialScaling::multiply_sqrt_n;
      else throw ConfigError("special must be divide_sqrt_n or multiply_sqrt_n");
    } else if (key == "sigma") cfg.sigma = get_double(v, key);
    else if (key == "drift") cfg.drift = get_double(v, key);
    else if (key == "noise") cfg.noise = get_double(v, key);
    else if (key == "init_mean") cfg.init_mean = get_double(v, key);
    else if (key == "init_std") cfg.init_std = get_double(v, key);
    else if (key == "ou_f") cfg.ou_f = get_double(v, key);
    else if (key == "ou_g") cfg.ou_g = get_double(v, key);
    else if (key == "ou_b") cfg.ou_b = get_double(v, key);
    else if (key == "laser_b") cfg.laser_b = scalar_or_list<double>(v, key, get_double);
    else if (key == "optimize_initial") cfg.optimize_initial = get_as<bool>(v, key);
    else if (key == "plan_p") cfg.plan_p = get_double(v, key);
    else if (key == "plan_c") cfg.plan_c = get_double(v, key);
    else if (key == "plan_sigma") cfg.plan_sigma = get_double(v, key);
    else if (key == "plan_budget") cfg.plan_budget = get_count(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

// ---- CSV -----------------------------------------------------------------

std::string csv_header() {
  std::string h;
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (i) h += ',';
    h += kColumns[i];
  }
  return h;
}

void write_csv(std::ostream& os, const std::vector<CsvRecord>& rows) {
  std::string s = csv_header();
  s += '\n';
  for (const auto& r : rows) {
    put_int(s, r.schema);
    s += ',';
    s += r.scenario;
    s += ',';
    s += r.method;
    s += ',';
    put_int(s, r.seed);
    s += ',';
    put_int(s, r.n_samples);
    s += ',';
    put_int(s, r.n_steps);
    s += ',';
    put(s, r.dt);
    s += ',';
    put(s, r.param);
    s += ',';
    put_int(s, r.attempt);
    s += ',';
    put_int(s, r.m);
    s += ',';
    s += r.observable;
    s += ',';
    put(s, r.value);
    s += ',';
    put(s, r.reference);
    s += ',';
    put(s, r.iterations);
    s += ',';
    put(s, r.distance);
    s += ',';
    put(s, r.wall_seconds);
    s += ',';
    put(s, r.cost);
    s += ',';
    s += r.status;
    s += '\n';
  }
  os << s;
}

std::string to_csv(const std::vector<CsvRecord>& rows) {
  std::ostringstream o;
  write_csv(o, rows);
  return o.str();
}

std::vector<CsvRecord> parse_csv(std::string_view text) {
  std::vector<CsvRecord> rows;
  std::size_t line_no = 0, pos = 0;
  bool seen_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != csv_header()) throw ParseError("unexpected header", line_no);
      seen_header = true;
      continue;
    }
    const auto f = split(line);
    if (f.size() != kColumnCount)
      throw ParseError("expected " + std::to_string(kColumnCount) + " fields, got " + std::to_string(f.size()),
                       line_no);
    CsvRecord r;
    r.schema = parse_num<int>(f[0], line_no, "schema");
    if (r.schema != kSchemaVersion) throw ParseError("unsupported schema version " + std::string(f[0]), line_no);
    r.scenario = std::string(f[1]);
    r.method = std::string(f[2]);
    r.seed = parse_num<std::uint64_t>(f[3], line_no, "seed");
    r.n_samples = parse_num<std::size_t>(f[4], line_no, "n_samples");
    r.n_steps = parse_num<std::size_t>(f[5], line_no, "n_steps");
    r.dt = parse_num<double>(f[6], line_no, "dt");
    r.param = parse_num<double>(f[7], line_no, "param");
    r.attempt = parse_num<std::size_t>(f[8], line_no, "attempt");
    r.m = parse_num<int>(f[9], line_no, "m");
    r.observable = std::string(f[10]);
    r.value = parse_num<double>(f[11], line_no, "value");
    r.reference = parse_num<double>(f[12], line_no, "reference");
    r.iterations = parse_num<double>(f[13], line_no, "iterations");
    r.distance = parse_num<double>(f[14], line_no, "distance");
    r.wall_seconds = parse_num<double>(f[15], line_no, "wall_seconds");
    r.cost = parse_num<double>(f[16], line_no, "cost");
    r.status = std::string(f[17]);
    if (r.scenario.empty() || r.observable.empty()) throw ParseError("empty key field", line_no);
    rows.push_back(std::move(r));
  }
  if (!seen_header) throw ParseError("missing header", std::max<std::size_t>(line_no, 1));
  return rows;
}

// ---- workers -------------------------------------------------------------

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count || stop.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          stop = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---- scenarios -------------------------------------------------------------

std::vector<CsvRecord> run_static_bench(const RunConfig& cfg) {
  if (cfg.scenario != Scenario::static_opt) throw ConfigError("run_static_bench needs scenario static");
  cfg.validate();
  const int R = report_order(cfg);
  const double sigma = cfg.sigma;
  const MomentVector report_targets = normal_moments(R, 0.0, sigma);
  const auto [exp_target, abs_target] = special_targets(sigma);
  const ObservableSet obs = ObservableSet::monomials(cfg.M, normal_moments(cfg.M, 0.0, sigma));
  OptimizerConfig ocfg;
  ocfg.divergence_policy = DivergencePolicy::backtrack_resample;

  const std::size_t A = cfg.attempts;
  std::vector<std::vector<CsvRecord>> out(cfg.n_samples.size() * A);
  parallel_for(out.size(), cfg.workers, [&](std::size_t job) {
    const std::size_t N = cfg.n_samples[job / A];
    const std::size_t a = job % A;
    const NoiseStream ns(cfg.seed, static_cast<std::uint32_t>(a));
    auto draw = [&](std::uint32_t step, NoisePurpose p) {
      std::vector<double> z = standard_normals(ns, step, p, N);
      for (double& v : z) v *= sigma;
      return Ensemble(std::move(z));
    };
    const Ensemble X = draw(0, NoisePurpose::initial);
    const Resampler resample = [&](int k) { return draw(static_cast<std::uint32_t>(k), NoisePurpose::resample); };

    const auto t0 = std::chrono::steady_clock::now();
    auto [Xo, rep] = try_optimize_initial(X, obs, ocfg, resample);
    const double wall = cfg.timing ? seconds_since(t0) : 0.0;

    const std::vector<double> r_opt = normalized_static_error(Xo, report_targets, sigma, N);
    const std::vector<double> r_ref = normalized_static_error(X, report_targets, sigma, N);
    const MomentVector mom = raw_moments(Xo, R);

    std::string status = pos::to_string(rep.status);
    if (rep.restarts > 0) status += ":restarts=" + std::to_string(rep.restarts);
    auto& rows = out[job];
    for (int m = 1; m <= R; ++m) {
      CsvRecord r = base_record(cfg, N, 0, 0.0, 0.0, a);
      r.m = m;
      r.observable = "x^" + std::to_string(m);
      r.value = r_opt[m - 1];
      r.reference = r_ref[m - 1];
      r.iterations = rep.iterations;
      r.distance = rep.distance;
      r.wall_seconds = wall;
      const double rt = std::abs(mom[m - 1] - report_targets[m - 1]);
      r.cost = cost_metric(wall, rt);
      r.status = status;
      rows.push_back(std::move(r));
    }
    auto special = [&](const Ensemble& E, double (*f)(double)) {
      std::vector<double> t(E.data().begin(), E.data().end());
      for (double& v : t) v = f(v);
      return mean_of(t);
    };
    const double eo = std::abs(special(Xo, [](double v) { return std::exp(v); }) - exp_target);
    const double er = std::abs(special(X, [](double v) { return std::exp(v); }) - exp_target);
    const double ao = std::abs(special(Xo, [](double v) { return std::abs(v); }) - abs_target);
    const double ar = std::abs(special(X, [](double v) { return std::abs(v); }) - abs_target);
    int m = R;
    for (const auto& [name, vo, vr] : {std::tuple{"exp", eo, er}, std::tuple{"abs", ao, ar}}) {
      CsvRecord r = base_record(cfg, N, 0, 0.0, 0.0, a);
      r.m = ++m;
      r.observable = name;
      r.value = normalized_special_error(vo, N, cfg.special);
      r.reference = normalized_special_error(vr, N, cfg.special);
      r.iterations = rep.iterations;
      r.distance = rep.distance;
      r.wall_seconds = wall;
      r.cost = cost_metric(wall, vo);
      r.status = status;
      rows.push_back(std::move(r));
    }
  });
  std::vector<CsvRecord> rows;
  for (auto& v : out) std::move(v.begin(), v.end(), std::back_inserter(rows));
  return rows;
}

std::vector<CsvRecord> run_onestep_bench(const RunConfig& cfg) {
  if (!is_onestep(cfg.scenario)) throw ConfigError("run_onestep_bench needs a one-step scenario");
  cfg.validate();
  const bool combined = cfg.scenario == Scenario::onestep_combined;
  const int R = report_order(cfg);
  const SdeModel model = constant_model(cfg.drift, cfg.noise);
  const ObservableSet obs = ObservableSet::monomials(cfg.M);
  const ObservableSet rep_obs = ObservableSet::monomials(R);
  const OptimizerConfig ocfg;

  const std::size_t A = cfg.attempts, ND = cfg.dt.size();
  std::vector<std::vector<CsvRecord>> out(cfg.n_samples.size() * ND * A);
  parallel_for(out.size(), cfg.workers, [&](std::size_t job) {
    const std::size_t N = cfg.n_samples[job / (ND * A)];
    const double dt = cfg.dt[(job / A) % ND];
    const std::size_t a = job % A;
    const NoiseStream ns(cfg.seed, static_cast<std::uint32_t>(a));
    std::vector<double> x = standard_normals(ns, 0, NoisePurpose::initial, N);
    for (double& v : x) v = cfg.init_mean + cfg.init_std * v;
    const Ensemble X(std::move(x));
    std::vector<double> dW = standard_normals(ns, 0, NoisePurpose::increment, N);
    const double sq = std::sqrt(dt);
    for (double& w : dW) w *= sq;
    const StepProposal P = StepProposal::make(X, model, dt, dW);

    const auto t0 = std::chrono::steady_clock::now();
    const StepResult res = combined ? try_combined_step(X, P, obs, ocfg) : try_individual_step(X, P, obs, ocfg);
    const double wall = cfg.timing ? seconds_since(t0) : 0.0;

    const double norm = std::sqrt(dt / static_cast<double>(N));
    std::vector<double> r_opt(R), r_ref(R);
    if (combined) {
      const std::vector<double> c = ideal_moment_changes(X, model, rep_obs, dt);
      const std::vector<double> mo = rep_obs.sample_means(res.X);
      const std::vector<double> me = rep_obs.sample_means(P.euler(X));
      for (int m = 0; m < R; ++m) {
        r_opt[m] = std::abs(mo[m] - c[m]);
        r_ref[m] = std::abs(me[m] - c[m]);
      }
    } else {
      const NoiseResiduals ro = noise_residuals(X, P, rep_obs, res.dv);
      const NoiseResiduals rr = noise_residuals(X, P, rep_obs, P.effective_noise);
      for (int m = 0; m < R; ++m) {
        r_opt[m] = std::abs(ro.e1[m]) + std::abs(ro.e2[m]);
        r_ref[m] = std::abs(rr.e1[m]) + std::abs(rr.e2[m]);
      }
    }
    auto& rows = out[job];
    for (int m = 1; m <= R; ++m) {
      CsvRecord r = base_record(cfg, N, 1, dt, 0.0, a);
      r.m = m;
      r.observable = "x^" + std::to_string(m);
      r.value = r_opt[m - 1] / norm;
      r.reference = r_ref[m - 1] / norm;
      r.iterations = res.rep.iterations;
      r.distance = res.rep.distance;
      r.wall_seconds = wall;
      r.cost = cost_metric(wall, r_opt[m - 1]);
      r.status = pos::to_string(res.rep.status);
      rows.push_back(std::move(r));
    }
  });
  std::vector<CsvRecord> rows;
  for (auto& v : out) std::move(v.begin(), v.end(), std::back_inserter(rows));
  return rows;
}

namespace {

struct SdeSetup {
  SdeModel model;
  ObservableSet optimized;
  ObservableSet initial;  // with targets, for the static pre-optimization
  double T = 0.0;
};

struct RunPair {
  Ensemble pos, ref;
  IntegrateResult res;
  double wall = 0.0;
};

RunPair paired_run(const RunConfig& cfg, const SdeSetup& s, std::size_t N, std::uint32_t run) {
  const NoiseStream ns(cfg.seed, run);
  const std::size_t d = s.model.dim;
  const Ensemble Z(standard_normals(ns, 0, NoisePurpose::initial, N * d), N, d);
  // optimize the standardized draw, then shift and scale
  Ensemble Zp = Z;
  if (cfg.optimize_initial && cfg.method != Method::euler) {
    OptimizerConfig ocfg;
    ocfg.divergence_policy = DivergencePolicy::backtrack_resample;
    const Resampler resample = [&](int k) {
      return Ensemble(standard_normals(ns, static_cast<std::uint32_t>(k), NoisePurpose::resample, N * d), N, d);
    };
    Zp = optimize_initial(Z, s.initial, ocfg, resample).first;
  }
  auto place = [&](const Ensemble& E) {
    std::vector<double> x(E.data().begin(), E.data().end());
    for (double& v : x) v = cfg.init_mean + cfg.init_std * v;
    return Ensemble(std::move(x), N, d);
  };

  IntegrateOptions opt;
  opt.seed = cfg.seed;
  opt.run = run;
  opt.optimized = s.optimized;

  RunPair rp;
  const auto t0 = std::chrono::steady_clock::now();
  opt.method = cfg.method;
  rp.res = integrate(s.model, place(Zp), s.T, cfg.n_steps, opt);
  rp.wall = cfg.timing ? seconds_since(t0) : 0.0;
  rp.pos = rp.res.final;
  opt.method = Method::euler;
  rp.ref = integrate(s.model, place(Z), s.T, cfg.n_steps, opt).final;
  return rp;
}

}  // namespace

std::vector<CsvRecord> run_sde_bench(const RunConfig& cfg) {
  if (!is_sde(cfg.scenario)) throw ConfigError("run_sde_bench needs an sde scenario");
  cfg.validate();
  const int R = report_order(cfg);
  const double T = cfg.horizon_value();
  const double dt = T / static_cast<double>(cfg.n_steps);
  const std::size_t A = cfg.attempts;
  const bool laser = cfg.scenario == Scenario::sde_laser;

  // exact references
  std::vector<std::string> names;
  std::vector<int> orders;
  std::vector<double> exact;
  OuParams ou{cfg.ou_f, cfg.ou_g, cfg.ou_b, cfg.init_mean, cfg.init_std};
  if (cfg.scenario == Scenario::sde_ou) {
    const OuExact e = ou_exact_moments(ou, T, R);
    for (int m = 1; m <= R; ++m) {
      names.push_back("x^" + std::to_string(m));
      orders.push_back(m);
      exact.push_back(e.raw[m - 1]);
    }
    for (int m = 1; m <= R; ++m) {
      names.push_back("k_" + std::to_string(m));
      orders.push_back(m);
      exact.push_back(e.cumulants[m - 1]);
    }
  } else if (!laser) {
    const SteadyStateWeight w = cfg.scenario == Scenario::sde_cubic ? cubic_weight() : irregular_weight();
    for (int m = 1; m <= R; ++m) {
      names.push_back("x^" + std::to_string(m));
      orders.push_back(m);
      exact.push_back(steady_state_expectation(w, [m](double x) { return std::pow(x, m); }));
    }
    names.push_back("exp");
    orders.push_back(R + 1);
    exact.push_back(steady_state_expectation(w, [](double x) { return std::exp(x); }));
    names.push_back("abs");
    orders.push_back(R + 2);
    exact.push_back(steady_state_expectation(w, [](double x) { return std::abs(x); }));
  }

  const std::vector<double> params = laser ? cfg.laser_b : std::vector<double>{0.0};
  const std::size_t NP = params.size();
  std::vector<std::vector<CsvRecord>> out(cfg.n_samples.size() * NP * A);
  parallel_for(out.size(), cfg.workers, [&](std::size_t job) {
    const std::size_t N = cfg.n_samples[job / (NP * A)];
    const double param = params[(job / A) % NP];
    const std::size_t a = job % A;

    SdeSetup s;
    s.T = T;
    if (laser) {
      s.model = laser_model(param);
      s.optimized = cfg.laser_degree4 ? laser_observables_degree4() : laser_observables();
      s.initial = s.optimized;
      s.initial.set_targets(isotropic_normal_cross_moments(s.initial, 1.0));
    } else {
      if (cfg.scenario == Scenario::sde_ou) s.model = ou_model(ou);
      else if (cfg.scenario == Scenario::sde_cubic) s.model = cubic_model();
      else s.model = irregular_model();
      s.optimized = ObservableSet::monomials(cfg.M);
      s.initial = ObservableSet::monomials(cfg.M, normal_moments(cfg.M, 0.0, 1.0));
    }
    const RunPair rp = paired_run(cfg, s, N, static_cast<std::uint32_t>(a));

    std::string status = "ok";
    if (!rp.res.retried_steps.empty()) status = "retried=" + std::to_string(rp.res.retried_steps.size());
    auto row = [&](int m, const std::string& name, double v, double r) {
      CsvRecord rec = base_record(cfg, N, cfg.n_steps, dt, param, a);
      rec.m = m;
      rec.observable = name;
      rec.value = v;
      rec.reference = r;
      rec.iterations = rp.res.mean_iterations;
      rec.distance = rp.res.mean_distance;
      rec.wall_seconds = rp.wall;
      rec.status = status;
      out[job].push_back(std::move(rec));
    };

    if (laser) {
      const ObservableSet nobs = ObservableSet::cross_moments({{2, 0}, {0, 2}});
      const auto mp = nobs.sample_means(rp.pos);
      const auto mr = nobs.sample_means(rp.ref);
      const double nss = laser_nss(param);
      row(2, "n", std::abs(mp[0] + mp[1] - nss), std::abs(mr[0] + mr[1] - nss));
      return;
    }
    std::vector<double> vp, vr;
    const MomentVector rawp = raw_moments(rp.pos, R), rawr = raw_moments(rp.ref, R);
    vp.insert(vp.end(), rawp.begin(), rawp.end());
    vr.insert(vr.end(), rawr.begin(), rawr.end());
    if (cfg.scenario == Scenario::sde_ou) {
      const MomentVector kp = sample_cumulants(rp.pos.data(), R), kr = sample_cumulants(rp.ref.data(), R);
      vp.insert(vp.end(), kp.begin(), kp.end());
      vr.insert(vr.end(), kr.begin(), kr.end());
    } else {
      for (const Ensemble* E : {&rp.pos, &rp.ref}) {
        std::vector<double> te(E->data().begin(), E->data().end()), ta = te;
        for (double& v : te) v = std::exp(v);
        for (double& v : ta) v = std::abs(v);
        auto& dst = E == &rp.pos ? vp : vr;
        dst.push_back(mean_of(te));
        dst.push_back(mean_of(ta));
      }
    }
    for (std::size_t i = 0; i < names.size(); ++i)
      row(orders[i], names[i], std::abs(vp[i] - exact[i]), std::abs(vr[i] - exact[i]));
  });
  std::vector<CsvRecord> rows;
  for (auto& v : out) std::move(v.begin(), v.end(), std::back_inserter(rows));
  return rows;
}

std::vector<CsvRecord> run_plan(const RunConfig& cfg) {
  if (cfg.scenario != Scenario::plan) throw ConfigError("run_plan needs scenario plan");
  cfg.validate();
  ResourcePlan p;
  try {
    p = optimal_split(cfg.plan_p, cfg.plan_c, cfg.plan_sigma, cfg.plan_budget);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  std::vector<CsvRecord> rows;
  int m = 0;
  const std::pair<const char*, double> items[] = {
      {"n_samples", static_cast<double>(p.n_samples)},
      {"n_steps", static_cast<double>(p.n_steps)},
      {"n_samples_real", p.n_samples_real},
      {"n_steps_real", p.n_steps_real},
      {"eps_T", p.eps_T},
      {"eps_S", p.eps_S},
      {"eps_total", p.eps_total},
      {"eps_rounded", p.eps_rounded},
      {"ratio", p.ratio},
      {"p_eff", effective_order(cfg.plan_p)},
  };
  for (const auto& [name, v] : items) {
    CsvRecord r = base_record(cfg, p.n_samples, p.n_steps, 0.0, cfg.plan_p, 0);
    r.m = ++m;
    r.observable = name;
    r.value = v;
    r.status = "ok";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CsvRecord> run(const RunConfig& cfg) {
  cfg.validate();
  switch (cfg.scenario) {
    case Scenario::static_opt: return run_static_bench(cfg);
    case Scenario::onestep_combined:
    case Scenario::onestep_individual: return run_onestep_bench(cfg);
    case Scenario::plan: return run_plan(cfg);
    default: return run_sde_bench(cfg);
  }
}

// ---- summary -------------------------------------------------------------

Summary summarize(const std::vector<CsvRecord>& rows) {
  if (rows.empty()) throw InvalidInput("no records to summarize");
  using Key = std::tuple<std::string, std::string, std::size_t, std::size_t, double, double, int, std::string>;
  std::map<Key, std::size_t> index;
  std::vector<std::vector<const CsvRecord*>> members;
  Summary s;
  for (const auto& r : rows) {
    const Key k{r.scenario, r.method, r.n_samples, r.n_steps, r.dt, r.param, r.m, r.observable};
    auto [it, fresh] = index.try_emplace(k, s.groups.size());
    if (fresh) {
      SummaryRow g;
      g.scenario = r.scenario;
      g.method = r.method;
      g.observable = r.observable;
      g.n_samples = r.n_samples;
      g.n_steps = r.n_steps;
      g.dt = r.dt;
      g.param = r.param;
      g.m = r.m;
      s.groups.push_back(g);
      members.emplace_back();
    }
    members[it->second].push_back(&r);
  }
  for (std::size_t i = 0; i < s.groups.size(); ++i) {
    SummaryRow& g = s.groups[i];
    std::vector<double> v, ref;
    double it_sum = 0.0, d_sum = 0.0;
    for (const CsvRecord* r : members[i]) {
      v.push_back(r->value);
      ref.push_back(r->reference);
      it_sum += r->iterations;
      d_sum += r->distance;
      if (r->status.rfind("converged", 0) != 0 && r->status.rfind("ok", 0) != 0) ++g.failures;
    }
    const double n = static_cast<double>(v.size());
    g.count = v.size();
    g.mean_value = kernels::active().sum(v.data(), v.size()) / n;
    g.mean_reference = kernels::active().sum(ref.data(), ref.size()) / n;
    std::size_t z1 = 0, z2 = 0;
    g.gm_value = geometric_mean(v, &z1);
    g.gm_reference = geometric_mean(ref, &z2);
    g.zeros = z1;
    g.median = median(v);
    g.p10 = percentile(v, 10.0);
    g.p90 = percentile(v, 90.0);
    g.mean_iterations = it_sum / n;
    g.mean_distance = d_sum / n;
  }

  // slope fits over N_S (at fixed dt, param) and over dt (at fixed N_S, param),
  // using the first observable of each configuration for per-attempt metrics
  using Series = std::tuple<std::string, std::string, double, double>;
  std::map<Series, std::map<double, double>> dist_by_n, dist_by_dt;
  std::map<std::tuple<std::string, std::string, double, double, std::string>, std::map<double, double>> value_by_n;
  std::map<std::tuple<std::string, std::string, std::size_t, double, double>, int> first_m;
  for (const auto& g : s.groups) {
    auto [it, fresh] = first_m.try_emplace({g.scenario, g.method, g.n_samples, g.dt, g.param}, g.m);
    if (!fresh) it->second = std::min(it->second, g.m);
  }
  for (const auto& g : s.groups) {
    if (g.scenario == "plan") continue;
    value_by_n[{g.scenario, g.method, g.dt, g.param, g.observable}][static_cast<double>(g.n_samples)] = g.mean_value;
    if (first_m[{g.scenario, g.method, g.n_samples, g.dt, g.param}] != g.m) continue;
    if (!(g.mean_distance > 0.0)) continue;
    dist_by_n[{g.scenario, g.method, g.dt, g.param}][static_cast<double>(g.n_samples)] = g.mean_distance;
    dist_by_dt[{g.scenario, g.method, static_cast<double>(g.n_samples), g.param}][g.dt] = g.mean_distance;
  }
  auto emit = [&](const std::string& sc, const std::string& me, const std::string& what, double fixed,
                  double param, const std::map<double, double>& pts) {
    if (pts.size() < 2) return;
    std::vector<double> x, y;
    for (const auto& [k, v] : pts) {
      if (!(k > 0.0) || !(v > 0.0)) return;
      x.push_back(k);
      y.push_back(v);
    }
    s.fits.push_back({sc, me, what, fixed, param, fit_loglog(x, y)});
  };
  for (const auto& [k, pts] : dist_by_n)
    emit(std::get<0>(k), std::get<1>(k), "distance~n_samples", std::get<2>(k), std::get<3>(k), pts);
  for (const auto& [k, pts] : dist_by_dt)
    emit(std::get<0>(k), std::get<1>(k), "distance~dt", std::get<2>(k), std::get<3>(k), pts);
  for (const auto& [k, pts] : value_by_n)
    emit(std::get<0>(k), std::get<1>(k), "value~n_samples:" + std::get<4>(k), std::get<2>(k), std::get<3>(k), pts);
  return s;
}

std::string format_summary(const Summary& s) {
  std::ostringstream o;
  o << std::left << std::setw(18) << "scenario" << std::setw(11) << "method" << std::setw(10) << "n_samples"
    << std::setw(11) << "dt" << std::setw(10) << "param" << std::setw(12) << "observable" << std::right
    << std::setw(6) << "count" << std::setw(5) << "fail" << std::setw(11) << "gm_value" << std::setw(11)
    << "gm_ref" << std::setw(11) << "mean_value" << std::setw(11) << "mean_ref" << std::setw(11) << "median"
    << std::setw(11) << "p10" << std::setw(11) << "p90" << std::setw(8) << "iters" << std::setw(11)
    << "distance" << '\n';
  for (const auto& g : s.groups) {
    o << std::left << std::setw(18) << g.scenario << std::setw(11) << g.method << std::setw(10) << g.n_samples
      << std::setw(11) << sci(g.dt) << std::setw(10) << g.param << std::setw(12) << g.observable << std::right
      << std::setw(6) << g.count << std::setw(5) << g.failures << std::setw(11) << sci(g.gm_value)
      << std::setw(11) << sci(g.gm_reference) << std::setw(11) << sci(g.mean_value) << std::setw(11)
      << sci(g.mean_reference) << std::setw(11) << sci(g.median) << std::setw(11) << sci(g.p10)
      << std::setw(11) << sci(g.p90) << std::setw(8) << std::fixed << std::setprecision(2)
      << g.mean_iterations << std::setw(11) << sci(g.mean_distance) << '\n';
    o.unsetf(std::ios::fixed);
    o.precision(6);
  }
  if (!s.fits.empty()) {
    o << "\nlog-log fits (95% CI)\n";
    for (const auto& f : s.fits)
      o << std::left << std::setw(18) << f.scenario << std::setw(11) << f.method << std::setw(28) << f.what
        << "at " << sci(f.fixed) << " param " << f.param << ": slope " << f.fit.slope << " ["
        << f.fit.slope_lo << ", " << f.fit.slope_hi << "] over " << f.fit.points << " points\n";
  }
  return o.str();
}

std::string emit_summary(std::string_view csv) { return format_summary(summarize(parse_csv(csv))); }

}  // namespace pos::bench
