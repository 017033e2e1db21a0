#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "inference.hpp"
#include "io.hpp"
#include "loading_profile.hpp"
#include "model_core.hpp"
#include "rng.hpp"

namespace adaptest {

// ------------------------------------------------------------------- config

struct ExperimentConfig {
  std::string experiment = "size_power";  // size_power | length_sweep | phase_diagram

  std::size_t n = 300;
  std::size_t p = 600;
  int k_u = 5;
  int k = 5;  // sparsity of the null point beta
  std::string profile = "regular";  // regular | multiscale | subweibull
  std::size_t K = 5;
  double a = 1.0;
  double q = 1.0;
  int L = 2;
  double c0 = 1.0;
  double beta_value = 1.0;
  double noise_sd = 1.0;

  double alpha = 0.05;
  double eta = 0.1;
  std::vector<std::string> modes{"mixed"};
  std::vector<double> tau_grid{0.0, 4.0};
  std::string tau_unit = "radius";  // radius | absolute
  long long alt_reps = -1;          // negative: every replicate
  double c_xi = 2.0, c_beta = 4.0, c_pi = 4.4;
  double c2 = 1.0, c3 = 1.0, c_spike = 1.0, c_spike_tail = 1.0;
  int m_points = 16;

  double gamma_u = 0.2;
  double gamma_n = 1.0;
  std::vector<double> gx_grid{0.2, 0.6, 1.0};
  std::vector<double> gt_grid{0.0, 0.5, 1.0};

  std::size_t reps = 100;
  std::uint64_t master_seed = 1;
  int threads = 1;
  std::string output = "results";

  InferenceConfig inference() const {
    InferenceConfig c;
    c.c_xi = c_xi;
    c.c_beta = c_beta;
    c.c_pi = c_pi;
    c.c2 = c2;
    c.c3 = c3;
    c.c_spike = c_spike;
    c.c_spike_tail = c_spike_tail;
    return c;
  }
};

namespace detail {

inline std::string to_text(const std::string& v) { return v; }
inline std::string to_text(double v) { return format_double(v); }
template <class T, std::enable_if_t<std::is_integral_v<T>, int> = 0>
std::string to_text(T v) {
  return std::to_string(v);
}
inline std::string to_text(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}
inline std::string to_text(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

inline void from_text(const std::string& s, std::string& v) { v = s; }
inline void from_text(const std::string& s, double& v) { v = parse_double(s); }
template <class T, std::enable_if_t<std::is_integral_v<T>, int> = 0>
void from_text(const std::string& s, T& v) {
  const std::string t = trim(s);
  T out{};
  auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) throw ConfigError("cannot parse integer '" + t + "'");
  v = out;
}
inline void from_text(const std::string& s, std::vector<double>& v) {
  v.clear();
  if (trim(s).empty()) return;
  for (const auto& part : split(s, ',')) v.push_back(parse_double(part));
}
inline void from_text(const std::string& s, std::vector<std::string>& v) {
  v.clear();
  if (trim(s).empty()) return;
  for (const auto& part : split(s, ',')) v.push_back(trim(part));
}

struct Field {
  std::string key;
  bool semantic;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<nlohmann::json(const ExperimentConfig&)> json;
};

template <class T>
Field field(const char* key, T ExperimentConfig::*m, bool semantic = true) {
  return {key, semantic, [m](const ExperimentConfig& c) { return to_text(c.*m); },
          [m](ExperimentConfig& c, const std::string& s) { from_text(s, c.*m); },
          [m](const ExperimentConfig& c) { return nlohmann::json(c.*m); }};
}

inline const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> f = {
      field("experiment", &C::experiment), field("n", &C::n), field("p", &C::p), field("k_u", &C::k_u),
      field("k", &C::k), field("profile", &C::profile), field("K", &C::K), field("a", &C::a), field("q", &C::q),
      field("L", &C::L), field("c0", &C::c0), field("beta_value", &C::beta_value), field("noise_sd", &C::noise_sd),
      field("alpha", &C::alpha), field("eta", &C::eta), field("modes", &C::modes), field("tau_grid", &C::tau_grid),
      field("tau_unit", &C::tau_unit), field("alt_reps", &C::alt_reps), field("c_xi", &C::c_xi),
      field("c_beta", &C::c_beta), field("c_pi", &C::c_pi), field("c2", &C::c2), field("c3", &C::c3),
      field("c_spike", &C::c_spike), field("c_spike_tail", &C::c_spike_tail), field("m_points", &C::m_points),
      field("gamma_u", &C::gamma_u), field("gamma_n", &C::gamma_n), field("gx_grid", &C::gx_grid),
      field("gt_grid", &C::gt_grid), field("reps", &C::reps), field("master_seed", &C::master_seed),
      field("threads", &C::threads, false), field("output", &C::output, false)};
  return f;
}

}  // namespace detail

inline void set_field(ExperimentConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields())
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

inline void validate(const ExperimentConfig& c) {
  if (c.experiment != "size_power" && c.experiment != "length_sweep" && c.experiment != "phase_diagram")
    throw ConfigError("unknown experiment '" + c.experiment + "'");
  if (c.profile != "regular" && c.profile != "multiscale" && c.profile != "subweibull")
    throw ConfigError("unknown profile '" + c.profile + "'");
  if (c.tau_unit != "radius" && c.tau_unit != "absolute") throw ConfigError("tau_unit must be radius or absolute");
  if (c.n < 2 || c.p < 1 || c.k_u < 1 || c.k < 0) throw ConfigError("need n >= 2, p >= 1, k_u >= 1, k >= 0");
  if (static_cast<std::size_t>(c.k) > c.p) throw ConfigError("k exceeds p");
  if (!(c.alpha > 0 && c.eta > 0 && c.alpha + c.eta < 1)) throw ConfigError("need alpha, eta > 0 and alpha + eta < 1");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  if (c.m_points < 16) throw ConfigError("m_points must be at least 16");
  if (c.modes.empty()) throw ConfigError("at least one test mode is required");
  for (const auto& m : c.modes) parse_mode(m);
  if (!(c.noise_sd > 0)) throw ConfigError("noise_sd must be positive");
}

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_field(c, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

// Canonical text: sorted keys, one "key = value" per line.
inline std::string serialize_config(const ExperimentConfig& c, bool semantic_only = false) {
  std::map<std::string, std::string> kv;
  for (const auto& f : detail::fields())
    if (!semantic_only || f.semantic) kv[f.key] = f.get(c);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

// FNV-1a 64 over the canonical semantic serialization.
inline std::string config_digest(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(c, true)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : detail::fields()) j[f.key] = f.json(c);
  j["digest"] = config_digest(c);
  return j;
}

// ------------------------------------------------------------------ results

struct ResultRow {
  std::string digest;
  long long replicate = -1;  // -1 on aggregate rows
  std::string metric, label;
  double x = 0, y = 0;
  double value = 0;
  double se = std::numeric_limits<double>::quiet_NaN();  // aggregates only
};

struct ResultTable {
  std::vector<ResultRow> rows;     // one per replicate and metric
  std::vector<ResultRow> summary;  // aggregates with standard errors
};

inline void write_rows(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "digest,replicate,metric,label,x,y,value,se\n";
  for (const auto& r : rows) {
    os << r.digest << ',' << r.replicate << ',' << r.metric << ',' << r.label << ',' << format_double(r.x) << ','
       << format_double(r.y) << ',' << format_double(r.value) << ',';
    if (!std::isnan(r.se)) os << format_double(r.se);
    os << '\n';
  }
}

inline void write_plotdata(std::ostream& os, const std::vector<ResultRow>& summary) {
  os << "series,x,y,se\n";
  for (const auto& r : summary) {
    std::string series = r.metric;
    if (!r.label.empty()) series += ":" + r.label;
    if (r.y != 0) series += ":y=" + format_double(r.y);
    os << series << ',' << format_double(r.x) << ',' << format_double(r.value) << ','
       << (std::isnan(r.se) ? std::string() : format_double(r.se)) << '\n';
  }
}

// Writes results.csv, summary.csv and config.json (plus plotdata.csv) into dir.
inline void write_table(const ResultTable& t, const ExperimentConfig& c, const std::filesystem::path& dir,
                        bool plotdata = false) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw ConfigError(std::string("cannot write ") + (dir / name).string());
    return os;
  };
  {
    auto os = open("results.csv");
    write_rows(os, t.rows);
  }
  {
    auto os = open("summary.csv");
    write_rows(os, t.summary);
  }
  {
    auto os = open("config.json");
    os << config_json(c).dump(2) << '\n';
  }
  if (plotdata) {
    auto os = open("plotdata.csv");
    write_plotdata(os, t.summary);
  }
}

// ------------------------------------------------------------- worker pool

// Runs f(0..count-1) on up to `threads` workers. Work items write into
// caller-owned slots, so output order never depends on scheduling. The
// exception of the lowest failing index is rethrown.
template <class F>
void parallel_for(std::size_t count, int threads, F&& f) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t err_index = count;
  std::exception_ptr err;
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------- builders

inline LoadingVector make_xi(const ExperimentConfig& c) {
  if (c.profile == "regular") return regular_profile(c.K, c.a, c.p);
  if (c.profile == "multiscale") return multiscale_profile(c.k_u, c.L, c.a, c.c0, c.p);
  return subweibull_profile(c.q, c.p, stream_seed(c.master_seed, 5));
}

// Fixed null point: k-sparse beta with entries +-beta_value on a seeded support, Sigma = I.
inline ModelParams make_null_point(const ExperimentConfig& c, std::size_t p, int k) {
  Rng rng(stream_seed(c.master_seed, 0));
  ModelParams th;
  th.beta = Vec::Zero(static_cast<Eigen::Index>(p));
  for (auto j : rng.subset(p, static_cast<std::size_t>(k)))
    th.beta(static_cast<Eigen::Index>(j)) = (rng.bernoulli(0.5) ? 1.0 : -1.0) * c.beta_value;
  th.sigma_cov = Mat::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  th.noise_sd = c.noise_sd;
  return th;
}

inline double binomial_se(double rate, std::size_t count) {
  return count ? std::sqrt(rate * (1 - rate) / static_cast<double>(count)) : 0.0;
}

inline std::pair<double, double> mean_se(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double s = 0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  const double se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
  return {m, se};
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// -------------------------------------------------------------- size/power

// Null data come from the fixed null point and are tested at t0 = xi'beta.
// Alternative data use an independent stream and are tested at
// t0 = xi'beta -+ tau (sign alternating over replicates), tau on the grid in
// absolute units or as a multiple of the median null radius of that mode.
inline ResultTable run_size_power(const ExperimentConfig& c) {
  validate(c);
  ResultTable out;
  if (c.reps == 0) return out;
  const std::string dg = config_digest(c);
  const LoadingVector xi = make_xi(c);
  const ModelParams th = make_null_point(c, c.p, c.k);
  const double truth = xi.original().dot(th.beta);
  const InferenceConfig icfg = c.inference();
  std::vector<TestMode> modes;
  for (const auto& m : c.modes) modes.push_back(parse_mode(m));
  const std::size_t nm = modes.size();
  const std::size_t alt_n = c.alt_reps < 0 ? c.reps : std::min<std::size_t>(c.reps, static_cast<std::size_t>(c.alt_reps));

  std::vector<ConfidenceInterval> null_ci(c.reps * nm), alt_ci(alt_n * nm);
  parallel_for(c.reps, c.threads, [&](std::size_t r) {
    const Dataset dn = generate_dataset(th, c.n, stream_seed(c.master_seed, 1, r));
    std::optional<Dataset> da;
    if (r < alt_n) da = generate_dataset(th, c.n, stream_seed(c.master_seed, 2, r));
    TestProblem pr{xi, truth, c.k_u, c.alpha, c.eta};
    for (std::size_t m = 0; m < nm; ++m) {
      const auto split = stream_seed(c.master_seed, 3, r);
      null_ci[r * nm + m] = run_test(dn, pr, modes[m], icfg, split).interval;
      if (da) alt_ci[r * nm + m] = run_test(*da, pr, modes[m], icfg, stream_seed(c.master_seed, 4, r)).interval;
    }
  });

  for (std::size_t m = 0; m < nm; ++m) {
    const std::string label = to_string(modes[m]);
    std::vector<double> radii;
    std::size_t rej = 0;
    for (std::size_t r = 0; r < c.reps; ++r) {
      const auto& ci = null_ci[r * nm + m];
      radii.push_back(ci.radius);
      const bool reject = !ci.contains(truth);
      rej += reject;
      const auto rr = static_cast<long long>(r);
      out.rows.push_back({dg, rr, "null_center", label, 0, 0, ci.center});
      out.rows.push_back({dg, rr, "null_radius", label, 0, 0, ci.radius});
      out.rows.push_back({dg, rr, "reject_null", label, 0, 0, reject ? 1.0 : 0.0});
    }
    const double med = median(radii);
    const double size = static_cast<double>(rej) / static_cast<double>(c.reps);
    out.summary.push_back({dg, -1, "size", label, 0, 0, size, binomial_se(size, c.reps)});
    const auto [mr, mse] = mean_se(radii);
    out.summary.push_back({dg, -1, "mean_radius", label, 0, 0, mr, mse});
    out.summary.push_back({dg, -1, "median_radius", label, 0, 0, med, 0.0});
    if (alt_n == 0) continue;
    for (double mult : c.tau_grid) {
      const double tau = c.tau_unit == "radius" ? mult * med : mult;
      std::size_t hits = 0;
      for (std::size_t r = 0; r < alt_n; ++r) {
        const double t0 = truth - (r % 2 == 0 ? tau : -tau);
        const bool reject = !alt_ci[r * nm + m].contains(t0);
        hits += reject;
        out.rows.push_back({dg, static_cast<long long>(r), "reject_alt", label, tau, mult, reject ? 1.0 : 0.0});
      }
      const double pw = static_cast<double>(hits) / static_cast<double>(alt_n);
      out.summary.push_back({dg, -1, "power", label, tau, mult, pw, binomial_se(pw, alt_n)});
    }
  }
  return out;
}

// ------------------------------------------------------------ length sweep

inline std::vector<std::size_t> length_grid(std::size_t p, int points, std::size_t m_star) {
  auto g = cutoff_grid(p, points, m_star);
  for (int i = 0; i < points; ++i)
    g.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(p) * i / std::max(points - 1, 1))));
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

inline ResultTable run_length_sweep(const ExperimentConfig& c) {
  validate(c);
  ResultTable out;
  if (c.reps == 0) return out;
  const std::string dg = config_digest(c);
  const LoadingVector xi = make_xi(c);
  const ModelParams th = make_null_point(c, c.p, c.k);
  const InferenceConfig icfg = c.inference();
  const std::size_t m_star = cutoff_m_star(c.k_u, static_cast<double>(c.n), c.p);
  const auto grid = length_grid(c.p, c.m_points, m_star);
  const double ac = component_alpha(c.alpha, c.eta);
  std::vector<double> radius(c.reps * grid.size());
  parallel_for(c.reps, c.threads, [&](std::size_t r) {
    const Dataset d = generate_dataset(th, c.n, stream_seed(c.master_seed, 1, r));
    const MixedContext ctx = prepare_mixed(d, icfg);
    for (std::size_t g = 0; g < grid.size(); ++g)
      radius[r * grid.size() + g] = mixed_ci(d, ctx, xi, grid[g], c.k_u, ac, icfg).radius;
  });
  std::size_t best = 0;
  double best_mean = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> v;
    for (std::size_t r = 0; r < c.reps; ++r) {
      v.push_back(radius[r * grid.size() + g]);
      out.rows.push_back({dg, static_cast<long long>(r), "radius", "mixed", static_cast<double>(grid[g]), 0, v.back()});
    }
    const auto [m, se] = mean_se(v);
    out.summary.push_back({dg, -1, "mean_radius", "mixed", static_cast<double>(grid[g]), 0, m, se});
    if (m < best_mean) {
      best_mean = m;
      best = grid[g];
    }
  }
  out.summary.push_back({dg, -1, "argmin_m", "mixed", 0, 0, static_cast<double>(best), 0.0});
  out.summary.push_back({dg, -1, "m_star", "mixed", 0, 0, static_cast<double>(m_star), 0.0});
  return out;
}

// ----------------------------------------------------------- phase diagram

struct PhaseSetting {
  double gx, gt;
  std::size_t n, K;
  int k_u, k;
  double tau;
  PhaseCell cell;
};

// Cell geometry for a flat loading with K = p^gx, a = 1, n = p^gn,
// k_u = p^gu and sqrt(n) tau = p^gt.
inline PhaseSetting phase_setting(const ExperimentConfig& c, double gx, double gt) {
  const double p = static_cast<double>(c.p);
  PhaseSetting s;
  s.gx = gx;
  s.gt = gt;
  s.n = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(std::pow(p, c.gamma_n))));
  s.K = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(std::pow(p, gx))), 1, c.p);
  s.k_u = std::max(1, static_cast<int>(std::llround(std::pow(p, c.gamma_u))));
  s.k = std::min(c.k, s.k_u);
  s.tau = std::pow(p, gt) / std::sqrt(static_cast<double>(s.n));
  s.cell = regular_phase(gx, c.gamma_u, c.gamma_n, gt);
  return s;
}

inline ResultTable run_phase_diagram(const ExperimentConfig& c) {
  validate(c);
  ResultTable out;
  const std::string dg = config_digest(c);
  std::vector<PhaseSetting> cells;
  for (double gx : c.gx_grid)
    for (double gt : c.gt_grid) cells.push_back(phase_setting(c, gx, gt));
  const InferenceConfig icfg = c.inference();
  const std::size_t total = cells.size() * c.reps;
  std::vector<double> reject(total);
  parallel_for(total, c.threads, [&](std::size_t idx) {
    const std::size_t ci = idx / c.reps, r = idx % c.reps;
    const auto& s = cells[ci];
    const LoadingVector xi = regular_profile(s.K, 1.0, c.p);
    const ModelParams th = make_null_point(c, c.p, s.k);
    const double truth = xi.original().dot(th.beta);
    const Dataset d = generate_dataset(th, s.n, stream_seed(stream_seed(c.master_seed, 6, ci), r));
    const double t0 = truth - (r % 2 == 0 ? s.tau : -s.tau);
    TestProblem pr{xi, t0, s.k_u, c.alpha, c.eta};
    reject[idx] = mixed_test(d, pr, icfg).reject ? 1.0 : 0.0;
  });
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto& s = cells[ci];
    const std::string label = to_string(s.cell.region);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < c.reps; ++r) {
      const double v = reject[ci * c.reps + r];
      hits += v > 0;
      out.rows.push_back({dg, static_cast<long long>(r), "reject", label, s.gx, s.gt, v});
    }
    if (c.reps == 0) continue;
    const double pw = static_cast<double>(hits) / static_cast<double>(c.reps);
    out.summary.push_back({dg, -1, "power", label, s.gx, s.gt, pw, binomial_se(pw, c.reps)});
  }
  return out;
}

inline ResultTable run_experiment(const ExperimentConfig& c) {
  if (c.experiment == "size_power") return run_size_power(c);
  if (c.experiment == "length_sweep") return run_length_sweep(c);
  if (c.experiment == "phase_diagram") return run_phase_diagram(c);
  throw ConfigError("unknown experiment '" + c.experiment + "'");
}

}  // namespace adaptest
