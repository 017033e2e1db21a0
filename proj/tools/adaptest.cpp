#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>

#include "adaptest/adaptest.hpp"

namespace fs = std::filesystem;
using namespace adaptest;

namespace {

// key = value file for the single-shot subcommands; unknown keys are errors.
class KeyValues {
 public:
  explicit KeyValues(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::string line;
    while (std::getline(in, line)) {
      const std::string body = trim(line.substr(0, line.find('#')));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key = value: '" + body + "'");
      kv_[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
    }
  }

  std::string str(const std::string& k, const std::string& def) {
    used_.insert(k);
    auto it = kv_.find(k);
    return it == kv_.end() ? def : it->second;
  }
  double num(const std::string& k, double def) {
    auto s = str(k, "");
    return s.empty() ? def : parse_double(s);
  }
  long long integer(const std::string& k, long long def) {
    auto s = str(k, "");
    if (s.empty()) return def;
    long long v = 0;
    detail::from_text(s, v);
    return v;
  }
  std::vector<double> list(const std::string& k, std::vector<double> def) {
    auto s = str(k, "");
    if (s.empty()) return def;
    std::vector<double> v;
    detail::from_text(s, v);
    return v;
  }
  void finish() const {
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> used_;
};

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + (dir / name).string());
  return os;
}

LoadingVector loading_from(KeyValues& kv, std::size_t p, int k_u, std::uint64_t seed) {
  const std::string prof = kv.str("profile", "regular");
  if (prof == "regular") return regular_profile(static_cast<std::size_t>(kv.integer("K", 5)), kv.num("a", 1.0), p);
  if (prof == "multiscale")
    return multiscale_profile(k_u, static_cast<int>(kv.integer("L", 2)), kv.num("a", 1.0), kv.num("c0", 1.0), p);
  if (prof == "subweibull") return subweibull_profile(kv.num("q", 1.0), p, seed);
  if (prof == "file") {
    std::ifstream in(kv.str("xi_file", ""));
    if (!in) throw ConfigError("cannot open xi_file");
    const auto t = read_csv(in);
    Vec v(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) v(static_cast<Eigen::Index>(i)) = t.rows[i].at(0);
    return make_loading(v);
  }
  throw ConfigError("unknown profile '" + prof + "'");
}

Dataset data_from(KeyValues& kv, std::uint64_t seed) {
  const std::string path = kv.str("data", "");
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open data '" + path + "'");
    return fs::path(path).extension() == ".csv" ? read_dataset_csv(in) : read_dataset_binary(in);
  }
  ExperimentConfig c;
  c.n = static_cast<std::size_t>(kv.integer("n", 300));
  c.p = static_cast<std::size_t>(kv.integer("p", 600));
  c.k = static_cast<int>(kv.integer("k", 5));
  c.beta_value = kv.num("beta_value", 1.0);
  c.noise_sd = kv.num("noise_sd", 1.0);
  c.master_seed = seed;
  return generate_dataset(make_null_point(c, c.p, c.k), c.n, stream_seed(seed, 1));
}

int cmd_profile(KeyValues& kv, std::uint64_t seed, const fs::path& out) {
  const auto p = static_cast<std::size_t>(kv.integer("p", 1000));
  const auto n = static_cast<std::size_t>(kv.integer("n", 500));
  const int k_u = static_cast<int>(kv.integer("k_u", 10));
  const int D = static_cast<int>(kv.integer("D", 1));
  const auto xi = loading_from(kv, p, k_u, seed);
  kv.finish();
  const auto s = regime_and_cutoff(xi, k_u, n, xi.size(), D);
  const auto rb = rate_bounds(xi, k_u, n, xi.size());
  auto os = open_out(out, "profile.csv");
  os << "zeta,lambda,j1,nu1,nu2,nu3,k_eff,m_star,regime,upper,lower,argmin_m\n"
     << format_double(s.zeta) << ',' << format_double(s.lambda) << ',' << s.j1 << ',' << format_double(s.nu1) << ','
     << format_double(s.nu2) << ',' << format_double(s.nu3) << ',' << s.k_eff << ',' << s.m_star << ','
     << to_string(s.regime) << ',' << format_double(rb.upper) << ',' << format_double(rb.lower) << ',' << rb.argmin_m
     << '\n';
  return 0;
}

int cmd_fit(KeyValues& kv, std::uint64_t seed, const fs::path& out) {
  const Dataset d = data_from(kv, seed);
  kv.finish();
  const auto fit = scaled_lasso(d);
  auto os = open_out(out, "fit.csv");
  os << "sigma_hat,outer_iterations,converged\n"
     << format_double(fit.sigma_hat) << ',' << fit.iterations << ',' << (fit.converged ? 1 : 0) << '\n';
  auto ob = open_out(out, "beta_hat.csv");
  ob << "index,beta_hat\n";
  for (Eigen::Index j = 0; j < fit.beta_hat.size(); ++j) ob << j << ',' << format_double(fit.beta_hat(j)) << '\n';
  return 0;
}

int cmd_test(KeyValues& kv, std::uint64_t seed, const fs::path& out) {
  const Dataset d = data_from(kv, seed);
  TestProblem pr;
  pr.k_u = static_cast<int>(kv.integer("k_u", 5));
  pr.xi = loading_from(kv, d.p(), pr.k_u, stream_seed(seed, 5));
  if (pr.xi.size() != d.p()) throw ConfigError("loading length does not match the data");
  pr.t0 = kv.num("t0", 0.0);
  pr.alpha = kv.num("alpha", 0.05);
  pr.eta = kv.num("eta", 0.1);
  const TestMode mode = parse_mode(kv.str("mode", "mixed"));
  kv.finish();
  const auto dec = run_test(d, pr, mode, InferenceConfig{}, stream_seed(seed, 3));
  auto os = open_out(out, "test.csv");
  os << "mode,t0,center,radius,lower,upper,reject,m_used\n"
     << to_string(mode) << ',' << format_double(pr.t0) << ',' << format_double(dec.interval.center) << ','
     << format_double(dec.interval.radius) << ',' << format_double(dec.interval.lower()) << ','
     << format_double(dec.interval.upper()) << ',' << (dec.reject ? 1 : 0) << ',' << dec.m_used << '\n';
  return 0;
}

int cmd_prior(KeyValues& kv, std::uint64_t seed, const fs::path& out) {
  const std::string kind = kv.str("kind", "nu2");
  const auto p = static_cast<std::size_t>(kv.integer("p", 500));
  const auto n = static_cast<std::size_t>(kv.integer("n", 2000));
  const int k_u = static_cast<int>(kv.integer("k_u", 32));
  const auto draws = static_cast<std::size_t>(kv.integer("draws", 100));
  const auto xi = loading_from(kv, p, k_u, stream_seed(seed, 5));
  Nu2Options o2;
  o2.c1 = kv.num("c1", o2.c1);
  o2.c2 = kv.num("c2", o2.c2);
  Nu1Options o1;
  o1.c4 = kv.num("c4", o1.c4);
  o1.c5 = kv.num("c5", o1.c5);
  const double tau1 = kv.num("tau", -1);
  CompOptions oc;
  oc.c8 = kv.num("c8", oc.c8);
  oc.c9 = kv.num("c9", oc.c9);
  oc.degree = static_cast<int>(kv.integer("D", 1));
  kv.finish();
  auto os = open_out(out, "prior.csv");
  os << "draw,kind,valid,reason,kappa,tau,residual,beta_nnz,lambda_min,lambda_max,noise_sd\n";
  const double t1 = tau1 > 0 ? tau1 : nu1_default_tau(xi, k_u, n, o1);
  for (std::size_t i = 0; i < draws; ++i) {
    const auto s = stream_seed(seed, 7, i);
    PriorDraw d;
    if (kind == "nu2")
      d = sample_nu2_prior(xi, k_u, n, s, o2);
    else if (kind == "nu1")
      d = sample_nu1_prior(xi, k_u, n, t1, s, o1);
    else if (kind == "comp")
      d = sample_comp_prior(xi, k_u, n, s, oc);
    else
      throw ConfigError("unknown prior kind '" + kind + "'");
    os << i << ',' << to_string(d.kind) << ',' << (d.valid ? 1 : 0) << ',' << d.reason << ','
       << format_double(d.kappa) << ',' << format_double(d.tau) << ',' << format_double(d.residual) << ','
       << d.beta_nnz << ',' << format_double(d.lambda_min) << ',' << format_double(d.lambda_max) << ','
       << format_double(d.theta.noise_sd) << '\n';
  }
  return 0;
}

int cmd_lowdeg(KeyValues& kv, std::uint64_t seed, const fs::path& out) {
  const auto draws = static_cast<std::size_t>(kv.integer("draws", 200));
  const int D = static_cast<int>(kv.integer("D", 2));
  const auto chi_reps = static_cast<std::size_t>(kv.integer("chi2_reps", 2000));
  CompOptions oc;
  oc.c8 = kv.num("c8", 0.3);
  const std::size_t n = 2, p = 3;
  Vec raw(3);
  raw << kv.num("xi1", 1.0), kv.num("xi2", 1.0), kv.num("xi3", 1.0);
  kv.finish();
  const auto xi = make_loading(raw);
  const auto lay = tiny_comp_layout();
  auto draw = [&](std::uint64_t s) { return sample_comp_layout(xi, lay, n, s, oc); };
  std::vector<PriorDraw> pool;
  for (std::size_t i = 0; pool.size() < draws && i < 100 * draws; ++i) {
    auto d = draw(stream_seed(seed, 8, i));
    if (d.valid) pool.push_back(d);
  }
  const auto ld = ld_profile(pool, D, n);
  const auto ref = null_point(p, oc.bounds.sigma_star());
  const auto chi = chi2_mixture_mc(valid_cov_sampler(draw), ref, n, chi_reps, stream_seed(seed, 9));
  auto os = open_out(out, "lowdeg.csv");
  os << "D,ld,chi2,chi2_se,log_bound\n";
  for (int k = 0; k <= D; ++k)
    os << k << ',' << format_double(ld[static_cast<std::size_t>(k)]) << ',' << format_double(chi.mean) << ','
       << format_double(chi.se) << ',' << format_double(ld_uniform_bound(n, p, std::max(k, 1))) << '\n';
  return 0;
}

int cmd_scca(KeyValues& kv, std::uint64_t seed, const fs::path& out) {
  const std::string mode = kv.str("mode", "stats");
  SccaParams prm;
  prm.n = static_cast<std::size_t>(kv.integer("n", 4000));
  prm.s = static_cast<std::size_t>(kv.integer("s", 2));
  prm.p1 = static_cast<std::size_t>(kv.integer("p1", 10));
  prm.p2 = static_cast<std::size_t>(kv.integer("p2", 40));
  prm.lambda = kv.num("lambda", 0.0);
  const Hypothesis h = kv.str("hypothesis", "null") == "alt" ? Hypothesis::alt : Hypothesis::null;
  const double big_c = kv.num("big_c", 1.0);
  const auto reps = static_cast<std::size_t>(kv.integer("reps", 200));
  const auto calib = static_cast<std::size_t>(kv.integer("calibration_reps", 500));
  const auto lambdas = kv.list("lambdas", {0.0, 0.05, 0.1});
  const double sigma_star = kv.num("sigma_star", 5.0), c10 = kv.num("c10", 0.5), t0 = kv.num("t0", 0.0);
  kv.finish();
  if (mode == "generate") {
    const auto in = gen_scca(prm, h, seed);
    auto os = open_out(out, "scca.csv");
    os << "block,row,col,value\n";
    for (Eigen::Index i = 0; i < in.u1.rows(); ++i) {
      for (Eigen::Index j = 0; j < in.u1.cols(); ++j) os << "u1," << i << ',' << j << ',' << format_double(in.u1(i, j)) << '\n';
      for (Eigen::Index j = 0; j < in.u2.cols(); ++j) os << "u2," << i << ',' << j << ',' << format_double(in.u2(i, j)) << '\n';
    }
  } else if (mode == "reduce") {
    const auto red = reduce_to_lt(gen_scca(prm, h, seed), sigma_star, c10, t0, stream_seed(seed, 1));
    auto os = open_out(out, "reduced.csv");
    write_dataset_csv(red.data, os);
    auto om = open_out(out, "reduction.csv");
    om << "tau_red,beta0_1,k_u,t0\n"
       << format_double(red.tau_red) << ',' << format_double(red.beta0(0)) << ',' << red.problem.k_u << ','
       << format_double(t0) << '\n';
  } else if (mode == "stats") {
    SccaValues c;
    c.fill(big_c);
    const auto rep = evaluate(gen_scca(prm, h, seed), c);
    auto os = open_out(out, "stats.csv");
    os << "statistic,value,threshold,decision\n";
    for (std::size_t k = 0; k < 5; ++k)
      os << to_string(kSccaStats[k]) << ',' << format_double(rep.value[k]) << ',' << format_double(rep.threshold[k])
         << ',' << (rep.decision[k] ? 1 : 0) << '\n';
  } else if (mode == "sweep") {
    const auto c = calibrate_scca(prm, calib, 0.05, stream_seed(seed, 1));
    auto os = open_out(out, "sweep.csv");
    os << "statistic,lambda,power,se\n";
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      SccaParams q = prm;
      q.lambda = lambdas[li];
      const auto pw = scca_power(q, Hypothesis::alt, c, reps, stream_seed(seed, 2, li));
      for (std::size_t k = 0; k < 5; ++k)
        os << to_string(kSccaStats[k]) << ',' << format_double(q.lambda) << ',' << format_double(pw[k]) << ','
           << format_double(binomial_se(pw[k], reps)) << '\n';
    }
  } else {
    throw ConfigError("unknown scca mode '" + mode + "'");
  }
  return 0;
}

int cmd_simulate(const std::string& config, const std::optional<std::uint64_t>& seed, const fs::path& out,
                 bool plot, const std::optional<int>& threads) {
  ExperimentConfig c;
  if (!config.empty()) c = load_config(config);
  if (seed) c.master_seed = *seed;
  if (threads) c.threads = *threads;
  validate(c);
  const auto t = run_experiment(c);
  write_table(t, c, out.empty() ? fs::path(c.output) : out, plot);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptest: adaptive inference for linear functionals in sparse Gaussian regression"};
  app.require_subcommand(1);
  std::string config, out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool plot = false;
  const std::vector<std::string> names{"profile", "fit", "test", "prior", "lowdeg", "scca", "simulate"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "key = value configuration file");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out, "output directory");
    sub->add_flag("--emit-plotdata", plot, "write (x, y, se) plot data");
    if (name == "simulate") sub->add_option("--threads", threads, "worker threads");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "simulate") return cmd_simulate(config, seed, out, plot, threads);
    KeyValues kv(config);
    const auto cfg_seed = static_cast<std::uint64_t>(kv.integer("seed", 1));
    const std::uint64_t s = seed ? *seed : cfg_seed;
    if (cmd == "profile") return cmd_profile(kv, s, out);
    if (cmd == "fit") return cmd_fit(kv, s, out);
    if (cmd == "test") return cmd_test(kv, s, out);
    if (cmd == "prior") return cmd_prior(kv, s, out);
    if (cmd == "lowdeg") return cmd_lowdeg(kv, s, out);
    return cmd_scca(kv, s, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
