#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "estimators.hpp"
#include "loading_profile.hpp"
#include "numerics.hpp"

namespace adaptest {

struct ConfidenceInterval {
  double center = 0;
  double radius = 0;
  double level = 1;
  std::vector<std::pair<std::string, double>> budget;  // error budget per component
  bool infeasible_projection = false;

  double lower() const { return center - radius; }
  double upper() const { return center + radius; }
  bool contains(double t) const { return std::abs(t - center) <= radius; }
};

inline ConfidenceInterval minkowski(const ConfidenceInterval& a, const ConfidenceInterval& b) {
  ConfidenceInterval c;
  c.center = a.center + b.center;
  c.radius = a.radius + b.radius;
  c.level = 1 - ((1 - a.level) + (1 - b.level));
  c.budget = a.budget;
  c.budget.insert(c.budget.end(), b.budget.begin(), b.budget.end());
  c.infeasible_projection = a.infeasible_projection || b.infeasible_projection;
  return c;
}

struct TestDecision {
  bool reject = false;
  ConfidenceInterval interval;
  std::size_t m_used = 0;
  double t0 = 0;
};

inline TestDecision decide(const ConfidenceInterval& ci, double t0, std::size_t m) {
  return {std::abs(t0 - ci.center) > ci.radius, ci, m, t0};
}

enum class TestMode { mixed, plugin, debiased, known_sigma, spiked };

inline TestMode parse_mode(const std::string& s) {
  if (s == "mixed") return TestMode::mixed;
  if (s == "plugin") return TestMode::plugin;
  if (s == "debiased") return TestMode::debiased;
  if (s == "known_sigma") return TestMode::known_sigma;
  if (s == "spiked") return TestMode::spiked;
  throw ConfigError("unknown test mode '" + s + "'");
}

inline const char* to_string(TestMode m) {
  switch (m) {
    case TestMode::mixed: return "mixed";
    case TestMode::plugin: return "plugin";
    case TestMode::debiased: return "debiased";
    case TestMode::known_sigma: return "known_sigma";
    default: return "spiked";
  }
}

struct InferenceConfig {
  double c_xi = 2.0;
  double c_beta = 4.0;
  double c_pi = 4.4;
  double c2 = 1.0, c3 = 1.0;                 // known-covariance radius constants
  double c_spike = 1.0, c_spike_tail = 1.0;  // spiked radius constants
  bool scan_all_m = false;
  int scan_grid = 32;
  ScaledLassoOptions lasso;
  ProjectionOptions projection;
  SpikedOptions spiked;
};

// ---------------------------------------------------------------- intervals

inline ConfidenceInterval plugin_ci(const ScaledLassoFit& fit, const Vec& xi, int k_u, std::size_t n, std::size_t p,
                                    double alpha, double c_pi) {
  ConfidenceInterval ci;
  ci.center = xi.dot(fit.beta_hat);
  const double linf = xi.size() ? xi.cwiseAbs().maxCoeff() : 0.0;
  ci.radius = c_pi * fit.sigma_hat * linf * k_u *
              std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
  ci.level = 1 - alpha;
  ci.budget = {{"plugin", alpha}};
  return ci;
}

inline ConfidenceInterval debiased_ci(const Dataset& d, const ScaledLassoFit& fit, const ProjectionResult& proj,
                                      const Vec& xi, int k_u, double alpha, double c_xi, double c_beta) {
  const double n = static_cast<double>(d.n());
  const double lp = std::log(static_cast<double>(d.p()));
  ConfidenceInterval ci;
  const Vec resid = d.y - d.x * fit.beta_hat;
  ci.center = xi.dot(fit.beta_hat);
  if (proj.feasible && proj.u_hat.squaredNorm() > 0) ci.center += (d.x * proj.u_hat).dot(resid) / n;
  const double z = normal_quantile(1 - alpha / 8);
  const double obj = proj.feasible ? std::max(proj.objective, 0.0) : 0.0;
  ci.radius = 1.1 * fit.sigma_hat * (std::sqrt(obj) / std::sqrt(n) * z + c_beta * c_xi * xi.norm() * k_u * lp / n);
  ci.level = 1 - alpha;
  ci.budget = {{"debiased", alpha}};
  ci.infeasible_projection = !proj.feasible;
  return ci;
}

// Fitted quantities shared by every cutoff m on one dataset.
struct MixedContext {
  ScaledLassoFit fit;
  Mat s_hat;
};

inline MixedContext prepare_mixed(const Dataset& d, const InferenceConfig& cfg) {
  return {scaled_lasso(d, cfg.lasso), sample_cov(d)};
}

// Top-m part (in magnitude order) and remainder, both in original coordinates.
inline std::pair<Vec, Vec> split_loading(const LoadingVector& xi, std::size_t m) {
  Vec head = Vec::Zero(static_cast<Eigen::Index>(xi.size())), tail = head;
  for (std::size_t j = 0; j < xi.size(); ++j) {
    const auto o = static_cast<Eigen::Index>(xi.perm[j]);
    (j < m ? head : tail)(o) = xi.coords(static_cast<Eigen::Index>(j));
  }
  return {head, tail};
}

inline double component_alpha(double alpha, double eta) { return std::min(alpha, eta) / 4; }

inline ConfidenceInterval mixed_ci(const Dataset& d, const MixedContext& ctx, const LoadingVector& xi, std::size_t m,
                                   int k_u, double alpha_component, const InferenceConfig& cfg) {
  if (m > xi.size()) throw ConfigError("cutoff m exceeds p");
  auto [head, tail] = split_loading(xi, m);
  const ProjectionResult proj = projection_direction(ctx.s_hat, head, cfg.c_xi, d.n(), cfg.projection);
  const auto db = debiased_ci(d, ctx.fit, proj, head, k_u, alpha_component, cfg.c_xi, cfg.c_beta);
  const auto pl = plugin_ci(ctx.fit, tail, k_u, d.n(), d.p(), alpha_component, cfg.c_pi);
  return minkowski(db, pl);
}

// Log-spaced cutoffs in {0..p}, always containing 0, p and extra.
inline std::vector<std::size_t> cutoff_grid(std::size_t p, int points, std::size_t extra) {
  std::vector<std::size_t> g{0, p, std::min(extra, p)};
  for (int i = 0; i < points; ++i) {
    const double v = std::exp(std::log(static_cast<double>(p)) * i / std::max(points - 1, 1));
    g.push_back(std::min(p, static_cast<std::size_t>(std::llround(v))));
  }
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

inline TestDecision mixed_test(const Dataset& d, const MixedContext& ctx, const TestProblem& pr,
                               const InferenceConfig& cfg) {
  pr.validate();
  const double ac = component_alpha(pr.alpha, pr.eta);
  const std::size_t m_star = cutoff_m_star(pr.k_u, static_cast<double>(d.n()), d.p());
  if (!cfg.scan_all_m) return decide(mixed_ci(d, ctx, pr.xi, m_star, pr.k_u, ac, cfg), pr.t0, m_star);
  std::optional<ConfidenceInterval> best;
  std::size_t best_m = 0;
  for (auto m : cutoff_grid(d.p(), cfg.scan_grid, m_star)) {
    auto ci = mixed_ci(d, ctx, pr.xi, m, pr.k_u, ac, cfg);
    if (!best || ci.radius < best->radius) {
      best = ci;
      best_m = m;
    }
  }
  return decide(*best, pr.t0, best_m);
}

inline TestDecision mixed_test(const Dataset& d, const TestProblem& pr, const InferenceConfig& cfg = {}) {
  return mixed_test(d, prepare_mixed(d, cfg), pr, cfg);
}

// -------------------------------------------------------- sample splitting

inline std::pair<Dataset, Dataset> split_halves(const Dataset& d, std::uint64_t seed) {
  if (d.n() % 2 != 0) throw OddSampleSize("sample splitting needs an even n");
  Rng rng(seed);
  auto perm = rng.permutation(d.n());
  const std::size_t h = d.n() / 2;
  std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(h));
  std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(h), perm.end());
  return {d.rows(a), d.rows(b)};
}

// Center xi'b + n2^{-1} xi' W X2'(Y2 - X2 b) for a weight matrix W.
inline double split_center(const Dataset& half2, const Vec& beta_hat, const Vec& w_xi, const Vec& xi) {
  const Vec resid = half2.y - half2.x * beta_hat;
  return xi.dot(beta_hat) + (half2.x * w_xi).dot(resid) / static_cast<double>(half2.n());
}

inline ConfidenceInterval known_sigma_ci(const Dataset& d, const Mat& sigma0, const Vec& xi, int /*k_u*/,
                                         double alpha, std::uint64_t seed, const InferenceConfig& cfg = {}) {
  auto [h1, h2] = split_halves(d, seed);
  const auto fit = scaled_lasso(h1, cfg.lasso);
  Eigen::LLT<Mat> llt(sigma0);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("known covariance is not positive definite");
  ConfidenceInterval ci;
  ci.center = split_center(h2, fit.beta_hat, llt.solve(xi), xi);
  ci.radius = 1.1 * (cfg.c2 + cfg.c3) * xi.norm() * fit.sigma_hat / std::sqrt(static_cast<double>(h2.n()));
  ci.level = 1 - alpha;
  ci.budget = {{"known_sigma", alpha}};
  return ci;
}

struct SpikedInterval {
  ConfidenceInterval ci;
  SpikedCovFit spiked_fit;
  ScaledLassoFit lasso_fit;
};

inline ConfidenceInterval spiked_ci(const Dataset& half2, const ScaledLassoFit& fit, const SpikedCovFit& sfit,
                                    const Vec& xi, int k_u, std::size_t n_total, double alpha,
                                    const InferenceConfig& cfg = {}) {
  const double n = static_cast<double>(n_total);
  const double lp = std::log(static_cast<double>(half2.p()));
  const auto lv = make_loading(xi);
  ConfidenceInterval ci;
  ci.center = split_center(half2, fit.beta_hat, sfit.omega_hat * xi, xi);
  ci.radius = fit.sigma_hat * (cfg.c_spike * xi.norm() / std::sqrt(n) + cfg.c_spike_tail * top_norm(lv, k_u) * k_u * lp / n);
  ci.level = 1 - alpha;
  ci.budget = {{"spiked", alpha}};
  return ci;
}

inline SpikedInterval spiked_ci(const Dataset& d, const Vec& xi, int k_u, double alpha, std::uint64_t seed,
                                const InferenceConfig& cfg = {}) {
  auto [h1, h2] = split_halves(d, seed);
  SpikedInterval out;
  out.lasso_fit = scaled_lasso(h1, cfg.lasso);
  out.spiked_fit = spiked_cov_estimate(h1, k_u, cfg.spiked);
  out.ci = spiked_ci(h2, out.lasso_fit, out.spiked_fit, xi, k_u, d.n(), alpha, cfg);
  return out;
}

// Inverted test for any interval mode. Split-sample modes use `seed`;
// known_sigma needs sigma0.
inline TestDecision run_test(const Dataset& d, const TestProblem& pr, TestMode mode, const InferenceConfig& cfg,
                             std::uint64_t seed, const Mat* sigma0 = nullptr) {
  pr.validate();
  const double ac = component_alpha(pr.alpha, pr.eta);
  switch (mode) {
    case TestMode::mixed: return mixed_test(d, pr, cfg);
    case TestMode::plugin: return decide(mixed_ci(d, prepare_mixed(d, cfg), pr.xi, 0, pr.k_u, ac, cfg), pr.t0, 0);
    case TestMode::debiased:
      return decide(mixed_ci(d, prepare_mixed(d, cfg), pr.xi, d.p(), pr.k_u, ac, cfg), pr.t0, d.p());
    case TestMode::known_sigma: {
      const Mat id = Mat::Identity(static_cast<Eigen::Index>(d.p()), static_cast<Eigen::Index>(d.p()));
      return decide(known_sigma_ci(d, sigma0 ? *sigma0 : id, pr.xi.original(), pr.k_u, pr.alpha, seed, cfg), pr.t0, d.p());
    }
    default:
      return decide(spiked_ci(d, pr.xi.original(), pr.k_u, pr.alpha, seed, cfg).ci, pr.t0, d.p());
  }
}

// Smallest constant c with P(|stat| <= c) >= 1 - alpha on the sample.
inline double calibrate_constant(std::vector<double> ratios, double alpha) {
  if (ratios.empty()) throw ConfigError("calibration needs samples");
  for (auto& r : ratios) r = std::abs(r);
  std::sort(ratios.begin(), ratios.end());
  const auto k = static_cast<std::size_t>(std::ceil((1 - alpha) * static_cast<double>(ratios.size())));
  return ratios[std::min(ratios.size() - 1, k == 0 ? 0 : k - 1)];
}

}  // namespace adaptest
