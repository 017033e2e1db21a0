#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "model_core.hpp"

namespace adaptest {

enum class Regime { ultra_sparse, moderately_sparse };

inline const char* to_string(Regime r) {
  return r == Regime::ultra_sparse ? "ultra_sparse" : "moderately_sparse";
}

struct ProfileSummary {
  double zeta = 0, lambda = 0;
  std::size_t j1 = 0;
  double nu1 = 0, nu2 = 0;
  std::size_t k_eff = 0;
  double nu3 = 0;
  std::size_t m_star = 0;
  Regime regime = Regime::ultra_sparse;
};

// Prefix sums of squared sorted coordinates; H(t) in O(1).
class TopNorm {
 public:
  explicit TopNorm(const LoadingVector& xi) : cum_(xi.size() + 1, 0.0) {
    for (std::size_t j = 0; j < xi.size(); ++j) cum_[j + 1] = cum_[j] + xi.coords(j) * xi.coords(j);
  }
  double operator()(double t) const {
    if (t <= 0) return 0.0;
    const double c = std::ceil(t);
    const std::size_t m = c >= static_cast<double>(cum_.size() - 1) ? cum_.size() - 1 : static_cast<std::size_t>(c);
    return std::sqrt(cum_[m]);
  }
  double sq_prefix(std::size_t m) const { return cum_[std::min(m, cum_.size() - 1)]; }

 private:
  std::vector<double> cum_;
};

inline double top_norm(const LoadingVector& xi, double t) { return TopNorm(xi)(t); }

// log of the left side of the root equation, evaluated with a max shift.
inline double log_phi(const LoadingVector& xi, double zeta) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < xi.k_xi; ++j) {
    const double a2 = xi.coords(j) * xi.coords(j);
    m = std::max(m, -zeta / a2);
  }
  double num = 0, den = 0;
  for (std::size_t j = 0; j < xi.k_xi; ++j) {
    const double a = std::abs(xi.coords(j));
    const double w = std::exp(-zeta / (a * a) - m);
    num += a * w;
    den += a * a * w;
  }
  return 0.5 * m + std::log(num) - 0.5 * std::log(den);
}

inline double phi(const LoadingVector& xi, double zeta) { return std::exp(log_phi(xi, zeta)); }

struct ZetaSolution {
  double zeta, lambda;
};

inline ZetaSolution solve_zeta(const LoadingVector& xi, int k_u) {
  if (k_u < 1) throw ConfigError("k_u must be at least 1");
  const double target = std::log(k_u / 2.0);
  auto g = [&](double z) { return log_phi(xi, z) - target; };
  if (g(0.0) == 0.0) return {0.0, 0.0};
  const double a1 = xi.coords(0) * xi.coords(0);
  double lo = -a1, hi = a1;
  int grow = 0;
  while (g(lo) <= 0) {
    lo *= 2;
    if (++grow > 200) throw BracketFailure("lower end of the bracket");
  }
  grow = 0;
  while (g(hi) >= 0) {
    hi *= 2;
    if (++grow > 200) throw BracketFailure("upper end of the bracket");
  }
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double gm = g(mid);
    if (gm == 0.0) {
      lo = hi = mid;
      break;
    }
    (gm > 0 ? lo : hi) = mid;
    if (hi - lo <= 1e-15 * std::max(std::abs(mid), 1e-300)) break;
  }
  const double z = 0.5 * (lo + hi);
  return {z, std::sqrt(std::max(z, 0.0))};
}

inline std::size_t j1(const LoadingVector& xi, double lambda) {
  std::size_t j = 0;
  while (j < xi.size() && std::abs(xi.coords(j)) >= lambda) ++j;
  return j;
}

// nu1 for a given lambda; zero coordinates contribute nothing.
inline double nu1_at(const LoadingVector& xi, int k_u, double lambda) {
  double s = 0;
  for (std::size_t j = 0; j < xi.k_xi; ++j) {
    const double a2 = xi.coords(j) * xi.coords(j);
    s += a2 * std::exp(-lambda * lambda / a2);
  }
  return lambda * k_u + std::sqrt(s);
}

inline double nu1(const LoadingVector& xi, int k_u) { return nu1_at(xi, k_u, solve_zeta(xi, k_u).lambda); }
inline double nu2(const LoadingVector& xi, int k_u) { return top_norm(xi, k_u); }

inline Regime regime_of(int k_u, double n, double p) {
  return k_u <= std::sqrt(n) / std::log(p) ? Regime::ultra_sparse : Regime::moderately_sparse;
}

inline std::size_t cutoff_m_star(int k_u, double n, std::size_t p) {
  const double lp = std::log(static_cast<double>(p));
  const double raw = regime_of(k_u, n, static_cast<double>(p)) == Regime::ultra_sparse
                         ? std::ceil(static_cast<double>(k_u) * k_u * lp)
                         : std::ceil(n / lp);
  return raw >= static_cast<double>(p) ? p : static_cast<std::size_t>(raw);
}

inline std::size_t k_eff_of(int k_u, double n, std::size_t p, int D) {
  const double lp = std::log(static_cast<double>(p));
  return static_cast<std::size_t>(std::floor(std::min(n / lp, static_cast<double>(k_u) * k_u / (D * lp))));
}

inline ProfileSummary regime_and_cutoff(const LoadingVector& xi, int k_u, std::size_t n, std::size_t p, int D = 1) {
  if (n < 2 || p < 2 || k_u < 1 || D < 1) throw ConfigError("need n, p >= 2, k_u >= 1, D >= 1");
  ProfileSummary s;
  const auto z = solve_zeta(xi, k_u);
  s.zeta = z.zeta;
  s.lambda = z.lambda;
  s.j1 = j1(xi, z.lambda);
  s.nu1 = nu1_at(xi, k_u, z.lambda);
  TopNorm h(xi);
  s.nu2 = h(k_u);
  s.k_eff = k_eff_of(k_u, static_cast<double>(n), p, D);
  s.nu3 = h(static_cast<double>(s.k_eff));
  s.regime = regime_of(k_u, static_cast<double>(n), static_cast<double>(p));
  s.m_star = cutoff_m_star(k_u, static_cast<double>(n), p);
  return s;
}

struct RateBounds {
  double upper, lower;
  std::size_t argmin_m;
};

// Upper-bound objective at cutoff m.
inline double upper_objective(const LoadingVector& xi, const TopNorm& h, std::size_t m, int k_u, double n, double p) {
  const double lp = std::log(p);
  const double next = m < xi.size() ? std::abs(xi.coords(m)) : 0.0;
  return std::sqrt(h.sq_prefix(m)) * (1 / std::sqrt(n) + k_u * lp / n) + next * k_u * std::sqrt(lp / n);
}

inline RateBounds rate_bounds(const LoadingVector& xi, int k_u, std::size_t n, std::size_t p) {
  TopNorm h(xi);
  const double dn = static_cast<double>(n), dp = static_cast<double>(p);
  RateBounds r{std::numeric_limits<double>::infinity(), 0, 0};
  for (std::size_t m = 0; m <= xi.size(); ++m) {
    const double v = upper_objective(xi, h, m, k_u, dn, dp);
    if (v < r.upper) {
      r.upper = v;
      r.argmin_m = m;
    }
  }
  const double lp = std::log(dp);
  r.lower = std::max(nu1(xi, k_u) / std::sqrt(dn), h(k_u) * k_u * lp / dn);
  return r;
}

// ---- regular-loading phase diagram ----

enum class PhaseRegion { easy_l2, easy_linf, sparse_loading_l2_inflated, computational_gap, statistically_impossible };

inline const char* to_string(PhaseRegion r) {
  switch (r) {
    case PhaseRegion::easy_l2: return "easy_l2";
    case PhaseRegion::easy_linf: return "easy_linf";
    case PhaseRegion::sparse_loading_l2_inflated: return "sparse_loading_l2_inflated";
    case PhaseRegion::computational_gap: return "computational_gap";
    default: return "statistically_impossible";
  }
}

struct PhaseCell {
  PhaseRegion region;
  std::string tag;        // rate expression (lower-bound tag in the gap)
  std::string upper_tag;  // only set in the gap
  double lower_exponent;  // boundary exponents of sqrt(n) tau / ||xi||_inf in p
  double upper_exponent;
};

// Exponents: k_xi = p^gx, k_u = p^gu, n = p^gn, sqrt(n) tau = ||xi||_inf p^gt.
inline PhaseCell regular_phase(double gx, double gu, double gn) {
  PhaseCell c{};
  const bool ultra = gu <= gn / 2;
  if (ultra) {
    if (gx <= 2 * gu) {
      c.region = PhaseRegion::easy_l2;
      c.tag = "‖ξ‖₂/√n";
      c.lower_exponent = c.upper_exponent = gx / 2;
    } else {
      c.region = PhaseRegion::easy_linf;
      c.tag = "‖ξ‖_∞ k_u √(log p/n)";
      c.lower_exponent = c.upper_exponent = gu;
    }
    return c;
  }
  if (gx <= gu) {
    c.region = PhaseRegion::sparse_loading_l2_inflated;
    c.tag = "‖ξ‖₂ k_u log p/n";
    c.lower_exponent = c.upper_exponent = gx / 2 + gu - gn / 2;
  } else if (gx >= 2 * gu) {
    c.region = PhaseRegion::easy_linf;
    c.tag = "‖ξ‖_∞ k_u √(log p/n)";
    c.lower_exponent = c.upper_exponent = gu;
  } else {
    c.region = PhaseRegion::computational_gap;
    c.tag = "‖ξ‖_∞[k_u^{3/2} log p/n + √(k_ξ/n)]";
    c.upper_tag = "‖ξ‖_∞ √(n/log p ∧ k_ξ) k_u log p/n";
    c.lower_exponent = std::max(1.5 * gu - gn / 2, gx / 2);
    c.upper_exponent = std::min(gn, gx) / 2 + gu - gn / 2;
  }
  return c;
}

// Cell label at signal exponent gt: below the lower curve is impossible,
// between the curves is the gap, above the upper curve is the loading's label.
inline PhaseCell regular_phase(double gx, double gu, double gn, double gt) {
  PhaseCell c = regular_phase(gx, gu, gn);
  if (gt < c.lower_exponent)
    c.region = PhaseRegion::statistically_impossible;
  else if (c.region == PhaseRegion::computational_gap && gt >= c.upper_exponent)
    c.region = PhaseRegion::easy_linf;
  return c;
}

// ---- example profiles ----

inline LoadingVector regular_profile(std::size_t K, double a, std::size_t p = 0) {
  if (p < K) p = K;
  Vec raw = Vec::Zero(static_cast<Eigen::Index>(p));
  raw.head(static_cast<Eigen::Index>(K)).setConstant(a);
  return make_loading(raw);
}

// Blocks of size ceil(k_u l^2), l = 1..L, each carrying energy a^2.
inline LoadingVector multiscale_profile(int k_u, int L, double a, double c0 = 1.0, std::size_t p = 0) {
  if (L < 1 || static_cast<double>(L) * L * L > c0 * k_u)
    throw MultiscaleConstraint("need L^3 <= c0 k_u");
  std::vector<double> vals;
  for (int l = 1; l <= L; ++l) {
    const auto m = static_cast<std::size_t>(std::ceil(static_cast<double>(k_u) * l * l));
    vals.insert(vals.end(), m, a / std::sqrt(static_cast<double>(m)));
  }
  if (p < vals.size()) p = vals.size();
  Vec raw = Vec::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < vals.size(); ++j) raw(static_cast<Eigen::Index>(j)) = vals[j];
  return make_loading(raw);
}

// i.i.d. symmetric draws with P(|W| > t) = exp(-t^q).
inline LoadingVector subweibull_profile(double q, std::size_t p, std::uint64_t seed) {
  if (!(q > 0) || p < 1) throw ConfigError("subweibull needs q > 0 and p >= 1");
  Rng rng(seed);
  Vec raw(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    const double mag = std::pow(rng.exponential(), 1.0 / q);
    raw(static_cast<Eigen::Index>(j)) = rng.bernoulli(0.5) ? mag : -mag;
  }
  return make_loading(raw);
}

}  // namespace adaptest
