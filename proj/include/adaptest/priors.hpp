#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "loading_profile.hpp"
#include "model_core.hpp"
#include "numerics.hpp"
#include "rng.hpp"

namespace adaptest {

// All prior draws live in magnitude-sorted coordinates: coordinate j pairs
// with xi.coords(j). Use to_original() to map vectors back.

enum class PriorKind { nu2, nu1, comp };

inline const char* to_string(PriorKind k) {
  return k == PriorKind::nu2 ? "nu2" : (k == PriorKind::nu1 ? "nu1" : "comp");
}

struct PriorDraw {
  PriorKind kind = PriorKind::nu2;
  Vec delta1, delta2;
  std::vector<std::size_t> support1;  // random support of the uniform-support factor
  Vec q;                              // Bernoulli parameters, where applicable
  double kappa = 0;
  double coef = 0;                    // coefficient of kappa in xi'beta
  double tau = 0;
  double sigma_star = 1;
  ModelParams theta;                  // beta in sorted coordinates; sigma_cov left empty
  bool valid = false;
  std::string reason;

  double residual = 0;                // xi'beta - tau
  std::size_t beta_nnz = 0;
  double lambda_min = 1, lambda_max = 1;

  // Rank-one cross-covariance layout on (Y/sigma_star, X): coordinates
  // u_index (0 is Y, 1 + j is X_j) and v_index with Cov(U, V) = r c'.
  std::vector<std::size_t> u_index, v_index;
  Vec r, c;

  std::size_t p() const { return static_cast<std::size_t>(theta.beta.size()); }

  JointCovariance sigma_z() const {
    const auto d = static_cast<Eigen::Index>(p() + 1);
    Mat s = Mat::Identity(d, d);
    for (std::size_t a = 0; a < u_index.size(); ++a)
      for (std::size_t b = 0; b < v_index.size(); ++b) {
        const auto i = static_cast<Eigen::Index>(u_index[a]), j = static_cast<Eigen::Index>(v_index[b]);
        s(i, j) = s(j, i) = r(static_cast<Eigen::Index>(a)) * c(static_cast<Eigen::Index>(b));
      }
    s.row(0) *= sigma_star;
    s.col(0) *= sigma_star;
    return {s};
  }

  // Dense parameter point through h, for cross-checks at small p.
  ModelParams materialize() const { return h_map(sigma_z(), theta.m1, theta.m2); }
};

inline Vec to_original(const LoadingVector& xi, const Vec& sorted) {
  Vec out(sorted.size());
  for (std::size_t j = 0; j < xi.perm.size(); ++j)
    out(static_cast<Eigen::Index>(xi.perm[j])) = sorted(static_cast<Eigen::Index>(j));
  return out;
}

// Reference alternative point (0, I, sigma_star) as a joint covariance.
inline JointCovariance null_point(std::size_t p, double sigma_star) {
  const auto d = static_cast<Eigen::Index>(p + 1);
  Mat s = Mat::Identity(d, d);
  s(0, 0) = sigma_star * sigma_star;
  return {s};
}

struct PriorBounds {
  double m1 = 10.0;
  double m2 = 10.0;
  double sigma_star() const { return m2 / 2; }
};

namespace detail {

inline std::size_t count_nonzero(const Vec& v) {
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) k += v(i) != 0;
  return k;
}

// Shared finishing steps: residual, sparsity, eigen window, noise level.
inline void finish(PriorDraw& d, const LoadingVector& xi, double sparsity_cap, double cross, const PriorBounds& pb) {
  d.theta.m1 = pb.m1;
  d.theta.m2 = pb.m2;
  d.residual = xi.coords.dot(d.theta.beta) - d.tau;
  d.beta_nnz = count_nonzero(d.theta.beta);
  d.lambda_min = 1 - cross;
  d.lambda_max = 1 + cross;
  auto fail = [&](const char* why) {
    d.valid = false;
    if (d.reason.empty()) d.reason = why;
  };
  d.valid = true;
  if (!(d.kappa > 0 && d.kappa <= 1)) fail("kappa_out_of_range");
  if (std::abs(d.residual) > 1e-10 * std::max(std::abs(d.tau), 1.0)) fail("null_constraint");
  if (static_cast<double>(d.beta_nnz) > sparsity_cap) fail("sparsity");
  if (d.lambda_min < 1 / pb.m1 || d.lambda_max > pb.m1) fail("eigenvalue_window");
  if (!(d.theta.noise_sd > 0 && d.theta.noise_sd <= pb.m2)) fail("noise_level");
}

}  // namespace detail

// Throws when a draw is not a valid null point.
inline const PriorDraw& require_valid(const PriorDraw& d) {
  if (!d.valid) {
    if (d.reason == "kappa_out_of_range") throw KappaOutOfRange("kappa outside (0, 1]");
    throw NumericalError("invalid prior draw: " + d.reason);
  }
  return d;
}

// ------------------------------------------------------------------ nu2 prior

struct Nu2Options {
  double c1 = 0.05;
  double c2 = -1;  // negative: c1^2 * 2 / (9 sqrt 5)
  PriorBounds bounds;
};

inline double nu2_default_c2(double c1) { return c1 * c1 * 2 / (9 * std::sqrt(5.0)); }

inline PriorDraw sample_nu2_prior(const LoadingVector& xi, int k_u, std::size_t n, std::uint64_t seed,
                                  const Nu2Options& opt = {}) {
  if (k_u < 4) throw ConfigError("nu2 prior needs k_u >= 4");
  const std::size_t p = xi.size();
  const std::size_t p1 = static_cast<std::size_t>(k_u) / 4;
  if (2 * p1 > p) throw ConfigError("nu2 prior needs p >= 2 floor(k_u/4)");
  const double lp = std::log(static_cast<double>(p)), nn = static_cast<double>(n);
  const double c2 = opt.c2 > 0 ? opt.c2 : nu2_default_c2(opt.c1);
  Rng rng(seed);
  PriorDraw d;
  d.kind = PriorKind::nu2;
  d.sigma_star = opt.bounds.sigma_star();
  const auto P1 = static_cast<Eigen::Index>(p1), P2 = static_cast<Eigen::Index>(p - p1);
  const Vec head = xi.coords.head(P1);
  d.delta1 = -head / head.norm();
  d.delta2 = Vec::Zero(P2);
  d.support1 = rng.subset(p - p1, p1);
  const double mag = opt.c1 * std::sqrt(lp / nn);
  for (auto j : d.support1)
    d.delta2(static_cast<Eigen::Index>(j)) = mag * sign_or_one(xi.coords(P1 + static_cast<Eigen::Index>(j)));
  d.tau = c2 * top_norm(xi, k_u) * k_u * lp / nn;

  const double s22 = d.delta2.squaredNorm(), s11 = d.delta1.squaredNorm();
  const double denom = 1 - s11 * s22;
  d.coef = (-s22 * xi.coords.head(P1).dot(d.delta1) + xi.coords.tail(P2).dot(d.delta2)) / denom;
  d.theta.beta = Vec::Zero(static_cast<Eigen::Index>(p));
  if (!(d.coef > 1e-14)) {
    d.reason = "degenerate_coefficient";
  } else {
    d.kappa = d.tau / d.coef;
  }
  d.theta.beta.head(P1) = -d.kappa * s22 / denom * d.delta1;
  d.theta.beta.tail(P2) = d.kappa / denom * d.delta2;
  const double s2 = d.sigma_star * d.sigma_star - d.kappa * d.kappa * s22 / denom;
  d.theta.noise_sd = s2 > 0 ? std::sqrt(s2) : 0.0;

  d.u_index.push_back(0);
  for (std::size_t j = 0; j < p1; ++j) d.u_index.push_back(1 + j);
  for (std::size_t j = p1; j < p; ++j) d.v_index.push_back(1 + j);
  d.r.resize(P1 + 1);
  d.r << d.kappa / d.sigma_star, d.delta1;
  d.c = d.delta2;
  detail::finish(d, xi, k_u / 2.0, std::sqrt(s11 * s22), opt.bounds);
  return d;
}

// ------------------------------------------------------------------ nu1 prior

struct Nu1Options {
  double c4 = 0.1;
  double c5 = 0.5;
  bool force_heads = false;  // every Bernoulli equals one
  PriorBounds bounds;
};

// Bernoulli parameters c4 |xi_j| e^{-lambda^2/xi_j^2} / sqrt(sum xi_i^2 e^{-lambda^2/xi_i^2}).
inline Vec nu1_q(const LoadingVector& xi, double lambda, double c4) {
  const auto k = static_cast<Eigen::Index>(xi.k_xi);
  Vec t(k);
  for (Eigen::Index j = 0; j < k; ++j) t(j) = -lambda * lambda / (xi.coords(j) * xi.coords(j));
  const double m = t.maxCoeff();
  double s = 0;
  for (Eigen::Index j = 0; j < k; ++j) s += xi.coords(j) * xi.coords(j) * std::exp(t(j) - m);
  Vec q = Vec::Zero(static_cast<Eigen::Index>(xi.size()));
  for (Eigen::Index j = 0; j < k; ++j) q(j) = c4 * std::abs(xi.coords(j)) * std::exp(t(j) - m / 2) / std::sqrt(s);
  return q;
}

// Half the expected value of xi'delta: a separation every draw with at least
// one success on the largest coordinates clears.
inline double nu1_default_tau(const LoadingVector& xi, int k_u, std::size_t n, const Nu1Options& opt = {}) {
  const double lambda = solve_zeta(xi, k_u).lambda;
  const Vec q = nu1_q(xi, lambda, opt.c4);
  double e = 0;
  for (std::size_t j = 0; j < xi.k_xi; ++j)
    e += q(static_cast<Eigen::Index>(j)) * std::max(std::abs(xi.coords(static_cast<Eigen::Index>(j))), lambda);
  return 0.5 * opt.c5 / std::sqrt(static_cast<double>(n)) * e;
}

inline PriorDraw sample_nu1_prior(const LoadingVector& xi, int k_u, std::size_t n, double tau, std::uint64_t seed,
                                  const Nu1Options& opt = {}) {
  if (!(tau > 0)) throw ConfigError("nu1 prior needs tau > 0");
  const std::size_t p = xi.size();
  const double lambda = solve_zeta(xi, k_u).lambda;
  const std::size_t jj = j1(xi, lambda);
  Rng rng(seed);
  PriorDraw d;
  d.kind = PriorKind::nu1;
  d.sigma_star = opt.bounds.sigma_star();
  d.tau = tau;
  d.q = nu1_q(xi, lambda, opt.c4);
  d.delta1 = Vec::Zero(static_cast<Eigen::Index>(p));
  const double scale = opt.c5 / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < xi.k_xi; ++j) {
    const auto J = static_cast<Eigen::Index>(j);
    const bool head = opt.force_heads || rng.bernoulli(d.q(J));
    if (!head) continue;
    const double gamma = j < jj ? sign_or_one(xi.coords(J)) : lambda / xi.coords(J);
    d.delta1(J) = scale * gamma;
  }
  const double proj = xi.coords.dot(d.delta1);
  const double dn2 = d.delta1.squaredNorm();
  const auto nnz = detail::count_nonzero(d.delta1);
  const double ss = d.sigma_star * d.sigma_star;
  const bool in_g = proj >= tau && static_cast<double>(nnz) <= k_u / 2.0 && dn2 <= proj * proj * ss / (2 * tau * tau);
  d.coef = proj;
  d.kappa = in_g ? tau / proj : 0.0;
  if (!in_g) d.reason = "outside_G_tau";
  d.theta.beta = d.kappa * d.delta1;
  d.theta.noise_sd = std::sqrt(std::max(ss - d.kappa * d.kappa * dn2, 0.0));
  d.u_index = {0};
  for (std::size_t j = 0; j < p; ++j) d.v_index.push_back(1 + j);
  d.r = Vec::Constant(1, d.kappa / d.sigma_star);
  d.c = d.delta1;
  detail::finish(d, xi, k_u / 2.0, 0.0, opt.bounds);
  return d;
}

// ---------------------------------------------------------- computational prior

// Block layout: S3 = first p3 sorted coordinates, S4 = the rest, S5 = S3
// minus the first `top`. delta1 (on S4) has a uniform support of size supp1.
struct CompLayout {
  std::size_t p3 = 0, top = 0, supp1 = 0;
  int k_u = 0;  // enters the Bernoulli scale and the sparsity cap
};

struct CompOptions {
  double c8 = 0.05;
  double c9 = -1;   // negative: c8^2 / (144 sqrt 2)
  double tau = -1;  // negative: c9 nu3 k_u log p / n
  int degree = 1;
  PriorBounds bounds;
};

inline double comp_default_c9(double c8) { return c8 * c8 / (144 * std::sqrt(2.0)); }

inline CompLayout comp_layout(const LoadingVector& xi, int k_u, std::size_t n, int D) {
  const std::size_t p = xi.size();
  const std::size_t keff = k_eff_of(k_u, static_cast<double>(n), p, D);
  if (!(8 <= 2 * k_u && static_cast<std::size_t>(2 * k_u) < keff))
    throw RegimeViolation("computational prior needs 8 <= 2 k_u < k_eff");
  if (keff + static_cast<std::size_t>(k_u) / 4 > p) throw RegimeViolation("computational prior needs p - k_eff >= k_u / 4");
  return {keff, static_cast<std::size_t>(k_u), static_cast<std::size_t>(k_u) / 4, k_u};
}

inline PriorDraw sample_comp_layout(const LoadingVector& xi, const CompLayout& lay, std::size_t n, std::uint64_t seed,
                                    const CompOptions& opt = {}) {
  const std::size_t p = xi.size();
  if (lay.p3 > p || lay.top > lay.p3 || lay.supp1 > p - lay.p3) throw ConfigError("inconsistent computational layout");
  const double lp = std::log(static_cast<double>(p)), nn = static_cast<double>(n);
  const auto P3 = static_cast<Eigen::Index>(lay.p3), P4 = static_cast<Eigen::Index>(p - lay.p3);
  const double p5 = static_cast<double>(lay.p3 - lay.top);
  const double ku = static_cast<double>(lay.k_u);
  Rng rng(seed);
  PriorDraw d;
  d.kind = PriorKind::comp;
  d.sigma_star = opt.bounds.sigma_star();

  d.delta1 = Vec::Zero(P4);
  d.support1 = rng.subset(p - lay.p3, lay.supp1);
  for (auto j : d.support1)
    d.delta1(static_cast<Eigen::Index>(j)) =
        opt.c8 * sign_or_one(xi.coords(P3 + static_cast<Eigen::Index>(j))) * std::sqrt(lp / nn);

  double s5 = 0;
  for (std::size_t j = lay.top; j < lay.p3; ++j) s5 += xi.coords(static_cast<Eigen::Index>(j)) * xi.coords(static_cast<Eigen::Index>(j));
  d.q = Vec::Zero(P3);
  d.delta2 = Vec::Zero(P3);
  for (std::size_t j = lay.top; j < lay.p3; ++j) {
    const auto J = static_cast<Eigen::Index>(j);
    if (s5 > 0) d.q(J) = std::min(1.0, std::abs(xi.coords(J)) / (8 * std::sqrt(s5)) * ku / std::sqrt(p5));
    if (rng.bernoulli(d.q(J))) d.delta2(J) = -std::sqrt(p5) / ku * sign_or_one(xi.coords(J));
  }
  const double c9 = opt.c9 > 0 ? opt.c9 : comp_default_c9(opt.c8);
  d.tau = opt.tau > 0 ? opt.tau : c9 * top_norm(xi, static_cast<double>(lay.p3)) * ku * lp / nn;

  const double a1 = d.delta1.squaredNorm(), a2 = d.delta2.squaredNorm();
  const double denom = 1 - a1 * a2;
  d.coef = (-a1 * xi.coords.head(P3).dot(d.delta2) + xi.coords.tail(P4).dot(d.delta1)) / denom;
  if (!(d.coef > 1e-14) || !(denom > 0))
    d.reason = "degenerate_coefficient";
  else
    d.kappa = d.tau / d.coef;
  d.theta.beta = Vec::Zero(static_cast<Eigen::Index>(p));
  d.theta.beta.head(P3) = -d.kappa * a1 / denom * d.delta2;
  d.theta.beta.tail(P4) = d.kappa / denom * d.delta1;
  const double s2 = d.sigma_star * d.sigma_star - d.kappa * d.kappa * a1 / denom;
  d.theta.noise_sd = s2 > 0 ? std::sqrt(s2) : 0.0;

  for (std::size_t j = 0; j <= lay.p3; ++j) d.u_index.push_back(j);
  for (std::size_t j = lay.p3; j < p; ++j) d.v_index.push_back(1 + j);
  d.r.resize(P3 + 1);
  d.r << d.kappa / d.sigma_star, d.delta2;
  d.c = d.delta1;
  detail::finish(d, xi, ku, std::sqrt(a1 * a2), opt.bounds);
  return d;
}

inline PriorDraw sample_comp_prior(const LoadingVector& xi, int k_u, std::size_t n, std::uint64_t seed,
                                   const CompOptions& opt = {}) {
  return sample_comp_layout(xi, comp_layout(xi, k_u, n, opt.degree), n, seed, opt);
}

// ----------------------------------------------------------- chi-square tools

// Integral of g1 g2 / g0 over n i.i.d. samples:
// det(I - S0^{-1}(S1 - S0) S0^{-1}(S2 - S0))^{-n/2}.
inline double chi2_pair_integral(const JointCovariance& s1, const JointCovariance& s2, const JointCovariance& s0,
                                 std::size_t n) {
  const Mat& a = s1.sigma_z;
  const Mat& b = s2.sigma_z;
  const Mat& z = s0.sigma_z;
  Eigen::LLT<Mat> l0(z), l1(a), l2(b);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success || l2.info() != Eigen::Success)
    throw NotPositiveDefinite("chi-square inputs must be positive definite");
  const auto d = z.rows();
  const Mat id = Mat::Identity(d, d);
  const Mat k = l1.solve(id) + l2.solve(id) - l0.solve(id);
  Eigen::LLT<Mat> lk(k);
  if (lk.info() != Eigen::Success) throw DivergentIntegral("S1^-1 + S2^-1 - S0^-1 is not positive definite");
  const Mat m = id - l0.solve(a - z) * l0.solve(b - z);
  Eigen::PartialPivLU<Mat> lu(m);
  const Mat& lum = lu.matrixLU();
  double logdet = 0;
  int sign = lu.permutationP().determinant();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double v = lum(i, i);
    if (v < 0) sign = -sign;
    logdet += std::log(std::abs(v));
  }
  if (sign <= 0 || !std::isfinite(logdet)) throw DivergentIntegral("determinant is not positive");
  return std::exp(-0.5 * static_cast<double>(n) * logdet);
}

// Closed form for two draws with the same rank-one layout: (1 - <r,r~><c,c~>)^{-n}.
inline double rank_one_pair_chi2(const PriorDraw& a, const PriorDraw& b, std::size_t n) {
  const double t = a.r.dot(b.r) * a.c.dot(b.c);
  if (!(t < 1)) throw DivergentIntegral("rank-one overlap at least one");
  return std::pow(1 - t, -static_cast<double>(n));
}

struct McEstimate {
  double mean = 0;
  double se = 0;
  std::size_t reps = 0;
};

using CovSampler = std::function<JointCovariance(std::uint64_t)>;

// E_{pairs} int g1 g2 / g0 - 1 over independent draw pairs.
inline McEstimate chi2_mixture_mc(const CovSampler& sampler, const JointCovariance& star, std::size_t n,
                                  std::size_t reps, std::uint64_t seed) {
  if (reps < 100) throw ConfigError("chi-square Monte Carlo needs at least 100 pairs");
  double sum = 0, sum2 = 0;
  for (std::size_t i = 0; i < reps; ++i) {
    const auto a = sampler(stream_seed(seed, 2 * i));
    const auto b = sampler(stream_seed(seed, 2 * i + 1));
    const double v = chi2_pair_integral(a, b, star, n) - 1;
    sum += v;
    sum2 += v * v;
  }
  McEstimate e;
  e.reps = reps;
  e.mean = sum / static_cast<double>(reps);
  const double var = std::max(sum2 / static_cast<double>(reps) - e.mean * e.mean, 0.0);
  e.se = std::sqrt(var / static_cast<double>(reps - 1) * static_cast<double>(reps) / static_cast<double>(reps));
  return e;
}

// Resamples until the draw is valid (restriction of the prior to its validity event).
template <class Draw>
CovSampler valid_cov_sampler(Draw draw, int max_tries = 1000) {
  return [draw, max_tries](std::uint64_t seed) {
    for (int t = 0; t < max_tries; ++t) {
      PriorDraw d = draw(stream_seed(seed, static_cast<std::uint64_t>(t)));
      if (d.valid) return d.sigma_z();
    }
    throw NumericalError("no valid prior draw within the retry budget");
  };
}

// E exp(c log(p) J) for J ~ Hypergeometric(p, k, k).
inline double hypergeometric_mgf(std::size_t p, std::size_t k, double c) {
  if (2 * k > p) throw ConfigError("hypergeometric_mgf needs k <= p / 2");
  const long double lp = std::log(static_cast<long double>(p));
  auto lbin = [](long double a, long double b) { return std::lgamma(a + 1) - std::lgamma(b + 1) - std::lgamma(a - b + 1); };
  const long double total = lbin(static_cast<long double>(p), static_cast<long double>(k));
  long double s = 0;
  for (std::size_t j = 0; j <= k; ++j) {
    const long double lj = lbin(static_cast<long double>(k), static_cast<long double>(j)) +
                           lbin(static_cast<long double>(p - k), static_cast<long double>(k - j)) - total;
    s += std::exp(lj + static_cast<long double>(c) * lp * static_cast<long double>(j));
  }
  return static_cast<double>(s);
}

// Data map (Y, X) -> (Y - X beta0, X).
inline Dataset translate_data(const Dataset& d, const Vec& beta0) {
  Dataset out = d;
  out.y -= d.x * beta0;
  return out;
}

// beta0 = (t0 / xi_{j0}) e_{j0} in original coordinates, j0 the largest coordinate.
inline Vec anchor_shift(const LoadingVector& xi, double t0) {
  Vec b = Vec::Zero(static_cast<Eigen::Index>(xi.size()));
  b(static_cast<Eigen::Index>(xi.perm[0])) = t0 / xi.coords(0);
  return b;
}

}  // namespace adaptest
