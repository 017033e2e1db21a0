#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "inference.hpp"
#include "model_core.hpp"
#include "numerics.hpp"
#include "rng.hpp"

namespace adaptest {

enum class Hypothesis { null, alt };

struct SccaParams {
  std::size_t n = 0;  // rows drawn; the cross-covariance averages over all of them
  std::size_t s = 1, p1 = 1, p2 = 1;
  double lambda = 0;
};

struct SccaInstance {
  SccaParams params;
  Hypothesis hypothesis = Hypothesis::null;
  Mat u1, u2;
  Vec delta1, delta2;  // planted directions (alt only)

  Mat r_hat() const { return u1.transpose() * u2 / static_cast<double>(u1.rows()); }
};

inline Vec flat_sparse_direction(std::size_t p, std::size_t s, Rng& rng) {
  Vec d = Vec::Zero(static_cast<Eigen::Index>(p));
  const double v = 1 / std::sqrt(static_cast<double>(s));
  for (auto j : rng.subset(p, s)) d(static_cast<Eigen::Index>(j)) = v;
  return d;
}

inline SccaInstance gen_scca(const SccaParams& prm, Hypothesis h, std::uint64_t seed) {
  if (prm.lambda >= 1) throw NotPD("cross-correlation must be below one");
  if (prm.lambda < 0 || prm.lambda >= 0.5) throw ConfigError("lambda must lie in [0, 1/2)");
  if (prm.s < 1 || prm.s > prm.p1 || prm.s > prm.p2) throw ConfigError("need 1 <= s <= min(p1, p2)");
  if (prm.n < 1) throw ConfigError("n must be at least 1");
  Rng rng(seed);
  SccaInstance inst;
  inst.params = prm;
  inst.hypothesis = h;
  const auto a = static_cast<Eigen::Index>(prm.p1), b = static_cast<Eigen::Index>(prm.p2);
  Mat z = standard_normal_matrix(prm.n, prm.p1 + prm.p2, rng);
  if (h == Hypothesis::alt) {
    inst.delta1 = flat_sparse_direction(prm.p1, prm.s, rng);
    inst.delta2 = flat_sparse_direction(prm.p2, prm.s, rng);
    Mat s = Mat::Identity(a + b, a + b);
    s.topRightCorner(a, b) = prm.lambda * inst.delta1 * inst.delta2.transpose();
    s.bottomLeftCorner(b, a) = s.topRightCorner(a, b).transpose();
    const Mat l = cholesky_factor(s);
    z = z * l.transpose();
  }
  inst.u1 = z.leftCols(a);
  inst.u2 = z.rightCols(b);
  return inst;
}

// ---------------------------------------------------------------- statistics

enum class SccaStat { scan, entrywise, max_col, max_row, global_sum };
inline constexpr std::array<SccaStat, 5> kSccaStats = {SccaStat::scan, SccaStat::entrywise, SccaStat::max_col,
                                                       SccaStat::max_row, SccaStat::global_sum};

inline const char* to_string(SccaStat s) {
  switch (s) {
    case SccaStat::scan: return "scan";
    case SccaStat::entrywise: return "entrywise";
    case SccaStat::max_col: return "max_col";
    case SccaStat::max_row: return "max_row";
    case SccaStat::global_sum: return "global_sum";
  }
  return "?";
}

// Largest average over s x s submatrices. For each row set the best column
// set is the s largest column sums, so the cost is C(p1, s) p2 log p2.
inline double scan_stat(const Mat& r, std::size_t s, double cap = 1e12) {
  const auto p1 = static_cast<std::size_t>(r.rows()), p2 = static_cast<std::size_t>(r.cols());
  if (s < 1 || s > p1 || s > p2) throw ConfigError("scan needs 1 <= s <= min(p1, p2)");
  if (binomial_count(p1, s) * binomial_count(p2, s) > cap) throw ScanBudgetExceeded("scan enumeration exceeds cap");
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> col(p2);
  for_each_combination(p1, s, [&](const std::vector<std::size_t>& rows) {
    for (std::size_t j = 0; j < p2; ++j) {
      double t = 0;
      for (auto i : rows) t += r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      col[j] = t;
    }
    std::partial_sort(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(s), col.end(), std::greater<>());
    double t = 0;
    for (std::size_t k = 0; k < s; ++k) t += col[k];
    best = std::max(best, t);
    return true;
  });
  return best / static_cast<double>(s * s);
}

inline double entrywise_max(const Mat& r) { return r.maxCoeff(); }
inline double max_col(const Mat& r, std::size_t s) { return r.colwise().sum().maxCoeff() / static_cast<double>(s); }
inline double max_row(const Mat& r, std::size_t s) { return r.rowwise().sum().maxCoeff() / static_cast<double>(s); }
inline double global_sum(const Mat& r) { return r.mean(); }

inline double scan_stat(const SccaInstance& in, double cap = 1e12) { return scan_stat(in.r_hat(), in.params.s, cap); }
inline double entrywise_max(const SccaInstance& in) { return entrywise_max(in.r_hat()); }
inline double max_col(const SccaInstance& in) { return max_col(in.r_hat(), in.params.s); }
inline double max_row(const SccaInstance& in) { return max_row(in.r_hat(), in.params.s); }
inline double global_sum(const SccaInstance& in) { return global_sum(in.r_hat()); }

using SccaValues = std::array<double, 5>;

inline SccaValues all_stats(const SccaInstance& in, double cap = 1e12) {
  const Mat r = in.r_hat();
  const std::size_t s = in.params.s;
  return {scan_stat(r, s, cap), entrywise_max(r), max_col(r, s), max_row(r, s), global_sum(r)};
}

// Threshold scales with constant one, in SccaStat order.
inline SccaValues threshold_scales(std::size_t n, std::size_t s, std::size_t p1, std::size_t p2) {
  const double nn = static_cast<double>(n), ss = static_cast<double>(s);
  const double a = static_cast<double>(p1), b = static_cast<double>(p2);
  const double log_scan = log_binomial(a, ss) + log_binomial(b, ss);
  return {std::sqrt(log_scan / (nn * ss * ss)), std::sqrt(std::log(a * b) / nn),
          std::sqrt(a * std::log(b) / (nn * ss * ss)), std::sqrt(b * std::log(a) / (nn * ss * ss)),
          1 / std::sqrt(nn * a * b)};
}

inline SccaValues thresholds(std::size_t n, std::size_t s, std::size_t p1, std::size_t p2, const SccaValues& big_c) {
  SccaValues t = threshold_scales(n, s, p1, p2);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] *= big_c[k];
  return t;
}

inline SccaValues thresholds(std::size_t n, std::size_t s, std::size_t p1, std::size_t p2, double big_c) {
  SccaValues c;
  c.fill(big_c);
  return thresholds(n, s, p1, p2, c);
}

// Detection boundaries with constant one, in SccaStat order.
inline SccaValues boundary_table(std::size_t n, std::size_t s, std::size_t p1, std::size_t p2) {
  const double nn = static_cast<double>(n), ss = static_cast<double>(s);
  const double a = static_cast<double>(p1), b = static_cast<double>(p2);
  return {std::sqrt(ss * std::log(b) / nn), ss * std::sqrt(std::log(b) / nn), std::sqrt(a * std::log(b) / nn),
          std::sqrt(b * std::log(a) / nn), std::sqrt(a * b / (nn * ss * ss))};
}

struct StatReport {
  SccaValues value{}, threshold{};
  std::array<bool, 5> decision{};
};

inline StatReport evaluate(const SccaInstance& in, const SccaValues& big_c, double cap = 1e12) {
  StatReport r;
  r.value = all_stats(in, cap);
  const auto& p = in.params;
  r.threshold = thresholds(p.n, p.s, p.p1, p.p2, big_c);
  for (std::size_t k = 0; k < 5; ++k) r.decision[k] = r.value[k] > r.threshold[k];
  return r;
}

// Per-statistic constants: the empirical 1 - alpha quantile of value / scale
// over null replicates.
inline SccaValues calibrate_scca(const SccaParams& prm, std::size_t reps, double alpha, std::uint64_t seed) {
  const SccaValues scale = threshold_scales(prm.n, prm.s, prm.p1, prm.p2);
  std::array<std::vector<double>, 5> ratios;
  for (std::size_t i = 0; i < reps; ++i) {
    const auto v = all_stats(gen_scca(prm, Hypothesis::null, stream_seed(seed, i)));
    for (std::size_t k = 0; k < 5; ++k) ratios[k].push_back(v[k] / scale[k]);
  }
  SccaValues c{};
  for (std::size_t k = 0; k < 5; ++k) {
    auto& r = ratios[k];
    std::sort(r.begin(), r.end());
    const auto idx = static_cast<std::size_t>(std::ceil((1 - alpha) * static_cast<double>(r.size()))) - 1;
    c[k] = r[std::min(idx, r.size() - 1)];
  }
  return c;
}

// Rejection rate per statistic over replicates.
inline SccaValues scca_power(const SccaParams& prm, Hypothesis h, const SccaValues& big_c, std::size_t reps,
                             std::uint64_t seed) {
  SccaValues rate{};
  for (std::size_t i = 0; i < reps; ++i) {
    const auto rep = evaluate(gen_scca(prm, h, stream_seed(seed, i)), big_c);
    for (std::size_t k = 0; k < 5; ++k) rate[k] += rep.decision[k];
  }
  for (auto& v : rate) v /= static_cast<double>(std::max<std::size_t>(reps, 1));
  return rate;
}

// ----------------------------------------------------------------- reduction

inline double tau_red(double c10, double sigma_star, double rho, double k_star, double p6) {
  return c10 * sigma_star / (2 - c10 * c10 * rho * rho) * rho * rho * k_star / std::sqrt(p6);
}

struct Reduction {
  Dataset data;       // (Y' + X beta0, X)
  Dataset untranslated;  // (Y', X)
  TestProblem problem;
  Vec beta0;
  double tau_red = 0;
};

// Maps 2n SCCA rows (consumed as pairs) to n regression rows with
// Y' = sigma_star W1, X = (V2, V3), then re-anchors at t0. The SCCA null lands
// on an alternative point of the linear-functional problem and vice versa, so
// the SCCA decision is the negation of the regression test.
inline Reduction reduce_to_lt(const SccaInstance& in, double sigma_star, double c10, double t0, std::uint64_t seed,
                              double alpha = 0.05, double eta = 0.1) {
  const auto rows = static_cast<std::size_t>(in.u1.rows());
  if (rows % 2 != 0) throw OddPairCount("reduction consumes rows in pairs");
  if (!(c10 > 0 && c10 < 1)) throw ConfigError("c10 must lie in (0, 1)");
  const std::size_t n = rows / 2;
  const auto p6 = in.u1.cols(), p7 = in.u2.cols();
  const double sp6 = std::sqrt(static_cast<double>(p6)), root = std::sqrt(1 - c10 * c10);
  Rng rng(seed);
  Reduction red;
  Dataset& d = red.untranslated;
  d.x.resize(static_cast<Eigen::Index>(n), p6 + p7);
  d.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = static_cast<Eigen::Index>(2 * i), b = a + 1, r = static_cast<Eigen::Index>(i);
    d.y(r) = sigma_star * in.u1.row(b).sum() / sp6;
    for (Eigen::Index j = 0; j < p6; ++j) d.x(r, j) = -c10 * in.u1(a, j) + root * rng.normal();
    d.x.row(r).tail(p7) = (in.u2.row(a) + in.u2.row(b)) / std::sqrt(2.0);
  }
  d.seed = seed;
  const std::size_t s = in.params.s;
  red.tau_red = tau_red(c10, sigma_star, in.params.lambda, static_cast<double>(s), static_cast<double>(p6));
  Vec xi = Vec::Zero(p6 + p7);
  xi.head(p6).setOnes();
  red.problem.xi = make_loading(xi);
  red.problem.t0 = t0;
  red.problem.k_u = static_cast<int>(4 * s);
  red.problem.alpha = alpha;
  red.problem.eta = eta;
  red.beta0 = Vec::Zero(p6 + p7);
  red.beta0(0) = t0 - red.tau_red;
  red.data = d;
  red.data.y += d.x * red.beta0;
  return red;
}

// SCCA decision through the reduction: reject the SCCA null when the
// regression test fails to reject.
inline bool scca_decision_via_lt(const SccaInstance& in, double sigma_star, double c10, double t0, std::uint64_t seed,
                                 const InferenceConfig& cfg = {}) {
  const Reduction red = reduce_to_lt(in, sigma_star, c10, t0, seed);
  return !mixed_test(red.data, red.problem, cfg).reject;
}

}  // namespace adaptest
