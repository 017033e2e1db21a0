#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "errors.hpp"
#include "priors.hpp"

namespace adaptest {

using MultiIndex = std::vector<int>;

inline int degree(const MultiIndex& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

// Cross-covariance Cov(U, V) = r c' between standard Gaussian blocks U and V.
struct RankOneGaussian {
  Vec r, c;
  bool valid() const { return r.norm() * c.norm() < 1; }
};

// E[H_mu(U) H_nu(V)] for normalized Hermite products:
// m!/sqrt(mu! nu!) r^mu c^nu when |mu| = |nu| = m, else 0.
inline double hermite_moment(const MultiIndex& mu, const MultiIndex& nu, const RankOneGaussian& g) {
  const int m = degree(mu);
  if (m != degree(nu)) return 0.0;
  double logv = std::lgamma(m + 1.0);
  int sign = 1;
  auto absorb = [&](const MultiIndex& idx, const Vec& w) {
    for (std::size_t l = 0; l < idx.size(); ++l) {
      const int k = idx[l];
      if (k == 0) continue;
      const double x = w(static_cast<Eigen::Index>(l));
      if (x == 0) return false;
      logv += k * std::log(std::abs(x)) - 0.5 * std::lgamma(k + 1.0);
      if (x < 0 && (k & 1)) sign = -sign;
    }
    return true;
  };
  if (!absorb(mu, g.r) || !absorb(nu, g.c)) return 0.0;
  return sign * std::exp(logv);
}

// Normalized probabilists' Hermite polynomial He_k(x)/sqrt(k!).
inline double hermite_normalized(int k, double x) {
  double h0 = 1, h1 = x;
  if (k == 0) return 1;
  for (int j = 1; j < k; ++j) {
    const double h2 = x * h1 - j * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1 / std::sqrt(std::tgamma(k + 1.0));
}

// Visits every multi-index over n coordinates with degree <= d in
// lexicographic order; f(alpha, degree).
template <class F>
void for_each_multi_index(std::size_t n, int d, F&& f) {
  MultiIndex a(n, 0);
  int used = 0;
  while (true) {
    f(static_cast<const MultiIndex&>(a), used);
    std::size_t i = n;
    while (i > 0) {
      if (used < d) {
        ++a[i - 1];
        ++used;
        break;
      }
      used -= a[i - 1];
      a[i - 1] = 0;
      --i;
    }
    if (i == 0) return;
  }
}

inline double multi_index_count(std::size_t n, int d) {
  return binomial_count(n + static_cast<std::size_t>(d), static_cast<std::size_t>(d));
}

namespace detail {

// Per-row Hermite mean of a prior draw on (Y/sigma_star, X).
struct RowMoment {
  std::vector<int> role;  // 0 unused, 1 in U, 2 in V
  std::vector<std::size_t> slot;
  RankOneGaussian g;

  explicit RowMoment(const PriorDraw& d) {
    const std::size_t q = d.p() + 1;
    role.assign(q, 0);
    slot.assign(q, 0);
    for (std::size_t a = 0; a < d.u_index.size(); ++a) {
      role[d.u_index[a]] = 1;
      slot[d.u_index[a]] = a;
    }
    for (std::size_t b = 0; b < d.v_index.size(); ++b) {
      if (role[d.v_index[b]] != 0) throw ConfigError("rank-one layout blocks overlap");
      role[d.v_index[b]] = 2;
      slot[d.v_index[b]] = b;
    }
    if (d.r.size() != static_cast<Eigen::Index>(d.u_index.size()) ||
        d.c.size() != static_cast<Eigen::Index>(d.v_index.size()))
      throw ConfigError("rank-one factors do not match the layout");
    g = {d.r, d.c};
    if (!g.valid()) throw NotPD("rank-one covariance is not positive definite");
  }

  double operator()(const int* alpha) const {
    MultiIndex mu(static_cast<std::size_t>(g.r.size()), 0), nu(static_cast<std::size_t>(g.c.size()), 0);
    for (std::size_t k = 0; k < role.size(); ++k) {
      if (alpha[k] == 0) continue;
      if (role[k] == 0) return 0.0;
      (role[k] == 1 ? mu : nu)[slot[k]] = alpha[k];
    }
    return hermite_moment(mu, nu, g);
  }
};

}  // namespace detail

// LD(0..max_degree): the squared norm of the degree-<=D projection of the
// likelihood ratio, averaged over all unordered pairs of distinct draws.
// Each draw is read on the unit-diagonal scale (Y / sigma_star, X).
inline std::vector<double> ld_profile(const std::vector<PriorDraw>& draws, int max_degree, std::size_t n,
                                      double budget = 1e7) {
  if (draws.size() < 2) throw ConfigError("low-degree norm needs at least two draws");
  if (max_degree < 0) throw ConfigError("degree must be nonnegative");
  const std::size_t p = draws.front().p();
  const std::size_t q = p + 1, big_n = n * q;
  if (big_n > 12 || max_degree > 4 || multi_index_count(big_n, max_degree) > budget)
    throw SizeBudget("multi-index enumeration exceeds the budget");
  std::vector<detail::RowMoment> rows;
  for (const auto& d : draws) {
    if (d.p() != p) throw ConfigError("draws have different dimensions");
    if (d.sigma_star != draws.front().sigma_star) throw ConfigError("draws use different reference points");
    const JointCovariance s = d.sigma_z();
    for (std::size_t k = 0; k < q; ++k) {
      const double scale = k == 0 ? d.sigma_star * d.sigma_star : 1.0;
      if (std::abs(s.sigma_z(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) / scale - 1) > 1e-12)
        throw ConfigError("draw is not unit-diagonal after rescaling");
    }
    rows.emplace_back(d);
  }
  const double npairs = static_cast<double>(draws.size()) * static_cast<double>(draws.size() - 1) / 2;
  std::vector<double> shell(static_cast<std::size_t>(max_degree) + 1, 0.0);
  std::vector<double> v(draws.size());
  for_each_multi_index(big_n, max_degree, [&](const MultiIndex& a, int deg) {
    double s = 0, s2 = 0;
    for (std::size_t t = 0; t < rows.size(); ++t) {
      double prod = 1;
      for (std::size_t i = 0; i < n && prod != 0; ++i) prod *= rows[t](a.data() + i * q);
      v[t] = prod;
      s += prod;
      s2 += prod * prod;
    }
    shell[static_cast<std::size_t>(deg)] += (s * s - s2) / 2;
  });
  std::vector<double> out(shell.size());
  double acc = 0;
  for (std::size_t d = 0; d < shell.size(); ++d) {
    acc += shell[d] / npairs;
    out[d] = acc;
  }
  return out;
}

inline double ld_norm(const std::vector<PriorDraw>& draws, int max_degree, std::size_t n) {
  return ld_profile(draws, max_degree, n).back();
}

// log of 9 (6 n p D)^{4D}.
inline double ld_uniform_bound(double n, double p, double D) {
  return std::log(9.0) + 4 * D * std::log(6 * n * p * D);
}

// Tiny computational-prior instance used by the LD checks: S3 has two
// coordinates with one protected, delta1 has a single nonzero.
inline CompLayout tiny_comp_layout() { return {2, 1, 1, 4}; }

}  // namespace adaptest
