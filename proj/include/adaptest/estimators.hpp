#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "model_core.hpp"
#include "numerics.hpp"

namespace adaptest {

// ---------------------------------------------------------------- scaled Lasso

struct ScaledLassoOptions {
  int max_outer = 500;
  double sigma_tol = 1e-8;
  int max_sweeps = 10000;
  double cd_tol = 1e-12;
  double sigma_floor = 0.0;
  double lambda0 = -1.0;  // negative: sqrt(2.01 log p / n)
};

struct ScaledLassoFit {
  Vec beta_hat;
  double sigma_hat = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // joint objective after each outer round
};

inline double soft_threshold(double z, double t) {
  return z > t ? z - t : (z < -t ? z + t : 0.0);
}

namespace detail {

// Cyclic coordinate descent on (1/2n)||r||^2 + pen * sum_j w_j |b_j|,
// with r = y - X b kept in sync. Full sweeps alternate with active-set passes.
inline void lasso_cd(const Mat& x, const Vec& col_sq, const Vec& w, double pen, Vec& b, Vec& r,
                     int max_sweeps, double tol) {
  const auto p = x.cols();
  const double n = static_cast<double>(x.rows());
  auto update = [&](Eigen::Index j) {
    if (col_sq(j) == 0) return 0.0;
    const double cj = col_sq(j) / n;
    const double z = x.col(j).dot(r) / n + cj * b(j);
    const double nb = soft_threshold(z, pen * w(j)) / cj;
    const double delta = nb - b(j);
    if (delta != 0) {
      r.noalias() -= delta * x.col(j);
      b(j) = nb;
    }
    return std::abs(delta) * std::sqrt(cj);
  };
  const double scale = std::max(r.norm() / std::sqrt(n), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double moved = 0;
    for (Eigen::Index j = 0; j < p; ++j) moved = std::max(moved, update(j));
    if (moved <= tol * scale) return;
    for (int inner = 0; inner < max_sweeps; ++inner) {
      double m2 = 0;
      for (Eigen::Index j = 0; j < p; ++j)
        if (b(j) != 0) m2 = std::max(m2, update(j));
      if (m2 <= tol * scale) break;
    }
  }
}

}  // namespace detail

inline ScaledLassoFit scaled_lasso(const Dataset& d, const ScaledLassoOptions& opt = {}) {
  const auto n = static_cast<double>(d.n());
  const auto p = d.x.cols();
  if (d.n() < 2 || p < 1) throw ConfigError("scaled lasso needs n >= 2 and p >= 1");
  const Vec col_sq = d.x.colwise().squaredNorm().transpose();
  if (col_sq.maxCoeff() == 0) throw ConfigError("all design columns are zero");
  const Vec w = (col_sq / n).cwiseSqrt();
  const double lam0 = opt.lambda0 > 0 ? opt.lambda0 : std::sqrt(2.01 * std::log(static_cast<double>(p)) / n);

  ScaledLassoFit fit;
  fit.beta_hat = Vec::Zero(p);
  Vec r = d.y;
  auto next_sigma = [&]() {
    const double s = r.norm() / std::sqrt(n);
    if (s > opt.sigma_floor) return s;
    if (opt.sigma_floor > 0) return opt.sigma_floor;
    throw ZeroResidualDegenerate("residual is exactly zero; sigma undefined");
  };
  auto objective = [&](double s) {
    return r.squaredNorm() / (2 * n * s) + s / 2 + lam0 * w.cwiseProduct(fit.beta_hat.cwiseAbs()).sum();
  };
  double sigma = next_sigma();
  for (int it = 1; it <= opt.max_outer; ++it) {
    detail::lasso_cd(d.x, col_sq, w, sigma * lam0, fit.beta_hat, r, opt.max_sweeps, opt.cd_tol);
    const double s_new = next_sigma();
    fit.objective.push_back(objective(s_new));
    fit.iterations = it;
    const bool done = std::abs(s_new - sigma) < opt.sigma_tol * sigma;
    sigma = s_new;
    if (done) {
      fit.converged = true;
      break;
    }
  }
  fit.sigma_hat = sigma;
  return fit;
}

// ---------------------------------------------------------- sample covariance

inline Mat sample_cov(const Dataset& d) {
  Mat s = Mat::Zero(d.x.cols(), d.x.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(d.x.transpose(), 1.0 / static_cast<double>(d.n()));
  return s.selfadjointView<Eigen::Lower>();
}

// ------------------------------------------------------ projection direction

struct ProjectionOptions {
  int max_sweeps = 20000;
  double kkt_tol = 1e-9;
};

struct ProjectionResult {
  Vec u_hat;
  bool feasible = false;
  double radius = 0;
  double objective = 0;
  int sweeps = 0;
};

inline double projection_radius(double xi_l2, double c_xi, std::size_t n, std::size_t p) {
  return c_xi * xi_l2 * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

// min u' S u  s.t. ||S u - xi||_inf <= radius, solved through the equivalent
// penalized problem min (1/2) u' S u - xi' u + radius ||u||_1 whose KKT
// conditions are exactly primal feasibility plus complementary slackness.
inline ProjectionResult projection_direction_at(const Mat& s, const Vec& xi, double radius,
                                                const ProjectionOptions& opt = {}) {
  const auto p = s.rows();
  ProjectionResult res;
  res.radius = radius;
  res.u_hat = Vec::Zero(p);
  Vec u = Vec::Zero(p), g = Vec::Zero(p);  // g = S u
  const double tol = opt.kkt_tol * std::max(xi.norm(), 1.0);
  const double blowup = 1e12 * std::max(xi.norm(), 1.0);

  auto kkt = [&](Eigen::Index j) {
    const double grad = g(j) - xi(j);
    if (u(j) != 0) return std::abs(grad + radius * (u(j) > 0 ? 1.0 : -1.0));
    return std::max(0.0, std::abs(grad) - radius);
  };
  auto update = [&](Eigen::Index j) {
    const double sjj = s(j, j);
    if (sjj <= 0) return;
    const double z = xi(j) - (g(j) - sjj * u(j));
    const double nu = soft_threshold(z, radius) / sjj;
    const double delta = nu - u(j);
    if (delta != 0) {
      g.noalias() += delta * s.col(j);
      u(j) = nu;
    }
  };
  bool diverged = false;
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    res.sweeps = sweep + 1;
    for (Eigen::Index j = 0; j < p; ++j) update(j);
    for (int inner = 0; inner < 50; ++inner) {
      double worst = 0;
      for (Eigen::Index j = 0; j < p; ++j)
        if (u(j) != 0) {
          update(j);
          worst = std::max(worst, kkt(j));
        }
      if (worst <= tol) break;
    }
    double worst = 0;
    for (Eigen::Index j = 0; j < p; ++j) worst = std::max(worst, kkt(j));
    if (worst <= tol) break;
    if (!(u.cwiseAbs().maxCoeff() < blowup)) {
      diverged = true;
      break;
    }
  }
  if (diverged) return res;
  const double viol = (g - xi).cwiseAbs().maxCoeff();
  if (viol <= radius * (1 + 1e-8) + 1e-14) {
    res.u_hat = u;
    res.feasible = true;
    res.objective = u.dot(g);
  }
  return res;
}

inline ProjectionResult projection_direction(const Mat& s, const Vec& xi, double c_xi, std::size_t n,
                                             const ProjectionOptions& opt = {}) {
  return projection_direction_at(s, xi, projection_radius(xi.norm(), c_xi, n, static_cast<std::size_t>(s.rows())), opt);
}

inline ProjectionResult projection_direction(const Mat& s, const LoadingVector& xi, double c_xi, std::size_t n,
                                             const ProjectionOptions& opt = {}) {
  return projection_direction(s, xi.original(), c_xi, n, opt);
}

// ------------------------------------------------- sparse spiked covariance

// Gamma_B(A): A on B x B, identity elsewhere.
inline Mat gamma_b(const Mat& a, const std::vector<std::size_t>& b) {
  Mat out = Mat::Identity(a.rows(), a.cols());
  for (auto i : b)
    for (auto j : b) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

inline Mat submatrix(const Mat& a, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
  return out;
}

struct SpikedCovFit {
  Mat sigma_hat_spike;
  Mat omega_hat;
  std::vector<std::size_t> b_hat;
  bool fell_back_identity = false;
  std::size_t pairs_checked = 0;
};

struct SpikedOptions {
  double gamma_star = 3.0;
  double m1 = 10.0;
  double combination_cap = 1e7;
};

// Exhaustive search over candidate supports B, |B| <= k_u, ordered by
// (|B|, indices). B is admissible when every D outside B with |D| <= k_u
// passes the Wishart deviation bound and the cross-block bound. Candidates
// whose block leaves the eigenvalue window [1/M1, M1] are skipped.
inline SpikedCovFit spiked_cov_estimate(const Dataset& d, int k_u, const SpikedOptions& opt = {}) {
  const std::size_t p = d.p();
  if (d.n() < 2) throw ConfigError("spiked estimator needs n >= 2");
  if (opt.gamma_star < 3) throw ConfigError("gamma_star must be at least 3");
  if (p > 64) throw BudgetExceeded("exhaustive support search supports p <= 64");
  const Mat s = sample_cov(d);
  const double n1 = static_cast<double>(d.n());
  const double lp = std::log(static_cast<double>(p));
  const auto ku = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(k_u), p));

  double total = 0;
  for (std::size_t b = 0; b <= ku; ++b) total += binomial_count(p, b);
  double dcount = 0;
  for (std::size_t b = 0; b <= ku; ++b) dcount += binomial_count(p, b);
  if (total * dcount > opt.combination_cap) throw BudgetExceeded("support enumeration exceeds the combination cap");

  auto dev = [&](double dsize) {
    return std::sqrt(dsize / n1) + std::sqrt(opt.gamma_star * dsize * lp / n1);
  };
  std::unordered_map<std::uint64_t, bool> wishart_ok;
  auto mask_of = [](const std::vector<std::size_t>& v) {
    std::uint64_t m = 0;
    for (auto i : v) m |= std::uint64_t{1} << i;
    return m;
  };
  auto cond1 = [&](const std::vector<std::size_t>& dset) {
    const auto key = mask_of(dset);
    auto it = wishart_ok.find(key);
    if (it != wishart_ok.end()) return it->second;
    Mat sdd = submatrix(s, dset, dset);
    sdd.diagonal().array() -= 1.0;
    const double t = dev(static_cast<double>(dset.size()));
    const bool ok = sym_op_norm(sdd) <= 2 * t + t * t;
    wishart_ok.emplace(key, ok);
    return ok;
  };

  SpikedCovFit fit;
  bool found = false;
  for (std::size_t bsize = 0; bsize <= ku && !found; ++bsize) {
    for_each_combination(p, bsize, [&](const std::vector<std::size_t>& b) {
      const Mat sbb = submatrix(s, b, b);
      double gamma_norm = b.size() < p ? 1.0 : 0.0;
      if (!b.empty()) {
        Eigen::SelfAdjointEigenSolver<Mat> es(sbb, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(es.eigenvalues().size() - 1);
        if (lo < 1.0 / opt.m1 || hi > opt.m1) return true;
        gamma_norm = std::max(gamma_norm, hi);
      }
      std::vector<std::size_t> rest;
      for (std::size_t i = 0, k = 0; i < p; ++i) {
        if (k < b.size() && b[k] == i) {
          ++k;
          continue;
        }
        rest.push_back(i);
      }
      bool ok = true;
      for (std::size_t dsize = 1; dsize <= std::min(ku, rest.size()) && ok; ++dsize) {
        for_each_combination(rest.size(), dsize, [&](const std::vector<std::size_t>& sel) {
          std::vector<std::size_t> dset(sel.size());
          for (std::size_t i = 0; i < sel.size(); ++i) dset[i] = rest[sel[i]];
          ++fit.pairs_checked;
          if (!cond1(dset)) return ok = false;
          if (!b.empty()) {
            const double bound = std::sqrt(gamma_norm) *
                                 (std::sqrt(static_cast<double>(dsize) / n1) +
                                  std::sqrt(static_cast<double>(b.size()) / n1) +
                                  std::sqrt(opt.gamma_star * static_cast<double>(dsize) * lp / n1));
            if (op_norm(submatrix(s, dset, b)) > bound) return ok = false;
          }
          return true;
        });
      }
      if (ok) {
        fit.b_hat = b;
        found = true;
        return false;
      }
      return true;
    });
  }
  const auto pp = static_cast<Eigen::Index>(p);
  fit.omega_hat = Mat::Identity(pp, pp);
  if (!found) {
    fit.fell_back_identity = true;
    fit.sigma_hat_spike = Mat::Identity(pp, pp);
    return fit;
  }
  fit.sigma_hat_spike = gamma_b(s, fit.b_hat);
  if (!fit.b_hat.empty()) {
    const Mat inv = submatrix(s, fit.b_hat, fit.b_hat).inverse();
    for (std::size_t i = 0; i < fit.b_hat.size(); ++i)
      for (std::size_t j = 0; j < fit.b_hat.size(); ++j)
        fit.omega_hat(static_cast<Eigen::Index>(fit.b_hat[i]), static_cast<Eigen::Index>(fit.b_hat[j])) =
            inv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return fit;
}

}  // namespace adaptest
