#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "io.hpp"
#include "rng.hpp"

namespace adaptest {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Loading vector stored by decreasing magnitude. perm[j] is the original
// (0-based) index of sorted coordinate j.
struct LoadingVector {
  Vec coords;
  std::vector<std::size_t> perm;
  std::size_t k_xi = 0;

  std::size_t size() const { return static_cast<std::size_t>(coords.size()); }

  Vec original() const {
    Vec raw = Vec::Zero(coords.size());
    for (std::size_t j = 0; j < perm.size(); ++j) raw(perm[j]) = coords(j);
    return raw;
  }

  double linf() const { return std::abs(coords(0)); }
  double l2() const { return coords.norm(); }
};

inline LoadingVector make_loading(const Vec& raw) {
  const auto p = static_cast<std::size_t>(raw.size());
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(raw(a)) > std::abs(raw(b));
  });
  LoadingVector lv;
  lv.coords.resize(raw.size());
  lv.perm = order;
  for (std::size_t j = 0; j < p; ++j) {
    lv.coords(j) = raw(order[j]);
    if (raw(order[j]) != 0.0) ++lv.k_xi;
  }
  if (lv.k_xi == 0) throw AllZeroLoading("loading vector is identically zero");
  return lv;
}

struct ParamCheck {
  bool ok = true;
  double lambda_min = 0, lambda_max = 0;
  std::string reason;
};

struct ModelParams {
  Vec beta;
  Mat sigma_cov;
  double noise_sd = 1.0;
  double m1 = 10.0;
  double m2 = 10.0;

  std::size_t p() const { return static_cast<std::size_t>(beta.size()); }

  ParamCheck check(double tol = 1e-10) const {
    ParamCheck c;
    Eigen::SelfAdjointEigenSolver<Mat> es(sigma_cov, Eigen::EigenvaluesOnly);
    c.lambda_min = es.eigenvalues()(0);
    c.lambda_max = es.eigenvalues()(es.eigenvalues().size() - 1);
    if (c.lambda_min < 1.0 / m1 - tol || c.lambda_max > m1 + tol) {
      c.ok = false;
      c.reason = "eigenvalue window";
    }
    if (!(noise_sd > 0) || noise_sd > m2 + tol) {
      c.ok = false;
      c.reason += c.reason.empty() ? "noise level" : ", noise level";
    }
    return c;
  }
};

struct Dataset {
  Mat x;
  Vec y;
  std::optional<std::uint64_t> seed;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(x.cols()); }

  Dataset rows(const std::vector<std::size_t>& idx) const {
    Dataset d;
    d.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    d.y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      d.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
      d.y(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(idx[i]));
    }
    return d;
  }
};

// Joint covariance of (Y, X): index 0 is Y, indices 1..p are X.
struct JointCovariance {
  Mat sigma_z;

  Eigen::Index p() const { return sigma_z.rows() - 1; }
  double yy() const { return sigma_z(0, 0); }
  Vec xy() const { return sigma_z.col(0).tail(p()); }
  Mat xx() const { return sigma_z.bottomRightCorner(p(), p()); }
};

struct TestProblem {
  LoadingVector xi;
  double t0 = 0.0;
  int k_u = 1;
  double alpha = 0.05;
  double eta = 0.1;

  void validate() const {
    if (k_u < 1) throw ConfigError("k_u must be at least 1");
    if (!(alpha > 0 && eta > 0 && alpha + eta < 1))
      throw ConfigError("need alpha, eta > 0 and alpha + eta < 1");
  }
};

inline ModelParams h_map(const JointCovariance& jc, double m1 = 10.0, double m2 = 10.0) {
  const Mat sxx = jc.xx();
  const Vec sxy = jc.xy();
  Eigen::LDLT<Mat> ldlt(sxx);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NotPositiveDefinite("X block is not positive definite");
  ModelParams th;
  th.beta = ldlt.solve(sxy);
  th.sigma_cov = sxx;
  const double schur = jc.yy() - sxy.dot(th.beta);
  if (!(schur > 0)) throw NotPositiveDefinite("Schur complement is not positive");
  th.noise_sd = std::sqrt(schur);
  th.m1 = m1;
  th.m2 = m2;
  return th;
}

inline JointCovariance h_inv(const ModelParams& th) {
  const auto p = static_cast<Eigen::Index>(th.p());
  const Vec sb = th.sigma_cov * th.beta;
  JointCovariance jc;
  jc.sigma_z.resize(p + 1, p + 1);
  jc.sigma_z(0, 0) = th.beta.dot(sb) + th.noise_sd * th.noise_sd;
  jc.sigma_z.col(0).tail(p) = sb;
  jc.sigma_z.row(0).tail(p) = sb.transpose();
  jc.sigma_z.bottomRightCorner(p, p) = th.sigma_cov;
  return jc;
}

// Lower Cholesky factor; one retry with diagonal jitter 1e-12 * trace / p.
inline Mat cholesky_factor(const Mat& s) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const double jitter = 1e-12 * s.trace() / static_cast<double>(s.rows());
  Mat sj = s;
  sj.diagonal().array() += jitter;
  llt.compute(sj);
  if (llt.info() != Eigen::Success) throw CholeskyFailure("matrix is not numerically positive definite");
  return llt.matrixL();
}

inline Mat standard_normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Mat z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = rng.normal();
  return z;
}

inline Dataset generate_dataset(const ModelParams& th, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("n must be at least 1");
  const Mat l = cholesky_factor(th.sigma_cov);
  Rng rng(seed);
  Dataset d;
  const Mat z = standard_normal_matrix(n, th.p(), rng);
  if (l.isIdentity(0.0))
    d.x = z;
  else
    d.x = z * l.transpose().triangularView<Eigen::Upper>();
  d.y = d.x * th.beta;
  for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) += th.noise_sd * rng.normal();
  d.seed = seed;
  return d;
}

// ---- serialization ----

inline void write_dataset_binary(const Dataset& d, std::ostream& os) {
  std::vector<binary::Block> blocks{{"x", d.x}, {"y", d.y}};
  if (d.seed) {
    Mat s(1, 1);
    std::uint64_t v = *d.seed;
    std::memcpy(s.data(), &v, sizeof v);
    blocks.push_back({"seed", s});
  }
  binary::write(os, blocks);
}

inline Dataset read_dataset_binary(std::istream& is) {
  auto blocks = binary::read(is);
  Dataset d;
  d.x = binary::find(blocks, "x");
  d.y = binary::find(blocks, "y").col(0);
  for (const auto& b : blocks)
    if (b.name == "seed") {
      std::uint64_t v;
      std::memcpy(&v, b.data.data(), sizeof v);
      d.seed = v;
    }
  if (d.x.rows() != d.y.size()) throw ConfigError("row counts of x and y differ");
  return d;
}

inline void write_dataset_csv(const Dataset& d, std::ostream& os) {
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) os << 'x' << (j + 1) << ',';
  os << "y\n";
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) os << format_double(d.x(i, j)) << ',';
    os << format_double(d.y(i)) << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& is) {
  CsvTable t = read_csv(is);
  const auto cols = t.header.size();
  if (cols < 2 || t.header.back() != "y") throw ConfigError("dataset CSV needs x columns and a final y column");
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols - 1));
  d.y.resize(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < cols; ++j)
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][j];
    d.y(static_cast<Eigen::Index>(i)) = t.rows[i][cols - 1];
  }
  return d;
}

inline void write_params_binary(const ModelParams& th, std::ostream& os) {
  Mat scalars(3, 1);
  scalars << th.noise_sd, th.m1, th.m2;
  binary::write(os, {{"beta", th.beta}, {"sigma", th.sigma_cov}, {"scalars", scalars}});
}

inline ModelParams read_params_binary(std::istream& is) {
  auto blocks = binary::read(is);
  ModelParams th;
  th.beta = binary::find(blocks, "beta").col(0);
  th.sigma_cov = binary::find(blocks, "sigma");
  const Mat& s = binary::find(blocks, "scalars");
  th.noise_sd = s(0, 0);
  th.m1 = s(1, 0);
  th.m2 = s(2, 0);
  return th;
}

// Long format field,i,j,value with field codes 1 beta, 2 Sigma, 3 noise sd,
// 4 M1, 5 M2. Scalars use i = j = 0.
inline void write_params_csv(const ModelParams& th, std::ostream& os) {
  os << "field,i,j,value\n";
  for (Eigen::Index i = 0; i < th.beta.size(); ++i)
    os << "1," << i << ",0," << format_double(th.beta(i)) << '\n';
  for (Eigen::Index j = 0; j < th.sigma_cov.cols(); ++j)
    for (Eigen::Index i = 0; i < th.sigma_cov.rows(); ++i)
      os << "2," << i << ',' << j << ',' << format_double(th.sigma_cov(i, j)) << '\n';
  os << "3,0,0," << format_double(th.noise_sd) << '\n';
  os << "4,0,0," << format_double(th.m1) << '\n';
  os << "5,0,0," << format_double(th.m2) << '\n';
}

inline ModelParams read_params_csv(std::istream& is) {
  CsvTable t = read_csv(is);
  Eigen::Index p = 0;
  for (auto& r : t.rows)
    if (r[0] == 1) p = std::max<Eigen::Index>(p, static_cast<Eigen::Index>(r[1]) + 1);
  ModelParams th;
  th.beta = Vec::Zero(p);
  th.sigma_cov = Mat::Zero(p, p);
  for (auto& r : t.rows) {
    const auto i = static_cast<Eigen::Index>(r[1]), j = static_cast<Eigen::Index>(r[2]);
    switch (static_cast<int>(r[0])) {
      case 1: th.beta(i) = r[3]; break;
      case 2: th.sigma_cov(i, j) = r[3]; break;
      case 3: th.noise_sd = r[3]; break;
      case 4: th.m1 = r[3]; break;
      case 5: th.m2 = r[3]; break;
      default: throw ConfigError("unknown parameter field");
    }
  }
  return th;
}

}  // namespace adaptest
