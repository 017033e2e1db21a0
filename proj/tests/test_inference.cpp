#include <gtest/gtest.h>

#include <adaptest/inference.hpp>
#include <cmath>
#include <vector>

using namespace adaptest;

namespace {

ModelParams sparse_params(std::size_t p, std::size_t k, double value = 1.0) {
  ModelParams th;
  th.beta = Vec::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < k; ++j) th.beta(static_cast<Eigen::Index>(j)) = (j % 2 ? -value : value);
  th.sigma_cov = Mat::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  th.noise_sd = 1.0;
  return th;
}

Vec dense_loading(std::size_t p, std::size_t support) {
  Vec xi = Vec::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < support; ++j) xi(static_cast<Eigen::Index>(j)) = 1.0 / std::sqrt(static_cast<double>(support));
  return xi;
}

double binom_se(double q, int n) { return std::sqrt(q * (1 - q) / n); }

}  // namespace

TEST(Plugin, RadiusArithmetic) {
  ScaledLassoFit fit;
  fit.beta_hat = Vec::Zero(100);
  fit.beta_hat(0) = 0.3;
  fit.sigma_hat = 1.0;
  Vec xi = Vec::Zero(100);
  xi(0) = 1;
  const auto ci = plugin_ci(fit, xi, 2, 100, 100, 0.05, 4.4);
  EXPECT_NEAR(ci.radius, 4.4 * 2 * std::sqrt(std::log(100.0) / 100), 1e-12);
  EXPECT_NEAR(ci.radius, 1.8879, 1e-3);
  EXPECT_DOUBLE_EQ(ci.center, 0.3);
  fit.sigma_hat = 2.0;
  EXPECT_EQ(plugin_ci(fit, xi, 2, 100, 100, 0.05, 4.4).radius, 2 * ci.radius);
}

TEST(Debiased, ZeroDirection) {
  Rng rng(2);
  Dataset d;
  d.x = standard_normal_matrix(80, 10, rng);
  d.y = Vec::Zero(80);
  for (int i = 0; i < 80; ++i) d.y(i) = rng.normal() + d.x(i, 0);
  const auto fit = scaled_lasso(d);
  ProjectionResult proj;
  proj.u_hat = Vec::Zero(10);
  proj.feasible = true;
  Vec xi = Vec::Zero(10);
  xi(0) = 0.6;
  xi(4) = 0.8;
  const auto ci = debiased_ci(d, fit, proj, xi, 3, 0.05, 2.0, 4.0);
  EXPECT_DOUBLE_EQ(ci.center, xi.dot(fit.beta_hat));
  EXPECT_NEAR(ci.radius, 1.1 * fit.sigma_hat * 4.0 * 2.0 * 1.0 * 3 * std::log(10.0) / 80, 1e-12);
}

TEST(Debiased, RadiusLinearInXiNormForIdentityDesign) {
  // X'X/n = I: the projection is a soft threshold, so scaling xi scales both radius terms.
  const int n = 200, p = 20;
  Rng rng(3);
  Eigen::HouseholderQR<Mat> qr(standard_normal_matrix(n, p, rng));
  Dataset d;
  d.x = std::sqrt(static_cast<double>(n)) * Mat(qr.householderQ() * Mat::Identity(n, p));
  d.y = Vec::Zero(n);
  for (int i = 0; i < n; ++i) d.y(i) = rng.normal();
  const auto fit = scaled_lasso(d);
  const Mat s = sample_cov(d);
  Vec xi = Vec::Zero(p);
  xi(0) = 1;
  xi(1) = 0.5;
  xi(2) = 0.25;
  const double c_xi = 2.0;
  auto radius = [&](const Vec& v) {
    return debiased_ci(d, fit, projection_direction(s, v, c_xi, n), v, 2, 0.05, c_xi, 4.0).radius;
  };
  const double r1 = radius(xi);
  EXPECT_NEAR(radius(3 * xi), 3 * r1, 1e-8 * r1);
  EXPECT_NEAR(radius(0.1 * xi), 0.1 * r1, 1e-8 * r1);
}

TEST(Minkowski, AdditiveCommutativeAndLevels) {
  ConfidenceInterval a{1.0, 0.5, 0.97, {{"a", 0.03}}, false};
  ConfidenceInterval b{-2.0, 0.25, 0.98, {{"b", 0.02}}, false};
  const auto ab = minkowski(a, b), ba = minkowski(b, a);
  EXPECT_EQ(ab.center, -1.0);
  EXPECT_EQ(ab.radius, 0.75);
  EXPECT_NEAR(ab.level, 0.95, 1e-15);
  EXPECT_EQ(ab.center, ba.center);
  EXPECT_EQ(ab.radius, ba.radius);
  EXPECT_EQ(ab.budget.size(), 2u);
}

TEST(Decision, RejectIffOutside) {
  ConfidenceInterval ci{1.0, 0.5, 0.95, {}, false};
  EXPECT_FALSE(decide(ci, 1.5, 0).reject);
  EXPECT_TRUE(decide(ci, 1.5000001, 0).reject);
  EXPECT_TRUE(decide(ci, 0.4, 0).reject);
}

class MixedFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    d = generate_dataset(sparse_params(60, 3), 120, 77);
    Vec raw(60);
    Rng rng(78);
    for (int j = 0; j < 60; ++j) raw(j) = rng.normal() / (1 + j);
    xi = make_loading(raw);
    ctx = prepare_mixed(d, cfg);
  }
  Dataset d;
  LoadingVector xi;
  InferenceConfig cfg;
  MixedContext ctx;
};

TEST_F(MixedFixture, EndpointsRecoverPluginAndDebiased) {
  const double ac = component_alpha(0.05, 0.1);
  const auto m0 = mixed_ci(d, ctx, xi, 0, 3, ac, cfg);
  const auto pl = plugin_ci(ctx.fit, xi.original(), 3, d.n(), d.p(), ac, cfg.c_pi);
  EXPECT_EQ(m0.center, pl.center);
  EXPECT_EQ(m0.radius, pl.radius);
  const auto mp = mixed_ci(d, ctx, xi, d.p(), 3, ac, cfg);
  const auto proj = projection_direction(ctx.s_hat, xi.original(), cfg.c_xi, d.n(), cfg.projection);
  const auto db = debiased_ci(d, ctx.fit, proj, xi.original(), 3, ac, cfg.c_xi, cfg.c_beta);
  EXPECT_EQ(mp.center, db.center);
  EXPECT_EQ(mp.radius, db.radius);
  EXPECT_THROW(mixed_ci(d, ctx, xi, d.p() + 1, 3, ac, cfg), ConfigError);
}

TEST_F(MixedFixture, ScanNoWorseThanEndpoints) {
  InferenceConfig scan = cfg;
  scan.scan_all_m = true;
  TestProblem pr{xi, 0.0, 3, 0.05, 0.1};
  const auto dec = mixed_test(d, ctx, pr, scan);
  const double ac = component_alpha(0.05, 0.1);
  EXPECT_LE(dec.interval.radius, mixed_ci(d, ctx, xi, 0, 3, ac, cfg).radius);
  EXPECT_LE(dec.interval.radius, mixed_ci(d, ctx, xi, d.p(), 3, ac, cfg).radius);
  EXPECT_NEAR(dec.interval.level, 1 - 2 * ac, 1e-15);
}

TEST_F(MixedFixture, ScalingInvariance) {
  for (double c : {0.5, 3.0}) {
    for (double t0 : {-1.0, 0.2, 0.9, 4.0}) {
      LoadingVector xs = xi;
      xs.coords *= c;
      const auto a = mixed_test(d, ctx, TestProblem{xi, t0, 3, 0.05, 0.1}, cfg);
      const auto b = mixed_test(d, ctx, TestProblem{xs, c * t0, 3, 0.05, 0.1}, cfg);
      EXPECT_EQ(a.reject, b.reject);
      EXPECT_NEAR(b.interval.radius, c * a.interval.radius, 1e-8 * c * a.interval.radius);
      EXPECT_NEAR(b.interval.center, c * a.interval.center, 1e-8 * (1 + std::abs(c * a.interval.center)));
    }
  }
}

TEST(KnownSigma, OddSampleSize) {
  const auto d = generate_dataset(sparse_params(10, 1), 31, 1);
  EXPECT_THROW(known_sigma_ci(d, Mat::Identity(10, 10), dense_loading(10, 2), 1, 0.05, 3), OddSampleSize);
  EXPECT_THROW(spiked_ci(d, dense_loading(10, 2), 1, 0.05, 3), OddSampleSize);
}

TEST(KnownSigma, RadiusIndependentOfSparsity) {
  const auto d = generate_dataset(sparse_params(30, 2), 100, 4);
  const Vec xi = dense_loading(30, 5);
  const auto a = known_sigma_ci(d, Mat::Identity(30, 30), xi, 1, 0.05, 9);
  const auto b = known_sigma_ci(d, Mat::Identity(30, 30), xi, 20, 0.05, 9);
  EXPECT_EQ(a.radius, b.radius);
  EXPECT_EQ(a.center, b.center);
}

TEST(KnownSigma, CenterNullDistribution) {
  const std::size_t n = 200, p = 50;
  const auto th = sparse_params(p, 0);
  const Vec xi = dense_loading(p, 10) * 2.0;
  std::vector<double> c;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    const auto d = generate_dataset(th, n, stream_seed(5, r));
    c.push_back(known_sigma_ci(d, Mat::Identity(p, p), xi, 2, 0.05, stream_seed(6, r)).center);
  }
  double mean = 0, var = 0;
  for (double v : c) mean += v;
  mean /= static_cast<double>(c.size());
  for (double v : c) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(c.size() - 1));
  const double expect_sd = xi.norm() / std::sqrt(n / 2.0);
  EXPECT_LE(std::abs(mean), 4 * expect_sd / std::sqrt(2000.0));
  EXPECT_NEAR(sd / expect_sd, 1.0, 0.2);
}

TEST(KnownSigma, Coverage) {
  const std::size_t n = 600, p = 300;
  const auto th = sparse_params(p, 3);
  const Vec xi = dense_loading(p, 50);
  const double truth = xi.dot(th.beta);
  const int reps = 300;
  int cover = 0;
  for (int r = 0; r < reps; ++r) {
    const auto d = generate_dataset(th, n, stream_seed(11, static_cast<std::uint64_t>(r)));
    cover += known_sigma_ci(d, Mat::Identity(p, p), xi, 3, 0.05, stream_seed(12, static_cast<std::uint64_t>(r))).contains(truth);
  }
  EXPECT_GE(cover / static_cast<double>(reps), 0.95 - 0.03 - 3 * binom_se(0.95, reps));
}

TEST(Debiased, Coverage) {
  const std::size_t n = 500, p = 200;
  const auto th = sparse_params(p, 3);
  const Vec xi = dense_loading(p, 50);
  const double truth = xi.dot(th.beta);
  InferenceConfig cfg;
  const double alpha = 0.05;
  const int reps = 1000;
  int cover = 0;
  for (int r = 0; r < reps; ++r) {
    const auto d = generate_dataset(th, n, stream_seed(21, static_cast<std::uint64_t>(r)));
    const auto ctx = prepare_mixed(d, cfg);
    const auto proj = projection_direction(ctx.s_hat, xi, cfg.c_xi, n);
    cover += debiased_ci(d, ctx.fit, proj, xi, 3, alpha, cfg.c_xi, cfg.c_beta).contains(truth);
  }
  EXPECT_GE(cover / static_cast<double>(reps), 1 - alpha - 0.03 - 3 * binom_se(1 - alpha, reps));
}

TEST(Spiked, IdentityPrecisionMatchesKnownSigmaCenter) {
  const auto d = generate_dataset(sparse_params(8, 2), 100, 31);
  auto [h1, h2] = split_halves(d, 5);
  const auto fit = scaled_lasso(h1);
  SpikedCovFit sf;
  sf.omega_hat = Mat::Identity(8, 8);
  sf.sigma_hat_spike = Mat::Identity(8, 8);
  const Vec xi = dense_loading(8, 3);
  const auto sc = spiked_ci(h2, fit, sf, xi, 2, d.n(), 0.05);
  const auto kc = known_sigma_ci(d, Mat::Identity(8, 8), xi, 2, 0.05, 5);
  EXPECT_NEAR(sc.center, kc.center, 1e-12);
}

TEST(Spiked, CoverageWithPilotCalibration) {
  const int p = 8, k_u = 2, n = 800;
  auto th = sparse_params(p, 2);
  Vec v = Vec::Zero(p);
  v(0) = v(1) = 1 / std::sqrt(2.0);
  th.sigma_cov += 0.5 * v * v.transpose();
  const Vec xi = dense_loading(p, 4);
  const double truth = xi.dot(th.beta);
  const double scale_tail = top_norm(make_loading(xi), k_u) * k_u * std::log(static_cast<double>(p)) / n;
  std::vector<double> ratios;
  for (int r = 0; r < 400; ++r) {
    const auto d = generate_dataset(th, n, stream_seed(43, static_cast<std::uint64_t>(r)));
    const auto out = spiked_ci(d, xi, k_u, 0.05, stream_seed(44, static_cast<std::uint64_t>(r)));
    ratios.push_back((out.ci.center - truth) / (out.lasso_fit.sigma_hat * (xi.norm() / std::sqrt(n) + scale_tail)));
  }
  InferenceConfig cfg;
  cfg.c_spike = cfg.c_spike_tail = calibrate_constant(ratios, 0.05);
  const int reps = 200;
  int cover = 0;
  for (int r = 0; r < reps; ++r) {
    const auto d = generate_dataset(th, n, stream_seed(41, static_cast<std::uint64_t>(r)));
    cover += spiked_ci(d, xi, k_u, 0.05, stream_seed(42, static_cast<std::uint64_t>(r)), cfg).ci.contains(truth);
  }
  EXPECT_GE(cover / static_cast<double>(reps), 0.95 - 0.05 - 3 * binom_se(0.95, reps));
}

TEST(Calibration, EmpiricalQuantile) {
  std::vector<double> r;
  for (int i = 1; i <= 100; ++i) r.push_back(i % 2 ? i : -i);
  EXPECT_EQ(calibrate_constant(r, 0.05), 95.0);
  EXPECT_EQ(calibrate_constant(r, 0.0), 100.0);
  EXPECT_THROW(calibrate_constant({}, 0.05), ConfigError);
}

TEST(Modes, ParseRoundTrip) {
  for (auto m : {TestMode::mixed, TestMode::plugin, TestMode::debiased, TestMode::known_sigma, TestMode::spiked})
    EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_THROW(parse_mode("oracle"), ConfigError);
}
