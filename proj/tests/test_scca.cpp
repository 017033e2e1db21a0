#include <gtest/gtest.h>

#include <adaptest/scca.hpp>
#include <cmath>
#include <sstream>
#include <vector>

using namespace adaptest;

namespace {

// Brute force over every s-row and s-column subset.
double scan_brute(const Mat& r, std::size_t s) {
  double best = -1e300;
  const auto p1 = static_cast<std::size_t>(r.rows()), p2 = static_cast<std::size_t>(r.cols());
  for (unsigned rm = 0; rm < (1u << p1); ++rm) {
    if (static_cast<std::size_t>(__builtin_popcount(rm)) != s) continue;
    for (unsigned cm = 0; cm < (1u << p2); ++cm) {
      if (static_cast<std::size_t>(__builtin_popcount(cm)) != s) continue;
      double t = 0;
      for (std::size_t i = 0; i < p1; ++i)
        for (std::size_t j = 0; j < p2; ++j)
          if ((rm >> i & 1) && (cm >> j & 1)) t += r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      best = std::max(best, t / static_cast<double>(s * s));
    }
  }
  return best;
}

Mat sample_cov_of(const Mat& v) {
  return v.transpose() * v / static_cast<double>(v.rows());
}

}  // namespace

TEST(Generate, NullCrossCovarianceEnvelope) {
  const SccaParams prm{1000, 2, 20, 30, 0.0};
  const double bound = 5 * std::sqrt(std::log(20.0 * 30.0) / 1000);
  int ok = 0;
  for (std::uint64_t s = 0; s < 200; ++s) ok += gen_scca(prm, Hypothesis::null, s).r_hat().cwiseAbs().maxCoeff() <= bound;
  EXPECT_GE(ok, 198);
}

TEST(Generate, AltOnSupportMean) {
  const SccaParams prm{500, 3, 10, 12, 0.4};
  const int reps = 400;
  std::vector<double> m;
  for (int i = 0; i < reps; ++i) {
    const auto in = gen_scca(prm, Hypothesis::alt, stream_seed(3, static_cast<std::uint64_t>(i)));
    ASSERT_EQ((in.delta1.array() != 0).count(), 3);
    ASSERT_EQ((in.delta2.array() != 0).count(), 3);
    for (Eigen::Index j = 0; j < in.delta1.size(); ++j)
      if (in.delta1(j) != 0) {
        EXPECT_DOUBLE_EQ(in.delta1(j), 1 / std::sqrt(3.0));
      }
    const Mat r = in.r_hat();
    double t = 0;
    for (Eigen::Index a = 0; a < 10; ++a)
      for (Eigen::Index b = 0; b < 12; ++b)
        if (in.delta1(a) != 0 && in.delta2(b) != 0) t += r(a, b);
    m.push_back(t / 9);
  }
  double mean = 0, var = 0;
  for (double v : m) mean += v;
  mean /= reps;
  for (double v : m) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / (reps - 1) / reps);
  EXPECT_NEAR(mean, 0.4 / 3, 3 * se);
}

TEST(Generate, ScalarCorrelation) {
  const auto in = gen_scca({10000, 1, 1, 1, 0.3}, Hypothesis::alt, 5);
  const Vec a = in.u1.col(0), b = in.u2.col(0);
  const double ma = a.mean(), mb = b.mean();
  const double corr = (a.array() - ma).matrix().dot((b.array() - mb).matrix()) /
                      std::sqrt((a.array() - ma).square().sum() * (b.array() - mb).square().sum());
  EXPECT_NEAR(corr, 0.3, 3 * (1 - 0.09) / std::sqrt(10000.0));
}

TEST(Generate, Errors) {
  EXPECT_THROW(gen_scca({10, 1, 3, 3, 1.0}, Hypothesis::alt, 1), NotPD);
  EXPECT_THROW(gen_scca({10, 1, 3, 3, 0.6}, Hypothesis::alt, 1), ConfigError);
  EXPECT_THROW(gen_scca({10, 4, 3, 3, 0.1}, Hypothesis::alt, 1), ConfigError);
}

TEST(Statistics, HandExample) {
  Mat r = Mat::Zero(3, 4);
  r(1, 2) = 1;
  EXPECT_DOUBLE_EQ(scan_stat(r, 2), 0.25);
  EXPECT_DOUBLE_EQ(entrywise_max(r), 1.0);
  EXPECT_DOUBLE_EQ(max_col(r, 2), 0.5);
  EXPECT_DOUBLE_EQ(max_row(r, 2), 0.5);
  EXPECT_DOUBLE_EQ(global_sum(Mat::Ones(2, 2)), 1.0);
}

TEST(Statistics, ScanMatchesBruteForceAndEntrywiseAtOne) {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Mat r = standard_normal_matrix(5, 7, rng);
    EXPECT_DOUBLE_EQ(scan_stat(r, 1), entrywise_max(r));
    for (std::size_t s : {2u, 3u}) EXPECT_NEAR(scan_stat(r, s), scan_brute(r, s), 1e-12);
  }
}

TEST(Statistics, ScanBudget) {
  const Mat r = Mat::Zero(40, 40);
  EXPECT_THROW(scan_stat(r, 5, 1e6), ScanBudgetExceeded);
}

TEST(Boundaries, OrderingAndExample) {
  EXPECT_NEAR(boundary_table(10000, 4, 100, 100)[0], std::sqrt(4 * std::log(100.0) / 10000), 1e-15);
  EXPECT_NEAR(boundary_table(10000, 4, 100, 100)[0], 0.04292, 1e-5);
  for (std::size_t n : {100u, 5000u})
    for (std::size_t s : {1u, 2u, 5u})
      for (std::size_t p1 : {5u, 20u})
        for (std::size_t p2 : {20u, 50u}) {
          const auto b = boundary_table(n, s, p1, p2);
          EXPECT_LE(b[0], b[1] * (1 + 1e-15));
          EXPECT_NEAR(b[1] / b[0], std::sqrt(static_cast<double>(s)), 1e-12);
          if (s <= p1) {
            EXPECT_LE(b[0], b[2] * (1 + 1e-15));
          }
        }
}

TEST(Boundaries, ThresholdFormulas) {
  const auto t = thresholds(400, 2, 6, 9, 3.0);
  EXPECT_NEAR(t[0], 3 * std::sqrt(std::log(15.0 * 36.0) / (400.0 * 4)), 1e-12);
  EXPECT_NEAR(t[1], 3 * std::sqrt(std::log(54.0) / 400), 1e-12);
  EXPECT_NEAR(t[2], 3 * std::sqrt(6 * std::log(9.0) / 1600), 1e-12);
  EXPECT_NEAR(t[3], 3 * std::sqrt(9 * std::log(6.0) / 1600), 1e-12);
  EXPECT_NEAR(t[4], 3 / std::sqrt(400.0 * 54), 1e-12);
}

TEST(Calibration, NullFalsePositiveRate) {
  const SccaParams prm{500, 2, 6, 10, 0.0};
  const auto c = calibrate_scca(prm, 500, 0.05, 11);
  const auto fpr = scca_power(prm, Hypothesis::null, c, 500, 12);
  const double se = std::sqrt(0.05 * 0.95 / 500);
  for (double v : fpr) EXPECT_LE(v, 0.05 + 3 * se);
}

TEST(Reduction, TauArithmetic) {
  EXPECT_NEAR(tau_red(0.1, 1.0, 0.2, 5, 100), 0.1 / 1.9996 * 0.02, 1e-18);
  EXPECT_NEAR(tau_red(0.1, 1.0, 0.2, 5, 100), 1.00020e-3, 1e-8);
}

TEST(Reduction, NullCovarianceAndMoments) {
  const std::size_t n = 10000;
  const auto in = gen_scca({2 * n, 1, 5, 6, 0.0}, Hypothesis::null, 21);
  const auto red = reduce_to_lt(in, 1.0, 0.3, 0.0, 22);
  Mat v(static_cast<Eigen::Index>(n), 12);
  v.col(0) = red.untranslated.y;
  v.rightCols(11) = red.untranslated.x;
  const Mat cov = sample_cov_of(v);
  EXPECT_LE((cov - Mat::Identity(12, 12)).cwiseAbs().maxCoeff(), 5 / std::sqrt(static_cast<double>(n)));
  for (Eigen::Index j = 0; j < 12; ++j) {
    const double m3 = v.col(j).array().cube().mean();
    EXPECT_LE(std::abs(m3), 5 * std::sqrt(15.0 / n)) << j;
    const double m4 = v.col(j).array().pow(4).mean();
    EXPECT_NEAR(m4, 3.0, 5 * std::sqrt(96.0 / n)) << j;
  }
  EXPECT_LE((red.data.y - red.untranslated.y - red.untranslated.x * red.beta0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(red.data.n(), n);
  EXPECT_EQ(red.problem.k_u, 4);
  EXPECT_EQ(red.problem.xi.k_xi, 5u);
  EXPECT_DOUBLE_EQ(red.beta0(0), -red.tau_red);
}

TEST(Reduction, NullVarianceScalesWithSigmaStar) {
  const std::size_t n = 4000;
  const auto in = gen_scca({2 * n, 1, 4, 4, 0.0}, Hypothesis::null, 23);
  const auto red = reduce_to_lt(in, 5.0, 0.3, 0.0, 24);
  const double var = red.untranslated.y.squaredNorm() / n;
  EXPECT_NEAR(var / 25.0, 1.0, 5 * std::sqrt(2.0 / n));
}

TEST(Reduction, DeterministicAndErrors) {
  const auto in = gen_scca({40, 1, 3, 4, 0.2}, Hypothesis::alt, 31);
  const auto a = reduce_to_lt(in, 1.0, 0.5, 0.7, 32), b = reduce_to_lt(in, 1.0, 0.5, 0.7, 32);
  std::ostringstream sa, sb;
  write_dataset_binary(a.data, sa);
  write_dataset_binary(b.data, sb);
  EXPECT_EQ(sa.str(), sb.str());
  const auto odd = gen_scca({41, 1, 3, 4, 0.2}, Hypothesis::alt, 31);
  EXPECT_THROW(reduce_to_lt(odd, 1.0, 0.5, 0.7, 32), OddPairCount);
  EXPECT_THROW(reduce_to_lt(in, 1.0, 1.0, 0.7, 32), ConfigError);
}
