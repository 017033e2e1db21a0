#include <gtest/gtest.h>

#include <sstream>

#include "adaptest/model_core.hpp"

using namespace adaptest;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ModelParams random_params(std::size_t p, Rng& rng) {
  Mat a = standard_normal_matrix(p, p, rng);
  ModelParams th;
  th.sigma_cov = a * a.transpose() / static_cast<double>(p) + Mat::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  th.beta = standard_normal_matrix(p, 1, rng).col(0);
  th.noise_sd = 0.5 + rng.uniform();
  return th;
}

}  // namespace

TEST(MakeLoading, SortsByMagnitude) {
  auto lv = make_loading(vec({0.2, -3, 1}));
  EXPECT_EQ(lv.coords, vec({-3, 1, 0.2}));
  EXPECT_EQ(lv.perm, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(lv.k_xi, 3u);
  EXPECT_EQ(lv.original(), vec({0.2, -3, 1}));
}

TEST(MakeLoading, AlreadySortedAndTies) {
  auto e1 = make_loading(vec({1, 0, 0}));
  EXPECT_EQ(e1.coords, vec({1, 0, 0}));
  EXPECT_EQ(e1.k_xi, 1u);
  auto t = make_loading(vec({1, -1, 1}));
  EXPECT_EQ(t.coords, vec({1, -1, 1}));
  EXPECT_EQ(t.perm, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(MakeLoading, AllZeroThrows) { EXPECT_THROW(make_loading(Vec::Zero(4)), AllZeroLoading); }

TEST(HMap, HandExample) {
  JointCovariance jc{(Mat(2, 2) << 2, 1, 1, 1).finished()};
  auto th = h_map(jc);
  EXPECT_NEAR(th.beta(0), 1, 1e-15);
  EXPECT_NEAR(th.sigma_cov(0, 0), 1, 1e-15);
  EXPECT_NEAR(th.noise_sd, 1, 1e-15);
  auto back = h_inv(th);
  EXPECT_NEAR((back.sigma_z - jc.sigma_z).cwiseAbs().maxCoeff(), 0, 1e-15);
}

TEST(HMap, BlockDiagonal) {
  Mat s = Mat::Identity(4, 4);
  s(0, 0) = 9;
  auto th = h_map({s});
  EXPECT_EQ(th.beta, Vec::Zero(3));
  EXPECT_EQ(th.sigma_cov, Mat::Identity(3, 3));
  EXPECT_DOUBLE_EQ(th.noise_sd, 3);
  ModelParams z{Vec::Zero(3), Mat::Identity(3, 3), 1.0};
  Mat expect = Mat::Identity(4, 4);
  EXPECT_EQ(h_inv(z).sigma_z, expect);
}

TEST(HMap, SchurComplementNotPositive) {
  JointCovariance jc{(Mat(2, 2) << 1, 1, 1, 1).finished()};
  EXPECT_THROW(h_map(jc), NotPositiveDefinite);
}

TEST(HMap, RoundTripRandom) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const auto th = random_params(1 + rng.index(8), rng);
    const auto back = h_map(h_inv(th));
    EXPECT_LE((back.beta - th.beta).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((back.sigma_cov - th.sigma_cov).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(back.noise_sd, th.noise_sd, 1e-12);
  }
}

TEST(ParamsCheck, EigenWindowAndNoise) {
  ModelParams th{Vec::Zero(2), Mat::Identity(2, 2), 1.0};
  EXPECT_TRUE(th.check().ok);
  th.sigma_cov(0, 0) = 20;
  EXPECT_FALSE(th.check().ok);
  th.sigma_cov(0, 0) = 1;
  th.noise_sd = 11;
  EXPECT_FALSE(th.check().ok);
}

TEST(Generate, SampleCovarianceEnvelope) {
  const std::size_t n = 5000, p = 6;
  ModelParams th{Vec::Zero(p), Mat::Identity(p, p), 1.0};
  auto d = generate_dataset(th, n, 3);
  const Mat s = d.x.transpose() * d.x / static_cast<double>(n);
  EXPECT_LE((s - Mat::Identity(p, p)).cwiseAbs().maxCoeff(), 5 / std::sqrt(double(n)));
}

TEST(Generate, NoiselessLimit) {
  Rng rng(5);
  auto th = random_params(5, rng);
  th.noise_sd = 1e-12;
  auto d = generate_dataset(th, 200, 9);
  EXPECT_LE((d.y - d.x * th.beta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Generate, DeterministicBytes) {
  Rng rng(6);
  auto th = random_params(4, rng);
  std::ostringstream a, b;
  write_dataset_binary(generate_dataset(th, 50, 77), a);
  write_dataset_binary(generate_dataset(th, 50, 77), b);
  EXPECT_EQ(a.str(), b.str());
  std::ostringstream c;
  write_dataset_binary(generate_dataset(th, 50, 78), c);
  EXPECT_NE(a.str(), c.str());
}

TEST(Generate, OperatorNormEnvelope) {
  Rng rng(8);
  const std::size_t p = 10, n = 10000;
  auto th = random_params(p, rng);
  auto d = generate_dataset(th, n, 21);
  const Mat s = d.x.transpose() * d.x / double(n);
  Eigen::SelfAdjointEigenSolver<Mat> es(s - th.sigma_cov);
  EXPECT_LE(es.eigenvalues().cwiseAbs().maxCoeff(), 10 * std::sqrt(double(p) / n));
}

TEST(Generate, CholeskyFailure) {
  ModelParams th{Vec::Zero(2), (Mat(2, 2) << 1, 2, 2, 1).finished(), 1.0};
  EXPECT_THROW(generate_dataset(th, 10, 1), CholeskyFailure);
}

TEST(Serialization, DatasetRoundTrips) {
  Rng rng(2);
  auto d = generate_dataset(random_params(3, rng), 20, 4);
  std::stringstream bin, csv;
  write_dataset_binary(d, bin);
  auto b = read_dataset_binary(bin);
  EXPECT_EQ(b.x, d.x);
  EXPECT_EQ(b.y, d.y);
  EXPECT_EQ(b.seed, d.seed);
  write_dataset_csv(d, csv);
  auto c = read_dataset_csv(csv);
  EXPECT_EQ(c.x, d.x);
  EXPECT_EQ(c.y, d.y);
}

TEST(Serialization, ParamsRoundTrips) {
  Rng rng(3);
  auto th = random_params(4, rng);
  th.m1 = 7;
  std::stringstream bin, csv;
  write_params_binary(th, bin);
  auto b = read_params_binary(bin);
  EXPECT_EQ(b.beta, th.beta);
  EXPECT_EQ(b.sigma_cov, th.sigma_cov);
  EXPECT_EQ(b.noise_sd, th.noise_sd);
  EXPECT_EQ(b.m1, 7);
  write_params_csv(th, csv);
  auto c = read_params_csv(csv);
  EXPECT_EQ(c.beta, th.beta);
  EXPECT_EQ(c.sigma_cov, th.sigma_cov);
  EXPECT_EQ(c.noise_sd, th.noise_sd);
}

TEST(Problem, Validation) {
  TestProblem pr;
  pr.xi = make_loading(vec({1}));
  EXPECT_NO_THROW(pr.validate());
  pr.alpha = 0.95;
  EXPECT_THROW(pr.validate(), ConfigError);
  pr.alpha = 0.05;
  pr.k_u = 0;
  EXPECT_THROW(pr.validate(), ConfigError);
}

TEST(RngStreams, DistinctAndReproducible) {
  EXPECT_NE(stream_seed(1, 0), stream_seed(1, 1));
  EXPECT_NE(stream_seed(1, 0, 1), stream_seed(1, 1, 0));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.normal(), b.normal());
  auto s = Rng(4).subset(10, 4);
  EXPECT_EQ(s.size(), 4u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
}
