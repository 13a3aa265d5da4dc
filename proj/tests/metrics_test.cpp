#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "dnc/metrics.hpp"
#include "test_util.hpp"

namespace dnc {
namespace {

TEST(Metrics, SelfComparison) {
    Rng rng(1);
    const Mat x = standard_normal(5000, 3, rng);
    const auto r = evaluate(x, x);
    EXPECT_EQ(r.mahalanobis, 0.0);
    EXPECT_EQ(r.skew_dev, 0.0);
    EXPECT_LE(r.iad, 0.02);
    EXPECT_EQ(r.per_dimension_iad.size(), 3);
}

TEST(Metrics, ShiftedNormalIadMatchesQuadrature) {
    const double oracle = testing::shifted_normal_tv(1.0);
    EXPECT_NEAR(oracle, 2.0 * 0.5 * std::erf(0.5 / std::sqrt(2.0)), 1e-9);  // 2 Phi(1/2) - 1
    Rng rng(2);
    const Mat a = standard_normal(100000, 1, rng);
    const Mat b = (standard_normal(100000, 1, rng).array() + 1.0).matrix();
    EXPECT_NEAR(iad(a, b), oracle, 0.01);
}

TEST(Metrics, DisjointSamplesHaveIadNearOne) {
    Rng rng(3);
    const Mat a = standard_normal(5000, 2, rng);
    const Mat b = (standard_normal(5000, 2, rng).array() + 50.0).matrix();
    EXPECT_GE(iad(a, b), 0.98);
    EXPECT_LE(iad(a, b), 1.0);
}

TEST(Metrics, MahalanobisUnitShift) {
    // Reference with mean 0 and covariance exactly I: the four points
    // (+-sqrt(3/2), 0), (0, +-sqrt(3/2)).
    const double c = std::sqrt(1.5);
    Mat ref(4, 2);
    ref << c, 0, -c, 0, 0, c, 0, -c;
    ASSERT_LT((sample_covariance(ref) - Mat::Identity(2, 2)).norm(), 1e-14);
    Mat approx = ref;
    approx.col(0).array() += 1.0;
    EXPECT_NEAR(mahalanobis(approx, ref), 1.0, 1e-14);
    EXPECT_THROW(mahalanobis(approx, ref.topRows(2)), ShapeError);
}

TEST(Metrics, MahalanobisAffineInvariant) {
    Rng rng(4);
    const Mat a = standard_normal(500, 3, rng);
    const Mat f = (standard_normal(700, 3, rng).array() + 0.3).matrix();
    const Mat m = testing::random_spd(3, rng) + standard_normal(3, 3, rng) * 0.2;
    const Vec shift = standard_normal(3, rng);
    auto tf = [&](const Mat& x) { return Mat((x * m.transpose()).rowwise() + shift.transpose()); };
    EXPECT_NEAR(mahalanobis(tf(a), tf(f)), mahalanobis(a, f), 1e-8);
}

TEST(Metrics, SkewOfExponentialIsTwo) {
    Rng rng(5);
    std::exponential_distribution<double> e(1.0);
    Mat a(100000, 1);
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, 0) = e(rng);
    const Mat g = standard_normal(100000, 1, rng);
    EXPECT_NEAR(skew_deviation(a, g), 2.0, 0.1);
}

TEST(Metrics, SymmetricSamplesHaveSmallSkewDeviation) {
    Rng rng(6);
    EXPECT_LE(skew_deviation(standard_normal(10000, 2, rng), standard_normal(10000, 2, rng)), 0.05);
}

TEST(Metrics, SkewInvariantToPerDimensionRescaling) {
    Rng rng(7);
    std::exponential_distribution<double> e(1.0);
    Mat a(2000, 2), b(2000, 2);
    for (Eigen::Index i = 0; i < 2000; ++i) {
        a(i, 0) = e(rng);
        a(i, 1) = e(rng) * e(rng);
        b(i, 0) = e(rng);
        b(i, 1) = e(rng);
    }
    const Vec scale = (Vec(2) << 3.0, 0.2).finished();
    const Vec shift = (Vec(2) << -1.0, 7.0).finished();
    auto tf = [&](const Mat& x) { return Mat((x * scale.asDiagonal()).rowwise() + shift.transpose()); };
    EXPECT_NEAR(skew_deviation(tf(a), tf(b)), skew_deviation(a, b), 1e-10);
}

TEST(Metrics, SymmetricUnderRowPermutation) {
    Rng rng(8);
    const Mat a = standard_normal(1000, 2, rng);
    const Mat f = (standard_normal(800, 2, rng).array() * 1.3).matrix();
    std::vector<int> idx(1000);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Mat p(1000, 2);
    for (int i = 0; i < 1000; ++i) p.row(i) = a.row(idx[i]);
    const auto r1 = evaluate(a, f), r2 = evaluate(p, f);
    EXPECT_NEAR(r1.mahalanobis, r2.mahalanobis, 1e-12);
    EXPECT_NEAR(r1.iad, r2.iad, 1e-12);
    EXPECT_NEAR(r1.skew_dev, r2.skew_dev, 1e-12);
}

TEST(Metrics, WideningTheRangeDoesNotDecreaseIad) {
    Rng rng(9);
    const Vec a = standard_normal(3000, rng);
    const Vec f = (standard_normal(3000, rng).array() * 2.0 + 0.5).matrix();
    double prev = 0.0;
    for (double k : {2.0, 3.0, 5.0, 8.0}) {
        IadOptions opt;
        opt.n_sigma = k;
        opt.grid_points = 8192;
        const double v = iad_marginal(a, f, opt);
        EXPECT_GE(v, prev - 1e-4);
        prev = v;
    }
}

TEST(Metrics, KdeIntegratesToOne) {
    Rng rng(10);
    const Vec x = standard_normal(5000, rng);
    const Vec dens = detail::kde_on_grid(x, -8.0, 8.0, 2048);
    EXPECT_NEAR(detail::trapezoid(dens, 16.0 / 2047), 1.0, 1e-3);
    EXPECT_NEAR(detail::silverman_bandwidth(x), 0.9 * std::min(detail::sd_of(x), 1.349 / 1.34) * std::pow(5000, -0.2), 0.01);
}

TEST(Metrics, Errors) {
    EXPECT_THROW(skew_deviation(Mat::Constant(5, 1, 2.0), Mat::Constant(5, 1, 1.0)), NumericalError);
    EXPECT_THROW(iad(Mat::Zero(5, 1), Mat::Zero(5, 2)), ShapeError);
    EXPECT_THROW(iad(Mat::Constant(5, 1, 1.0), Mat::Constant(5, 1, 1.0)), NumericalError);
}

TEST(Metrics, ReportJsonKeys) {
    Rng rng(11);
    const Mat a = standard_normal(100, 2, rng);
    const auto j = evaluate(a, a).to_json();
    for (const char* k : {"mahalanobis", "iad", "skew", "per_dim_iad", "n_approx", "n_ref"}) EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["per_dim_iad"].size(), 2u);
}

}  // namespace
}  // namespace dnc
