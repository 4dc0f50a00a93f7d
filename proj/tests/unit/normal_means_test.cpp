#include <gtest/gtest.h>

#include <random>

#include "cvalue/normal_means.hpp"
#include "oracles.hpp"

namespace {

using cvalue::Mat;
using cvalue::Probability;
using cvalue::SubspaceShrinkageBound;
using cvalue::SubspaceShrinkageSpec;
using cvalue::Vec;

Vec draw_y(int n, double r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Vec theta = Vec::Zero(n);
  theta(0) = r * std::sqrt(static_cast<double>(n));
  return theta + oracle::random_vector(n, rng);
}

/// U from Boost: inf { delta : r2 <= F^{-1}(level; delta) }.
double oracle_upper(double r2, int df, double level) {
  if (oracle::ncchisq_quantile(level, df, 0.0) >= r2) return 0.0;
  double lo = 0.0, hi = std::max(1.0, r2);
  while (oracle::ncchisq_quantile(level, df, hi) < r2) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (oracle::ncchisq_quantile(level, df, mid) < r2 ? lo : hi) = mid;
  }
  return hi;
}

/// Bound S from Boost quantiles, minimizing over a uniform lambda grid that includes both ends.
double oracle_bound(double r2, int df, double tau, double alpha, int points = 400) {
  const double p = 0.5 * (1.0 - alpha);
  const double upper = oracle_upper(r2, df, p);
  const double s = 1.0 + tau * tau;
  const auto g = [&](double lambda) {
    return (2.0 / s) * oracle::ncchisq_quantile(p, df, 0.25 * lambda) - lambda / (2.0 * s) - r2 / (s * s);
  };
  double best = g(upper);
  for (int i = 0; i < points; ++i) best = std::min(best, g(upper * i / points));
  return best;
}

double residual_sq(const Vec& y) { return (y.array() - y.mean()).matrix().squaredNorm(); }

TEST(NoncentralityUpperBound, ZeroResidualGivesZero) {
  const auto spec = SubspaceShrinkageSpec::grand_mean(Vec::Constant(10, 3.0), 1.0);
  EXPECT_EQ(cvalue::noncentrality_upper_bound(spec, Probability(0.05)).upper, 0.0);
}

TEST(NoncentralityUpperBound, SolvesDefiningEquation) {
  for (double r : {0.8, 1.5, 2.5}) {
    const Vec y = draw_y(50, r, 3);
    const auto spec = SubspaceShrinkageSpec::grand_mean(y, 1.0);
    const double u = cvalue::noncentrality_upper_bound(spec, Probability(0.025)).upper;
    ASSERT_GT(u, 0.0);
    const double r2 = residual_sq(y);
    EXPECT_NEAR(oracle::ncchisq_quantile(0.025, 49, u), r2, 1e-6 * r2);
    EXPECT_NEAR(u, oracle_upper(r2, 49, 0.025), 1e-6 * u);
  }
}

TEST(NoncentralityUpperBound, NonDecreasingInResidual) {
  const Vec y = draw_y(30, 1.0, 4);
  double prev = -1.0;
  for (double scale = 0.2; scale <= 4.0; scale += 0.2) {
    const auto spec = SubspaceShrinkageSpec::grand_mean(scale * y, 1.0);
    const double u = cvalue::noncentrality_upper_bound(spec, Probability(0.1)).upper;
    EXPECT_GE(u, prev);
    prev = u;
  }
}

TEST(NoncentralityUpperBound, LevelOutOfRange) {
  const auto spec = SubspaceShrinkageSpec::grand_mean(draw_y(10, 1.0, 5), 1.0);
  EXPECT_THROW(cvalue::noncentrality_upper_bound(spec, Probability(0.0)), cvalue::DomainError);
  EXPECT_THROW(cvalue::noncentrality_upper_bound(spec, Probability(1.0)), cvalue::DomainError);
}

TEST(SubspaceBound, ColumnSpaceDataGivesCentralQuantileAndCValueOne) {
  const double tau = 0.7;
  const auto spec = SubspaceShrinkageSpec::grand_mean(Vec::Constant(20, -2.5), tau);
  for (double alpha : {0.1, 0.5, 0.95, 0.999}) {
    const double expected = (2.0 / (1.0 + tau * tau)) * oracle::ncchisq_quantile(0.5 * (1.0 - alpha), 19, 0.0);
    EXPECT_NEAR(cvalue::subspace_bound(spec, Probability(alpha)), expected, 1e-8 * expected);
    EXPECT_GT(expected, 0.0);
  }
  const auto r = cvalue::c_value(cvalue::subspace_bound_evaluator(spec));
  EXPECT_EQ(r.c_value, 1.0);
  EXPECT_TRUE(r.saturated);
}

TEST(SubspaceBound, InvariantToShiftAlongOnes) {
  const Vec y = draw_y(25, 1.2, 6);
  for (double alpha : {0.3, 0.9}) {
    const double b0 = cvalue::subspace_bound(SubspaceShrinkageSpec::grand_mean(y, 1.0), Probability(alpha));
    const Vec shifted = (y.array() + 13.0).matrix();
    const double b1 = cvalue::subspace_bound(SubspaceShrinkageSpec::grand_mean(shifted, 1.0), Probability(alpha));
    EXPECT_NEAR(b0, b1, 1e-10 * (1.0 + std::abs(b0)));
  }
}

TEST(SubspaceBound, InvariantToRotationWithinOrthocomplement) {
  const int n = 25;
  const Vec y = draw_y(n, 1.2, 7);
  // Orthonormal u, v with u, v orthogonal to 1; rotate by 1 radian in their plane.
  Vec u = Vec::Zero(n), v = Vec::Zero(n);
  u(0) = 1.0;
  u(1) = -1.0;
  u.normalize();
  v(0) = 1.0;
  v(1) = 1.0;
  v(2) = -2.0;
  v.normalize();
  const double cs = std::cos(1.0), sn = std::sin(1.0);
  const Mat rot = Mat::Identity(n, n) + (cs - 1.0) * (u * u.transpose() + v * v.transpose()) +
                  sn * (v * u.transpose() - u * v.transpose());
  const Vec y_rot = rot * y;
  ASSERT_GT((y_rot - y).norm(), 0.1);
  for (double alpha : {0.2, 0.8}) {
    const double b0 = cvalue::subspace_bound(SubspaceShrinkageSpec::grand_mean(y, 1.0), Probability(alpha));
    const double b1 = cvalue::subspace_bound(SubspaceShrinkageSpec::grand_mean(y_rot, 1.0), Probability(alpha));
    EXPECT_NEAR(b0, b1, 1e-10 * (1.0 + std::abs(b0)));
  }
}

TEST(SubspaceBound, MatchesIndependentOracle) {
  for (double r : {0.0, 0.5, 1.0, 1.7}) {
    const Vec y = draw_y(50, r, 8);
    const double r2 = residual_sq(y);
    for (double alpha : {0.5, 0.8, 0.95}) {
      const double got = cvalue::subspace_bound(SubspaceShrinkageSpec::grand_mean(y, 1.0), Probability(alpha));
      const double ref = oracle_bound(r2, 49, 1.0, alpha);
      EXPECT_NEAR(got, ref, 1e-6 * (1.0 + std::abs(ref))) << "r=" << r << " alpha=" << alpha;
      EXPECT_LE(got, ref + 1e-9 * (1.0 + std::abs(ref)));
    }
  }
}

TEST(SubspaceBound, EndpointMatchesSweepAboveOneHalf) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    for (double r : {0.3, 1.0, 2.0}) {
      const SubspaceShrinkageBound bound(SubspaceShrinkageSpec::grand_mean(draw_y(40, r, 100 + seed), 1.0));
      for (double alpha = 0.55; alpha < 1.0; alpha += 0.1) {
        const auto d = bound.evaluate(alpha);
        EXPECT_FALSE(d.interior_minimum) << seed << " " << r << " " << alpha;
        EXPECT_NEAR(d.endpoint_value, d.bound, 1e-8 * (1.0 + std::abs(d.bound)));
      }
    }
  }
}

TEST(SubspaceBound, GeneralDesignWithOnesColumnEqualsBoundOne) {
  const Vec y = draw_y(30, 0.9, 9);
  const SubspaceShrinkageBound direct(residual_sq(y), 29, 1.3, 1.0);
  const SubspaceShrinkageBound via_spec(SubspaceShrinkageSpec(y, Mat::Ones(30, 1), 1.3));
  for (double alpha : {0.25, 0.6, 0.9, 0.99}) EXPECT_NEAR(direct(alpha), via_spec(alpha), 1e-12 * (1 + std::abs(direct(alpha))));
}

TEST(SubspaceBound, NoiseScaleEquivariance) {
  const Vec y = draw_y(20, 1.0, 10);
  const double sigma = 2.5;
  for (double alpha : {0.4, 0.9}) {
    const double unit = cvalue::subspace_bound(SubspaceShrinkageSpec::grand_mean(y, 0.8), Probability(alpha));
    const double scaled =
        cvalue::subspace_bound(SubspaceShrinkageSpec::grand_mean(sigma * y, 0.8 * sigma, sigma), Probability(alpha));
    EXPECT_NEAR(scaled, sigma * sigma * unit, 1e-9 * (1.0 + std::abs(scaled)));
  }
}

TEST(SubspaceBound, MonotoneInAlpha) {
  for (double r : {0.0, 0.8, 1.6}) {
    const auto ev = cvalue::subspace_bound_evaluator(SubspaceShrinkageSpec::grand_mean(draw_y(50, r, 11), 1.0));
    EXPECT_TRUE(ev.monotone()) << r;
  }
}

TEST(SubspaceBound, Errors) {
  const Vec y = draw_y(10, 1.0, 12);
  const auto spec = SubspaceShrinkageSpec::grand_mean(y, 1.0);
  EXPECT_THROW(cvalue::subspace_bound(spec, Probability(1.0)), cvalue::DomainError);
  Mat x(10, 2);
  x.col(0).setOnes();
  x.col(1).setConstant(2.0);
  EXPECT_THROW(cvalue::subspace_bound(SubspaceShrinkageSpec(y, x, 1.0), Probability(0.5)), cvalue::DomainError);
  EXPECT_THROW(SubspaceShrinkageSpec(y, Mat::Ones(10, 10), 1.0), cvalue::DimensionError);
  EXPECT_THROW(SubspaceShrinkageSpec(y, Mat::Ones(9, 1), 1.0), cvalue::DimensionError);
  EXPECT_THROW(SubspaceShrinkageSpec::grand_mean(y, -1.0), cvalue::DomainError);
  EXPECT_THROW(SubspaceShrinkageSpec::grand_mean(y, 1.0, 0.0), cvalue::DomainError);
}

TEST(SubspaceBound, EstimatorMatchesShrinkageFormula) {
  const Vec y = draw_y(12, 1.0, 13);
  const auto problem = cvalue::subspace_comparison(SubspaceShrinkageSpec::grand_mean(y, 2.0));
  const Vec resid = (y.array() - y.mean()).matrix();
  EXPECT_LT((problem.alternative_estimate - (y - resid / 5.0)).norm(), 1e-12);
  EXPECT_EQ(problem.default_estimate, y);
}

/// Monte Carlo coverage of Bound S for a random two-column design.
TEST(SubspaceBound, CoverageForGeneralDesign) {
  std::mt19937_64 rng(14);
  const int n = 30, reps = 500;
  const Mat x = oracle::random_matrix(n, 2, rng);
  const Mat proj = cvalue::orthocomplement_projector(x);
  for (double scale : {0.0, 1.0, 2.0}) {
    Vec theta = proj * oracle::random_vector(n, rng);
    theta *= scale * std::sqrt(static_cast<double>(n)) / std::max(theta.norm(), 1e-12);
    theta += x * Vec::Constant(2, 0.5);
    for (double alpha : {0.5, 0.8, 0.95}) {
      int covered = 0;
      std::mt19937_64 noise(1000 + static_cast<std::uint64_t>(10 * scale));
      for (int i = 0; i < reps; ++i) {
        const Vec y = theta + oracle::random_vector(n, noise);
        const SubspaceShrinkageSpec spec(y, x, 1.0);
        const auto p = cvalue::subspace_comparison(spec);
        if (cvalue::win(theta, p) >= cvalue::subspace_bound(spec, Probability(alpha))) ++covered;
      }
      const double cov = static_cast<double>(covered) / reps;
      EXPECT_GE(cov, alpha - 3.0 * oracle::binomial_se(alpha, reps)) << scale << " " << alpha;
    }
  }
}

/// The frequency of {W <= 0, alternative reported} stays below 1 - alpha.
TEST(SubspaceBound, MistakeFrequencyBelowLevel) {
  const int n = 50, reps = 500;
  const double alpha = 0.8;
  for (double r : {1.5, 1.7, 2.0}) {
    Vec theta = Vec::Zero(n);
    theta(0) = r * std::sqrt(static_cast<double>(n));
    std::mt19937_64 noise(77 + static_cast<std::uint64_t>(r * 10));
    int mistakes = 0;
    for (int i = 0; i < reps; ++i) {
      const Vec y = theta + oracle::random_vector(n, noise);
      const auto spec = SubspaceShrinkageSpec::grand_mean(y, 1.0);
      // With a monotone bound, c > alpha exactly when b(y, alpha) > 0.
      const bool reported = cvalue::subspace_bound(spec, Probability(alpha)) > 0.0;
      if (reported && cvalue::win(theta, cvalue::subspace_comparison(spec)) <= 0.0) ++mistakes;
    }
    EXPECT_LE(static_cast<double>(mistakes) / reps, (1 - alpha) + 3.0 * oracle::binomial_se(1 - alpha, reps)) << r;
  }
}

TEST(UnknownVariance, PointIntervalWithoutBudgetEqualsKnownVariance) {
  const auto spec = SubspaceShrinkageSpec::grand_mean(draw_y(30, 1.0, 15), 1.0);
  for (double alpha : {0.3, 0.9}) {
    EXPECT_DOUBLE_EQ(cvalue::unknown_variance_bound(spec, {1.0, 1.0, 0.0}, Probability(alpha)),
                     cvalue::subspace_bound(spec, Probability(alpha)));
  }
}

TEST(UnknownVariance, WideningNeverIncreases) {
  const auto spec = SubspaceShrinkageSpec::grand_mean(draw_y(30, 0.7, 16), 1.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double w : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    const double b = cvalue::unknown_variance_bound(spec, {1.0 - w, 1.0 + w, std::nullopt}, Probability(0.8));
    EXPECT_LE(b, prev + 1e-12);
    prev = b;
  }
}

TEST(UnknownVariance, MatchesBruteForceGrid) {
  const auto spec = SubspaceShrinkageSpec::grand_mean(draw_y(30, 0.9, 17), 1.0);
  const cvalue::SigmaInterval interval{0.8, 1.3, std::nullopt};
  const double alpha = 0.85;
  const double reduced = alpha + (1.0 - alpha) / 3.0;
  const SubspaceShrinkageBound core(spec);
  double brute = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    const double s = interval.lo + (interval.hi - interval.lo) * i / 999.0;
    brute = std::min(brute, core.evaluate_at(reduced, s, 1.0).bound);
  }
  const double got = cvalue::unknown_variance_bound(spec, interval, Probability(alpha));
  EXPECT_NEAR(got, brute, 1e-6 * (1.0 + std::abs(brute)));
  EXPECT_LE(got, brute + 1e-12);
}

TEST(UnknownVariance, DegenerateIntervalIsError) {
  const auto spec = SubspaceShrinkageSpec::grand_mean(draw_y(10, 1.0, 18), 1.0);
  EXPECT_THROW(cvalue::unknown_variance_bound(spec, {0.0, 1.0, std::nullopt}, Probability(0.5)), cvalue::DomainError);
  EXPECT_THROW(cvalue::unknown_variance_bound(spec, {1.2, 1.0, std::nullopt}, Probability(0.5)), cvalue::DomainError);
  EXPECT_THROW(cvalue::unknown_variance_bound(spec, {1.0, 1.1, 0.6}, Probability(0.5)), cvalue::DomainError);
}

}  // namespace
