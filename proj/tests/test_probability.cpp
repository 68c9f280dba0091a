#include <gtest/gtest.h>

#include <random>

#include "gsm/probability.hpp"

using namespace gsm;

namespace {

constexpr double kPiD = 3.14159265358979323846;

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(max X > max Y) = integral of F_Y(x)^n d(F_X(x)^m), by composite Simpson
// on a fine uniform grid. Independent of the library's double integral.
double simpson_oracle(const ScoreModel& model, std::size_t m, std::size_t n) {
  const double lo = std::min(model.mu1 - 12 * model.sigma1, model.mu2 - 12 * model.sigma2);
  const double hi = std::max(model.mu1 + 12 * model.sigma1, model.mu2 + 12 * model.sigma2);
  const int steps = 200000;
  const double h = (hi - lo) / steps;
  auto f = [&](double x) {
    const double zx = (x - model.mu1) / model.sigma1;
    const double fx = std::exp(-0.5 * zx * zx) / (model.sigma1 * std::sqrt(2 * kPiD));
    return double(m) * std::pow(phi(zx), double(m - 1)) * fx * std::pow(phi((x - model.mu2) / model.sigma2), double(n));
  };
  double acc = f(lo) + f(hi);
  for (int k = 1; k < steps; ++k) acc += f(lo + k * h) * (k % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

ScoreModel random_model(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mu(-0.5, 0.9), sd(0.05, 0.4);
  return {mu(rng), sd(rng), mu(rng), sd(rng), false};
}

}  // namespace

TEST(MaxDistribution, CountOneIsBase) {
  const ScoreDistribution d{0.3, 0.2, false};
  for (double x : {-1.0, 0.0, 0.3, 0.55, 2.0}) {
    EXPECT_NEAR(max_cdf(x, 1, d), phi((x - 0.3) / 0.2), 1e-15);
    const double z = (x - 0.3) / 0.2;
    EXPECT_NEAR(max_pdf(x, 1, d), std::exp(-0.5 * z * z) / (0.2 * std::sqrt(2 * kPiD)), 1e-12);
  }
}

TEST(MaxDistribution, SquaringAtMedian) {
  const ScoreDistribution d{0.1, 0.7, false};
  EXPECT_NEAR(max_cdf(0.1, 2, d), 0.25, 1e-15);
}

TEST(MaxDistribution, PdfIsDerivativeOfCdf) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> x(-1.0, 1.0);
  for (bool truncated : {false, true}) {
    const ScoreDistribution d{0.2, 0.3, truncated};
    for (int k = 0; k < 20; ++k) {
      const double at = x(rng) * 0.95;
      const std::size_t count = 1 + std::size_t(k % 6);
      const double h = 1e-5;
      const double fd = (max_cdf(at + h, count, d) - max_cdf(at - h, count, d)) / (2 * h);
      EXPECT_NEAR(fd, max_pdf(at, count, d), 1e-6);
    }
  }
}

TEST(MaxDistribution, CdfIsMonotoneAndBounded) {
  const ScoreDistribution d{0.0, 0.5, false};
  double prev = 0.0;
  for (double x = -4.0; x <= 4.0; x += 0.01) {
    const double v = max_cdf(x, 7, d);
    EXPECT_GE(v, prev);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
}

TEST(MaxDistribution, ZeroCountThrows) {
  try {
    max_cdf(0.0, 0, ScoreDistribution{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidCount);
  }
  EXPECT_THROW(max_pdf(0.0, 0, ScoreDistribution{}), Error);
  EXPECT_THROW(prob_inlier_selected({}, {0, 3}), Error);
}

TEST(TruncatedDistribution, IntegratesToOne) {
  const ScoreDistribution d{0.8, 0.3, true};
  const int steps = 20000;
  double acc = 0.0;
  for (int k = 0; k < steps; ++k) acc += d.pdf(-1.0 + (k + 0.5) * 2.0 / steps) * 2.0 / steps;
  EXPECT_NEAR(acc, 1.0, 1e-7);
  EXPECT_EQ(d.cdf(-1.5), 0.0);
  EXPECT_EQ(d.cdf(1.0), 1.0);
}

TEST(SelectionProbability, SymmetricModelIsHalf) {
  for (std::size_t m : {1u, 3u, 10u}) {
    const ScoreModel model{0.4, 0.15, 0.4, 0.15, false};
    EXPECT_NEAR(prob_inlier_selected(model, {m, m}), 0.5, 1e-9);
  }
}

TEST(SelectionProbability, OnePairClosedForm) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10; ++k) {
    const ScoreModel model = random_model(rng);
    const double expected = phi((model.mu1 - model.mu2) / std::hypot(model.sigma1, model.sigma2));
    EXPECT_NEAR(prob_inlier_selected(model, {1, 1}), expected, 1e-9);
  }
}

TEST(SelectionProbability, MatchesSingleIntegralOracle) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 8; ++k) {
    const ScoreModel model = random_model(rng);
    const std::size_t m = 1 + std::size_t(k % 5), n = 1 + std::size_t((3 * k) % 17);
    EXPECT_NEAR(prob_inlier_selected(model, {m, n}), simpson_oracle(model, m, n), 1e-8) << k;
  }
}

TEST(SelectionProbability, DecreasesAsOutliersGrow) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 5; ++k) {
    const ScoreModel model = random_model(rng);
    const std::size_t m = 1 + std::size_t(k);
    double prev = 2.0;
    for (std::size_t mult : {1u, 2u, 4u, 8u}) {
      const double p = prob_inlier_selected(model, {m, mult * m});
      EXPECT_LT(p, prev);
      prev = p;
    }
  }
}

TEST(SelectionProbability, MonotoneOnGrid) {
  const ScoreModel model{0.6, 0.15, 0.35, 0.2, false};
  double p[6][6];
  for (std::size_t m = 1; m <= 5; ++m)
    for (std::size_t n = 1; n <= 5; ++n) p[m][n] = prob_inlier_selected(model, {m, n});
  for (std::size_t m = 1; m <= 5; ++m)
    for (std::size_t n = 1; n <= 5; ++n) {
      if (m < 5) {
        EXPECT_LE(p[m][n], p[m + 1][n]);
      }
      if (n < 5) {
        EXPECT_GE(p[m][n], p[m][n + 1]);
      }
    }
}

TEST(SelectionProbability, InvariantToDoublingResolution) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 5; ++k) {
    const ScoreModel model = random_model(rng);
    const MatchPopulation pop{3, 20};
    QuadratureOptions fine;
    fine.nodes = 256;
    fine.min_panels = 2;
    EXPECT_NEAR(prob_inlier_selected(model, pop), prob_inlier_selected(model, pop, fine), 1e-6);
  }
}

TEST(SelectionProbability, TruncatedModeAgreesWithMonteCarlo) {
  const ScoreModel model{0.7, 0.4, 0.4, 0.5, true};
  const auto detail = prob_inlier_selected_detailed(model, {2, 4});
  EXPECT_EQ(detail.lower, -1.0);
  EXPECT_EQ(detail.upper, 1.0);
  const auto mc = prob_inlier_selected_mc(model, {2, 4}, 400000, 9);
  EXPECT_NEAR(detail.value, mc.probability, 3 * mc.std_error + 1e-4);
}

TEST(MonteCarlo, AgreesWithQuadratureWithinThreeStandardErrors) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> count(1, 5);
  for (int k = 0; k < 10; ++k) {
    const ScoreModel model = random_model(rng);
    const MatchPopulation pop{count(rng), count(rng)};
    const auto mc = prob_inlier_selected_mc(model, pop, 200000, 100 + std::uint64_t(k));
    const double q = prob_inlier_selected(model, pop);
    EXPECT_NEAR(mc.probability, q, std::max(3 * mc.std_error, 1e-4)) << k;
    EXPECT_EQ(mc.accepted, 200000u);
  }
}

TEST(MonteCarlo, DeterministicForSeed) {
  const ScoreModel model{0.5, 0.2, 0.3, 0.2, false};
  const auto a = prob_inlier_selected_mc(model, {2, 3}, 50000, 7);
  const auto b = prob_inlier_selected_mc(model, {2, 3}, 50000, 7);
  const auto c = prob_inlier_selected_mc(model, {2, 3}, 50000, 8);
  EXPECT_EQ(a.probability, b.probability);
  EXPECT_NE(a.probability, c.probability);
}

TEST(Conditional, NotAboveUnconditional) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mu1(0.3, 0.7), gap(-0.1, 0.2), sd(0.1, 0.3);
  for (int k = 0; k < 10; ++k) {
    ScoreModel model;
    model.mu1 = mu1(rng);
    model.mu2 = model.mu1 - gap(rng);
    model.sigma1 = sd(rng);
    model.sigma2 = sd(rng);
    const MatchPopulation pop{2, 4};
    const auto cond = prob_inlier_selected_conditional(model, pop, 1, 200000, 50 + std::uint64_t(k));
    const auto unc = prob_inlier_selected_mc(model, pop, 200000, 50 + std::uint64_t(k));
    EXPECT_LE(cond.probability, unc.probability + 3 * std::hypot(cond.std_error, unc.std_error)) << k;
    EXPECT_LT(cond.accepted, cond.samples);
  }
}

TEST(Conditional, RareConditionThrows) {
  const ScoreModel model{0.9, 0.05, 0.0, 0.1, false};
  try {
    prob_inlier_selected_conditional(model, {1, 3}, 3, 100000, 1);
    FAIL();
  } catch (const ConditionTooRare& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConditionTooRare);
    EXPECT_EQ(e.accepted(), 0u);
  }
  EXPECT_THROW(prob_inlier_selected_conditional(model, {1, 3}, 4), Error);
  EXPECT_THROW(prob_inlier_selected_conditional(model, {1, 3}, 0), Error);
}

TEST(Conditional, MinAcceptedThreshold) {
  const ScoreModel model{0.5, 0.1, 0.3, 0.1, false};
  // P(Y > 0.5) is about 2.3%, so 1000 samples accept roughly 23.
  EXPECT_NO_THROW(prob_inlier_selected_conditional(model, {1, 1}, 1, 1000, 3, 5));
  EXPECT_THROW(prob_inlier_selected_conditional(model, {1, 1}, 1, 1000, 3, 500), ConditionTooRare);
}

TEST(Curve, SingleSizeAndShape) {
  const ScoreModel model{0.8, 0.1, 0.3, 0.2, false};
  const std::vector<double> one{1.0};
  const auto single = selection_probability_curve(model, 10, one);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].n, 10u);
  EXPECT_EQ(single[0].probability, prob_inlier_selected(model, {10, 10}));

  std::vector<double> sizes;
  for (int s = 1; s <= 50; ++s) sizes.push_back(s);
  const auto rows = selection_probability_curve(model, 10, sizes);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].n, 10 * (k + 1));
    EXPECT_LE(rows[k].probability, rows[k - 1].probability);
  }
  EXPECT_THROW(selection_probability_curve(model, 10, std::vector<double>{0.0}), Error);
}

TEST(Curve, AgreesWithMonteCarloAtThreeSizes) {
  const ScoreModel model{0.8, 0.1, 0.3, 0.2, false};
  const std::vector<double> sizes{1, 10, 40};
  const auto rows = selection_probability_curve(model, 10, sizes);
  for (const auto& r : rows) {
    const auto mc = prob_inlier_selected_mc(model, {10, r.n}, 100000, 11);
    EXPECT_NEAR(r.probability, mc.probability, 0.01) << r.size;
  }
}

TEST(Fit, TwoPointSets) {
  const std::vector<double> a{0.0, 1.0}, b{0.0, 1.0};
  const auto fit = fit_score_model(a, b);
  EXPECT_DOUBLE_EQ(fit.model.mu1, 0.5);
  EXPECT_DOUBLE_EQ(fit.model.sigma1, std::sqrt(0.5));
  EXPECT_TRUE(fit.warnings.empty());
}

TEST(Fit, ConstantSamplesClampWithWarning) {
  const std::vector<double> a{0.4, 0.4, 0.4}, b{0.1, 0.3};
  const auto fit = fit_score_model(a, b);
  EXPECT_EQ(fit.model.sigma1, kMinFittedSigma);
  ASSERT_EQ(fit.warnings.size(), 1u);
  EXPECT_NE(fit.warnings[0].find("inlier"), std::string::npos);
}

TEST(Fit, InsufficientData) {
  const std::vector<double> one{0.1}, two{0.1, 0.2};
  try {
    fit_score_model(one, two);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
}

TEST(Fit, RecoversGaussianDraws) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> in(0.62, 0.11), out(0.21, 0.17);
  std::vector<double> a(5000), b(5000);
  for (auto& x : a) x = in(rng);
  for (auto& x : b) x = out(rng);
  const auto fit = fit_score_model(a, b);
  EXPECT_NEAR(fit.model.mu1, 0.62, 3 * 0.11 / std::sqrt(5000.0));
  EXPECT_NEAR(fit.model.mu2, 0.21, 3 * 0.17 / std::sqrt(5000.0));
  EXPECT_NEAR(fit.model.sigma1, 0.11, 0.01);
}
