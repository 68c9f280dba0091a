#pragma once

// Order statistics of feature scores: how likely is it that the best-scoring
// candidate of a source point is an inlier, when m inlier scores ~ N(mu1,
// sigma1^2) compete with n outlier scores ~ N(mu2, sigma2^2)?

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsm/error.hpp"
#include "gsm/parallel.hpp"

namespace gsm {

// Base score distribution: Gaussian, optionally truncated to the cosine range [-1, 1].
struct ScoreDistribution {
  double mu = 0.0;
  double sigma = 1.0;
  bool truncated = false;

  double raw_cdf(double x) const { return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0))); }
  double raw_pdf(double x) const {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
  }

  double cdf(double x) const {
    if (!truncated) return raw_cdf(x);
    if (x <= -1.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lo = raw_cdf(-1.0);
    return (raw_cdf(x) - lo) / (raw_cdf(1.0) - lo);
  }
  double pdf(double x) const {
    if (!truncated) return raw_pdf(x);
    if (x < -1.0 || x > 1.0) return 0.0;
    return raw_pdf(x) / (raw_cdf(1.0) - raw_cdf(-1.0));
  }
};

struct ScoreModel {
  double mu1 = 0.0, sigma1 = 1.0;  // inlier scores
  double mu2 = 0.0, sigma2 = 1.0;  // outlier scores
  bool truncated = false;

  void validate() const {
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0))
      throw Error(ErrorCode::InvalidArgument, "score model sigmas must be positive");
  }
  ScoreDistribution inlier() const { return {mu1, sigma1, truncated}; }
  ScoreDistribution outlier() const { return {mu2, sigma2, truncated}; }
};

struct MatchPopulation {
  std::size_t m = 1;  // inliers
  std::size_t n = 1;  // outliers
};

// CDF of the maximum of `count` iid draws: F(x)^count.
inline double max_cdf(double x, std::size_t count, const ScoreDistribution& dist) {
  if (count == 0) throw Error(ErrorCode::InvalidCount, "count must be >= 1");
  return std::pow(dist.cdf(x), static_cast<double>(count));
}

// PDF of the maximum: count * F(x)^(count-1) * f(x).
inline double max_pdf(double x, std::size_t count, const ScoreDistribution& dist) {
  if (count == 0) throw Error(ErrorCode::InvalidCount, "count must be >= 1");
  return static_cast<double>(count) * std::pow(dist.cdf(x), static_cast<double>(count - 1)) * dist.pdf(x);
}

// --- quadrature -------------------------------------------------------------

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

inline const GaussLegendreRule& gauss_legendre(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, GaussLegendreRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double pi = 3.14159265358979323846;
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

// Composite Gauss-Legendre over [a, b] with `panels` equal panels.
template <typename F>
double integrate_gl(F&& f, double a, double b, std::size_t panels, const GaussLegendreRule& rule) {
  if (!(b > a)) return 0.0;
  const double h = (b - a) / static_cast<double>(panels);
  double total = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    const double mid = lo + 0.5 * h;
    double acc = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) acc += rule.weights[k] * f(mid + 0.5 * h * rule.nodes[k]);
    total += 0.5 * h * acc;
  }
  return total;
}

struct QuadratureOptions {
  std::size_t nodes = 128;      // Gauss-Legendre nodes per panel, per axis
  std::size_t min_panels = 1;
  std::size_t max_panels = 64;
  double tol = 1e-10;           // stop once doubling the panel count changes the result less than this
};

struct QuadratureResult {
  double value = 0.0;
  std::size_t panels = 0;
  double last_change = 0.0;
  double lower = -1.0, upper = 1.0;
};

// Integration range: [-1, 1] for truncated scores, otherwise widened to cover
// +/-8 sigma around every mean.
inline std::pair<double, double> integration_limits(const ScoreModel& model) {
  if (model.truncated) return {-1.0, 1.0};
  const double reach = std::max({1.0, std::abs(model.mu1) + 8.0 * model.sigma1,
                                 std::abs(model.mu2) + 8.0 * model.sigma2});
  return {-reach, reach};
}

// P(max X > max Y) as the double integral of f_max(x) f_max(y) over x > y.
inline QuadratureResult prob_inlier_selected_detailed(const ScoreModel& model, const MatchPopulation& pop,
                                                      const QuadratureOptions& opts = {}) {
  model.validate();
  if (pop.m == 0 || pop.n == 0) throw Error(ErrorCode::InvalidCount, "need m >= 1 and n >= 1");
  const auto rule = gauss_legendre(opts.nodes);
  const auto inl = model.inlier();
  const auto out = model.outlier();
  const auto [lo, hi] = integration_limits(model);

  auto evaluate = [&](std::size_t panels) {
    return integrate_gl(
        [&](double y) {
          const double fy = max_pdf(y, pop.n, out);
          if (fy == 0.0) return 0.0;
          const double inner = integrate_gl([&](double x) { return max_pdf(x, pop.m, inl); }, y, hi, panels, rule);
          return fy * inner;
        },
        lo, hi, panels, rule);
  };

  QuadratureResult res;
  res.lower = lo;
  res.upper = hi;
  std::size_t panels = std::max<std::size_t>(opts.min_panels, 1);
  double prev = evaluate(panels);
  res.value = prev;
  res.panels = panels;
  while (panels * 2 <= opts.max_panels) {
    panels *= 2;
    const double cur = evaluate(panels);
    res.last_change = std::abs(cur - prev);
    res.value = cur;
    res.panels = panels;
    if (res.last_change < opts.tol) break;
    prev = cur;
  }
  res.value = std::clamp(res.value, 0.0, 1.0);
  return res;
}

inline double prob_inlier_selected(const ScoreModel& model, const MatchPopulation& pop,
                                   const QuadratureOptions& opts = {}) {
  return prob_inlier_selected_detailed(model, pop, opts).value;
}

// --- Monte Carlo -----------------------------------------------------------

// Counter-based stream: trial t draws from splitmix64 seeded by (seed, t), so
// any partition of trials across threads reproduces the sequential result.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t counter)
      : state_(mix(seed ^ mix(counter + 0x9E3779B97F4A7C15ull))) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double draw(const ScoreDistribution& d) {
    for (;;) {
      const double v = d.mu + d.sigma * normal();
      if (!d.truncated || (v >= -1.0 && v <= 1.0)) return v;
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
};

struct McEstimate {
  double probability = 0.0;
  double std_error = 0.0;
  std::size_t accepted = 0;  // samples that entered the estimate
  std::size_t samples = 0;
};

namespace probability_detail {

// Runs `trial(rng, index)` over `samples` trials in fixed blocks; each returns
// 0 (rejected), 1 (accepted, failure) or 2 (accepted, success).
template <typename Trial>
McEstimate run_trials(std::size_t samples, std::uint64_t seed, Trial trial) {
  constexpr std::size_t block = 1 << 14;
  const std::size_t blocks = (samples + block - 1) / block;
  std::vector<std::size_t> accepted(blocks, 0), success(blocks, 0);
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(samples, (b + 1) * block);
    for (std::size_t t = b * block; t < end; ++t) {
      CounterRng rng(seed, t);
      const int outcome = trial(rng);
      accepted[b] += outcome > 0;
      success[b] += outcome == 2;
    }
  }, 1);
  McEstimate est;
  est.samples = samples;
  est.accepted = std::accumulate(accepted.begin(), accepted.end(), std::size_t{0});
  const std::size_t hits = std::accumulate(success.begin(), success.end(), std::size_t{0});
  if (est.accepted > 0) {
    const double p = static_cast<double>(hits) / static_cast<double>(est.accepted);
    est.probability = p;
    est.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(est.accepted));
  }
  return est;
}

}  // namespace probability_detail

inline constexpr std::size_t kDefaultMonteCarloSamples = 1'000'000;

inline McEstimate prob_inlier_selected_mc(const ScoreModel& model, const MatchPopulation& pop,
                                          std::size_t samples = kDefaultMonteCarloSamples,
                                          std::uint64_t seed = 1) {
  model.validate();
  if (pop.m == 0 || pop.n == 0) throw Error(ErrorCode::InvalidCount, "need m >= 1 and n >= 1");
  const auto inl = model.inlier();
  const auto out = model.outlier();
  return probability_detail::run_trials(samples, seed, [&](CounterRng& rng) {
    double x = -INFINITY, y = -INFINITY;
    for (std::size_t i = 0; i < pop.m; ++i) x = std::max(x, rng.draw(inl));
    for (std::size_t i = 0; i < pop.n; ++i) y = std::max(y, rng.draw(out));
    return x > y ? 2 : 1;
  });
}

// P(max X > max Y | k-th largest Y > mu1), by rejection sampling.
inline McEstimate prob_inlier_selected_conditional(const ScoreModel& model, const MatchPopulation& pop,
                                                   std::size_t k,
                                                   std::size_t samples = kDefaultMonteCarloSamples,
                                                   std::uint64_t seed = 1, std::size_t min_accepted = 1) {
  model.validate();
  if (pop.m == 0 || pop.n == 0) throw Error(ErrorCode::InvalidCount, "need m >= 1 and n >= 1");
  if (k < 1 || k > pop.n) throw Error(ErrorCode::InvalidArgument, "k must lie in [1, n]");
  const auto inl = model.inlier();
  const auto out = model.outlier();
  const auto est = probability_detail::run_trials(samples, seed, [&](CounterRng& rng) {
    double x = -INFINITY;
    for (std::size_t i = 0; i < pop.m; ++i) x = std::max(x, rng.draw(inl));
    std::vector<double> ys(pop.n);
    for (auto& y : ys) y = rng.draw(out);
    std::nth_element(ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(k - 1), ys.end(), std::greater<>());
    if (!(ys[k - 1] > model.mu1)) return 0;
    const double y_max = *std::max_element(ys.begin(), ys.end());
    return x > y_max ? 2 : 1;
  });
  if (est.accepted < std::max<std::size_t>(min_accepted, 1)) throw ConditionTooRare(est.accepted, samples);
  return est;
}

// --- curve and fitting -------------------------------------------------------

struct CurveRow {
  double size = 0.0;
  std::size_t n = 0;
  double probability = 0.0;
  std::optional<double> monte_carlo;
};

// One row per size multiplier: n = round(size * m) outliers against m inliers.
inline std::vector<CurveRow> selection_probability_curve(const ScoreModel& model, std::size_t m,
                                                         std::span<const double> sizes,
                                                         const QuadratureOptions& opts = {}) {
  std::vector<CurveRow> rows;
  rows.reserve(sizes.size());
  for (double size : sizes) {
    if (!(size > 0.0)) throw Error(ErrorCode::InvalidArgument, "size multiplier must be positive");
    CurveRow row;
    row.size = size;
    row.n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(size * static_cast<double>(m))));
    row.probability = prob_inlier_selected(model, {m, row.n}, opts);
    rows.push_back(row);
  }
  return rows;
}

struct ScoreModelFit {
  ScoreModel model;
  std::vector<std::string> warnings;
};

inline constexpr double kMinFittedSigma = 1e-6;

// Sample mean and (n-1) standard deviation per class; sigma clamped to 1e-6.
inline ScoreModelFit fit_score_model(std::span<const double> inlier_scores,
                                     std::span<const double> outlier_scores) {
  if (inlier_scores.size() < 2 || outlier_scores.size() < 2)
    throw Error(ErrorCode::InsufficientData, "need at least 2 samples per class");
  ScoreModelFit fit;
  auto moments = [&](std::span<const double> xs, const char* label, double& mu, double& sigma) {
    const double n = static_cast<double>(xs.size());
    mu = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    sigma = std::sqrt(ss / (n - 1.0));
    if (!(sigma >= kMinFittedSigma)) {
      sigma = kMinFittedSigma;
      fit.warnings.push_back(std::string(label) + " sigma clamped to 1e-6");
    }
  };
  moments(inlier_scores, "inlier", fit.model.mu1, fit.model.sigma1);
  moments(outlier_scores, "outlier", fit.model.mu2, fit.model.sigma2);
  return fit;
}

}  // namespace gsm
