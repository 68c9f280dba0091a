#pragma once

// Outlier rejection and transform estimation from putative correspondences,
// plus the end-to-end pipeline: normals -> descriptors -> similarity ->
// matching policy -> outlier rejection -> rigid transform.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "gsm/correspondence.hpp"
#include "gsm/descriptors.hpp"
#include "gsm/error.hpp"
#include "gsm/geometry.hpp"
#include "gsm/matching.hpp"
#include "gsm/similarity.hpp"

namespace gsm {

struct RansacParams {
  std::size_t max_iterations = 50'000;
  std::size_t sample_size = 3;
  double inlier_tau = InlierThreshold::kIndoor;
  double confidence = 0.999;
  std::uint64_t seed = 0;

  void validate() const {
    if (sample_size < 3) throw Error(ErrorCode::InvalidArgument, "sample_size must be >= 3");
    if (max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
    if (!(confidence > 0.0 && confidence < 1.0))
      throw Error(ErrorCode::InvalidArgument, "confidence must lie in (0, 1)");
    InlierThreshold{inlier_tau};
  }
};

struct RegistrationResult {
  RigidTransform transform;
  CorrespondenceSet predicted_inliers;
  std::size_t iterations_used = 0;
  double score = 0.0;
  // Model the final refit started from (RANSAC: best minimal-sample hypothesis).
  RigidTransform hypothesis;
};

namespace registration_detail {

inline std::size_t required_iterations(double inlier_ratio, std::size_t sample_size, double confidence) {
  if (inlier_ratio <= 0.0) return std::numeric_limits<std::size_t>::max();
  const double all_inlier = std::pow(inlier_ratio, static_cast<double>(sample_size));
  if (all_inlier >= 1.0) return 1;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - all_inlier);
  if (!std::isfinite(n) || n > 1e15) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(std::ceil(n));
}

}  // namespace registration_detail

inline RegistrationResult ransac_register(const PointCloud& src, const PointCloud& tgt,
                                          const CorrespondenceSet& corr, const RansacParams& params = {}) {
  params.validate();
  const std::size_t n = corr.size();
  if (n < 3 || n < params.sample_size)
    throw Error(ErrorCode::InsufficientCorrespondences,
                std::to_string(n) + " correspondences, need " + std::to_string(params.sample_size));
  detail::check_indices(src, tgt, corr.pairs);

  std::vector<Vec3> p(n), q(n);
  for (std::size_t k = 0; k < n; ++k) {
    p[k] = src.points[corr.pairs[k].src];
    q[k] = tgt.points[corr.pairs[k].tgt];
  }
  const double tau2 = params.inlier_tau * params.inlier_tau;
  auto count_inliers = [&](const RigidTransform& xf) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < n; ++k) c += (xf.rotation * p[k] + xf.translation - q[k]).squaredNorm() < tau2;
    return c;
  };

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> sample(params.sample_size);
  RigidTransform best;
  std::size_t best_count = 0;
  bool have_model = false;
  std::size_t needed = params.max_iterations;
  std::size_t it = 0;
  while (it < std::min(needed, params.max_iterations)) {
    ++it;
    for (std::size_t s = 0; s < sample.size(); ++s) {
      std::size_t idx;
      do {
        idx = pick(rng);
      } while (std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(s), idx) !=
               sample.begin() + static_cast<std::ptrdiff_t>(s));
      sample[s] = idx;
    }
    RigidTransform xf;
    try {
      xf = detail::kabsch(
          sample.size(), [&](std::size_t i) -> const Vec3& { return p[sample[i]]; },
          [&](std::size_t i) -> const Vec3& { return q[sample[i]]; });
    } catch (const Error&) {
      continue;
    }
    const std::size_t count = count_inliers(xf);
    if (!have_model || count > best_count) {
      best = xf;
      best_count = count;
      have_model = true;
      needed = registration_detail::required_iterations(
          static_cast<double>(count) / static_cast<double>(n), params.sample_size, params.confidence);
    }
  }
  if (!have_model) throw Error(ErrorCode::DegenerateInput, "every RANSAC sample was degenerate");

  std::vector<Correspondence> support;
  for (std::size_t k = 0; k < n; ++k) {
    if ((best.rotation * p[k] + best.translation - q[k]).squaredNorm() < tau2) support.push_back(corr.pairs[k]);
  }

  // Refit on the support, dropping pairs the refit pushes past tau and
  // refitting until the set is stable. At the fixpoint every kept pair passes
  // the tau test under the returned transform, and the transform is the
  // least-squares optimum over exactly those pairs.
  RegistrationResult out;
  out.hypothesis = best;
  out.iterations_used = it;
  out.transform = best;
  out.predicted_inliers.policy = corr.policy;
  out.predicted_inliers.pairs = support;
  std::vector<Correspondence> kept = support;
  while (kept.size() >= 3) {
    RigidTransform refit;
    try {
      refit = estimate_transform_svd(src, tgt, kept);
    } catch (const Error&) {
      break;
    }
    std::vector<Correspondence> next;
    for (const auto& c : kept) {
      if ((refit.apply(src.points[c.src]) - tgt.points[c.tgt]).squaredNorm() < tau2) next.push_back(c);
    }
    if (next.size() == kept.size()) {
      out.transform = refit;
      out.predicted_inliers.pairs = std::move(kept);
      break;
    }
    kept = std::move(next);
  }
  out.score = static_cast<double>(out.predicted_inliers.size());
  return out;
}

struct SpectralParams {
  double tau_compat = 0.10;  // length-consistency scale (meters)
  double inlier_tau = InlierThreshold::kIndoor;
  double power_tol = 1e-8;
  std::size_t max_power_iters = 1000;
};

// Pairwise length-consistency compatibility, zero diagonal.
inline ScoreMatrix compatibility_matrix(const PointCloud& src, const PointCloud& tgt,
                                        const CorrespondenceSet& corr, double tau_compat) {
  const std::size_t n = corr.size();
  ScoreMatrix m = ScoreMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double inv_tau2 = 1.0 / (tau_compat * tau_compat);
  for (std::size_t a = 0; a < n; ++a) {
    const Vec3& pa = src.points[corr.pairs[a].src];
    const Vec3& qa = tgt.points[corr.pairs[a].tgt];
    for (std::size_t b = a + 1; b < n; ++b) {
      const double dp = (pa - src.points[corr.pairs[b].src]).norm();
      const double dq = (qa - tgt.points[corr.pairs[b].tgt]).norm();
      const double diff = dp - dq;
      const double c = std::max(0.0, 1.0 - diff * diff * inv_tau2);
      m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c;
      m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = c;
    }
  }
  return m;
}

// Spectral matching: principal eigenvector of the compatibility matrix, then
// greedy one-to-one selection of mutually compatible pairs by eigenvector weight.
inline RegistrationResult spectral_matching_register(const PointCloud& src, const PointCloud& tgt,
                                                     const CorrespondenceSet& corr,
                                                     const SpectralParams& params = {}) {
  if (corr.size() < 3) throw Error(ErrorCode::InsufficientCorrespondences, "need at least 3 correspondences");
  if (!(params.tau_compat > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau_compat must be positive");
  detail::check_indices(src, tgt, corr.pairs);
  const std::size_t n = corr.size();
  const ScoreMatrix compat = compatibility_matrix(src, tgt, corr, params.tau_compat);

  Eigen::VectorXd x = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / std::sqrt(static_cast<double>(n)));
  std::size_t iters = 0;
  for (; iters < params.max_power_iters;) {
    ++iters;
    Eigen::VectorXd y = compat * x;
    const double norm = y.norm();
    if (norm == 0.0) break;
    y /= norm;
    const double change = (y - x).norm();
    x = std::move(y);
    if (change < params.power_tol) break;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x(static_cast<Eigen::Index>(a)) > x(static_cast<Eigen::Index>(b));
  });
  std::vector<std::size_t> chosen;
  std::vector<std::size_t> used_src, used_tgt;
  for (std::size_t a : order) {
    if (!(x(static_cast<Eigen::Index>(a)) > 0.0)) break;
    const auto& c = corr.pairs[a];
    if (std::find(used_src.begin(), used_src.end(), c.src) != used_src.end() ||
        std::find(used_tgt.begin(), used_tgt.end(), c.tgt) != used_tgt.end())
      continue;
    const bool consistent = std::all_of(chosen.begin(), chosen.end(), [&](std::size_t b) {
      return compat(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) > 0.0;
    });
    if (!consistent) continue;
    chosen.push_back(a);
    used_src.push_back(c.src);
    used_tgt.push_back(c.tgt);
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<Correspondence> selected;
  double mass = 0.0;
  for (std::size_t a : chosen) {
    selected.push_back(corr.pairs[a]);
    mass += x(static_cast<Eigen::Index>(a));
  }
  RegistrationResult out;
  out.iterations_used = iters;
  out.transform = estimate_transform_svd(src, tgt, selected);
  out.hypothesis = out.transform;
  out.predicted_inliers.policy = corr.policy;
  for (const auto& c : selected) {
    if ((out.transform.apply(src.points[c.src]) - tgt.points[c.tgt]).norm() < params.inlier_tau)
      out.predicted_inliers.pairs.push_back(c);
  }
  out.score = mass;
  return out;
}

// --- pipeline ---------------------------------------------------------------

enum class Rejector { Ransac, SpectralMatching };

inline const char* to_string(Rejector r) { return r == Rejector::Ransac ? "ransac" : "sm"; }

struct PipelineConfig {
  std::size_t normal_k = 20;
  Vec3 src_viewpoint = Vec3::Zero();
  Vec3 tgt_viewpoint = Vec3::Zero();
  DescriptorParams descriptor;
  PolicyTag policy = PolicyTag::GsMatching;
  MatchOptions match;
  Rejector rejector = Rejector::Ransac;
  RansacParams ransac;
  SpectralParams spectral;
};

struct StageTimings {
  double normals_ms = 0.0;
  double descriptors_ms = 0.0;
  double similarity_ms = 0.0;
  double matching_ms = 0.0;
  double rejection_ms = 0.0;
  double total_ms() const { return normals_ms + descriptors_ms + similarity_ms + matching_ms + rejection_ms; }
};

struct PipelineResult {
  PointCloud src;  // with normals
  PointCloud tgt;
  DescriptorSet src_descriptors;
  DescriptorSet tgt_descriptors;
  SimilarityMatrix similarity;
  CorrespondenceSet correspondences;
  RegistrationResult registration;
  bool low_confidence = false;
  StageTimings timings;
};

namespace registration_detail {

template <typename F>
auto timed(double& ms, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = f();
  ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::size_t min_confident_inliers(const PipelineConfig& config) {
  return 2 * (config.rejector == Rejector::Ransac ? config.ransac.sample_size : 3);
}

}  // namespace registration_detail

// Pipeline from descriptors onward: similarity, matching, rejection. `result`
// must already carry the clouds and descriptors.
inline void run_matching_and_rejection(PipelineResult& result, const PipelineConfig& config) {
  using registration_detail::timed;
  result.similarity = timed(result.timings.similarity_ms, [&] {
    return cosine_similarity_matrix(result.src_descriptors, result.tgt_descriptors);
  });
  result.correspondences = timed(result.timings.matching_ms, [&] {
    return match(result.similarity, config.policy, config.match);
  });
  result.registration = timed(result.timings.rejection_ms, [&] {
    return config.rejector == Rejector::Ransac
               ? ransac_register(result.src, result.tgt, result.correspondences, config.ransac)
               : spectral_matching_register(result.src, result.tgt, result.correspondences, config.spectral);
  });
  result.low_confidence =
      result.registration.predicted_inliers.size() < registration_detail::min_confident_inliers(config);
}

inline PipelineResult register_pipeline(const PointCloud& src, const PointCloud& tgt,
                                        const PipelineConfig& config = {}) {
  using registration_detail::timed;
  if (src.empty() || tgt.empty()) throw Error(ErrorCode::EmptyInput, "empty point cloud");
  PipelineResult result;
  result.src = timed(result.timings.normals_ms, [&] {
    return src.has_normals() ? src : estimate_normals(src, config.normal_k, config.src_viewpoint);
  });
  double tgt_normals_ms = 0.0;
  result.tgt = timed(tgt_normals_ms, [&] {
    return tgt.has_normals() ? tgt : estimate_normals(tgt, config.normal_k, config.tgt_viewpoint);
  });
  result.timings.normals_ms += tgt_normals_ms;
  result.src_descriptors = timed(result.timings.descriptors_ms, [&] {
    return compute_descriptors(result.src, config.descriptor);
  });
  double tgt_desc_ms = 0.0;
  result.tgt_descriptors = timed(tgt_desc_ms, [&] { return compute_descriptors(result.tgt, config.descriptor); });
  result.timings.descriptors_ms += tgt_desc_ms;
  run_matching_and_rejection(result, config);
  return result;
}

// Same pipeline with externally computed descriptors.
inline PipelineResult register_with_descriptors(const PointCloud& src, const PointCloud& tgt,
                                                const DescriptorSet& src_desc, const DescriptorSet& tgt_desc,
                                                const PipelineConfig& config = {}) {
  if (src.empty() || tgt.empty()) throw Error(ErrorCode::EmptyInput, "empty point cloud");
  if (src_desc.size() != src.size() || tgt_desc.size() != tgt.size())
    throw Error(ErrorCode::DimensionMismatch, "descriptor count does not match cloud size");
  PipelineResult result;
  result.src = src;
  result.tgt = tgt;
  result.src_descriptors = src_desc;
  result.tgt_descriptors = tgt_desc;
  run_matching_and_rejection(result, config);
  return result;
}

}  // namespace gsm
