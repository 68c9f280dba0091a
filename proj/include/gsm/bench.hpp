#pragma once

// Evaluation metrics (RE/TE, IR, NIR, registration recall), timing studies on
// random score matrices, and policy comparisons over synthetic pairs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"

#include "gsm/correspondence.hpp"
#include "gsm/error.hpp"
#include "gsm/geometry.hpp"
#include "gsm/matching.hpp"
#include "gsm/parallel.hpp"
#include "gsm/registration.hpp"
#include "gsm/synthetic.hpp"

namespace gsm {

// ---------------------------------------------------------------- metrics

struct RateResult {
  double value = 0.0;
  bool defined = false;  // false when the correspondence set is empty
};

inline double inlier_ratio(const CorrespondenceSet& corr, const PointCloud& src, const PointCloud& tgt,
                           const RigidTransform& xf_gt, double tau) {
  if (corr.empty()) return 0.0;
  return static_cast<double>(inlier_set(src, tgt, corr, xf_gt, InlierThreshold(tau)).size()) /
         static_cast<double>(corr.size());
}

// Inliers whose source and target indices each occur exactly once in `corr`,
// over |corr|.
inline RateResult non_repetitive_inlier_ratio(const CorrespondenceSet& corr, const PointCloud& src,
                                              const PointCloud& tgt, const RigidTransform& xf_gt,
                                              double tau) {
  if (corr.empty()) return {0.0, false};
  detail::check_indices(src, tgt, corr.pairs);
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
  std::unordered_map<std::size_t, std::size_t> src_count, tgt_count;
  for (const auto& c : corr.pairs) {
    ++src_count[c.src];
    ++tgt_count[c.tgt];
  }
  std::size_t hits = 0;
  for (const auto& c : corr.pairs) {
    if (src_count[c.src] != 1 || tgt_count[c.tgt] != 1) continue;
    if ((xf_gt.apply(src.points[c.src]) - tgt.points[c.tgt]).norm() < tau) ++hits;
  }
  return {static_cast<double>(hits) / static_cast<double>(corr.size()), true};
}

struct RecallThreshold {
  double re_deg;
  double te_cm;
  static constexpr RecallThreshold indoor() { return {15.0, 30.0}; }
  static constexpr RecallThreshold outdoor() { return {5.0, 60.0}; }
};

struct PairRecord {
  std::size_t pair_id = 0;
  double re_deg = 0.0;
  double te_cm = 0.0;
  bool success = false;
  double ir = 0.0;
  double nir = 0.0;
  bool nir_defined = false;
  std::size_t corr_count = 0;
  std::size_t pruned_count = 0;
  std::size_t predicted_inliers = 0;
  bool low_confidence = false;
  StageTimings timings;
  std::string error;  // non-empty when registration threw
};

// Percentage of records with RE < re_deg and TE < te_cm.
inline double registration_recall(std::span<const PairRecord> records, double re_deg, double te_cm) {
  if (records.empty()) return 0.0;
  const auto hits = std::count_if(records.begin(), records.end(), [&](const PairRecord& r) {
    return r.error.empty() && r.re_deg < re_deg && r.te_cm < te_cm;
  });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// One-sided paired t-test of H1: mean(a - b) > 0. Returns the p-value.
inline double paired_t_test_greater(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "paired samples differ in length");
  if (a.size() < 2) throw Error(ErrorCode::InsufficientData, "paired t-test needs at least 2 pairs");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) return mean > 0.0 ? 0.0 : 1.0;
  const double t = mean / (sd / std::sqrt(n));
  boost::math::students_t dist(n - 1.0);
  return boost::math::cdf(boost::math::complement(dist, t));
}

// Fixed-width histogram over [0, 1]; the value 1.0 lands in the last bin.
struct Histogram {
  double bin_width = 0.05;
  std::vector<std::size_t> counts;
};

inline Histogram histogram01(std::span<const double> values, double bin_width = 0.05) {
  Histogram h;
  h.bin_width = bin_width;
  const auto bins = static_cast<std::size_t>(std::llround(1.0 / bin_width));
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::floor(std::clamp(v, 0.0, 1.0) / bin_width));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

// ---------------------------------------------------------------- timing study

struct TimingOptions {
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::size_t hungarian_max_n = 2000;
  bool include_large_hungarian = false;
  MatchOptions match;
};

struct TimingRow {
  PolicyTag policy = PolicyTag::Unspecified;
  std::size_t n = 0;
  double median_ms = 0.0;
  std::size_t repeats = 0;
  bool skipped = false;
};

// Square n x n matrix with entries uniform in [-1, 1].
inline ScoreMatrix random_score_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScoreMatrix s(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) = u(rng);
  return s;
}

inline std::vector<TimingRow> timing_study(std::span<const PolicyTag> policies, std::span<const std::size_t> sizes,
                                           const TimingOptions& opts = {}) {
  if (opts.repeats == 0) throw Error(ErrorCode::InvalidArgument, "repeats must be >= 1");
  std::vector<TimingRow> rows;
  for (std::size_t n : sizes) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "sizes must be positive");
    std::vector<ScoreMatrix> mats;
    for (std::size_t r = 0; r < opts.repeats; ++r) mats.push_back(random_score_matrix(n, n, opts.seed + 1000003 * r + n));
    for (PolicyTag policy : policies) {
      TimingRow row{policy, n, 0.0, opts.repeats, false};
      if (policy == PolicyTag::Hungarian && n > opts.hungarian_max_n && !opts.include_large_hungarian) {
        row.skipped = true;
        row.repeats = 0;
        rows.push_back(row);
        continue;
      }
      std::vector<double> ms;
      for (const auto& s : mats) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto out = match(s, policy, opts.match);
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        if (out.size() > n) throw Error(ErrorCode::InvalidCorrespondence, "policy returned too many pairs");
      }
      row.median_ms = median(ms);
      rows.push_back(row);
    }
  }
  return rows;
}

inline std::string timing_to_csv(std::span<const TimingRow> rows, const std::string& config_line = {}) {
  std::string out;
  if (!config_line.empty()) out += "# " + config_line + "\n";
  out += "policy,n,median_ms,repeats,skipped\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.median_ms);
    out += std::string(to_string(r.policy)) + "," + std::to_string(r.n) + "," + buf + "," +
           std::to_string(r.repeats) + "," + (r.skipped ? "1" : "0") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- policy comparison

struct PolicyVariant {
  std::string label;
  PolicyTag policy = PolicyTag::NearestNeighbor;
  MatchOptions options;
};

struct EvalConfig {
  PipelineConfig pipeline;  // policy/match fields are taken from each variant
  RecallThreshold recall = RecallThreshold::indoor();
  double ir_tau = InlierThreshold::kIndoor;
};

struct EvalAggregate {
  std::size_t pairs = 0;
  double rr_percent = 0.0;
  double mean_re = 0.0;  // degrees, over successful pairs
  double mean_te = 0.0;  // centimeters, over successful pairs
  double mean_ir = 0.0;
  double mean_nir = 0.0;
  double mean_corr_count = 0.0;
  double median_matching_ms = 0.0;
  double median_rejection_ms = 0.0;
  double median_total_ms = 0.0;
};

struct EvalReport {
  std::string label;
  PolicyTag policy = PolicyTag::Unspecified;
  Rejector rejector = Rejector::Ransac;
  std::vector<PairRecord> records;  // sorted by pair_id
  EvalAggregate aggregate;
  Histogram ir_histogram;
  Histogram nir_histogram;

  std::vector<double> column(double PairRecord::*field) const {
    std::vector<double> v;
    v.reserve(records.size());
    for (const auto& r : records) v.push_back(r.*field);
    return v;
  }
};

inline EvalAggregate aggregate_records(std::span<const PairRecord> records, const RecallThreshold& th) {
  EvalAggregate a;
  a.pairs = records.size();
  if (records.empty()) return a;
  a.rr_percent = registration_recall(records, th.re_deg, th.te_cm);
  std::size_t ok = 0;
  std::vector<double> match_ms, reject_ms, total_ms;
  for (const auto& r : records) {
    a.mean_ir += r.ir;
    a.mean_nir += r.nir;
    a.mean_corr_count += static_cast<double>(r.corr_count);
    match_ms.push_back(r.timings.matching_ms);
    reject_ms.push_back(r.timings.rejection_ms);
    total_ms.push_back(r.timings.total_ms());
    if (r.success) {
      ++ok;
      a.mean_re += r.re_deg;
      a.mean_te += r.te_cm;
    }
  }
  const auto n = static_cast<double>(records.size());
  a.mean_ir /= n;
  a.mean_nir /= n;
  a.mean_corr_count /= n;
  if (ok > 0) {
    a.mean_re /= static_cast<double>(ok);
    a.mean_te /= static_cast<double>(ok);
  }
  a.median_matching_ms = median(match_ms);
  a.median_rejection_ms = median(reject_ms);
  a.median_total_ms = median(total_ms);
  return a;
}

namespace bench_detail {

inline PairRecord evaluate_variant(const PipelineResult& base, const SyntheticPair& pair, std::size_t pair_id,
                                   const PolicyVariant& variant, const EvalConfig& config) {
  PairRecord rec;
  rec.pair_id = pair_id;
  rec.timings = base.timings;
  PipelineConfig pc = config.pipeline;
  pc.policy = variant.policy;
  pc.match = variant.options;
  PipelineResult result;
  result.src = base.src;
  result.tgt = base.tgt;
  result.src_descriptors = base.src_descriptors;
  result.tgt_descriptors = base.tgt_descriptors;
  try {
    run_matching_and_rejection(result, pc);
  } catch (const Error& e) {
    // Too few correspondences or degenerate samples: the pair counts as a failure.
    rec.error = e.what();
  }
  rec.timings.similarity_ms = result.timings.similarity_ms;
  rec.timings.matching_ms = result.timings.matching_ms;
  rec.timings.rejection_ms = result.timings.rejection_ms;
  const auto& corr = result.correspondences;
  rec.corr_count = corr.size();
  rec.pruned_count = corr.pruned_src.size();
  rec.ir = inlier_ratio(corr, pair.src, pair.tgt, pair.xf_gt, config.ir_tau);
  const auto nir = non_repetitive_inlier_ratio(corr, pair.src, pair.tgt, pair.xf_gt, config.ir_tau);
  rec.nir = nir.value;
  rec.nir_defined = nir.defined;
  if (rec.error.empty()) {
    const auto& xf = result.registration.transform;
    rec.re_deg = rad_to_deg(rotation_error(xf.rotation, pair.xf_gt.rotation));
    rec.te_cm = 100.0 * translation_error(xf.translation, pair.xf_gt.translation);
    rec.predicted_inliers = result.registration.predicted_inliers.size();
    rec.low_confidence = result.low_confidence;
    rec.success = rec.re_deg < config.recall.re_deg && rec.te_cm < config.recall.te_cm;
  } else {
    rec.re_deg = 180.0;
    rec.te_cm = 1e9;
  }
  return rec;
}

}  // namespace bench_detail

// Evaluates every variant on every pair. Normals, descriptors and the
// similarity matrix are computed once per pair and shared by all variants.
// Pairs run in parallel; reports are ordered by pair id.
inline std::vector<EvalReport> policy_comparison(std::span<const SyntheticPairSpec> specs,
                                                 std::span<const PolicyVariant> variants, Rejector rejector,
                                                 const EvalConfig& config = {}) {
  if (variants.empty()) throw Error(ErrorCode::InvalidArgument, "no policies selected");
  EvalConfig cfg = config;
  cfg.pipeline.rejector = rejector;
  std::vector<std::vector<PairRecord>> per_pair(specs.size());
  parallel_for(
      specs.size(),
      [&](std::size_t p) {
        const SyntheticPair pair = generate_pair(specs[p]);
        PipelineConfig pc = cfg.pipeline;
        pc.src_viewpoint = pair.src_viewpoint;
        pc.tgt_viewpoint = pair.tgt_viewpoint;
        PipelineResult base;
        double ms = 0.0;
        base.src = registration_detail::timed(ms, [&] { return estimate_normals(pair.src, pc.normal_k, pc.src_viewpoint); });
        base.timings.normals_ms += ms;
        base.tgt = registration_detail::timed(ms, [&] { return estimate_normals(pair.tgt, pc.normal_k, pc.tgt_viewpoint); });
        base.timings.normals_ms += ms;
        base.src_descriptors = registration_detail::timed(ms, [&] { return compute_descriptors(base.src, pc.descriptor); });
        base.timings.descriptors_ms += ms;
        base.tgt_descriptors = registration_detail::timed(ms, [&] { return compute_descriptors(base.tgt, pc.descriptor); });
        base.timings.descriptors_ms += ms;
        for (const auto& v : variants) per_pair[p].push_back(bench_detail::evaluate_variant(base, pair, p, v, cfg));
      },
      1);

  std::vector<EvalReport> reports;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    EvalReport rep;
    rep.label = variants[v].label.empty() ? std::string(to_string(variants[v].policy)) : variants[v].label;
    rep.policy = variants[v].policy;
    rep.rejector = rejector;
    for (std::size_t p = 0; p < specs.size(); ++p) rep.records.push_back(per_pair[p][v]);
    rep.aggregate = aggregate_records(rep.records, cfg.recall);
    const auto ir = rep.column(&PairRecord::ir);
    const auto nir = rep.column(&PairRecord::nir);
    rep.ir_histogram = histogram01(ir);
    rep.nir_histogram = histogram01(nir);
    reports.push_back(std::move(rep));
  }
  return reports;
}

inline std::vector<EvalReport> policy_comparison(std::span<const SyntheticPairSpec> specs,
                                                 std::span<const PolicyTag> policies, Rejector rejector,
                                                 const EvalConfig& config = {}) {
  std::vector<PolicyVariant> variants;
  for (auto p : policies) variants.push_back({std::string(to_string(p)), p, config.pipeline.match});
  return policy_comparison(specs, std::span<const PolicyVariant>(variants), rejector, config);
}

// Seeded batch of specs: spec i uses seed base_seed + i.
inline std::vector<SyntheticPairSpec> make_suite(const SyntheticPairSpec& proto, std::size_t count,
                                                 std::uint64_t base_seed) {
  std::vector<SyntheticPairSpec> out(count, proto);
  for (std::size_t i = 0; i < count; ++i) out[i].seed = base_seed + i;
  return out;
}

// ---------------------------------------------------------------- report output

inline std::string records_to_csv(std::span<const EvalReport> reports, const std::string& config_line = {}) {
  std::string out;
  if (!config_line.empty()) out += "# " + config_line + "\n";
  out += "policy,pair_id,re_deg,te_cm,success,ir,nir,corr_count,pruned_count,predicted_inliers,"
         "low_confidence,normals_ms,descriptors_ms,similarity_ms,matching_ms,rejection_ms,error\n";
  char buf[512];
  for (const auto& rep : reports) {
    for (const auto& r : rep.records) {
      std::string err = r.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      std::snprintf(buf, sizeof buf, "%s,%zu,%.9g,%.9g,%d,%.9g,%.9g,%zu,%zu,%zu,%d,%.4f,%.4f,%.4f,%.4f,%.4f,",
                    rep.label.c_str(), r.pair_id, r.re_deg, r.te_cm, r.success ? 1 : 0, r.ir, r.nir, r.corr_count,
                    r.pruned_count, r.predicted_inliers, r.low_confidence ? 1 : 0, r.timings.normals_ms,
                    r.timings.descriptors_ms, r.timings.similarity_ms, r.timings.matching_ms,
                    r.timings.rejection_ms);
      out += buf + err + "\n";
    }
  }
  return out;
}

inline nlohmann::json reports_to_json(std::span<const EvalReport> reports, const nlohmann::json& config = {}) {
  nlohmann::json j;
  j["schema"] = 1;
  j["config"] = config;
  j["policies"] = nlohmann::json::array();
  for (const auto& rep : reports) {
    const auto& a = rep.aggregate;
    j["policies"].push_back({
        {"label", rep.label},
        {"policy", to_string(rep.policy)},
        {"rejector", to_string(rep.rejector)},
        {"pairs", a.pairs},
        {"rr_percent", a.rr_percent},
        {"mean_re_deg", a.mean_re},
        {"mean_te_cm", a.mean_te},
        {"mean_ir", a.mean_ir},
        {"mean_nir", a.mean_nir},
        {"mean_corr_count", a.mean_corr_count},
        {"median_matching_ms", a.median_matching_ms},
        {"median_rejection_ms", a.median_rejection_ms},
        {"median_total_ms", a.median_total_ms},
        {"ir_histogram", {{"bin_width", rep.ir_histogram.bin_width}, {"counts", rep.ir_histogram.counts}}},
        {"nir_histogram", {{"bin_width", rep.nir_histogram.bin_width}, {"counts", rep.nir_histogram.counts}}},
    });
  }
  return j;
}

}  // namespace gsm
