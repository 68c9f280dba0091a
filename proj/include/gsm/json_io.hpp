#pragma once

// JSON and CSV encodings of correspondences, registration results, ground
// truth and probability curves. Every document carries "schema": 1 and the
// resolved configuration that produced it.

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gsm/correspondence.hpp"
#include "gsm/error.hpp"
#include "gsm/geometry.hpp"
#include "gsm/io.hpp"
#include "gsm/probability.hpp"
#include "gsm/registration.hpp"

namespace gsm {

using Json = nlohmann::json;

inline constexpr int kJsonSchema = 1;

inline Json to_json(const Mat3& r) {
  Json rows = Json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({r(i, 0), r(i, 1), r(i, 2)});
  return rows;
}

inline Json to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Json to_json(const RigidTransform& xf) {
  return {{"rotation", to_json(xf.rotation)}, {"translation", to_json(xf.translation)}};
}

inline Json to_json(const StageTimings& t) {
  return {{"normals_ms", t.normals_ms},         {"descriptors_ms", t.descriptors_ms},
          {"similarity_ms", t.similarity_ms},   {"matching_ms", t.matching_ms},
          {"rejection_ms", t.rejection_ms},     {"total_ms", t.total_ms()}};
}

namespace json_detail {

inline const Json& require(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorCode::FormatError, where + ": missing field '" + key + "'");
  return j.at(key);
}

inline Vec3 vec3_from(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::FormatError, where + ": expected 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline Mat3 mat3_from(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::FormatError, where + ": expected 3x3 rotation");
  Mat3 r;
  for (int i = 0; i < 3; ++i) r.row(i) = vec3_from(j[static_cast<std::size_t>(i)], where).transpose();
  return r;
}

}  // namespace json_detail

inline RigidTransform transform_from_json(const Json& j, const std::string& where = "transform") {
  try {
    RigidTransform xf;
    xf.rotation = json_detail::mat3_from(json_detail::require(j, "rotation", where), where);
    xf.translation = json_detail::vec3_from(json_detail::require(j, "translation", where), where);
    return xf;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, where + ": " + e.what());
  }
}

// ---------------------------------------------------------------- correspondences

inline Json correspondences_to_json(const CorrespondenceSet& corr, const Json& config = Json::object()) {
  Json pairs = Json::array();
  for (const auto& c : corr.pairs) pairs.push_back({{"src", c.src}, {"tgt", c.tgt}, {"score", c.score}});
  return {{"schema", kJsonSchema},
          {"policy", to_string(corr.policy)},
          {"stable_count", corr.stable_count},
          {"pruned_src", corr.pruned_src},
          {"pairs", std::move(pairs)},
          {"config", config}};
}

inline CorrespondenceSet correspondences_from_json(const Json& j, const std::string& where = "correspondences") {
  try {
    CorrespondenceSet out;
    const auto policy = parse_policy(json_detail::require(j, "policy", where).get<std::string>());
    if (!policy) throw Error(ErrorCode::FormatError, where + ": unknown policy");
    out.policy = *policy;
    out.stable_count = j.value("stable_count", std::size_t{0});
    if (j.contains("pruned_src")) out.pruned_src = j.at("pruned_src").get<std::vector<std::size_t>>();
    for (const auto& p : json_detail::require(j, "pairs", where))
      out.pairs.push_back({p.at("src").get<std::size_t>(), p.at("tgt").get<std::size_t>(), p.at("score").get<double>()});
    if (out.stable_count > out.pairs.size()) throw Error(ErrorCode::FormatError, where + ": stable_count exceeds pair count");
    return out;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, where + ": " + e.what());
  }
}

inline std::string correspondences_to_csv(const CorrespondenceSet& corr, const std::string& config_line = {}) {
  std::string out;
  if (!config_line.empty()) out += "# " + config_line + "\n";
  out += "src,tgt,score,stable\n";
  char buf[96];
  for (std::size_t i = 0; i < corr.pairs.size(); ++i) {
    const auto& c = corr.pairs[i];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%d\n", c.src, c.tgt, c.score, i < corr.stable_count ? 1 : 0);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------- registration

struct GroundTruth {
  RigidTransform xf;
  std::vector<std::int64_t> overlap_mask;  // per source point: target index or -1
  Vec3 src_viewpoint = Vec3::Zero();
  Vec3 tgt_viewpoint = Vec3::Zero();
};

inline Json ground_truth_to_json(const GroundTruth& gt, const Json& config = Json::object()) {
  Json j = to_json(gt.xf);
  j["schema"] = kJsonSchema;
  j["overlap_mask"] = gt.overlap_mask;
  j["src_viewpoint"] = to_json(gt.src_viewpoint);
  j["tgt_viewpoint"] = to_json(gt.tgt_viewpoint);
  j["config"] = config;
  return j;
}

inline GroundTruth ground_truth_from_json(const Json& j, const std::string& where = "gt") {
  GroundTruth gt;
  gt.xf = transform_from_json(j, where);
  try {
    if (j.contains("overlap_mask")) gt.overlap_mask = j.at("overlap_mask").get<std::vector<std::int64_t>>();
    if (j.contains("src_viewpoint")) gt.src_viewpoint = json_detail::vec3_from(j.at("src_viewpoint"), where);
    if (j.contains("tgt_viewpoint")) gt.tgt_viewpoint = json_detail::vec3_from(j.at("tgt_viewpoint"), where);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, where + ": " + e.what());
  }
  return gt;
}

inline Json registration_to_json(const PipelineResult& r, bool success, const Json& config = Json::object()) {
  std::vector<std::size_t> src_idx, tgt_idx;
  for (const auto& c : r.registration.predicted_inliers.pairs) {
    src_idx.push_back(c.src);
    tgt_idx.push_back(c.tgt);
  }
  Json j = to_json(r.registration.transform);
  j["schema"] = kJsonSchema;
  j["success"] = success;
  j["low_confidence"] = r.low_confidence;
  j["policy"] = to_string(r.correspondences.policy);
  j["correspondences"] = r.correspondences.size();
  j["pruned"] = r.correspondences.pruned_src.size();
  j["iterations"] = r.registration.iterations_used;
  j["score"] = r.registration.score;
  j["inliers"] = {{"src", src_idx}, {"tgt", tgt_idx}};
  j["timings"] = to_json(r.timings);
  j["config"] = config;
  return j;
}

// ---------------------------------------------------------------- probability curve

inline std::string curve_to_csv(std::span<const CurveRow> rows, const std::string& config_line = {}) {
  std::string out;
  if (!config_line.empty()) out += "# " + config_line + "\n";
  bool mc = false;
  for (const auto& r : rows) mc = mc || r.monte_carlo.has_value();
  out += mc ? "size,n,probability,monte_carlo\n" : "size,n,probability\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g", r.size, r.n, r.probability);
    out += buf;
    if (mc) {
      std::snprintf(buf, sizeof buf, ",%.17g", r.monte_carlo.value_or(0.0));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline Json curve_to_json(std::span<const CurveRow> rows, const Json& config = Json::object()) {
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json row = {{"size", r.size}, {"n", r.n}, {"probability", r.probability}};
    if (r.monte_carlo) row["monte_carlo"] = *r.monte_carlo;
    arr.push_back(std::move(row));
  }
  return {{"schema", kJsonSchema}, {"rows", std::move(arr)}, {"config", config}};
}

inline Json load_json(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::FormatError, path + ": " + e.what());
  }
}

inline void save_json(const std::string& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

}  // namespace gsm
