#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gsm {

enum class PolicyTag {
  Unspecified,
  NearestNeighbor,
  MutualNearestNeighbor,
  Hungarian,
  Sinkhorn,
  GaleShapley,
  GsMatching,
};

inline std::string_view to_string(PolicyTag tag) {
  switch (tag) {
    case PolicyTag::Unspecified: return "none";
    case PolicyTag::NearestNeighbor: return "nn";
    case PolicyTag::MutualNearestNeighbor: return "mutual";
    case PolicyTag::Hungarian: return "hungarian";
    case PolicyTag::Sinkhorn: return "sinkhorn";
    case PolicyTag::GaleShapley: return "gale-shapley";
    case PolicyTag::GsMatching: return "gs";
  }
  return "none";
}

inline std::optional<PolicyTag> parse_policy(std::string_view name) {
  for (auto tag : {PolicyTag::Unspecified, PolicyTag::NearestNeighbor,
                   PolicyTag::MutualNearestNeighbor, PolicyTag::Hungarian, PolicyTag::Sinkhorn,
                   PolicyTag::GaleShapley, PolicyTag::GsMatching}) {
    if (to_string(tag) == name) return tag;
  }
  return std::nullopt;
}

struct Correspondence {
  std::size_t src = 0;
  std::size_t tgt = 0;
  double score = 0.0;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

// Putative matches produced by a matching policy.
//
// For GS-Matching the first `stable_count` pairs are the mutually preferred
// (one-to-one) pairs; the remainder come from the nearest-neighbour fallback.
// Other policies leave `stable_count` at zero.
struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
  PolicyTag policy = PolicyTag::Unspecified;
  std::vector<std::size_t> pruned_src;
  std::size_t stable_count = 0;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

}  // namespace gsm
