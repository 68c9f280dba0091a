#pragma once

// Matching policies: turn a source x target score matrix into putative
// correspondences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gsm/correspondence.hpp"
#include "gsm/error.hpp"
#include "gsm/hungarian.hpp"
#include "gsm/parallel.hpp"
#include "gsm/similarity.hpp"
#include "gsm/sinkhorn.hpp"

namespace gsm {

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace matching_detail {

inline void require_nonempty(const ScoreMatrix& s) {
  if (s.rows() == 0 || s.cols() == 0) throw Error(ErrorCode::EmptyInput, "empty score matrix");
}

inline double at(const ScoreMatrix& s, std::size_t i, std::size_t j) {
  return s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

// First index of the row maximum.
inline std::size_t row_argmax(const ScoreMatrix& s, std::size_t i) {
  const double* row = s.data() + i * static_cast<std::size_t>(s.cols());
  std::size_t best = 0;
  for (std::size_t j = 1; j < static_cast<std::size_t>(s.cols()); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

// First index of each column maximum, one row-major pass.
inline std::vector<std::size_t> col_argmax(const ScoreMatrix& s) {
  const auto m = static_cast<std::size_t>(s.rows());
  const auto n = static_cast<std::size_t>(s.cols());
  std::vector<std::size_t> best(n, 0);
  for (std::size_t i = 1; i < m; ++i) {
    const double* row = s.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] > at(s, best[j], j)) best[j] = i;
    }
  }
  return best;
}

inline std::vector<std::size_t> mutual_max_rows(const ScoreMatrix& s) {
  const auto cols = col_argmax(s);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < static_cast<std::size_t>(s.rows()); ++i) {
    if (cols[row_argmax(s, i)] == i) rows.push_back(i);
  }
  return rows;
}

}  // namespace matching_detail

inline CorrespondenceSet match_nearest_neighbor(const ScoreMatrix& s) {
  matching_detail::require_nonempty(s);
  CorrespondenceSet out;
  out.policy = PolicyTag::NearestNeighbor;
  out.pairs.resize(static_cast<std::size_t>(s.rows()));
  parallel_for(out.pairs.size(), [&](std::size_t i) {
    const std::size_t j = matching_detail::row_argmax(s, i);
    out.pairs[i] = {i, j, matching_detail::at(s, i, j)};
  }, 256);
  return out;
}

inline CorrespondenceSet match_mutual_nn(const ScoreMatrix& s) {
  matching_detail::require_nonempty(s);
  CorrespondenceSet out;
  out.policy = PolicyTag::MutualNearestNeighbor;
  for (std::size_t i : matching_detail::mutual_max_rows(s)) {
    const std::size_t j = matching_detail::row_argmax(s, i);
    out.pairs.push_back({i, j, matching_detail::at(s, i, j)});
  }
  return out;
}

// Score used to pad rectangular inputs; below any cosine score, so padded
// cells never beat a real one.
inline constexpr double kHungarianPadScore = -2.0;

inline CorrespondenceSet match_hungarian(const ScoreMatrix& s) {
  matching_detail::require_nonempty(s);
  const auto m = static_cast<std::size_t>(s.rows());
  const auto n = static_cast<std::size_t>(s.cols());
  const std::size_t size = std::max(m, n);
  ScoreMatrix padded = ScoreMatrix::Constant(static_cast<Eigen::Index>(size),
                                             static_cast<Eigen::Index>(size), kHungarianPadScore);
  padded.topLeftCorner(s.rows(), s.cols()) = s;
  const auto assignment = solve_assignment_max(padded);

  CorrespondenceSet out;
  out.policy = PolicyTag::Hungarian;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = assignment[i];
    if (j < n) out.pairs.push_back({i, j, matching_detail::at(s, i, j)});
  }
  return out;
}

struct SinkhornMatch {
  CorrespondenceSet correspondences;
  std::size_t iterations = 0;
  double violation = 0.0;
  bool converged = false;
};

// Entropic relaxation followed by mutual maximum selection on the plan.
inline SinkhornMatch match_sinkhorn_detailed(const ScoreMatrix& s, const SinkhornParams& params = {}) {
  matching_detail::require_nonempty(s);
  const SinkhornPlan plan = sinkhorn_plan(s, params);
  SinkhornMatch out;
  out.iterations = plan.iterations;
  out.violation = plan.violation;
  out.converged = plan.converged;
  out.correspondences.policy = PolicyTag::Sinkhorn;
  for (std::size_t i : matching_detail::mutual_max_rows(plan.log_plan)) {
    const std::size_t j = matching_detail::row_argmax(plan.log_plan, i);
    out.correspondences.pairs.push_back({i, j, matching_detail::at(s, i, j)});
  }
  return out;
}

inline CorrespondenceSet match_sinkhorn(const ScoreMatrix& s, double epsilon = 0.001,
                                        std::size_t max_iters = 100, double tol = 1e-6) {
  return match_sinkhorn_detailed(s, {epsilon, max_iters, tol}).correspondences;
}

// Classic deferred acceptance over complete preference lists (sorted by
// score, ties to the lower index). The smaller side proposes.
inline CorrespondenceSet match_gale_shapley(const ScoreMatrix& s) {
  matching_detail::require_nonempty(s);
  const bool swapped = s.rows() > s.cols();
  const ScoreMatrix t = swapped ? ScoreMatrix(s.transpose()) : ScoreMatrix();
  const ScoreMatrix& a = swapped ? t : s;
  const auto m = static_cast<std::size_t>(a.rows());  // proposers
  const auto n = static_cast<std::size_t>(a.cols());

  std::vector<std::uint32_t> prefs(m * n);
  parallel_for(m, [&](std::size_t i) {
    auto* p = prefs.data() + i * n;
    std::iota(p, p + n, 0u);
    std::stable_sort(p, p + n, [&](std::uint32_t x, std::uint32_t y) {
      return matching_detail::at(a, i, x) > matching_detail::at(a, i, y);
    });
  }, 16);
  // rank[j * m + i]: position of proposer i in receiver j's list.
  std::vector<std::uint32_t> rank(n * m);
  parallel_for(n, [&](std::size_t j) {
    std::vector<std::uint32_t> order(m);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
      return matching_detail::at(a, x, j) > matching_detail::at(a, y, j);
    });
    for (std::size_t r = 0; r < m; ++r) rank[j * m + order[r]] = static_cast<std::uint32_t>(r);
  }, 16);

  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> next(m, 0), partner_of_receiver(n, none);
  std::vector<std::size_t> free_list(m);
  std::iota(free_list.rbegin(), free_list.rend(), std::size_t{0});
  while (!free_list.empty()) {
    const std::size_t i = free_list.back();
    if (next[i] >= n) {  // exhausted; cannot happen when m <= n
      free_list.pop_back();
      continue;
    }
    const std::size_t j = prefs[i * n + next[i]++];
    const std::size_t held = partner_of_receiver[j];
    if (held == none) {
      partner_of_receiver[j] = i;
      free_list.pop_back();
    } else if (rank[j * m + i] < rank[j * m + held]) {
      partner_of_receiver[j] = i;
      free_list.back() = held;
    }
  }

  CorrespondenceSet out;
  out.policy = PolicyTag::GaleShapley;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = partner_of_receiver[j];
    if (i == none) continue;
    const std::size_t src = swapped ? j : i;
    const std::size_t tgt = swapped ? i : j;
    out.pairs.push_back({src, tgt, matching_detail::at(s, src, tgt)});
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const Correspondence& x, const Correspondence& y) { return x.src < y.src; });
  return out;
}

// --- GS-Matching ----------------------------------------------------------

enum class WeightMode { InverseCount, ReciprocalRank };

inline const char* to_string(WeightMode mode) {
  return mode == WeightMode::InverseCount ? "inverse_count" : "reciprocal_rank";
}

struct GsMatchingParams {
  std::size_t k_iterations = 3;               // candidate list length (K)
  std::optional<double> score_threshold_t1;   // T1; default: 0.9 quantile of S
  std::optional<std::size_t> noise_count_max_t2;  // T2; default: max(10, 0.05 n)
  WeightMode weight_mode = WeightMode::InverseCount;

  void validate() const {
    if (k_iterations < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
    if (score_threshold_t1 && !(*score_threshold_t1 > -1.0 && *score_threshold_t1 < 1.0))
      throw Error(ErrorCode::InvalidArgument, "T1 must lie in (-1, 1)");
    if (noise_count_max_t2 && *noise_count_max_t2 < 1)
      throw Error(ErrorCode::InvalidArgument, "T2 must be >= 1");
  }
};

inline constexpr double kDefaultT1Quantile = 0.9;

// Lower empirical quantile: the element at floor(q * (N - 1)) in ascending order.
inline double score_quantile(const ScoreMatrix& s, double q) {
  matching_detail::require_nonempty(s);
  const auto total = static_cast<std::size_t>(s.size());
  auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(total - 1)));
  const double* data = s.data();
  if (total < (std::size_t{1} << 16)) {
    std::vector<double> values(data, data + total);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
  }
  // Large matrices: histogram on the top bits of an order-preserving integer
  // key, then select within the one bucket that holds rank k. Avoids copying
  // and partially sorting all n^2 scores.
  constexpr int kBits = 20;
  auto key = [](double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof u);
    return (u >> 63) ? ~u : (u | (std::uint64_t{1} << 63));
  };
  std::vector<std::uint32_t> hist(std::size_t{1} << kBits, 0);
  for (std::size_t i = 0; i < total; ++i) ++hist[key(data[i]) >> (64 - kBits)];
  std::size_t bucket = 0;
  while (k >= hist[bucket]) k -= hist[bucket++];
  std::vector<double> values;
  values.reserve(hist[bucket]);
  for (std::size_t i = 0; i < total; ++i) {
    if ((key(data[i]) >> (64 - kBits)) == bucket) values.push_back(data[i]);
  }
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

inline std::size_t default_t2(std::size_t n_targets) {
  return std::max<std::size_t>(10, static_cast<std::size_t>(0.05 * static_cast<double>(n_targets)));
}

inline BinaryMatrix binarize_scores(const ScoreMatrix& s, double t1) {
  return (s.array() > t1).cast<std::uint8_t>();
}

struct NoiseCountVector {
  std::vector<std::size_t> counts;
};

inline NoiseCountVector noise_counts(const BinaryMatrix& bin) {
  NoiseCountVector out;
  out.counts.resize(static_cast<std::size_t>(bin.rows()));
  for (Eigen::Index i = 0; i < bin.rows(); ++i)
    out.counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(bin.row(i).cast<std::size_t>().sum());
  return out;
}

// Same as noise_counts(binarize_scores(s, t1)) without the intermediate matrix.
inline NoiseCountVector noise_counts(const ScoreMatrix& s, double t1) {
  NoiseCountVector out;
  const auto n = static_cast<std::size_t>(s.cols());
  out.counts.resize(static_cast<std::size_t>(s.rows()));
  parallel_for(out.counts.size(), [&](std::size_t i) {
    const double* row = s.data() + i * n;
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) c += row[j] > t1;
    out.counts[i] = c;
  }, 256);
  return out;
}

// Priority per source; strictly decreasing in noise count, in (0, 1].
inline std::vector<double> derive_weights(const NoiseCountVector& nc, WeightMode mode) {
  std::vector<double> w(nc.counts.size());
  if (mode == WeightMode::InverseCount) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / (1.0 + static_cast<double>(nc.counts[i]));
    return w;
  }
  std::vector<std::size_t> distinct = nc.counts;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto rank = std::lower_bound(distinct.begin(), distinct.end(), nc.counts[i]) - distinct.begin() + 1;
    w[i] = 1.0 / static_cast<double>(rank);
  }
  return w;
}

// Everything GS-Matching computed, for inspection and testing.
struct GsMatchingResult {
  CorrespondenceSet correspondences;
  double t1 = 0.0;
  std::size_t t2 = 0;
  NoiseCountVector noise;
  std::vector<double> weights;
  std::vector<std::vector<std::size_t>> src_candidates;  // top-K targets per source (empty if pruned)
  std::vector<std::vector<std::size_t>> tgt_candidates;  // top-K surviving sources per target
  std::size_t rounds = 0;                                // mutual-preference rounds run
};

namespace matching_detail {

// Fixed-capacity list of the best (score, index) entries, best first; ties
// keep the earlier-inserted (lower) index.
struct TopK {
  static void offer(double* scores, std::size_t* idx, std::size_t& len, std::size_t k,
                    double score, std::size_t index) {
    if (len == k && !(score > scores[k - 1])) return;
    std::size_t pos = len < k ? len++ : k - 1;
    while (pos > 0 && score > scores[pos - 1]) {
      scores[pos] = scores[pos - 1];
      idx[pos] = idx[pos - 1];
      --pos;
    }
    scores[pos] = score;
    idx[pos] = index;
  }
};

}  // namespace matching_detail

inline GsMatchingResult gs_matching_detailed(const ScoreMatrix& s, const GsMatchingParams& params = {}) {
  matching_detail::require_nonempty(s);
  params.validate();
  const auto m = static_cast<std::size_t>(s.rows());
  const auto n = static_cast<std::size_t>(s.cols());
  const std::size_t k = params.k_iterations;
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();

  GsMatchingResult r;
  r.correspondences.policy = PolicyTag::GsMatching;
  r.t1 = params.score_threshold_t1 ? *params.score_threshold_t1 : score_quantile(s, kDefaultT1Quantile);
  r.t2 = params.noise_count_max_t2 ? *params.noise_count_max_t2 : default_t2(n);

  // Step 1: noise counts, pruning, priority weights.
  r.noise = noise_counts(s, r.t1);
  r.weights = derive_weights(r.noise, params.weight_mode);
  std::vector<char> alive(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    if (r.noise.counts[i] > r.t2) {
      alive[i] = 0;
      r.correspondences.pruned_src.push_back(i);
    }
  }

  // Step 2a: top-K candidate lists. Row order under the weighted score equals
  // row order under s (positive per-row factor), so rows rank by s directly.
  const std::size_t row_k = std::min(k, n);
  const std::size_t col_k = std::min(k, m);
  r.src_candidates.assign(m, {});
  parallel_for(m, [&](std::size_t i) {
    if (!alive[i]) return;
    std::vector<double> sc(row_k);
    std::vector<std::size_t> ix(row_k);
    std::size_t len = 0;
    const double* row = s.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) matching_detail::TopK::offer(sc.data(), ix.data(), len, row_k, row[j], j);
    r.src_candidates[i].assign(ix.begin(), ix.begin() + static_cast<std::ptrdiff_t>(len));
  }, 256);

  {
    std::vector<double> sc(n * col_k);
    std::vector<std::size_t> ix(n * col_k);
    std::vector<std::size_t> len(n, 0);
    for (std::size_t i = 0; i < m; ++i) {
      if (!alive[i]) continue;
      const double w = r.weights[i];
      const double* row = s.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        matching_detail::TopK::offer(sc.data() + j * col_k, ix.data() + j * col_k, len[j], col_k,
                                     w * row[j], i);
      }
    }
    r.tgt_candidates.assign(n, {});
    for (std::size_t j = 0; j < n; ++j) {
      r.tgt_candidates[j].assign(ix.begin() + static_cast<std::ptrdiff_t>(j * col_k),
                                 ix.begin() + static_cast<std::ptrdiff_t>(j * col_k + len[j]));
    }
  }

  // A pair can only ever be mutually preferred if each is on the other's list.
  auto listed = [](const std::vector<std::size_t>& list, std::size_t x) {
    return std::find(list.begin(), list.end(), x) != list.end();
  };
  std::vector<std::vector<std::size_t>> src_opts(m), tgt_opts(n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j : r.src_candidates[i]) {
      if (listed(r.tgt_candidates[j], i)) src_opts[i].push_back(j);
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i : r.tgt_candidates[j]) {
      if (listed(r.src_candidates[i], j)) tgt_opts[j].push_back(i);
    }
  }

  // Step 2b: rounds of mutual top preference among remaining points. Each
  // round commits at least the best remaining listed pair, so this stops once
  // no listed pair has both endpoints free.
  std::vector<std::size_t> src_partner(m, none), tgt_partner(n, none);
  std::vector<std::size_t> src_cursor(m, 0), tgt_cursor(n, 0);
  std::vector<Correspondence> stable;
  for (;;) {
    std::vector<std::size_t> src_choice(m, none);
    bool any_pointer = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (src_partner[i] != none) continue;
      auto& c = src_cursor[i];
      while (c < src_opts[i].size() && tgt_partner[src_opts[i][c]] != none) ++c;
      if (c < src_opts[i].size()) {
        src_choice[i] = src_opts[i][c];
        any_pointer = true;
      }
    }
    if (!any_pointer) break;
    std::size_t committed = 0;
    std::vector<std::pair<std::size_t, std::size_t>> round_pairs;
    for (std::size_t j = 0; j < n; ++j) {
      if (tgt_partner[j] != none) continue;
      auto& c = tgt_cursor[j];
      while (c < tgt_opts[j].size() && src_partner[tgt_opts[j][c]] != none) ++c;
      if (c < tgt_opts[j].size()) {
        const std::size_t i = tgt_opts[j][c];
        if (src_choice[i] == j) round_pairs.emplace_back(i, j);
      }
    }
    for (auto [i, j] : round_pairs) {
      src_partner[i] = j;
      tgt_partner[j] = i;
      stable.push_back({i, j, matching_detail::at(s, i, j)});
      ++committed;
    }
    ++r.rounds;
    if (committed == 0) break;
  }

  // Step 3: leftover sources take their best target among those left free by
  // step 2 (unweighted s); targets are not consumed here.
  std::vector<std::size_t> free_targets;
  for (std::size_t j = 0; j < n; ++j) {
    if (tgt_partner[j] == none) free_targets.push_back(j);
  }
  std::vector<Correspondence> fallback;
  for (std::size_t i = 0; i < m; ++i) {
    if (!alive[i] || src_partner[i] != none) continue;
    std::size_t best;
    if (free_targets.empty()) {
      best = matching_detail::row_argmax(s, i);
    } else {
      best = free_targets.front();
      for (std::size_t j : free_targets) {
        if (matching_detail::at(s, i, j) > matching_detail::at(s, i, best)) best = j;
      }
    }
    fallback.push_back({i, best, matching_detail::at(s, i, best)});
  }

  std::sort(stable.begin(), stable.end(),
            [](const Correspondence& a, const Correspondence& b) { return a.src < b.src; });
  r.correspondences.stable_count = stable.size();
  r.correspondences.pairs = std::move(stable);
  r.correspondences.pairs.insert(r.correspondences.pairs.end(), fallback.begin(), fallback.end());
  return r;
}

inline CorrespondenceSet match_gs_matching(const ScoreMatrix& s, const GsMatchingParams& params = {}) {
  return gs_matching_detailed(s, params).correspondences;
}

// Policy dispatch used by the pipeline, harness and CLI.
struct MatchOptions {
  GsMatchingParams gs;
  SinkhornParams sinkhorn;
};

inline CorrespondenceSet match(const ScoreMatrix& s, PolicyTag policy, const MatchOptions& opts = {}) {
  switch (policy) {
    case PolicyTag::NearestNeighbor: return match_nearest_neighbor(s);
    case PolicyTag::MutualNearestNeighbor: return match_mutual_nn(s);
    case PolicyTag::Hungarian: return match_hungarian(s);
    case PolicyTag::Sinkhorn: return match_sinkhorn_detailed(s, opts.sinkhorn).correspondences;
    case PolicyTag::GaleShapley: return match_gale_shapley(s);
    case PolicyTag::GsMatching: return match_gs_matching(s, opts.gs);
    case PolicyTag::Unspecified: break;
  }
  throw Error(ErrorCode::InvalidArgument, "no matching policy selected");
}

}  // namespace gsm
