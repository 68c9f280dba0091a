#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gsm/descriptors.hpp"
#include "gsm/error.hpp"
#include "gsm/io.hpp"

namespace gsm {

// Dense m x n score matrix; row i is source point i, column j is target point j.
using ScoreMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SimilarityMatrix = ScoreMatrix;

// Entry the cosine matrix assigns to any pair involving a zero descriptor.
inline constexpr double kZeroDescriptorScore = -1.0;

namespace similarity_detail {

// Unit-normalised rows in double precision; zero rows stay zero and are reported.
inline ScoreMatrix normalized_rows(const DescriptorSet& set, std::vector<std::size_t>& zero_rows) {
  ScoreMatrix out(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(set.dim()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto row = set.row(i);
    double norm2 = 0.0;
    for (float v : row) norm2 += static_cast<double>(v) * static_cast<double>(v);
    const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
    if (norm2 == 0.0) zero_rows.push_back(i);
    for (std::size_t j = 0; j < row.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(row[j]) * inv;
  }
  return out;
}

}  // namespace similarity_detail

inline SimilarityMatrix cosine_similarity_matrix(const DescriptorSet& src, const DescriptorSet& tgt) {
  if (src.dim() != tgt.dim())
    throw Error(ErrorCode::DimensionMismatch,
                "descriptor dims " + std::to_string(src.dim()) + " vs " + std::to_string(tgt.dim()));
  std::vector<std::size_t> zero_src, zero_tgt;
  const ScoreMatrix a = similarity_detail::normalized_rows(src, zero_src);
  const ScoreMatrix b = similarity_detail::normalized_rows(tgt, zero_tgt);
  SimilarityMatrix s = a * b.transpose();
  s = s.cwiseMax(-1.0).cwiseMin(1.0);
  for (auto i : zero_src) s.row(static_cast<Eigen::Index>(i)).setConstant(kZeroDescriptorScore);
  for (auto j : zero_tgt) s.col(static_cast<Eigen::Index>(j)).setConstant(kZeroDescriptorScore);
  return s;
}

inline std::string similarity_to_csv(const SimilarityMatrix& s) {
  std::string out;
  char buf[64];
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (j) out.push_back(',');
      const int len = std::snprintf(buf, sizeof(buf), "%.17g", s(i, j));
      out.append(buf, static_cast<std::size_t>(len));
    }
    out.push_back('\n');
  }
  return out;
}

inline void save_similarity_csv(const SimilarityMatrix& s, const std::string& path) {
  atomic_write(path, similarity_to_csv(s));
}

}  // namespace gsm
