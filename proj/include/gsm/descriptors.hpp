#pragma once

// Per-point local descriptors: normal estimation, a simplified FPFH-style
// angular histogram, and descriptor file I/O (GSMD binary and CSV).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <charconv>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gsm/error.hpp"
#include "gsm/geometry.hpp"
#include "gsm/io.hpp"
#include "gsm/kdtree.hpp"
#include "gsm/parallel.hpp"

namespace gsm {

// Row-major float32 feature vectors, one per point.
class DescriptorSet {
 public:
  DescriptorSet() = default;
  DescriptorSet(std::size_t count, std::size_t dim) : dim_(dim), data_(count * dim, 0.0f) {
    if (dim == 0) throw Error(ErrorCode::InvalidArgument, "descriptor dim must be positive");
  }
  DescriptorSet(std::size_t dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
    if (dim == 0) throw Error(ErrorCode::InvalidArgument, "descriptor dim must be positive");
    if (data_.size() % dim != 0) throw Error(ErrorCode::DimensionMismatch, "data not a multiple of dim");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const noexcept { return size() == 0; }

  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  const std::vector<float>& data() const noexcept { return data_; }

  // Rows left all-zero because the point had no neighbours in range.
  std::vector<std::size_t> isolated;

  friend bool operator==(const DescriptorSet& a, const DescriptorSet& b) {
    return a.dim_ == b.dim_ && a.data_.size() == b.data_.size() &&
           std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

// Normals from the smallest-eigenvalue eigenvector of the k-NN covariance,
// flipped to face `viewpoint`.
inline PointCloud estimate_normals(const PointCloud& cloud, std::size_t k,
                                   const Vec3& viewpoint = Vec3::Zero()) {
  if (k < 3) throw Error(ErrorCode::InvalidArgument, "k must be at least 3");
  if (cloud.size() < k)
    throw Error(ErrorCode::InsufficientPoints,
                "cloud has " + std::to_string(cloud.size()) + " points, k = " + std::to_string(k));
  PointCloud out;
  out.points = cloud.points;
  out.normals.assign(cloud.size(), Vec3::UnitZ());
  const KdTree tree(cloud.points);

  parallel_for(cloud.size(), [&](std::size_t i) {
    const auto nbrs = tree.knn(cloud.points[i], k);
    Vec3 mean = Vec3::Zero();
    for (const auto& nb : nbrs) mean += cloud.points[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& nb : nbrs) {
      const Vec3 d = cloud.points[nb.index] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (!n.allFinite()) n = Vec3::UnitZ();
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    out.normals[i] = n;
  });
  return out;
}

struct DescriptorParams {
  double radius = 0.3;    // meters
  std::size_t bins = 11;  // per angular feature; total dim is 3 * bins
};

namespace descriptor_detail {

inline std::size_t bin_of(double value, double lo, double hi, std::size_t bins) {
  const double t = (value - lo) / (hi - lo) * static_cast<double>(bins);
  if (!(t > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(t), bins - 1);
}

}  // namespace descriptor_detail

// Simplified FPFH: a (alpha, phi, theta) Darboux-frame histogram per point
// (SPFH), then each point adds its neighbours' SPFH weighted by 1/distance.
// Each of the three blocks is L1-normalised.
//
// Histograms in double precision, before rounding to the float32 storage type.
struct DescriptorHistograms {
  std::size_t dim = 0;
  std::vector<double> values;  // row-major, n * dim
  std::vector<std::size_t> isolated;
};

inline DescriptorHistograms compute_descriptor_histograms(const PointCloud& cloud,
                                                          const DescriptorParams& params = {}) {
  if (!cloud.has_normals()) throw Error(ErrorCode::NormalsRequired, "descriptor needs normals");
  if (!(params.radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
  if (params.bins < 2) throw Error(ErrorCode::InvalidArgument, "bins must be at least 2");

  const std::size_t n = cloud.size();
  const std::size_t bins = params.bins;
  const std::size_t dim = 3 * bins;
  const KdTree tree(cloud.points);

  std::vector<std::vector<KdTree::Neighbor>> neighborhoods(n);
  std::vector<double> spfh(n * dim, 0.0);

  parallel_for(n, [&](std::size_t i) {
    auto nbrs = tree.radius(cloud.points[i], params.radius);
    std::erase_if(nbrs, [&](const KdTree::Neighbor& nb) { return nb.index == i || nb.sq_dist == 0.0; });
    neighborhoods[i] = nbrs;

    const Vec3& p = cloud.points[i];
    const Vec3& u = cloud.normals[i];
    double* h = spfh.data() + i * dim;
    std::size_t used = 0;
    for (const auto& nb : nbrs) {
      const Vec3 d = (cloud.points[nb.index] - p) / std::sqrt(nb.sq_dist);
      Vec3 v = u.cross(d);
      const double vn = v.norm();
      if (vn < 1e-12) continue;
      v /= vn;
      const Vec3 w = u.cross(v);
      const Vec3& nq = cloud.normals[nb.index];
      const double alpha = v.dot(nq);
      const double phi = u.dot(d);
      double theta = std::atan2(w.dot(nq), u.dot(nq));
      // Antiparallel normals sit on the +-pi seam; the sign of a rounding-level
      // w.nq must not decide the bin.
      if (theta < -kPi + 1e-9) theta = kPi;
      h[descriptor_detail::bin_of(alpha, -1.0, 1.0, bins)] += 1.0;
      h[bins + descriptor_detail::bin_of(phi, -1.0, 1.0, bins)] += 1.0;
      h[2 * bins + descriptor_detail::bin_of(theta, -kPi, kPi, bins)] += 1.0;
      ++used;
    }
    if (used > 0) {
      for (std::size_t b = 0; b < dim; ++b) h[b] /= static_cast<double>(used);
    }
  });

  DescriptorHistograms out;
  out.dim = dim;
  out.values.assign(n * dim, 0.0);
  std::vector<std::uint8_t> isolated(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const auto& nbrs = neighborhoods[i];
    if (nbrs.empty()) {
      isolated[i] = 1;
      return;
    }
    std::vector<double> acc(spfh.begin() + static_cast<std::ptrdiff_t>(i * dim),
                            spfh.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    const double inv_k = 1.0 / static_cast<double>(nbrs.size());
    for (const auto& nb : nbrs) {
      const double weight = inv_k / std::sqrt(nb.sq_dist);
      const double* h = spfh.data() + nb.index * dim;
      for (std::size_t b = 0; b < dim; ++b) acc[b] += weight * h[b];
    }
    double* row = out.values.data() + i * dim;
    for (std::size_t block = 0; block < 3; ++block) {
      double sum = 0.0;
      for (std::size_t b = 0; b < bins; ++b) sum += acc[block * bins + b];
      if (sum <= 0.0) continue;
      for (std::size_t b = 0; b < bins; ++b)
        row[block * bins + b] = acc[block * bins + b] / sum;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (isolated[i]) out.isolated.push_back(i);
  }
  return out;
}

inline DescriptorSet compute_descriptors(const PointCloud& cloud, const DescriptorParams& params = {}) {
  const DescriptorHistograms h = compute_descriptor_histograms(cloud, params);
  std::vector<float> data(h.values.size());
  std::transform(h.values.begin(), h.values.end(), data.begin(), [](double v) { return static_cast<float>(v); });
  DescriptorSet out(h.dim, std::move(data));
  out.isolated = h.isolated;
  return out;
}

// --- file formats --------------------------------------------------------
//
// Binary: "GSMD", u32 version (1), u32 count, u32 dim, then count*dim float32,
// all little-endian, row-major. CSV: one row per point, dim comma-separated values.

inline constexpr std::uint32_t kDescriptorFormatVersion = 1;

inline std::string serialize_descriptors(const DescriptorSet& set) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  std::string out("GSMD");
  auto put_u32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  put_u32(kDescriptorFormatVersion);
  put_u32(static_cast<std::uint32_t>(set.size()));
  put_u32(static_cast<std::uint32_t>(set.dim()));
  out.append(reinterpret_cast<const char*>(set.data().data()), set.data().size() * sizeof(float));
  return out;
}

inline DescriptorSet parse_descriptors(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "GSMD") throw FormatError("bad descriptor magic", 0);
  if (bytes.size() < 16) throw FormatError("truncated descriptor header", bytes.size());
  auto get_u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };
  if (get_u32(4) != kDescriptorFormatVersion) throw FormatError("unsupported descriptor version", 4);
  const std::size_t count = get_u32(8);
  const std::size_t dim = get_u32(12);
  if (dim == 0) throw FormatError("descriptor dim must be positive", 12);
  const std::size_t expected = 16 + count * dim * sizeof(float);
  if (bytes.size() < expected) throw FormatError("truncated descriptor payload", bytes.size());
  if (bytes.size() > expected) throw FormatError("payload longer than count*dim", expected);
  std::vector<float> data(count * dim);
  std::memcpy(data.data(), bytes.data() + 16, data.size() * sizeof(float));
  return DescriptorSet(dim, std::move(data));
}

inline std::string descriptors_to_csv(const DescriptorSet& set) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto row = set.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out.push_back(',');
      auto res = std::to_chars(buf, buf + sizeof(buf), row[j]);
      out.append(buf, res.ptr);
    }
    out.push_back('\n');
  }
  return out;
}

inline DescriptorSet descriptors_from_csv(std::string_view text) {
  std::vector<float> data;
  std::size_t dim = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() != '#') {
      std::size_t cols = 0;
      std::size_t p = 0;
      while (p <= line.size()) {
        std::size_t comma = line.find(',', p);
        if (comma == std::string_view::npos) comma = line.size();
        std::string_view field = line.substr(p, comma - p);
        while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
        while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
        float v = 0.0f;
        auto res = std::from_chars(field.data(), field.data() + field.size(), v);
        if (res.ec != std::errc() || res.ptr != field.data() + field.size())
          throw FormatError("malformed descriptor value", pos + p);
        data.push_back(v);
        ++cols;
        p = comma + 1;
      }
      if (dim == 0) dim = cols;
      else if (cols != dim) throw FormatError("inconsistent descriptor dim", pos);
    }
    pos = eol + 1;
  }
  if (dim == 0) throw FormatError("empty descriptor CSV", 0);
  return DescriptorSet(dim, std::move(data));
}

inline bool ends_with_csv(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

inline DescriptorSet load_descriptors(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    if (ends_with_csv(path) && bytes.compare(0, 4, "GSMD") != 0) return descriptors_from_csv(bytes);
    return parse_descriptors(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.detail(), e.offset());
  }
}

inline void save_descriptors(const DescriptorSet& set, const std::string& path) {
  atomic_write(path, ends_with_csv(path) ? descriptors_to_csv(set) : serialize_descriptors(set));
}

}  // namespace gsm
