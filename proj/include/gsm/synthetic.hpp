#pragma once

// Synthetic partially-overlapping point cloud pairs with ground truth.
//
// A base point set of 2n - k points (k = round(overlap * n)) is sampled from a
// shape and sorted along a random horizontal direction. The source is the
// first n points, the target the last n; the k points in between are shared.
// The target is shuffled, moved by the ground-truth transform and perturbed
// with Gaussian noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gsm/error.hpp"
#include "gsm/geometry.hpp"
#include "gsm/ply.hpp"

namespace gsm {

enum class SyntheticShape { BoxSurface, Sphere, MultiPlane, MeshFile };

inline std::string_view to_string(SyntheticShape s) {
  switch (s) {
    case SyntheticShape::BoxSurface: return "box";
    case SyntheticShape::Sphere: return "sphere";
    case SyntheticShape::MultiPlane: return "multi_plane";
    case SyntheticShape::MeshFile: return "mesh";
  }
  return "box";
}

inline std::optional<SyntheticShape> parse_shape(std::string_view name) {
  for (auto s : {SyntheticShape::BoxSurface, SyntheticShape::Sphere, SyntheticShape::MultiPlane,
                 SyntheticShape::MeshFile}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

struct SyntheticPairSpec {
  std::size_t n_points = 1000;
  double overlap_fraction = 0.5;
  double noise_sigma = 0.0;   // meters
  double rotation_max = kPi;  // radians
  double translation_max = 1.0;
  SyntheticShape shape = SyntheticShape::MultiPlane;
  std::string mesh_path;  // vertices of a PLY file, for SyntheticShape::MeshFile
  std::uint64_t seed = 0;

  void validate() const {
    if (n_points < 3) throw Error(ErrorCode::InvalidArgument, "n_points must be >= 3");
    if (!(overlap_fraction > 0.0 && overlap_fraction <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "overlap_fraction must lie in (0, 1]");
    if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_sigma must be >= 0");
    if (!(rotation_max >= 0.0) || !(translation_max >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "rotation/translation ranges must be >= 0");
  }
};

struct SyntheticPair {
  PointCloud src;
  PointCloud tgt;
  RigidTransform xf_gt;  // maps source coordinates onto target coordinates
  // overlap_mask[i] = index of the target counterpart of source point i, or -1.
  std::vector<std::int64_t> overlap_mask;
  // Sensor positions, used to orient estimated normals consistently.
  Vec3 src_viewpoint = Vec3::Zero();
  Vec3 tgt_viewpoint = Vec3::Zero();

  std::size_t overlap_count() const {
    return static_cast<std::size_t>(std::count_if(overlap_mask.begin(), overlap_mask.end(),
                                                  [](std::int64_t v) { return v >= 0; }));
  }
};

namespace synthetic_detail {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    Vec3 v(g(rng), g(rng), g(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

// Axis-aligned rectangle patch: origin + s*edge_a + t*edge_b, s,t in [0,1].
struct Patch {
  Vec3 origin, edge_a, edge_b;
  double area() const { return edge_a.cross(edge_b).norm(); }
};

inline void add_box(std::vector<Patch>& patches, const Vec3& lo, const Vec3& size, bool with_bottom) {
  const Vec3 ex(size.x(), 0, 0), ey(0, size.y(), 0), ez(0, 0, size.z());
  patches.push_back({lo + ez, ex, ey});  // top
  if (with_bottom) patches.push_back({lo, ex, ey});
  patches.push_back({lo, ex, ez});
  patches.push_back({lo + ey, ex, ez});
  patches.push_back({lo, ey, ez});
  patches.push_back({lo + ex, ey, ez});
}

inline std::vector<Vec3> sample_patches(const std::vector<Patch>& patches, std::size_t count, Rng& rng) {
  std::vector<double> areas;
  for (const auto& p : patches) areas.push_back(p.area());
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  std::vector<Vec3> out(count);
  for (auto& pt : out) {
    const auto& p = patches[pick(rng)];
    pt = p.origin + uniform(rng, 0.0, 1.0) * p.edge_a + uniform(rng, 0.0, 1.0) * p.edge_b;
  }
  return out;
}

// Room corner: floor, two walls and a handful of boxes. Sensor near the middle.
inline std::vector<Vec3> sample_scene(std::size_t count, Rng& rng) {
  std::vector<Patch> patches;
  const double half = 2.0, height = 1.5;
  patches.push_back({Vec3(-half, -half, 0), Vec3(2 * half, 0, 0), Vec3(0, 2 * half, 0)});
  patches.push_back({Vec3(-half, -half, 0), Vec3(0, 2 * half, 0), Vec3(0, 0, height)});
  patches.push_back({Vec3(-half, -half, 0), Vec3(2 * half, 0, 0), Vec3(0, 0, height)});
  for (int b = 0; b < 8; ++b) {
    const Vec3 size(uniform(rng, 0.3, 0.9), uniform(rng, 0.3, 0.9), uniform(rng, 0.2, 1.0));
    const Vec3 lo(uniform(rng, -half + 0.2, half - size.x() - 0.2),
                  uniform(rng, -half + 0.2, half - size.y() - 0.2), 0.0);
    add_box(patches, lo, size, false);
  }
  return sample_patches(patches, count, rng);
}

}  // namespace synthetic_detail

inline SyntheticPair generate_pair(const SyntheticPairSpec& spec) {
  using namespace synthetic_detail;
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t n = spec.n_points;
  const auto k = std::max<std::size_t>(
      1, std::min(n, static_cast<std::size_t>(std::llround(spec.overlap_fraction * static_cast<double>(n)))));
  const std::size_t total = 2 * n - k;

  std::vector<Vec3> base;
  Vec3 sensor = Vec3::Zero();
  switch (spec.shape) {
    case SyntheticShape::Sphere:
      base.resize(total);
      for (auto& p : base) p = random_unit(rng);
      break;
    case SyntheticShape::BoxSurface: {
      std::vector<Patch> patches;
      add_box(patches, Vec3(-1.0, -0.75, -0.5), Vec3(2.0, 1.5, 1.0), true);
      base = sample_patches(patches, total, rng);
      break;
    }
    case SyntheticShape::MultiPlane:
      base = sample_scene(total, rng);
      sensor = Vec3(0.0, 0.0, 1.0);
      break;
    case SyntheticShape::MeshFile: {
      if (spec.mesh_path.empty()) throw Error(ErrorCode::FileError, "mesh shape needs a mesh path");
      PointCloud mesh;
      try {
        mesh = read_ply(spec.mesh_path);
      } catch (const FormatError&) {
        throw;
      } catch (const Error& e) {
        throw Error(ErrorCode::FileError, e.what());
      }
      if (mesh.size() < total)
        throw Error(ErrorCode::InvalidArgument, "mesh has " + std::to_string(mesh.size()) +
                                                    " vertices, need " + std::to_string(total));
      std::vector<std::size_t> idx(mesh.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::shuffle(idx.begin(), idx.end(), rng);
      base.resize(total);
      for (std::size_t i = 0; i < total; ++i) base[i] = mesh.points[idx[i]];
      sensor = Vec3::Zero();
      for (const auto& p : mesh.points) sensor += p;
      sensor /= static_cast<double>(mesh.size());
      break;
    }
  }

  const double phi = uniform(rng, 0.0, 2.0 * kPi);
  const Vec3 dir(std::cos(phi), std::sin(phi), 0.0);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return base[a].dot(dir) < base[b].dot(dir); });

  std::vector<std::size_t> src_perm(n), tgt_perm(n);
  std::iota(src_perm.begin(), src_perm.end(), std::size_t{0});
  std::iota(tgt_perm.begin(), tgt_perm.end(), std::size_t{0});
  std::shuffle(src_perm.begin(), src_perm.end(), rng);
  std::shuffle(tgt_perm.begin(), tgt_perm.end(), rng);

  SyntheticPair pair;
  pair.xf_gt.rotation = rotation_about(random_unit(rng), uniform(rng, 0.0, spec.rotation_max));
  pair.xf_gt.translation = random_unit(rng) * uniform(rng, 0.0, spec.translation_max);
  pair.src_viewpoint = sensor;
  pair.tgt_viewpoint = pair.xf_gt.apply(sensor);

  // Window slot s in the source holds base[order[s]]; target slot s holds
  // base[order[n - k + s]].
  pair.src.points.resize(n);
  pair.tgt.points.resize(n);
  pair.overlap_mask.assign(n, -1);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  for (std::size_t s = 0; s < n; ++s) pair.src.points[src_perm[s]] = base[order[s]];
  for (std::size_t s = 0; s < n; ++s) {
    Vec3 p = pair.xf_gt.apply(base[order[n - k + s]]);
    if (spec.noise_sigma > 0.0) p += Vec3(noise(rng), noise(rng), noise(rng));
    pair.tgt.points[tgt_perm[s]] = p;
  }
  for (std::size_t s = n - k; s < n; ++s)
    pair.overlap_mask[src_perm[s]] = static_cast<std::int64_t>(tgt_perm[s - (n - k)]);
  return pair;
}

}  // namespace gsm
