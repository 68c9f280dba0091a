#include <gtest/gtest.h>

#include <random>

#include "gsm/geometry.hpp"
#include "gsm/kdtree.hpp"

using namespace gsm;

namespace {

std::mt19937_64& rng() {
  static std::mt19937_64 r(12345);
  return r;
}

double uni(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

Vec3 random_vec(double scale = 1.0) { return Vec3(uni(-scale, scale), uni(-scale, scale), uni(-scale, scale)); }

RigidTransform random_transform() {
  RigidTransform xf;
  xf.rotation = rotation_about(random_vec().normalized(), uni(0.0, kPi));
  xf.translation = random_vec(2.0);
  return xf;
}

PointCloud random_cloud(std::size_t n, double scale = 1.0) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back(random_vec(scale));
  return c;
}

CorrespondenceSet identity_pairs(std::size_t n) {
  CorrespondenceSet s;
  for (std::size_t i = 0; i < n; ++i) s.pairs.push_back({i, i, 1.0});
  return s;
}

}  // namespace

TEST(ApplyTransform, IdentityLeavesCloudUnchanged) {
  PointCloud c = random_cloud(50);
  c.normals.assign(50, Vec3::UnitZ());
  const PointCloud out = apply_transform(c, RigidTransform::identity());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(out.points[i], c.points[i]);
    EXPECT_EQ(out.normals[i], c.normals[i]);
  }
}

TEST(ApplyTransform, QuarterTurnAboutZ) {
  PointCloud c;
  c.points.push_back(Vec3(1, 0, 0));
  RigidTransform xf;
  xf.rotation = rotation_about(Vec3::UnitZ(), kPi / 2);
  const Vec3 p = apply_transform(c, xf).points[0];
  EXPECT_NEAR(p.x(), 0.0, 1e-15);
  EXPECT_NEAR(p.y(), 1.0, 1e-15);
  EXPECT_NEAR(p.z(), 0.0, 1e-15);
}

TEST(ApplyTransform, MatchesElementwiseMultiply) {
  PointCloud c = random_cloud(40);
  for (std::size_t i = 0; i < c.size(); ++i) c.normals.push_back(random_vec().normalized());
  const RigidTransform xf = random_transform();
  const PointCloud out = apply_transform(c, xf);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int r = 0; r < 3; ++r) {
      double p = xf.translation(r), n = 0.0;
      for (int k = 0; k < 3; ++k) {
        p += xf.rotation(r, k) * c.points[i](k);
        n += xf.rotation(r, k) * c.normals[i](k);
      }
      EXPECT_NEAR(out.points[i](r), p, 1e-12);
      EXPECT_NEAR(out.normals[i](r), n, 1e-12);  // normals are rotated, never translated
    }
  }
}

TEST(ApplyTransform, PreservesPairwiseDistances) {
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud c = random_cloud(30, 5.0);
    const PointCloud out = apply_transform(c, random_transform());
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j)
        EXPECT_NEAR((out.points[i] - out.points[j]).norm(), (c.points[i] - c.points[j]).norm(), 1e-9);
  }
}

TEST(RigidTransform, ValidityChecks) {
  EXPECT_TRUE(random_transform().is_valid());
  RigidTransform bad;
  bad.rotation = -Mat3::Identity();  // det = -1
  EXPECT_FALSE(bad.is_valid());
  const RigidTransform a = random_transform();
  const RigidTransform b = a * a.inverse();
  EXPECT_NEAR((b.rotation - Mat3::Identity()).norm(), 0.0, 1e-12);
  EXPECT_NEAR(b.translation.norm(), 0.0, 1e-12);
}

TEST(PointCloudValidate, RejectsNonFiniteAndNonUnitNormals) {
  PointCloud c;
  c.points.push_back(Vec3(0, 0, std::nan("")));
  EXPECT_THROW(c.validate(), Error);
  PointCloud d;
  d.points.push_back(Vec3::Zero());
  d.normals.push_back(Vec3(0, 0, 2));
  EXPECT_THROW(d.validate(), Error);
  d.normals[0] = Vec3::UnitX();
  EXPECT_NO_THROW(d.validate());
}

TEST(InlierThresholdType, RejectsNonPositive) {
  EXPECT_THROW(InlierThreshold(0.0), Error);
  EXPECT_THROW(InlierThreshold(-1.0), Error);
  EXPECT_DOUBLE_EQ(InlierThreshold().tau(), 0.10);
}

TEST(AlignmentError, ZeroForIdenticalClouds) {
  const PointCloud c = random_cloud(10);
  EXPECT_EQ(alignment_error(c, c, identity_pairs(10), RigidTransform::identity()), 0.0);
}

TEST(AlignmentError, UnitOffsetGivesOne) {
  PointCloud s, t;
  s.points.push_back(Vec3(0, 0, 0));
  t.points.push_back(Vec3(0, 0, 1));
  EXPECT_DOUBLE_EQ(alignment_error(s, t, identity_pairs(1), RigidTransform::identity()), 1.0);
}

TEST(AlignmentError, SumOfPerPairSquares) {
  const PointCloud s = random_cloud(5), t = random_cloud(5);
  const RigidTransform xf = random_transform();
  CorrespondenceSet corr;
  const std::size_t map[5] = {3, 0, 4, 4, 1};
  double expected = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    corr.pairs.push_back({i, map[i], 0.0});
    const Vec3 r = xf.rotation * s.points[i] + xf.translation - t.points[map[i]];
    expected += r.x() * r.x() + r.y() * r.y() + r.z() * r.z();
  }
  EXPECT_NEAR(alignment_error(s, t, corr, xf), expected, 1e-12);
}

TEST(AlignmentError, OutOfRangeIndexThrows) {
  const PointCloud s = random_cloud(3), t = random_cloud(3);
  CorrespondenceSet corr;
  corr.pairs.push_back({0, 3, 0.0});
  try {
    alignment_error(s, t, corr, RigidTransform::identity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidCorrespondence);
  }
}

TEST(InlierSet, ExactCorrespondencesAllPass) {
  const PointCloud s = random_cloud(20);
  const RigidTransform xf = random_transform();
  const PointCloud t = apply_transform(s, xf);
  EXPECT_EQ(inlier_set(s, t, identity_pairs(20), xf, InlierThreshold(1e-6)).size(), 20u);
}

TEST(InlierSet, ResidualExactlyTauExcluded) {
  PointCloud s, t;
  s.points = {Vec3(0, 0, 0), Vec3(0, 0, 0)};
  t.points = {Vec3(0.25, 0, 0), Vec3(0.125, 0, 0)};  // exact binary fractions
  const auto out = inlier_set(s, t, identity_pairs(2), RigidTransform::identity(), InlierThreshold(0.25));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.pairs[0].src, 1u);
}

TEST(InlierSet, OrderedSublistMatchingPerPairCheck) {
  const PointCloud s = random_cloud(60), t = random_cloud(60);
  const RigidTransform xf = random_transform();
  CorrespondenceSet corr;
  for (std::size_t k = 0; k < 60; ++k) corr.pairs.push_back({k, (k * 7) % 60, 0.0});
  const PointCloud moved = apply_transform(s, xf);
  // Make some pairs exact so both outcomes occur.
  PointCloud tt = t;
  for (std::size_t k = 0; k < 60; k += 3) tt.points[(k * 7) % 60] = moved.points[k] + Vec3(0.05, 0, 0);
  const auto out = inlier_set(s, tt, corr, xf, InlierThreshold(0.1));
  std::vector<Correspondence> expected;
  for (const auto& c : corr.pairs)
    if ((moved.points[c.src] - tt.points[c.tgt]).norm() < 0.1) expected.push_back(c);
  EXPECT_EQ(out.pairs, expected);
  EXPECT_GE(out.size(), 20u);
}

TEST(EstimateTransform, ExactRecoveryNoiseFree) {
  for (int trial = 0; trial < 50; ++trial) {
    const RigidTransform xf = random_transform();
    std::vector<PointPair> pairs;
    for (int i = 0; i < 10; ++i) {
      const Vec3 p = random_vec(3.0);
      pairs.emplace_back(p, xf.apply(p));
    }
    const RigidTransform est = estimate_transform_svd(pairs);
    EXPECT_LT(rotation_error(est.rotation, xf.rotation), 1e-9);
    EXPECT_LT(translation_error(est.translation, xf.translation), 1e-9);
    EXPECT_TRUE(est.is_valid());
  }
}

TEST(EstimateTransform, IdenticalPairsGiveIdentity) {
  std::vector<PointPair> pairs;
  for (int i = 0; i < 6; ++i) {
    const Vec3 p = random_vec();
    pairs.emplace_back(p, p);
  }
  const RigidTransform est = estimate_transform_svd(pairs);
  EXPECT_LT((est.rotation - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT(est.translation.norm(), 1e-12);
}

TEST(EstimateTransform, DegenerateInputs) {
  std::vector<PointPair> two = {{Vec3(0, 0, 0), Vec3(0, 0, 0)}, {Vec3(1, 0, 0), Vec3(1, 0, 0)}};
  EXPECT_THROW(estimate_transform_svd(two), Error);
  std::vector<PointPair> line;
  for (int i = 0; i < 5; ++i) line.emplace_back(Vec3(i, 2 * i, 0), Vec3(i, 2 * i, 0));
  try {
    estimate_transform_svd(line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
  }
}

TEST(EstimateTransform, ReflectionIsNotReturned) {
  // Targets are a mirror image; the best proper rotation must still have det +1.
  std::vector<PointPair> pairs;
  for (int i = 0; i < 8; ++i) {
    const Vec3 p = random_vec();
    pairs.emplace_back(p, Vec3(-p.x(), p.y(), p.z()));
  }
  EXPECT_NEAR(estimate_transform_svd(pairs).rotation.determinant(), 1.0, 1e-9);
}

TEST(EstimateTransform, NoisyFitBeatsRandomPerturbations) {
  const RigidTransform xf = random_transform();
  PointCloud s, t;
  for (int i = 0; i < 30; ++i) {
    const Vec3 p = random_vec(2.0);
    s.points.push_back(p);
    t.points.push_back(xf.apply(p) + 0.05 * random_vec());
  }
  const auto corr = identity_pairs(30);
  const RigidTransform est = estimate_transform_svd(s, t, corr.pairs);
  const double best = alignment_error(s, t, corr, est);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double scale = std::pow(10.0, uni(-6.0, -1.0));
    RigidTransform probe;
    probe.rotation = rotation_about(random_vec().normalized(), scale * g(rng())) * est.rotation;
    probe.translation = est.translation + scale * random_vec();
    ASSERT_LE(best, alignment_error(s, t, corr, probe) + 1e-12);
  }
}

TEST(EstimateTransform, BeatsRandomTransforms) {
  const PointCloud s = random_cloud(25), t = random_cloud(25);
  const auto corr = identity_pairs(25);
  const double best = alignment_error(s, t, corr, estimate_transform_svd(s, t, corr.pairs));
  for (int k = 0; k < 1000; ++k) ASSERT_LE(best, alignment_error(s, t, corr, random_transform()));
}

TEST(EstimateTransform, InvariantToCommonMotion) {
  const RigidTransform xf = random_transform(), motion = random_transform();
  std::vector<PointPair> a, b;
  for (int i = 0; i < 20; ++i) {
    const Vec3 p = random_vec(2.0);
    const Vec3 q = xf.apply(p) + 0.02 * random_vec();
    a.emplace_back(p, q);
    b.emplace_back(motion.apply(p), motion.apply(q));
  }
  const RigidTransform ea = estimate_transform_svd(a);
  const RigidTransform eb = estimate_transform_svd(b);
  // Fitting moved pairs gives motion * ea * motion^-1.
  const RigidTransform expected = motion * ea * motion.inverse();
  EXPECT_LT((eb.rotation - expected.rotation).norm(), 1e-7);
  EXPECT_LT((eb.translation - expected.translation).norm(), 1e-7);
}

TEST(RotationError, IdenticalIsZero) {
  const Mat3 r = random_transform().rotation;
  EXPECT_NEAR(rotation_error(r, r), 0.0, 1e-7);
  EXPECT_EQ(rotation_error(Mat3::Identity(), Mat3::Identity()), 0.0);
}

TEST(RotationError, HalfTurnIsPi) {
  for (int k = 0; k < 10; ++k) {
    const Mat3 r = rotation_about(random_vec().normalized(), kPi);
    EXPECT_NEAR(rotation_error(r, Mat3::Identity()), kPi, 1e-7);
  }
}

TEST(RotationError, MatchesQuaternionAngle) {
  for (int k = 0; k < 200; ++k) {
    const Mat3 a = random_transform().rotation, b = random_transform().rotation;
    const Eigen::Quaterniond qa(a), qb(b);
    const double w = std::min(1.0, std::abs((qa.conjugate() * qb).w()));
    const double oracle = 2.0 * std::acos(w);
    EXPECT_NEAR(rotation_error(a, b), oracle, 1e-6);
    EXPECT_NEAR(rotation_error(a, b), rotation_error(b, a), 1e-12);
  }
}

TEST(TranslationError, EuclideanNorm) {
  EXPECT_DOUBLE_EQ(translation_error(Vec3(1, 2, 2), Vec3(0, 0, 0)), 3.0);
  EXPECT_DOUBLE_EQ(translation_error(Vec3(1, 1, 1), Vec3(1, 1, 1)), 0.0);
}

TEST(KdTree, KnnMatchesBruteForce) {
  const PointCloud c = random_cloud(500);
  const KdTree tree(c.points, 8);
  for (int q = 0; q < 50; ++q) {
    const Vec3 p = random_vec(1.2);
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < c.size(); ++i) all.emplace_back((c.points[i] - p).squaredNorm(), i);
    std::sort(all.begin(), all.end());
    const auto got = tree.knn(p, 7);
    ASSERT_EQ(got.size(), 7u);
    for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(got[k].index, all[k].second);
  }
}

TEST(KdTree, RadiusMatchesBruteForce) {
  const PointCloud c = random_cloud(500);
  const KdTree tree(c.points, 8);
  for (int q = 0; q < 50; ++q) {
    const Vec3 p = c.points[static_cast<std::size_t>(q)];
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < c.size(); ++i)
      if ((c.points[i] - p).squaredNorm() <= 0.3 * 0.3) expected.push_back(i);
    auto got = tree.radius(p, 0.3);
    std::vector<std::size_t> idx;
    for (const auto& nb : got) idx.push_back(nb.index);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(idx, expected);
  }
}
