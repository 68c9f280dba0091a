#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "gsm/geometry.hpp"

namespace gsm {

// Static 3-d tree over a borrowed point array. The points must outlive the tree.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index;
    double sq_dist;
  };

  explicit KdTree(const std::vector<Vec3>& points, std::size_t leaf_size = 16)
      : points_(&points), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points.empty()) root_ = build(0, points.size());
  }

  std::size_t size() const noexcept { return order_.size(); }

  // k nearest neighbours sorted by (distance, index).
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const {
    std::vector<Neighbor> heap;
    if (k == 0 || root_ < 0) return heap;
    heap.reserve(k + 1);
    knn_search(root_, query, k, heap);
    std::sort(heap.begin(), heap.end(), closer);
    return heap;
  }

  // Every point with squared distance <= radius^2, sorted by (distance, index).
  std::vector<Neighbor> radius(const Vec3& query, double radius) const {
    std::vector<Neighbor> out;
    if (root_ < 0) return out;
    radius_search(root_, query, radius * radius, out);
    std::sort(out.begin(), out.end(), closer);
    return out;
  }

 private:
  struct Node {
    std::size_t begin, end;  // range into order_
    int axis = -1;           // -1 for leaves
    double split = 0.0;
    std::int32_t left = -1, right = -1;
  };

  static bool closer(const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  }

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin((*points_)[order_[i]]);
      hi = hi.cwiseMax((*points_)[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi(axis) == lo(axis)) return id;  // all coincident

    const std::size_t mid = begin + (end - begin) / 2;
    auto key = [&](std::size_t i) { return (*points_)[i](axis); };
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return key(a) < key(b) || (key(a) == key(b) && a < b);
                     });
    const double split = key(order_[mid]);
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void knn_search(std::int32_t id, const Vec3& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        Neighbor cand{idx, ((*points_)[idx] - q).squaredNorm()};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), closer);
        } else if (closer(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), closer);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), closer);
        }
      }
      return;
    }
    const double diff = q(node.axis) - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    knn_search(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().sq_dist) knn_search(far, q, k, heap);
  }

  void radius_search(std::int32_t id, const Vec3& q, double r2, std::vector<Neighbor>& out) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = ((*points_)[idx] - q).squaredNorm();
        if (d2 <= r2) out.push_back({idx, d2});
      }
      return;
    }
    const double diff = q(node.axis) - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    radius_search(near, q, r2, out);
    if (diff * diff <= r2) radius_search(far, q, r2, out);
  }

  const std::vector<Vec3>* points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace gsm
