// Copyright Contributors to the GaussAlign Project
// SPDX-License-Identifier: Apache-2.0
//
// Exact spatial queries: a kd-tree for k-nearest / radius lookups and the
// origin-anchored voxel-grid downsampler. All tie-breaks are by ascending
// point index so results are bit-reproducible.

#pragma once

#include "gsalign/core.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace gsalign {

class NeighborIndex {
 public:
  NeighborIndex() = default;

  explicit NeighborIndex(const std::vector<Vec3>& points) : points_(points) {
    if (!points_.empty()) {
      order_.resize(points_.size());
      std::iota(order_.begin(), order_.end(), 0);
      root_ = build(0, static_cast<int>(points_.size()), 0);
    }
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// min(k, N) nearest indices, ascending distance, ties by ascending index.
  std::vector<int> knn(const Vec3& query, int k) const {
    if (points_.empty()) throw std::invalid_argument("empty point set");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    Heap heap;
    heap.reserve(static_cast<std::size_t>(k) + 1);
    search_knn(root_, query, static_cast<std::size_t>(k), heap);
    std::sort(heap.begin(), heap.end());
    std::vector<int> out;
    out.reserve(heap.size());
    for (const auto& e : heap) out.push_back(e.second);
    return out;
  }

  /// All indices within radius, ascending distance, ties by ascending index.
  std::vector<int> radius_search(const Vec3& query, double radius) const {
    if (points_.empty()) throw std::invalid_argument("empty point set");
    std::vector<std::pair<double, int>> found;
    search_radius(root_, query, radius * radius, found);
    std::sort(found.begin(), found.end());
    std::vector<int> out;
    out.reserve(found.size());
    for (const auto& e : found) out.push_back(e.second);
    return out;
  }

  double nearest_distance(const Vec3& query) const {
    const int idx = knn(query, 1)[0];
    return (points_[idx] - query).norm();
  }

 private:
  struct Node {
    int axis = 0;
    int point = -1;       // leaf payload when begin == end
    int left = -1, right = -1;
    double split = 0.0;
    int begin = 0, end = 0;  // leaf range into order_
    bool leaf = false;
  };
  using Heap = std::vector<std::pair<double, int>>;  // (squared dist, index)

  static constexpr int kLeafSize = 12;

  int build(int begin, int end, int depth) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.leaf = true;
      node.begin = begin;
      node.end = end;
      // Index order inside a leaf is ascending for deterministic scans.
      std::sort(order_.begin() + begin, order_.begin() + end);
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    // Split on the widest axis at the median.
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (int i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid,
                     order_.begin() + end, [&](int a, int b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    node.axis = axis;
    node.split = points_[order_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int l = build(begin, mid, depth + 1);
    const int r = build(mid, end, depth + 1);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void heap_push(Heap& heap, std::size_t k, double d2, int idx) const {
    heap.emplace_back(d2, idx);
    std::push_heap(heap.begin(), heap.end());
    if (heap.size() > k) {
      std::pop_heap(heap.begin(), heap.end());
      heap.pop_back();
    }
  }

  void search_knn(int ni, const Vec3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[ni];
    if (node.leaf) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (heap.size() < k || std::make_pair(d2, idx) < heap.front()) {
          heap_push(heap, k, d2, idx);
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const int near = diff <= 0 ? node.left : node.right;
    const int far = diff <= 0 ? node.right : node.left;
    search_knn(near, q, k, heap);
    // Equal-distance candidates on the far side may still win on index.
    if (heap.size() < k || diff * diff <= heap.front().first) {
      search_knn(far, q, k, heap);
    }
  }

  void search_radius(int ni, const Vec3& q, double r2,
                     std::vector<std::pair<double, int>>& found) const {
    const Node& node = nodes_[ni];
    if (node.leaf) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 <= r2) found.emplace_back(d2, idx);
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    search_radius(diff <= 0 ? node.left : node.right, q, r2, found);
    if (diff * diff <= r2) {
      search_radius(diff <= 0 ? node.right : node.left, q, r2, found);
    }
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Downsampling result with the dense member indices of each output point,
/// which later stages use as patches.
struct VoxelDownsampleResult {
  ColoredPointCloud cloud;
  std::vector<std::vector<int>> members;
};

/// One output point per occupied voxel: centroid position, mean color over
/// colored members (mask false when none are colored). Bins are anchored at
/// the origin with index floor(p / voxel); output is ordered by voxel key.
inline VoxelDownsampleResult voxel_downsample_with_members(
    const ColoredPointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) throw std::invalid_argument("voxel size must be > 0");
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  std::map<Key, std::vector<int>> bins;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const Key key{static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                  static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                  static_cast<std::int64_t>(std::floor(p.z() / voxel))};
    bins[key].push_back(static_cast<int>(i));
  }
  VoxelDownsampleResult out;
  out.cloud.positions.reserve(bins.size());
  for (auto& [key, idxs] : bins) {
    Vec3 centroid = Vec3::Zero();
    Vec3 color = Vec3::Zero();
    int colored = 0;
    for (int i : idxs) {
      centroid += cloud.positions[i];
      if (cloud.color_mask[i]) {
        color += cloud.colors[i];
        ++colored;
      }
    }
    centroid /= static_cast<double>(idxs.size());
    if (colored > 0) {
      out.cloud.push_back(centroid, color / colored, true);
    } else {
      out.cloud.push_back(centroid, Vec3::Zero(), false);
    }
    out.members.push_back(std::move(idxs));
  }
  return out;
}

inline ColoredPointCloud voxel_downsample(const ColoredPointCloud& cloud,
                                          double voxel) {
  return voxel_downsample_with_members(cloud, voxel).cloud;
}

}  // namespace gsalign
