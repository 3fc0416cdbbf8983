#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "normest/geom.hpp"

namespace normest {

// kd-tree over cloud positions. query() returns exactly min(k, n) indices
// sorted by ascending Euclidean distance, ties broken by ascending index.
class KnnIndex {
 public:
  KnnIndex() = default;
  explicit KnnIndex(std::span<const Vec3> points, int k_graph = 50);

  // (index, distance) pairs, nearest first. Includes the query point itself
  // when it is part of the cloud.
  std::vector<std::pair<int, double>> query(const Vec3& p, int k) const;

  int k_graph() const { return k_graph_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  struct Node {
    int axis = -1;        // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
  };

  int build(int begin, int end);

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
  int k_graph_ = 50;
};

// Symmetrized kNN graph with Euclidean edge weights and connected-component
// labels.
struct ProximityGraph {
  struct Edge {
    int to;
    double weight;
  };
  std::vector<std::vector<Edge>> adjacency;
  std::vector<int> component_id;     // per point
  std::vector<int> component_size;   // per component id

  int size() const { return static_cast<int>(adjacency.size()); }
  int component_size_of(int point) const {
    return component_size[static_cast<std::size_t>(component_id[static_cast<std::size_t>(point)])];
  }
};

ProximityGraph build_graph(std::span<const Vec3> points, int k);

// Index subset of a cloud around a center point. Members are sorted by
// ascending center_distance (graph shortest-path for geodesic patches,
// Euclidean otherwise), center first at distance zero.
struct Patch {
  int center_index = -1;
  std::vector<int> member_indices;
  std::vector<double> center_distances;
  bool is_geodesic = false;

  std::size_t size() const { return member_indices.size(); }
};

// The N points with the smallest shortest-path distance from seed (seed
// included at distance 0). When the seed's component holds fewer than N
// points the patch simply covers the component; the caller is expected to
// fall back to knn_patch in that case (see pipeline).
Patch geodesic_patch(const ProximityGraph& graph, int seed, int N);

// The N Euclidean-nearest points to the seed.
Patch knn_patch(const KnnIndex& index, int seed, int N);

// Lowest-index point not yet covered, or nullopt when everything is.
std::optional<int> select_uncovered(std::size_t n_points, const std::vector<char>& covered);

// The ceil(|members| / 2) members nearest the center (a prefix of the
// sorted member list).
std::vector<int> half_patch(const Patch& p);

}  // namespace normest
