#include "normest/patches.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "normest/errors.hpp"

namespace normest {

namespace {

constexpr int kLeafSize = 16;

inline double sq(double v) { return v * v; }

inline double squared_distance(const Vec3& a, const Vec3& b) {
  return sq(a.x - b.x) + sq(a.y - b.y) + sq(a.z - b.z);
}

}  // namespace

KnnIndex::KnnIndex(std::span<const Vec3> points, int k_graph)
    : points_(points.begin(), points.end()), k_graph_(k_graph) {
  if (points_.empty()) throw empty_input("KnnIndex: no points");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * points_.size() / kLeafSize + 4);
  root_ = build(0, static_cast<int>(points_.size()));
}

int KnnIndex::build(int begin, int end) {
  int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[static_cast<std::size_t>(id)].begin = begin;
    nodes_[static_cast<std::size_t>(id)].end = end;
    return id;
  }

  Vec3 lo = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(begin)])];
  Vec3 hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    const Vec3& p = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  int axis = 0;
  double extent = hi[0] - lo[0];
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > extent) {
      extent = hi[a] - lo[a];
      axis = a;
    }
  }

  int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     double pa = points_[static_cast<std::size_t>(a)][axis];
                     double pb = points_[static_cast<std::size_t>(b)][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  double split = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(mid)])][axis];

  int left = build(begin, mid);
  int right = build(mid, end);
  Node& n = nodes_[static_cast<std::size_t>(id)];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

std::vector<std::pair<int, double>> KnnIndex::query(const Vec3& p, int k) const {
  if (k < 1) throw range_error("KnnIndex::query: k must be >= 1");
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), points_.size());

  // Max-heap on (squared distance, index); the lexicographic order makes
  // the k-set and its ordering unique even with distance ties.
  std::vector<std::pair<double, int>> heap;
  heap.reserve(want + 1);

  // Iterative traversal, nearer child first.
  std::vector<std::pair<int, double>> stack;  // (node id, squared distance to its region)
  stack.emplace_back(root_, 0.0);
  while (!stack.empty()) {
    auto [id, bound] = stack.back();
    stack.pop_back();
    if (heap.size() == want && std::pair<double, int>(bound, -1) >= heap.front()) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        int idx = order_[static_cast<std::size_t>(i)];
        double d2 = squared_distance(p, points_[static_cast<std::size_t>(idx)]);
        std::pair<double, int> cand(d2, idx);
        if (heap.size() < want) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      continue;
    }
    double delta = p[n.axis] - n.split;
    int near = delta < 0.0 ? n.left : n.right;
    int far = delta < 0.0 ? n.right : n.left;
    stack.emplace_back(far, std::max(bound, sq(delta)));
    stack.emplace_back(near, bound);
  }

  std::sort_heap(heap.begin(), heap.end());
  std::vector<std::pair<int, double>> out;
  out.reserve(heap.size());
  for (const auto& [d2, idx] : heap) out.emplace_back(idx, std::sqrt(d2));
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

ProximityGraph build_graph(std::span<const Vec3> points, int k) {
  if (points.empty()) throw empty_input("build_graph: no points");
  if (k < 1) throw range_error("build_graph: k must be >= 1");
  const int n = static_cast<int>(points.size());

  KnnIndex index(points, k);
  ProximityGraph g;
  g.adjacency.resize(points.size());

  for (int i = 0; i < n; ++i) {
    // k + 1 because the query returns the point itself.
    auto nn = index.query(points[static_cast<std::size_t>(i)], k + 1);
    bool self_dropped = false;
    int added = 0;
    for (const auto& [j, d] : nn) {
      if (j == i && !self_dropped) {
        self_dropped = true;
        continue;
      }
      if (added == k) break;
      g.adjacency[static_cast<std::size_t>(i)].push_back({j, d});
      g.adjacency[static_cast<std::size_t>(j)].push_back({i, d});
      ++added;
    }
  }

  for (auto& edges : g.adjacency) {
    std::sort(edges.begin(), edges.end(), [](const ProximityGraph::Edge& a,
                                             const ProximityGraph::Edge& b) {
      return a.to < b.to || (a.to == b.to && a.weight < b.weight);
    });
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](const ProximityGraph::Edge& a, const ProximityGraph::Edge& b) {
                              return a.to == b.to;
                            }),
                edges.end());
  }

  UnionFind uf(points.size());
  for (int i = 0; i < n; ++i)
    for (const auto& e : g.adjacency[static_cast<std::size_t>(i)]) uf.unite(i, e.to);

  g.component_id.assign(points.size(), -1);
  for (int i = 0; i < n; ++i) {
    int root = uf.find(i);
    if (g.component_id[static_cast<std::size_t>(root)] < 0) {
      g.component_id[static_cast<std::size_t>(root)] =
          static_cast<int>(g.component_size.size());
      g.component_size.push_back(0);
    }
    g.component_id[static_cast<std::size_t>(i)] =
        g.component_id[static_cast<std::size_t>(root)];
    ++g.component_size[static_cast<std::size_t>(
        g.component_id[static_cast<std::size_t>(i)])];
  }
  return g;
}

Patch geodesic_patch(const ProximityGraph& graph, int seed, int N) {
  if (seed < 0 || seed >= graph.size()) throw range_error("geodesic_patch: seed out of range");
  if (N < 1) throw range_error("geodesic_patch: N must be >= 1");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(graph.adjacency.size(), kInf);
  std::vector<char> settled(graph.adjacency.size(), 0);

  // Min-heap on (distance, index): ties settle in ascending index order.
  std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>,
                      std::greater<>>
      queue;
  dist[static_cast<std::size_t>(seed)] = 0.0;
  queue.emplace(0.0, seed);

  Patch patch;
  patch.center_index = seed;
  patch.is_geodesic = true;
  patch.member_indices.reserve(static_cast<std::size_t>(N));
  patch.center_distances.reserve(static_cast<std::size_t>(N));

  while (!queue.empty() && patch.member_indices.size() < static_cast<std::size_t>(N)) {
    auto [d, u] = queue.top();
    queue.pop();
    if (settled[static_cast<std::size_t>(u)]) continue;
    settled[static_cast<std::size_t>(u)] = 1;
    patch.member_indices.push_back(u);
    patch.center_distances.push_back(d);
    for (const auto& e : graph.adjacency[static_cast<std::size_t>(u)]) {
      double nd = d + e.weight;
      if (nd < dist[static_cast<std::size_t>(e.to)]) {
        dist[static_cast<std::size_t>(e.to)] = nd;
        queue.emplace(nd, e.to);
      }
    }
  }
  return patch;
}

Patch knn_patch(const KnnIndex& index, int seed, int N) {
  if (seed < 0 || static_cast<std::size_t>(seed) >= index.size())
    throw range_error("knn_patch: seed out of range");
  if (N < 1) throw range_error("knn_patch: N must be >= 1");

  auto nn = index.query(index.points()[static_cast<std::size_t>(seed)], N);

  Patch patch;
  patch.center_index = seed;
  patch.is_geodesic = false;

  // The seed is normally the first hit (distance 0); coincident points with
  // lower indices can displace it, so restore it to the front explicitly.
  auto it = std::find_if(nn.begin(), nn.end(), [&](const auto& e) { return e.first == seed; });
  if (it == nn.end()) {
    nn.back() = {seed, 0.0};
    std::rotate(nn.begin(), nn.end() - 1, nn.end());
  } else {
    std::rotate(nn.begin(), it, it + 1);
  }

  patch.member_indices.reserve(nn.size());
  patch.center_distances.reserve(nn.size());
  for (const auto& [idx, d] : nn) {
    patch.member_indices.push_back(idx);
    patch.center_distances.push_back(d);
  }
  return patch;
}

std::optional<int> select_uncovered(std::size_t n_points, const std::vector<char>& covered) {
  for (std::size_t i = 0; i < n_points; ++i)
    if (i >= covered.size() || !covered[i]) return static_cast<int>(i);
  return std::nullopt;
}

std::vector<int> half_patch(const Patch& p) {
  std::size_t count = (p.member_indices.size() + 1) / 2;
  return std::vector<int>(p.member_indices.begin(),
                          p.member_indices.begin() + static_cast<std::ptrdiff_t>(count));
}

}  // namespace normest
