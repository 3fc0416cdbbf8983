#include "normest/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <thread>

#include "normest/errors.hpp"

namespace normest {

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t n_threads = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max(1u, hw);
  n_threads = std::min(n_threads, n);

  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t]() {
      std::size_t begin = n * t / n_threads;
      std::size_t end = n * (t + 1) / n_threads;
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void InferenceConfig::validate() const {
  if (patch_size < 3) throw invalid_spec("patch_size must be >= 3");
  if (n_frames != 1 && n_frames != 2 && n_frames != 4 && n_frames != 8)
    throw invalid_spec("n_frames must be one of 1, 2, 4, 8");
  if (graph_k < 1) throw invalid_spec("graph_k must be >= 1");
  if (sigma_rule == SigmaRule::fixed && !(fixed_sigma > 0.0))
    throw invalid_spec("fixed sigma must be positive");
  if (threads < 0) throw invalid_spec("threads must be >= 0");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw invalid_spec("epochs must be >= 0");
  if (batch_size < 1) throw invalid_spec("batch_size must be >= 1");
  if (!(lr_min > 0.0) || lr_max < lr_min) throw invalid_spec("need lr_max >= lr_min > 0");
  if (patch_size < 3) throw invalid_spec("patch_size must be >= 3");
  if (steps_per_epoch < 0) throw invalid_spec("steps_per_epoch must be >= 0");
  if (sigma_rule == SigmaRule::fixed && !(fixed_sigma > 0.0))
    throw invalid_spec("fixed sigma must be positive");
  if (threads < 0) throw invalid_spec("threads must be >= 0");
}

namespace {

// Patch sigma for Gaussian weighting: half the center distance of the
// farthest half-patch member, unless a fixed value is configured.
double patch_sigma(const Patch& p, SigmaRule rule, double fixed_sigma) {
  if (rule == SigmaRule::fixed) return fixed_sigma;
  std::size_t half = (p.center_distances.size() + 1) / 2;
  double r_half = half > 0 ? p.center_distances[half - 1] : 0.0;
  return r_half / 2.0;
}

std::vector<Vec3> gather(const std::vector<Vec3>& src, const std::vector<int>& idx) {
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(src[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

Vec3 aggregate(std::span<const Prediction> predictions_for_point) {
  if (predictions_for_point.empty()) throw empty_input("aggregate: no predictions");
  const Vec3& ref = predictions_for_point[0].normal;
  Vec3 sum;
  for (const auto& pred : predictions_for_point) {
    Vec3 n = pred.normal.dot(ref) >= 0.0 ? pred.normal : -pred.normal;
    sum += n * pred.weight;
  }
  double norm = sum.norm();
  if (norm < 1e-8) throw degenerate_aggregation();
  return sum / norm;
}

std::vector<Vec3> infer(const PointCloud& cloud, const Estimator& estimator,
                        const InferenceConfig& cfg, InferStats* stats) {
  cfg.validate();
  if (cloud.positions.empty()) throw empty_cloud("infer: empty cloud");

  const int n = static_cast<int>(cloud.positions.size());
  const int patch_n = std::min(cfg.patch_size, n);
  const bool half = cfg.use_half_patch && !cfg.per_point_mode;

  InferStats local_stats;
  KnnIndex index(cloud.positions, cfg.graph_k);
  ProximityGraph graph;
  if (cfg.use_geodesic && !cfg.per_point_mode) graph = build_graph(cloud.positions, cfg.graph_k);

  // Patch enumeration is sequential: the coverage loop depends on which
  // points earlier patches marked.
  std::vector<Patch> patches;
  if (cfg.per_point_mode) {
    patches.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) patches.push_back(knn_patch(index, i, patch_n));
  } else {
    std::vector<char> covered(static_cast<std::size_t>(n), 0);
    while (auto seed = select_uncovered(static_cast<std::size_t>(n), covered)) {
      Patch p;
      if (cfg.use_geodesic && graph.component_size_of(*seed) >= patch_n) {
        p = geodesic_patch(graph, *seed, patch_n);
      } else {
        if (cfg.use_geodesic) ++local_stats.knn_fallbacks;
        p = knn_patch(index, *seed, patch_n);
      }
      if (half) {
        for (int id : half_patch(p)) covered[static_cast<std::size_t>(id)] = 1;
      } else {
        for (int id : p.member_indices) covered[static_cast<std::size_t>(id)] = 1;
      }
      patches.push_back(std::move(p));
    }
  }
  local_stats.patches = static_cast<int>(patches.size());

  // Frame-averaged estimation per patch, parallel across patches. Every
  // patch derives its generator from (seed, patch id), so the result does
  // not depend on the thread schedule.
  std::vector<std::vector<Prediction>> patch_preds(patches.size());
  parallel_for(patches.size(), cfg.threads, [&](std::size_t pi) {
    const Patch& p = patches[pi];
    std::vector<Vec3> pts = gather(cloud.positions, p.member_indices);
    Rng rng(mix_seed(cfg.seed, pi));
    std::vector<Vec3> normals = frame_average(estimator, pts, cfg.n_frames, rng);

    std::size_t retained = p.member_indices.size();
    if (cfg.per_point_mode)
      retained = 1;
    else if (half)
      retained = (p.member_indices.size() + 1) / 2;

    std::vector<double> weights(retained, 1.0);
    if (cfg.use_gaussian_agg && !cfg.per_point_mode) {
      double sigma = patch_sigma(p, cfg.sigma_rule, cfg.fixed_sigma);
      if (sigma > 0.0) {
        std::span<const double> d(p.center_distances.data(), retained);
        weights = nn::gaussian_weights(d, sigma);
      }
    }

    auto& out = patch_preds[pi];
    out.reserve(retained);
    for (std::size_t k = 0; k < retained; ++k)
      out.push_back(Prediction{p.member_indices[k], normals[k], weights[k],
                               static_cast<int>(pi)});
  });

  // Group candidates per point in ascending patch order, then aggregate.
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  for (const auto& preds : patch_preds)
    for (const auto& pr : preds) ++counts[static_cast<std::size_t>(pr.point_id)];
  std::vector<std::size_t> offsets(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i)
    offsets[static_cast<std::size_t>(i) + 1] =
        offsets[static_cast<std::size_t>(i)] + static_cast<std::size_t>(counts[static_cast<std::size_t>(i)]);

  std::vector<Prediction> grouped(offsets.back());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& preds : patch_preds)
    for (const auto& pr : preds) grouped[cursor[static_cast<std::size_t>(pr.point_id)]++] = pr;

  std::vector<Vec3> result(static_cast<std::size_t>(n));
  std::vector<char> cancelled(static_cast<std::size_t>(n), 0);
  parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t i) {
    std::span<const Prediction> mine(grouped.data() + offsets[i], offsets[i + 1] - offsets[i]);
    if (mine.empty())
      throw degenerate_aggregation("infer: point " + std::to_string(i) + " received no candidates");
    try {
      result[i] = aggregate(mine);
    } catch (const degenerate_aggregation&) {
      // Cancellation across patches: keep the strongest single candidate.
      const Prediction* best = &mine[0];
      for (const auto& pr : mine)
        if (pr.weight > best->weight) best = &pr;
      result[i] = best->normal;
      cancelled[i] = 1;
    }
  });
  for (char c : cancelled) local_stats.degenerate_aggregations += c;
  if (local_stats.degenerate_aggregations > 0)
    std::cerr << "infer: " << local_stats.degenerate_aggregations
              << " point(s) had cancelling candidates; kept the highest-weight one\n";

  if (stats) *stats = local_stats;
  return result;
}

TrainResult train(const std::vector<PointCloud>& shapes, const NetworkParams& initial,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (shapes.empty()) throw empty_input("train: no shapes");
  std::size_t total_points = 0;
  for (const auto& s : shapes) {
    if (!s.has_normals() || s.gt_normals.size() != s.positions.size())
      throw missing_ground_truth("train: shape '" + s.name + "' lacks ground-truth normals");
    if (s.positions.size() < 3)
      throw too_few_points("train: shape '" + s.name + "' is too small");
    total_points += s.positions.size();
  }
  if (initial.values.size() != initial.expected_value_count() || initial.values.empty())
    throw shape_mismatch("train: initial parameters do not match the architecture");

  TrainResult result;
  result.params = initial;
  if (cfg.epochs == 0) return result;

  std::vector<KnnIndex> indexes;
  indexes.reserve(shapes.size());
  std::vector<ProximityGraph> graphs(shapes.size());
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    indexes.emplace_back(shapes[s].positions, 1);
    if (cfg.geodesic_patches) graphs[s] = build_graph(shapes[s].positions, 50);
  }

  int steps_per_epoch = cfg.steps_per_epoch;
  if (steps_per_epoch == 0) {
    double per_step = static_cast<double>(cfg.batch_size) * static_cast<double>(cfg.patch_size);
    steps_per_epoch = std::max(1, static_cast<int>(std::ceil(
                                      static_cast<double>(total_points) / per_step)));
  }
  const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

  nn::OptimizerState opt;
  opt.weight_decay = cfg.weight_decay;

  std::vector<std::vector<double>> grads(static_cast<std::size_t>(cfg.batch_size));
  std::vector<double> losses(static_cast<std::size_t>(cfg.batch_size));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const long global = static_cast<long>(epoch) * steps_per_epoch + step;

      parallel_for(static_cast<std::size_t>(cfg.batch_size), cfg.threads, [&](std::size_t b) {
        // Every example owns an independent generator derived from
        // (seed, global step, batch slot): reproducible for any thread
        // count.
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(global) *
                                           static_cast<std::uint64_t>(cfg.batch_size) +
                                       b + 1));
        std::size_t s = rng.uniform_below(shapes.size());
        const PointCloud& shape = shapes[s];
        int seed_pt = static_cast<int>(rng.uniform_below(shape.positions.size()));
        int patch_n = std::min<int>(cfg.patch_size, static_cast<int>(shape.positions.size()));

        Patch patch;
        if (cfg.geodesic_patches && graphs[s].component_size_of(seed_pt) >= patch_n)
          patch = geodesic_patch(graphs[s], seed_pt, patch_n);
        else
          patch = knn_patch(indexes[s], seed_pt, patch_n);

        std::vector<Vec3> pts = gather(shape.positions, patch.member_indices);
        FrameSet fs = build_frame_set(pts);
        const Frame& frame = sample_random_frame(fs, rng);

        std::vector<Vec3> canon = to_canonical(frame, pts);
        std::vector<Vec3> gt;
        gt.reserve(patch.member_indices.size());
        for (int id : patch.member_indices)
          gt.push_back(direction_to_canonical(frame, shape.gt_normals[static_cast<std::size_t>(id)]));

        const std::size_t m = canon.size();
        std::vector<double> weights(m, 1.0);
        if (cfg.loss == LossVariant::gau) {
          double sigma = patch_sigma(patch, cfg.sigma_rule, cfg.fixed_sigma);
          if (sigma > 0.0) weights = nn::gaussian_weights(patch.center_distances, sigma);
        } else if (cfg.loss == LossVariant::half) {
          std::size_t keep = (m + 1) / 2;
          double w = static_cast<double>(m) / static_cast<double>(keep);
          std::fill(weights.begin(), weights.end(), 0.0);
          for (std::size_t k = 0; k < keep; ++k) weights[k] = w;  // members sorted by distance
        }

        nn::NetworkBackprop bp = nn::network_loss_backward(result.params, canon, gt, weights,
                                                           1.0 / static_cast<double>(m));
        grads[b] = std::move(bp.grad);
        losses[b] = bp.loss;
      });

      // Deterministic reduction in batch-slot order.
      std::vector<double> mean_grad(result.params.values.size(), 0.0);
      double mean_loss = 0.0;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const auto& g = grads[static_cast<std::size_t>(b)];
        for (std::size_t i = 0; i < mean_grad.size(); ++i) mean_grad[i] += g[i];
        mean_loss += losses[static_cast<std::size_t>(b)];
      }
      double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
      for (double& g : mean_grad) g *= inv_batch;
      mean_loss *= inv_batch;

      double lr = nn::cosine_lr(global, total_steps, cfg.lr_max, cfg.lr_min);
      nn::adamw_step(opt, result.params.values, mean_grad, lr);
      epoch_sum += mean_loss;
    }
    result.epoch_loss.push_back(epoch_sum / steps_per_epoch);
  }
  return result;
}

}  // namespace normest
