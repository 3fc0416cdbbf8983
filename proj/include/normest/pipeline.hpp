#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "normest/data.hpp"
#include "normest/estimators.hpp"
#include "normest/frames.hpp"
#include "normest/nn.hpp"
#include "normest/patches.hpp"

namespace normest {

enum class SigmaRule {
  half_radius_over_2,  // sigma = (center distance of the farthest half-patch member) / 2
  fixed,               // sigma = fixed_sigma
};

struct InferenceConfig {
  int patch_size = 1400;
  int n_frames = 8;  // 1, 2, 4 or 8
  int graph_k = 50;
  bool use_geodesic = true;
  bool use_half_patch = true;
  bool use_gaussian_agg = true;
  SigmaRule sigma_rule = SigmaRule::half_radius_over_2;
  double fixed_sigma = 1.0;
  // One patch per query point, keep only the center prediction; the
  // classical single-point protocol. Forces use_half_patch off.
  bool per_point_mode = false;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

// One candidate normal for a point, produced by some patch.
struct Prediction {
  int point_id = -1;
  Vec3 normal;
  double weight = 1.0;
  int source_patch = -1;
};

struct InferStats {
  int patches = 0;
  int knn_fallbacks = 0;          // geodesic requests served by kNN patches
  int degenerate_aggregations = 0;
};

// Full normal estimation: coverage loop over patches, frame-averaged
// estimation per patch, half-patch retention, per-point weighted
// aggregation. Deterministic for a fixed seed/config regardless of thread
// count. Throws empty_cloud.
std::vector<Vec3> infer(const PointCloud& cloud, const Estimator& estimator,
                        const InferenceConfig& cfg, InferStats* stats = nullptr);

// Weighted sign-aligned average of one point's candidates; predictions must
// be ordered the way they should be received (ascending source patch).
// Throws degenerate_aggregation when the aligned sum has norm < 1e-8.
Vec3 aggregate(std::span<const Prediction> predictions_for_point);

enum class LossVariant { val, gau, half };

struct TrainConfig {
  int epochs = 150;
  int batch_size = 128;
  double lr_max = 2e-3;
  double lr_min = 2e-5;
  LossVariant loss = LossVariant::gau;
  std::uint64_t seed = 0;

  int patch_size = 1400;
  // Optimizer steps per epoch; 0 derives ceil(total points / (batch *
  // patch)) so one epoch roughly touches every point once.
  int steps_per_epoch = 0;
  bool geodesic_patches = false;  // training normally uses kNN patches
  SigmaRule sigma_rule = SigmaRule::half_radius_over_2;
  double fixed_sigma = 1.0;
  double weight_decay = 0.01;
  int threads = 0;

  void validate() const;
};

struct TrainResult {
  NetworkParams params;
  std::vector<double> epoch_loss;  // mean step loss per epoch
};

// Random-frame training: per step, draw a batch of patches; each patch is
// canonicalized into ONE randomly sampled frame (points and ground-truth
// normals both), pushed through the network, scored with the configured
// loss, and the batch gradient drives an AdamW step on a cosine schedule.
// Throws missing_ground_truth when a shape lacks normals.
TrainResult train(const std::vector<PointCloud>& shapes, const NetworkParams& initial,
                  const TrainConfig& cfg);

// Runs fn(i) for i in [0, n) across the given number of worker threads
// (0 = hardware concurrency). Results must be written to disjoint slots;
// ordering of observable output must not depend on the schedule.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace normest
