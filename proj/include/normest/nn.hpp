#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "normest/estimators.hpp"
#include "normest/geom.hpp"

namespace normest::nn {

// --- losses (plain evaluation) ---

// total = (1/N) * sum(weights_i * per_point_i); weights are 1.0 for the
// unweighted variants.
struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_point;
  std::vector<double> weights;
};

// min(|p - g|^2, |p + g|^2); ties take the minus branch.
double loss_reg(const Vec3& pred, const Vec3& gt);

// |p x g|, the sine of the (unoriented) angle for unit inputs.
double loss_sin(const Vec3& pred, const Vec3& gt);

// Unweighted mean of loss_reg + loss_sin.
LossBreakdown loss_val(std::span<const Vec3> preds, std::span<const Vec3> gts);

// w_i = exp(-d_i^2 / (2 sigma^2)). Throws non_positive_sigma.
std::vector<double> gaussian_weights(std::span<const double> center_distances, double sigma);

// Gaussian-weighted sum divided by N (the count, not the weight total);
// normalize_by_weight_sum switches to dividing by sum(w) instead.
LossBreakdown loss_gau(std::span<const Vec3> preds, std::span<const Vec3> gts,
                       std::span<const double> center_distances, double sigma,
                       bool normalize_by_weight_sum = false);

// loss_val over the ceil(N/2) nearest points only. Selected members carry
// weight N/ceil(N/2) so that total = (1/N) * sum(w_i * per_point_i) is the
// plain mean over the selection.
LossBreakdown loss_half(std::span<const Vec3> preds, std::span<const Vec3> gts,
                        std::span<const double> center_distances);

// --- reverse-mode autodiff ---

// Node handle into a Tape.
struct TensorRef {
  int id = -1;
};

// Minimal tape: nodes are row-major (rows x cols) real tensors created in
// topological order; backward() walks the tape in reverse. Single-use:
// build, run backward once, read gradients.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf tensor; values are copied.
  TensorRef leaf(int rows, int cols, std::span<const double> values);

  // y = x W^T + bias, with x (n x in), W (out x in), bias (1 x out).
  TensorRef linear(TensorRef x, TensorRef W, TensorRef bias);
  TensorRef relu(TensorRef x);
  // Column-wise max over rows: (n x d) -> (1 x d). Ties route the gradient
  // to the lowest row index.
  TensorRef max_pool_rows(TensorRef x);
  // Rows of x concatenated with the (broadcast) single row of g.
  TensorRef concat_broadcast(TensorRef x, TensorRef g);
  // Smooth row normalization y = x / sqrt(|x|^2 + eps).
  TensorRef normalize_rows(TensorRef x, double eps = 1e-12);

  // Elementwise helpers (shapes must match exactly).
  TensorRef add(TensorRef a, TensorRef b);
  TensorRef mul(TensorRef a, TensorRef b);
  TensorRef scale(TensorRef x, double s);
  TensorRef sum(TensorRef x);  // scalar

  // Fused unoriented-normal loss: for each row p_i of preds (n x 3),
  // per_point_i = loss_reg(p_i, gt_i) + loss_sin(p_i, gt_i) (terms
  // selectable), output scalar = inv_count * sum(w_i * per_point_i).
  // gts and weights are constants.
  TensorRef normal_loss(TensorRef preds, std::span<const Vec3> gts,
                        std::span<const double> weights, double inv_count,
                        bool include_reg = true, bool include_sin = true);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node.
  // Throws non_scalar_loss unless the node holds exactly one value.
  void backward(TensorRef loss);

  const std::vector<double>& values(TensorRef t) const;
  const std::vector<double>& grad(TensorRef t) const;
  int rows(TensorRef t) const;
  int cols(TensorRef t) const;

 private:
  struct Node;
  std::vector<Node> nodes_;

  friend struct TapeDetail;
};

// --- optimizer and schedule ---

// AdamW with decoupled weight decay. Moment buffers are sized on first use.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

void adamw_step(OptimizerState& state, std::vector<double>& params,
                std::span<const double> grads, double lr);

// lr_min + 0.5 (lr_max - lr_min) (1 + cos(pi step / total)). Throws
// range_error on step outside [0, total] or a non-positive/inverted range.
double cosine_lr(long step, long total_steps, double lr_max, double lr_min);

// --- network + loss composition used by training and gradient checks ---

struct NetworkBackprop {
  double loss = 0.0;
  std::vector<double> grad;       // same layout as NetworkParams::values
  std::vector<Vec3> predictions;  // smooth-normalized network outputs
};

// Forward + backward of the toy network composed with the fused normal
// loss. weights/inv_count encode the loss variant (all-ones & 1/N for the
// plain mean, Gaussian weights for the weighted one, scaled indicator
// weights for the nearest-half variant).
NetworkBackprop network_loss_backward(const NetworkParams& params,
                                      std::span<const Vec3> canonical_points,
                                      std::span<const Vec3> canonical_gt,
                                      std::span<const double> weights, double inv_count);

// Same forward without the tape; used by finite-difference checks.
double network_loss_value(const NetworkParams& params, std::span<const Vec3> canonical_points,
                          std::span<const Vec3> canonical_gt, std::span<const double> weights,
                          double inv_count);

}  // namespace normest::nn
