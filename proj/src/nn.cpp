#include "normest/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "normest/errors.hpp"

namespace normest::nn {

double loss_reg(const Vec3& pred, const Vec3& gt) {
  double minus = (pred - gt).squared_norm();
  double plus = (pred + gt).squared_norm();
  return minus <= plus ? minus : plus;
}

double loss_sin(const Vec3& pred, const Vec3& gt) { return pred.cross(gt).norm(); }

LossBreakdown loss_val(std::span<const Vec3> preds, std::span<const Vec3> gts) {
  if (preds.size() != gts.size())
    throw length_mismatch("loss_val: " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(gts.size()) + " ground truths");
  if (preds.empty()) throw empty_input("loss_val: no predictions");

  LossBreakdown out;
  out.per_point.reserve(preds.size());
  out.weights.assign(preds.size(), 1.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double pp = loss_reg(preds[i], gts[i]) + loss_sin(preds[i], gts[i]);
    out.per_point.push_back(pp);
    sum += pp;
  }
  out.total = sum / static_cast<double>(preds.size());
  return out;
}

std::vector<double> gaussian_weights(std::span<const double> center_distances, double sigma) {
  if (!(sigma > 0.0)) throw non_positive_sigma("gaussian_weights: sigma = " + std::to_string(sigma));
  double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> w;
  w.reserve(center_distances.size());
  for (double d : center_distances) w.push_back(std::exp(-d * d * inv));
  return w;
}

LossBreakdown loss_gau(std::span<const Vec3> preds, std::span<const Vec3> gts,
                       std::span<const double> center_distances, double sigma,
                       bool normalize_by_weight_sum) {
  if (preds.size() != gts.size() || preds.size() != center_distances.size())
    throw length_mismatch("loss_gau: prediction/ground-truth/distance lengths differ");
  if (preds.empty()) throw empty_input("loss_gau: no predictions");

  LossBreakdown out;
  out.weights = gaussian_weights(center_distances, sigma);
  if (normalize_by_weight_sum) {
    // Rescale so that total = (1/N) sum(w_i * pp_i) still holds.
    double w_sum = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
    double factor = static_cast<double>(preds.size()) / w_sum;
    for (double& w : out.weights) w *= factor;
  }
  out.per_point.reserve(preds.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double pp = loss_reg(preds[i], gts[i]) + loss_sin(preds[i], gts[i]);
    out.per_point.push_back(pp);
    sum += out.weights[i] * pp;
  }
  out.total = sum / static_cast<double>(preds.size());
  return out;
}

LossBreakdown loss_half(std::span<const Vec3> preds, std::span<const Vec3> gts,
                        std::span<const double> center_distances) {
  if (preds.size() != gts.size() || preds.size() != center_distances.size())
    throw length_mismatch("loss_half: prediction/ground-truth/distance lengths differ");
  if (preds.empty()) throw empty_input("loss_half: no predictions");

  const std::size_t n = preds.size();
  const std::size_t keep = (n + 1) / 2;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return center_distances[a] < center_distances[b];
  });

  LossBreakdown out;
  out.per_point.reserve(n);
  // Selected members carry N/ceil(N/2) so the (1/N)-weighted identity holds
  // while the total stays the plain mean over the selection.
  out.weights.assign(n, 0.0);
  double w_sel = static_cast<double>(n) / static_cast<double>(keep);
  for (std::size_t k = 0; k < keep; ++k) out.weights[order[k]] = w_sel;

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pp = loss_reg(preds[i], gts[i]) + loss_sin(preds[i], gts[i]);
    out.per_point.push_back(pp);
    if (out.weights[i] > 0.0) sum += pp;
  }
  out.total = sum / static_cast<double>(keep);
  return out;
}

// --- tape ---

struct Tape::Node {
  enum class Op {
    leaf,
    linear,
    relu,
    maxpool,
    concat,
    normalize,
    add,
    mul,
    scale,
    sum,
    normal_loss,
  };

  Op op = Op::leaf;
  int rows = 0, cols = 0;
  std::vector<double> values;
  std::vector<double> grad;
  int a = -1, b = -1, c = -1;
  double scalar = 0.0;
  std::vector<int> arg;       // maxpool: winning row per column
  std::vector<Vec3> gts;      // normal_loss constants
  std::vector<double> weights;
  bool inc_reg = true, inc_sin = true;
};

Tape::Tape() = default;
Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

namespace {

std::size_t numel(int rows, int cols) {
  return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
}

}  // namespace

TensorRef Tape::leaf(int rows, int cols, std::span<const double> values) {
  if (values.size() != numel(rows, cols))
    throw shape_mismatch("leaf: value count does not match shape");
  Node n;
  n.op = Node::Op::leaf;
  n.rows = rows;
  n.cols = cols;
  n.values.assign(values.begin(), values.end());
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

const std::vector<double>& Tape::values(TensorRef t) const {
  return nodes_[static_cast<std::size_t>(t.id)].values;
}
const std::vector<double>& Tape::grad(TensorRef t) const {
  return nodes_[static_cast<std::size_t>(t.id)].grad;
}
int Tape::rows(TensorRef t) const { return nodes_[static_cast<std::size_t>(t.id)].rows; }
int Tape::cols(TensorRef t) const { return nodes_[static_cast<std::size_t>(t.id)].cols; }

TensorRef Tape::linear(TensorRef x, TensorRef W, TensorRef bias) {
  const Node& nx = nodes_[static_cast<std::size_t>(x.id)];
  const Node& nw = nodes_[static_cast<std::size_t>(W.id)];
  const Node& nb = nodes_[static_cast<std::size_t>(bias.id)];
  if (nx.cols != nw.cols || nb.rows != 1 || nb.cols != nw.rows)
    throw shape_mismatch("linear: incompatible shapes");

  Node n;
  n.op = Node::Op::linear;
  n.rows = nx.rows;
  n.cols = nw.rows;
  n.a = x.id;
  n.b = W.id;
  n.c = bias.id;
  n.values.resize(numel(n.rows, n.cols));
  for (int r = 0; r < n.rows; ++r) {
    const double* xr = nx.values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(nx.cols);
    double* yr = n.values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n.cols);
    for (int o = 0; o < n.cols; ++o) {
      const double* wr = nw.values.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(nw.cols);
      double acc = nb.values[static_cast<std::size_t>(o)];
      for (int i = 0; i < nx.cols; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::relu(TensorRef x) {
  const Node& nx = nodes_[static_cast<std::size_t>(x.id)];
  Node n;
  n.op = Node::Op::relu;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.a = x.id;
  n.values.resize(nx.values.size());
  for (std::size_t i = 0; i < nx.values.size(); ++i)
    n.values[i] = nx.values[i] > 0.0 ? nx.values[i] : 0.0;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::max_pool_rows(TensorRef x) {
  const Node& nx = nodes_[static_cast<std::size_t>(x.id)];
  if (nx.rows < 1) throw shape_mismatch("max_pool_rows: empty input");
  Node n;
  n.op = Node::Op::maxpool;
  n.rows = 1;
  n.cols = nx.cols;
  n.a = x.id;
  n.values.resize(static_cast<std::size_t>(nx.cols));
  n.arg.resize(static_cast<std::size_t>(nx.cols));
  for (int c = 0; c < nx.cols; ++c) {
    double best = nx.values[static_cast<std::size_t>(c)];
    int best_row = 0;
    for (int r = 1; r < nx.rows; ++r) {
      double v = nx.values[static_cast<std::size_t>(r) * static_cast<std::size_t>(nx.cols) +
                           static_cast<std::size_t>(c)];
      if (v > best) {  // strict: ties keep the lowest row
        best = v;
        best_row = r;
      }
    }
    n.values[static_cast<std::size_t>(c)] = best;
    n.arg[static_cast<std::size_t>(c)] = best_row;
  }
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::concat_broadcast(TensorRef x, TensorRef g) {
  const Node& nx = nodes_[static_cast<std::size_t>(x.id)];
  const Node& ng = nodes_[static_cast<std::size_t>(g.id)];
  if (ng.rows != 1 || ng.cols != nx.cols)
    throw shape_mismatch("concat_broadcast: global feature shape mismatch");
  Node n;
  n.op = Node::Op::concat;
  n.rows = nx.rows;
  n.cols = 2 * nx.cols;
  n.a = x.id;
  n.b = g.id;
  n.values.resize(numel(n.rows, n.cols));
  for (int r = 0; r < n.rows; ++r) {
    double* dst = n.values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n.cols);
    const double* src = nx.values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(nx.cols);
    std::copy(src, src + nx.cols, dst);
    std::copy(ng.values.begin(), ng.values.end(), dst + nx.cols);
  }
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::normalize_rows(TensorRef x, double eps) {
  const Node& nx = nodes_[static_cast<std::size_t>(x.id)];
  Node n;
  n.op = Node::Op::normalize;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.a = x.id;
  n.scalar = eps;
  n.values.resize(nx.values.size());
  for (int r = 0; r < nx.rows; ++r) {
    const double* xr = nx.values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(nx.cols);
    double* yr = n.values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(nx.cols);
    double sq = 0.0;
    for (int c = 0; c < nx.cols; ++c) sq += xr[c] * xr[c];
    double inv = 1.0 / std::sqrt(sq + eps);
    for (int c = 0; c < nx.cols; ++c) yr[c] = xr[c] * inv;
  }
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::add(TensorRef a, TensorRef b) {
  const Node& na = nodes_[static_cast<std::size_t>(a.id)];
  const Node& nb = nodes_[static_cast<std::size_t>(b.id)];
  if (na.rows != nb.rows || na.cols != nb.cols) throw shape_mismatch("add: shape mismatch");
  Node n;
  n.op = Node::Op::add;
  n.rows = na.rows;
  n.cols = na.cols;
  n.a = a.id;
  n.b = b.id;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < na.values.size(); ++i) n.values[i] = na.values[i] + nb.values[i];
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::mul(TensorRef a, TensorRef b) {
  const Node& na = nodes_[static_cast<std::size_t>(a.id)];
  const Node& nb = nodes_[static_cast<std::size_t>(b.id)];
  if (na.rows != nb.rows || na.cols != nb.cols) throw shape_mismatch("mul: shape mismatch");
  Node n;
  n.op = Node::Op::mul;
  n.rows = na.rows;
  n.cols = na.cols;
  n.a = a.id;
  n.b = b.id;
  n.values.resize(na.values.size());
  for (std::size_t i = 0; i < na.values.size(); ++i) n.values[i] = na.values[i] * nb.values[i];
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::scale(TensorRef x, double s) {
  const Node& nx = nodes_[static_cast<std::size_t>(x.id)];
  Node n;
  n.op = Node::Op::scale;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.a = x.id;
  n.scalar = s;
  n.values.resize(nx.values.size());
  for (std::size_t i = 0; i < nx.values.size(); ++i) n.values[i] = nx.values[i] * s;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::sum(TensorRef x) {
  const Node& nx = nodes_[static_cast<std::size_t>(x.id)];
  Node n;
  n.op = Node::Op::sum;
  n.rows = 1;
  n.cols = 1;
  n.a = x.id;
  n.values.assign(1, std::accumulate(nx.values.begin(), nx.values.end(), 0.0));
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::normal_loss(TensorRef preds, std::span<const Vec3> gts,
                            std::span<const double> weights, double inv_count, bool include_reg,
                            bool include_sin) {
  const Node& np = nodes_[static_cast<std::size_t>(preds.id)];
  if (np.cols != 3) throw shape_mismatch("normal_loss: predictions must be n x 3");
  if (gts.size() != static_cast<std::size_t>(np.rows) || weights.size() != gts.size())
    throw length_mismatch("normal_loss: row count mismatch");

  Node n;
  n.op = Node::Op::normal_loss;
  n.rows = 1;
  n.cols = 1;
  n.a = preds.id;
  n.scalar = inv_count;
  n.gts.assign(gts.begin(), gts.end());
  n.weights.assign(weights.begin(), weights.end());
  n.inc_reg = include_reg;
  n.inc_sin = include_sin;

  double total = 0.0;
  for (int r = 0; r < np.rows; ++r) {
    Vec3 p{np.values[static_cast<std::size_t>(r) * 3 + 0],
           np.values[static_cast<std::size_t>(r) * 3 + 1],
           np.values[static_cast<std::size_t>(r) * 3 + 2]};
    double pp = 0.0;
    if (include_reg) pp += loss_reg(p, n.gts[static_cast<std::size_t>(r)]);
    if (include_sin) pp += loss_sin(p, n.gts[static_cast<std::size_t>(r)]);
    total += n.weights[static_cast<std::size_t>(r)] * pp;
  }
  n.values.assign(1, inv_count * total);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(TensorRef loss) {
  Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
  if (ln.values.size() != 1)
    throw non_scalar_loss("backward: node holds " + std::to_string(ln.values.size()) +
                          " values, expected a scalar");

  for (auto& n : nodes_) n.grad.assign(n.values.size(), 0.0);
  ln.grad[0] = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    bool any = false;
    for (double g : n.grad)
      if (g != 0.0) {
        any = true;
        break;
      }
    if (!any) continue;

    switch (n.op) {
      case Node::Op::leaf:
        break;
      case Node::Op::linear: {
        Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        Node& nw = nodes_[static_cast<std::size_t>(n.b)];
        Node& nb = nodes_[static_cast<std::size_t>(n.c)];
        for (int r = 0; r < n.rows; ++r) {
          const double* gr = n.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n.cols);
          const double* xr = nx.values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(nx.cols);
          double* dxr = nx.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(nx.cols);
          for (int o = 0; o < n.cols; ++o) {
            double g = gr[o];
            if (g == 0.0) continue;
            const double* wr = nw.values.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(nw.cols);
            double* dwr = nw.grad.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(nw.cols);
            for (int i = 0; i < nx.cols; ++i) {
              dxr[i] += g * wr[i];
              dwr[i] += g * xr[i];
            }
            nb.grad[static_cast<std::size_t>(o)] += g;
          }
        }
        break;
      }
      case Node::Op::relu: {
        Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < n.values.size(); ++i)
          if (n.values[i] > 0.0) nx.grad[i] += n.grad[i];
        break;
      }
      case Node::Op::maxpool: {
        Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        for (int c = 0; c < n.cols; ++c)
          nx.grad[static_cast<std::size_t>(n.arg[static_cast<std::size_t>(c)]) *
                      static_cast<std::size_t>(nx.cols) +
                  static_cast<std::size_t>(c)] += n.grad[static_cast<std::size_t>(c)];
        break;
      }
      case Node::Op::concat: {
        Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        Node& ng = nodes_[static_cast<std::size_t>(n.b)];
        int d = nx.cols;
        for (int r = 0; r < n.rows; ++r) {
          const double* gr = n.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n.cols);
          double* dxr = nx.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(d);
          for (int c = 0; c < d; ++c) {
            dxr[c] += gr[c];
            ng.grad[static_cast<std::size_t>(c)] += gr[d + c];
          }
        }
        break;
      }
      case Node::Op::normalize: {
        Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        for (int r = 0; r < n.rows; ++r) {
          const double* xr = nx.values.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n.cols);
          const double* gr = n.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n.cols);
          double* dxr = nx.grad.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n.cols);
          double sq = 0.0, gdotx = 0.0;
          for (int c = 0; c < n.cols; ++c) {
            sq += xr[c] * xr[c];
            gdotx += gr[c] * xr[c];
          }
          double inv = 1.0 / std::sqrt(sq + n.scalar);
          double inv3 = inv * inv * inv;
          for (int c = 0; c < n.cols; ++c) dxr[c] += gr[c] * inv - xr[c] * gdotx * inv3;
        }
        break;
      }
      case Node::Op::add: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        for (std::size_t i = 0; i < n.values.size(); ++i) {
          na.grad[i] += n.grad[i];
          nb.grad[i] += n.grad[i];
        }
        break;
      }
      case Node::Op::mul: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        for (std::size_t i = 0; i < n.values.size(); ++i) {
          na.grad[i] += n.grad[i] * nb.values[i];
          nb.grad[i] += n.grad[i] * na.values[i];
        }
        break;
      }
      case Node::Op::scale: {
        Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < n.values.size(); ++i) nx.grad[i] += n.grad[i] * n.scalar;
        break;
      }
      case Node::Op::sum: {
        Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < nx.values.size(); ++i) nx.grad[i] += n.grad[0];
        break;
      }
      case Node::Op::normal_loss: {
        Node& np = nodes_[static_cast<std::size_t>(n.a)];
        double g_out = n.grad[0] * n.scalar;
        for (int r = 0; r < np.rows; ++r) {
          Vec3 p{np.values[static_cast<std::size_t>(r) * 3 + 0],
                 np.values[static_cast<std::size_t>(r) * 3 + 1],
                 np.values[static_cast<std::size_t>(r) * 3 + 2]};
          const Vec3& gt = n.gts[static_cast<std::size_t>(r)];
          Vec3 dp;
          if (n.inc_reg) {
            bool minus = (p - gt).squared_norm() <= (p + gt).squared_norm();
            dp += (minus ? (p - gt) : (p + gt)) * 2.0;
          }
          if (n.inc_sin) {
            Vec3 c = p.cross(gt);
            double cn = c.norm();
            if (cn > 1e-12) dp += gt.cross(c / cn);
          }
          double f = g_out * n.weights[static_cast<std::size_t>(r)];
          np.grad[static_cast<std::size_t>(r) * 3 + 0] += f * dp.x;
          np.grad[static_cast<std::size_t>(r) * 3 + 1] += f * dp.y;
          np.grad[static_cast<std::size_t>(r) * 3 + 2] += f * dp.z;
        }
        break;
      }
    }
  }
}

// --- optimizer ---

void adamw_step(OptimizerState& state, std::vector<double>& params,
                std::span<const double> grads, double lr) {
  if (params.size() != grads.size())
    throw shape_mismatch("adamw_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
  if (state.m.empty()) state.m.assign(params.size(), 0.0);
  if (state.v.empty()) state.v.assign(params.size(), 0.0);
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw shape_mismatch("adamw_step: moment buffers do not match parameter count");

  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps) + state.weight_decay * params[i]);
  }
}

double cosine_lr(long step, long total_steps, double lr_max, double lr_min) {
  if (total_steps <= 0) throw range_error("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps)
    throw range_error("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  if (!(lr_min > 0.0) || lr_max < lr_min)
    throw range_error("cosine_lr: need lr_max >= lr_min > 0");
  double phase = 3.14159265358979323846 * static_cast<double>(step) /
                 static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

// --- network + loss composition ---

namespace {

struct LayerSpan {
  int in, out;
  std::size_t w_offset, b_offset;
};

std::array<LayerSpan, 5> layer_spans(const NetworkParams& p) {
  if (p.widths.size() != 6 || p.widths[0] != 3 || p.widths[5] != 3 || p.widths[2] == 0)
    throw shape_mismatch("network widths must be {3, h, d_fused, h2, h3, 3}");
  if (p.values.size() != p.expected_value_count())
    throw shape_mismatch("parameter count does not match architecture");

  int d = static_cast<int>(p.widths[2]);
  std::array<std::pair<int, int>, 5> dims = {{{3, static_cast<int>(p.widths[1])},
                                              {static_cast<int>(p.widths[1]), d},
                                              {2 * d, static_cast<int>(p.widths[3])},
                                              {static_cast<int>(p.widths[3]), static_cast<int>(p.widths[4])},
                                              {static_cast<int>(p.widths[4]), 3}}};
  std::array<LayerSpan, 5> out{};
  std::size_t offset = 0;
  for (std::size_t l = 0; l < 5; ++l) {
    out[l].in = dims[l].first;
    out[l].out = dims[l].second;
    out[l].w_offset = offset;
    offset += static_cast<std::size_t>(dims[l].first) * static_cast<std::size_t>(dims[l].second);
    out[l].b_offset = offset;
    offset += static_cast<std::size_t>(dims[l].second);
  }
  return out;
}

struct BuiltGraph {
  Tape tape;
  TensorRef loss;
  TensorRef preds;
  std::array<TensorRef, 5> w, b;
};

BuiltGraph build_loss_graph(const NetworkParams& params, std::span<const Vec3> points,
                       std::span<const Vec3> gts, std::span<const double> weights,
                       double inv_count) {
  if (points.size() != gts.size() || points.size() != weights.size())
    throw length_mismatch("network loss: point/ground-truth/weight lengths differ");
  if (points.empty()) throw empty_input("network loss: no points");

  auto spans = layer_spans(params);
  BuiltGraph g;

  std::vector<double> xbuf(points.size() * 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    xbuf[i * 3 + 0] = points[i].x;
    xbuf[i * 3 + 1] = points[i].y;
    xbuf[i * 3 + 2] = points[i].z;
  }
  TensorRef x = g.tape.leaf(static_cast<int>(points.size()), 3, xbuf);

  for (std::size_t l = 0; l < 5; ++l) {
    const auto& s = spans[l];
    g.w[l] = g.tape.leaf(s.out, s.in,
                         std::span<const double>(params.values.data() + s.w_offset,
                                                 static_cast<std::size_t>(s.in) *
                                                     static_cast<std::size_t>(s.out)));
    g.b[l] = g.tape.leaf(1, s.out,
                         std::span<const double>(params.values.data() + s.b_offset,
                                                 static_cast<std::size_t>(s.out)));
  }

  TensorRef h1 = g.tape.relu(g.tape.linear(x, g.w[0], g.b[0]));
  TensorRef h2 = g.tape.relu(g.tape.linear(h1, g.w[1], g.b[1]));
  TensorRef pooled = g.tape.max_pool_rows(h2);
  TensorRef fused = g.tape.concat_broadcast(h2, pooled);
  TensorRef d1 = g.tape.relu(g.tape.linear(fused, g.w[2], g.b[2]));
  TensorRef d2 = g.tape.relu(g.tape.linear(d1, g.w[3], g.b[3]));
  TensorRef raw = g.tape.linear(d2, g.w[4], g.b[4]);
  g.preds = g.tape.normalize_rows(raw, 1e-12);
  g.loss = g.tape.normal_loss(g.preds, gts, weights, inv_count);
  return g;
}

}  // namespace

NetworkBackprop network_loss_backward(const NetworkParams& params,
                                      std::span<const Vec3> canonical_points,
                                      std::span<const Vec3> canonical_gt,
                                      std::span<const double> weights, double inv_count) {
  BuiltGraph g = build_loss_graph(params, canonical_points, canonical_gt, weights, inv_count);
  g.tape.backward(g.loss);

  NetworkBackprop out;
  out.loss = g.tape.values(g.loss)[0];
  out.grad.reserve(params.values.size());
  for (std::size_t l = 0; l < 5; ++l) {
    const auto& wg = g.tape.grad(g.w[l]);
    out.grad.insert(out.grad.end(), wg.begin(), wg.end());
    const auto& bg = g.tape.grad(g.b[l]);
    out.grad.insert(out.grad.end(), bg.begin(), bg.end());
  }

  const auto& pv = g.tape.values(g.preds);
  out.predictions.resize(canonical_points.size());
  for (std::size_t i = 0; i < canonical_points.size(); ++i)
    out.predictions[i] = Vec3{pv[i * 3 + 0], pv[i * 3 + 1], pv[i * 3 + 2]};
  return out;
}

double network_loss_value(const NetworkParams& params, std::span<const Vec3> canonical_points,
                          std::span<const Vec3> canonical_gt, std::span<const double> weights,
                          double inv_count) {
  BuiltGraph g = build_loss_graph(params, canonical_points, canonical_gt, weights, inv_count);
  return g.tape.values(g.loss)[0];
}

}  // namespace normest::nn
