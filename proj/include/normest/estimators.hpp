#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "normest/geom.hpp"

namespace normest {

// Pluggable patch estimator: canonicalized patch in, one unit normal per
// point out.
class Estimator {
 public:
  virtual ~Estimator() = default;

  virtual std::vector<Vec3> estimate(std::span<const Vec3> canonical_points) const = 0;
  virtual bool concurrency_safe() const { return true; }
  virtual std::string name() const = 0;
};

// --- PCA plane fit ---

// Single plane normal (eigenvector of the smallest covariance eigenvalue),
// replicated for every point. Sign: positive z-component, ties resolved
// towards positive y then positive x. Throws too_few_points below 3.
std::vector<Vec3> pca_estimate(std::span<const Vec3> canonical_points);

class PcaEstimator final : public Estimator {
 public:
  std::vector<Vec3> estimate(std::span<const Vec3> canonical_points) const override {
    return pca_estimate(canonical_points);
  }
  std::string name() const override { return "pca"; }
};

// --- polynomial jet fit ---

// Bivariate polynomial z = f(x, y), coefficients in graded-lexicographic
// order: 1, x, y, x^2, xy, y^2, ...
struct JetCoefficients {
  int order = 2;
  std::vector<double> coefficients;
};

enum class JetWeighting {
  plain,            // ordinary least squares
  gaussian_center,  // rows weighted by exp(-d^2 / 2 sigma^2), d = distance
                    // to the first input point (the patch center), with
                    // sigma = half-patch radius / 2
};

struct JetResult {
  std::vector<Vec3> normals;
  JetCoefficients jet;
  bool ill_conditioned = false;  // true when the fit fell back to PCA
};

// Fits z = f(x, y) over an internally chosen height axis (the minimum
// variance direction of the inputs) and returns the analytic surface
// normal at each point's parameter value. Near-singular normal equations
// are solved by a truncated pseudo-inverse (singular values below
// 1e-10 x max dropped); condition numbers beyond 1e12 fall back to the
// PCA normal with ill_conditioned set. Throws too_few_points when the
// point count is below the coefficient count.
JetResult jet_fit(std::span<const Vec3> canonical_points, int order,
                  JetWeighting weighting = JetWeighting::gaussian_center);

inline std::vector<Vec3> jet_estimate(std::span<const Vec3> canonical_points, int order,
                                      JetWeighting weighting = JetWeighting::gaussian_center) {
  return jet_fit(canonical_points, order, weighting).normals;
}

class JetEstimator final : public Estimator {
 public:
  explicit JetEstimator(int order = 2, JetWeighting weighting = JetWeighting::gaussian_center)
      : order_(order), weighting_(weighting) {}

  std::vector<Vec3> estimate(std::span<const Vec3> canonical_points) const override {
    JetResult r = jet_fit(canonical_points, order_, weighting_);
    if (r.ill_conditioned) fallback_count_.fetch_add(1, std::memory_order_relaxed);
    return std::move(r.normals);
  }
  std::string name() const override { return "jet" + std::to_string(order_); }

  int order() const { return order_; }
  // Number of patches that fell back to PCA so far.
  long fallback_count() const { return fallback_count_.load(std::memory_order_relaxed); }

 private:
  int order_;
  JetWeighting weighting_;
  mutable std::atomic<long> fallback_count_{0};
};

// --- toy trainable point network ---

// Shared per-point MLP 3 -> 64 -> d_fused, max-pool to a global feature,
// concat back per point, decoder 2*d_fused -> 128 -> 64 -> 3, rectified
// linear activations, unit normalization on the output.
//
// widths stores {3, 64, d_fused, 128, 64, 3}; values is the flat parameter
// vector, per layer W (row-major, out x in) then bias.
struct NetworkParams {
  std::vector<std::uint32_t> widths;
  std::vector<double> values;

  static NetworkParams init(int d_fused, std::uint64_t seed);
  static NetworkParams zero(int d_fused);

  int d_fused() const { return static_cast<int>(widths.at(2)); }
  std::size_t expected_value_count() const;

  // Flat binary format: magic "E3NP", version u32, width count u32,
  // widths u32..., parameters as little-endian 64-bit floats. Round-trip
  // is bit-exact.
  void save(const std::string& path) const;
  static NetworkParams load(const std::string& path);
};

// Forward pass. Throws shape_mismatch when params disagree with the
// declared widths.
std::vector<Vec3> neural_estimate(std::span<const Vec3> canonical_points,
                                  const NetworkParams& params);

class NeuralEstimator final : public Estimator {
 public:
  explicit NeuralEstimator(NetworkParams params) : params_(std::move(params)) {}

  std::vector<Vec3> estimate(std::span<const Vec3> canonical_points) const override {
    return neural_estimate(canonical_points, params_);
  }
  std::string name() const override { return "neural"; }

  const NetworkParams& params() const { return params_; }
  NetworkParams& params() { return params_; }

 private:
  NetworkParams params_;
};

}  // namespace normest
