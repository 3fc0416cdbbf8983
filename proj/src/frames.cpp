#include "normest/frames.hpp"

#include <algorithm>
#include <array>

#include "normest/errors.hpp"
#include "normest/estimators.hpp"

namespace normest {

FrameSet build_frame_set(std::span<const Vec3> points) {
  if (points.empty()) throw empty_input("build_frame_set: no points");
  Vec3 t = centroid(points);
  SymEig3 eig = eig_sym3(covariance(points));

  FrameSet fs;
  double l1 = eig.eigenvalues[0], l2 = eig.eigenvalues[1], l3 = eig.eigenvalues[2];
  fs.eigen_gap = std::min(l2 - l1, l3 - l2) / (l3 + 1e-30);

  for (int j = 0; j < 8; ++j) {
    Vec3 c0 = (j & 1) ? -eig.eigenvectors[0] : eig.eigenvectors[0];
    Vec3 c1 = (j & 2) ? -eig.eigenvectors[1] : eig.eigenvectors[1];
    Vec3 c2 = (j & 4) ? -eig.eigenvectors[2] : eig.eigenvectors[2];
    fs.frames[static_cast<std::size_t>(j)] = Frame{Mat3::from_columns(c0, c1, c2), t};
  }
  return fs;
}

std::vector<Vec3> to_canonical(const Frame& f, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(f.R.transpose_times(p - f.t));
  return out;
}

std::vector<Vec3> to_world(const Frame& f, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& q : points) out.push_back(f.R * q + f.t);
  return out;
}

Vec3 direction_to_world(const Frame& f, const Vec3& n) { return f.R * n; }

Vec3 direction_to_canonical(const Frame& f, const Vec3& n) { return f.R.transpose_times(n); }

const Frame& sample_random_frame(const FrameSet& fs, Rng& rng) {
  return fs.frames[rng.uniform_below(8)];
}

std::vector<Vec3> frame_average(const Estimator& phi, std::span<const Vec3> patch_points,
                                int n_frames, Rng& rng) {
  if (n_frames != 1 && n_frames != 2 && n_frames != 4 && n_frames != 8)
    throw invalid_spec("frame_average: n_frames must be one of 1, 2, 4, 8");
  if (patch_points.empty()) throw empty_input("frame_average: no points");

  FrameSet fs = build_frame_set(patch_points);

  // Choose distinct frame indices; always process them in ascending index
  // order so the summation below is reproducible.
  std::array<int, 8> pool = {0, 1, 2, 3, 4, 5, 6, 7};
  if (n_frames < 8) {
    for (int i = 0; i < n_frames; ++i) {
      int j = i + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(8 - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    std::sort(pool.begin(), pool.begin() + n_frames);
  }

  const std::size_t n_points = patch_points.size();
  // candidates[f * n_points + k]: world-space candidate of point k under the
  // f-th chosen frame.
  std::vector<Vec3> candidates(static_cast<std::size_t>(n_frames) * n_points);
  for (int f = 0; f < n_frames; ++f) {
    const Frame& g = fs[pool[static_cast<std::size_t>(f)]];
    std::vector<Vec3> canon = to_canonical(g, patch_points);
    std::vector<Vec3> local = phi.estimate(canon);
    if (local.size() != n_points)
      throw shape_mismatch("frame_average: estimator returned " + std::to_string(local.size()) +
                           " normals for " + std::to_string(n_points) + " points");
    for (std::size_t k = 0; k < n_points; ++k)
      candidates[static_cast<std::size_t>(f) * n_points + k] = g.R * local[k];
  }

  std::vector<Vec3> out(n_points);
  for (std::size_t k = 0; k < n_points; ++k) {
    if (n_frames == 1) {
      out[k] = candidates[k].normalized();
      continue;
    }

    // Reference direction = principal axis of the candidate scatter,
    // oriented towards the first candidate. Using the scatter keeps the
    // reference independent of frame enumeration order (it is a function
    // of the candidate multiset), which first-candidate alignment is not.
    Mat3 scatter;
    for (int f = 0; f < n_frames; ++f) {
      const Vec3& c = candidates[static_cast<std::size_t>(f) * n_points + k];
      scatter(0, 0) += c.x * c.x;
      scatter(0, 1) += c.x * c.y;
      scatter(0, 2) += c.x * c.z;
      scatter(1, 1) += c.y * c.y;
      scatter(1, 2) += c.y * c.z;
      scatter(2, 2) += c.z * c.z;
    }
    scatter(1, 0) = scatter(0, 1);
    scatter(2, 0) = scatter(0, 2);
    scatter(2, 1) = scatter(1, 2);

    Vec3 ref = eig_sym3(scatter).eigenvectors[2];
    if (ref.dot(candidates[k]) < 0.0) ref = -ref;

    Vec3 sum;
    for (int f = 0; f < n_frames; ++f) {
      const Vec3& c = candidates[static_cast<std::size_t>(f) * n_points + k];
      sum += (c.dot(ref) >= 0.0) ? c : -c;
    }
    double norm = sum.norm();
    if (norm < 1e-8)
      throw degenerate_average("frame_average: candidates cancel at point " + std::to_string(k));
    out[k] = sum / norm;
  }
  return out;
}

}  // namespace normest
