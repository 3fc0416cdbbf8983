#pragma once

#include <array>
#include <span>
#include <vector>

#include "normest/geom.hpp"
#include "normest/rng.hpp"

namespace normest {

class Estimator;

// One candidate canonical pose of a patch. R maps canonical coordinates to
// world coordinates (columns are the eigenvector basis); det(R) may be -1,
// reflections are legitimate members of the set.
struct Frame {
  Mat3 R;
  Vec3 t;
};

// All eight sign combinations of the covariance eigenvectors, sharing one
// translation. eigen_gap flags near-degenerate spectra: equivariance
// guarantees hold only when it exceeds ~1e-4.
struct FrameSet {
  std::array<Frame, 8> frames;
  double eigen_gap = 0.0;

  const Frame& operator[](int i) const { return frames[static_cast<std::size_t>(i)]; }
};

// Frame set of a patch: t = centroid, rotation columns are the covariance
// eigenvectors (ascending eigenvalue order) under all 2^3 sign choices.
// Frame j applies sign -(1) to column i when bit i of j is set.
FrameSet build_frame_set(std::span<const Vec3> points);

// R^T (p - t) for every point.
std::vector<Vec3> to_canonical(const Frame& f, std::span<const Vec3> points);

// Inverse of to_canonical: R q + t.
std::vector<Vec3> to_world(const Frame& f, std::span<const Vec3> points);

// Directions ignore translation: returns R n.
Vec3 direction_to_world(const Frame& f, const Vec3& n);

// R^T n; used to carry ground-truth normals into a training frame.
Vec3 direction_to_canonical(const Frame& f, const Vec3& n);

// Uniform pick among the eight frames; deterministic given the generator
// state.
const Frame& sample_random_frame(const FrameSet& fs, Rng& rng);

// Equivariant wrapper around an estimator: evaluates phi in n_frames
// canonical poses (all eight, or a subset sampled without replacement),
// maps each candidate back to world coordinates, sign-aligns the
// candidates per point and averages.
//
// Alignment reference: the principal axis of the candidate scatter
// sum(c c^T), oriented towards the first candidate. The scatter matrix is
// invariant to how the frame set happens to be enumerated, which is what
// makes the average equivariant; a raw first-candidate reference is not,
// because the enumeration order permutes under a transform of the input.
// Throws degenerate_average when an aligned sum has norm < 1e-8.
std::vector<Vec3> frame_average(const Estimator& phi, std::span<const Vec3> patch_points,
                                int n_frames, Rng& rng);

}  // namespace normest
