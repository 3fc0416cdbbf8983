#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "normest/geom.hpp"

namespace normest {

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> gt_normals;  // empty when absent; unit length when loaded
  std::string name;
  double bbox_diagonal = 0.0;

  bool has_normals() const { return !gt_normals.empty(); }
  std::size_t size() const { return positions.size(); }
  void update_bbox();
};

// ASCII "x y z" per line; blank lines and lines starting with '#' are
// skipped. Values survive a write/read round-trip bit-exactly.
PointCloud read_xyz(const std::string& path);
void write_xyz(const PointCloud& cloud, const std::string& path);

// Same line format; rows are renormalized on load, norms below 1e-8 raise
// zero_normal.
std::vector<Vec3> read_normals(const std::string& path);
void write_normals(const std::vector<Vec3>& normals, const std::string& path);

// One shape stem per line, ordered, deduplicated.
std::vector<std::string> read_shape_list(const std::string& path);

// Writes content to a temporary file in the same directory and renames it
// into place, so failed runs never leave partial output behind.
void write_file_atomic(const std::string& path, const std::string& content);

enum class SurfaceShape { plane, sphere, cylinder, torus, cube };
enum class DensityMode { uniform, stripes, gradient };

struct SynthSpec {
  SurfaceShape shape = SurfaceShape::sphere;
  int n_points = 5000;
  // Standard deviation of the additive Gaussian displacement, as a
  // fraction of the analytic surface's bounding-box diagonal. Presets used
  // by the benchmark: 0, 0.0012, 0.006, 0.012.
  double noise_sigma = 0.0;
  DensityMode density = DensityMode::uniform;
  std::uint64_t seed = 0;
  int stripe_bands = 8;        // alternating bands, even-indexed kept
  double gradient_floor = 0.1; // retention probability at the far end
};

// Area-uniform samples on the analytic surface with the exact normal at
// the pre-noise sample. Density filtering and noise use seed streams
// derived independently from the sampler, so a filtered cloud's points are
// a subset of the uniform cloud produced from the same seed.
PointCloud synthesize(const SynthSpec& spec);

// Diagonal of the analytic surface's bounding box (pre-noise).
double surface_bbox_diagonal(SurfaceShape shape);

std::string to_string(SurfaceShape shape);
std::string to_string(DensityMode mode);

}  // namespace normest
