#include "normest/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unordered_set>

#include "normest/errors.hpp"
#include "normest/rng.hpp"

namespace normest {

void PointCloud::update_bbox() {
  if (positions.empty()) {
    bbox_diagonal = 0.0;
    return;
  }
  Vec3 lo = positions[0], hi = positions[0];
  for (const auto& p : positions)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  bbox_diagonal = (hi - lo).norm();
}

namespace {

std::string load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) throw io_error("read failed: " + path);
  return ss.str();
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

// Parses "a b c" rows, skipping blanks and '#' comments; invokes row() with
// the 1-based line number.
template <typename RowFn>
void parse_triplet_file(const std::string& path, RowFn&& row) {
  std::string content = load_file(path);
  long line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t eol = content.find('\n', pos);
    std::size_t end = eol == std::string::npos ? content.size() : eol;
    ++line_no;
    std::size_t begin = pos;
    pos = end + 1;

    while (begin < end && is_space(content[begin])) ++begin;
    if (begin == end || content[begin] == '#') {
      if (eol == std::string::npos) break;
      continue;
    }

    double vals[3];
    const char* cur = content.data() + begin;
    const char* last = content.data() + end;
    for (int k = 0; k < 3; ++k) {
      while (cur < last && is_space(*cur)) ++cur;
      auto [next, ec] = std::from_chars(cur, last, vals[k]);
      if (ec != std::errc() || next == cur)
        throw parse_error("expected 3 numeric fields in " + path, line_no);
      cur = next;
    }
    while (cur < last && is_space(*cur)) ++cur;
    if (cur != last) throw parse_error("trailing characters in " + path, line_no);

    row(Vec3{vals[0], vals[1], vals[2]}, line_no);
    if (eol == std::string::npos) break;
  }
}

void format_triplet(std::string& out, const Vec3& v) {
  char buf[32];
  for (int k = 0; k < 3; ++k) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v[k]);
    (void)ec;
    out.append(buf, end);
    out.push_back(k == 2 ? '\n' : ' ');
  }
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open for writing: " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) {
      os.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw io_error("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    std::error_code ec2;
    fs::remove(tmp, ec2);
    throw io_error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

PointCloud read_xyz(const std::string& path) {
  PointCloud cloud;
  parse_triplet_file(path, [&](const Vec3& v, long line) {
    if (!v.finite()) throw parse_error("non-finite coordinate in " + path, line);
    cloud.positions.push_back(v);
  });
  cloud.name = std::filesystem::path(path).stem().string();
  cloud.update_bbox();
  return cloud;
}

void write_xyz(const PointCloud& cloud, const std::string& path) {
  std::string out;
  out.reserve(cloud.positions.size() * 24);
  for (const auto& p : cloud.positions) format_triplet(out, p);
  write_file_atomic(path, out);
}

std::vector<Vec3> read_normals(const std::string& path) {
  std::vector<Vec3> normals;
  parse_triplet_file(path, [&](const Vec3& v, long line) {
    double n = v.norm();
    if (!(n >= 1e-8)) throw zero_normal(line);
    normals.push_back(v / n);
  });
  return normals;
}

void write_normals(const std::vector<Vec3>& normals, const std::string& path) {
  std::string out;
  out.reserve(normals.size() * 24);
  for (const auto& n : normals) format_triplet(out, n);
  write_file_atomic(path, out);
}

std::vector<std::string> read_shape_list(const std::string& path) {
  std::string content = load_file(path);
  std::vector<std::string> names;
  std::unordered_set<std::string> seen;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t eol = content.find('\n', pos);
    std::size_t end = eol == std::string::npos ? content.size() : eol;
    std::string line = content.substr(pos, end - pos);
    pos = end + 1;

    std::size_t a = line.find_first_not_of(" \t\r");
    if (a != std::string::npos && line[a] != '#') {
      std::size_t b = line.find_last_not_of(" \t\r");
      std::string stem = line.substr(a, b - a + 1);
      if (seen.insert(stem).second) names.push_back(stem);
    }
    if (eol == std::string::npos) break;
  }
  return names;
}

// --- synthetic benchmark shapes ---

namespace {

constexpr double kTau = 6.283185307179586476925286766559;
constexpr double kTorusMajor = 1.0;
constexpr double kTorusMinor = 0.3;

struct SurfaceSample {
  Vec3 position;
  Vec3 normal;
  double first_param;  // in [0, 1); drives the stripe/gradient filters
};

SurfaceSample sample_surface(SurfaceShape shape, Rng& rng) {
  switch (shape) {
    case SurfaceShape::plane: {
      double u = rng.uniform(), v = rng.uniform();
      return {{u, v, 0.0}, {0.0, 0.0, 1.0}, u};
    }
    case SurfaceShape::sphere: {
      double z = rng.uniform(-1.0, 1.0);
      double phi = rng.uniform(0.0, kTau);
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      Vec3 p{r * std::cos(phi), r * std::sin(phi), z};
      return {p, p.normalized(), phi / kTau};
    }
    case SurfaceShape::cylinder: {
      double theta = rng.uniform(0.0, kTau);
      double z = rng.uniform(-1.0, 1.0);
      Vec3 n{std::cos(theta), std::sin(theta), 0.0};
      return {{n.x, n.y, z}, n, theta / kTau};
    }
    case SurfaceShape::torus: {
      double u = rng.uniform(0.0, kTau);
      // Minor angle by rejection so sampling is area-uniform: surface area
      // density is proportional to R + r cos(v).
      double v;
      for (;;) {
        v = rng.uniform(0.0, kTau);
        double accept = (kTorusMajor + kTorusMinor * std::cos(v)) / (kTorusMajor + kTorusMinor);
        if (rng.uniform() < accept) break;
      }
      double ring = kTorusMajor + kTorusMinor * std::cos(v);
      Vec3 p{ring * std::cos(u), ring * std::sin(u), kTorusMinor * std::sin(v)};
      Vec3 n{std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v)};
      return {p, n, u / kTau};
    }
    case SurfaceShape::cube: {
      int face = static_cast<int>(rng.uniform_below(6));
      double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
      Vec3 p, n;
      switch (face) {
        case 0: p = {1, a, b};  n = {1, 0, 0};  break;
        case 1: p = {-1, a, b}; n = {-1, 0, 0}; break;
        case 2: p = {a, 1, b};  n = {0, 1, 0};  break;
        case 3: p = {a, -1, b}; n = {0, -1, 0}; break;
        case 4: p = {a, b, 1};  n = {0, 0, 1};  break;
        default: p = {a, b, -1}; n = {0, 0, -1}; break;
      }
      double u = (static_cast<double>(face) + (a + 1.0) / 2.0) / 6.0;
      return {p, n, u};
    }
  }
  throw invalid_spec("synthesize: unknown shape");
}

}  // namespace

double surface_bbox_diagonal(SurfaceShape shape) {
  switch (shape) {
    case SurfaceShape::plane:
      return std::sqrt(2.0);
    case SurfaceShape::sphere:
    case SurfaceShape::cylinder:
    case SurfaceShape::cube:
      return 2.0 * std::sqrt(3.0);
    case SurfaceShape::torus: {
      double w = 2.0 * (kTorusMajor + kTorusMinor);
      double h = 2.0 * kTorusMinor;
      return std::sqrt(2.0 * w * w + h * h);
    }
  }
  throw invalid_spec("surface_bbox_diagonal: unknown shape");
}

std::string to_string(SurfaceShape shape) {
  switch (shape) {
    case SurfaceShape::plane: return "plane";
    case SurfaceShape::sphere: return "sphere";
    case SurfaceShape::cylinder: return "cylinder";
    case SurfaceShape::torus: return "torus";
    case SurfaceShape::cube: return "cube";
  }
  return "?";
}

std::string to_string(DensityMode mode) {
  switch (mode) {
    case DensityMode::uniform: return "uniform";
    case DensityMode::stripes: return "stripes";
    case DensityMode::gradient: return "gradient";
  }
  return "?";
}

PointCloud synthesize(const SynthSpec& spec) {
  if (spec.n_points < 16)
    throw invalid_spec("synthesize: n_points must be >= 16, got " + std::to_string(spec.n_points));
  if (spec.noise_sigma < 0.0) throw invalid_spec("synthesize: noise_sigma must be >= 0");
  if (spec.stripe_bands < 1) throw invalid_spec("synthesize: stripe_bands must be >= 1");
  if (spec.gradient_floor < 0.0 || spec.gradient_floor > 1.0)
    throw invalid_spec("synthesize: gradient_floor must be in [0, 1]");

  // Independent streams: candidates, retention draws, and noise never
  // share state, so filtered clouds stay aligned with the uniform cloud of
  // the same seed.
  Rng sampler(mix_seed(spec.seed, 0));
  Rng retention(mix_seed(spec.seed, 1));
  Rng noise(mix_seed(spec.seed, 2));

  PointCloud cloud;
  cloud.positions.reserve(static_cast<std::size_t>(spec.n_points));
  cloud.gt_normals.reserve(static_cast<std::size_t>(spec.n_points));

  long attempts = 0;
  const long max_attempts = 1000L * static_cast<long>(spec.n_points) + 1000L;
  while (cloud.positions.size() < static_cast<std::size_t>(spec.n_points)) {
    if (++attempts > max_attempts)
      throw invalid_spec("synthesize: density filter rejects nearly all samples");
    SurfaceSample s = sample_surface(spec.shape, sampler);

    bool keep = true;
    switch (spec.density) {
      case DensityMode::uniform:
        break;
      case DensityMode::stripes: {
        int band = std::min(spec.stripe_bands - 1,
                            static_cast<int>(s.first_param * spec.stripe_bands));
        keep = band % 2 == 0;
        break;
      }
      case DensityMode::gradient: {
        double p = 1.0 + (spec.gradient_floor - 1.0) * s.first_param;
        keep = retention.uniform() < p;
        break;
      }
    }
    if (!keep) continue;

    Vec3 position = s.position;
    if (spec.noise_sigma > 0.0) {
      double stddev = spec.noise_sigma * surface_bbox_diagonal(spec.shape);
      position += noise.normal_vec3(stddev);
    }
    cloud.positions.push_back(position);
    cloud.gt_normals.push_back(s.normal);
  }

  cloud.name = to_string(spec.shape);
  if (spec.density != DensityMode::uniform) cloud.name += "_" + to_string(spec.density);
  if (spec.noise_sigma > 0.0) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), spec.noise_sigma,
                                   std::chars_format::scientific, 2);
    cloud.name += "_noise_" + std::string(buf, end);
  }
  cloud.update_bbox();
  return cloud;
}

}  // namespace normest
