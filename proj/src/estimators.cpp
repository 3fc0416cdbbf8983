#include "normest/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "normest/errors.hpp"
#include "normest/rng.hpp"

namespace normest {

namespace {

// Resolve the +-v ambiguity of an eigenvector deterministically: positive
// z-component, ties towards positive y, then positive x.
Vec3 fix_sign(const Vec3& v) {
  if (v.z != 0.0) return v.z > 0.0 ? v : -v;
  if (v.y != 0.0) return v.y > 0.0 ? v : -v;
  if (v.x < 0.0) return -v;
  return v;
}

}  // namespace

std::vector<Vec3> pca_estimate(std::span<const Vec3> canonical_points) {
  if (canonical_points.size() < 3)
    throw too_few_points("pca_estimate: need at least 3 points, got " +
                         std::to_string(canonical_points.size()));
  SymEig3 eig = eig_sym3(covariance(canonical_points));
  Vec3 normal = fix_sign(eig.eigenvectors[0]);
  return std::vector<Vec3>(canonical_points.size(), normal);
}

namespace {

// Cyclic Jacobi for small dense symmetric matrices (the jet normal
// equations are at most 10x10). a is row-major n x n and is destroyed;
// eigenvectors end up in the columns of v.
void jacobi_eig(int n, std::vector<double>& a, std::vector<double>& v,
                std::vector<double>& lambda) {
  v.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i * n + i)] = 1.0;

  auto at = [&](std::vector<double>& m, int r, int c) -> double& {
    return m[static_cast<std::size_t>(r * n + c)];
  };

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (int p = 0; p < n; ++p) {
      diag = std::max(diag, std::abs(at(a, p, p)));
      for (int q = p + 1; q < n; ++q) off += 2.0 * at(a, p, q) * at(a, p, q);
    }
    off = std::sqrt(off);
    double scale = std::max(diag, off);
    if (scale == 0.0 || off < 1e-12 * scale) break;

    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = at(a, p, q);
        if (apq == 0.0) continue;
        double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e154) {
          t = 1.0 / (2.0 * theta);
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;

        at(a, p, p) -= t * apq;
        at(a, q, q) += t * apq;
        at(a, p, q) = 0.0;
        at(a, q, p) = 0.0;
        for (int r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          double arp = at(a, r, p), arq = at(a, r, q);
          at(a, r, p) = at(a, p, r) = c * arp - s * arq;
          at(a, r, q) = at(a, q, r) = s * arp + c * arq;
        }
        for (int r = 0; r < n; ++r) {
          double vrp = at(v, r, p), vrq = at(v, r, q);
          at(v, r, p) = c * vrp - s * vrq;
          at(v, r, q) = s * vrp + c * vrq;
        }
      }
    }
  }

  lambda.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) lambda[static_cast<std::size_t>(i)] = at(a, i, i);
}

// Monomial exponents in graded-lexicographic order: 1, x, y, x^2, xy, ...
std::vector<std::pair<int, int>> monomials(int order) {
  std::vector<std::pair<int, int>> out;
  for (int d = 0; d <= order; ++d)
    for (int i = d; i >= 0; --i) out.emplace_back(i, d - i);
  return out;
}

}  // namespace

JetResult jet_fit(std::span<const Vec3> canonical_points, int order, JetWeighting weighting) {
  if (order < 1 || order > 3)
    throw invalid_spec("jet_fit: order must be in [1, 3], got " + std::to_string(order));
  const auto mono = monomials(order);
  const int n_coef = static_cast<int>(mono.size());
  const int n = static_cast<int>(canonical_points.size());
  if (n < n_coef)
    throw too_few_points("jet_fit: " + std::to_string(n) + " points cannot determine " +
                         std::to_string(n_coef) + " coefficients");

  // Height axis = minimum-variance direction of the inputs; fit happens in
  // the (u, v, w) basis regardless of how the caller oriented the patch.
  Vec3 c = centroid(canonical_points);
  SymEig3 eig = eig_sym3(covariance(canonical_points));
  Vec3 w_axis = fix_sign(eig.eigenvectors[0]);
  Vec3 u_axis = eig.eigenvectors[2];
  Vec3 v_axis = eig.eigenvectors[1];

  std::vector<double> xs(static_cast<std::size_t>(n)), ys(static_cast<std::size_t>(n)),
      zs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec3 d = canonical_points[static_cast<std::size_t>(i)] - c;
    xs[static_cast<std::size_t>(i)] = d.dot(u_axis);
    ys[static_cast<std::size_t>(i)] = d.dot(v_axis);
    zs[static_cast<std::size_t>(i)] = d.dot(w_axis);
  }

  // Row weights. The first input point is the patch center by the patch
  // ordering convention; weighting the fit towards it mirrors the
  // Gaussian-weighted loss the trained estimator sees.
  std::vector<double> row_w(static_cast<std::size_t>(n), 1.0);
  if (weighting == JetWeighting::gaussian_center && n > 1) {
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      dist[static_cast<std::size_t>(i)] =
          (canonical_points[static_cast<std::size_t>(i)] - canonical_points[0]).norm();
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    double r_half = sorted[(static_cast<std::size_t>(n) + 1) / 2 - 1];
    double sigma = r_half / 2.0;
    if (sigma > 0.0) {
      double inv = 1.0 / (2.0 * sigma * sigma);
      for (int i = 0; i < n; ++i)
        row_w[static_cast<std::size_t>(i)] =
            std::exp(-dist[static_cast<std::size_t>(i)] * dist[static_cast<std::size_t>(i)] * inv);
    }
  }

  // Weighted normal equations M = A^T W A, rhs = A^T W z.
  std::vector<double> m(static_cast<std::size_t>(n_coef) * static_cast<std::size_t>(n_coef), 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(n_coef), 0.0);
  std::vector<double> row(static_cast<std::size_t>(n_coef));
  for (int i = 0; i < n; ++i) {
    double x = xs[static_cast<std::size_t>(i)], y = ys[static_cast<std::size_t>(i)];
    for (int j = 0; j < n_coef; ++j)
      row[static_cast<std::size_t>(j)] =
          std::pow(x, mono[static_cast<std::size_t>(j)].first) *
          std::pow(y, mono[static_cast<std::size_t>(j)].second);
    double wi = row_w[static_cast<std::size_t>(i)];
    for (int r = 0; r < n_coef; ++r) {
      for (int col = r; col < n_coef; ++col)
        m[static_cast<std::size_t>(r * n_coef + col)] +=
            wi * row[static_cast<std::size_t>(r)] * row[static_cast<std::size_t>(col)];
      rhs[static_cast<std::size_t>(r)] += wi * row[static_cast<std::size_t>(r)] *
                                          zs[static_cast<std::size_t>(i)];
    }
  }
  for (int r = 0; r < n_coef; ++r)
    for (int col = 0; col < r; ++col)
      m[static_cast<std::size_t>(r * n_coef + col)] =
          m[static_cast<std::size_t>(col * n_coef + r)];

  std::vector<double> vecs, lambda;
  jacobi_eig(n_coef, m, vecs, lambda);
  double l_max = 0.0, l_min = std::numeric_limits<double>::infinity();
  for (double l : lambda) {
    l_max = std::max(l_max, l);
    l_min = std::min(l_min, l);
  }

  JetResult result;
  result.jet.order = order;

  // Raw condition gate; within it, a truncated pseudo-inverse absorbs the
  // near-singular band.
  if (!(l_max > 0.0) || l_min <= 0.0 || l_max / l_min > 1e12) {
    result.normals = pca_estimate(canonical_points);
    result.ill_conditioned = true;
    return result;
  }

  std::vector<double> coef(static_cast<std::size_t>(n_coef), 0.0);
  double cutoff = 1e-10 * l_max;
  for (int k = 0; k < n_coef; ++k) {
    if (lambda[static_cast<std::size_t>(k)] < cutoff) continue;
    double proj = 0.0;
    for (int r = 0; r < n_coef; ++r)
      proj += vecs[static_cast<std::size_t>(r * n_coef + k)] * rhs[static_cast<std::size_t>(r)];
    proj /= lambda[static_cast<std::size_t>(k)];
    for (int r = 0; r < n_coef; ++r)
      coef[static_cast<std::size_t>(r)] +=
          proj * vecs[static_cast<std::size_t>(r * n_coef + k)];
  }
  result.jet.coefficients = coef;

  result.normals.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = xs[static_cast<std::size_t>(i)], y = ys[static_cast<std::size_t>(i)];
    double fx = 0.0, fy = 0.0;
    for (int j = 0; j < n_coef; ++j) {
      auto [px, py] = mono[static_cast<std::size_t>(j)];
      double cj = coef[static_cast<std::size_t>(j)];
      if (px > 0) fx += cj * px * std::pow(x, px - 1) * std::pow(y, py);
      if (py > 0) fy += cj * py * std::pow(x, px) * std::pow(y, py - 1);
    }
    Vec3 world = u_axis * (-fx) + v_axis * (-fy) + w_axis;
    result.normals[static_cast<std::size_t>(i)] = world.normalized();
  }
  return result;
}

// --- toy network ---

namespace {

struct LayerDims {
  int in, out;
};

std::array<LayerDims, 5> layer_dims(const std::vector<std::uint32_t>& widths) {
  int d = static_cast<int>(widths[2]);
  return {LayerDims{static_cast<int>(widths[0]), static_cast<int>(widths[1])},
          LayerDims{static_cast<int>(widths[1]), d},
          LayerDims{2 * d, static_cast<int>(widths[3])},
          LayerDims{static_cast<int>(widths[3]), static_cast<int>(widths[4])},
          LayerDims{static_cast<int>(widths[4]), static_cast<int>(widths[5])}};
}

void check_architecture(const NetworkParams& p) {
  if (p.widths.size() != 6 || p.widths[0] != 3 || p.widths[5] != 3 || p.widths[2] == 0)
    throw shape_mismatch("network widths must be {3, h, d_fused, h2, h3, 3}");
  if (p.values.size() != p.expected_value_count())
    throw shape_mismatch("parameter count " + std::to_string(p.values.size()) +
                         " does not match architecture (" +
                         std::to_string(p.expected_value_count()) + " expected)");
}

}  // namespace

std::size_t NetworkParams::expected_value_count() const {
  if (widths.size() != 6) return 0;
  std::size_t total = 0;
  for (const auto& l : layer_dims(widths))
    total += static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out) +
             static_cast<std::size_t>(l.out);
  return total;
}

NetworkParams NetworkParams::zero(int d_fused) {
  NetworkParams p;
  p.widths = {3, 64, static_cast<std::uint32_t>(d_fused), 128, 64, 3};
  p.values.assign(p.expected_value_count(), 0.0);
  return p;
}

NetworkParams NetworkParams::init(int d_fused, std::uint64_t seed) {
  NetworkParams p = zero(d_fused);
  Rng rng(seed);
  std::size_t offset = 0;
  for (const auto& l : layer_dims(p.widths)) {
    double stddev = std::sqrt(2.0 / static_cast<double>(l.in));
    std::size_t w_count = static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out);
    for (std::size_t i = 0; i < w_count; ++i) p.values[offset + i] = rng.normal(0.0, stddev);
    offset += w_count + static_cast<std::size_t>(l.out);  // biases stay zero
  }
  return p;
}

std::vector<Vec3> neural_estimate(std::span<const Vec3> canonical_points,
                                  const NetworkParams& params) {
  check_architecture(params);
  if (canonical_points.empty()) return {};

  const auto dims = layer_dims(params.widths);
  const int n = static_cast<int>(canonical_points.size());
  const int d = params.d_fused();

  // Parameter slices in layer order: W row-major (out x in), then bias.
  std::array<const double*, 5> w{}, b{};
  std::size_t offset = 0;
  for (int l = 0; l < 5; ++l) {
    w[static_cast<std::size_t>(l)] = params.values.data() + offset;
    offset += static_cast<std::size_t>(dims[static_cast<std::size_t>(l)].in) *
              static_cast<std::size_t>(dims[static_cast<std::size_t>(l)].out);
    b[static_cast<std::size_t>(l)] = params.values.data() + offset;
    offset += static_cast<std::size_t>(dims[static_cast<std::size_t>(l)].out);
  }

  auto linear_relu = [](const std::vector<double>& in, int n_rows, int n_in, int n_out,
                        const double* W, const double* B, bool relu) {
    std::vector<double> out(static_cast<std::size_t>(n_rows) * static_cast<std::size_t>(n_out));
    for (int r = 0; r < n_rows; ++r) {
      const double* x = in.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n_in);
      double* y = out.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(n_out);
      for (int o = 0; o < n_out; ++o) {
        const double* row = W + static_cast<std::size_t>(o) * static_cast<std::size_t>(n_in);
        double acc = B[o];
        for (int i = 0; i < n_in; ++i) acc += row[i] * x[i];
        y[o] = relu && acc < 0.0 ? 0.0 : acc;
      }
    }
    return out;
  };

  std::vector<double> x(static_cast<std::size_t>(n) * 3);
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i) * 3 + 0] = canonical_points[static_cast<std::size_t>(i)].x;
    x[static_cast<std::size_t>(i) * 3 + 1] = canonical_points[static_cast<std::size_t>(i)].y;
    x[static_cast<std::size_t>(i) * 3 + 2] = canonical_points[static_cast<std::size_t>(i)].z;
  }

  auto h1 = linear_relu(x, n, dims[0].in, dims[0].out, w[0], b[0], true);
  auto h2 = linear_relu(h1, n, dims[1].in, dims[1].out, w[1], b[1], true);

  // Max-pool the per-point features into one global descriptor.
  std::vector<double> global(static_cast<std::size_t>(d), -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      global[static_cast<std::size_t>(j)] =
          std::max(global[static_cast<std::size_t>(j)],
                   h2[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) +
                      static_cast<std::size_t>(j)]);

  std::vector<double> fused(static_cast<std::size_t>(n) * static_cast<std::size_t>(2 * d));
  for (int i = 0; i < n; ++i) {
    double* dst = fused.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(2 * d);
    std::memcpy(dst, h2.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(d),
                static_cast<std::size_t>(d) * sizeof(double));
    std::memcpy(dst + d, global.data(), static_cast<std::size_t>(d) * sizeof(double));
  }

  auto d1 = linear_relu(fused, n, dims[2].in, dims[2].out, w[2], b[2], true);
  auto d2 = linear_relu(d1, n, dims[3].in, dims[3].out, w[3], b[3], true);
  auto raw = linear_relu(d2, n, dims[4].in, dims[4].out, w[4], b[4], false);

  std::vector<Vec3> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec3 v{raw[static_cast<std::size_t>(i) * 3 + 0], raw[static_cast<std::size_t>(i) * 3 + 1],
           raw[static_cast<std::size_t>(i) * 3 + 2]};
    double norm = v.norm();
    // epsilon guard: a vanishing raw output maps to a fixed unit vector so the
    // estimator always satisfies its unit-output contract.
    out[static_cast<std::size_t>(i)] = norm < 1e-12 ? Vec3{0.0, 0.0, 1.0} : v / norm;
  }
  return out;
}

// --- serialization ---

namespace {

template <typename T>
void write_le(std::ofstream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::ifstream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

void NetworkParams::save(const std::string& path) const {
  namespace fs = std::filesystem;
  const fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open for writing: " + tmp.string());
    os.write("E3NP", 4);
    write_le<std::uint32_t>(os, 1);  // version
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(widths.size()));
    for (std::uint32_t w : widths) write_le<std::uint32_t>(os, w);
    for (double v : values) write_le<double>(os, v);
    if (!os) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw io_error("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, fs::path(path), ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw io_error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

NetworkParams NetworkParams::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "E3NP", 4) != 0)
    throw io_error("bad magic in network params file " + path);
  std::uint32_t version = read_le<std::uint32_t>(is);
  if (version != 1)
    throw io_error("unsupported network params version " + std::to_string(version));
  std::uint32_t n_widths = read_le<std::uint32_t>(is);
  if (!is || n_widths != 6) throw io_error("unexpected width count in " + path);

  NetworkParams p;
  p.widths.resize(n_widths);
  for (auto& w : p.widths) w = read_le<std::uint32_t>(is);
  if (!is) throw io_error("truncated width block in " + path);

  std::size_t count = p.expected_value_count();
  if (count == 0) throw io_error("invalid architecture in " + path);
  p.values.resize(count);
  for (auto& v : p.values) v = read_le<double>(is);
  if (!is) throw io_error("truncated parameter block in " + path);
  // Reject trailing bytes so a corrupt file cannot round-trip silently.
  is.peek();
  if (!is.eof()) throw io_error("trailing bytes in " + path);
  return p;
}

}  // namespace normest
