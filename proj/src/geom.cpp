#include "normest/geom.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "normest/errors.hpp"

namespace normest {

Vec3 centroid(std::span<const Vec3> points) {
  if (points.empty()) throw empty_input("centroid: no points");
  Vec3 sum;
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

Mat3 covariance(std::span<const Vec3> points) {
  if (points.empty()) throw empty_input("covariance: no points");
  Vec3 t = centroid(points);
  Mat3 c;
  for (const auto& p : points) {
    Vec3 d = p - t;
    c(0, 0) += d.x * d.x;
    c(0, 1) += d.x * d.y;
    c(0, 2) += d.x * d.z;
    c(1, 1) += d.y * d.y;
    c(1, 2) += d.y * d.z;
    c(2, 2) += d.z * d.z;
  }
  double inv = 1.0 / static_cast<double>(points.size());
  c(0, 0) *= inv;
  c(0, 1) *= inv;
  c(0, 2) *= inv;
  c(1, 1) *= inv;
  c(1, 2) *= inv;
  c(2, 2) *= inv;
  c(1, 0) = c(0, 1);
  c(2, 0) = c(0, 2);
  c(2, 1) = c(1, 2);
  return c;
}

namespace {

// One Jacobi rotation zeroing a(p,q), applied symmetrically and accumulated
// into the eigenvector matrix v.
void jacobi_rotate(double a[3][3], double v[3][3], int p, int q) {
  double apq = a[p][q];
  if (apq == 0.0) return;
  double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
  double t;
  if (std::abs(theta) > 1e154) {
    t = 1.0 / (2.0 * theta);  // avoid theta^2 overflow
  } else {
    t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    if (theta < 0.0) t = -t;
  }
  double c = 1.0 / std::sqrt(t * t + 1.0);
  double s = t * c;

  double app = a[p][p], aqq = a[q][q];
  a[p][p] = app - t * apq;
  a[q][q] = aqq + t * apq;
  a[p][q] = 0.0;
  a[q][p] = 0.0;
  int r = 3 - p - q;  // the remaining index
  double arp = a[r][p], arq = a[r][q];
  a[r][p] = a[p][r] = c * arp - s * arq;
  a[r][q] = a[q][r] = s * arp + c * arq;

  for (int i = 0; i < 3; ++i) {
    double vip = v[i][p], viq = v[i][q];
    v[i][p] = c * vip - s * viq;
    v[i][q] = s * vip + c * viq;
  }
}

double off_diagonal_norm(const double a[3][3]) {
  return std::sqrt(2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]));
}

}  // namespace

SymEig3 eig_sym3(const Mat3& m) {
  if (!m.finite()) throw non_symmetric("eig_sym3: non-finite entries");
  double asym = std::max({std::abs(m(0, 1) - m(1, 0)), std::abs(m(0, 2) - m(2, 0)),
                          std::abs(m(1, 2) - m(2, 1))});
  if (asym > 1e-9) throw non_symmetric("eig_sym3: asymmetry " + std::to_string(asym));

  // Work on the symmetrized copy so that the 1e-9 tolerance does not leak
  // into the result.
  double a[3][3] = {{m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0))},
                    {0.5 * (m(0, 1) + m(1, 0)), m(1, 1), 0.5 * (m(1, 2) + m(2, 1))},
                    {0.5 * (m(0, 2) + m(2, 0)), 0.5 * (m(1, 2) + m(2, 1)), m(2, 2)}};
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  for (int sweep = 0; sweep < 64; ++sweep) {
    double scale = std::max({std::abs(a[0][0]), std::abs(a[1][1]), std::abs(a[2][2]),
                             off_diagonal_norm(a)});
    if (scale == 0.0 || off_diagonal_norm(a) < 1e-12 * scale) break;
    jacobi_rotate(a, v, 0, 1);
    jacobi_rotate(a, v, 0, 2);
    jacobi_rotate(a, v, 1, 2);
  }

  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a[i][i] < a[j][j]; });

  SymEig3 out;
  for (int k = 0; k < 3; ++k) {
    int i = order[k];
    out.eigenvalues[k] = a[i][i];
    Vec3 col{v[0][i], v[1][i], v[2][i]};
    out.eigenvectors[k] = col.normalized();
  }
  return out;
}

}  // namespace normest
