#include <algorithm>
#include <array>
#include <cmath>

#include "doctest.h"
#include "normest/errors.hpp"
#include "normest/geom.hpp"
#include "normest/rng.hpp"
#include "test_support.hpp"

using namespace normest;

namespace {

// Closed-form eigenvalues of a symmetric 3x3 matrix (trigonometric method),
// ascending. Independent oracle for the Jacobi solver.
std::array<double, 3> eig3_closed_form(const Mat3& A) {
  double p1 = A(0, 1) * A(0, 1) + A(0, 2) * A(0, 2) + A(1, 2) * A(1, 2);
  if (p1 == 0.0) {
    std::array<double, 3> d{A(0, 0), A(1, 1), A(2, 2)};
    std::sort(d.begin(), d.end());
    return d;
  }
  double q = (A(0, 0) + A(1, 1) + A(2, 2)) / 3.0;
  double p2 = (A(0, 0) - q) * (A(0, 0) - q) + (A(1, 1) - q) * (A(1, 1) - q) +
              (A(2, 2) - q) * (A(2, 2) - q) + 2.0 * p1;
  double p = std::sqrt(p2 / 6.0);
  Mat3 B = (A - Mat3::identity() * q) * (1.0 / p);
  double r = std::clamp(B.det() / 2.0, -1.0, 1.0);
  double phi = std::acos(r) / 3.0;
  double hi = q + 2.0 * p * std::cos(phi);
  double lo = q + 2.0 * p * std::cos(phi + 2.0 * 3.14159265358979323846 / 3.0);
  double mid = 3.0 * q - hi - lo;
  return {lo, mid, hi};
}

Mat3 reconstruct(const SymEig3& e) {
  Mat3 sum;
  for (int k = 0; k < 3; ++k) {
    const Vec3& v = e.eigenvectors[k];
    Mat3 outer{{v.x * v.x, v.x * v.y, v.x * v.z, v.y * v.x, v.y * v.y, v.y * v.z, v.z * v.x,
                v.z * v.y, v.z * v.z}};
    sum = sum + outer * e.eigenvalues[k];
  }
  return sum;
}

}  // namespace

TEST_CASE("centroid of two points is the midpoint") {
  std::vector<Vec3> pts{{0, 0, 0}, {2, 0, 0}};
  Vec3 c = centroid(pts);
  CHECK(c.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.y == doctest::Approx(0.0));
  CHECK(c.z == doctest::Approx(0.0));
}

TEST_CASE("centroid of a singleton is the point") {
  std::vector<Vec3> pts{{1, 2, 3}};
  Vec3 c = centroid(pts);
  CHECK(c.x == 1.0);
  CHECK(c.y == 2.0);
  CHECK(c.z == 3.0);
}

TEST_CASE("centroid of empty input throws") {
  std::vector<Vec3> pts;
  CHECK_THROWS_AS(centroid(pts), empty_input);
}

TEST_CASE("centroid of 1000 uniform cube samples is near the center and matches a hand sum") {
  Rng rng(12345);
  std::vector<Vec3> pts;
  for (int i = 0; i < 1000; ++i)
    pts.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  Vec3 c = centroid(pts);

  Vec3 hand;
  for (const Vec3& p : pts) hand += p;
  hand = hand / 1000.0;

  CHECK(std::abs(c.x - hand.x) <= 1e-12);
  CHECK(std::abs(c.y - hand.y) <= 1e-12);
  CHECK(std::abs(c.z - hand.z) <= 1e-12);
  CHECK(std::abs(c.x - 0.5) < 0.05);
  CHECK(std::abs(c.y - 0.5) < 0.05);
  CHECK(std::abs(c.z - 0.5) < 0.05);
}

TEST_CASE("covariance of identical points is the zero matrix") {
  std::vector<Vec3> pts(5, Vec3{1, 2, 3});
  Mat3 C = covariance(pts);
  for (double v : C.m) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("covariance of z=0 samples has zero third row and column") {
  Rng rng(7);
  std::vector<Vec3> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0});
  Mat3 C = covariance(pts);
  for (int i = 0; i < 3; ++i) {
    CHECK(C(2, i) == doctest::Approx(0.0));
    CHECK(C(i, 2) == doctest::Approx(0.0));
  }
}

TEST_CASE("covariance of four axis points matches the hand-summed diagonal") {
  // centroid is the origin; (1/4)(2*1, 2*4, 0) = diag(1/2, 2, 0)
  std::vector<Vec3> pts{{1, 0, 0}, {-1, 0, 0}, {0, 2, 0}, {0, -2, 0}};
  Mat3 C = covariance(pts);
  CHECK(C(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(C(1, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(C(2, 2) == doctest::Approx(0.0));
  CHECK(C(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("eigendecomposition of the identity gives unit eigenvalues and a reconstructing basis") {
  SymEig3 e = eig_sym3(Mat3::identity());
  for (int k = 0; k < 3; ++k) CHECK(e.eigenvalues[k] == doctest::Approx(1.0).epsilon(1e-10));
  Mat3 R = reconstruct(e);
  CHECK((R - Mat3::identity()).frobenius_norm() <= 1e-9);
}

TEST_CASE("eigendecomposition of diag(3,1,2) sorts ascending with axis eigenvectors") {
  Mat3 D;
  D(0, 0) = 3;
  D(1, 1) = 1;
  D(2, 2) = 2;
  SymEig3 e = eig_sym3(D);
  CHECK(e.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(e.eigenvalues[1] == doctest::Approx(2.0));
  CHECK(e.eigenvalues[2] == doctest::Approx(3.0));
  CHECK(std::abs(e.eigenvectors[0].y) == doctest::Approx(1.0));
  CHECK(std::abs(e.eigenvectors[1].z) == doctest::Approx(1.0));
  CHECK(std::abs(e.eigenvectors[2].x) == doctest::Approx(1.0));
}

TEST_CASE("smallest-variance eigenvector of planar samples is the plane normal") {
  Rng rng(3);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0});
  SymEig3 e = eig_sym3(covariance(pts));
  CHECK(std::abs(e.eigenvectors[0].z) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("jacobi eigenvalues match the closed-form cubic roots on random symmetric matrices") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    Mat3 A;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        double v = rng.uniform(-2.0, 2.0);
        A(i, j) = v;
        A(j, i) = v;
      }
    SymEig3 e = eig_sym3(A);
    std::array<double, 3> oracle = eig3_closed_form(A);
    double scale = std::max({std::abs(oracle[0]), std::abs(oracle[2]), 1.0});
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(e.eigenvalues[k] - oracle[k]) <= 1e-8 * scale);

    // ascending order, orthonormal basis, exact reconstruction
    CHECK(e.eigenvalues[0] <= e.eigenvalues[1] + 1e-12);
    CHECK(e.eigenvalues[1] <= e.eigenvalues[2] + 1e-12);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double d = e.eigenvectors[a].dot(e.eigenvectors[b]);
        CHECK(std::abs(d - (a == b ? 1.0 : 0.0)) <= 1e-9);
      }
    CHECK((reconstruct(e) - A).frobenius_norm() <= 1e-8);
  }
}

TEST_CASE("eigendecomposition rejects a non-symmetric matrix") {
  Mat3 A = Mat3::identity();
  A(0, 1) = 1.0;  // A(1,0) stays 0
  CHECK_THROWS_AS(eig_sym3(A), non_symmetric);
}

TEST_CASE("rotating a point set rotates its covariance eigenvectors") {
  Rng rng(21);
  std::vector<Vec3> pts = testutil::random_blob(rng, 300);
  Mat3 R = testutil::random_rotation(rng);
  std::vector<Vec3> rotated = testutil::apply(R, Vec3{0.3, -0.7, 2.0}, pts);

  SymEig3 a = eig_sym3(covariance(pts));
  SymEig3 b = eig_sym3(covariance(rotated));
  for (int k = 0; k < 3; ++k) {
    CHECK(a.eigenvalues[k] == doctest::Approx(b.eigenvalues[k]).epsilon(1e-9));
    CHECK(testutil::angle_unoriented(R * a.eigenvectors[k], b.eigenvectors[k]) <= 1e-6);
  }
}
