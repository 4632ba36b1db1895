#include "eqapprox/common/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace eqapprox {

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vector Rng::uniform_vector(int size, double lo, double hi) {
  Vector v(size);
  for (int i = 0; i < size; ++i) v[i] = uniform(lo, hi);
  return v;
}

Vector Rng::normal_vector(int size) {
  Vector v(size);
  for (int i = 0; i < size; ++i) v[i] = normal();
  return v;
}

Vector Rng::ball_point(int dim, double radius) {
  Vector g = normal_vector(dim);
  double norm = g.norm();
  while (norm == 0.0) {
    g = normal_vector(dim);
    norm = g.norm();
  }
  const double r = radius * std::pow(uniform(), 1.0 / dim);
  return g * (r / norm);
}

PointCloud Rng::uniform_cloud(int d, int n, double lo, double hi) {
  PointCloud X(d, n);
  for (int c = 0; c < n; ++c)
    for (int s = 0; s < d; ++s) X(s, c) = uniform(lo, hi);
  return X;
}

PointCloud Rng::ball_cloud(int d, int n, double radius) {
  PointCloud X(d, n);
  for (int c = 0; c < n; ++c) X.col(c) = ball_point(d, radius);
  return X;
}

Matrix Rng::orthogonal(int d, bool special) {
  Matrix G(d, d);
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r) G(r, c) = normal();
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Q = qr.householderQ();
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i)
    if (R(i, i) < 0) Q.col(i) = -Q.col(i);
  if (special && Q.determinant() < 0) Q.col(0) = -Q.col(0);
  return Q;
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

}  // namespace eqapprox
