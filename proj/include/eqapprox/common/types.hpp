#pragma once

#include <Eigen/Dense>

namespace eqapprox {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// d x n matrix whose columns are the points of the cloud.
using PointCloud = Eigen::MatrixXd;

// Point-major flattening: (x_1(1..d), x_2(1..d), ...). This is the input
// layout of every network that consumes a whole cloud.
inline Vector flatten(const PointCloud& X) {
  return Eigen::Map<const Vector>(X.data(), X.size());
}

inline PointCloud unflatten(const Vector& v, int d) {
  const int n = static_cast<int>(v.size()) / d;
  return Eigen::Map<const PointCloud>(v.data(), d, n);
}

}  // namespace eqapprox
