#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "eqapprox/common/types.hpp"

namespace eqapprox {

// std::mt19937_64 with fixed conversions so sample sets can be reproduced
// outside C++: uniform() = (next >> 11) * 2^-53, normal() = Box-Muller on two
// consecutive uniforms (cosine branch only).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) { return next() % bound; }

  Vector uniform_vector(int size, double lo = 0.0, double hi = 1.0);
  Vector normal_vector(int size);
  // Uniform point of the closed Euclidean ball of the given radius.
  Vector ball_point(int dim, double radius = 1.0);
  PointCloud uniform_cloud(int d, int n, double lo = 0.0, double hi = 1.0);
  // Each column drawn uniformly from the ball of the given radius.
  PointCloud ball_cloud(int d, int n, double radius = 1.0);
  // Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign fixed).
  Matrix orthogonal(int d, bool special = false);
  std::vector<int> permutation(int n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace eqapprox
