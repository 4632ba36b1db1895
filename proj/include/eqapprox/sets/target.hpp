#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eqapprox/common/types.hpp"

namespace eqapprox {

class Rng;

// Disjoint blocks of point indices (0-based) covering {0..n-1}.
class Partition {
 public:
  Partition() = default;
  Partition(int n, std::vector<std::vector<int>> blocks);

  static Partition full(int n);
  static Partition singletons(int n);

  int n() const { return n_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  const std::vector<std::vector<int>>& blocks() const { return blocks_; }
  const std::vector<int>& block(int j) const { return blocks_[static_cast<std::size_t>(j)]; }
  int max_block_size() const;
  // Block id of every point.
  std::vector<int> block_of() const;

  // Random permutation that maps every block onto itself, as a list
  // sigma with (sigma X)_i = X_{sigma[i]}.
  std::vector<int> random_element(Rng& rng) const;

 private:
  int n_ = 0;
  std::vector<std::vector<int>> blocks_;
};

enum class Symmetry { sp_invariant, equivariant, o_invariant, e_invariant, none };
enum class Norm { linf, l2 };

std::string to_string(Symmetry s);
Symmetry parse_symmetry(const std::string& s);

// A black-box target with Hölder data: omega(f, t) <= holder_const * t^alpha
// where t is measured in `norm` over all n*d coordinates.
struct TargetFunction {
  std::string name;
  std::function<double(const PointCloud&)> eval;
  // Per-point outputs, for equivariant targets.
  std::function<Vector(const PointCloud&)> eval_vector;
  double alpha = 1.0;
  double holder_const = 1.0;
  Norm norm = Norm::linf;
  Symmetry symmetry = Symmetry::none;

  // Modulus bound in the sup norm over `dim` coordinates.
  double omega_linf(double t, int dim) const;
  // Modulus bound in the Euclidean norm over `dim` coordinates.
  double omega_l2(double t, int dim) const;
};

// Largest |f(X) - f(sigma X)| over random S_P elements and the given clouds.
double sp_invariance_gap(const TargetFunction& f, const Partition& p, const std::vector<PointCloud>& samples,
                         Rng& rng, int trials_per_sample = 1);

PointCloud permute_points(const PointCloud& X, const std::vector<int>& sigma);

}  // namespace eqapprox
