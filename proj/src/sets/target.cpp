#include "eqapprox/sets/target.hpp"

#include <algorithm>
#include <cmath>

#include "eqapprox/common/error.hpp"
#include "eqapprox/common/rng.hpp"

namespace eqapprox {

Partition::Partition(int n, std::vector<std::vector<int>> blocks) : n_(n), blocks_(std::move(blocks)) {
  if (n <= 0) throw DomainError("partition needs n >= 1");
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  for (const auto& b : blocks_) {
    if (b.empty()) throw DomainError("partition blocks must be non-empty");
    for (int i : b) {
      if (i < 0 || i >= n) throw DomainError("partition index " + std::to_string(i) + " out of range");
      if (seen[static_cast<std::size_t>(i)]++) throw DomainError("partition blocks overlap at " + std::to_string(i));
    }
  }
  for (int i = 0; i < n; ++i)
    if (!seen[static_cast<std::size_t>(i)]) throw DomainError("partition misses index " + std::to_string(i));
}

Partition Partition::full(int n) {
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  return Partition(n, {all});
}

Partition Partition::singletons(int n) {
  std::vector<std::vector<int>> b;
  for (int i = 0; i < n; ++i) b.push_back({i});
  return Partition(n, b);
}

int Partition::max_block_size() const {
  std::size_t m = 0;
  for (const auto& b : blocks_) m = std::max(m, b.size());
  return static_cast<int>(m);
}

std::vector<int> Partition::block_of() const {
  std::vector<int> out(static_cast<std::size_t>(n_), -1);
  for (std::size_t j = 0; j < blocks_.size(); ++j)
    for (int i : blocks_[j]) out[static_cast<std::size_t>(i)] = static_cast<int>(j);
  return out;
}

std::vector<int> Partition::random_element(Rng& rng) const {
  std::vector<int> sigma(static_cast<std::size_t>(n_));
  for (const auto& b : blocks_) {
    const std::vector<int> p = rng.permutation(static_cast<int>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i) sigma[static_cast<std::size_t>(b[i])] = b[static_cast<std::size_t>(p[i])];
  }
  return sigma;
}

std::string to_string(Symmetry s) {
  switch (s) {
    case Symmetry::sp_invariant: return "sp_invariant";
    case Symmetry::equivariant: return "equivariant";
    case Symmetry::o_invariant: return "o_invariant";
    case Symmetry::e_invariant: return "e_invariant";
    case Symmetry::none: return "none";
  }
  return "none";
}

Symmetry parse_symmetry(const std::string& s) {
  for (Symmetry v : {Symmetry::sp_invariant, Symmetry::equivariant, Symmetry::o_invariant, Symmetry::e_invariant,
                     Symmetry::none})
    if (to_string(v) == s) return v;
  throw ParseError("unknown symmetry '" + s + "'");
}

double TargetFunction::omega_linf(double t, int dim) const {
  const double scale = norm == Norm::l2 ? std::sqrt(static_cast<double>(dim)) : 1.0;
  return holder_const * std::pow(scale * t, alpha);
}

double TargetFunction::omega_l2(double t, int /*dim*/) const {
  // |x|_inf <= |x|_2, so a sup-norm modulus bounds the Euclidean one.
  return holder_const * std::pow(t, alpha);
}

PointCloud permute_points(const PointCloud& X, const std::vector<int>& sigma) {
  if (static_cast<Eigen::Index>(sigma.size()) != X.cols()) throw DimensionError("permutation length mismatch");
  PointCloud Y(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) Y.col(i) = X.col(sigma[static_cast<std::size_t>(i)]);
  return Y;
}

double sp_invariance_gap(const TargetFunction& f, const Partition& p, const std::vector<PointCloud>& samples,
                         Rng& rng, int trials_per_sample) {
  double gap = 0.0;
  for (const PointCloud& X : samples) {
    const double fx = f.eval(X);
    for (int t = 0; t < trials_per_sample; ++t)
      gap = std::max(gap, std::fabs(fx - f.eval(permute_points(X, p.random_element(rng)))));
  }
  return gap;
}

}  // namespace eqapprox
