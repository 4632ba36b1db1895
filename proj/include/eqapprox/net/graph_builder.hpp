#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "eqapprox/net/network.hpp"

namespace eqapprox {

// An affine combination of the units that live on one level of a
// GraphBuilder. Level 0 holds the network inputs; every unit on level l >= 1
// is relu(affine combination of level l-1 units).
struct Expr {
  int level = 0;
  std::vector<std::pair<int, double>> terms;  // (unit id, coefficient), ids ascending
  double offset = 0.0;
  bool nonneg = false;  // value known to be >= 0; lifted with one relu instead of a pair

  bool is_constant() const { return terms.empty(); }
};

// Wires sub-networks and scalar operations into one layered ReluNetwork.
// Values on different levels are synchronised by carrying them upward, with
// a single relu when the value is known to be non-negative and a
// relu(x) - relu(-x) pair otherwise. Affine operations never create units.
class GraphBuilder {
 public:
  explicit GraphBuilder(int input_dim);

  int input_dim() const { return input_dim_; }
  Expr input(int i) const;
  std::vector<Expr> inputs() const;
  static Expr constant(double c);

  Expr relu(const Expr& e);
  Expr lift(const Expr& e, int level);
  // Same value held by a single unit with coefficient 1 (requires nonneg) or
  // a fresh pair; useful before feeding wide fan-out layers.
  Expr materialize(const Expr& e);

  Expr combine(const std::vector<std::pair<double, Expr>>& parts, double offset = 0.0);
  Expr add(const Expr& a, const Expr& b) { return combine({{1.0, a}, {1.0, b}}); }
  Expr sub(const Expr& a, const Expr& b) { return combine({{1.0, a}, {-1.0, b}}); }
  Expr scale(const Expr& a, double c) { return combine({{c, a}}); }
  Expr shift(const Expr& a, double c) { return combine({{1.0, a}}, c); }
  Expr sum(const std::vector<Expr>& parts);
  static Expr assume_nonneg(Expr e) {
    e.nonneg = true;
    return e;
  }

  std::vector<Expr> apply(const ReluNetwork& net, const std::vector<Expr>& in);

  // Prunes units that do not reach the outputs.
  ReluNetwork build(const std::vector<Expr>& outputs);

  static int max_level(const std::vector<Expr>& exprs);
  std::size_t unit_count() const { return units_.size(); }

 private:
  struct Unit {
    int level;
    int count;
    std::int64_t begin;
    double bias;
  };
  struct LiftKey {
    int level;
    double offset;
    bool nonneg;
    std::vector<std::pair<int, double>> terms;
    bool operator<(const LiftKey& o) const {
      if (level != o.level) return level < o.level;
      if (offset != o.offset) return offset < o.offset;
      if (nonneg != o.nonneg) return nonneg < o.nonneg;
      return terms < o.terms;
    }
  };

  int new_unit(int level, const std::vector<std::pair<int, double>>& terms, double bias);
  Expr lift_one(const Expr& e);

  int input_dim_;
  std::vector<Unit> units_;
  std::vector<std::int32_t> term_ids_;
  std::vector<double> term_coefs_;
  std::map<LiftKey, Expr> lift_cache_;
};

}  // namespace eqapprox
