#pragma once

#include <vector>

#include "eqapprox/net/graph_builder.hpp"

// Gadget constructions expressed on a GraphBuilder. Each returns expressions
// over the builder's units, so gadgets compose without materialising
// intermediate networks. The *_network functions in gadgets.hpp wrap these.
namespace eqapprox::ops {

// relu(e) + relu(-e).
Expr abs(GraphBuilder& g, const Expr& e);
// lo + relu(e - lo) - relu(e - hi); exact on [lo, hi] when lo = 0.
Expr clamp(GraphBuilder& g, const Expr& e, double lo, double hi);
// relu(1 - relu(1 - relu(e))) as a single unit: exactly 0 for e <= 0 and
// exactly 1 for e >= 1.
Expr step_unit(GraphBuilder& g, const Expr& e);
// Trapezoid gate: 0 below a0, ramp to 1 on [a0,a1], 1 on [a1,b0], ramp to 0
// on [b0,b1], 0 above. Held by one unit, exact 0/1 off the ramps.
Expr trapezoid(GraphBuilder& g, const Expr& x, double a0, double a1, double b0, double b1);
// Piecewise linear threshold: 0 for x <= a, 1 for x >= b, linear between.
// Returned as one unit.
Expr ramp(GraphBuilder& g, const Expr& x, double a, double b);
Expr max2(GraphBuilder& g, const Expr& a, const Expr& b);
Expr min2(GraphBuilder& g, const Expr& a, const Expr& b);

// Hat function phi_k with plateau half-width (1-delta)/2 and support
// half-width (1+delta)/2. Returns 1 - u where u = relu(1 - t) is a unit;
// `u_out` receives u when non-null.
Expr hat(GraphBuilder& g, const Expr& x, double k, double delta, Expr* u_out = nullptr);

// Sawtooth stage count so that 6 M^2 4^{-(S+1)} <= eps.
int product_stages(double eps, double M);
// Stage count for x^2 on [-M, M] with error M^2 4^{-(S+1)} <= eps.
int square_stages(double eps, double M);

// f_S(t) = t - sum_s g_s(t)/4^s for t >= 0 (t given as a non-negative expr).
Expr square_unit_interval(GraphBuilder& g, const Expr& t, int stages);
// x^2 on [-M, M] to accuracy eps.
Expr square(GraphBuilder& g, const Expr& x, double eps, double M);
// x*y on [-M, M]^2 to accuracy eps; exactly 0 when an argument evaluates to
// exactly 0 through zero-valued units.
Expr product(GraphBuilder& g, const Expr& x, const Expr& y, double eps, double M);

struct PowerPlan {
  double alpha = 0.5;
  double eps = 1e-2;
  double lower = 0.0;     // guaranteed accuracy on [lower, 1]
  double constant = 1.0;  // sup error <= constant * eps
  int taylor_degree = 0;
  int gate_min = -1;      // dyadic gate range n in [gate_min, gate_max]
  int gate_max = 0;
  double taylor_eps = 0;  // tolerance of each product in the Taylor chain
  double gate_eps = 0;    // tolerance of each gate product
  double final_eps = 0;   // tolerance of the scale product
};
PowerPlan plan_power(double alpha, double eps, double lower = 0.0);
// x^alpha for x in [lower, 1] (inputs are clamped to [0, 1]).
Expr power(GraphBuilder& g, const Expr& x, const PowerPlan& plan);

// Newton iteration count used by the reciprocal.
int newton_iterations(double eps, double delta);
// 1/s for s in [lo, hi] to accuracy eps (input clamped to [lo, hi]).
Expr reciprocal(GraphBuilder& g, const Expr& s, double lo, double hi, double eps);
// z/s for z in [-M, M], s in [delta, M].
Expr divide(GraphBuilder& g, const Expr& z, const Expr& s, double eps, double delta, double M);
// x/|x| for delta <= |x| <= 1, Euclidean error <= eps.
std::vector<Expr> normalize(GraphBuilder& g, const std::vector<Expr>& x, double delta, double eps);
// |x| for |x| <= M with error <= eps (no lower bound on |x|).
Expr euclidean_norm(GraphBuilder& g, const std::vector<Expr>& x, double M, double eps);

// Exact median of an odd number of values via an odd-even transposition
// sort (exact whenever the compare-exchange arithmetic is exact, e.g. on
// integers and dyadic grids).
Expr median(GraphBuilder& g, const std::vector<Expr>& values);

// Digits (tau_0, ..., tau_{digits-1}) of y = sum tau_i base^i with
// 0 <= tau_i <= max_digit.
std::vector<Expr> bit_extract(GraphBuilder& g, const Expr& y, int base, int digits, int max_digit);

// One-hot interpolant: exact at keys, flat within gap/4 of each key, linear
// between, clamped outside. Keys must be sorted and pairwise >= gap apart.
Expr lookup(GraphBuilder& g, const Expr& x, const std::vector<double>& keys,
            const std::vector<double>& values, double gap);

// Lookup keyed by a vector of integer lanes. Each lane is mapped to its rank
// among the realised values, the ranks are packed in mixed radix (compressed
// by an intermediate lookup whenever the packed range would exceed 2^50),
// and the packed key is looked up.
Expr vector_lookup(GraphBuilder& g, const std::vector<Expr>& lanes,
                   const std::vector<std::vector<double>>& keys, const std::vector<double>& values);

}  // namespace eqapprox::ops
