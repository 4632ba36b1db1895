#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <vector>

#include "eqapprox/common/rng.hpp"
#include "eqapprox/net/graph_builder.hpp"
#include "eqapprox/net/network.hpp"
#include "eqapprox/sets/target.hpp"

namespace eqapprox {

// Ordered tuple of distinct point indices (0-based).
struct TupleIndex {
  std::vector<int> indices;

  int size() const { return static_cast<int>(indices.size()); }
  bool contains(int i) const;
};

// Residual of x after projecting out the span of orthonormal u.
Vector residual(const Vector& x, const std::vector<Vector>& u);

// Exact Gram-Schmidt on the tuple's points. Throws DomainError when a point
// is within `tol` of the span of its predecessors.
std::vector<Vector> gram_schmidt_oracle(const PointCloud& X, const TupleIndex& tuple, double tol = 1e-12);

// X in D(i, delta): every tuple point keeps a residual of norm >= delta.
bool membership_D(const PointCloud& X, const TupleIndex& tuple, double delta);

// Largest admissible delta for target accuracy eps:
// min{1, (1/2) (eps / (4 C (sqrt(nd)+1)^alpha))^{1/alpha}}.
double rigid_delta(double eps, int d, int n, double alpha, double holder_const);

// Accuracy of u~_j: eta_j = (delta/(20d))^{d+1-j}, j = 1..d.
std::vector<double> gs_accuracies(int d, double delta);

// Per-step tolerances of the Gram-Schmidt chain.
struct GSStep {
  double eta = 0.0;             // required |u~_j - u_j|
  double normalize_lower = 0.0; // lower norm bound fed to the normalizer
  double normalize_eps = 0.0;
  double residual_eps = 0.0;    // per product in p~ (j >= 2)
  double input_scale = 1.0;     // p~ is divided by this before normalizing
};
std::vector<GSStep> gs_plan(int d, double delta);

// p~(x; u~_1..u~_k) = x - sum_i <x,u~_i> u~_i with products of tolerance
// `eps` on [-M, M].
std::vector<Expr> residual_expr(GraphBuilder& g, const std::vector<Expr>& x,
                                const std::vector<std::vector<Expr>>& us, double eps, double M);

// Appends u~_{k+1} for point x given u~_1..u~_k.
std::vector<Expr> gs_step(GraphBuilder& g, const std::vector<Expr>& x, const std::vector<std::vector<Expr>>& us,
                          const GSStep& step, int d);

// u_nets[j-1] maps the tuple points (x_{i_1}, ..., x_{i_k}) in R^{dk} to u~_j.
struct GSNetworks {
  std::vector<ReluNetwork> u_nets;
  std::vector<double> eta;
  double delta = 0.0;
  int d = 0;
  int k = 0;
};
GSNetworks build_gs_networks(int d, int k, double delta);

struct StabilityResult {
  double measured = 0.0;
  double bound = 0.0;
  bool holds() const { return measured <= bound; }
};
// |p(x;u) - p(x;u~)| <= 3 k eta for |x| <= 1, eta = max_j |u_j - u~_j| <= 1.
StabilityResult stability_check_p(const Vector& x, const std::vector<Vector>& u, const std::vector<Vector>& u_tilde);
// |z/|z| - z~/|z~|| <= 4 beta / alpha with alpha = |z|, beta = |z - z~| < alpha/2.
StabilityResult stability_check_N(const Vector& z, const Vector& z_tilde);

struct RigidOptions {
  double coord_radius = 1.05;   // canonical coordinates are rescaled from [-R, R]
  double matrix_eps = 1e-7;     // per product in M(U~, X); capped at delta/(d sqrt(nd))
  bool ramp_completion = true;
  std::size_t max_tuples = 100000;
  std::size_t table_cap = 1000000;
};

struct RigidNodeInfo {
  std::vector<int> tuple;
  int free_coords = 0;
  int m = 0;
  std::size_t signatures = 0;
};

struct RigidBuild {
  ReluNetwork net = identity_network(1);  // input: point-major flattening of the d x n cloud
  Symmetry group = Symmetry::o_invariant;
  int d = 0;
  int n = 0;
  double epsilon = 0.0;
  double delta = 0.0;
  std::vector<RigidNodeInfo> nodes;

  double eval(const PointCloud& X) const;
};

// Approximates an O(d)-invariant f on clouds with columns in the unit ball.
// Signature tables of the inner approximants are realized from `samples`.
RigidBuild build_o_invariant(const TargetFunction& f, int d, int n, double eps, const std::vector<PointCloud>& samples,
                             const RigidOptions& options = {});
// E(d)-invariant f on clouds with columns in the ball of radius 1/2: the
// points are translated by the last one and the O(d) build runs on n-1 points.
RigidBuild build_e_invariant(const TargetFunction& f, int d, int n, double eps, const std::vector<PointCloud>& samples,
                             const RigidOptions& options = {});

nlohmann::json rigid_to_json(const RigidBuild& b);
RigidBuild rigid_from_json(const nlohmann::json& doc);

// Largest |f(QX) - f(X)| over samples and random orthogonal Q.
double rotation_gap(const std::function<double(const PointCloud&)>& f, const std::vector<PointCloud>& samples,
                    Rng& rng, int trials_per_sample);

}  // namespace eqapprox
