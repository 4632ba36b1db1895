#include "eqapprox/rigid/rigid_builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "eqapprox/common/error.hpp"
#include "eqapprox/gadgets/ops.hpp"
#include "eqapprox/net/json_io.hpp"
#include "eqapprox/sets/set_builder.hpp"

namespace eqapprox {

bool TupleIndex::contains(int i) const { return std::find(indices.begin(), indices.end(), i) != indices.end(); }

Vector residual(const Vector& x, const std::vector<Vector>& u) {
  Vector p = x;
  for (const Vector& v : u) p -= x.dot(v) * v;
  return p;
}

std::vector<Vector> gram_schmidt_oracle(const PointCloud& X, const TupleIndex& tuple, double tol) {
  std::vector<Vector> u;
  for (int i : tuple.indices) {
    if (i < 0 || i >= X.cols()) throw DomainError("tuple index out of range");
    // Two passes keep the basis orthonormal to rounding.
    Vector p = residual(X.col(i), u);
    p = residual(p, u);
    const double r = p.norm();
    if (r <= tol) throw DomainError("tuple points are linearly dependent");
    u.push_back(p / r);
  }
  return u;
}

bool membership_D(const PointCloud& X, const TupleIndex& tuple, double delta) {
  std::vector<Vector> u;
  for (int i : tuple.indices) {
    const Vector p = residual(X.col(i), u);
    const double r = p.norm();
    if (r < delta) return false;
    u.push_back(p / r);
  }
  return true;
}

double rigid_delta(double eps, int d, int n, double alpha, double holder_const) {
  if (!(eps > 0.0) || !(alpha > 0.0 && alpha <= 1.0) || !(holder_const > 0.0))
    throw DomainError("rigid_delta needs eps > 0, alpha in (0,1], C > 0");
  const double s = std::sqrt(static_cast<double>(n * d)) + 1.0;
  const double t = 0.5 * std::pow(eps / (4.0 * holder_const * std::pow(s, alpha)), 1.0 / alpha);
  return std::min(1.0, t);
}

std::vector<double> gs_accuracies(int d, double delta) {
  std::vector<double> eta;
  for (int j = 1; j <= d; ++j) eta.push_back(std::pow(delta / (20.0 * d), d + 1 - j));
  return eta;
}

std::vector<GSStep> gs_plan(int d, double delta) {
  if (d < 1) throw DomainError("dimension must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("delta must lie in (0, 1]");
  const std::vector<double> eta = gs_accuracies(d, delta);
  const double spread = 1.01 * d + std::sqrt(static_cast<double>(d));
  std::vector<GSStep> plan;
  for (int j = 1; j <= d; ++j) {
    GSStep s;
    s.eta = eta[static_cast<std::size_t>(j - 1)];
    if (j == 1) {
      s.normalize_lower = delta;
      s.normalize_eps = s.eta;
    } else {
      const double prev = eta[static_cast<std::size_t>(j - 2)];
      s.residual_eps = 0.9 * prev / spread;
      s.input_scale = 1.1;
      s.normalize_lower = 0.72 * delta;
      s.normalize_eps = (j - 1) * prev / delta;
    }
    plan.push_back(s);
  }
  return plan;
}

std::vector<Expr> residual_expr(GraphBuilder& g, const std::vector<Expr>& x,
                                const std::vector<std::vector<Expr>>& us, double eps, double M) {
  const std::size_t d = x.size();
  std::vector<std::vector<std::pair<double, Expr>>> parts(d);
  for (std::size_t s = 0; s < d; ++s) parts[s].push_back({1.0, x[s]});
  for (const auto& u : us) {
    if (u.size() != d) throw DimensionError("basis vector length differs from the point");
    std::vector<Expr> terms;
    for (std::size_t s = 0; s < d; ++s) terms.push_back(ops::product(g, x[s], u[s], eps, M));
    const Expr c = g.sum(terms);
    for (std::size_t s = 0; s < d; ++s) parts[s].push_back({-1.0, ops::product(g, c, u[s], eps, M)});
  }
  std::vector<Expr> out;
  for (std::size_t s = 0; s < d; ++s) out.push_back(g.combine(parts[s]));
  return out;
}

std::vector<Expr> gs_step(GraphBuilder& g, const std::vector<Expr>& x, const std::vector<std::vector<Expr>>& us,
                          const GSStep& step, int d) {
  if (static_cast<int>(x.size()) != d) throw DimensionError("point length differs from d");
  if (us.empty()) return ops::normalize(g, x, step.normalize_lower, step.normalize_eps);
  std::vector<Expr> p = residual_expr(g, x, us, step.residual_eps, 1.25);
  for (Expr& e : p) e = g.scale(e, 1.0 / step.input_scale);
  return ops::normalize(g, p, step.normalize_lower, step.normalize_eps);
}

GSNetworks build_gs_networks(int d, int k, double delta) {
  if (k < 1 || k > d) throw DomainError("tuple length must lie in 1..d");
  const std::vector<GSStep> plan = gs_plan(d, delta);
  GSNetworks out;
  out.d = d;
  out.k = k;
  out.delta = delta;
  out.eta = gs_accuracies(d, delta);
  out.eta.resize(static_cast<std::size_t>(k));
  GraphBuilder g(d * k);
  const std::vector<Expr> in = g.inputs();
  std::vector<std::vector<Expr>> us;
  for (int j = 0; j < k; ++j) {
    std::vector<Expr> x(in.begin() + j * d, in.begin() + (j + 1) * d);
    us.push_back(gs_step(g, x, us, plan[static_cast<std::size_t>(j)], d));
  }
  for (int j = 0; j < k; ++j) out.u_nets.push_back(g.build(us[static_cast<std::size_t>(j)]));
  return out;
}

StabilityResult stability_check_p(const Vector& x, const std::vector<Vector>& u, const std::vector<Vector>& u_tilde) {
  if (u.size() != u_tilde.size()) throw DimensionError("basis sizes differ");
  if (x.norm() > 1.0 + 1e-12) throw DomainError("stability bound needs |x| <= 1");
  double eta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) eta = std::max(eta, (u[j] - u_tilde[j]).norm());
  if (eta > 1.0) throw DomainError("stability bound needs eta <= 1");
  return {(residual(x, u) - residual(x, u_tilde)).norm(), 3.0 * static_cast<double>(u.size()) * eta};
}

StabilityResult stability_check_N(const Vector& z, const Vector& z_tilde) {
  const double alpha = z.norm();
  const double beta = (z - z_tilde).norm();
  if (!(beta < alpha / 2.0)) throw DomainError("stability bound needs |z - z~| < |z|/2");
  return {(z / alpha - z_tilde / z_tilde.norm()).norm(), 4.0 * beta / alpha};
}

double RigidBuild::eval(const PointCloud& X) const {
  if (X.rows() != d || X.cols() != n) throw DimensionError("cloud shape does not match the build");
  return net.evaluate(flatten(X))[0];
}

namespace {

struct Node {
  std::vector<int> tuple;
  std::vector<int> children;      // node indices
  std::vector<int> child_point;   // point appended by each child
  std::vector<std::pair<int, int>> coords;  // (row, point) of each canonical lane
  std::vector<Expr> lanes;
  std::vector<Expr> nu;           // per child
  Expr inner;
  Expr approx;
  RigidNodeInfo info;
};

// Gated recursion over index tuples on the points `x` (d-vectors of
// expressions). f_O is evaluated on canonical clouds (d x n).
class Assembler {
 public:
  Assembler(GraphBuilder& g, std::vector<std::vector<Expr>> x, int d, double eps, const TargetFunction& f,
            std::function<double(const PointCloud&)> f_O, const RigidOptions& options)
      : g_(g), x_(std::move(x)), d_(d), n_(static_cast<int>(x_.size())), eps_(eps), f_(f), f_O_(std::move(f_O)),
        opt_(options) {
    if (n_ < d_) throw DomainError("rigid build needs n >= d");
    delta_ = rigid_delta(eps_, d_, n_, f_.alpha, f_.holder_const);
    plan_ = gs_plan(d_, delta_);
    const double cap = delta_ / (d_ * std::sqrt(static_cast<double>(n_ * d_)));
    matrix_eps_ = std::min(opt_.matrix_eps, cap);
    std::size_t count = 0, level = 1;
    for (int k = 0; k <= d_; ++k) {
      count += level;
      level *= static_cast<std::size_t>(n_ - k);
    }
    if (count > opt_.max_tuples)
      throw BuildError("rigid build needs " + std::to_string(count) + " tuples, above the cap of " +
                       std::to_string(opt_.max_tuples));
    const double R = opt_.coord_radius;
    F_ = std::max(1.0, std::fabs(f_O_(PointCloud::Zero(d_, n_))) +
                           f_.holder_const * std::pow(R * std::sqrt(static_cast<double>(n_ * d_)), f_.alpha) + eps_);
  }

  double delta() const { return delta_; }

  Expr run(const std::vector<Vector>& probe_inputs, std::vector<RigidNodeInfo>& infos) {
    make_node({});
    // Canonical lanes for every node, then one probe pass over the samples.
    std::vector<Expr> all;
    for (const Node& nd : nodes_) all.insert(all.end(), nd.lanes.begin(), nd.lanes.end());
    std::vector<std::vector<PointCloud>> coord_samples(nodes_.size());
    if (!all.empty()) {
      const ReluNetwork probe = g_.build(all);
      for (const Vector& v : probe_inputs) {
        const Vector out = probe.evaluate(v);
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
          const Eigen::Index w = static_cast<Eigen::Index>(nodes_[i].lanes.size());
          if (w == 0) continue;
          coord_samples[i].push_back(out.segment(off, w).transpose());
          off += w;
        }
      }
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (!nodes_[i].lanes.empty()) build_inner(nodes_[i], coord_samples[i]);
    const Expr root = blend(0);
    for (const Node& nd : nodes_) infos.push_back(nd.info);
    return root;
  }

 private:
  const std::vector<Expr>& u_of(const std::vector<int>& prefix) {
    auto it = u_cache_.find(prefix);
    if (it != u_cache_.end()) return it->second;
    std::vector<std::vector<Expr>> us;
    for (std::size_t r = 1; r < prefix.size(); ++r)
      us.push_back(u_of(std::vector<int>(prefix.begin(), prefix.begin() + static_cast<long>(r))));
    std::vector<Expr> u =
        gs_step(g_, x_[static_cast<std::size_t>(prefix.back())], us, plan_[prefix.size() - 1], d_);
    return u_cache_.emplace(prefix, std::move(u)).first->second;
  }

  std::vector<std::vector<Expr>> basis(const std::vector<int>& tuple) {
    std::vector<std::vector<Expr>> us;
    for (std::size_t r = 1; r <= tuple.size(); ++r)
      us.push_back(u_of(std::vector<int>(tuple.begin(), tuple.begin() + static_cast<long>(r))));
    return us;
  }

  int make_node(const std::vector<int>& tuple) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_.back().tuple = tuple;
    nodes_.back().info.tuple = tuple;
    const int k = static_cast<int>(tuple.size());
    const std::vector<std::vector<Expr>> us = basis(tuple);
    const double R = opt_.coord_radius;
    // Canonical coordinates <u~_r, x_t>, skipping (r, i_j) for j < r.
    std::vector<std::pair<int, int>> coords;
    std::vector<Expr> lanes;
    for (int r = 0; r < k; ++r)
      for (int t = 0; t < n_; ++t) {
        if (std::find(tuple.begin(), tuple.begin() + r, t) != tuple.begin() + r) continue;
        std::vector<Expr> terms;
        for (int s = 0; s < d_; ++s)
          terms.push_back(ops::product(g_, us[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)],
                                       x_[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)], matrix_eps_, 1.25));
        const Expr y = g_.combine({{1.0 / (2.0 * R), g_.sum(terms)}}, 0.5);
        lanes.push_back(g_.materialize(ops::clamp(g_, y, 0.0, 1.0)));
        coords.emplace_back(r, t);
      }
    // Low-precision residual norms gate the children.
    std::vector<Expr> nu;
    std::vector<int> child_points;
    if (k < d_) {
      const double spread = 1.01 * d_ + std::sqrt(static_cast<double>(d_));
      for (int j = 0; j < n_; ++j) {
        if (std::find(tuple.begin(), tuple.end(), j) != tuple.end()) continue;
        const std::vector<Expr>& xj = x_[static_cast<std::size_t>(j)];
        if (k == 0) {
          nu.push_back(ops::euclidean_norm(g_, xj, 1.0, delta_ / 20.0));
        } else {
          const std::vector<Expr> p = residual_expr(g_, xj, us, (delta_ / 40.0) / (k * spread), 1.25);
          nu.push_back(ops::euclidean_norm(g_, p, 1.1, delta_ / 40.0));
        }
        child_points.push_back(j);
      }
    }
    Node& me = nodes_[static_cast<std::size_t>(id)];
    me.coords = std::move(coords);
    me.lanes = std::move(lanes);
    me.nu = std::move(nu);
    me.child_point = child_points;
    me.info.free_coords = static_cast<int>(me.lanes.size());
    for (int j : child_points) {
      std::vector<int> t = tuple;
      t.push_back(j);
      const int c = make_node(t);
      nodes_[static_cast<std::size_t>(id)].children.push_back(c);
    }
    return id;
  }

  PointCloud canonical_cloud(const Node& nd, const PointCloud& C) const {
    const double R = opt_.coord_radius;
    PointCloud Z = PointCloud::Zero(d_, n_);
    for (std::size_t l = 0; l < nd.coords.size(); ++l)
      Z(nd.coords[l].first, nd.coords[l].second) = 2.0 * R * C(0, static_cast<Eigen::Index>(l)) - R;
    return Z;
  }

  void build_inner(Node& nd, const std::vector<PointCloud>& samples) {
    const int nf = static_cast<int>(nd.lanes.size());
    const double R = opt_.coord_radius;
    const double C = f_.holder_const;
    const double a = f_.alpha;
    const int m = static_cast<int>(std::ceil(R * std::sqrt(static_cast<double>(nf)) / std::pow(eps_ / (8.0 * C), 1.0 / a)));
    TargetFunction inner;
    inner.name = f_.name + "/canonical";
    inner.alpha = a;
    inner.holder_const = C * std::pow(2.0 * R, a);
    inner.norm = Norm::l2;
    inner.symmetry = Symmetry::none;
    const Node* self = &nd;
    inner.eval = [this, self](const PointCloud& Cc) { return f_O_(canonical_cloud(*self, Cc)); };
    DeepSetsOptions o;
    o.ramp_completion = opt_.ramp_completion;
    o.table_cap = opt_.table_cap;
    const BuiltDeepSets b = build_nonequivariant(inner, 1, nf, m, samples, o);
    std::vector<Expr> codes;
    for (const Expr& lane : nd.lanes) {
      const std::vector<Expr> w = g_.apply(b.phi, {lane});
      codes.insert(codes.end(), w.begin(), w.end());
    }
    nd.inner = g_.apply(b.rho, codes)[0];
    nd.info.m = m;
    for (std::size_t s : b.table_sizes) nd.info.signatures += s;
  }

  Expr blend(int id) {
    Node& nd = nodes_[static_cast<std::size_t>(id)];
    const int k = static_cast<int>(nd.tuple.size());
    if (k == d_) return nd.approx = nd.inner;
    std::vector<Expr> child;
    for (int c : nd.children) child.push_back(blend(c));
    Node& me = nodes_[static_cast<std::size_t>(id)];
    const double B = eps_ / (10.0 * d_);
    const int nc = static_cast<int>(me.children.size());
    const double MF = std::max(1.0, F_);
    const double a0 = 6.0 * delta_ / 5.0, a1 = 7.0 * delta_ / 5.0;
    const double b0 = 8.0 * delta_ / 5.0, b1 = 9.0 * delta_ / 5.0;
    std::vector<Expr> phi;
    Expr psi;
    for (int j = 0; j < nc; ++j) {
      const Expr& v = me.nu[static_cast<std::size_t>(j)];
      phi.push_back(ops::ramp(g_, v, a0, a1));
      const Expr pj = ops::ramp(g_, v, b0, b1);
      psi = j == 0 ? pj : ops::max2(g_, psi, pj);
    }
    const Expr count = ops::max2(g_, g_.sum(phi), GraphBuilder::constant(1.0));
    const Expr inv = ops::reciprocal(g_, count, 1.0, std::max(nc, 2), B / (10.0 * nc * MF));
    const Expr gate = ops::product(g_, psi, inv, B / (10.0 * nc * MF), 1.05);
    std::vector<Expr> weighted;
    for (int j = 0; j < nc; ++j)
      weighted.push_back(ops::product(g_, phi[static_cast<std::size_t>(j)], child[static_cast<std::size_t>(j)],
                                      B / (5.0 * 1.01 * nc), MF));
    const Expr mix = ops::product(g_, gate, g_.sum(weighted), B / 5.0, std::max(1.0, nc * MF));
    const Expr one_minus = g_.combine({{-1.0, psi}}, 1.0);
    Expr base;
    if (k == 0) {
      const double f0 = f_O_(PointCloud::Zero(d_, n_));
      base = g_.combine({{f0, one_minus}});
    } else {
      base = ops::product(g_, one_minus, me.inner, B / 5.0, MF);
    }
    return me.approx = g_.add(base, mix);
  }

  GraphBuilder& g_;
  std::vector<std::vector<Expr>> x_;
  int d_;
  int n_;
  double eps_;
  const TargetFunction& f_;
  std::function<double(const PointCloud&)> f_O_;
  RigidOptions opt_;
  double delta_ = 0.0;
  double matrix_eps_ = 0.0;
  double F_ = 1.0;
  std::vector<GSStep> plan_;
  std::map<std::vector<int>, std::vector<Expr>> u_cache_;
  std::vector<Node> nodes_;
};

void check_rigid_args(const TargetFunction& f, int d, int n, double eps) {
  if (d < 1 || n < 1) throw DomainError("rigid build needs d, n >= 1");
  if (!(eps > 0.0)) throw DomainError("eps must be positive");
  if (!f.eval) throw DomainError("target has no scalar evaluator");
  if (!(f.alpha > 0.0 && f.alpha <= 1.0)) throw DomainError("Hoelder exponent must lie in (0, 1]");
}

void check_ball(const std::vector<PointCloud>& samples, int d, int n, double radius) {
  if (samples.empty()) throw DomainError("rigid build needs samples");
  for (const PointCloud& X : samples) {
    if (X.rows() != d || X.cols() != n) throw DimensionError("sample cloud has the wrong shape");
    for (Eigen::Index i = 0; i < n; ++i)
      if (X.col(i).norm() > radius * (1.0 + 1e-12)) throw DomainError("sample point leaves the ball");
  }
}

}  // namespace

RigidBuild build_o_invariant(const TargetFunction& f, int d, int n, double eps, const std::vector<PointCloud>& samples,
                             const RigidOptions& options) {
  check_rigid_args(f, d, n, eps);
  check_ball(samples, d, n, 1.0);
  GraphBuilder g(d * n);
  const std::vector<Expr> in = g.inputs();
  std::vector<std::vector<Expr>> pts;
  for (int t = 0; t < n; ++t) pts.emplace_back(in.begin() + t * d, in.begin() + (t + 1) * d);
  Assembler A(g, pts, d, eps, f, [&f](const PointCloud& Z) { return f.eval(Z); }, options);
  std::vector<Vector> probe;
  for (const PointCloud& X : samples) probe.push_back(flatten(X));
  RigidBuild out;
  out.group = Symmetry::o_invariant;
  out.d = d;
  out.n = n;
  out.epsilon = eps;
  out.delta = A.delta();
  const Expr root = A.run(probe, out.nodes);
  out.net = g.build({root});
  return out;
}

RigidBuild build_e_invariant(const TargetFunction& f, int d, int n, double eps, const std::vector<PointCloud>& samples,
                             const RigidOptions& options) {
  check_rigid_args(f, d, n, eps);
  if (n < 2) throw DomainError("E(d) build needs n >= 2");
  check_ball(samples, d, n, 0.5);
  GraphBuilder g(d * n);
  const std::vector<Expr> in = g.inputs();
  std::vector<std::vector<Expr>> pts;
  for (int t = 0; t + 1 < n; ++t) {
    std::vector<Expr> p;
    for (int s = 0; s < d; ++s) p.push_back(g.sub(in[static_cast<std::size_t>(t * d + s)],
                                                  in[static_cast<std::size_t>((n - 1) * d + s)]));
    pts.push_back(p);
  }
  auto f_O = [&f, d, n](const PointCloud& Y) {
    PointCloud Z = PointCloud::Zero(d, n);
    Z.leftCols(n - 1) = Y;
    return f.eval(Z);
  };
  Assembler A(g, pts, d, eps, f, f_O, options);
  std::vector<Vector> probe;
  for (const PointCloud& X : samples) probe.push_back(flatten(X));
  RigidBuild out;
  out.group = Symmetry::e_invariant;
  out.d = d;
  out.n = n;
  out.epsilon = eps;
  out.delta = A.delta();
  const Expr root = A.run(probe, out.nodes);
  out.net = g.build({root});
  return out;
}

nlohmann::json rigid_to_json(const RigidBuild& b) {
  nlohmann::json j;
  j["kind"] = "rigid";
  j["group"] = to_string(b.group);
  j["d"] = b.d;
  j["n"] = b.n;
  j["epsilon"] = b.epsilon;
  j["delta"] = b.delta;
  j["nodes"] = nlohmann::json::array();
  for (const RigidNodeInfo& nd : b.nodes)
    j["nodes"].push_back({{"tuple", nd.tuple}, {"free_coords", nd.free_coords}, {"m", nd.m}, {"signatures", nd.signatures}});
  j["network"] = network_to_json(b.net);
  return j;
}

RigidBuild rigid_from_json(const nlohmann::json& doc) {
  if (doc.value("kind", std::string()) != "rigid") throw ParseError("document is not a rigid build");
  RigidBuild b;
  try {
    b.group = parse_symmetry(doc.at("group").get<std::string>());
    b.d = doc.at("d").get<int>();
    b.n = doc.at("n").get<int>();
    b.epsilon = doc.at("epsilon").get<double>();
    b.delta = doc.at("delta").get<double>();
    for (const auto& nd : doc.at("nodes"))
      b.nodes.push_back({nd.at("tuple").get<std::vector<int>>(), nd.at("free_coords").get<int>(), nd.at("m").get<int>(),
                         nd.at("signatures").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid rigid build: ") + e.what());
  }
  b.net = network_from_json(doc.at("network"));
  if (b.net.input_dim() != b.d * b.n) throw DimensionError("rigid network input differs from d*n");
  return b;
}

double rotation_gap(const std::function<double(const PointCloud&)>& f, const std::vector<PointCloud>& samples,
                    Rng& rng, int trials_per_sample) {
  double gap = 0.0;
  for (const PointCloud& X : samples) {
    const double fx = f(X);
    for (int t = 0; t < trials_per_sample; ++t) {
      const Matrix Q = rng.orthogonal(static_cast<int>(X.rows()));
      gap = std::max(gap, std::fabs(f(Q * X) - fx));
    }
  }
  return gap;
}

}  // namespace eqapprox
