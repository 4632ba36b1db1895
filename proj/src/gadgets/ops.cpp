#include "eqapprox/gadgets/ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "eqapprox/common/error.hpp"

namespace eqapprox::ops {

Expr abs(GraphBuilder& g, const Expr& e) {
  return g.combine({{1.0, g.relu(e)}, {1.0, g.relu(g.scale(e, -1.0))}});
}

Expr clamp(GraphBuilder& g, const Expr& e, double lo, double hi) {
  Expr out = g.combine({{1.0, g.relu(g.shift(e, -lo))}, {-1.0, g.relu(g.shift(e, -hi))}}, lo);
  if (lo >= 0.0) out.nonneg = true;
  return out;
}

Expr step_unit(GraphBuilder& g, const Expr& e) {
  const Expr p = g.relu(e);
  const Expr r = g.relu(g.combine({{-1.0, p}}, 1.0));
  return g.relu(g.combine({{-1.0, r}}, 1.0));
}

Expr ramp(GraphBuilder& g, const Expr& x, double a, double b) {
  const double c = 1.0 / (b - a);
  return step_unit(g, g.combine({{c, x}}, -a * c));
}

Expr trapezoid(GraphBuilder& g, const Expr& x, double a0, double a1, double b0, double b1) {
  const Expr up = ramp(g, x, a0, a1);
  const Expr down = ramp(g, x, b0, b1);
  return g.relu(g.sub(up, down));
}

Expr max2(GraphBuilder& g, const Expr& a, const Expr& b) {
  return g.add(b, g.relu(g.sub(a, b)));
}

Expr min2(GraphBuilder& g, const Expr& a, const Expr& b) {
  return g.sub(a, g.relu(g.sub(a, b)));
}

Expr hat(GraphBuilder& g, const Expr& x, double k, double delta, Expr* u_out) {
  const double s = 1.0 / delta;
  const double C = (1.0 + delta) / (2.0 * delta);
  const Expr a = g.relu(g.shift(x, -k));
  const Expr b = g.relu(g.combine({{-1.0, x}}, k));
  const Expr t = g.relu(g.combine({{-s, a}, {-s, b}}, C));
  const Expr u = g.relu(g.combine({{-1.0, t}}, 1.0));
  if (u_out) *u_out = u;
  return g.combine({{-1.0, u}}, 1.0);
}

int product_stages(double eps, double M) {
  if (!(eps > 0.0)) throw DomainError("product tolerance must be positive");
  int S = 1;
  while (6.0 * M * M * std::pow(4.0, -(S + 1)) > eps) ++S;
  return S;
}

int square_stages(double eps, double M) {
  if (!(eps > 0.0)) throw DomainError("square tolerance must be positive");
  int S = 1;
  while (M * M * std::pow(4.0, -(S + 1)) > eps) ++S;
  return S;
}

Expr square_unit_interval(GraphBuilder& g, const Expr& t, int stages) {
  Expr cur = t;
  Expr acc = GraphBuilder::constant(0.0);
  double scale = 1.0;
  for (int s = 1; s <= stages; ++s) {
    const Expr h1 = g.relu(cur);
    const Expr h2 = g.relu(g.shift(cur, -0.5));
    const Expr h3 = g.relu(g.shift(cur, -1.0));
    const Expr gs = GraphBuilder::assume_nonneg(g.combine({{2.0, h1}, {-4.0, h2}, {2.0, h3}}));
    scale *= 0.25;
    acc = GraphBuilder::assume_nonneg(g.combine({{1.0, acc}, {scale, gs}}));
    cur = gs;
  }
  return GraphBuilder::assume_nonneg(g.sub(t, acc));
}

Expr square(GraphBuilder& g, const Expr& x, double eps, double M) {
  const int S = square_stages(eps, M);
  const Expr t = abs(g, g.scale(x, 1.0 / M));
  const Expr f = square_unit_interval(g, t, S);
  return GraphBuilder::assume_nonneg(g.scale(f, M * M));
}

Expr product(GraphBuilder& g, const Expr& x, const Expr& y, double eps, double M) {
  if (!(M > 0.0)) throw DomainError("product range must be positive");
  const int S = product_stages(eps, M);
  const double w = 1.0 / (2.0 * M);
  const Expr tu = abs(g, g.combine({{w, x}, {w, y}}));
  const Expr tv = abs(g, g.scale(x, w));
  const Expr tw = abs(g, g.scale(y, w));
  const Expr fu = square_unit_interval(g, tu, S);
  const Expr fv = square_unit_interval(g, tv, S);
  const Expr fw = square_unit_interval(g, tw, S);
  // Units created in the order v, u, w so a zero argument cancels exactly
  // in the accumulation order of the output row.
  const Expr sv = g.relu(fv);
  const Expr su = g.relu(fu);
  const Expr sw = g.relu(fw);
  const double c = 2.0 * M * M;
  return g.combine({{-c, sv}, {c, su}, {-c, sw}});
}

namespace {

double binomial_abs(double alpha, int i) {
  double c = 1.0;
  for (int j = 1; j <= i; ++j) c *= (alpha - j + 1) / j;
  return std::fabs(c);
}

double taylor_tail(double alpha, int k, double r) {
  double tail = 0.0;
  double c = 1.0;
  int i = 0;
  for (; i < 4000; ++i) {
    if (i > 0) c *= (alpha - i + 1) / i;
    if (i > k) tail += std::fabs(c) * std::pow(r, i);
  }
  // |c_i| is eventually non-increasing; bound the remainder geometrically.
  tail += std::fabs(c) * std::pow(r, i) / (1.0 - r);
  return tail;
}

}  // namespace

PowerPlan plan_power(double alpha, double eps, double lower) {
  if (!(alpha > 0.0)) throw DomainError("power exponent must be positive");
  if (!(eps > 0.0) || eps > 0.25) throw DomainError("power tolerance must lie in (0, 1/4]");
  if (lower < 0.0 || lower >= 1.0) throw DomainError("power lower bound must lie in [0, 1)");
  PowerPlan p;
  p.alpha = alpha;
  p.eps = eps;
  p.lower = lower;
  p.constant = 1.0;
  const double two_a = std::pow(2.0, alpha);
  const double lip = alpha * std::max(std::pow(0.49, alpha - 1.0), std::pow(1.01, alpha - 1.0));
  const double e_taylor = eps / (4.0 * two_a);
  int k = 1;
  while (taylor_tail(alpha, k, 0.51) > e_taylor / 2.0) ++k;
  p.taylor_degree = k;
  double weight = 0.0;
  for (int i = 2; i <= k; ++i) weight += binomial_abs(alpha, i) * (i - 1);
  p.taylor_eps = (e_taylor / 2.0) / std::max(1.0, weight);
  p.gate_eps = eps / (4.0 * two_a * std::max(lip, 1e-3));
  p.final_eps = eps / 4.0;
  p.gate_min = -1;
  if (lower > 0.0)
    p.gate_max = static_cast<int>(std::ceil(std::log2(1.0 / lower))) + 1;
  else
    p.gate_max = static_cast<int>(std::ceil(std::log2(1.0 / eps) / alpha));
  return p;
}

Expr power(GraphBuilder& g, const Expr& x, const PowerPlan& plan) {
  const double alpha = plan.alpha;
  const Expr xc = clamp(g, x, 0.0, 1.0);
  double coef_sum = 0.0;
  std::vector<double> coef(static_cast<std::size_t>(plan.taylor_degree) + 1);
  {
    double c = 1.0;
    for (int i = 0; i <= plan.taylor_degree; ++i) {
      if (i > 0) c *= (alpha - i + 1) / i;
      coef[static_cast<std::size_t>(i)] = c;
      coef_sum += std::fabs(c);
    }
  }
  const double final_range = std::max(std::pow(2.0, alpha), coef_sum) * 1.05;
  std::vector<Expr> families;
  for (int t = 0; t < 3; ++t) {
    std::vector<Expr> args;
    std::vector<std::pair<double, Expr>> scales;
    for (int n = plan.gate_min; n <= plan.gate_max; ++n) {
      const double j = 3.0 * n + t;
      const Expr gate = trapezoid(g, xc, std::exp2(-j / 3.0 - 1.1), std::exp2(-j / 3.0 - 1.0),
                                  std::exp2(-j / 3.0), std::exp2(-j / 3.0 + 0.1));
      const double sigma = std::exp2(n + t / 3.0);
      const Expr arg = clamp(g, g.scale(xc, sigma), 0.0, 1.0);
      args.push_back(product(g, gate, arg, plan.gate_eps, 1.01));
      scales.emplace_back(std::exp2(-alpha * (n + t / 3.0)), gate);
    }
    const Expr y = g.sum(args);
    const Expr s = GraphBuilder::assume_nonneg(g.combine(scales));
    const Expr z = g.shift(y, -1.0);
    std::vector<std::pair<double, Expr>> taylor;
    Expr p = z;
    for (int i = 1; i <= plan.taylor_degree; ++i) {
      if (i > 1) p = product(g, p, z, plan.taylor_eps, 1.01);
      taylor.emplace_back(coef[static_cast<std::size_t>(i)], p);
    }
    const Expr n0 = g.combine(taylor, coef[0]);
    families.push_back(product(g, s, n0, plan.final_eps, final_range));
  }
  return median(g, families);
}

int newton_iterations(double eps, double delta) {
  const double v = 1.0 / (eps * delta * delta);
  if (v <= 2.0) return 3;
  return static_cast<int>(std::ceil(std::log2(std::log2(v)))) + 3;
}

Expr reciprocal(GraphBuilder& g, const Expr& s, double lo, double hi, double eps) {
  if (!(lo > 0.0) || !(hi > lo)) throw DomainError("reciprocal needs 0 < lo < hi");
  if (!(eps > 0.0)) throw DomainError("reciprocal tolerance must be positive");
  const double r = lo / hi;
  const Expr sp = clamp(g, g.scale(s, 1.0 / hi), r, 1.0);
  std::vector<double> knots{r};
  while (knots.back() < 1.0) knots.push_back(std::min(1.0, knots.back() * 2.0));
  std::vector<double> slopes;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i)
    slopes.push_back((1.0 / knots[i + 1] - 1.0 / knots[i]) / (knots[i + 1] - knots[i]));
  std::vector<std::pair<double, Expr>> parts{{slopes[0], sp}};
  for (std::size_t i = 1; i < slopes.size(); ++i)
    parts.emplace_back(slopes[i] - slopes[i - 1], g.relu(g.shift(sp, -knots[i])));
  Expr y = g.combine(parts, 1.0 / knots[0] - slopes[0] * knots[0]);
  const double target = eps * hi;
  int T = newton_iterations(eps, lo);
  while ((1.0 / r) * std::pow(8.0, -std::pow(2.0, T)) > target / 2.0) ++T;
  const double ymax = 1.15 / r;
  const double pe = target / (2.0 * (1.0 + ymax));
  const double M = std::max(ymax, 1.25) * 1.05;
  for (int t = 0; t < T; ++t) {
    const Expr q = product(g, sp, y, pe, M);
    const Expr w = g.combine({{-1.0, q}}, 2.0);
    y = product(g, y, w, pe, M);
  }
  return g.scale(y, 1.0 / hi);
}

Expr divide(GraphBuilder& g, const Expr& z, const Expr& s, double eps, double delta, double M) {
  if (!(delta > 0.0) || !(delta < M)) throw DomainError("divide needs 0 < delta < M");
  const Expr inv = reciprocal(g, s, delta, M, eps / (2.0 * M));
  return product(g, z, inv, eps / 2.0, std::max(M, 1.0 / delta) * 1.05);
}

std::vector<Expr> normalize(GraphBuilder& g, const std::vector<Expr>& x, double delta, double eps) {
  if (!(delta > 0.0) || delta > 1.0) throw DomainError("normalize needs 0 < delta <= 1");
  if (!(eps > 0.0)) throw DomainError("normalize tolerance must be positive");
  const double d = static_cast<double>(x.size());
  const double e_s = 0.42 * eps * delta * delta * delta;
  std::vector<Expr> sq;
  for (const Expr& xi : x) sq.push_back(square(g, xi, e_s / d, 1.0));
  const double lo_s = 0.9 * delta * delta;
  const Expr s = clamp(g, g.sum(sq), lo_s, 1.0);
  const double e_r = std::min(0.25, 0.225 * eps * delta * delta);
  const Expr r = power(g, s, plan_power(0.5, e_r, lo_s));
  const Expr inv = reciprocal(g, r, 0.9 * delta, 1.001, eps / 4.0);
  std::vector<Expr> out;
  for (const Expr& xi : x) out.push_back(product(g, xi, inv, eps / (4.0 * std::sqrt(d)), 1.05 / (0.9 * delta)));
  return out;
}

Expr euclidean_norm(GraphBuilder& g, const std::vector<Expr>& x, double M, double eps) {
  const double d = static_cast<double>(x.size());
  const double tol = eps * eps / (4.0 * d);
  std::vector<Expr> sq;
  for (const Expr& xi : x) sq.push_back(square(g, xi, tol, M));
  const Expr s = clamp(g, g.scale(g.sum(sq), 1.0 / (M * M)), 0.0, 1.0);
  const Expr r = power(g, s, plan_power(0.5, std::min(0.25, eps / (2.0 * M))));
  return GraphBuilder::assume_nonneg(g.scale(r, M));
}

Expr median(GraphBuilder& g, const std::vector<Expr>& values) {
  const std::size_t n = values.size();
  if (n == 0 || n % 2 == 0) throw DomainError("median needs an odd number of inputs");
  std::vector<Expr> v = values;
  for (std::size_t round = 0; round < n && n > 1; ++round) {
    for (std::size_t i = round % 2; i + 1 < n; i += 2) {
      const Expr dlt = g.relu(g.sub(v[i], v[i + 1]));
      const Expr lo = g.sub(v[i], dlt);
      const Expr hi = g.add(v[i + 1], dlt);
      v[i] = lo;
      v[i + 1] = hi;
    }
  }
  return v[n / 2];
}

std::vector<Expr> bit_extract(GraphBuilder& g, const Expr& y, int base, int digits, int max_digit) {
  if (base < 2) throw DomainError("base must be at least 2");
  if (max_digit < 0 || max_digit >= base) throw DomainError("max_digit must lie in [0, base)");
  if (digits < 1) throw DomainError("need at least one digit");
  std::vector<Expr> out(static_cast<std::size_t>(digits));
  Expr r = GraphBuilder::assume_nonneg(y);
  for (int i = digits - 1; i >= 1; --i) {
    const double p = std::pow(static_cast<double>(base), i);
    std::vector<Expr> steps;
    for (int v = 1; v <= max_digit; ++v)
      steps.push_back(step_unit(g, g.combine({{2.0, r}}, 1.0 - 2.0 * v * p)));
    const Expr digit = steps.empty() ? GraphBuilder::constant(0.0) : GraphBuilder::assume_nonneg(g.sum(steps));
    out[static_cast<std::size_t>(i)] = digit;
    r = GraphBuilder::assume_nonneg(g.combine({{1.0, r}, {-p, digit}}));
  }
  out[0] = r;
  return out;
}

Expr lookup(GraphBuilder& g, const Expr& x, const std::vector<double>& keys,
            const std::vector<double>& values, double gap) {
  if (keys.size() != values.size()) throw DimensionError("lookup keys and values differ in length");
  if (keys.empty()) throw DomainError("lookup needs at least one key");
  if (!(gap > 0.0)) throw DomainError("lookup gap must be positive");
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });
  std::vector<double> k;
  std::vector<double> v;
  for (auto i : order) {
    k.push_back(keys[i]);
    v.push_back(values[i]);
  }
  for (std::size_t i = 1; i < k.size(); ++i)
    if (k[i] - k[i - 1] < gap)
      throw DomainError("lookup keys " + std::to_string(k[i - 1]) + " and " + std::to_string(k[i]) +
                        " are closer than the gap " + std::to_string(gap));
  if (std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; }))
    return GraphBuilder::constant(v[0]);
  const Expr in = x.terms.size() > 1 ? g.materialize(x) : x;
  const double w = gap / 4.0;
  const std::size_t K = k.size();
  std::vector<Expr> r(K);  // r[i] for i = 1..K-1
  for (std::size_t i = 1; i < K; ++i) {
    const double lo = k[i - 1] + w;
    const double c = (1.0 + 1e-9) / ((k[i] - k[i - 1]) - 2.0 * w);
    const Expr a = g.relu(g.shift(in, -lo));
    r[i] = g.relu(g.combine({{-c, a}}, 1.0));
  }
  std::vector<std::pair<double, Expr>> parts;
  parts.emplace_back(v[0], g.relu(r[1]));
  for (std::size_t i = 1; i + 1 < K; ++i) parts.emplace_back(v[i], g.relu(g.sub(r[i + 1], r[i])));
  parts.emplace_back(v[K - 1], g.relu(g.combine({{-1.0, r[K - 1]}}, 1.0)));
  return g.combine(parts);
}

Expr vector_lookup(GraphBuilder& g, const std::vector<Expr>& lanes,
                   const std::vector<std::vector<double>>& keys, const std::vector<double>& values) {
  if (keys.size() != values.size()) throw DimensionError("vector lookup keys and values differ in length");
  if (keys.empty()) throw DomainError("vector lookup needs at least one key");
  const std::size_t L = lanes.size();
  for (const auto& key : keys)
    if (key.size() != L) throw DimensionError("vector lookup key has the wrong length");
  const std::size_t R = keys.size();
  constexpr double kPackLimit = 0x1.0p50;
  std::vector<double> acc_key(R, 0.0);
  double range = 1.0;
  Expr acc = GraphBuilder::constant(0.0);
  auto compress = [&]() {
    std::vector<double> distinct(acc_key);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> ranks(distinct.size());
    std::iota(ranks.begin(), ranks.end(), 0.0);
    acc = GraphBuilder::assume_nonneg(lookup(g, acc, distinct, ranks, 1.0));
    for (double& a : acc_key)
      a = static_cast<double>(std::lower_bound(distinct.begin(), distinct.end(), a) - distinct.begin());
    range = static_cast<double>(distinct.size());
  };
  for (std::size_t t = 0; t < L; ++t) {
    std::vector<double> distinct;
    distinct.reserve(R);
    for (const auto& key : keys) distinct.push_back(key[t]);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() == 1) continue;
    double gap = distinct[1] - distinct[0];
    for (std::size_t i = 2; i < distinct.size(); ++i) gap = std::min(gap, distinct[i] - distinct[i - 1]);
    std::vector<double> ranks(distinct.size());
    std::iota(ranks.begin(), ranks.end(), 0.0);
    const Expr idx = GraphBuilder::assume_nonneg(lookup(g, lanes[t], distinct, ranks, std::min(gap, 1.0)));
    const double radix = static_cast<double>(distinct.size());
    if (range * radix > kPackLimit) compress();
    acc = GraphBuilder::assume_nonneg(g.combine({{radix, acc}, {1.0, idx}}));
    for (std::size_t r = 0; r < R; ++r) {
      const double rank = static_cast<double>(
          std::lower_bound(distinct.begin(), distinct.end(), keys[r][t]) - distinct.begin());
      acc_key[r] = acc_key[r] * radix + rank;
    }
    range *= radix;
  }
  std::map<double, double> table;
  for (std::size_t r = 0; r < R; ++r) {
    auto [it, inserted] = table.emplace(acc_key[r], values[r]);
    if (!inserted && it->second != values[r])
      throw BuildError("vector lookup: one key maps to two different values");
  }
  std::vector<double> k;
  std::vector<double> v;
  for (const auto& [key, val] : table) {
    k.push_back(key);
    v.push_back(val);
  }
  if (k.size() == 1) return GraphBuilder::constant(v[0]);
  return lookup(g, acc, k, v, 1.0);
}

}  // namespace eqapprox::ops
