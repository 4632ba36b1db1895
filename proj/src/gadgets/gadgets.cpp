#include "eqapprox/gadgets/gadgets.hpp"

#include <algorithm>
#include <cmath>

#include "eqapprox/common/error.hpp"
#include "eqapprox/common/rng.hpp"

namespace eqapprox {

namespace {

const std::vector<std::pair<GadgetKind, std::string>> kKindNames = {
    {GadgetKind::hat, "hat"},       {GadgetKind::product, "product"},
    {GadgetKind::power, "power"},   {GadgetKind::divide, "divide"},
    {GadgetKind::normalize, "normalize"}, {GadgetKind::median, "median"},
    {GadgetKind::bit_extract, "bit_extract"}, {GadgetKind::lookup, "lookup"}};

int as_int(double v, const char* name) {
  if (std::floor(v) != v) throw DomainError(std::string(name) + " must be an integer");
  return static_cast<int>(v);
}

}  // namespace

GadgetKind parse_gadget_kind(const std::string& name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ParseError("unknown gadget kind '" + name + "'");
}

std::string to_string(GadgetKind kind) {
  for (const auto& [k, n] : kKindNames)
    if (k == kind) return n;
  return "unknown";
}

double GadgetSpec::get(const std::string& name, double fallback) const {
  auto it = params.find(name);
  return it == params.end() ? fallback : it->second;
}

void GadgetSpec::validate() const {
  if (params.count("eps") && !(params.at("eps") > 0.0)) throw DomainError("eps must be positive");
  if (kind == GadgetKind::hat) {
    const double delta = get("delta", 0.25);
    if (!(delta > 0.0 && delta <= 0.5)) throw DomainError("hat needs 0 < delta <= 1/2");
  }
  if (kind == GadgetKind::bit_extract && get("base", 3) < 2) throw DomainError("base must be at least 2");
  if (kind == GadgetKind::lookup && keys.size() != values.size())
    throw DimensionError("lookup keys and values differ in length");
}

double hat_value(double x, int k, double delta) {
  return std::max(0.0, std::min((1.0 / delta) * ((1.0 + delta) / 2.0 - std::fabs(x - k)), 1.0));
}

ReluNetwork hat_network(int k, double delta) {
  if (!(delta > 0.0 && delta <= 0.5)) throw DomainError("hat needs 0 < delta <= 1/2");
  GraphBuilder g(1);
  return g.build({ops::hat(g, g.input(0), static_cast<double>(k), delta)});
}

ReluNetwork product_network(double eps, double M) {
  if (!(eps > 0.0 && eps <= 1.0)) throw DomainError("product needs eps in (0, 1]");
  if (!(M >= 1.0)) throw DomainError("product needs M >= 1");
  GraphBuilder g(2);
  return g.build({ops::product(g, g.input(0), g.input(1), eps, M)});
}

PowerNetwork power_network(double alpha, double eps, double lower) {
  PowerNetwork out{ReluNetwork({Layer(SparseMatrix::identity(1), Vector::Zero(1), Activation::identity)}), 1.0,
                   ops::plan_power(alpha, eps, lower)};
  GraphBuilder g(1);
  out.net = g.build({ops::power(g, g.input(0), out.plan)});
  out.constant = out.plan.constant;
  return out;
}

ReluNetwork divide_network(double eps, double delta, double M) {
  if (!(eps > 0.0)) throw DomainError("divide needs eps > 0");
  if (!(delta > 0.0 && delta < M)) throw DomainError("divide needs 0 < delta < M");
  GraphBuilder g(2);
  return g.build({ops::divide(g, g.input(0), g.input(1), eps, delta, M)});
}

ReluNetwork normalize_network(int d, double delta, double eps) {
  if (d < 1) throw DimensionError("normalize needs d >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("normalize needs 0 < delta <= 1");
  if (!(eps > 0.0)) throw DomainError("normalize needs eps > 0");
  GraphBuilder g(d);
  return g.build(ops::normalize(g, g.inputs(), delta, eps));
}

ReluNetwork median_network(int k) {
  if (k < 1 || k % 2 == 0) throw DomainError("median needs an odd k >= 1");
  GraphBuilder g(k);
  return g.build({ops::median(g, g.inputs())});
}

ReluNetwork bit_extraction_network(int base, int digits, int max_digit) {
  GraphBuilder g(1);
  return g.build(ops::bit_extract(g, g.input(0), base, digits, max_digit));
}

ReluNetwork lookup_network(const std::vector<double>& keys, const std::vector<double>& values, double gap) {
  GraphBuilder g(1);
  return g.build({ops::lookup(g, g.input(0), keys, values, gap)});
}

ReluNetwork build_gadget(const GadgetSpec& spec) {
  spec.validate();
  const double eps = spec.get("eps", 1e-3);
  switch (spec.kind) {
    case GadgetKind::hat:
      return hat_network(as_int(spec.get("k", 0), "k"), spec.get("delta", 0.25));
    case GadgetKind::product:
      return product_network(eps, spec.get("M", 1.0));
    case GadgetKind::power:
      return power_network(spec.get("alpha", 0.5), eps, spec.get("lower", 0.0)).net;
    case GadgetKind::divide:
      return divide_network(eps, spec.get("delta", 0.5), spec.get("M", 1.0));
    case GadgetKind::normalize:
      return normalize_network(as_int(spec.get("d", 2), "d"), spec.get("delta", 0.3), eps);
    case GadgetKind::median:
      return median_network(as_int(spec.get("k", 3), "k"));
    case GadgetKind::bit_extract:
      return bit_extraction_network(as_int(spec.get("base", 3), "base"), as_int(spec.get("digits", 3), "digits"),
                                    as_int(spec.get("max_digit", spec.get("base", 3) - 1), "max_digit"));
    case GadgetKind::lookup:
      return lookup_network(spec.keys, spec.values, spec.get("gap", 1.0));
  }
  throw DomainError("unhandled gadget kind");
}

GadgetReport test_gadget(const GadgetSpec& spec, int grid) {
  if (grid < 2) throw DomainError("grid needs at least 2 points");
  GadgetReport rep;
  rep.kind = to_string(spec.kind);
  const double eps = spec.get("eps", 1e-3);
  ReluNetwork net = build_gadget(spec);
  rep.params = param_count(net);
  rep.depth = net.depth();
  auto track = [&](double err) {
    rep.sup_error = std::max(rep.sup_error, err);
    ++rep.points;
  };
  auto lin = [&](int i, double lo, double hi) { return lo + (hi - lo) * i / (grid - 1); };
  Vector x;
  switch (spec.kind) {
    case GadgetKind::hat: {
      const int k = as_int(spec.get("k", 0), "k");
      const double delta = spec.get("delta", 0.25);
      x.resize(1);
      for (int i = 0; i < grid; ++i) {
        x[0] = lin(i, k - 2.0, k + 2.0);
        track(std::fabs(net.evaluate(x)[0] - hat_value(x[0], k, delta)));
      }
      rep.bound = 0.0;
      break;
    }
    case GadgetKind::product: {
      const double M = spec.get("M", 1.0);
      x.resize(2);
      for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
          x << lin(i, -M, M), lin(j, -M, M);
          track(std::fabs(net.evaluate(x)[0] - x[0] * x[1]));
        }
      rep.bound = eps;
      break;
    }
    case GadgetKind::power: {
      const double alpha = spec.get("alpha", 0.5);
      const double lower = spec.get("lower", 0.0);
      x.resize(1);
      for (int i = 0; i < grid; ++i) {
        x[0] = lin(i, lower, 1.0);
        track(std::fabs(net.evaluate(x)[0] - std::pow(x[0], alpha)));
      }
      rep.constant = ops::plan_power(alpha, eps, lower).constant;
      rep.bound = rep.constant * eps;
      break;
    }
    case GadgetKind::divide: {
      const double delta = spec.get("delta", 0.5);
      const double M = spec.get("M", 1.0);
      x.resize(2);
      for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
          x << lin(i, -M, M), lin(j, delta, M);
          track(std::fabs(net.evaluate(x)[0] - x[0] / x[1]));
        }
      rep.bound = eps;
      break;
    }
    case GadgetKind::normalize: {
      const int d = as_int(spec.get("d", 2), "d");
      const double delta = spec.get("delta", 0.3);
      Rng rng(static_cast<std::uint64_t>(spec.get("seed", 1)));
      for (int i = 0; i < grid * grid; ++i) {
        Vector dir = rng.normal_vector(d);
        dir /= dir.norm();
        const double r = delta + (1.0 - delta) * rng.uniform();
        x = r * dir;
        track((net.evaluate(x) - dir).norm());
      }
      rep.bound = eps;
      break;
    }
    case GadgetKind::median: {
      const int k = as_int(spec.get("k", 3), "k");
      Rng rng(static_cast<std::uint64_t>(spec.get("seed", 1)));
      for (int i = 0; i < grid * grid; ++i) {
        x.resize(k);
        for (int j = 0; j < k; ++j) x[j] = static_cast<double>(rng.below(static_cast<std::uint64_t>(grid)));
        std::vector<double> v(x.data(), x.data() + k);
        std::nth_element(v.begin(), v.begin() + k / 2, v.end());
        track(std::fabs(net.evaluate(x)[0] - v[static_cast<std::size_t>(k / 2)]));
      }
      rep.bound = 0.0;
      break;
    }
    case GadgetKind::bit_extract: {
      const int base = as_int(spec.get("base", 3), "base");
      const int digits = as_int(spec.get("digits", 3), "digits");
      const int max_digit = as_int(spec.get("max_digit", base - 1), "max_digit");
      std::vector<int> tau(static_cast<std::size_t>(digits), 0);
      x.resize(1);
      while (true) {
        double y = 0.0;
        for (int i = digits - 1; i >= 0; --i) y = y * base + tau[static_cast<std::size_t>(i)];
        x[0] = y;
        const Vector out = net.evaluate(x);
        double err = 0.0;
        for (int i = 0; i < digits; ++i) err = std::max(err, std::fabs(out[i] - tau[static_cast<std::size_t>(i)]));
        track(err);
        int pos = 0;
        while (pos < digits && tau[static_cast<std::size_t>(pos)] == max_digit) tau[static_cast<std::size_t>(pos++)] = 0;
        if (pos == digits) break;
        ++tau[static_cast<std::size_t>(pos)];
      }
      rep.bound = 0.0;
      break;
    }
    case GadgetKind::lookup: {
      x.resize(1);
      for (std::size_t i = 0; i < spec.keys.size(); ++i) {
        x[0] = spec.keys[i];
        track(std::fabs(net.evaluate(x)[0] - spec.values[i]));
      }
      rep.bound = 0.0;
      break;
    }
  }
  return rep;
}

}  // namespace eqapprox
