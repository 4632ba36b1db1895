#pragma once

#include <map>
#include <string>
#include <vector>

#include "eqapprox/gadgets/ops.hpp"
#include "eqapprox/net/network.hpp"

namespace eqapprox {

enum class GadgetKind { hat, product, power, divide, normalize, median, bit_extract, lookup };

GadgetKind parse_gadget_kind(const std::string& name);
std::string to_string(GadgetKind kind);

// Parameters for one gadget build. Unused fields are ignored by a given kind.
struct GadgetSpec {
  GadgetKind kind = GadgetKind::hat;
  std::map<std::string, double> params;
  std::vector<double> keys;
  std::vector<double> values;

  double get(const std::string& name, double fallback) const;
  void validate() const;
};

ReluNetwork hat_network(int k, double delta);
ReluNetwork product_network(double eps, double M);

struct PowerNetwork {
  ReluNetwork net;
  // Guaranteed sup error on [lower, 1] is constant * eps.
  double constant = 1.0;
  ops::PowerPlan plan;
};
PowerNetwork power_network(double alpha, double eps, double lower = 0.0);

ReluNetwork divide_network(double eps, double delta, double M);
ReluNetwork normalize_network(int d, double delta, double eps);
ReluNetwork median_network(int k);
ReluNetwork bit_extraction_network(int base, int digits, int max_digit);
ReluNetwork lookup_network(const std::vector<double>& keys, const std::vector<double>& values, double gap);

// Reference value of the hat function phi_k.
double hat_value(double x, int k, double delta);

ReluNetwork build_gadget(const GadgetSpec& spec);

struct GadgetReport {
  std::string kind;
  double sup_error = 0.0;
  double bound = 0.0;     // guaranteed error (constant * eps, or 0 for exact gadgets)
  double constant = 1.0;
  std::size_t points = 0;
  std::int64_t params = 0;
  int depth = 0;
};

// Builds the gadget described by `spec` and measures its sup error against
// the exact function on a grid with `grid` points per axis.
GadgetReport test_gadget(const GadgetSpec& spec, int grid);

}  // namespace eqapprox
