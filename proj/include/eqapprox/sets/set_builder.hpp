#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "eqapprox/net/network.hpp"
#include "eqapprox/sets/target.hpp"

namespace eqapprox {

// Geometry of the shifted partitions of unity and of the digit code.
//
// Shift q in 0..N-1 (N = 2dn+1, delta = 1/N) uses the hats phi_k(m x_j - q delta)
// with k in I_{q,m}. Cells are the (m+1)^d index tuples, enumerated row-major
// (first coordinate most significant). The code of shift q is split into
// `words` words of `digits_per_word` base-`base` digits each; cell c goes to
// word c / digits_per_word, digit c % digits_per_word.
struct PhiLayout {
  int d = 1;
  int n = 1;
  int m = 1;
  int N = 3;
  double delta = 1.0 / 3.0;
  int base = 2;
  int cells = 2;  // (m+1)^d
  int digits_per_word = 1;
  int words = 1;
  std::vector<int> k0;  // smallest element of I_{q,m}, per shift

  int output_dim() const { return N * words; }
  // Hat center in scaled coordinates: k + q delta.
  double hat_center(int q, int k) const;
  std::vector<int> cell_tuple(int q, int cell) const;
  int cell_of_tuple(int q, const std::vector<int>& tuple) const;
  // Center of ((q delta + plateau of the cell) / m) clipped to [0,1]^d; empty
  // when the clipped plateau is empty or a single point.
  std::optional<Vector> cell_center(int q, int cell) const;
  double digit_weight(int cell) const;  // base^(cell % digits_per_word)
  int word_of(int cell) const { return cell / digits_per_word; }
};

// Integers k with k in (-(1+delta)/2 - q delta, m + (1+delta)/2 - q delta),
// computed in exact integer arithmetic.
std::vector<int> shift_indices(int q, int m, int N);

// `base` defaults to the largest block size + 1 (carry-free digit sums).
PhiLayout make_phi_layout(int d, int n, int m, int base);

// Phi: R^d -> R^{N * words}. Output q*words + w is word w of Phi_q.
ReluNetwork build_phi(const PhiLayout& layout);
ReluNetwork build_phi(int d, int n, int m, const Partition& partition);

// Phi outputs followed by the N*d*(m+1) ramp units u (shift-major, then
// coordinate, then k). A shift is good for x exactly when all its u are 0 or 1.
ReluNetwork build_phi_probe(const PhiLayout& layout);

enum class ShiftClass { good, bad };

// Replays the hat arithmetic of Phi in the same order, so the verdict agrees
// bitwise with the probe network.
ShiftClass classify_shift(const Vector& x, int q, const PhiLayout& layout);
ShiftClass classify_shift(const Vector& x, int q, int m, double delta);

// For one shift: the cells occupied by the points of each block, as sorted
// multisets of cell indices.
struct CellSignature {
  int q = 0;
  std::vector<std::vector<int>> cells;

  // Digit vector tau_{q,j} over all (m+1)^d cells.
  std::vector<int> digits(int block, int cell_count) const;
  bool operator<(const CellSignature& o) const { return cells < o.cells; }
  bool operator==(const CellSignature& o) const { return q == o.q && cells == o.cells; }
};

// Code words of a signature: block-major, then word.
std::vector<double> signature_words(const PhiLayout& layout, const CellSignature& sig);
// Representative cloud: each point of block j placed at its cell center,
// with the centers of a block in lexicographic order.
PointCloud representative(const PhiLayout& layout, const Partition& partition, const CellSignature& sig);

struct ShiftTable {
  std::vector<CellSignature> signatures;
  std::vector<int> sample_index;  // first realizing sample, -1 in exhaustive mode
};

// Evaluates the probe on every point; records signatures of samples for
// which shift q is good. One table per shift.
// With `ramp_completion`, a sample whose coordinate sits on a hat ramp also
// contributes the signatures with that coordinate moved to either adjacent
// plateau (at most `completion_limit` per sample and shift).
std::vector<ShiftTable> realized_signatures(const PhiLayout& layout, const Partition& partition,
                                            const std::vector<PointCloud>& samples, bool ramp_completion = false,
                                            int completion_limit = 64);
ShiftTable realized_signatures(const std::vector<PointCloud>& samples, const Partition& partition,
                               const PhiLayout& layout, int q);
// All signatures over [0,1]^{d x n}: every multiset of non-empty cells per block.
std::vector<ShiftTable> exhaustive_signatures(const PhiLayout& layout, const Partition& partition,
                                              std::size_t cap);

struct QuantizedTable {
  std::vector<CellSignature> signatures;
  std::vector<double> levels;  // integer levels; value = f_mid + eps * level
};

// rho = f_mid + eps * median_q rho_q, with rho_q a lookup keyed on the
// code words of shift q. Input layout: block-major, each block holding the
// N*words summed Phi outputs.
ReluNetwork build_rho(const PhiLayout& layout, const Partition& partition, const std::vector<QuantizedTable>& tables,
                      double f_mid, double eps);

// Truncation toward zero of (value - f_mid) / eps.
double quantize_level(double value, double f_mid, double eps);

struct BuiltDeepSets {
  ReluNetwork phi = identity_network(1);
  ReluNetwork rho = identity_network(1);
  Partition partition;
  PhiLayout layout;
  int m = 1;
  double delta = 1.0 / 3.0;
  double eps = 0.0;    // omega(f, 1/2m) used by the quantizer
  double f_mid = 0.0;  // f at the all-1/2 cloud (or the override)
  std::vector<std::size_t> table_sizes;  // signatures per shift
};

struct DeepSetsOptions {
  bool exhaustive = false;
  std::size_t table_cap = 1000000;
  std::optional<double> f_mid;
  std::optional<double> eps;
  bool ramp_completion = false;
  // Value assigned to a signature; defaults to f at the representative.
  std::function<double(const CellSignature&, const PointCloud& representative, int sample_index)> value;
};

BuiltDeepSets build_deepsets(const TargetFunction& f, int d, int n, int m, const Partition& partition,
                             const std::vector<PointCloud>& samples, const DeepSetsOptions& options = {});

// Singleton partition; f need not be symmetric.
BuiltDeepSets build_nonequivariant(const TargetFunction& f, int d, int n, int m,
                                   const std::vector<PointCloud>& samples, const DeepSetsOptions& options = {});

// Summed Phi outputs per block, block-major.
Vector block_sums(const BuiltDeepSets& b, const PointCloud& X);
double deepsets_eval(const BuiltDeepSets& b, const PointCloud& X);

// Number of bad shifts of a whole cloud.
int bad_shift_count(const PhiLayout& layout, const PointCloud& X);

}  // namespace eqapprox
