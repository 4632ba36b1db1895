#include "eqapprox/sets/set_builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "eqapprox/common/error.hpp"
#include "eqapprox/gadgets/ops.hpp"
#include "eqapprox/net/graph_builder.hpp"

namespace eqapprox {

namespace {

constexpr double kWordLimit = 0x1.0p50;
constexpr std::int64_t kMaxCells = 4000000;

std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) {
    if (r > kMaxCells * 1000 / std::max<std::int64_t>(b, 1)) throw BuildError("cell count overflow");
    r *= b;
  }
  return r;
}

struct PhiGraph {
  std::vector<Expr> words;  // q-major
  std::vector<Expr> us;     // (q, j, k)
};

PhiGraph phi_graph(GraphBuilder& g, const PhiLayout& L) {
  PhiGraph out;
  const int K = L.m + 1;
  // u[q][j][k - k0]
  std::vector<std::vector<std::vector<Expr>>> u(static_cast<std::size_t>(L.N));
  for (int q = 0; q < L.N; ++q) {
    u[static_cast<std::size_t>(q)].resize(static_cast<std::size_t>(L.d));
    for (int j = 0; j < L.d; ++j) {
      const Expr xs = g.scale(g.input(j), static_cast<double>(L.m));
      for (int kk = 0; kk < K; ++kk) {
        Expr uk;
        ops::hat(g, xs, L.hat_center(q, L.k0[static_cast<std::size_t>(q)] + kk), L.delta, &uk);
        u[static_cast<std::size_t>(q)][static_cast<std::size_t>(j)].push_back(uk);
        out.us.push_back(uk);
      }
    }
  }
  for (int q = 0; q < L.N; ++q) {
    std::vector<std::vector<std::pair<double, Expr>>> word_parts(static_cast<std::size_t>(L.words));
    for (int c = 0; c < L.cells; ++c) {
      std::vector<std::pair<double, Expr>> parts;
      int rem = c;
      std::vector<int> idx(static_cast<std::size_t>(L.d));
      for (int j = L.d - 1; j >= 0; --j) {
        idx[static_cast<std::size_t>(j)] = rem % K;
        rem /= K;
      }
      for (int j = 0; j < L.d; ++j)
        parts.emplace_back(-1.0, u[static_cast<std::size_t>(q)][static_cast<std::size_t>(j)]
                                  [static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])]);
      const Expr cell = g.relu(g.combine(parts, 1.0));
      word_parts[static_cast<std::size_t>(L.word_of(c))].emplace_back(L.digit_weight(c), cell);
    }
    for (auto& wp : word_parts) out.words.push_back(g.combine(wp));
  }
  return out;
}

std::vector<int> decode_cell_tuple_from_u(const PhiLayout& L, const Vector& probe_out, int q, bool& good) {
  const int K = L.m + 1;
  const int base = L.output_dim() + q * L.d * K;
  std::vector<int> idx(static_cast<std::size_t>(L.d), -1);
  good = true;
  for (int j = 0; j < L.d; ++j) {
    for (int kk = 0; kk < K; ++kk) {
      const double uv = probe_out[base + j * K + kk];
      if (uv != 0.0 && uv != 1.0) good = false;
      if (uv == 0.0) {
        if (idx[static_cast<std::size_t>(j)] != -1) good = false;
        idx[static_cast<std::size_t>(j)] = kk;
      }
    }
    if (idx[static_cast<std::size_t>(j)] == -1) good = false;
  }
  return idx;
}

void check_samples(const std::vector<PointCloud>& samples, int d, int n) {
  for (const PointCloud& X : samples) {
    if (X.rows() != d || X.cols() != n)
      throw DimensionError("sample cloud must be " + std::to_string(d) + "x" + std::to_string(n));
    if (!(X.minCoeff() >= 0.0 && X.maxCoeff() <= 1.0)) throw DomainError("sample cloud leaves [0,1]");
  }
}

}  // namespace

std::vector<int> shift_indices(int q, int m, int N) {
  std::vector<int> ks;
  const std::int64_t N2 = 2LL * N;
  for (std::int64_t k = -2; k <= m + 2; ++k)
    if (N2 * k > -(N + 1 + 2LL * q) && N2 * k < 2LL * m * N + N + 1 - 2LL * q) ks.push_back(static_cast<int>(k));
  return ks;
}

double PhiLayout::hat_center(int q, int k) const { return static_cast<double>(k) + q * delta; }

std::vector<int> PhiLayout::cell_tuple(int q, int cell) const {
  std::vector<int> t(static_cast<std::size_t>(d));
  for (int j = d - 1; j >= 0; --j) {
    t[static_cast<std::size_t>(j)] = k0[static_cast<std::size_t>(q)] + cell % (m + 1);
    cell /= (m + 1);
  }
  return t;
}

int PhiLayout::cell_of_tuple(int q, const std::vector<int>& tuple) const {
  int c = 0;
  for (int j = 0; j < d; ++j) c = c * (m + 1) + (tuple[static_cast<std::size_t>(j)] - k0[static_cast<std::size_t>(q)]);
  return c;
}

std::optional<Vector> PhiLayout::cell_center(int q, int cell) const {
  const std::vector<int> t = cell_tuple(q, cell);
  Vector z(d);
  for (int j = 0; j < d; ++j) {
    const double c = hat_center(q, t[static_cast<std::size_t>(j)]);
    const double lo = std::max(0.0, (c - (1.0 - delta) / 2.0) / m);
    const double hi = std::min(1.0, (c + (1.0 - delta) / 2.0) / m);
    if (lo >= hi) return std::nullopt;
    z[j] = 0.5 * (lo + hi);
  }
  return z;
}

double PhiLayout::digit_weight(int cell) const {
  return std::pow(static_cast<double>(base), cell % digits_per_word);
}

PhiLayout make_phi_layout(int d, int n, int m, int base) {
  if (d < 1 || n < 1 || m < 1) throw DomainError("Phi needs d, n, m >= 1");
  if (base < 2) throw DomainError("digit base must be at least 2");
  PhiLayout L;
  L.d = d;
  L.n = n;
  L.m = m;
  L.N = 2 * d * n + 1;
  L.delta = 1.0 / L.N;
  L.base = base;
  const std::int64_t cells = ipow(m + 1, d);
  if (cells > kMaxCells) throw BuildError("too many cells: (m+1)^d = " + std::to_string(cells));
  L.cells = static_cast<int>(cells);
  int P = 0;
  double pw = 1.0;
  while (pw * base <= kWordLimit) {
    pw *= base;
    ++P;
  }
  L.digits_per_word = std::max(1, P);
  L.words = (L.cells + L.digits_per_word - 1) / L.digits_per_word;
  for (int q = 0; q < L.N; ++q) {
    const std::vector<int> ks = shift_indices(q, m, L.N);
    if (static_cast<int>(ks.size()) != m + 1)
      throw BuildError("shift " + std::to_string(q) + " has " + std::to_string(ks.size()) + " indices");
    L.k0.push_back(ks.front());
  }
  return L;
}

ReluNetwork build_phi(const PhiLayout& layout) {
  GraphBuilder g(layout.d);
  PhiGraph pg = phi_graph(g, layout);
  return g.build(pg.words);
}

ReluNetwork build_phi(int d, int n, int m, const Partition& partition) {
  if (partition.n() != n) throw DimensionError("partition size differs from n");
  return build_phi(make_phi_layout(d, n, m, partition.max_block_size() + 1));
}

ReluNetwork build_phi_probe(const PhiLayout& layout) {
  GraphBuilder g(layout.d);
  PhiGraph pg = phi_graph(g, layout);
  std::vector<Expr> outs = pg.words;
  outs.insert(outs.end(), pg.us.begin(), pg.us.end());
  return g.build(outs);
}

ShiftClass classify_shift(const Vector& x, int q, const PhiLayout& L) {
  if (x.size() != L.d) throw DimensionError("classify_shift: point has the wrong dimension");
  const double s = 1.0 / L.delta;
  const double C = (1.0 + L.delta) / (2.0 * L.delta);
  const double m = static_cast<double>(L.m);
  for (int j = 0; j < L.d; ++j) {
    for (int kk = 0; kk <= L.m; ++kk) {
      const double c = L.hat_center(q, L.k0[static_cast<std::size_t>(q)] + kk);
      double a = 0.0 + m * x[j];
      a = a + (-c);
      a = a > 0.0 ? a : 0.0;
      double b = 0.0 + (-m) * x[j];
      b = b + c;
      b = b > 0.0 ? b : 0.0;
      double t = 0.0 + (-s) * a;
      t = t + (-s) * b;
      t = t + C;
      t = t > 0.0 ? t : 0.0;
      double u = 0.0 + (-1.0) * t;
      u = u + 1.0;
      u = u > 0.0 ? u : 0.0;
      if (u != 0.0 && u != 1.0) return ShiftClass::bad;
    }
  }
  return ShiftClass::good;
}

ShiftClass classify_shift(const Vector& x, int q, int m, double delta) {
  const int N = static_cast<int>(std::lround(1.0 / delta));
  if (N < 3 || N % 2 == 0) throw DomainError("delta must be 1/(2dn+1)");
  const int dn = (N - 1) / 2;
  const int d = static_cast<int>(x.size());
  if (d < 1 || dn % d != 0) throw DomainError("delta is not 1/(2dn+1) for this dimension");
  return classify_shift(x, q, make_phi_layout(d, dn / d, m, 2));
}

std::vector<int> CellSignature::digits(int block, int cell_count) const {
  std::vector<int> out(static_cast<std::size_t>(cell_count), 0);
  for (int c : cells[static_cast<std::size_t>(block)]) ++out[static_cast<std::size_t>(c)];
  return out;
}

std::vector<double> signature_words(const PhiLayout& layout, const CellSignature& sig) {
  std::vector<double> out(sig.cells.size() * static_cast<std::size_t>(layout.words), 0.0);
  for (std::size_t j = 0; j < sig.cells.size(); ++j)
    for (int c : sig.cells[j])
      out[j * static_cast<std::size_t>(layout.words) + static_cast<std::size_t>(layout.word_of(c))] +=
          layout.digit_weight(c);
  return out;
}

PointCloud representative(const PhiLayout& layout, const Partition& partition, const CellSignature& sig) {
  PointCloud Y(layout.d, partition.n());
  for (int j = 0; j < partition.block_count(); ++j) {
    const auto& block = partition.block(j);
    const auto& cells = sig.cells[static_cast<std::size_t>(j)];
    if (cells.size() != block.size()) throw DimensionError("signature does not match the partition");
    std::vector<std::vector<double>> centers;
    for (int c : cells) {
      auto z = layout.cell_center(sig.q, c);
      if (!z) throw BuildError("signature uses a cell with an empty plateau");
      centers.emplace_back(z->data(), z->data() + z->size());
    }
    std::sort(centers.begin(), centers.end());
    for (std::size_t i = 0; i < block.size(); ++i)
      for (int r = 0; r < layout.d; ++r) Y(r, block[i]) = centers[i][static_cast<std::size_t>(r)];
  }
  return Y;
}

std::vector<ShiftTable> realized_signatures(const PhiLayout& layout, const Partition& partition,
                                            const std::vector<PointCloud>& samples, bool ramp_completion,
                                            int completion_limit) {
  check_samples(samples, layout.d, partition.n());
  const ReluNetwork probe = build_phi_probe(layout);
  const std::vector<int> block_of = partition.block_of();
  std::vector<std::map<std::vector<std::vector<int>>, int>> found(static_cast<std::size_t>(layout.N));
  const int n = partition.n();
  const int K = layout.m + 1;
  std::vector<Vector> outs(static_cast<std::size_t>(n));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (int i = 0; i < n; ++i) outs[static_cast<std::size_t>(i)] = probe.evaluate(samples[s].col(i));
    for (int q = 0; q < layout.N; ++q) {
      std::vector<std::vector<int>> cells(static_cast<std::size_t>(partition.block_count()));
      bool all_good = true;
      for (int i = 0; i < n && all_good; ++i) {
        bool good = false;
        const std::vector<int> idx = decode_cell_tuple_from_u(layout, outs[static_cast<std::size_t>(i)], q, good);
        if (!good) {
          all_good = false;
          break;
        }
        int c = 0;
        for (int j = 0; j < layout.d; ++j) c = c * K + idx[static_cast<std::size_t>(j)];
        cells[static_cast<std::size_t>(block_of[static_cast<std::size_t>(i)])].push_back(c);
      }
      if (all_good) {
        for (auto& c : cells) std::sort(c.begin(), c.end());
        // The network's summed words must equal the encoded signature.
        CellSignature sig{q, cells};
        const std::vector<double> words = signature_words(layout, sig);
        for (int j = 0; j < partition.block_count(); ++j)
          for (int w = 0; w < layout.words; ++w) {
            double sum = 0.0;
            for (int i : partition.block(j)) sum += outs[static_cast<std::size_t>(i)][q * layout.words + w];
            if (sum != words[static_cast<std::size_t>(j * layout.words + w)])
              throw BuildError("Phi code does not match the decoded cells");
          }
        found[static_cast<std::size_t>(q)].emplace(std::move(cells), static_cast<int>(s));
        continue;
      }
      if (!ramp_completion) continue;
      // Candidate hat indices per (point, coordinate): every hat that is not off.
      std::vector<std::vector<int>> options(static_cast<std::size_t>(n * layout.d));
      long combos = 1;
      const int ubase = layout.output_dim() + q * layout.d * K;
      for (int i = 0; i < n && combos <= completion_limit; ++i)
        for (int j = 0; j < layout.d; ++j) {
          auto& opt = options[static_cast<std::size_t>(i * layout.d + j)];
          for (int kk = 0; kk < K; ++kk)
            if (outs[static_cast<std::size_t>(i)][ubase + j * K + kk] < 1.0) opt.push_back(kk);
          combos *= static_cast<long>(opt.size());
        }
      if (combos == 0 || combos > completion_limit) continue;
      std::vector<std::size_t> pick(options.size(), 0);
      for (long t = 0; t < combos; ++t) {
        std::vector<std::vector<int>> cc(static_cast<std::size_t>(partition.block_count()));
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
          int c = 0;
          for (int j = 0; j < layout.d; ++j) {
            const auto& opt = options[static_cast<std::size_t>(i * layout.d + j)];
            c = c * K + opt[pick[static_cast<std::size_t>(i * layout.d + j)]];
          }
          if (!layout.cell_center(q, c)) ok = false;
          cc[static_cast<std::size_t>(block_of[static_cast<std::size_t>(i)])].push_back(c);
        }
        if (ok) {
          for (auto& c : cc) std::sort(c.begin(), c.end());
          found[static_cast<std::size_t>(q)].emplace(std::move(cc), static_cast<int>(s));
        }
        for (std::size_t a = 0; a < pick.size(); ++a) {
          if (++pick[a] < options[a].size()) break;
          pick[a] = 0;
        }
      }
    }
  }
  std::vector<ShiftTable> tables(static_cast<std::size_t>(layout.N));
  for (int q = 0; q < layout.N; ++q)
    for (auto& [cells, s] : found[static_cast<std::size_t>(q)]) {
      tables[static_cast<std::size_t>(q)].signatures.push_back({q, cells});
      tables[static_cast<std::size_t>(q)].sample_index.push_back(s);
    }
  return tables;
}

ShiftTable realized_signatures(const std::vector<PointCloud>& samples, const Partition& partition,
                               const PhiLayout& layout, int q) {
  if (q < 0 || q >= layout.N) throw DomainError("shift index out of range");
  return realized_signatures(layout, partition, samples)[static_cast<std::size_t>(q)];
}

std::vector<ShiftTable> exhaustive_signatures(const PhiLayout& layout, const Partition& partition, std::size_t cap) {
  std::vector<ShiftTable> tables(static_cast<std::size_t>(layout.N));
  for (int q = 0; q < layout.N; ++q) {
    std::vector<int> valid;
    for (int c = 0; c < layout.cells; ++c)
      if (layout.cell_center(q, c)) valid.push_back(c);
    // Multisets per block.
    std::vector<std::vector<std::vector<int>>> per_block;
    double total = 1.0;
    for (int j = 0; j < partition.block_count(); ++j) {
      const int size = static_cast<int>(partition.block(j).size());
      double count = 1.0;
      for (int i = 1; i <= size; ++i) count = count * (static_cast<double>(valid.size()) + i - 1) / i;
      total *= count;
      if (total > static_cast<double>(cap))
        throw BuildError("exhaustive signature table exceeds the cap of " + std::to_string(cap));
      std::vector<std::vector<int>> sets;
      std::vector<int> cur;
      auto rec = [&](auto&& self, std::size_t start) -> void {
        if (static_cast<int>(cur.size()) == size) {
          sets.push_back(cur);
          return;
        }
        for (std::size_t v = start; v < valid.size(); ++v) {
          cur.push_back(valid[v]);
          self(self, v);
          cur.pop_back();
        }
      };
      rec(rec, 0);
      per_block.push_back(std::move(sets));
    }
    std::vector<std::size_t> pos(per_block.size(), 0);
    auto& table = tables[static_cast<std::size_t>(q)];
    while (true) {
      CellSignature sig{q, {}};
      for (std::size_t j = 0; j < per_block.size(); ++j) sig.cells.push_back(per_block[j][pos[j]]);
      table.signatures.push_back(std::move(sig));
      table.sample_index.push_back(-1);
      std::size_t j = 0;
      while (j < pos.size() && ++pos[j] == per_block[j].size()) pos[j++] = 0;
      if (j == pos.size()) break;
    }
  }
  return tables;
}

double quantize_level(double value, double f_mid, double eps) { return std::trunc((value - f_mid) / eps); }

ReluNetwork build_rho(const PhiLayout& layout, const Partition& partition, const std::vector<QuantizedTable>& tables,
                      double f_mid, double eps) {
  if (static_cast<int>(tables.size()) != layout.N) throw DimensionError("need one table per shift");
  const int k = partition.block_count();
  const int D = layout.output_dim();
  GraphBuilder g(k * D);
  std::vector<Expr> per_shift;
  for (int q = 0; q < layout.N; ++q) {
    const QuantizedTable& t = tables[static_cast<std::size_t>(q)];
    if (t.signatures.empty()) throw BuildError("no realized signature for shift " + std::to_string(q));
    std::vector<Expr> lanes;
    for (int j = 0; j < k; ++j)
      for (int w = 0; w < layout.words; ++w) lanes.push_back(g.input(j * D + q * layout.words + w));
    std::vector<std::vector<double>> keys;
    keys.reserve(t.signatures.size());
    for (const CellSignature& sig : t.signatures) keys.push_back(signature_words(layout, sig));
    per_shift.push_back(ops::vector_lookup(g, lanes, keys, t.levels));
  }
  const Expr med = ops::median(g, per_shift);
  return g.build({g.combine({{eps, med}}, f_mid)});
}

BuiltDeepSets build_deepsets(const TargetFunction& f, int d, int n, int m, const Partition& partition,
                             const std::vector<PointCloud>& samples, const DeepSetsOptions& options) {
  if (partition.n() != n) throw DimensionError("partition size differs from n");
  if (!options.exhaustive && samples.empty()) throw DomainError("sample-driven build needs samples");
  BuiltDeepSets b{build_phi(make_phi_layout(d, n, m, partition.max_block_size() + 1)),
                  ReluNetwork({Layer(SparseMatrix::identity(1), Vector::Zero(1), Activation::identity)}),
                  partition,
                  make_phi_layout(d, n, m, partition.max_block_size() + 1),
                  m,
                  1.0 / (2 * d * n + 1),
                  0.0,
                  0.0,
                  {}};
  b.eps = options.eps ? *options.eps : f.omega_linf(1.0 / (2.0 * m), n * d);
  if (!(b.eps > 0.0)) throw DomainError("quantization step must be positive");
  b.f_mid = options.f_mid ? *options.f_mid : f.eval(PointCloud::Constant(d, n, 0.5));
  std::vector<ShiftTable> tables = options.exhaustive ? exhaustive_signatures(b.layout, partition, options.table_cap)
                                                      : realized_signatures(b.layout, partition, samples, options.ramp_completion);
  std::vector<QuantizedTable> quantized(tables.size());
  for (std::size_t q = 0; q < tables.size(); ++q) {
    const ShiftTable& t = tables[q];
    if (t.signatures.size() > options.table_cap)
      throw BuildError("signature table of shift " + std::to_string(q) + " exceeds the cap of " +
                       std::to_string(options.table_cap));
    b.table_sizes.push_back(t.signatures.size());
    for (std::size_t s = 0; s < t.signatures.size(); ++s) {
      const PointCloud Y = representative(b.layout, partition, t.signatures[s]);
      const double v = options.value ? options.value(t.signatures[s], Y, t.sample_index[s]) : f.eval(Y);
      quantized[q].signatures.push_back(t.signatures[s]);
      quantized[q].levels.push_back(quantize_level(v, b.f_mid, b.eps));
    }
  }
  b.rho = build_rho(b.layout, partition, quantized, b.f_mid, b.eps);
  return b;
}

BuiltDeepSets build_nonequivariant(const TargetFunction& f, int d, int n, int m,
                                   const std::vector<PointCloud>& samples, const DeepSetsOptions& options) {
  return build_deepsets(f, d, n, m, Partition::singletons(n), samples, options);
}

Vector block_sums(const BuiltDeepSets& b, const PointCloud& X) {
  const PhiLayout& L = b.layout;
  if (X.rows() != L.d || X.cols() != b.partition.n()) throw DimensionError("cloud shape does not match the build");
  const int D = L.output_dim();
  std::vector<Vector> phis;
  phis.reserve(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.cols(); ++i) phis.push_back(b.phi.evaluate(X.col(i)));
  Vector out = Vector::Zero(b.partition.block_count() * D);
  std::vector<double> vals;
  for (int j = 0; j < b.partition.block_count(); ++j) {
    const auto& block = b.partition.block(j);
    for (int r = 0; r < D; ++r) {
      // Summing in sorted order makes the sum independent of point order.
      vals.clear();
      for (int i : block) vals.push_back(phis[static_cast<std::size_t>(i)][r]);
      std::sort(vals.begin(), vals.end());
      double s = 0.0;
      for (double v : vals) s += v;
      out[j * D + r] = s;
    }
  }
  return out;
}

double deepsets_eval(const BuiltDeepSets& b, const PointCloud& X) { return b.rho.evaluate(block_sums(b, X))[0]; }

int bad_shift_count(const PhiLayout& layout, const PointCloud& X) {
  int bad = 0;
  for (int q = 0; q < layout.N; ++q) {
    for (Eigen::Index i = 0; i < X.cols(); ++i)
      if (classify_shift(X.col(i), q, layout) == ShiftClass::bad) {
        ++bad;
        break;
      }
  }
  return bad;
}

}  // namespace eqapprox
