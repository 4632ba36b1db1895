#include "eqapprox/net/graph_builder.hpp"

#include <algorithm>

#include "eqapprox/common/error.hpp"

namespace eqapprox {

namespace {

void merge_terms(std::vector<std::pair<int, double>>& terms) {
  std::sort(terms.begin(), terms.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t out = 0;
  for (std::size_t i = 0; i < terms.size();) {
    const int id = terms[i].first;
    double c = terms[i].second;
    std::size_t j = i + 1;
    while (j < terms.size() && terms[j].first == id) c += terms[j++].second;
    if (c != 0.0) terms[out++] = {id, c};
    i = j;
  }
  terms.resize(out);
}

}  // namespace

GraphBuilder::GraphBuilder(int input_dim) : input_dim_(input_dim) {
  if (input_dim <= 0) throw DimensionError("graph needs at least one input");
  for (int i = 0; i < input_dim; ++i) units_.push_back({0, 0, 0, 0.0});
}

Expr GraphBuilder::input(int i) const {
  if (i < 0 || i >= input_dim_) throw DimensionError("input index out of range");
  return Expr{0, {{i, 1.0}}, 0.0, false};
}

std::vector<Expr> GraphBuilder::inputs() const {
  std::vector<Expr> v;
  for (int i = 0; i < input_dim_; ++i) v.push_back(input(i));
  return v;
}

Expr GraphBuilder::constant(double c) { return Expr{0, {}, c, c >= 0.0}; }

int GraphBuilder::new_unit(int level, const std::vector<std::pair<int, double>>& terms, double bias) {
  const int id = static_cast<int>(units_.size());
  units_.push_back({level, static_cast<int>(terms.size()), static_cast<std::int64_t>(term_ids_.size()), bias});
  for (const auto& [u, c] : terms) {
    term_ids_.push_back(u);
    term_coefs_.push_back(c);
  }
  return id;
}

Expr GraphBuilder::relu(const Expr& e) {
  if (e.is_constant()) return constant(std::max(0.0, e.offset));
  const int u = new_unit(e.level + 1, e.terms, e.offset);
  return Expr{e.level + 1, {{u, 1.0}}, 0.0, true};
}

Expr GraphBuilder::lift_one(const Expr& e) {
  if (e.is_constant()) {
    Expr c = e;
    c.level += 1;
    return c;
  }
  LiftKey key{e.level, e.offset, e.nonneg, e.terms};
  if (auto it = lift_cache_.find(key); it != lift_cache_.end()) return it->second;
  Expr out;
  if (e.nonneg) {
    out = relu(e);
  } else {
    const int p = new_unit(e.level + 1, e.terms, e.offset);
    std::vector<std::pair<int, double>> neg = e.terms;
    for (auto& t : neg) t.second = -t.second;
    const int n = new_unit(e.level + 1, neg, -e.offset);
    out = Expr{e.level + 1, {{p, 1.0}, {n, -1.0}}, 0.0, false};
  }
  lift_cache_.emplace(std::move(key), out);
  return out;
}

Expr GraphBuilder::lift(const Expr& e, int level) {
  if (e.level > level) throw DimensionError("cannot lift an expression downward");
  Expr cur = e;
  if (cur.is_constant()) {
    cur.level = level;
    return cur;
  }
  while (cur.level < level) cur = lift_one(cur);
  return cur;
}

Expr GraphBuilder::materialize(const Expr& e) {
  if (e.is_constant()) return e;
  return lift_one(e);
}

int GraphBuilder::max_level(const std::vector<Expr>& exprs) {
  int L = 0;
  for (const Expr& e : exprs)
    if (!e.is_constant()) L = std::max(L, e.level);
  return L;
}

Expr GraphBuilder::combine(const std::vector<std::pair<double, Expr>>& parts, double offset) {
  int L = 0;
  for (const auto& [c, e] : parts)
    if (c != 0.0 && !e.is_constant()) L = std::max(L, e.level);
  Expr out;
  out.level = L;
  out.offset = offset;
  bool nonneg = true;
  for (const auto& [c, e] : parts) {
    if (c == 0.0) continue;
    if (e.is_constant()) {
      out.offset += c * e.offset;
      continue;
    }
    if (c < 0.0 || !e.nonneg) nonneg = false;
    const Expr lifted = e.level == L ? e : lift(e, L);
    out.offset += c * lifted.offset;
    for (const auto& [u, w] : lifted.terms) out.terms.emplace_back(u, c * w);
  }
  merge_terms(out.terms);
  if (out.terms.empty()) return constant(out.offset);
  out.nonneg = nonneg && out.offset >= 0.0;
  return out;
}

Expr GraphBuilder::sum(const std::vector<Expr>& parts) {
  std::vector<std::pair<double, Expr>> p;
  p.reserve(parts.size());
  for (const Expr& e : parts) p.emplace_back(1.0, e);
  return combine(p);
}

std::vector<Expr> GraphBuilder::apply(const ReluNetwork& net, const std::vector<Expr>& in) {
  if (static_cast<int>(in.size()) != net.input_dim())
    throw DimensionError("apply: network expects " + std::to_string(net.input_dim()) +
                         " inputs, got " + std::to_string(in.size()));
  const int L = max_level(in);
  std::vector<Expr> cur;
  cur.reserve(in.size());
  for (const Expr& e : in) cur.push_back(lift(e, L));
  std::vector<Expr> next;
  std::vector<std::pair<int, double>> terms;
  for (const Layer& layer : net.layers()) {
    const SparseMatrix& W = layer.weights();
    next.clear();
    next.reserve(static_cast<std::size_t>(W.rows));
    int level = 0;
    for (const Expr& e : cur)
      if (!e.is_constant()) level = std::max(level, e.level);
    for (int r = 0; r < W.rows; ++r) {
      terms.clear();
      double offset = 0.0;
      bool nonneg = true;
      for (std::int64_t k = W.row_ptr[r]; k < W.row_ptr[r + 1]; ++k) {
        const double w = W.val[k];
        const Expr& e = cur[W.col[k]];
        offset += w * e.offset;
        if (e.is_constant()) continue;
        if (w < 0.0 || !e.nonneg) nonneg = false;
        for (const auto& [u, c] : e.terms) terms.emplace_back(u, w * c);
      }
      offset += layer.bias()[r];
      merge_terms(terms);
      Expr row;
      if (terms.empty()) {
        row = constant(offset);
      } else {
        row = Expr{level, terms, offset, nonneg && offset >= 0.0};
      }
      next.push_back(layer.activation() == Activation::relu ? relu(row) : row);
    }
    cur.swap(next);
  }
  return cur;
}

ReluNetwork GraphBuilder::build(const std::vector<Expr>& outputs) {
  if (outputs.empty()) throw DimensionError("network needs at least one output");
  const int L = max_level(outputs);
  std::vector<Expr> outs;
  outs.reserve(outputs.size());
  for (const Expr& e : outputs) outs.push_back(lift(e, L));

  const std::size_t total = units_.size();
  std::vector<char> needed(total, 0);
  for (const Expr& e : outs)
    for (const auto& t : e.terms) needed[static_cast<std::size_t>(t.first)] = 1;
  for (std::size_t u = total; u-- > static_cast<std::size_t>(input_dim_);) {
    if (!needed[u]) continue;
    const Unit& unit = units_[u];
    for (int k = 0; k < unit.count; ++k) needed[static_cast<std::size_t>(term_ids_[unit.begin + k])] = 1;
  }
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(L) + 1);
  std::vector<int> local(total, -1);
  for (int i = 0; i < input_dim_; ++i) {
    buckets[0].push_back(i);
    local[static_cast<std::size_t>(i)] = i;
  }
  for (std::size_t u = static_cast<std::size_t>(input_dim_); u < total; ++u) {
    if (!needed[u]) continue;
    auto& b = buckets[static_cast<std::size_t>(units_[u].level)];
    local[u] = static_cast<int>(b.size());
    b.push_back(static_cast<int>(u));
  }

  std::vector<Layer> layers;
  std::vector<std::pair<int, double>> row;
  for (int l = 1; l <= L; ++l) {
    const auto& bucket = buckets[static_cast<std::size_t>(l)];
    SparseMatrix W(0, static_cast<int>(buckets[static_cast<std::size_t>(l) - 1].size()));
    Vector b(static_cast<Eigen::Index>(bucket.size()));
    for (std::size_t r = 0; r < bucket.size(); ++r) {
      const Unit& unit = units_[static_cast<std::size_t>(bucket[r])];
      row.clear();
      for (int k = 0; k < unit.count; ++k)
        row.emplace_back(local[static_cast<std::size_t>(term_ids_[unit.begin + k])], term_coefs_[unit.begin + k]);
      W.push_row(row);
      b[static_cast<Eigen::Index>(r)] = unit.bias;
    }
    layers.emplace_back(std::move(W), std::move(b), Activation::relu);
  }
  SparseMatrix W(0, static_cast<int>(buckets[static_cast<std::size_t>(L)].size()));
  Vector b(static_cast<Eigen::Index>(outs.size()));
  for (std::size_t r = 0; r < outs.size(); ++r) {
    row.clear();
    for (const auto& [u, c] : outs[r].terms) row.emplace_back(local[static_cast<std::size_t>(u)], c);
    W.push_row(row);
    b[static_cast<Eigen::Index>(r)] = outs[r].offset;
  }
  layers.emplace_back(std::move(W), std::move(b), Activation::identity);
  return ReluNetwork(std::move(layers));
}

}  // namespace eqapprox
