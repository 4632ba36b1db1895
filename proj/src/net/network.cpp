#include "eqapprox/net/network.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "eqapprox/common/error.hpp"

namespace eqapprox {

SparseMatrix::SparseMatrix(int r, int c) : rows(0), cols(c) {
  row_ptr.assign(1, 0);
  for (int i = 0; i < r; ++i) push_row({});
}

SparseMatrix SparseMatrix::from_dense(const Matrix& dense) {
  SparseMatrix m(0, static_cast<int>(dense.cols()));
  std::vector<std::pair<int, double>> row;
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    row.clear();
    for (Eigen::Index c = 0; c < dense.cols(); ++c)
      if (dense(r, c) != 0.0) row.emplace_back(static_cast<int>(c), dense(r, c));
    m.push_row(row);
  }
  return m;
}

SparseMatrix SparseMatrix::identity(int n, double scale) {
  SparseMatrix m(0, n);
  for (int i = 0; i < n; ++i) m.push_row({{i, scale}});
  return m;
}

SparseMatrix SparseMatrix::from_triplets(int r, int c,
                                         std::vector<std::tuple<int, int, double>> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  SparseMatrix m(0, c);
  std::size_t t = 0;
  std::vector<std::pair<int, double>> row;
  for (int i = 0; i < r; ++i) {
    row.clear();
    while (t < triplets.size() && std::get<0>(triplets[t]) == i) {
      const auto [ri, ci, v] = triplets[t];
      if (ci < 0 || ci >= c) throw DimensionError("triplet column out of range");
      if (!row.empty() && row.back().first == ci)
        row.back().second += v;
      else
        row.emplace_back(ci, v);
      ++t;
    }
    std::erase_if(row, [](const auto& e) { return e.second == 0.0; });
    m.push_row(row);
  }
  if (t != triplets.size()) throw DimensionError("triplet row out of range");
  return m;
}

Matrix SparseMatrix::to_dense() const {
  Matrix d = Matrix::Zero(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col[k]) = val[k];
  return d;
}

double SparseMatrix::coeff(int r, int c) const {
  const auto begin = col.begin() + row_ptr[r];
  const auto end = col.begin() + row_ptr[r + 1];
  const auto it = std::lower_bound(begin, end, c);
  if (it == end || *it != c) return 0.0;
  return val[static_cast<std::size_t>(it - col.begin())];
}

void SparseMatrix::push_row(const std::vector<std::pair<int, double>>& entries) {
  for (const auto& [c, v] : entries) {
    if (c < 0 || c >= cols) throw DimensionError("sparse row column out of range");
    col.push_back(c);
    val.push_back(v);
  }
  row_ptr.push_back(static_cast<std::int64_t>(col.size()));
  ++rows;
}

SparseMatrix SparseMatrix::operator*(const SparseMatrix& rhs) const {
  if (cols != rhs.rows) throw DimensionError("sparse product shape mismatch");
  SparseMatrix out(0, rhs.cols);
  std::vector<double> acc(static_cast<std::size_t>(rhs.cols), 0.0);
  std::vector<char> seen(static_cast<std::size_t>(rhs.cols), 0);
  std::vector<int> touched;
  std::vector<std::pair<int, double>> row;
  for (int r = 0; r < rows; ++r) {
    touched.clear();
    for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const int mid = col[k];
      const double a = val[k];
      for (std::int64_t j = rhs.row_ptr[mid]; j < rhs.row_ptr[mid + 1]; ++j) {
        const int c = rhs.col[j];
        if (!seen[c]) {
          seen[c] = 1;
          touched.push_back(c);
        }
        acc[c] += a * rhs.val[j];
      }
    }
    std::sort(touched.begin(), touched.end());
    row.clear();
    for (int c : touched) {
      if (acc[c] != 0.0) row.emplace_back(c, acc[c]);
      acc[c] = 0.0;
      seen[c] = 0;
    }
    out.push_row(row);
  }
  return out;
}

Vector SparseMatrix::operator*(const Vector& x) const {
  if (x.size() != cols) throw DimensionError("sparse matvec shape mismatch");
  Vector y(rows);
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) acc += val[k] * x[col[k]];
    y[r] = acc;
  }
  return y;
}

Layer::Layer(SparseMatrix weights, Vector bias, Activation activation)
    : weights_(std::move(weights)), bias_(std::move(bias)), activation_(activation) {
  if (bias_.size() != weights_.rows)
    throw DimensionError("bias length " + std::to_string(bias_.size()) +
                         " does not match weight rows " + std::to_string(weights_.rows));
  if (weights_.rows <= 0 || weights_.cols <= 0) throw DimensionError("empty layer");
  for (double v : weights_.val)
    if (!std::isfinite(v)) throw DomainError("non-finite weight");
  for (Eigen::Index i = 0; i < bias_.size(); ++i)
    if (!std::isfinite(bias_[i])) throw DomainError("non-finite bias");
}

Layer::Layer(const Matrix& weights, Vector bias, Activation activation)
    : Layer(SparseMatrix::from_dense(weights), std::move(bias), activation) {}

void Layer::apply(const double* x, double* y) const {
  const auto* rp = weights_.row_ptr.data();
  const auto* cp = weights_.col.data();
  const auto* vp = weights_.val.data();
  const double* bp = bias_.data();
  const int rows = weights_.rows;
  if (activation_ == Activation::relu) {
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::int64_t k = rp[r]; k < rp[r + 1]; ++k) acc += vp[k] * x[cp[k]];
      acc += bp[r];
      y[r] = acc > 0.0 ? acc : 0.0;
    }
  } else {
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::int64_t k = rp[r]; k < rp[r + 1]; ++k) acc += vp[k] * x[cp[k]];
      y[r] = acc + bp[r];
    }
  }
}

ReluNetwork::ReluNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DimensionError("network has no layers");
  for (std::size_t j = 1; j < layers_.size(); ++j)
    if (layers_[j].in_dim() != layers_[j - 1].out_dim())
      throw DimensionError("layer " + std::to_string(j) + " expects " +
                           std::to_string(layers_[j].in_dim()) + " inputs, previous layer has " +
                           std::to_string(layers_[j - 1].out_dim()) + " outputs");
}

Vector ReluNetwork::evaluate(const Vector& x) const {
  if (x.size() != input_dim())
    throw DimensionError("input length " + std::to_string(x.size()) + ", network expects " +
                         std::to_string(input_dim()));
  Vector cur = x;
  Vector next;
  for (const Layer& layer : layers_) {
    next.resize(layer.out_dim());
    layer.apply(cur.data(), next.data());
    cur.swap(next);
  }
  return cur;
}

Vector evaluate(const ReluNetwork& net, const Vector& x) { return net.evaluate(x); }

namespace {

Layer fuse(const Layer& inner, const Layer& outer) {
  // outer(W2 (W1 x + b1) + b2) = outer((W2 W1) x + (W2 b1 + b2)).
  SparseMatrix W = outer.weights() * inner.weights();
  Vector b = outer.weights() * inner.bias() + outer.bias();
  return Layer(std::move(W), std::move(b), outer.activation());
}

// Interior identity layers fused away; the result has relu layers followed by
// a single identity layer.
std::vector<Layer> canonical_layers(const ReluNetwork& net) {
  std::vector<Layer> out;
  for (const Layer& layer : net.layers()) {
    if (!out.empty() && out.back().activation() == Activation::identity) {
      Layer prev = out.back();
      out.pop_back();
      out.push_back(fuse(prev, layer));
    } else {
      out.push_back(layer);
    }
  }
  if (out.back().activation() == Activation::relu) {
    const int w = out.back().out_dim();
    out.emplace_back(SparseMatrix::identity(w), Vector::Zero(w), Activation::identity);
  }
  return out;
}

// Replace the final identity layer y = W h + b by relu pairs carried through
// `extra` additional layers.
std::vector<Layer> pad_depth(std::vector<Layer> layers, int extra) {
  if (extra <= 0) return layers;
  const Layer last = layers.back();
  layers.pop_back();
  const int w = last.out_dim();
  const SparseMatrix& W = last.weights();
  SparseMatrix split(0, W.cols);
  std::vector<std::pair<int, double>> row;
  for (int sign : {1, -1}) {
    for (int r = 0; r < W.rows; ++r) {
      row.clear();
      for (std::int64_t k = W.row_ptr[r]; k < W.row_ptr[r + 1]; ++k)
        row.emplace_back(W.col[k], sign * W.val[k]);
      split.push_row(row);
    }
  }
  Vector b(2 * w);
  b << last.bias(), -last.bias();
  layers.emplace_back(std::move(split), std::move(b), Activation::relu);
  for (int e = 1; e < extra; ++e) {
    SparseMatrix carry(0, 2 * w);
    for (int r = 0; r < w; ++r) carry.push_row({{r, 1.0}, {r + w, -1.0}});
    for (int r = 0; r < w; ++r) carry.push_row({{r, -1.0}, {r + w, 1.0}});
    layers.emplace_back(std::move(carry), Vector::Zero(2 * w), Activation::relu);
  }
  SparseMatrix merge(0, 2 * w);
  for (int r = 0; r < w; ++r) merge.push_row({{r, 1.0}, {r + w, -1.0}});
  layers.emplace_back(std::move(merge), Vector::Zero(w), Activation::identity);
  return layers;
}

SparseMatrix block_diagonal(const std::vector<const SparseMatrix*>& blocks, bool shared_input) {
  int rows = 0;
  int cols = 0;
  for (const auto* b : blocks) {
    rows += b->rows;
    cols = shared_input ? b->cols : cols + b->cols;
  }
  SparseMatrix out(0, cols);
  int col_offset = 0;
  std::vector<std::pair<int, double>> row;
  for (const auto* b : blocks) {
    for (int r = 0; r < b->rows; ++r) {
      row.clear();
      for (std::int64_t k = b->row_ptr[r]; k < b->row_ptr[r + 1]; ++k)
        row.emplace_back(b->col[k] + col_offset, b->val[k]);
      out.push_row(row);
    }
    if (!shared_input) col_offset += b->cols;
  }
  return out;
}

ReluNetwork stack_impl(const std::vector<ReluNetwork>& nets, bool shared_input) {
  if (nets.empty()) throw DimensionError("cannot stack an empty list of networks");
  std::vector<std::vector<Layer>> canon;
  std::size_t depth = 0;
  for (const auto& net : nets) {
    if (shared_input && net.input_dim() != nets.front().input_dim())
      throw DimensionError("stacked networks must share the input dimension");
    canon.push_back(canonical_layers(net));
    depth = std::max(depth, canon.back().size());
  }
  for (auto& layers : canon)
    layers = pad_depth(std::move(layers), static_cast<int>(depth - layers.size()));
  std::vector<Layer> out;
  for (std::size_t l = 0; l < depth; ++l) {
    std::vector<const SparseMatrix*> blocks;
    std::vector<double> bias;
    for (const auto& layers : canon) {
      blocks.push_back(&layers[l].weights());
      const Vector& b = layers[l].bias();
      bias.insert(bias.end(), b.data(), b.data() + b.size());
    }
    const bool shared = shared_input && l == 0;
    out.emplace_back(block_diagonal(blocks, shared),
                     Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size())),
                     canon.front()[l].activation());
  }
  return ReluNetwork(std::move(out));
}

}  // namespace

ReluNetwork compose(const ReluNetwork& first, const ReluNetwork& second) {
  if (first.output_dim() != second.input_dim())
    throw DimensionError("compose: first outputs " + std::to_string(first.output_dim()) +
                         ", second expects " + std::to_string(second.input_dim()));
  std::vector<Layer> layers(first.layers().begin(), first.layers().end());
  auto it = second.layers().begin();
  if (layers.back().activation() == Activation::identity) {
    Layer last = layers.back();
    layers.pop_back();
    layers.push_back(fuse(last, *it));
    ++it;
  }
  layers.insert(layers.end(), it, second.layers().end());
  return ReluNetwork(std::move(layers));
}

ReluNetwork parallel_stack(const std::vector<ReluNetwork>& nets) { return stack_impl(nets, true); }

ReluNetwork block_stack(const std::vector<ReluNetwork>& nets) { return stack_impl(nets, false); }

ReluNetwork affine_network(const Matrix& A, const Vector& b) {
  if (A.rows() != b.size()) throw DimensionError("affine: bias length mismatch");
  return ReluNetwork({Layer(A, b, Activation::identity)});
}

ReluNetwork identity_network(int dim) {
  return ReluNetwork({Layer(SparseMatrix::identity(dim), Vector::Zero(dim), Activation::identity)});
}

ReluNetwork append_affine(const ReluNetwork& net, const Matrix& A, const Vector& b) {
  if (A.cols() != net.output_dim())
    throw DimensionError("append_affine: matrix has " + std::to_string(A.cols()) +
                         " columns, network outputs " + std::to_string(net.output_dim()));
  return compose(net, affine_network(A, b));
}

ReluNetwork prepend_affine(const ReluNetwork& net, const Matrix& A, const Vector& b) {
  if (A.rows() != net.input_dim()) throw DimensionError("prepend_affine: shape mismatch");
  return compose(affine_network(A, b), net);
}

std::int64_t param_count(const ReluNetwork& net) {
  std::int64_t total = 0;
  for (const Layer& l : net.layers())
    total += static_cast<std::int64_t>(l.out_dim()) * l.in_dim() + l.out_dim();
  return total;
}

std::int64_t nonzero_count(const ReluNetwork& net) {
  std::int64_t total = 0;
  for (const Layer& l : net.layers()) total += l.weights().nnz() + l.out_dim();
  return total;
}

std::int64_t unit_count(const ReluNetwork& net) {
  std::int64_t total = 0;
  for (const Layer& l : net.layers()) total += l.out_dim();
  return total;
}

}  // namespace eqapprox
