#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eqapprox/common/types.hpp"

namespace eqapprox {

enum class Activation { relu, identity };

// Row-compressed matrix. Entries of a row are sorted by column, and the
// evaluator accumulates them in that order.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::int64_t> row_ptr{0};
  std::vector<std::int32_t> col;
  std::vector<double> val;

  SparseMatrix() = default;
  SparseMatrix(int rows, int cols);

  static SparseMatrix from_dense(const Matrix& dense);
  static SparseMatrix identity(int n, double scale = 1.0);
  // Triplets may arrive in any order; duplicates are summed.
  static SparseMatrix from_triplets(int rows, int cols,
                                    std::vector<std::tuple<int, int, double>> triplets);

  Matrix to_dense() const;
  double coeff(int r, int c) const;
  std::int64_t nnz() const { return static_cast<std::int64_t>(val.size()); }

  // Appends a row; entries must be sorted by column and distinct.
  void push_row(const std::vector<std::pair<int, double>>& entries);

  SparseMatrix operator*(const SparseMatrix& rhs) const;
  Vector operator*(const Vector& x) const;
};

class Layer {
 public:
  Layer(SparseMatrix weights, Vector bias, Activation activation);
  Layer(const Matrix& weights, Vector bias, Activation activation);

  int in_dim() const { return weights_.cols; }
  int out_dim() const { return weights_.rows; }
  const SparseMatrix& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }
  Activation activation() const { return activation_; }

  // y = act(W x + b); each row is accumulated as ((0 + w1 x1) + w2 x2 ...) + b.
  void apply(const double* x, double* y) const;

 private:
  SparseMatrix weights_;
  Vector bias_;
  Activation activation_;
};

class ReluNetwork {
 public:
  explicit ReluNetwork(std::vector<Layer> layers);

  int input_dim() const { return layers_.front().in_dim(); }
  int output_dim() const { return layers_.back().out_dim(); }
  int depth() const { return static_cast<int>(layers_.size()); }
  const std::vector<Layer>& layers() const { return layers_; }

  Vector evaluate(const Vector& x) const;

 private:
  std::vector<Layer> layers_;
};

Vector evaluate(const ReluNetwork& net, const Vector& x);

// second ∘ first. An identity-activation last layer of `first` is fused with
// the first layer of `second`.
ReluNetwork compose(const ReluNetwork& first, const ReluNetwork& second);

// Shared input, concatenated outputs. Shorter networks are padded with
// relu(x) - relu(-x) pairs.
ReluNetwork parallel_stack(const std::vector<ReluNetwork>& nets);

// Networks on disjoint input slices: input is the concatenation of the
// inputs, output the concatenation of the outputs.
ReluNetwork block_stack(const std::vector<ReluNetwork>& nets);

// x ↦ A·net(x) + b.
ReluNetwork append_affine(const ReluNetwork& net, const Matrix& A, const Vector& b);
// x ↦ net(A·x + b).
ReluNetwork prepend_affine(const ReluNetwork& net, const Matrix& A, const Vector& b);

ReluNetwork affine_network(const Matrix& A, const Vector& b);
ReluNetwork identity_network(int dim);

// Dense count: Σ over layers of out·in + out.
std::int64_t param_count(const ReluNetwork& net);
// Stored weights plus biases.
std::int64_t nonzero_count(const ReluNetwork& net);
std::int64_t unit_count(const ReluNetwork& net);

std::string serialize(const ReluNetwork& net);
ReluNetwork deserialize(const std::string& text);

ReluNetwork load_network(const std::string& path);
void save_network(const ReluNetwork& net, const std::string& path);

}  // namespace eqapprox
