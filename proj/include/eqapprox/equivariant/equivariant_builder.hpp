#pragma once

#include <json.hpp>
#include <vector>

#include "eqapprox/net/network.hpp"
#include "eqapprox/sets/set_builder.hpp"

namespace eqapprox {

// Omit-one DeepSets: component i is rho(Phi(x_i), sum_{j != i} Phi(x_j)),
// realized as a two-block DeepSets build with partition {{0}, {1..n-1}}.
struct EquivariantBuild {
  BuiltDeepSets inner;
  int d = 1;
  int n = 1;
  int m = 1;

  const ReluNetwork& phi() const { return inner.phi; }
  const ReluNetwork& rho() const { return inner.rho; }
};

// Largest |f(sigma X)_i - f(X)_{sigma(i)}| over the samples and random
// permutations; `worst` receives the index of the worst sample.
double equivariance_gap(const TargetFunction& f, const std::vector<PointCloud>& samples, Rng& rng,
                        int* worst = nullptr);

EquivariantBuild build_equivariant(const TargetFunction& f, int d, int n, int m,
                                   const std::vector<PointCloud>& samples, const DeepSetsOptions& options = {});
Vector equivariant_eval(const EquivariantBuild& b, const PointCloud& X);

struct AttentionHead {
  Matrix W_Q;
  Matrix W_K;
  Matrix W_V;
};

// Row-wise softmax of (X W_Q)(X W_K)^T / sqrt(D), D = X.cols().
Matrix attention_matrix(const AttentionHead& head, const Matrix& X);
// softmax(...) X W_V, evaluated per row as (sum_j e_ij (X W_V)_j) / sum_j e_ij
// with e_ij = exp(s_ij - max_j s_ij).
Matrix attention_eval(const AttentionHead& head, const Matrix& X);

struct TransformerBlock {
  std::vector<AttentionHead> heads;
  Matrix W_O;  // (heads * value width) x D; ignored when there are no heads
  ReluNetwork fc = identity_network(1);
};

// Tokens are rows. `embed` maps a point x in R^d to its token; the output of
// the network for point i is channel `readout` of row i.
struct TransformerNetwork {
  ReluNetwork embed = identity_network(1);
  std::vector<TransformerBlock> blocks;
  int readout = 0;

  int width() const { return embed.output_dim(); }
};

// Block(X) = X + FC(X + Att(X)), FC applied row-wise.
Matrix block_eval(const TransformerBlock& block, const Matrix& X);
Matrix transformer_eval(const TransformerNetwork& T, const Matrix& tokens);
Matrix transformer_embed(const TransformerNetwork& T, const PointCloud& X);
// Readout channel per point.
Vector transformer_apply(const TransformerNetwork& T, const PointCloud& X);

// Token layout: [readout, 1, x (d), Phi (N'), -Phi (N')] with N' the Phi
// output width. Block 1 attends uniformly and sums n*Phi into the last N'
// channels, and its FC turns -Phi into Sigma - Phi. Block 2 has no attention
// and its FC writes rho(Phi, Sigma - Phi) into the readout channel.
TransformerNetwork build_transformer(const EquivariantBuild& b);

nlohmann::json deepsets_to_json(const BuiltDeepSets& b);
BuiltDeepSets deepsets_from_json(const nlohmann::json& doc);
nlohmann::json equivariant_to_json(const EquivariantBuild& b);
EquivariantBuild equivariant_from_json(const nlohmann::json& doc);
nlohmann::json transformer_to_json(const TransformerNetwork& T);
TransformerNetwork transformer_from_json(const nlohmann::json& doc);

}  // namespace eqapprox
