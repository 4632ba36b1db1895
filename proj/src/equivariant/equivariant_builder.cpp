#include "eqapprox/equivariant/equivariant_builder.hpp"

#include <algorithm>
#include <cmath>

#include "eqapprox/common/error.hpp"
#include "eqapprox/common/rng.hpp"
#include "eqapprox/net/graph_builder.hpp"
#include "eqapprox/net/json_io.hpp"

namespace eqapprox {

namespace {

PointCloud move_first(const PointCloud& X, Eigen::Index i) {
  PointCloud Y(X.rows(), X.cols());
  Y.col(0) = X.col(i);
  Eigen::Index c = 1;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    if (j != i) Y.col(c++) = X.col(j);
  return Y;
}

double sorted_sum(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

double equivariance_gap(const TargetFunction& f, const std::vector<PointCloud>& samples, Rng& rng, int* worst) {
  if (!f.eval_vector) throw DomainError("equivariant target needs per-point outputs");
  double gap = 0.0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const PointCloud& X = samples[s];
    const std::vector<int> sigma = rng.permutation(static_cast<int>(X.cols()));
    const Vector fx = f.eval_vector(X);
    const Vector fs = f.eval_vector(permute_points(X, sigma));
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
      const double g = std::fabs(fs[i] - fx[sigma[static_cast<std::size_t>(i)]]);
      if (g > gap) {
        gap = g;
        if (worst) *worst = static_cast<int>(s);
      }
    }
  }
  return gap;
}

EquivariantBuild build_equivariant(const TargetFunction& f, int d, int n, int m,
                                   const std::vector<PointCloud>& samples, const DeepSetsOptions& options) {
  if (!f.eval_vector) throw DomainError("equivariant target needs per-point outputs");
  if (n < 1) throw DomainError("need at least one point");
  {
    Rng rng(0x5eed);
    const std::size_t count = std::min<std::size_t>(samples.size(), 200);
    const std::vector<PointCloud> head(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(count));
    int worst = -1;
    const double gap = equivariance_gap(f, head, rng, &worst);
    if (gap > 1e-9)
      throw BuildError("target is not permutation equivariant: sample " + std::to_string(worst) +
                       " deviates by " + std::to_string(gap));
  }
  TargetFunction g = f;
  g.eval = [f](const PointCloud& Y) { return f.eval_vector(Y)[0]; };
  g.symmetry = Symmetry::sp_invariant;
  std::vector<std::vector<int>> blocks{{0}};
  if (n > 1) {
    std::vector<int> rest;
    for (int i = 1; i < n; ++i) rest.push_back(i);
    blocks.push_back(rest);
  }
  const Partition partition(n, blocks);
  std::vector<PointCloud> moved;
  moved.reserve(samples.size() * static_cast<std::size_t>(n));
  for (const PointCloud& X : samples)
    for (int i = 0; i < n; ++i) moved.push_back(move_first(X, i));
  EquivariantBuild b{build_deepsets(g, d, n, m, partition, moved, options), d, n, m};
  return b;
}

Vector equivariant_eval(const EquivariantBuild& b, const PointCloud& X) {
  if (X.rows() != b.d || X.cols() != b.n) throw DimensionError("cloud shape does not match the build");
  const int D = b.inner.layout.output_dim();
  std::vector<Vector> phis;
  for (Eigen::Index i = 0; i < X.cols(); ++i) phis.push_back(b.phi().evaluate(X.col(i)));
  Vector out(b.n);
  Vector in(b.n > 1 ? 2 * D : D);
  std::vector<double> vals;
  for (int i = 0; i < b.n; ++i) {
    in.head(D) = phis[static_cast<std::size_t>(i)];
    if (b.n > 1) {
      for (int r = 0; r < D; ++r) {
        vals.clear();
        for (int j = 0; j < b.n; ++j)
          if (j != i) vals.push_back(phis[static_cast<std::size_t>(j)][r]);
        in[D + r] = sorted_sum(vals);
      }
    }
    out[i] = b.rho().evaluate(in)[0];
  }
  return out;
}

Matrix attention_matrix(const AttentionHead& head, const Matrix& X) {
  if (head.W_Q.rows() != X.cols() || head.W_K.rows() != X.cols() || head.W_Q.cols() != head.W_K.cols())
    throw DimensionError("attention head shapes do not match the tokens");
  const Matrix S = (X * head.W_Q) * (X * head.W_K).transpose() / std::sqrt(static_cast<double>(X.cols()));
  Matrix A(S.rows(), S.cols());
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    const double mx = S.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      A(i, j) = std::exp(S(i, j) - mx);
      z += A(i, j);
    }
    A.row(i) /= z;
  }
  return A;
}

Matrix attention_eval(const AttentionHead& head, const Matrix& X) {
  if (head.W_V.rows() != X.cols()) throw DimensionError("value matrix does not match the tokens");
  if (head.W_Q.rows() != X.cols() || head.W_K.rows() != X.cols() || head.W_Q.cols() != head.W_K.cols())
    throw DimensionError("attention head shapes do not match the tokens");
  const Matrix S = (X * head.W_Q) * (X * head.W_K).transpose() / std::sqrt(static_cast<double>(X.cols()));
  const Matrix V = X * head.W_V;
  Matrix out = Matrix::Zero(X.rows(), V.cols());
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    const double mx = S.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      const double e = std::exp(S(i, j) - mx);
      z += e;
      out.row(i) += e * V.row(j);
    }
    out.row(i) /= z;
  }
  return out;
}

Matrix block_eval(const TransformerBlock& block, const Matrix& X) {
  Matrix Z = X;
  if (!block.heads.empty()) {
    std::vector<Matrix> outs;
    Eigen::Index width = 0;
    for (const AttentionHead& h : block.heads) {
      outs.push_back(attention_eval(h, X));
      width += outs.back().cols();
    }
    Matrix cat(X.rows(), width);
    Eigen::Index c = 0;
    for (const Matrix& o : outs) {
      cat.middleCols(c, o.cols()) = o;
      c += o.cols();
    }
    if (block.W_O.rows() != width || block.W_O.cols() != X.cols()) throw DimensionError("W_O has the wrong shape");
    Z += cat * block.W_O;
  }
  if (block.fc.input_dim() != X.cols() || block.fc.output_dim() != X.cols())
    throw DimensionError("block FC must map the token width to itself");
  Matrix out = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) += block.fc.evaluate(Z.row(i).transpose()).transpose();
  return out;
}

Matrix transformer_eval(const TransformerNetwork& T, const Matrix& tokens) {
  Matrix X = tokens;
  for (const TransformerBlock& b : T.blocks) X = block_eval(b, X);
  return X;
}

Matrix transformer_embed(const TransformerNetwork& T, const PointCloud& X) {
  if (X.rows() != T.embed.input_dim()) throw DimensionError("point dimension does not match the embedding");
  Matrix tokens(X.cols(), T.width());
  for (Eigen::Index i = 0; i < X.cols(); ++i) tokens.row(i) = T.embed.evaluate(X.col(i)).transpose();
  return tokens;
}

Vector transformer_apply(const TransformerNetwork& T, const PointCloud& X) {
  return transformer_eval(T, transformer_embed(T, X)).col(T.readout);
}

TransformerNetwork build_transformer(const EquivariantBuild& b) {
  const int d = b.d;
  const int n = b.n;
  const int Np = b.inner.layout.output_dim();
  const int D = 2 + d + 2 * Np;
  const int phi0 = 2 + d;
  const int neg0 = 2 + d + Np;

  GraphBuilder g(d);
  const std::vector<Expr> x = g.inputs();
  const std::vector<Expr> phi = g.apply(b.phi(), x);
  std::vector<Expr> outs{GraphBuilder::constant(0.0), GraphBuilder::constant(1.0)};
  outs.insert(outs.end(), x.begin(), x.end());
  outs.insert(outs.end(), phi.begin(), phi.end());
  for (const Expr& e : phi) outs.push_back(g.scale(e, -1.0));
  TransformerNetwork T{g.build(outs), {}, 0};

  AttentionHead head;
  head.W_Q = Matrix::Zero(D, 1);
  head.W_Q(1, 0) = 1.0;
  head.W_K = head.W_Q;
  head.W_V = Matrix::Zero(D, D);
  for (int r = 0; r < Np; ++r) head.W_V(phi0 + r, neg0 + r) = static_cast<double>(n);
  Matrix carry = Matrix::Zero(D, D);
  for (int r = 0; r < Np; ++r) {
    carry(neg0 + r, phi0 + r) = 1.0;
    carry(neg0 + r, neg0 + r) = 1.0;
  }
  T.blocks.push_back({{head}, Matrix::Identity(D, D), affine_network(carry, Vector::Zero(D))});

  // rho reads [Phi(x_i), Sigma - Phi(x_i)] (one block when n = 1).
  const int rho_in = b.rho().input_dim();
  Matrix pick = Matrix::Zero(rho_in, D);
  for (int r = 0; r < Np; ++r) pick(r, phi0 + r) = 1.0;
  if (rho_in == 2 * Np)
    for (int r = 0; r < Np; ++r) pick(Np + r, neg0 + r) = 1.0;
  Matrix place = Matrix::Zero(D, 1);
  place(0, 0) = 1.0;
  ReluNetwork fc2 = append_affine(prepend_affine(b.rho(), pick, Vector::Zero(rho_in)), place, Vector::Zero(D));
  T.blocks.push_back({{}, Matrix(), fc2});
  return T;
}

nlohmann::json deepsets_to_json(const BuiltDeepSets& b) {
  nlohmann::json j;
  j["kind"] = "deepsets";
  j["d"] = b.layout.d;
  j["n"] = b.layout.n;
  j["m"] = b.m;
  j["base"] = b.layout.base;
  j["delta"] = b.delta;
  j["eps"] = b.eps;
  j["f_mid"] = b.f_mid;
  j["partition"] = b.partition.blocks();
  j["table_sizes"] = b.table_sizes;
  j["phi"] = network_to_json(b.phi);
  j["rho"] = network_to_json(b.rho);
  return j;
}

BuiltDeepSets deepsets_from_json(const nlohmann::json& doc) {
  try {
    const int d = doc.at("d").get<int>();
    const int n = doc.at("n").get<int>();
    const int m = doc.at("m").get<int>();
    BuiltDeepSets b{network_from_json(doc.at("phi")),
                    network_from_json(doc.at("rho")),
                    Partition(n, doc.at("partition").get<std::vector<std::vector<int>>>()),
                    make_phi_layout(d, n, m, doc.at("base").get<int>()),
                    m,
                    doc.at("delta").get<double>(),
                    doc.at("eps").get<double>(),
                    doc.at("f_mid").get<double>(),
                    doc.value("table_sizes", std::vector<std::size_t>{})};
    if (b.phi.input_dim() != d || b.phi.output_dim() != b.layout.output_dim())
      throw ParseError("phi network does not match the layout");
    if (b.rho.input_dim() != b.partition.block_count() * b.layout.output_dim())
      throw ParseError("rho network does not match the layout");
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("deepsets document: ") + e.what());
  }
}

nlohmann::json equivariant_to_json(const EquivariantBuild& b) {
  nlohmann::json j = deepsets_to_json(b.inner);
  j["kind"] = "equivariant";
  return j;
}

EquivariantBuild equivariant_from_json(const nlohmann::json& doc) {
  BuiltDeepSets inner = deepsets_from_json(doc);
  EquivariantBuild b{inner, inner.layout.d, inner.layout.n, inner.m};
  return b;
}

nlohmann::json transformer_to_json(const TransformerNetwork& T) {
  nlohmann::json j;
  j["kind"] = "transformer";
  j["readout"] = T.readout;
  j["embed"] = network_to_json(T.embed);
  j["blocks"] = nlohmann::json::array();
  for (const TransformerBlock& b : T.blocks) {
    nlohmann::json jb;
    jb["heads"] = nlohmann::json::array();
    for (const AttentionHead& h : b.heads)
      jb["heads"].push_back({{"W_Q", matrix_to_json(h.W_Q)}, {"W_K", matrix_to_json(h.W_K)}, {"W_V", matrix_to_json(h.W_V)}});
    if (!b.heads.empty()) jb["W_O"] = matrix_to_json(b.W_O);
    jb["fc"] = network_to_json(b.fc);
    j["blocks"].push_back(jb);
  }
  return j;
}

TransformerNetwork transformer_from_json(const nlohmann::json& doc) {
  try {
    TransformerNetwork T{network_from_json(doc.at("embed")), {}, doc.at("readout").get<int>()};
    for (const auto& jb : doc.at("blocks")) {
      TransformerBlock b{{}, Matrix(), network_from_json(jb.at("fc"))};
      for (const auto& jh : jb.at("heads"))
        b.heads.push_back({matrix_from_json(jh.at("W_Q")), matrix_from_json(jh.at("W_K")), matrix_from_json(jh.at("W_V"))});
      if (!b.heads.empty()) b.W_O = matrix_from_json(jb.at("W_O"));
      T.blocks.push_back(std::move(b));
    }
    if (T.readout < 0 || T.readout >= T.width()) throw ParseError("readout channel out of range");
    return T;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("transformer document: ") + e.what());
  }
}

}  // namespace eqapprox
