#include <doctest.h>

#include <cmath>

#include "eqapprox/common/rng.hpp"
#include "eqapprox/equivariant/equivariant_builder.hpp"
#include "eqapprox/harness/harness.hpp"

using namespace eqapprox;

namespace {

std::vector<PointCloud> cube_samples(int d, int n, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PointCloud> out;
  for (int i = 0; i < count; ++i) out.push_back(rng.uniform_cloud(d, n));
  return out;
}

struct Fixture {
  TargetFunction f = make_target("point_plus_mean", 1, 3);
  std::vector<PointCloud> samples = cube_samples(1, 3, 300, 61);
  EquivariantBuild b = build_equivariant(f, 1, 3, 4, samples);
};

Fixture& fixture() {
  static Fixture fx;
  return fx;
}

}  // namespace

TEST_CASE("omit-one evaluation matches a per-index recompute") {
  const EquivariantBuild& b = fixture().b;
  Rng rng(67);
  for (int t = 0; t < 100; ++t) {
    PointCloud X = rng.uniform_cloud(1, 3);
    Vector out = equivariant_eval(b, X);
    for (int i = 0; i < 3; ++i) {
      Vector own = b.phi().evaluate(X.col(i));
      Vector rest = Vector::Zero(own.size());
      for (int j = 0; j < 3; ++j)
        if (j != i) rest += b.phi().evaluate(X.col(j));
      Vector in(2 * own.size());
      in << own, rest;
      CHECK(std::fabs(b.rho().evaluate(in)[0] - out[i]) <= 1e-12);
    }
  }
}

TEST_CASE("swapping points swaps outputs") {
  const EquivariantBuild& b = fixture().b;
  Rng rng(71);
  for (int t = 0; t < 100; ++t) {
    PointCloud X = rng.uniform_cloud(1, 3);
    PointCloud Y = permute_points(X, {1, 0, 2});
    Vector a = equivariant_eval(b, X), c = equivariant_eval(b, Y);
    CHECK(std::fabs(a[0] - c[1]) <= 1e-12);
    CHECK(std::fabs(a[1] - c[0]) <= 1e-12);
    CHECK(std::fabs(a[2] - c[2]) <= 1e-12);
  }
}

TEST_CASE("equivariant build error on its samples") {
  Fixture& fx = fixture();
  double worst = 0.0;
  for (const auto& X : fx.samples) worst = std::max(worst, (equivariant_eval(fx.b, X) - fx.f.eval_vector(X)).cwiseAbs().maxCoeff());
  CHECK(worst <= 2.0 * fx.f.omega_linf(1.0 / 8.0, 3) + 1e-9);
}

TEST_CASE("equivariance gap of the target is zero") {
  Fixture& fx = fixture();
  Rng rng(73);
  CHECK(equivariance_gap(fx.f, fx.samples, rng) <= 1e-15);
}

TEST_CASE("attention with constant keys is uniform") {
  const int n = 5, D = 3;
  Rng rng(79);
  Matrix X(n, D);
  for (int i = 0; i < n; ++i) X.row(i) << 1.0, rng.uniform(), rng.uniform();
  AttentionHead h;
  h.W_Q = Matrix::Zero(D, 1);
  h.W_Q(0, 0) = 1.0;
  h.W_K = h.W_Q;
  h.W_V = Matrix::Identity(D, D);
  Matrix A = attention_matrix(h, X);
  CHECK((A - Matrix::Constant(n, n, 1.0 / n)).cwiseAbs().maxCoeff() <= 1e-12);
  h.W_V = Matrix::Zero(D, 2);
  CHECK(attention_eval(h, X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single token attention returns its value row") {
  Matrix X(1, 2);
  X << 0.3, -1.2;
  AttentionHead h{Matrix::Random(2, 2), Matrix::Random(2, 2), Matrix::Random(2, 3)};
  CHECK(attention_matrix(h, X)(0, 0) == 1.0);
  CHECK((attention_eval(h, X) - X * h.W_V).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("zero blocks act as the identity through the residual") {
  TransformerNetwork T;
  T.embed = identity_network(3);
  TransformerBlock blk;
  blk.fc = affine_network(Matrix::Zero(3, 3), Vector::Zero(3));
  T.blocks = {blk, blk};
  Matrix tokens = Matrix::Random(4, 3);
  CHECK(transformer_eval(T, tokens) == tokens);
}

TEST_CASE("transformer reproduces the omit-one build") {
  const EquivariantBuild& b = fixture().b;
  TransformerNetwork T = build_transformer(b);
  Rng rng(83);
  for (int t = 0; t < 200; ++t) {
    PointCloud X = rng.uniform_cloud(1, 3);
    CHECK((transformer_apply(T, X) - equivariant_eval(b, X)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("json round trips preserve evaluation") {
  const EquivariantBuild& b = fixture().b;
  EquivariantBuild b2 = equivariant_from_json(equivariant_to_json(b));
  TransformerNetwork T = build_transformer(b);
  TransformerNetwork T2 = transformer_from_json(transformer_to_json(T));
  BuiltDeepSets d2 = deepsets_from_json(deepsets_to_json(b.inner));
  Rng rng(89);
  for (int t = 0; t < 50; ++t) {
    PointCloud X = rng.uniform_cloud(1, 3);
    CHECK(equivariant_eval(b2, X) == equivariant_eval(b, X));
    CHECK(transformer_apply(T2, X) == transformer_apply(T, X));
    CHECK(block_sums(d2, X) == block_sums(b.inner, X));
  }
}
