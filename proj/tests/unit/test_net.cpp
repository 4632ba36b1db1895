#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "eqapprox/common/error.hpp"
#include "eqapprox/common/rng.hpp"
#include "eqapprox/net/graph_builder.hpp"
#include "eqapprox/net/json_io.hpp"
#include "eqapprox/net/network.hpp"

using namespace eqapprox;

namespace {

ReluNetwork relu_scalar(double w) {
  Matrix W(1, 1);
  W << w;
  return ReluNetwork({Layer(W, Vector::Zero(1), Activation::relu)});
}

// Plain dense forward pass, kept separate from the sparse evaluator.
Vector reference_forward(const ReluNetwork& net, const Vector& x) {
  Vector h = x;
  for (const Layer& L : net.layers()) {
    Vector y = L.weights().to_dense() * h + L.bias();
    if (L.activation() == Activation::relu) y = y.cwiseMax(0.0);
    h = y;
  }
  return h;
}

}  // namespace

TEST_CASE("identity network returns its input") {
  ReluNetwork id = identity_network(3);
  Vector x(3);
  x << -1.5, 0.0, 2.25;
  CHECK(evaluate(id, x) == x);
}

TEST_CASE("relu layer clips negatives") {
  ReluNetwork r = relu_scalar(1.0);
  Vector x(1);
  x << -3.0;
  CHECK(evaluate(r, x)[0] == 0.0);
  x << 2.5;
  CHECK(evaluate(r, x)[0] == 2.5);
}

TEST_CASE("compose with identity is a no-op") {
  Rng rng(3);
  Matrix W = Matrix::Random(4, 2);
  ReluNetwork N({Layer(W, Vector::Constant(4, 0.1), Activation::relu)});
  ReluNetwork c = compose(identity_network(2), N);
  for (int t = 0; t < 50; ++t) {
    Vector x = rng.uniform_vector(2, -2, 2);
    CHECK((evaluate(c, x) - evaluate(N, x)).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("compose applies first then second") {
  ReluNetwork a = compose(relu_scalar(1.0), relu_scalar(-1.0));
  ReluNetwork b = compose(relu_scalar(-1.0), relu_scalar(1.0));
  for (double v : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
    Vector x(1);
    x << v;
    CHECK(evaluate(a, x)[0] == 0.0);
    CHECK(evaluate(b, x)[0] == std::max(0.0, -v));
  }
}

TEST_CASE("compose rejects mismatched shapes") {
  CHECK_THROWS_AS(compose(identity_network(2), identity_network(3)), DimensionError);
}

TEST_CASE("parallel stack duplicates outputs") {
  ReluNetwork s = parallel_stack({identity_network(1), identity_network(1)});
  Vector x(1);
  x << 3.0;
  Vector y = evaluate(s, x);
  REQUIRE(y.size() == 2);
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 3.0);
}

TEST_CASE("parallel stack pads shallow nets exactly") {
  ReluNetwork deep = compose(compose(relu_scalar(1.0), relu_scalar(2.0)), relu_scalar(0.5));
  ReluNetwork shallow = affine_network(Matrix::Constant(1, 1, -2.0), Vector::Constant(1, 0.25));
  ReluNetwork s = parallel_stack({deep, shallow});
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    Vector x = rng.uniform_vector(1, -5, 5);
    Vector y = evaluate(s, x);
    CHECK(y[0] == evaluate(deep, x)[0]);
    CHECK(y[1] == -2.0 * x[0] + 0.25);
  }
}

TEST_CASE("block stack acts on disjoint slices") {
  ReluNetwork b = block_stack({relu_scalar(1.0), relu_scalar(-1.0)});
  Vector x(2);
  x << -2.0, -3.0;
  Vector y = evaluate(b, x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 3.0);
}

TEST_CASE("append and prepend affine") {
  ReluNetwork id = identity_network(2);
  Vector x(2);
  x << 1.5, -2.0;
  CHECK(evaluate(append_affine(id, Matrix::Identity(2, 2), Vector::Zero(2)), x) == x);
  CHECK(evaluate(append_affine(id, -Matrix::Identity(2, 2), Vector::Zero(2)), x) == -x);
  Matrix A(1, 2);
  A << 2.0, 1.0;
  CHECK(evaluate(prepend_affine(relu_scalar(1.0), A, Vector::Constant(1, 1.0)), x)[0] == 2.0);
}

TEST_CASE("digit encoding through append_affine") {
  // One-hot counts for 3 cells packed in base 4.
  Matrix A(1, 3);
  A << 1.0, 4.0, 16.0;
  ReluNetwork enc = append_affine(identity_network(3), A, Vector::Zero(1));
  Vector counts(3);
  counts << 2.0, 0.0, 3.0;
  CHECK(evaluate(enc, counts)[0] == 2.0 + 48.0);
}

TEST_CASE("param count is dense out*in + out") {
  ReluNetwork n({Layer(Matrix::Ones(2, 3), Vector::Zero(2), Activation::relu)});
  CHECK(param_count(n) == 8);
  ReluNetwork n2({Layer(Matrix::Ones(3, 2), Vector::Zero(3), Activation::relu)});
  CHECK(param_count(n2) == 9);
}

TEST_CASE("serialize round trip is bitwise") {
  Rng rng(11);
  Matrix W1 = Matrix::Random(5, 3);
  Matrix W2 = Matrix::Random(2, 5);
  ReluNetwork n({Layer(W1, Vector::Random(5), Activation::relu), Layer(W2, Vector::Random(2), Activation::identity)});
  ReluNetwork back = deserialize(serialize(n));
  REQUIRE(back.depth() == 2);
  for (int t = 0; t < 20; ++t) {
    Vector x = rng.uniform_vector(3, -1, 1);
    CHECK(evaluate(back, x) == evaluate(n, x));
  }
  CHECK(serialize(back) == serialize(n));
}

TEST_CASE("truncated document is a parse error") {
  std::string text = serialize(identity_network(2));
  CHECK_THROWS_AS(deserialize(text.substr(0, text.size() / 2)), ParseError);
}

TEST_CASE("sparse evaluator matches dense forward pass") {
  Rng rng(21);
  std::vector<std::tuple<int, int, double>> trip = {{0, 2, 1.5}, {1, 0, -0.5}, {0, 0, 2.0}, {1, 0, 0.25}};
  SparseMatrix S = SparseMatrix::from_triplets(2, 3, trip);
  CHECK(S.coeff(1, 0) == -0.25);
  ReluNetwork n({Layer(S, Vector::Constant(2, -0.1), Activation::relu),
                 Layer(Matrix::Random(4, 2), Vector::Zero(4), Activation::identity)});
  for (int t = 0; t < 50; ++t) {
    Vector x = rng.uniform_vector(3, -2, 2);
    CHECK((evaluate(n, x) - reference_forward(n, x)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("graph builder affine combinations are exact") {
  GraphBuilder g(2);
  Expr a = g.relu(g.input(0));
  Expr b = g.combine({{2.0, a}, {-1.0, g.input(1)}}, 0.5);
  ReluNetwork n = g.build({b, g.input(1)});
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    Vector x = rng.uniform_vector(2, -3, 3);
    Vector y = evaluate(n, x);
    CHECK(y[0] == doctest::Approx(2.0 * std::max(0.0, x[0]) - x[1] + 0.5).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(x[1]).epsilon(1e-14));
  }
}

TEST_CASE("graph builder prunes dead units") {
  GraphBuilder g(1);
  Expr used = g.relu(g.input(0));
  for (int i = 0; i < 10; ++i) g.relu(g.shift(g.input(0), i));
  ReluNetwork n = g.build({used});
  CHECK(unit_count(n) <= 2);
}

TEST_CASE("network json keeps large layers sparse") {
  ReluNetwork id = identity_network(4);
  nlohmann::json doc = network_to_json(id);
  ReluNetwork back = network_from_json(doc);
  Vector x = Vector::LinSpaced(4, -1, 1);
  CHECK(evaluate(back, x) == x);
}
