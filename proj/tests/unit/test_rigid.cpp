#include <doctest.h>

#include <cmath>

#include "eqapprox/common/error.hpp"
#include "eqapprox/common/rng.hpp"
#include "eqapprox/frames/frames_bilip.hpp"
#include "eqapprox/rigid/rigid_builder.hpp"

using namespace eqapprox;

namespace {

TupleIndex tuple(std::vector<int> v) { return TupleIndex{std::move(v)}; }

// Householder QR with the signs fixed so that diag(R) > 0.
std::vector<Vector> qr_reference(const Matrix& A) {
  Eigen::HouseholderQR<Matrix> qr(A);
  Matrix Q = qr.householderQ() * Matrix::Identity(A.rows(), A.cols());
  Matrix R = qr.matrixQR().topRows(A.cols()).triangularView<Eigen::Upper>();
  std::vector<Vector> out;
  for (int j = 0; j < A.cols(); ++j) out.push_back(R(j, j) < 0 ? Vector(-Q.col(j)) : Vector(Q.col(j)));
  return out;
}

Vector unit(Rng& rng, int d) {
  Vector v = rng.normal_vector(d);
  return v / v.norm();
}

// Points of D_k(delta) in the unit ball, by rejection.
PointCloud sample_D(Rng& rng, int d, int k, double delta) {
  for (;;) {
    PointCloud X = rng.ball_cloud(d, k);
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    if (membership_D(X, tuple(idx), delta)) return X;
  }
}

TargetFunction frobenius() {
  TargetFunction f;
  f.eval = [](const PointCloud& X) { return X.norm(); };
  f.norm = Norm::l2;
  f.symmetry = Symmetry::o_invariant;
  return f;
}

}  // namespace

TEST_CASE("rigid delta formula") {
  const double eps = 0.25, C = 1.0, alpha = 1.0;
  const int d = 2, n = 3;
  const double expect = 0.5 * eps / (4.0 * C * (std::sqrt(6.0) + 1.0));
  CHECK(rigid_delta(eps, d, n, alpha, C) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(rigid_delta(1e6, 1, 1, 1.0, 1.0) == 1.0);
  const double a = 0.5;
  CHECK(rigid_delta(0.1, 1, 2, a, 2.0) ==
        doctest::Approx(0.5 * std::pow(0.1 / (8.0 * std::pow(std::sqrt(2.0) + 1.0, a)), 1.0 / a)).epsilon(1e-13));
}

TEST_CASE("gram-schmidt accuracies") {
  auto eta = gs_accuracies(3, 0.2);
  REQUIRE(eta.size() == 3);
  const double r = 0.2 / 60.0;
  CHECK(eta[0] == doctest::Approx(r * r * r));
  CHECK(eta[1] == doctest::Approx(r * r));
  CHECK(eta[2] == doctest::Approx(r));
}

TEST_CASE("gram-schmidt oracle basic cases") {
  PointCloud X(2, 2);
  X << 1, 0, 0, 1;
  auto u = gram_schmidt_oracle(X, tuple({0, 1}));
  CHECK((u[0] - Vector::Unit(2, 0)).norm() < 1e-15);
  CHECK((u[1] - Vector::Unit(2, 1)).norm() < 1e-15);
  X << 2, 1, 0, 1;
  u = gram_schmidt_oracle(X, tuple({0, 1}));
  CHECK((u[0] - Vector::Unit(2, 0)).norm() < 1e-15);
  CHECK((u[1] - Vector::Unit(2, 1)).norm() < 1e-15);
  X << 1, 2, 1, 2;
  CHECK_THROWS_AS(gram_schmidt_oracle(X, tuple({0, 1})), DomainError);
}

TEST_CASE("gram-schmidt oracle agrees with QR") {
  Rng rng(101);
  for (int t = 0; t < 200; ++t) {
    Matrix A = Matrix::Random(3, 3);
    if (std::fabs(A.determinant()) < 1e-3) continue;
    auto u = gram_schmidt_oracle(A, tuple({0, 1, 2}));
    auto ref = qr_reference(A);
    for (int j = 0; j < 3; ++j) CHECK((u[static_cast<std::size_t>(j)] - ref[static_cast<std::size_t>(j)]).norm() < 1e-10);
  }
}

TEST_CASE("membership in D") {
  PointCloud X = PointCloud::Identity(3, 3);
  CHECK(membership_D(X, tuple({0, 1, 2}), 0.5));
  PointCloud Y(2, 2);
  Y << 0.5, 0.5, 0.1, 0.1;
  CHECK_FALSE(membership_D(Y, tuple({0, 1}), 0.01));
  PointCloud Z(2, 2);
  Z << 0.5, 0.0, 0.0, 0.25;
  CHECK(membership_D(Z, tuple({0, 1}), 0.25));
  CHECK_FALSE(membership_D(Z, tuple({0, 1}), 0.2500001));
}

TEST_CASE("residual stability bound") {
  Rng rng(103);
  const double eta = 0.01;
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const int d = 3, k = 2;
    auto u = gram_schmidt_oracle(rng.ball_cloud(d, k) + 0.3 * PointCloud::Identity(d, k), tuple({0, 1}), 1e-6);
    std::vector<Vector> ut;
    for (const auto& v : u) ut.push_back(v + eta * rng.uniform() * unit(rng, d));
    StabilityResult r = stability_check_p(rng.ball_point(d), u, ut);
    CHECK(r.holds());
    worst = std::max(worst, r.measured);
    CHECK(r.bound <= 3 * k * eta + 1e-15);
  }
  CHECK(worst <= 0.06);
  std::vector<Vector> u = {Vector::Unit(2, 0)};
  CHECK(stability_check_p(Vector::Constant(2, 0.5), u, u).measured == 0.0);
}

TEST_CASE("normalization stability bound") {
  Rng rng(107);
  for (int t = 0; t < 10000; ++t) {
    Vector z = rng.uniform(0.1, 1.0) * unit(rng, 3);
    Vector zt = z + 0.49 * z.norm() * rng.uniform() * unit(rng, 3);
    CHECK(stability_check_N(z, zt).holds());
  }
  Vector z = Vector::Unit(2, 0);
  CHECK_THROWS_AS(stability_check_N(z, Vector::Zero(2)), DomainError);
}

TEST_CASE("gram-schmidt networks meet eta on D") {
  const double delta = 0.2;
  GSNetworks g = build_gs_networks(2, 2, delta);
  REQUIRE(g.u_nets.size() == 2);
  Rng rng(109);
  for (int t = 0; t < 300; ++t) {
    PointCloud X = sample_D(rng, 2, 2, delta);
    auto u = gram_schmidt_oracle(X, tuple({0, 1}));
    for (int j = 0; j < 2; ++j) {
      Vector ut = g.u_nets[static_cast<std::size_t>(j)].evaluate(flatten(X));
      CHECK((ut - u[static_cast<std::size_t>(j)]).norm() <= g.eta[static_cast<std::size_t>(j)]);
    }
  }
}

TEST_CASE("rigid build on the line") {
  TargetFunction f = frobenius();
  Rng rng(113);
  std::vector<PointCloud> samples;
  for (int i = 0; i < 300; ++i) samples.push_back(rng.ball_cloud(1, 2));
  const double eps = 0.5;
  RigidBuild b = build_o_invariant(f, 1, 2, eps, samples);
  CHECK(b.delta == doctest::Approx(rigid_delta(eps, 1, 2, 1.0, 1.0)));
  double worst = 0.0, flip = 0.0;
  for (const auto& X : samples) {
    worst = std::max(worst, std::fabs(b.eval(X) - f.eval(X)));
    flip = std::max(flip, std::fabs(b.eval(X) - b.eval(-X)));
  }
  CHECK(worst <= eps);
  CHECK(flip <= 2 * eps);

  RigidBuild back = rigid_from_json(rigid_to_json(b));
  for (int i = 0; i < 20; ++i) CHECK(back.eval(samples[static_cast<std::size_t>(i)]) == b.eval(samples[static_cast<std::size_t>(i)]));
}

TEST_CASE("rigid build of a constant") {
  TargetFunction f;
  f.eval = [](const PointCloud&) { return 0.7; };
  f.norm = Norm::l2;
  f.symmetry = Symmetry::o_invariant;
  Rng rng(127);
  std::vector<PointCloud> samples;
  for (int i = 0; i < 100; ++i) samples.push_back(rng.ball_cloud(1, 2));
  RigidBuild b = build_o_invariant(f, 1, 2, 0.5, samples);
  for (const auto& X : samples) CHECK(std::fabs(b.eval(X) - 0.7) <= 0.05);
}

TEST_CASE("translation-invariant build on the line") {
  TargetFunction f;
  f.eval = [](const PointCloud& X) { return centralize(X).norm(); };
  f.norm = Norm::l2;
  f.holder_const = 1.0;
  f.symmetry = Symmetry::e_invariant;
  Rng rng(131);
  std::vector<PointCloud> samples;
  for (int i = 0; i < 200; ++i) samples.push_back(rng.ball_cloud(1, 3, 0.5));
  const double eps = 0.5;
  RigidBuild b = build_e_invariant(f, 1, 3, eps, samples);
  CHECK(b.group == Symmetry::e_invariant);
  for (const auto& X : samples) CHECK(std::fabs(b.eval(X) - f.eval(X)) <= eps);
  CHECK_THROWS_AS(build_e_invariant(f, 1, 3, eps, {PointCloud::Constant(1, 3, 0.9)}), DomainError);
}

TEST_CASE("rotation gap of an invariant function is round-off") {
  Rng rng(137);
  std::vector<PointCloud> samples;
  for (int i = 0; i < 50; ++i) samples.push_back(rng.ball_cloud(3, 4));
  CHECK(rotation_gap([](const PointCloud& X) { return X.norm(); }, samples, rng, 5) <= 1e-12);
  CHECK(rotation_gap([](const PointCloud& X) { return X(0, 0); }, samples, rng, 5) > 0.01);
}
