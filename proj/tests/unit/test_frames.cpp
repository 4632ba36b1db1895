#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "eqapprox/common/error.hpp"
#include "eqapprox/common/rng.hpp"
#include "eqapprox/frames/frames_bilip.hpp"
#include "eqapprox/sets/target.hpp"

using namespace eqapprox;

namespace {

// Cloud with prescribed singular values of its centralized form.
PointCloud cloud_with_spectrum(Rng& rng, const Vector& sigma, int n) {
  const int d = static_cast<int>(sigma.size());
  Matrix U = rng.orthogonal(d);
  Matrix G = rng.normal_vector(n * n).reshaped(n, n);
  Matrix C = G - G.rowwise().mean().replicate(1, n) * 0.0;
  // Orthonormal columns orthogonal to the all-ones vector.
  Matrix B(n, n);
  B.col(0) = Vector::Ones(n) / std::sqrt(double(n));
  B.rightCols(n - 1) = C.leftCols(n - 1);
  Eigen::HouseholderQR<Matrix> qr(B);
  Matrix Q = qr.householderQ();
  Matrix V = Q.block(0, 1, n, d);
  return U * sigma.asDiagonal() * V.transpose();
}

double brute_quotient(const Vector& x, const Vector& y, const FiniteGroupAction& G) {
  double best = 1e300;
  for (const auto& g : G.elements()) best = std::min(best, (g * x - y).norm());
  return best;
}

}  // namespace

TEST_CASE("centralize") {
  PointCloud X(2, 3);
  X << 1, -1, 0, 2, 0, -2;
  CHECK(centralize(X) == X);
  PointCloud one(3, 1);
  one << 1, 2, 3;
  CHECK(centralize(one).norm() == 0.0);
  Rng rng(201);
  PointCloud Y = rng.uniform_cloud(3, 5);
  CHECK(centralize(Y).rowwise().sum().norm() < 1e-14);
}

TEST_CASE("svd frame has 2^d orthogonal elements with uniform weights") {
  Rng rng(203);
  for (int t = 0; t < 50; ++t) {
    Vector s(2);
    s << 2.0, 1.0;
    PointCloud X = cloud_with_spectrum(rng, s, 4);
    CHECK(singular_gap(X) == doctest::Approx(1.0));
    auto F = svd_frame(X, 0.1);
    REQUIRE(F.size() == 4);
    double w = 0.0;
    for (const auto& e : F) {
      CHECK((e.rotation.transpose() * e.rotation - Matrix::Identity(2, 2)).norm() < 1e-12);
      w += e.weight;
    }
    CHECK(w == doctest::Approx(1.0));
  }
}

TEST_CASE("svd frame is equivariant as a set") {
  Rng rng(207);
  Vector s(3);
  s << 1.5, 1.0, 0.4;
  PointCloud X = cloud_with_spectrum(rng, s, 5);
  Matrix Q = rng.orthogonal(3);
  auto F = svd_frame(X, 0.1);
  auto FQ = svd_frame(Q * X, 0.1);
  REQUIRE(F.size() == 8);
  for (const auto& e : F) {
    double best = 1e9;
    for (const auto& h : FQ) best = std::min(best, (Q * e.rotation - h.rotation).norm());
    CHECK(best < 1e-9);
  }
}

TEST_CASE("svd frame rejects degenerate spectra") {
  PointCloud X(2, 4);
  X << 1, -1, 0, 0, 0, 0, 1, -1;
  CHECK_THROWS_AS(svd_frame(X, 0.1), DomainError);
  CHECK_THROWS_AS(svd_frame(PointCloud::Zero(2, 3), 0.1), DomainError);
}

TEST_CASE("angle frame examples") {
  PointCloud X(2, 2);
  X << 1, -1, 0, 0;
  auto F = angle_frame_2d(X, 0.05);
  REQUIRE(F.size() == 2);
  CHECK((F[0].rotation - Matrix::Identity(2, 2)).norm() < 1e-15);
  PointCloud Y(2, 2);
  Y << 0, 0, 1, -1;
  F = angle_frame_2d(Y, 0.05);
  Vector up(2);
  up << 0, 1;
  Vector r = F[0].rotation.transpose() * up;
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(std::fabs(r[1]) < 1e-15);
  PointCloud Z(2, 3);
  Z << 1, -1, 0, 0, 0, 0;
  F = angle_frame_2d(Z, 0.05);
  CHECK(F[2].weight == 0.0);
  CHECK_THROWS_AS(angle_frame_2d(PointCloud::Zero(2, 3), 0.05), DomainError);
}

TEST_CASE("frame average of a constant and of the norm") {
  Rng rng(211);
  Vector s(2);
  s << 2.0, 0.5;
  PointCloud X = cloud_with_spectrum(rng, s, 4) + Vector::Constant(2, 0.3).replicate(1, 4);
  auto F = svd_frame(X, 0.1);
  CHECK(frame_average(F, [](const PointCloud&) { return 1.25; }, X) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(frame_average(F, [](const PointCloud& Y) { return Y.norm(); }, X) ==
        doctest::Approx(centralize(X).norm()).epsilon(1e-12));
  auto A = angle_frame_2d(X);
  CHECK(frame_average(A, [](const PointCloud&) { return -2.0; }, X) == doctest::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("frame average makes a non-invariant evaluator invariant") {
  Rng rng(213);
  auto inner = [](const PointCloud& Y) { return Y(0, 0) * Y(0, 0) + std::fabs(Y(1, 1)) + Y.row(0).maxCoeff(); };
  for (int t = 0; t < 100; ++t) {
    PointCloud X = rng.uniform_cloud(2, 4, -1, 1);
    if (singular_gap(X) < 0.1) continue;
    Matrix Q = rng.orthogonal(2);
    Vector b = rng.uniform_vector(2, -1, 1);
    PointCloud Y = Q * X + b.replicate(1, 4);
    const double a = frame_average(svd_frame(X, 0.1), inner, X);
    const double c = frame_average(svd_frame(Y, 0.1), inner, Y);
    CHECK(std::fabs(a - c) <= 1e-9);
  }
}

TEST_CASE("group validation") {
  CHECK(FiniteGroupAction::sign_group(3).size() == 2);
  CHECK(FiniteGroupAction::permutation_group(3).size() == 6);
  Matrix R = Matrix::Identity(2, 2);
  R(0, 0) = -1;
  CHECK_THROWS(FiniteGroupAction({R}));
  CHECK_THROWS(FiniteGroupAction({Matrix::Identity(2, 2), 2 * Matrix::Identity(2, 2)}));
  Matrix rot(2, 2);
  rot << 0, -1, 1, 0;
  CHECK_THROWS(FiniteGroupAction({Matrix::Identity(2, 2), rot}));
  CHECK(FiniteGroupAction({Matrix::Identity(2, 2), rot, -Matrix::Identity(2, 2), -rot}).size() == 4);
  FiniteGroupAction G = group_from_json(group_to_json(FiniteGroupAction::permutation_group(3)));
  CHECK(G.size() == 6);
}

TEST_CASE("max filter examples") {
  FiniteGroupAction sign = FiniteGroupAction::sign_group(1);
  TemplateSet z{{Vector::Ones(1)}};
  for (double v : {-2.0, -0.5, 0.0, 1.5}) CHECK(max_filter(Vector::Constant(1, v), z, sign)[0] == std::fabs(v));
  FiniteGroupAction S3 = FiniteGroupAction::permutation_group(3);
  TemplateSet e1{{Vector::Unit(3, 0)}};
  Rng rng(217);
  for (int t = 0; t < 100; ++t) {
    Vector x = rng.normal_vector(3);
    CHECK(max_filter(x, e1, S3)[0] == x.maxCoeff());
  }
}

TEST_CASE("max filter is invariant") {
  FiniteGroupAction S3 = FiniteGroupAction::permutation_group(3);
  Rng rng(219);
  TemplateSet Z = gaussian_templates(3, rng);
  CHECK(Z.templates.size() == 6);
  for (int t = 0; t < 100; ++t) {
    Vector x = rng.normal_vector(3);
    for (const auto& g : S3.elements()) CHECK((max_filter(g * x, Z, S3) - max_filter(x, Z, S3)).norm() <= 1e-12);
  }
  TemplateSet back = templates_from_json(templates_to_json(Z));
  CHECK(back.templates[2] == Z.templates[2]);
}

TEST_CASE("quotient distance is a metric on orbits") {
  FiniteGroupAction S3 = FiniteGroupAction::permutation_group(3);
  Rng rng(223);
  for (int t = 0; t < 300; ++t) {
    Vector x = rng.normal_vector(3), y = rng.normal_vector(3), w = rng.normal_vector(3);
    const double dxy = quotient_distance(x, y, S3);
    CHECK(dxy == doctest::Approx(brute_quotient(x, y, S3)));
    CHECK(dxy == doctest::Approx(quotient_distance(y, x, S3)));
    CHECK(dxy <= quotient_distance(x, w, S3) + quotient_distance(w, y, S3) + 1e-12);
    CHECK(quotient_distance(S3.elements()[3] * x, x, S3) <= 1e-15);
  }
}

TEST_CASE("bilipschitz estimates") {
  FiniteGroupAction sign = FiniteGroupAction::sign_group(1);
  TemplateSet z{{Vector::Ones(1)}};
  std::vector<Vector> grid;
  for (int i = 0; i < 100; ++i) grid.push_back(Vector::Constant(1, -1.0 + 2.0 * i / 99.0));
  BilipEstimate e = estimate_bilip([&](const Vector& x) { return max_filter(x, z, sign); }, sign, grid);
  CHECK(std::fabs(e.L1_hat - 1.0) <= 1e-9);
  CHECK(std::fabs(e.L2_hat - 1.0) <= 1e-9);

  // Embedding distances are sup norms, so the identity is isometric on R^1.
  FiniteGroupAction trivial({Matrix::Identity(1, 1)});
  Rng rng(227);
  std::vector<Vector> pts;
  for (int i = 0; i < 50; ++i) pts.push_back(rng.normal_vector(1));
  e = estimate_bilip([](const Vector& x) { return x; }, trivial, pts);
  CHECK(e.L1_hat == doctest::Approx(1.0));
  CHECK(e.L2_hat == doctest::Approx(1.0));
  CHECK_THROWS_AS(estimate_bilip([](const Vector&) { return Vector::Zero(1); }, trivial, pts), DomainError);
}

TEST_CASE("holder constant transfers to the quotient") {
  FiniteGroupAction sign = FiniteGroupAction::sign_group(2);
  Vector a(2);
  a << 0.3, -0.2;
  auto f = [&](const Vector& x) { return quotient_distance(x, a, sign); };
  Rng rng(229);
  std::vector<std::pair<Vector, Vector>> pairs;
  for (int i = 0; i < 2000; ++i) pairs.emplace_back(rng.ball_point(2), rng.ball_point(2));
  HolderRatios r = holder_ratios(f, sign, pairs, 1.0);
  CHECK(r.quotient <= 1.0 + 1e-12);
  CHECK(r.euclidean <= r.quotient + 1e-12);
}

TEST_CASE("bilip approximant of a constant is exact") {
  FiniteGroupAction sign = FiniteGroupAction::sign_group(2);
  Rng rng(231);
  TemplateSet Z = gaussian_templates(2, rng);
  auto E = [&](const Vector& x) { return max_filter(x, Z, sign); };
  std::vector<Vector> samples;
  for (int i = 0; i < 200; ++i) samples.push_back(rng.ball_point(2));
  BilipApproximant A = build_bilip_approximant([](const Vector&) { return 0.4; }, E, sign, samples, 0.1);
  for (const auto& x : samples) CHECK(A.eval_embedded(E(x)) == doctest::Approx(0.4).epsilon(1e-15));
}
