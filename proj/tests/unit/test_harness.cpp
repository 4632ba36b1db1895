#include <doctest.h>

#include <cmath>

#include "eqapprox/common/error.hpp"
#include "eqapprox/common/rng.hpp"
#include "eqapprox/frames/frames_bilip.hpp"
#include "eqapprox/harness/harness.hpp"
#include "eqapprox/sets/set_builder.hpp"

using namespace eqapprox;

namespace {

CloudSampler cube(int d, int n) {
  return [=](Rng& r) { return r.uniform_cloud(d, n); };
}

nlohmann::json small_config() {
  return {{"name", "small"}, {"target", "max_coord"}, {"d", 1}, {"n", 2},
          {"m_sweep", {2, 4}}, {"samples", 200}, {"invariance_trials", 50}, {"seed", 9}};
}

}  // namespace

TEST_CASE("sup error of an exact and a shifted evaluator") {
  CloudFn f = [](const PointCloud& X) { return X.sum(); };
  CloudFn g = [](const PointCloud& X) { return X.sum() + 0.1; };
  SupError e0 = measure_sup_error(f, f, cube(2, 3), 200, 1);
  CHECK(e0.sup == 0.0);
  SupError e1 = measure_sup_error(g, f, cube(2, 3), 200, 1);
  CHECK(e1.sup == doctest::Approx(0.1));
  CHECK(e1.mean == doctest::Approx(0.1));
  std::vector<PointCloud> pts = {PointCloud::Zero(1, 1), PointCloud::Ones(1, 1)};
  CloudFn h = [](const PointCloud& X) { return X(0, 0) * 3.0; };
  SupError e2 = measure_sup_error(h, f, pts);
  CHECK(e2.argmax == 1u);
  CHECK(e2.argmax_point(0, 0) == 1.0);
}

TEST_CASE("invariance deviation") {
  GroupSampler flip = [](Rng&, const PointCloud& X) { return PointCloud(-X); };
  CHECK(invariance_deviation([](const PointCloud& X) { return X.norm(); }, flip, cube(2, 2), 200, 3) <= 1e-12);
  CHECK(invariance_deviation([](const PointCloud& X) { return X(0, 0); }, flip, cube(2, 2), 200, 3) > 0.0);

  FiniteGroupAction S3 = FiniteGroupAction::permutation_group(3);
  TemplateSet Z{{Vector::Unit(3, 0), Vector::Unit(3, 1) - Vector::Unit(3, 2)}};
  GroupSampler act = [&](Rng& r, const PointCloud& X) {
    return PointCloud(S3.elements()[r.below(S3.size())] * X);
  };
  CloudFn mf = [&](const PointCloud& X) { return max_filter(X.col(0), Z, S3).sum(); };
  CHECK(invariance_deviation(mf, act, cube(3, 1), 500, 5) <= 1e-12);
}

TEST_CASE("rate slope fits") {
  std::vector<std::pair<double, double>> rows;
  for (int m : {2, 4, 8, 16}) rows.emplace_back(m, 1.0 / m);
  RateFit a = fit_rate_slope(rows);
  CHECK(a.slope == doctest::Approx(-1.0));
  CHECK_FALSE(a.clamped);
  for (auto& r : rows) r.second = 0.3;
  CHECK(std::fabs(fit_rate_slope(rows).slope) < 1e-12);
  rows[0].second = 0.0;
  CHECK(fit_rate_slope(rows).clamped);
  CHECK_THROWS(fit_rate_slope({{1, 1}, {2, 2}}));
}

TEST_CASE("covering numbers") {
  Metric eu = [](const Vector& a, const Vector& b) { return (a - b).norm(); };
  std::vector<Vector> same(50, Vector::Constant(2, 0.3));
  CHECK(estimate_covering(same, eu, 0.01) == 1);
  Rng rng(301);
  std::vector<Vector> pts;
  for (int i = 0; i < 4000; ++i) pts.push_back(rng.uniform_vector(2));
  const int c = estimate_covering(pts, eu, 0.1);
  CHECK(c >= 25);
  CHECK(c <= 400);
  CHECK(covering_slope(pts, eu, {0.2, 0.1, 0.05}) == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("permutation quotient metric") {
  Metric q = permutation_quotient_metric(2, 3);
  Rng rng(303);
  for (int t = 0; t < 100; ++t) {
    PointCloud X = rng.uniform_cloud(2, 3), Y = rng.uniform_cloud(2, 3);
    CHECK(q(flatten(X), flatten(permute_points(X, {2, 0, 1}))) <= 1e-15);
    CHECK(q(flatten(X), flatten(Y)) <= (X - Y).norm() + 1e-15);
  }
}

TEST_CASE("subprocess oracle line protocol") {
  SubprocessOracle o("while read line; do echo 0.5; done");
  CHECK(o(PointCloud::Ones(2, 2)) == 0.5);
  CHECK(o(PointCloud::Zero(1, 3)) == 0.5);
  TargetFunction f = make_target("subprocess", 1, 2, {{"command", "python3 -c 'import sys\nwhile True:\n l = sys.stdin.readline()\n if not l: break\n print(sum(map(float, l.split(\",\"))), flush=True)'"}});
  PointCloud X(1, 2);
  X << 0.25, 0.5;
  CHECK(f.eval(X) == doctest::Approx(0.75));
}

TEST_CASE("registered targets") {
  CHECK(make_target("max_coord", 2, 2).eval(PointCloud::Identity(2, 2)) == 1.0);
  CHECK(make_target("mean", 1, 4).eval(PointCloud::Ones(1, 4)) == 1.0);
  PointCloud X(1, 2);
  X << 0.25, 0.25;
  CHECK(make_target("dg_anchor", 1, 2).eval(X) == 0.0);
  CHECK(make_target("dg_anchor", 1, 2).eval(PointCloud(-X)) == 0.0);
  CHECK_THROWS_AS(make_target("nope", 1, 1), ParseError);
  CHECK(target_ids().size() >= 5);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(parse_config(small_config()));
  nlohmann::json c = small_config();
  c["m_sweep"] = nlohmann::json::array();
  CHECK_THROWS(parse_config(c));
  c = small_config();
  c["m_sweep"] = {4, 2};
  CHECK_THROWS(parse_config(c));
  c = small_config();
  c["builder"] = "magic";
  CHECK_THROWS(parse_config(c));
  c = small_config();
  c.erase("d");
  CHECK_THROWS(parse_config(c));
  CHECK_THROWS(parse_config(nlohmann::json::array()));
}

TEST_CASE("experiment reports are deterministic") {
  ExperimentConfig cfg = parse_config(small_config());
  Report a = run_experiment(cfg);
  Report b = run_experiment(cfg);
  CHECK(report_to_json(a, false).dump() == report_to_json(b, false).dump());
  CHECK(report_to_csv(a) == report_to_csv(b));
  REQUIRE(a.rows.size() == 2);
  for (const auto& r : a.rows) {
    CHECK(r.pass);
    CHECK(r.bound == doctest::Approx(1.0 / r.m));
    CHECK(r.invariance_deviation <= 1e-9);
  }
  CHECK_FALSE(a.slope.has_value());
  CHECK(report_to_json(a)["metadata"]["seed"] == 9);
  CHECK_FALSE(report_to_json(a, false).contains("metadata"));
}

TEST_CASE("equivariant experiment") {
  nlohmann::json c = small_config();
  c["builder"] = "transformer";
  c["target"] = "point_plus_mean";
  c["n"] = 3;
  c["m_sweep"] = {4};
  Report r = run_experiment(parse_config(c));
  CHECK(r.pass);
  CHECK(r.rows[0].invariance_deviation <= 1e-9);
  c["target"] = "max_coord";
  CHECK_THROWS_AS(run_experiment(parse_config(c)), DomainError);
}
