#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "eqapprox/common/error.hpp"
#include "eqapprox/common/rng.hpp"
#include "eqapprox/gadgets/gadgets.hpp"

using namespace eqapprox;

namespace {

// Piecewise definition: 1 on |x-k| <= (1-delta)/2, 0 beyond (1+delta)/2,
// linear between.
double hat_reference(double x, int k, double delta) {
  const double r = std::fabs(x - k);
  const double inner = (1.0 - delta) / 2.0;
  const double outer = (1.0 + delta) / 2.0;
  if (r <= inner) return 1.0;
  if (r >= outer) return 0.0;
  return (outer - r) / delta;
}

double eval1(const ReluNetwork& n, double a) {
  Vector x(1);
  x << a;
  return n.evaluate(x)[0];
}

double eval2(const ReluNetwork& n, double a, double b) {
  Vector x(2);
  x << a, b;
  return n.evaluate(x)[0];
}

}  // namespace

TEST_CASE("hat network matches the piecewise reference") {
  for (double delta : {0.1, 0.25, 0.4}) {
    ReluNetwork h = hat_network(2, delta);
    for (int i = 0; i <= 400; ++i) {
      const double x = i / 100.0;
      CHECK(std::fabs(eval1(h, x) - hat_reference(x, 2, delta)) < 1e-12);
    }
  }
}

TEST_CASE("hats form a partition of unity") {
  const double delta = 0.2;
  std::vector<ReluNetwork> hats;
  for (int k = -1; k <= 6; ++k) hats.push_back(hat_network(k, delta));
  Rng rng(7);
  double worst = 0.0;
  for (int t = 0; t < 2000; ++t) {
    const double x = rng.uniform(0.0, 5.0);
    double s = 0.0;
    for (const auto& h : hats) s += eval1(h, x);
    worst = std::max(worst, std::fabs(s - 1.0));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("hat rejects delta outside (0, 1/2]") {
  CHECK_THROWS_AS(hat_network(0, 0.6), DomainError);
  CHECK_THROWS_AS(hat_network(0, 0.0), DomainError);
}

TEST_CASE("product network stays within eps and is exact at zero") {
  for (double eps : {1e-2, 1e-3}) {
    ReluNetwork p = product_network(eps, 1.0);
    double worst = 0.0;
    for (int i = 0; i <= 40; ++i)
      for (int j = 0; j <= 40; ++j) {
        const double a = -1.0 + i / 20.0, b = -1.0 + j / 20.0;
        worst = std::max(worst, std::fabs(eval2(p, a, b) - a * b));
      }
    CHECK(worst <= eps);
    for (double v : {-1.0, -0.3, 0.0, 0.8}) {
      CHECK(eval2(p, 0.0, v) == 0.0);
      CHECK(eval2(p, v, 0.0) == 0.0);
    }
  }
}

TEST_CASE("product network scales to a larger box") {
  ReluNetwork p = product_network(1e-3, 4.0);
  Rng rng(9);
  for (int t = 0; t < 500; ++t) {
    const double a = rng.uniform(-4, 4), b = rng.uniform(-4, 4);
    CHECK(std::fabs(eval2(p, a, b) - a * b) <= 1e-3);
  }
}

TEST_CASE("power network within its reported constant") {
  PowerNetwork pw = power_network(0.5, 1e-2);
  double worst = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    worst = std::max(worst, std::fabs(eval1(pw.net, x) - std::sqrt(x)));
  }
  CHECK(worst <= pw.constant * 1e-2);
}

TEST_CASE("divide network") {
  ReluNetwork dv = divide_network(1e-3, 0.25, 1.0);
  Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    const double z = rng.uniform(-1, 1), s = rng.uniform(0.25, 1.0);
    CHECK(std::fabs(eval2(dv, z, s) - z / s) <= 1e-3);
  }
}

TEST_CASE("normalize network returns unit vectors") {
  ReluNetwork nm = normalize_network(3, 0.3, 1e-3);
  Rng rng(8);
  for (int t = 0; t < 300; ++t) {
    Vector dir = rng.normal_vector(3);
    dir.normalize();
    Vector x = rng.uniform(0.3, 1.0) * dir;
    CHECK((nm.evaluate(x) - dir).norm() <= 1e-3);
  }
}

TEST_CASE("median is exact on every 3-tuple of a small grid") {
  ReluNetwork md = median_network(3);
  for (int a = -3; a <= 3; ++a)
    for (int b = -3; b <= 3; ++b)
      for (int c = -3; c <= 3; ++c) {
        std::vector<double> v = {double(a), double(b), double(c)};
        Vector x(3);
        x << v[0], v[1], v[2];
        std::sort(v.begin(), v.end());
        CHECK(md.evaluate(x)[0] == v[1]);
      }
}

TEST_CASE("median of five on dyadic values") {
  ReluNetwork md = median_network(5);
  Rng rng(12);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v(5);
    Vector x(5);
    for (int i = 0; i < 5; ++i) x[i] = v[i] = static_cast<double>(rng.below(64)) / 8.0;
    std::nth_element(v.begin(), v.begin() + 2, v.end());
    CHECK(md.evaluate(x)[0] == v[2]);
  }
}

TEST_CASE("bit extraction recovers digits by integer division") {
  for (int base : {2, 3, 5}) {
    const int digits = 4;
    ReluNetwork be = bit_extraction_network(base, digits, base - 1);
    int total = 1;
    for (int i = 0; i < digits; ++i) total *= base;
    for (int y = 0; y < total; ++y) {
      Vector out = be.evaluate(Vector::Constant(1, y));
      int r = y;
      for (int i = 0; i < digits; ++i) {
        CHECK(out[i] == r % base);
        r /= base;
      }
    }
  }
}

TEST_CASE("lookup is exact at keys and flat nearby") {
  std::vector<double> keys = {0, 2, 5, 9};
  std::vector<double> vals = {1.5, -2, 0.25, 7};
  ReluNetwork lk = lookup_network(keys, vals, 2.0);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    CHECK(eval1(lk, keys[i]) == vals[i]);
    CHECK(eval1(lk, keys[i] + 0.4) == vals[i]);
    CHECK(eval1(lk, keys[i] - 0.4) == vals[i]);
  }
}

TEST_CASE("test_gadget reports errors within bounds") {
  GadgetSpec s;
  s.kind = parse_gadget_kind("product");
  s.params["eps"] = 1e-2;
  GadgetReport r = test_gadget(s, 51);
  CHECK(r.sup_error <= r.bound);
  CHECK(r.points == 51u * 51u);
  s.kind = GadgetKind::bit_extract;
  s.params = {{"base", 3}, {"digits", 3}};
  r = test_gadget(s, 2);
  CHECK(r.sup_error == 0.0);
  CHECK(r.points == 27u);
  CHECK_THROWS(parse_gadget_kind("sigmoid"));
}

TEST_CASE("gadget spot values") {
  ReluNetwork h = hat_network(0, 0.5);
  CHECK(eval1(h, 0.0) == 1.0);
  CHECK(eval1(h, 0.75) == 0.0);
  CHECK(eval1(h, 0.5) == doctest::Approx(0.5).epsilon(1e-15));

  ReluNetwork p = product_network(1e-3, 1.0);
  CHECK(eval2(p, 0.0, 0.7) == 0.0);
  CHECK(std::fabs(eval2(p, 1.0, 1.0) - 1.0) <= 1e-3);
  CHECK(std::fabs(eval2(p, 0.5, -0.25) + 0.125) <= 1e-3);

  PowerNetwork pw = power_network(0.5, 1e-2);
  CHECK(eval1(pw.net, 0.0) == 0.0);
  CHECK(std::fabs(eval1(pw.net, 0.81) - 0.9) <= pw.constant * 1e-2);

  ReluNetwork dv = divide_network(1e-3, 0.5, 1.0);
  CHECK(std::fabs(eval2(dv, 0.3, 0.6) - 0.5) <= 1e-3);
  CHECK(std::fabs(eval2(dv, 1.0, 1.0) - 1.0) <= 1e-3);

  ReluNetwork nm = normalize_network(2, 0.3, 1e-3);
  Vector x(2);
  x << 0.3, 0.4;
  Vector y = nm.evaluate(x);
  CHECK(std::hypot(y[0] - 0.6, y[1] - 0.8) <= 1e-3);

  ReluNetwork md = median_network(3);
  Vector t(3);
  t << 5, -1, 0;
  CHECK(md.evaluate(t)[0] == 0.0);

  Vector b3 = bit_extraction_network(3, 2, 2).evaluate(Vector::Constant(1, 5.0));
  CHECK(b3[0] == 2.0);
  CHECK(b3[1] == 1.0);
  Vector b4 = bit_extraction_network(4, 3, 3).evaluate(Vector::Constant(1, 16.0));
  CHECK(b4[0] == 0.0);
  CHECK(b4[1] == 0.0);
  CHECK(b4[2] == 1.0);

  ReluNetwork zero = lookup_network({0, 1}, {0, 0}, 1.0);
  ReluNetwork single = lookup_network({2}, {3.5}, 1.0);
  for (double v : {-2.0, 0.0, 0.5, 1.0, 7.0}) {
    CHECK(eval1(zero, v) == 0.0);
    CHECK(eval1(single, v) == 3.5);
  }
  ReluNetwork three = lookup_network({0, 1, 2}, {3, -1, 4}, 1.0);
  CHECK(eval1(three, 0) == 3.0);
  CHECK(eval1(three, 1) == -1.0);
  CHECK(eval1(three, 2) == 4.0);
}
