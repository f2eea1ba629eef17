#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mopinnenkf/network.hpp"

using namespace mopinnenkf;

namespace {

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-12});
}

// Matches coordinates with a relative tolerance and an absolute floor near zero.
bool grad_close(double ad, double fd, double rel, double abs_floor) {
  return std::fabs(ad - fd) <= std::max(abs_floor, rel * std::max(std::fabs(ad), std::fabs(fd)));
}

}  // namespace

TEST_CASE("parameter count matches the closed form", "[network]") {
  const auto arch = NetworkArchitecture::mlp(8, 20);
  REQUIRE(arch.widths.size() == 10);
  int expect = 0;
  for (std::size_t l = 0; l + 1 < arch.widths.size(); ++l)
    expect += arch.widths[l] * arch.widths[l + 1] + arch.widths[l + 1];
  REQUIRE(arch.parameter_count() == expect);
  REQUIRE(arch.parameter_count() == 3021);
  const auto p = init_parameters(arch, 5);
  REQUIRE(static_cast<int>(p.size()) == arch.parameter_count());
}

TEST_CASE("invalid architectures are rejected", "[network]") {
  const NetworkArchitecture too_short{{2, 1}};
  const NetworkArchitecture bad_input{{3, 5, 1}};
  const NetworkArchitecture bad_output{{2, 5, 2}};
  const NetworkArchitecture zero_width{{2, 0, 1}};
  REQUIRE_THROWS_AS(too_short.validate(), std::invalid_argument);
  REQUIRE_THROWS_AS(bad_input.validate(), std::invalid_argument);
  REQUIRE_THROWS_AS(bad_output.validate(), std::invalid_argument);
  REQUIRE_THROWS_AS(zero_width.validate(), std::invalid_argument);
}

TEST_CASE("initialization is bit-identical for equal seeds", "[network]") {
  const auto arch = NetworkArchitecture::mlp(3, 10);
  const auto a = init_parameters(arch, 123);
  const auto b = init_parameters(arch, 123);
  REQUIRE(a == b);
  const auto c = init_parameters(arch, 124);
  REQUIRE(a != c);
}

TEST_CASE("xavier weight variance is close to 2/(fan_in+fan_out)", "[network]") {
  // one wide layer gives 10^4 draws: [2, 50, 200, 1] puts 10000 weights in layer 2
  NetworkArchitecture arch{{2, 50, 200, 1}};
  const auto p = init_parameters(arch, 9);
  const int off = 2 * 50 + 50;  // skip layer 1 weights+biases
  double var = 0.0;
  const int n = 50 * 200;
  for (int i = 0; i < n; ++i) var += p[off + i] * p[off + i];
  var /= n;
  const double expect = 2.0 / (50 + 200);
  REQUIRE(var == Catch::Approx(expect).epsilon(0.20));
}

TEST_CASE("physics slot is appended and mapped through the given bijection", "[network]") {
  const auto arch = NetworkArchitecture::mlp(2, 4);
  PhysicsSlotInit init;
  init.lo = 0.25;
  init.hi = 0.75;
  init.value_to_raw = [](double v) { return 2.0 * v; };
  const auto p = init_parameters(arch, 3, init);
  REQUIRE(static_cast<int>(p.size()) == arch.parameter_count() + 1);
  REQUIRE(p.back() >= 0.5);
  REQUIRE(p.back() <= 1.5);
}

TEST_CASE("zeroed final layer gives u = bias and vanishing derivatives", "[network]") {
  const auto arch = NetworkArchitecture::mlp(2, 6);
  auto p = init_parameters(arch, 11);
  const int last_size = arch.widths[2] * arch.widths[3] + arch.widths[3];
  for (int i = 0; i < last_size; ++i) p[p.size() - 1 - i] = 0.0;
  p.back() = 0.7;  // output bias
  const auto b = evaluate(arch, p, 0.3, -0.2);
  REQUIRE(b.u() == Catch::Approx(0.7).margin(1e-15));
  REQUIRE(b.u_x() == 0.0);
  REQUIRE(b.u_xx() == 0.0);
  REQUIRE(b.u_t() == 0.0);
}

TEST_CASE("single hidden neuron matches tanh closed form", "[network]") {
  NetworkArchitecture arch{{2, 1, 1}};
  // layout: W1 (1x2), b1, W2 (1x1), b2
  const double a = 0.8, bt = -0.45, c = 0.3;
  ParameterVector p = {a, bt, c, 1.0, 0.0};
  const double x = 0.37, t = -0.12;
  const auto bnd = evaluate(arch, p, x, t);
  const double z = a * x + bt * t + c;
  const double th = std::tanh(z);
  const double sech2 = 1.0 - th * th;
  REQUIRE(std::fabs(bnd.u() - th) < 1e-12);
  REQUIRE(std::fabs(bnd.u_x() - a * sech2) < 1e-12);
  REQUIRE(std::fabs(bnd.u_t() - bt * sech2) < 1e-12);
  REQUIRE(std::fabs(bnd.u_xx() - a * a * (-2.0 * th * sech2)) < 1e-12);
}

TEST_CASE("u_xx matches a central finite difference on random networks", "[network]") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    const auto arch = NetworkArchitecture::mlp(3, 8);
    const auto p = init_parameters(arch, seed);
    const double x = -0.3 + 0.17 * static_cast<double>(seed), t = 0.4;
    const double h = 1e-4;
    const auto um = evaluate(arch, p, x - h, t, 0).u();
    const auto u0 = evaluate(arch, p, x, t, 0).u();
    const auto up = evaluate(arch, p, x + h, t, 0).u();
    const double fd = (up - 2.0 * u0 + um) / (h * h);
    const auto b = evaluate(arch, p, x, t);
    REQUIRE(rel_err(b.u_xx(), fd) < 1e-5);
  }
}

TEST_CASE("u_x matches finite differences to 1e-6 on smooth networks", "[network]") {
  const auto arch = NetworkArchitecture::mlp(4, 10);
  const auto p = init_parameters(arch, 21);
  const double h = 1e-4;
  for (double x : {-0.8, -0.1, 0.45, 0.9}) {
    const double t = 0.3;
    const double fd = (evaluate(arch, p, x + h, t, 0).u() - evaluate(arch, p, x - h, t, 0).u()) / (2 * h);
    REQUIRE(rel_err(evaluate(arch, p, x, t).u_x(), fd) < 1e-6);
  }
}

TEST_CASE("evaluate is deterministic and pure", "[network]") {
  const auto arch = NetworkArchitecture::mlp(3, 12);
  const auto p = init_parameters(arch, 77);
  const auto a = evaluate(arch, p, 0.21, 0.84);
  const auto b = evaluate(arch, p, 0.21, 0.84);
  REQUIRE(a.u() == b.u());
  REQUIRE(a.u_x() == b.u_x());
  REQUIRE(a.u_xx() == b.u_xx());
  REQUIRE(a.u_t() == b.u_t());
}

TEST_CASE("parameter gradients of all fields match finite differences", "[network]") {
  const auto arch = NetworkArchitecture::mlp(2, 6);
  const auto p = init_parameters(arch, 31);
  const double x = 0.5, t = 0.25, h = 1e-5;
  const auto b = evaluate(arch, p, x, t);
  for (int f = 0; f < 4; ++f) {
    const auto field = static_cast<Field>(f);
    const auto& g = b.grad(field);
    REQUIRE(g.size() == p.size());
    for (std::size_t i = 0; i < p.size(); i += 3) {
      auto pp = p, pm = p;
      pp[i] += h;
      pm[i] -= h;
      const double fd =
          (evaluate(arch, pp, x, t).value(field) - evaluate(arch, pm, x, t).value(field)) / (2 * h);
      REQUIRE(grad_close(g[i], fd, 1e-4, 1e-8));
    }
  }
}

TEST_CASE("non-finite intermediates raise an error carrying the layer", "[network]") {
  const auto arch = NetworkArchitecture::mlp(3, 4);
  auto p = init_parameters(arch, 1);
  p[0] = std::nan("");
  try {
    evaluate(arch, p, 0.1, 0.1);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    REQUIRE(e.layer >= 1);
  }
  REQUIRE_THROWS_AS(evaluate(arch, init_parameters(arch, 1), std::nan(""), 0.0),
                    std::invalid_argument);
}

TEST_CASE("requesting a derivative outside the mask throws", "[network]") {
  const auto arch = NetworkArchitecture::mlp(2, 4);
  const auto p = init_parameters(arch, 2);
  const auto b = evaluate(arch, p, 0.0, 0.0, kDerivX);
  REQUIRE_NOTHROW(b.u_x());
  REQUIRE_THROWS_AS(b.u_t(), std::invalid_argument);
  REQUIRE_THROWS_AS(b.grad(Field::u_t), std::invalid_argument);
}
