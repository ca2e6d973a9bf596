#include <cmath>
#include <vector>

#include "doctest.h"
#include "migrasim/core.hpp"
#include "migrasim/reactor.hpp"

using namespace migrasim;

TEST_CASE("derive_params fills derived fields") {
  const auto a = derive_params(1, 1, 1, 1, 0.5);
  CHECK(a.eta == 1.0);
  CHECK(a.q == 0.5);
  CHECK(a.nu == 2.0);

  const auto b = derive_params(2, 1, 1, 1, 0.0);
  CHECK(b.eta == 2.0);
  CHECK(b.q == 1.0);

  const auto c = derive_params(3, 2, 1, 1, 0.3, 5.0);
  CHECK(c.nu == 5.0);
  CHECK(c.eta == 1.5);
}

TEST_CASE("derive_params rejects bad input") {
  CHECK_THROWS_WITH_AS(derive_params(1, 1, 1, 1, 1.5), "p out of range", ValidationError);
  CHECK_THROWS_AS(derive_params(1, 1, 1, 1, -0.1), ValidationError);
  CHECK_THROWS_AS(derive_params(0, 1, 1, 1, 0.5), ValidationError);
  CHECK_THROWS_AS(derive_params(1, -1, 1, 1, 0.5), ValidationError);
  CHECK_THROWS_AS(derive_params(1, 1, 1, 1, 0.5, 0.0), ValidationError);
}

TEST_CASE("with_p and with_eta keep derived fields consistent") {
  const auto m = derive_params(2, 1, 3, 4, 0.25).with_p(0.75);
  CHECK(m.q == 0.25);
  const auto e = m.with_eta(5.0);
  CHECK(e.lambda == 5.0);
  CHECK(e.eta == 5.0);
  CHECK(e.p == 0.75);
}

TEST_CASE("ratio_estimate: constant samples give zero error") {
  const std::vector<double> num{1, 1}, den{2, 2};
  const auto e = ratio_estimate(num, den);
  CHECK(e.value == 0.5);
  CHECK(e.std_error == 0.0);
  CHECK(e.half_width() == 0.0);
}

TEST_CASE("ratio_estimate: zero numerators") {
  const std::vector<double> num{0, 0, 0}, den{1, 2, 3};
  const auto e = ratio_estimate(num, den);
  CHECK(e.value == 0.0);
  CHECK(e.std_error == 0.0);
}

TEST_CASE("ratio_estimate contract errors") {
  const std::vector<double> a{1, 2}, b{1};
  CHECK_THROWS_AS(ratio_estimate(a, b), ValidationError);
  const std::vector<double> z{0, 0};
  CHECK_THROWS_AS(ratio_estimate(a, z), NumericalError);
  const std::vector<double> one{1};
  CHECK_THROWS_AS(ratio_estimate(one, one), ValidationError);
}

TEST_CASE("ratio_estimate is scale invariant") {
  const std::vector<double> num{1, 3, 2, 5, 4}, den{2, 5, 3, 6, 7};
  const auto e = ratio_estimate(num, den);
  std::vector<double> n2, d2;
  for (std::size_t i = 0; i < num.size(); ++i) {
    n2.push_back(num[i] * 7.5);
    d2.push_back(den[i] * 7.5);
  }
  const auto f = ratio_estimate(n2, d2);
  CHECK(f.value == doctest::Approx(e.value).epsilon(1e-14));
  CHECK(f.std_error == doctest::Approx(e.std_error).epsilon(1e-12));
}

TEST_CASE("ratio_estimate delta-method error against a hand computation") {
  // num = (1, 2, 3), den = (1, 1, 2): R = 1.5, residuals (-0.5, 0.5, 0) after
  // centering, so SE = sqrt(0.5/2/3)/(4/3).
  const std::vector<double> num{1, 2, 3}, den{1, 1, 2};
  const auto e = ratio_estimate(num, den);
  CHECK(e.value == doctest::Approx(1.5));
  CHECK(e.std_error == doctest::Approx(std::sqrt(0.5 / 6.0) * 0.75).epsilon(1e-12));
}

TEST_CASE("z values") {
  CHECK(z_value(0.95) == doctest::Approx(1.959963985).epsilon(1e-9));
  CHECK(z_value(0.90) == doctest::Approx(1.644853627).epsilon(1e-9));
  CHECK(z_value(0.99) == doctest::Approx(2.575829304).epsilon(1e-9));
  // Rational approximation path.
  CHECK(z_value(0.80) == doctest::Approx(1.281551566).epsilon(1e-8));
  CHECK(normal_quantile(0.01) == doctest::Approx(-2.326347874).epsilon(1e-8));
  CHECK_THROWS_AS(z_value(1.0), ValidationError);
}

TEST_CASE("Estimate interval") {
  Estimate e;
  e.value = 2.0;
  e.std_error = 0.5;
  CHECK(e.half_width() == doctest::Approx(0.98).epsilon(1e-3));
  CHECK(e.ci_contains(2.9));
  CHECK_FALSE(e.ci_contains(3.1));
}

TEST_CASE("Rng streams are reproducible and distinct") {
  Rng a({7, 3}), b({7, 3}), c({7, 4});
  bool differ = false;
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    if (u != c.uniform()) differ = true;
  }
  CHECK(differ);
  CHECK(RngSeed{1, 2}.substream(5).stream_id == RngSeed{1, 2}.substream(5).stream_id);
  CHECK(RngSeed{1, 2}.substream(5).stream_id != RngSeed{1, 2}.substream(6).stream_id);
}

TEST_CASE("busy-cycle halves give overlapping intervals") {
  const auto m = derive_params(1, 1, 1, 1, 0.5);
  const auto cycles = run_busy_cycles(ReactorKind::sis(), m, 20000, {11, 0});
  std::vector<double> n1, d1, n2, d2;
  for (std::size_t i = 0; i < cycles.size(); ++i) {
    auto& n = i < cycles.size() / 2 ? n1 : n2;
    auto& d = i < cycles.size() / 2 ? d1 : d2;
    n.push_back(static_cast<double>(cycles[i].infected_departures));
    d.push_back(static_cast<double>(cycles[i].departures));
  }
  const auto a = ratio_estimate(n1, d1);
  const auto b = ratio_estimate(n2, d2);
  CHECK(a.std_error > 0.0);
  CHECK(std::max(a.lower(), b.lower()) <= std::min(a.upper(), b.upper()));
}
