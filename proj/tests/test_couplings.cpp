#include <cmath>
#include <sstream>
#include <string>

#include "doctest.h"
#include "migrasim/couplings.hpp"
#include "migrasim/fixed_point.hpp"

using namespace migrasim;

namespace {

bool agree(const Estimate& a, const Estimate& b, double k = 3.0) {
  const auto d = difference(a, b);
  return std::abs(d.value) < k * d.std_error;
}

}  // namespace

TEST_CASE("equal input fractions give identical paths") {
  const auto m = params_from_density(1.5, 1, 1, 1);
  const auto s = coupled_p_monotonicity(0.3, 0.3, m, 2000, {1, 0});
  CHECK(s.identical_paths);
  CHECK(s.strict == 0);
  CHECK(s.low.value == s.high.value);
}

TEST_CASE("p-monotonicity holds pathwise with strict cycles") {
  const auto m = params_from_density(1.5, 1, 1, 1);
  const auto s = coupled_p_monotonicity(0.2, 0.5, m, 10000, {2, 0});
  CHECK(s.cycles == 10000);
  CHECK(s.violations == 0);
  CHECK(s.checks == s.events);
  CHECK(s.strict > 0);
  CHECK_FALSE(s.identical_paths);
  CHECK(s.low.value < s.high.value);
  // Each coupled system on its own is an ordinary reactor.
  CHECK(agree(s.low, estimate_g(0.2, m, 100000, {2, 1}).p_out));
  CHECK(agree(s.high, estimate_g(0.5, m, 100000, {2, 2}).p_out));
}

TEST_CASE("coupled cycles are reproducible") {
  const auto m = params_from_density(2, 1, 1, 1);
  const auto a = coupled_p_monotonicity(0.1, 0.6, m, 3000, {3, 0});
  const auto b = coupled_p_monotonicity(0.1, 0.6, m, 3000, {3, 0});
  CHECK(a.events == b.events);
  CHECK(a.strict == b.strict);
  CHECK(a.low.value == b.low.value);
}

TEST_CASE("alpha and beta monotonicity") {
  const auto m = params_from_density(2, 1, 1, 1, 0.3);
  CoupledRunOptions open;
  open.events = 10000;
  CoupledRunOptions closed = open;
  closed.closed = true;
  closed.stations = 10;

  SUBCASE("equal rates") {
    CHECK(coupled_alpha_monotonicity(1.0, 1.0, m, {4, 0}, open).identical_paths);
    CHECK(coupled_beta_monotonicity(1.0, 1.0, m, {4, 1}, closed).identical_paths);
  }
  SUBCASE("alpha") {
    for (const auto* o : {&open, &closed}) {
      const auto s = coupled_alpha_monotonicity(0.5, 2.0, m, {4, 2}, *o);
      CHECK(s.events == 10000);
      CHECK(s.checks == 10000);
      CHECK(s.strict > 0);
      CHECK(s.low.value < s.high.value);
    }
  }
  SUBCASE("beta") {
    for (const auto* o : {&open, &closed}) {
      const auto s = coupled_beta_monotonicity(2.0, 0.5, m, {4, 3}, *o);
      CHECK(s.events == 10000);
      CHECK(s.strict > 0);
      CHECK(s.low.value < s.high.value);
    }
  }
  SUBCASE("closed runs keep the customer count") {
    std::uint64_t bad = 0;
    closed.sink = [&](const CoupledEvent& e) { bad += e.n[0] != 20 || e.n[1] != 20; };
    coupled_alpha_monotonicity(0.5, 2.0, m, {4, 4}, closed);
    CHECK(bad == 0);
  }
  SUBCASE("argument order is enforced") {
    CHECK_THROWS_AS(coupled_alpha_monotonicity(2.0, 0.5, m, {}, open), ValidationError);
    CHECK_THROWS_AS(coupled_beta_monotonicity(0.5, 2.0, m, {}, open), ValidationError);
    CHECK_THROWS_AS(coupled_p_monotonicity(0.6, 0.5, m, 10, {}), ValidationError);
  }
}

TEST_CASE("a reversed pair is caught with an event trace") {
  // The higher-alpha system listed as the dominated one must fail quickly.
  const auto m = params_from_density(2, 1, 1, 1, 0.3);
  CoupledRunOptions o;
  o.events = 100000;
  try {
    coupled_pair_run(CoupledSystemSpec::sis(4.0, 1.0, 0.3), CoupledSystemSpec::sis(0.5, 1.0, 0.3), m,
                     {5, 0}, o);
    FAIL("expected a coupling violation");
  } catch (const CouplingViolation& e) {
    const std::string what = e.what();
    CHECK(what.find("recent events") != std::string::npos);
    CHECK(what.find("t,kind,customer,other,n_0,infected_0,n_1,infected_1\r\n") != std::string::npos);
  }
}

TEST_CASE("three-color concavity") {
  const auto m = derive_params(1, 1, 5, 1, 0);
  const auto s = three_color_run(0.2, 0.4, 0.2, m, 20000, {6, 0});
  CHECK(s.cycles == 20000);
  CHECK(s.merge_checks > 0);
  CHECK(s.nesting_checks > 0);
  CHECK(s.strict_cycles > 0);
  CHECK(s.two_customer_cycles > 0);
  CHECK(s.concavity_gap.value >= 0.0);
  // p + r = p_hat, so both differences share the middle point g(0.4).
  CHECK(s.g_p_r.value == doctest::Approx(s.g_phat.value).epsilon(0.05));
  const double lhs = s.g_p_r.value - s.g_p.value;
  const double rhs = s.g_phat_r.value - s.g_phat.value;
  CHECK(lhs - rhs == doctest::Approx(s.concavity_gap.value));
  // Marginals are ordinary reactors at the merged input fractions.
  CHECK(agree(s.g_p, estimate_g(0.2, m, 100000, {6, 1}).p_out));
  CHECK(agree(s.g_phat_r, estimate_g(0.6, m, 100000, {6, 2}).p_out));
  CHECK_THROWS_AS(three_color_run(0.5, 0.4, 0.2, m, 10, {}), ValidationError);
  CHECK_THROWS_AS(three_color_run(0.2, 0.9, 0.2, m, 10, {}), ValidationError);
}

TEST_CASE("event trace CSV") {
  const auto m = params_from_density(1, 1, 1, 1);
  std::ostringstream os;
  CoupledCycleOptions opt;
  write_coupled_csv_header(os, 2);
  std::size_t rows = 0;
  opt.sink = [&](const CoupledEvent& e) {
    write_coupled_csv_row(os, e);
    ++rows;
  };
  const auto s = coupled_p_monotonicity(0.0, 1.0, m, 5, {7, 0}, opt);
  CHECK(rows == s.events);
  CHECK(os.str().rfind("t,kind,customer,other,n_0,infected_0,n_1,infected_1\r\n0,arrival,0,0,1,0,1,1\r\n", 0) == 0);
}
