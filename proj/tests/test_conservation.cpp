#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "migrasim/conservation.hpp"
#include "migrasim/fixed_point.hpp"
#include "truncated_sis.hpp"

using namespace migrasim;
using migrasim::testing::solve_truncated_sis;

namespace {

bool all_pass(const std::vector<IdentityCheck>& checks) {
  bool ok = true;
  for (const auto& c : checks) {
    CAPTURE(c.name);
    CAPTURE(c.residual.value);
    CAPTURE(c.residual.std_error);
    CHECK(c.pass);
    ok = ok && c.pass;
  }
  return ok;
}

const IdentityCheck& find(const std::vector<IdentityCheck>& checks, const std::string& name) {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw std::runtime_error("no check named " + name);
}

}  // namespace

TEST_CASE("identities vanish on the exact truncated stationary law") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> U(0.2, 3.0), P(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = derive_params(U(gen) * 0.03, U(gen), U(gen), U(gen), P(gen));
    const auto exact = solve_truncated_sis(m);
    const auto checks = evaluate_exact(sis_identities(m), exact.moments());
    for (const auto& c : checks) {
      CAPTURE(c.name);
      CHECK(std::abs(c.residual.value) < 1e-9);
    }
  }
}

TEST_CASE("truncation shows up only through blocked arrivals") {
  // With arrivals blocked at X+Y = 8 the infected balance gains exactly
  // lambda p P(X+Y = 8) on the right.
  const auto m = derive_params(1, 1, 1.5, 0.7, 0.4);
  const auto t = solve_truncated_sis(m);
  double edge = 0.0;
  for (int y = 0; y <= 8; ++y) edge += t.prob(8 - y, y);
  const auto checks = evaluate_exact(sis_identities(m), t.moments());
  CHECK(find(checks, "first_order_infected").residual.value ==
        doctest::Approx(m.lambda * m.p * edge).epsilon(1e-9));
  CHECK(edge > 1e-6);
}

TEST_CASE("general monomial balance at (1,1) is the cross-moment relation") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> U(0.1, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = derive_params(U(gen), U(gen), U(gen), U(gen), U(gen) / 2.0);
    MomentTable t;
    for (int a = 0; a < kMomentOrder; ++a)
      for (int b = 0; b < kMomentOrder; ++b) t.at(a, b) = U(gen);
    // lambda p E[X] + lambda q E[Y] + beta E[Y(Y-X-1)] + alpha E[XY(X-Y-1)] - 2 mu E[XY]
    const double direct = m.lambda * m.p * t(1, 0) + m.lambda * m.q * t(0, 1) +
                          m.beta * (t(0, 2) - t(1, 1) - t(0, 1)) +
                          m.alpha * (t(2, 1) - t(1, 2) - t(1, 1)) - 2 * m.mu * t(1, 1);
    CHECK(sis_monomial_balance(1, 1, m, t) == doctest::Approx(direct).epsilon(1e-12));
    // (0,1) is the infected balance written as a vanishing sum.
    const double first = m.lambda * m.p + m.alpha * t(1, 1) - (m.mu + m.beta) * t(0, 1);
    t.at(0, 0) = 1.0;
    CHECK(sis_monomial_balance(0, 1, m, t) == doctest::Approx(first).epsilon(1e-12));
  }
}

TEST_CASE("simulated SIS audit") {
  SUBCASE("small density, same parameters as the exact law") {
    const auto m = derive_params(0.1, 1, 1, 1, 0.5);
    const double horizon = horizon_for_events(ReactorKind::sis(), m, 1e6);
    const auto checks = audit_sis(m, horizon, {21, 0});
    CHECK(all_pass(checks));
    CHECK(checks.size() == 11);
  }
  SUBCASE("unit rates") {
    const auto m = derive_params(1, 1, 1, 1, 0.5);
    CHECK(all_pass(audit_sis(m, 2e5, {21, 1})));
  }
  SUBCASE("no infected arrivals") {
    const auto m = derive_params(1, 1, 1, 1, 0.0);
    const auto checks = audit_sis(m, 2e4, {21, 2});
    const auto& first = find(checks, "first_order_infected");
    CHECK(first.lhs.value == 0.0);
    CHECK(first.rhs.value == 0.0);
    CHECK(first.pass);
    CHECK(find(checks, "second_order_y").residual.value == 0.0);
  }
}

TEST_CASE("standard errors shrink with the horizon") {
  const auto m = derive_params(1, 1, 1, 1, 0.5);
  const auto a = audit_sis(m, 1e5, {22, 0});
  const auto b = audit_sis(m, 2e5, {22, 1});
  std::vector<double> ratios;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].residual.std_error > 0) ratios.push_back(b[i].residual.std_error / a[i].residual.std_error);
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[ratios.size() / 2];
  CHECK(median >= 0.6);
  CHECK(median <= 0.82);
}

TEST_CASE("DOCS audit") {
  SUBCASE("example parameters") {
    const auto m = derive_params(1, 1, 1, 1, 0.5, 2.0);
    CHECK(all_pass(audit_docs(m, 2e5, {23, 0})));
  }
  SUBCASE("p = 0") {
    const auto m = derive_params(1, 1, 1, 1, 0.0);
    const auto checks = audit_docs(m, 5e4, {23, 1});
    CHECK(find(checks, "mean_x_quadrature").rhs.value == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(find(checks, "y_poisson_mean").lhs.value == 0.0);
    CHECK(all_pass(checks));
  }
  SUBCASE("p = 1") {
    const auto m = derive_params(1, 1, 1, 1, 1.0);
    const auto checks = audit_docs(m, 5e4, {23, 2});
    CHECK(find(checks, "mean_x_quadrature").lhs.value == 0.0);
    CHECK(all_pass(checks));
  }
}

TEST_CASE("routing DOCS audit") {
  SUBCASE("open ensemble") {
    const auto m = params_from_density(2, 1, 1, 1, 0.3);
    const auto ens = simulate_routing_docs_meanfield(500, m, 400, {24, 0});
    CHECK(all_pass(audit_routing_docs(ens)));
  }
  SUBCASE("closed ensemble") {
    const auto m = params_from_density(2, 1, 1, 1);
    RoutingDocsOptions opt;
    opt.closed_tl = true;
    const auto ens = simulate_routing_docs_meanfield(1000, m, 400, {24, 1}, opt);
    CHECK(all_pass(audit_routing_docs(ens)));
  }
  SUBCASE("no infection") {
    const auto m = params_from_density(2, 1, 1, 1, 0.0);
    const auto checks = audit_routing_docs(simulate_routing_docs_meanfield(200, m, 100, {24, 2}));
    for (const auto* name : {"routing_infected_balance", "routing_second_y"}) {
      const auto& c = find(checks, name);
      CHECK(c.lhs.value == 0.0);
      CHECK(c.rhs.value == 0.0);
    }
    CHECK(all_pass(checks));
  }
}

TEST_CASE("thermodynamic-limit audit at the fixed point") {
  const auto m = params_from_density(2, 1, 1, 1);
  PStarOptions opt;
  opt.n_cycles = 400000;
  const auto ps = find_p_star(m, opt, {25, 0});
  REQUIRE(ps.converged);
  const auto checks = audit_tl(m, ps.p_star, 2e5, {25, 1});
  CHECK(checks.size() == 8);
  CHECK(all_pass(checks));

  SUBCASE("subcritical") {
    const auto sub = params_from_density(0.5, 1, 1, 1);
    const auto s = audit_tl(sub, Estimate::exact(0.0), 2e4, {25, 2});
    CHECK(all_pass(s));
  }
}

TEST_CASE("correlation probe") {
  const auto m = params_from_density(2, 1, 1, 1);
  PStarOptions opt;
  opt.n_cycles = 200000;
  const auto ps = find_p_star(m, opt, {26, 0});
  const auto probe = correlation_probe(m.with_p(ps.p_star.value), 1e6, {26, 1}, true);
  MESSAGE("cov(X,Y) = ", probe.cov_xy.value, " +- ", probe.cov_xy.std_error);
  CHECK(probe.x_condition.agree);
  CHECK(probe.y_condition.agree);
  CHECK(probe.correlation_condition.agree);
  // X + Y is Poisson, so twice the covariance and the two overdispersions cancel.
  const auto gap = probe.total_overdispersion;
  CHECK(std::abs(gap.value) < 3 * gap.std_error);
  CHECK(probe.survival_condition.value());
  CHECK_FALSE(probe.contradiction);
  if (probe.negative_correlation) {
    CHECK(probe.bracket_holds.value());
    CHECK(probe.bracket_low.value() <= probe.bracket_high.value());
  }

  SUBCASE("survival claimed below the necessary density") {
    const auto low = params_from_density(0.8, 1, 1, 1, 0.3);
    const auto p = correlation_probe(low, 2e4, {26, 2}, true);
    CHECK_FALSE(p.survival_condition.value());
    CHECK(p.contradiction);
  }
  SUBCASE("no infection") {
    const auto p = correlation_probe(params_from_density(2, 1, 1, 1, 0.0), 2e4, {26, 3});
    CHECK(p.cov_xy.value == 0.0);
    CHECK_FALSE(p.negative_correlation);
    CHECK_FALSE(p.survival_condition.has_value());
  }
}

TEST_CASE("audit JSON") {
  const auto m = derive_params(1, 1, 1, 1, 0.5);
  std::ostringstream a, b;
  write_audit_json(a, audit_sis(m, 2e4, {27, 0}));
  write_audit_json(b, audit_sis(m, 2e4, {27, 0}));
  CHECK(a.str() == b.str());
  CHECK(a.str().find("\"name\": \"first_order_infected\"") != std::string::npos);
  for (const auto* key : {"\"lhs\"", "\"rhs\"", "\"residual\"", "\"se\"", "\"pass\""}) {
    CHECK(a.str().find(key) != std::string::npos);
  }
}
