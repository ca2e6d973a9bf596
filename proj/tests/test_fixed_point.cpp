#include <cmath>

#include "doctest.h"
#include "migrasim/analytic.hpp"
#include "migrasim/fixed_point.hpp"

using namespace migrasim;

TEST_CASE("g at the endpoints") {
  const auto m = params_from_density(1, 1, 1, 1);
  const auto g0 = estimate_g(0.0, m, 1000, {1, 0});
  CHECK(g0.p_out.value == 0.0);
  CHECK(g0.p_out.std_error == 0.0);
  const auto g1 = estimate_g(1.0, m, 50000, {2, 0});
  CHECK(g1.p_out.upper() < 1.0);
  CHECK_THROWS_AS(estimate_g(0.5, m, 50, {}), ValidationError);
  CHECK_THROWS_AS(estimate_g(1.5, m, 500, {}), ValidationError);
}

TEST_CASE("cycle-ratio and time-average estimators of g agree") {
  for (double p : {0.2, 0.7}) {
    const auto g = estimate_g(p, params_from_density(2, 1, 1, 1), 100000, {3, 0});
    const auto d = difference(g.p_out, g.time_average);
    CAPTURE(p);
    CHECK(std::abs(d.value) < 3 * d.std_error);
  }
}

TEST_CASE("g is increasing and concave in p") {
  const auto m = params_from_density(2, 1, 1, 1);
  const auto a = estimate_g(0.2, m, 100000, {4, 0}).p_out;
  const auto b = estimate_g(0.5, m, 100000, {4, 1}).p_out;
  const auto c = estimate_g(0.8, m, 100000, {4, 2}).p_out;
  CHECK(a.value < b.value);
  CHECK(b.value < c.value);
  // g(0.5) not below the chord between 0.2 and 0.8 beyond 3 SE.
  const double chord = 0.5 * (a.value + c.value);
  const double se = std::sqrt(b.std_error * b.std_error +
                              0.25 * (a.std_error * a.std_error + c.std_error * c.std_error));
  CHECK(b.value - chord > -3 * se);
}

TEST_CASE("g'(0) for a nearly empty reactor") {
  // A lone infected customer leaves infected with probability mu/(mu+beta).
  const auto m = derive_params(0.01, 1, 1, 1, 0.0);
  const auto e = excursion_g_prime0(m, 200000, {5, 0});
  CHECK(std::abs(e.value - 0.5) < 3 * e.std_error + 0.01);
  const auto m3 = derive_params(0.01, 1, 1, 3, 0.0);
  CHECK(std::abs(excursion_g_prime0(m3, 200000, {5, 1}).value - 0.25) < 0.01);
}

TEST_CASE("g'(0) increases with eta") {
  double prev_upper = 0.0;
  for (double eta : {0.5, 1.0, 2.0}) {
    const auto e = excursion_g_prime0(params_from_density(eta, 1, 1, 1), 100000, {6, 0});
    CHECK(e.lower() > prev_upper);
    prev_upper = e.upper();
  }
}

TEST_CASE("g'(0) estimators agree") {
  const auto m = params_from_density(1, 1, 1, 1);
  const auto ex = estimate_g_prime0(m, DerivativeMethod::excursion, 200000, {7, 0});
  const auto fd = estimate_g_prime0(m, DerivativeMethod::finite_difference, 400000, {7, 1});
  const auto d = difference(ex, fd);
  CHECK(std::abs(d.value) < 3 * d.std_error);
  CHECK_NOTHROW(estimate_g_prime0(m, DerivativeMethod::both, 100000, {7, 2}));
  CHECK_THROWS_AS(estimate_g_prime0(m, DerivativeMethod::excursion, 100, {}), ValidationError);
  CHECK(parse_derivative_method("fd") == DerivativeMethod::finite_difference);
  CHECK_THROWS_AS(parse_derivative_method("newton"), ValidationError);
}

TEST_CASE("fixed point: subcritical and supercritical") {
  PStarOptions opt;
  opt.n_cycles = 20000;
  const auto lowb = sis_threshold_bounds(1, 1, 1).lower;
  const auto sub = find_p_star(params_from_density(0.8 * lowb, 1, 1, 1), opt, {8, 0});
  CHECK(sub.subcritical);
  CHECK(sub.p_star.value == 0.0);

  const auto m = params_from_density(5, 1, 1, 1);
  const auto sup = find_p_star(m, opt, {8, 1});
  CHECK(sup.converged);
  CHECK(sup.p_star.lower() > 0.0);
  CHECK(sup.p_star.value <= p_star_upper_bound(m) + 3 * sup.p_star.std_error);
}

TEST_CASE("fixed point of the averaged-infection reactor") {
  PStarOptions opt;
  opt.n_cycles = 40000;
  const auto m = params_from_density(2, 1, 1, 1);
  const auto r = find_p_star_air(m, opt, {9, 0});
  CHECK(r.converged);
  CHECK(std::abs(r.p_star.value - 0.5) < 3 * r.p_star.std_error + opt.tol);
}

TEST_CASE("fixed-point iteration on a known map") {
  // g(p) = 1.6 p (1 - p) / (1 - 0.2 p) style concave map; exact noise-free.
  auto g = [](double p, RngSeed) { return Estimate::exact(0.8 * p * (2.0 - p)); };
  PStarOptions opt;
  opt.tol = 1e-9;
  opt.max_iterations = 500;
  const auto r = find_p_star(g, opt, {});
  CHECK(r.converged);
  CHECK(r.p_star.value == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.slope == doctest::Approx(0.4).epsilon(1e-3));

  auto flat = [](double p, RngSeed) { return Estimate::exact(0.5 * p); };
  CHECK(find_p_star(flat, opt, {}).subcritical);

  opt.max_iterations = 3;
  CHECK(find_p_star(g, opt, {}).indeterminate);
}

TEST_CASE("threshold search brackets the analytic bounds") {
  EtaSearchOptions opt;
  opt.per_point_budget = 100000;
  opt.chunk = 20000;
  opt.precision = 0.25;
  const auto r = find_eta_c(params_from_density(1, 1, 1, 1), opt, {10, 0});
  const auto b = sis_threshold_bounds(1, 1, 1);
  CHECK(r.eta_low >= b.lower);
  CHECK(r.eta_high <= b.upper);
  CHECK(r.eta_low < r.eta_high);
  CHECK(r.eta_c.lower() == doctest::Approx(r.eta_low));
  CHECK(r.eta_c.upper() == doctest::Approx(r.eta_high));
  for (const auto& v : r.verdicts) {
    if (v.verdict == Verdict::below) CHECK(v.eta <= r.eta_low);
    if (v.verdict == Verdict::above) CHECK(v.eta >= r.eta_high);
  }
  // The iterated map is subcritical below the bracket.
  PStarOptions popt;
  popt.n_cycles = 20000;
  CHECK(find_p_star(params_from_density(0.5 * r.eta_low, 1, 1, 1), popt, {10, 1}).subcritical);
}
