#include <cmath>
#include <sstream>

#include "doctest.h"
#include "migrasim/analytic.hpp"
#include "migrasim/fixed_point.hpp"
#include "migrasim/network.hpp"

using namespace migrasim;

namespace {

bool within(const Estimate& e, double target, double k = 3.0) {
  return std::abs(e.value - target) < k * e.std_error;
}

std::uint64_t population(const NetworkState& s) {
  std::uint64_t k = 0;
  for (const auto& st : s.stations) k += st.x + st.y;
  return k;
}

}  // namespace

TEST_CASE("closed networks conserve customers at every event") {
  const auto m = params_from_density(2, 1, 1.5, 1);
  for (auto v : {ReactorVariant::sis, ReactorVariant::docs, ReactorVariant::air}) {
    Rng rng({1, 0});
    auto init = random_network_state(7, 19, 9, rng);
    CHECK(population(init) == 19);
    bool ok = true;
    std::uint64_t events = 0;
    simulate_network(v, m, init, 50.0, {2, 0}, {}, [&](double, const NetworkState& s) {
      ok = ok && population(s) == 19;
      ++events;
    });
    CAPTURE(to_string(v));
    CHECK(ok);
    CHECK(events > 100);
  }
}

TEST_CASE("no infected customers stay absorbing") {
  const auto m = params_from_density(3, 1, 1, 1);
  NetworkOptions opt;
  opt.record_interval = 5.0;
  for (auto v : {ReactorVariant::sis, ReactorVariant::docs, ReactorVariant::air}) {
    const auto r = simulate_closed(v, 10, 30, m, 100.0, {3, 0}, opt, 0);
    CHECK(r.absorbed);
    CHECK(r.absorption_time == 0.0);
    for (const auto& p : r.trajectory) CHECK(p.total_infected == 0);
    CHECK(r.trajectory.size() == 21);
  }
}

TEST_CASE("closed network contract errors") {
  const auto m = params_from_density(1, 1, 1, 1);
  CHECK_THROWS_AS(simulate_closed(ReactorVariant::sis, 1, 3, m, 10.0, {}), ValidationError);
  CHECK_THROWS_AS(simulate_closed(ReactorVariant::sis, 4, 3, m, 0.0, {}), ValidationError);
  CHECK(customers_for_density(1.5, 40) == 60);
}

TEST_CASE("large closed SIS network matches the fixed point") {
  const auto m = params_from_density(3, 1, 1, 1);
  const auto net = simulate_closed(ReactorVariant::sis, 200, customers_for_density(3, 200), m, 1000,
                                   {4, 0}, {}, 200);
  CHECK_FALSE(net.absorbed);
  PStarOptions popt;
  popt.n_cycles = 200000;
  const auto ps = find_p_star(m, popt, {4, 1});
  const auto d = difference(net.infected_fraction, ps.p_star);
  CHECK(std::abs(d.value) < 3 * d.std_error);
}

TEST_CASE("closed AIR network matches the thermodynamic limit") {
  const auto m = params_from_density(2, 1, 1, 1);
  const auto net = simulate_closed(ReactorVariant::air, 200, customers_for_density(2, 200), m, 500,
                                   {5, 0});
  CHECK(within(net.infected_fraction, air_tl_stationary(m).p_star));
}

TEST_CASE("extinction times") {
  const auto sub = params_from_density(0.5, 1, 1, 1);
  const auto r = extinction_time(ReactorVariant::sis, 20, customers_for_density(0.5, 20), sub, 8,
                                 1000.0, {6, 0});
  CHECK(r.survived_at_cap == 0);
  for (const auto& rep : r.reps) CHECK(rep.absorption_time < 1000.0);
  const auto z = extinction_time(ReactorVariant::sis, 20, 0, sub, 3, 10.0, {6, 1});
  CHECK(z.median() == 0.0);
  const auto capped = extinction_time(ReactorVariant::sis, 20, 80, params_from_density(4, 1, 1, 1),
                                      2, 5.0, {6, 2});
  CHECK(capped.survived_at_cap == 2);
  CHECK(capped.median() == 5.0);

  std::ostringstream os;
  write_extinction_csv(os, capped);
  CHECK(os.str().rfind("rep,absorption_time,censored\r\n0,5,1\r\n", 0) == 0);
}

TEST_CASE("mean-field scheme") {
  const auto m = params_from_density(2, 1, 1, 1);
  SUBCASE("no infection source") {
    MeanFieldOptions opt;
    opt.record_interval = 1.0;
    const auto r = simulate_meanfield(200, 0.01, m, 0.0, 10.0, {7, 0}, opt);
    for (const auto& p : r.trajectory) CHECK(p.mean_y == 0.0);
  }
  SUBCASE("population stays at eta") {
    const auto r = simulate_meanfield(2000, 0.01, m, 0.5, 50.0, {7, 1});
    // Redistribution conserves the initial ensemble mean exactly, so only
    // the Poisson sampling of the initial state separates it from eta.
    CHECK(r.mean_total.std_error < 1e-12);
    CHECK(std::abs(r.mean_total.value - 2.0) < 3 * std::sqrt(2.0 / 2000));
    MeanFieldOptions popt;
    popt.arrivals = ArrivalMode::poisson;
    const auto q = simulate_meanfield(2000, 0.01, m, 0.5, 50.0, {7, 1}, popt);
    // With Poisson arrivals the ensemble mean is a martingale whose variance
    // grows like 2 mu eta t / M, so the batch SE alone understates the spread.
    const double spread = std::sqrt(2.0 * 2.0 * 50.0 / 2000 + 2.0 / 2000);
    CHECK(std::abs(q.mean_total.value - 2.0) < 3 * spread);
    CHECK_FALSE(r.discretization_warning);
  }
  SUBCASE("subcritical dies out") {
    MeanFieldOptions opt;
    opt.record_interval = 10.0;
    const auto r = simulate_meanfield(1000, 0.02, params_from_density(0.5, 1, 1, 1), 0.5, 60.0,
                                      {7, 2}, opt);
    CHECK(r.trajectory.front().mean_y > 0.2);
    CHECK(r.trajectory.back().mean_y < 0.01);
  }
  SUBCASE("stationary law at the fixed point is preserved") {
    PStarOptions popt;
    popt.n_cycles = 200000;
    const auto ps = find_p_star(m, popt, {7, 3});
    MeanFieldOptions opt;
    opt.init_from_reactor = true;
    opt.burn_in_fraction = 0.0;
    const auto r = simulate_meanfield(4000, 0.01, m, ps.p_star.value, 20.0, {7, 4}, opt);
    const Estimate target{m.eta * ps.p_star.value, m.eta * ps.p_star.std_error};
    const auto d = difference(r.moments.y, target);
    CHECK(std::abs(d.value) < 3 * d.std_error);
  }
  CHECK_THROWS_AS(simulate_meanfield(10, 0.01, m, 0.5, 1.0, {}), ValidationError);
}

TEST_CASE("routing DOCS mean field") {
  const auto m = derive_params(2, 1, 1, 1, 0.4);
  SUBCASE("open configuration") {
    const auto r = simulate_routing_docs_meanfield(500, m, 1000, {8, 0});
    const auto total = r.moments.x.value + r.moments.y.value;
    const double se = std::hypot(r.moments.x.std_error, r.moments.y.std_error);
    CHECK(std::abs(total - 2.0) < 3 * se + 0.01);
  }
  SUBCASE("closed thermodynamic configuration") {
    RoutingDocsOptions opt;
    opt.closed_tl = true;
    const auto r = simulate_routing_docs_meanfield(1000, params_from_density(2, 1, 1, 1), 1500,
                                                   {8, 1}, opt);
    const auto d = difference(r.moments.xy, r.moments.y);  // alpha = beta = 1
    CHECK(std::abs(d.value) < 3 * d.std_error);
    CHECK(within(r.p_star, docs_tl_fixed_point(params_from_density(2, 1, 1, 1)).p_star));
  }
}

TEST_CASE("trajectory CSV") {
  std::ostringstream os;
  write_trajectory_csv(os, {{0.5, 3, 1.25, 0.75}});
  CHECK(os.str() == "t,total_infected,mean_x,mean_y\r\n0.5,3,1.25,0.75\r\n");
}
