#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "migrasim/reactor.hpp"

using namespace migrasim;

namespace {

SimulationResult run(ReactorKind kind, const ModelParams& m, double horizon, std::uint64_t seed) {
  SimulationOptions opt;
  opt.horizon = horizon;
  return simulate_reactor(kind, m, opt, {seed, 0});
}

bool within(const Estimate& e, double target, double k = 3.0) {
  return std::abs(e.value - target) < k * e.std_error;
}

}  // namespace

TEST_CASE("SIS transitions follow the event kind") {
  const auto m = derive_params(1, 1, 1, 1, 0.5);
  const ReactorDynamics dyn(ReactorKind::sis(), m);
  const ReactorState s{3, 2};
  CHECK(dyn.apply(s, EventKind::infection) == ReactorState{2, 3});
  CHECK(dyn.apply(s, EventKind::recovery) == ReactorState{4, 1});
  CHECK(dyn.apply(s, EventKind::departure_i) == ReactorState{3, 1});
  CHECK(dyn.apply(s, EventKind::arrival_s) == ReactorState{4, 2});
  const auto r = dyn.rates(s);
  CHECK(r[4] == 6.0);
  CHECK(r[5] == 2.0);
  CHECK(dyn.rates(ReactorState{3, 0})[5] == 0.0);
}

TEST_CASE("DOCS infection and recovery remove the customer") {
  const auto m = derive_params(1, 1, 1, 1, 0.5);
  const ReactorDynamics dyn(ReactorKind::docs(), m);
  const ReactorState s{3, 2};
  CHECK(dyn.apply(s, EventKind::infection) == ReactorState{2, 2});
  CHECK(dyn.apply(s, EventKind::recovery) == ReactorState{3, 1});
  CHECK(dyn.departs_infected(EventKind::infection));
  CHECK(dyn.departs(EventKind::recovery));
  CHECK_FALSE(dyn.departs_infected(EventKind::recovery));

  const auto g = derive_params(1, 1, 1, 1, 0.5, 3.0);
  const ReactorDynamics gen(ReactorKind::docs(), g);
  const auto r = gen.rates(s);
  CHECK(r[3] == 6.0);
  CHECK(r[5] == 0.0);
}

TEST_CASE("AIR infection uses the fixed parameter") {
  const auto m = derive_params(1, 1, 2, 1, 0.0);
  const ReactorDynamics dyn(ReactorKind::air(0.5), m);
  const auto r = dyn.rates(ReactorState{4, 1});
  CHECK(r[4] == doctest::Approx(4.0));
  CHECK(dyn.apply(ReactorState{4, 1}, EventKind::infection) == ReactorState{3, 2});
  CHECK_THROWS_AS(ReactorDynamics(ReactorKind::air(-1.0), m), ValidationError);
}

TEST_CASE("SIS population is Poisson") {
  const auto m = derive_params(1.5, 1, 1, 1, 0.4);
  const auto res = run(ReactorKind::sis(), m, 2e5, 1);
  const auto mean = res.functional([](const MomentTable& t) { return t(1, 0) + t(0, 1); });
  const auto var = res.functional([](const MomentTable& t) {
    const double n = t(1, 0) + t(0, 1);
    return t(2, 0) + 2 * t(1, 1) + t(0, 2) - n * n;
  });
  CHECK(within(mean, 1.5));
  CHECK(within(var, 1.5));
}

TEST_CASE("DOCS infected count is Poisson") {
  const auto m = derive_params(1, 1, 1, 1, 0.5, 2.0);
  const auto res = run(ReactorKind::docs(), m, 2e5, 2);
  const auto mean = res.moment(0, 1);
  const auto var = res.functional([](const MomentTable& t) { return t(0, 2) - t(0, 1) * t(0, 1); });
  CHECK(within(mean, 0.25));
  CHECK(within(var, 0.25));
}

TEST_CASE("first-order balance holds in simulation") {
  const auto m = derive_params(2, 1, 1, 1, 0.3);
  const auto sis = run(ReactorKind::sis(), m, 1e5, 3);
  const auto resid = sis.functional([&](const MomentTable& t) {
    return m.lambda * m.p + m.alpha * t(1, 1) - (m.mu + m.beta) * t(0, 1);
  });
  CHECK(std::abs(resid.value) < 3 * resid.std_error);

  const auto docs = run(ReactorKind::docs(), m, 1e5, 4);
  const auto r1 = docs.functional([&](const MomentTable& t) { return m.lambda * m.p - m.nu * t(0, 1); });
  const auto r2 = docs.functional([&](const MomentTable& t) {
    return m.lambda * m.q - m.mu * t(1, 0) - m.alpha * t(1, 1);
  });
  CHECK(std::abs(r1.value) < 3 * r1.std_error);
  CHECK(std::abs(r2.value) < 3 * r2.std_error);
}

TEST_CASE("no infection source means no infections") {
  const auto m = derive_params(2, 1, 1, 1, 0.0);
  std::uint64_t infections = 0;
  SimulationOptions opt;
  opt.horizon = 1e4;
  const auto res = simulate_reactor(ReactorKind::sis(), m, opt, {5, 0}, [&](const EventRecord& e) {
    if (e.kind == EventKind::infection) ++infections;
    CHECK(e.state_after.y == 0);
  });
  CHECK(infections == 0);
  CHECK(res.moment(0, 1).value == 0.0);
  const auto pe = palm_estimates(res);
  CHECK(pe.a_i.value == 0.0);
  CHECK_FALSE(pe.e_I_Y_minus.defined);
  CHECK(pe.low_confidence);
}

TEST_CASE("event stream is conservative and non-negative") {
  const auto m = derive_params(3, 1, 1, 2, 0.5);
  const ReactorDynamics dyn(ReactorKind::sis(), m);
  std::uint64_t arrivals = 0, departures = 0;
  ReactorState last;
  SimulationOptions opt;
  opt.horizon = 2e3;
  const auto res = simulate_reactor(ReactorKind::sis(), m, opt, {6, 0}, [&](const EventRecord& e) {
    CHECK(e.state_before == last);
    last = e.state_after;
    if (e.kind == EventKind::arrival_i || e.kind == EventKind::arrival_s) ++arrivals;
    if (dyn.departs(e.kind)) ++departures;
  });
  CHECK(arrivals - departures == res.final_state.total());
}

TEST_CASE("simulation is deterministic under a fixed seed") {
  const auto m = derive_params(2, 1, 1, 1, 0.5);
  std::ostringstream a, b;
  SimulationOptions opt;
  opt.horizon = 500;
  simulate_reactor(ReactorKind::sis(), m, opt, {9, 1}, [&](const EventRecord& e) { write_event_csv_row(a, e); });
  simulate_reactor(ReactorKind::sis(), m, opt, {9, 1}, [&](const EventRecord& e) { write_event_csv_row(b, e); });
  CHECK(a.str() == b.str());
  CHECK(run_busy_cycles(ReactorKind::sis(), m, 500, {9, 1}) ==
        run_busy_cycles(ReactorKind::sis(), m, 500, {9, 1}));
}

TEST_CASE("simulate_reactor contract errors") {
  const auto m = derive_params(1, 1, 1, 1, 0.5);
  SimulationOptions opt;
  opt.horizon = 0.0;
  CHECK_THROWS_AS(simulate_reactor(ReactorKind::sis(), m, opt, {}), ValidationError);
  CHECK_THROWS_AS(run_busy_cycles(ReactorKind::sis(), m, 0, {}), ValidationError);
}

TEST_CASE("busy cycles: tallies") {
  const auto m = derive_params(1, 1, 1, 1, 0.0);
  for (const auto& c : run_busy_cycles(ReactorKind::sis(), m, 2000, {1, 0})) {
    CHECK(c.infected_departures == 0);
    CHECK(c.departures >= 1);
    CHECK(c.duration > 0.0);
  }
}

TEST_CASE("busy cycles: single-departure probability") {
  // A lone customer stays Exp(mu) whatever its state, so the cycle has one
  // departure exactly when it leaves before the next arrival.
  const auto m = derive_params(0.1, 1, 1, 1, 1.0);
  const auto cycles = run_busy_cycles(ReactorKind::sis(), m, 40000, {2, 0});
  double single = 0;
  for (const auto& c : cycles) single += c.departures == 1;
  const double f = single / cycles.size();
  const double expect = 1.0 / 1.1;
  CHECK(std::abs(f - expect) < 4 * std::sqrt(expect * (1 - expect) / cycles.size()));
}

TEST_CASE("busy cycles: mean departures per cycle is exp(eta)") {
  // Renewal argument: P(empty) = exp(-eta) = E[idle] / E[cycle].
  const auto m = derive_params(1.3, 1, 2, 1, 0.4);
  const auto cycles = run_busy_cycles(ReactorKind::sis(), m, 40000, {3, 0});
  std::vector<double> d;
  for (const auto& c : cycles) d.push_back(static_cast<double>(c.departures));
  const auto e = mean_estimate(d);
  CHECK(within(e, std::exp(1.3), 4));
}

TEST_CASE("busy cycles do not depend on the worker count") {
  const auto m = derive_params(1, 1, 1, 1, 0.5);
  CycleOptions opt;
  opt.block_size = 100;
  setenv("MIGRASIM_THREADS", "1", 1);
  const auto a = run_busy_cycles(ReactorKind::sis(), m, 1000, {4, 0}, opt);
  setenv("MIGRASIM_THREADS", "4", 1);
  const auto b = run_busy_cycles(ReactorKind::sis(), m, 1000, {4, 0}, opt);
  unsetenv("MIGRASIM_THREADS");
  CHECK(a == b);
}

TEST_CASE("Palm estimates") {
  const auto m = derive_params(2, 1, 1, 1, 0.5);
  const auto res = run(ReactorKind::sis(), m, 1e5, 7);
  const auto pe = palm_estimates(res);
  CHECK_FALSE(pe.low_confidence);

  SUBCASE("infection increments Y") {
    CHECK(pe.e_I_Y_plus.value == doctest::Approx(pe.e_I_Y_minus.value + 1.0).epsilon(1e-12));
    CHECK(pe.e_I_X_plus.value == doctest::Approx(pe.e_I_X_minus.value - 1.0).epsilon(1e-12));
  }
  SUBCASE("state seen by infections") {
    // E_I[Y-] = E[X Y^2] / E[X Y]
    const auto rhs = res.functional([](const MomentTable& t) { return t(1, 2) / t(1, 1); });
    const auto d = difference(pe.e_I_Y_minus, rhs);
    CHECK(std::abs(d.value) < 3 * d.std_error);
  }
  SUBCASE("intensities") {
    const auto t = res.moments();
    CHECK(pe.a_i.value == doctest::Approx(m.alpha * t(1, 1)).epsilon(0.03));
    CHECK(pe.a_r.value == doctest::Approx(m.beta * t(0, 1)).epsilon(0.03));
  }
  SUBCASE("level crossings of Y balance") {
    const auto up = res.tally(EventKind::arrival_i).sum_y_before + res.tally(EventKind::infection).sum_y_before;
    const auto down = res.tally(EventKind::departure_i).sum_y_after + res.tally(EventKind::recovery).sum_y_after;
    // Exact up to the initial and final levels of the observed window.
    CHECK(std::abs(up - down) <= 0.5 * 40 * 40);
  }
}

TEST_CASE("event CSV format") {
  std::ostringstream os;
  write_event_csv_header(os);
  write_event_csv_row(os, EventRecord{1.5, EventKind::infection, {2, 1}, {1, 2}});
  CHECK(os.str() == "time,kind,x_before,y_before,x_after,y_after\r\n1.5,infection,2,1,1,2\r\n");
}
