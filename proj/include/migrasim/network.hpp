#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "migrasim/core.hpp"
#include "migrasim/reactor.hpp"

namespace migrasim {

struct NetworkState {
  std::vector<ReactorState> stations;
  std::uint64_t total = 0;  // K

  std::uint64_t infected() const;
  std::uint64_t susceptible() const;
};

struct TrajectoryPoint {
  double t = 0.0;
  std::uint64_t total_infected = 0;
  double mean_x = 0.0;  // per station
  double mean_y = 0.0;
};

// Station-averaged moments E[x^a y^b] over a time window.
struct StationMoments {
  Estimate x, y, xx, xy, yy, xxy, xyy;
  // Per-batch values of (x, y, xx, xy, yy, xxy, xyy), for functionals.
  std::vector<std::array<double, 7>> batches;
};

struct NetworkOptions {
  // Migrations go to a uniform station including the origin. Defaults: SIS
  // excludes the origin, DOCS and AIR include it.
  std::optional<bool> self_routing;
  double record_interval = 0.0;  // 0: no trajectory
  double burn_in_fraction = 0.1;
  std::size_t batches = 32;
  bool stop_on_extinction = false;
  // Open configuration (routing DOCS mean field): external Poisson arrivals
  // per station, and mu-departures leave the network instead of rerouting.
  bool open = false;
  double external_lambda = 0.0;
  double external_p = 0.0;
};

struct NetworkResult {
  std::vector<TrajectoryPoint> trajectory;
  StationMoments moments;
  Estimate infected_fraction;  // Y_total / K (closed) over the window
  std::uint64_t events = 0;
  bool absorbed = false;       // infected count hit zero
  double absorption_time = 0.0;
  double end_time = 0.0;
  NetworkState final_state;
};

// Initial placement: K customers placed uniformly at random, the first
// `infected` of them infected.
NetworkState random_network_state(std::size_t n_stations, std::uint64_t k, std::uint64_t infected,
                                  Rng& rng);

using NetworkSink = std::function<void(double t, const NetworkState&)>;

NetworkResult simulate_network(ReactorVariant variant, const ModelParams& params,
                               NetworkState initial, double horizon, RngSeed seed,
                               const NetworkOptions& options = {}, const NetworkSink& sink = {});

// Closed network with K customers, all infected at time 0 unless
// `initial_infected` is given.
NetworkResult simulate_closed(ReactorVariant variant, std::size_t n_stations, std::uint64_t k,
                              const ModelParams& params, double horizon, RngSeed seed,
                              const NetworkOptions& options = {},
                              std::optional<std::uint64_t> initial_infected = std::nullopt);

std::uint64_t customers_for_density(double eta, std::size_t n_stations);

struct ExtinctionRep {
  std::size_t rep = 0;
  double absorption_time = 0.0;
  bool censored = false;
};

struct ExtinctionResult {
  std::vector<ExtinctionRep> reps;
  std::size_t survived_at_cap = 0;
  double median() const;  // censored reps count as the cap
};

ExtinctionResult extinction_time(ReactorVariant variant, std::size_t n_stations, std::uint64_t k,
                                 const ModelParams& params, std::size_t reps, double cap,
                                 RngSeed seed, const NetworkOptions& options = {});

// --- slotted mean-field scheme ---------------------------------------------

enum class ArrivalMode {
  redistribute,  // departures of a slot are reassigned uniformly (population conserved)
  poisson,       // Poisson arrivals with means h mu mean_y, h mu mean_x
};

struct MeanFieldOptions {
  ArrivalMode arrivals = ArrivalMode::redistribute;
  double record_interval = 0.0;
  double burn_in_fraction = 0.2;
  std::size_t batches = 32;
  // Initial law: independent Poisson(eta (1-p0)) / Poisson(eta p0), or
  // snapshots of an open SIS reactor at input fraction p0.
  bool init_from_reactor = false;
};

struct MeanFieldResult {
  std::vector<TrajectoryPoint> trajectory;  // total_infected summed over replicas
  StationMoments moments;
  Estimate mean_total;
  bool discretization_warning = false;
  double step = 0.0;
};

// h <= 0 selects 0.01 / (largest per-customer rate at the initial state).
MeanFieldResult simulate_meanfield(std::size_t replicas, double h, const ModelParams& params,
                                   double p0, double horizon, RngSeed seed,
                                   const MeanFieldOptions& options = {});

// --- routing DOCS mean field ------------------------------------------------

struct RoutingDocsOptions {
  bool closed_tl = false;  // closed network with K = eta M instead of external arrivals
  double burn_in_fraction = 0.2;
  std::size_t batches = 32;
};

struct RoutingDocsResult {
  StationMoments moments;
  Estimate p_star;  // mu E[Y] / lambda
  ModelParams params;
  bool closed_tl = false;
};

RoutingDocsResult simulate_routing_docs_meanfield(std::size_t replicas, const ModelParams& params,
                                                  double horizon, RngSeed seed,
                                                  const RoutingDocsOptions& options = {});

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryPoint>& t);
void write_extinction_csv(std::ostream& os, const ExtinctionResult& r);

}  // namespace migrasim
