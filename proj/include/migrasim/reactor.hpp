#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "migrasim/core.hpp"

namespace migrasim {

enum class ReactorVariant { sis, docs, air };

std::string_view to_string(ReactorVariant v);
ReactorVariant parse_variant(std::string_view name);

struct ReactorKind {
  ReactorVariant variant = ReactorVariant::sis;
  // AIR only: the fixed infection-rate parameter y (each susceptible is
  // infected at rate alpha * y).
  double y_param = 0.0;

  static ReactorKind sis() { return {ReactorVariant::sis, 0.0}; }
  static ReactorKind docs() { return {ReactorVariant::docs, 0.0}; }
  static ReactorKind air(double y) { return {ReactorVariant::air, y}; }
};

enum class EventKind : std::uint8_t {
  arrival_s = 0,
  arrival_i = 1,
  departure_s = 2,
  departure_i = 3,
  infection = 4,
  recovery = 5,
};
inline constexpr std::size_t kEventKinds = 6;

std::string_view to_string(EventKind k);

struct EventRecord {
  double time = 0.0;
  EventKind kind = EventKind::arrival_s;
  ReactorState state_before;
  ReactorState state_after;
};

using EventSink = std::function<void(const EventRecord&)>;

// Competing-exponential dynamics of one open reactor. Shared by the
// long-run simulator and the busy-cycle runner.
class ReactorDynamics {
 public:
  ReactorDynamics(ReactorKind kind, const ModelParams& params, bool docs_recovery_split = true);

  // Per-channel rates from a state, indexed by EventKind.
  std::array<double, kEventKinds> rates(const ReactorState& s) const;

  // Draws the next event given total rate and a uniform in [0, 1).
  EventKind choose(const ReactorState& s, double u) const;

  ReactorState apply(const ReactorState& s, EventKind k) const;

  // Whether an event removes a customer from the reactor, and in which state.
  bool departs(EventKind k) const;
  bool departs_infected(EventKind k) const;

  const ReactorKind& kind() const { return kind_; }
  const ModelParams& params() const { return params_; }

 private:
  ReactorKind kind_;
  ModelParams params_;
  bool split_recovery_;  // DOCS: nu split into departure_i (mu) and recovery (beta)
};

// Mixed moments E[X^a Y^b] for 0 <= a, b < kMomentOrder.
inline constexpr int kMomentOrder = 5;
using MomentArray = std::array<double, kMomentOrder * kMomentOrder>;

class MomentTable {
 public:
  MomentTable() { values_.fill(0.0); }
  explicit MomentTable(const MomentArray& v) : values_(v) {}

  double operator()(int a, int b) const { return values_[a * kMomentOrder + b]; }
  double& at(int a, int b) { return values_[a * kMomentOrder + b]; }
  const MomentArray& raw() const { return values_; }

  double mean_x() const { return (*this)(1, 0); }
  double mean_y() const { return (*this)(0, 1); }

 private:
  MomentArray values_;
};

// Event-epoch sums for one event kind, states just before (-) and after (+).
struct EventTally {
  double count = 0;
  double sum_x_before = 0;
  double sum_y_before = 0;
  double sum_x_after = 0;
  double sum_y_after = 0;

  EventTally& operator+=(const EventTally& o);
};

struct BatchRecord {
  double duration = 0.0;
  MomentArray moment_integrals{};
  std::array<EventTally, kEventKinds> events{};
};

struct SimulationOptions {
  double horizon = 1.0e4;
  // Burn-in length; defaults to burn_in_fraction * horizon.
  std::optional<double> burn_in;
  double burn_in_fraction = 0.1;
  ReactorState initial{};
  std::size_t batches = 64;
  bool docs_recovery_split = true;
  double ci_level = 0.95;
};

struct SimulationResult {
  ReactorKind kind;
  ModelParams params;
  double ci_level = 0.95;
  std::vector<BatchRecord> batches;
  std::uint64_t events = 0;
  ReactorState final_state;

  double observed_time() const;
  MomentTable moments() const;
  Estimate moment(int a, int b) const;
  // Batch-means estimate of any functional of the moment table.
  Estimate functional(const std::function<double(const MomentTable&)>& f) const;
  EventTally tally(EventKind k) const;
  std::uint64_t event_count(EventKind k) const;
};

// Exact simulation over [0, horizon]; moments are time averages over the
// post-burn-in window, split into equal batches for standard errors.
SimulationResult simulate_reactor(const ReactorKind& kind, const ModelParams& params,
                                  const SimulationOptions& options, RngSeed seed,
                                  const EventSink& sink = {});

// Horizon needed for roughly `events` events in stationarity (used by the
// CLI and audits, which are sized by event counts).
double horizon_for_events(const ReactorKind& kind, const ModelParams& params, double events);

struct CycleOptions {
  bool docs_recovery_split = true;
  std::size_t block_size = 4096;  // cycles per independent stream
};

// Independent busy cycles, each started by an arrival to an empty reactor.
// Cycle block b uses seed.substream(b), so results do not depend on the
// number of workers.
std::vector<CycleStats> run_busy_cycles(const ReactorKind& kind, const ModelParams& params,
                                        std::uint64_t n_cycles, RngSeed seed,
                                        const CycleOptions& options = {});

// One busy cycle (exposed for tests and the coupled estimators).
CycleStats run_one_cycle(const ReactorDynamics& dyn, Rng& rng);

struct PalmEstimates {
  // Event averages of X or Y just before (minus) and after (plus) infection
  // (I) and recovery (R) epochs.
  Estimate e_I_Y_minus, e_I_X_plus, e_I_Y_plus, e_I_X_minus;
  Estimate e_R_Y_plus, e_R_X_minus, e_R_X_plus;
  // Same at infected/susceptible arrivals (before) and departures (after).
  Estimate e_AI_Y_minus, e_AS_X_minus, e_DI_Y_plus, e_DS_X_plus;
  // Intensities: infections a_i, recoveries a_r, and the four migration streams.
  Estimate a_i, a_r, rate_arrival_i, rate_arrival_s, rate_departure_i, rate_departure_s;
  bool low_confidence = false;
};

PalmEstimates palm_estimates(const SimulationResult& run);

// Convenience wrapper: simulate the SIS reactor and compute event averages.
PalmEstimates palm_estimates(const ModelParams& params, double horizon, RngSeed seed,
                             std::size_t batches = 64);

void write_event_csv_header(std::ostream& os);
void write_event_csv_row(std::ostream& os, const EventRecord& e);

}  // namespace migrasim
