#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "migrasim/core.hpp"

namespace migrasim {

// Several copies of a reactor or closed network driven by one set of clocks.
// Customers are shared; each system only keeps its own color per customer,
// so every system sees exactly the same arrivals and departures.
//
// Clocks: arrivals at rate lambda with one uniform per arrival deciding the
// color in every system; a mu-clock per customer; a beta_max-clock per
// customer applied by system k when a shared uniform is below beta_k/beta_max;
// an alpha_max-clock per ordered pair at the same station, thinned the same
// way by alpha_k/alpha_max.

enum class Color : std::uint8_t { green = 0, magenta = 1, red = 2 };

enum class ColorRule : std::uint8_t {
  two_color,    // red infects anything, green never infects
  three_color,  // red -> red; magenta turns green/magenta into magenta
};

struct CoupledSystemSpec {
  double alpha = 1.0;
  double beta = 1.0;
  // Arrival coloring from the shared uniform u: magenta if u < magenta_below,
  // else red if red_from <= u < red_to, else green.
  double magenta_below = 0.0;
  double red_from = 0.0;
  double red_to = 0.0;
  ColorRule rule = ColorRule::two_color;

  static CoupledSystemSpec sis(double alpha, double beta, double p) {
    return {alpha, beta, 0.0, 0.0, p, ColorRule::two_color};
  }
};

enum class CoupledEventKind : std::uint8_t { arrival, departure, recovery, infection };

inline constexpr std::size_t kMaxCoupledSystems = 8;

struct CoupledEvent {
  double time = 0.0;
  CoupledEventKind kind = CoupledEventKind::arrival;
  std::uint32_t customer = 0;
  std::uint32_t other = 0;  // infector for infections, destination station for moves
  std::size_t systems = 0;
  std::array<std::uint64_t, kMaxCoupledSystems> n{};          // population seen by system k
  std::array<std::uint64_t, kMaxCoupledSystems> infected{};   // non-green customers in system k
};

using CoupledEventSink = std::function<void(const CoupledEvent&)>;

void write_coupled_csv_header(std::ostream& os, std::size_t systems);
void write_coupled_csv_row(std::ostream& os, const CoupledEvent& e);

struct CouplingSummary {
  std::string construction;
  std::uint64_t events = 0;      // shared clock rings
  std::uint64_t cycles = 0;      // busy cycles (p-monotonicity only)
  std::uint64_t checks = 0;      // pathwise comparisons made
  std::uint64_t violations = 0;  // always 0 on return: a violation throws
  std::uint64_t strict = 0;      // cycles (p) or events (alpha, beta) with strict dominance
  double strict_frequency = 0.0;
  bool identical_paths = true;   // the two systems never differed
  // g(p), g(p_hat) for p-monotonicity; time-average Y of each system otherwise.
  Estimate low, high;
};

struct CoupledCycleOptions {
  std::size_t block_size = 1024;  // cycles per independent stream
  CoupledEventSink sink;          // forces a single worker when set
};

// Busy cycles of two open SIS reactors with input fractions p <= p_hat.
// Checks N = N_hat and that every customer infected in the first system is
// infected in the second, after every event, and D_I <= D_I_hat per cycle.
CouplingSummary coupled_p_monotonicity(double p, double p_hat, const ModelParams& params,
                                       std::uint64_t n_cycles, RngSeed seed,
                                       const CoupledCycleOptions& options = {});

struct CoupledRunOptions {
  std::uint64_t events = 10000;
  bool closed = false;
  std::size_t stations = 10;
  std::optional<std::uint64_t> customers;  // closed: default round(eta N)
  std::optional<std::uint64_t> initially_infected;  // default: half of the customers
  std::optional<bool> self_routing;        // closed: default false
  ReactorState initial{};                  // open reactor start
  std::size_t batches = 32;
  CoupledEventSink sink;
};

// Generic two-system run on shared clocks. Asserts that `high` dominates
// `low`: equal populations and low-infected implies high-infected.
CouplingSummary coupled_pair_run(const CoupledSystemSpec& low, const CoupledSystemSpec& high,
                                 const ModelParams& params, RngSeed seed,
                                 const CoupledRunOptions& options = {});

// Two SIS systems with alpha1 <= alpha2 (all else equal); Y1 <= Y2 pathwise.
CouplingSummary coupled_alpha_monotonicity(double alpha1, double alpha2, const ModelParams& params,
                                           RngSeed seed, const CoupledRunOptions& options = {});

// Two SIS systems with beta1 >= beta2 (all else equal); Y1 <= Y2 pathwise.
CouplingSummary coupled_beta_monotonicity(double beta1, double beta2, const ModelParams& params,
                                          RngSeed seed, const CoupledRunOptions& options = {});

struct ThreeColorSummary {
  std::uint64_t events = 0;
  std::uint64_t cycles = 0;
  std::uint64_t merge_checks = 0;
  std::uint64_t nesting_checks = 0;
  std::uint64_t strict_cycles = 0;      // D_m > D_m_hat
  std::uint64_t two_customer_cycles = 0;  // the explicit five-ring strict path
  // Output fractions over the common departure count D.
  Estimate g_p, g_p_r, g_phat, g_phat_r;
  // (g(p+r) - g(p)) - (g(p_hat+r) - g(p_hat)); nonnegative cycle by cycle.
  Estimate concavity_gap;
};

// Two 3-color reactors (r, p) and (r, p_hat) with p <= p_hat, plus their four
// merged two-color views run as separate systems on the same clocks. Checks
// merge consistency and magenta nesting after every event.
ThreeColorSummary three_color_run(double p, double p_hat, double r, const ModelParams& params,
                                  std::uint64_t n_cycles, RngSeed seed,
                                  const CoupledCycleOptions& options = {});

}  // namespace migrasim
