#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "migrasim/core.hpp"
#include "migrasim/reactor.hpp"

namespace migrasim {

// Output infected fraction g(p) of an open reactor fed with infected
// fraction p.
struct GEstimate {
  double p_in = 0.0;
  Estimate p_out;         // busy-cycle ratio E[D_I]/E[D]
  Estimate time_average;  // mu E[Y] / lambda over the same cycles
  std::uint64_t n_cycles = 0;
  ModelParams params;
};

GEstimate estimate_g(double p, const ModelParams& params, std::uint64_t n_cycles, RngSeed seed,
                     const ReactorKind& kind = ReactorKind::sis());

// g for the AIR reactor whose infection parameter is the self-consistent
// mean-field value at input fraction p.
GEstimate estimate_g_air_amf(double p, const ModelParams& params, std::uint64_t n_cycles,
                             RngSeed seed);

enum class DerivativeMethod { excursion, finite_difference, both };

DerivativeMethod parse_derivative_method(const std::string& name);

// Mean number of infected departures caused by one infected customer
// injected into the stationary infection-free reactor, over `n` injections.
Estimate excursion_g_prime0(const ModelParams& params, std::uint64_t n, RngSeed seed);

// Richardson-extrapolated g(eps)/eps on common random numbers.
Estimate finite_difference_g_prime0(const ModelParams& params, std::uint64_t n_cycles,
                                    RngSeed seed);

// Excursion estimate by default. `both` also runs the finite difference and
// throws NumericalError when the two disagree beyond 3 joint standard errors.
Estimate estimate_g_prime0(const ModelParams& params, DerivativeMethod method,
                           std::uint64_t budget, RngSeed seed);

struct PStarOptions {
  double tol = 1e-3;
  std::uint64_t n_cycles = 100000;  // per iteration
  int max_iterations = 60;
  double damping = 0.5;
  double slope_step = 0.02;  // half-width of the common-random-numbers slope probe
};

struct PStarResult {
  Estimate p_star;
  int iterations = 0;
  bool converged = false;
  bool subcritical = false;      // sequence entered [0, tol]
  bool indeterminate = false;    // iteration cap hit without contraction
  double slope = 0.0;            // g'(p*) estimate used by the Newton polish
  std::vector<std::pair<double, Estimate>> trace;  // (p_in, g(p_in)) per step
};

using GMap = std::function<Estimate(double p, RngSeed seed)>;

PStarResult find_p_star(const GMap& g, const PStarOptions& options, RngSeed seed);
PStarResult find_p_star(const ModelParams& params, const PStarOptions& options, RngSeed seed);
PStarResult find_p_star_air(const ModelParams& params, const PStarOptions& options, RngSeed seed);

enum class Verdict { below, above, indeterminate };

std::string_view to_string(Verdict v);

struct VerdictEntry {
  double eta = 0.0;
  Estimate g_prime0;
  Verdict verdict = Verdict::indeterminate;
};

struct EtaSearchOptions {
  double ci_level = 0.95;
  std::uint64_t per_point_budget = 1000000;  // excursions per eta
  std::uint64_t chunk = 100000;
  double precision = 0.01;  // target bracket width
  int max_points = 40;
};

struct ThresholdSearchResult {
  Estimate eta_c;  // bracket midpoint; its CI equals the bracket
  double eta_low = 0.0;
  double eta_high = 0.0;
  int iterations = 0;
  std::vector<VerdictEntry> verdicts;
};

// Stochastic bisection on eta for g'(0, eta) = 1, starting from the analytic
// SIS bounds. Only eta and lambda of `params` are ignored.
ThresholdSearchResult find_eta_c(const ModelParams& params, const EtaSearchOptions& options,
                                 RngSeed seed);

// Sequential sampling of g'(0) at one eta until the CI excludes 1.
VerdictEntry classify_eta(const ModelParams& params, double eta, const EtaSearchOptions& options,
                          RngSeed seed);

}  // namespace migrasim
