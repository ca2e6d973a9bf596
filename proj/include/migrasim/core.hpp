#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace migrasim {

// Error taxonomy. The CLI maps each family onto its own exit code.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double achieved_bound = 0.0)
      : std::runtime_error(what), achieved_bound_(achieved_bound) {}
  double achieved_bound() const { return achieved_bound_; }

 private:
  double achieved_bound_;
};

class CouplingViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rate parameters of one reactor or network variant. Construct through
// derive_params so that the derived fields stay consistent.
struct ModelParams {
  double lambda = 1.0;  // external arrival rate
  double mu = 1.0;      // migration / service rate
  double alpha = 1.0;   // per-pair infection rate
  double beta = 1.0;    // recovery rate
  double nu = 2.0;      // infected departure rate of the general DOCS reactor
  double p = 0.0;       // infected fraction of arrivals
  double eta = 1.0;     // lambda / mu
  double q = 1.0;       // 1 - p

  // Copy with a different infected input fraction (derived fields updated).
  ModelParams with_p(double new_p) const;
  // Copy with a different density; lambda is rescaled to eta * mu.
  ModelParams with_eta(double new_eta) const;
};

ModelParams derive_params(double lambda, double mu, double alpha, double beta,
                          double p, std::optional<double> nu = std::nullopt);

// Convenience for thermodynamic-limit parameterizations (eta, mu, alpha, beta).
ModelParams params_from_density(double eta, double mu, double alpha, double beta,
                                double p = 0.0);

struct ReactorState {
  std::uint64_t x = 0;  // susceptible
  std::uint64_t y = 0;  // infected

  std::uint64_t total() const { return x + y; }
  friend bool operator==(const ReactorState&, const ReactorState&) = default;
};

// Tallies for one busy cycle: from an arrival to an empty station until the
// station next empties.
struct CycleStats {
  double duration = 0.0;            // busy period length
  std::uint64_t departures = 0;     // D
  std::uint64_t infected_departures = 0;  // D_I
  double idle_before = 0.0;         // idle period preceding the busy period
  double infected_area = 0.0;       // integral of Y over the busy period

  friend bool operator==(const CycleStats&, const CycleStats&) = default;
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t n = 0;
  double ci_level = 0.95;
  bool defined = true;  // false when no sample could inform the estimate

  double half_width() const;
  double lower() const { return value - half_width(); }
  double upper() const { return value + half_width(); }
  bool ci_contains(double v) const { return lower() <= v && v <= upper(); }

  static Estimate undefined(double ci_level = 0.95);
  static Estimate exact(double v);
};

// Two-sided standard normal quantile for a confidence level, i.e. z such that
// P(|Z| <= z) = level.
double z_value(double ci_level);

// Inverse standard normal CDF.
double normal_quantile(double prob);

// Ratio-of-means estimator with delta-method standard error.
Estimate ratio_estimate(std::span<const double> numerators,
                        std::span<const double> denominators,
                        double ci_level = 0.95);

// Mean with the classical standard error (samples treated as iid, which is
// how batch means are used).
Estimate mean_estimate(std::span<const double> samples, double ci_level = 0.95);

// Difference a - b with standard errors combined in quadrature.
Estimate difference(const Estimate& a, const Estimate& b);

struct RngSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  RngSeed substream(std::uint64_t child) const;
};

// Per-task random source. Identical (seed, stream_id) pairs give identical
// draws; distinct stream ids give statistically independent streams.
class Rng {
 public:
  explicit Rng(RngSeed seed);

  double uniform();                  // in [0, 1)
  double uniform_open();             // in (0, 1)
  double exponential(double rate);
  std::uint64_t poisson(double mean);
  std::uint64_t binomial(std::uint64_t trials, double prob);
  std::uint64_t index(std::uint64_t n);  // uniform in [0, n)
  bool bernoulli(double prob) { return uniform() < prob; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Counts are capped at 2^32 - 1; exceeding the cap is a hard error.
inline constexpr std::uint64_t kCountCap = 4294967295ULL;

void check_count(std::uint64_t v, const char* what);

}  // namespace migrasim
