#include "migrasim/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace migrasim {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValidationError(std::string(name) + " must be a positive finite rate");
  }
}

bool all_equal(std::span<const double> v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

}  // namespace

ModelParams derive_params(double lambda, double mu, double alpha, double beta,
                          double p, std::optional<double> nu) {
  require_positive(lambda, "lambda");
  require_positive(mu, "mu");
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p out of range");
  ModelParams m;
  m.lambda = lambda;
  m.mu = mu;
  m.alpha = alpha;
  m.beta = beta;
  m.nu = nu.value_or(mu + beta);
  require_positive(m.nu, "nu");
  m.p = p;
  m.q = 1.0 - p;
  m.eta = lambda / mu;
  return m;
}

ModelParams params_from_density(double eta, double mu, double alpha, double beta,
                                double p) {
  require_positive(eta, "eta");
  require_positive(mu, "mu");
  return derive_params(eta * mu, mu, alpha, beta, p);
}

ModelParams ModelParams::with_p(double new_p) const {
  return derive_params(lambda, mu, alpha, beta, new_p, nu);
}

ModelParams ModelParams::with_eta(double new_eta) const {
  require_positive(new_eta, "eta");
  return derive_params(new_eta * mu, mu, alpha, beta, p, nu);
}

double Estimate::half_width() const {
  return std_error > 0.0 ? z_value(ci_level) * std_error : 0.0;
}

Estimate Estimate::undefined(double ci_level) {
  Estimate e;
  e.value = std::numeric_limits<double>::quiet_NaN();
  e.std_error = std::numeric_limits<double>::quiet_NaN();
  e.ci_level = ci_level;
  e.defined = false;
  return e;
}

Estimate Estimate::exact(double v) {
  Estimate e;
  e.value = v;
  return e;
}

double normal_quantile(double prob) {
  // Acklam's rational approximation, relative error below 1.15e-9.
  if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("probability must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  if (prob < lo) {
    const double t = std::sqrt(-2.0 * std::log(prob));
    return (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
           ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  }
  if (prob > 1.0 - lo) return -normal_quantile(1.0 - prob);
  const double s = prob - 0.5;
  const double r = s * s;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * s /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double z_value(double ci_level) {
  if (ci_level == 0.90) return 1.6448536269514722;
  if (ci_level == 0.95) return 1.959963984540054;
  if (ci_level == 0.99) return 2.5758293035489004;
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ValidationError("ci_level must lie in (0, 1)");
  return normal_quantile(0.5 + 0.5 * ci_level);
}

Estimate ratio_estimate(std::span<const double> numerators,
                        std::span<const double> denominators, double ci_level) {
  if (numerators.size() != denominators.size()) {
    throw ValidationError("ratio_estimate: mismatched sample lengths");
  }
  const std::size_t n = numerators.size();
  if (n < 2) throw ValidationError("ratio_estimate: need at least two samples");
  const double nd = static_cast<double>(n);
  const double mean_num = std::accumulate(numerators.begin(), numerators.end(), 0.0) / nd;
  const double mean_den = std::accumulate(denominators.begin(), denominators.end(), 0.0) / nd;
  if (!(mean_den > 0.0)) throw NumericalError("ratio_estimate: zero mean denominator");

  Estimate e;
  e.value = mean_num / mean_den;
  e.n = n;
  e.ci_level = ci_level;
  if (all_equal(numerators) && all_equal(denominators)) return e;

  // Variance of the linearized residuals num_i - R den_i.
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (numerators[i] - mean_num) - e.value * (denominators[i] - mean_den);
    ss += r * r;
  }
  e.std_error = std::sqrt(ss / (nd - 1.0) / nd) / mean_den;
  return e;
}

Estimate mean_estimate(std::span<const double> samples, double ci_level) {
  const std::size_t n = samples.size();
  if (n < 2) throw ValidationError("mean_estimate: need at least two samples");
  const double nd = static_cast<double>(n);
  Estimate e;
  e.value = std::accumulate(samples.begin(), samples.end(), 0.0) / nd;
  e.n = n;
  e.ci_level = ci_level;
  if (all_equal(samples)) return e;
  double ss = 0.0;
  for (double s : samples) ss += (s - e.value) * (s - e.value);
  e.std_error = std::sqrt(ss / (nd - 1.0) / nd);
  return e;
}

Estimate difference(const Estimate& a, const Estimate& b) {
  if (!a.defined || !b.defined) return Estimate::undefined(a.ci_level);
  Estimate e;
  e.value = a.value - b.value;
  e.std_error = std::hypot(a.std_error, b.std_error);
  e.n = std::min(a.n, b.n);
  e.ci_level = a.ci_level;
  return e;
}

RngSeed RngSeed::substream(std::uint64_t child) const {
  // SplitMix64 finalizer over (stream, child) keeps substreams distinct.
  std::uint64_t z = stream_id * 0x9E3779B97F4A7C15ULL + child + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return RngSeed{seed, z ^ (z >> 31)};
}

Rng::Rng(RngSeed seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed.seed), static_cast<std::uint32_t>(seed.seed >> 32),
                    static_cast<std::uint32_t>(seed.stream_id),
                    static_cast<std::uint32_t>(seed.stream_id >> 32)};
  engine_.seed(seq);
}

double Rng::uniform() {
  // 53 random bits.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
}

double Rng::exponential(double rate) { return -std::log(uniform_open()) / rate; }

std::uint64_t Rng::poisson(double mean) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<std::uint64_t> d(mean);
  return d(engine_);
}

std::uint64_t Rng::binomial(std::uint64_t trials, double prob) {
  if (trials == 0 || prob <= 0.0) return 0;
  if (prob >= 1.0) return trials;
  std::binomial_distribution<std::uint64_t> d(trials, prob);
  return d(engine_);
}

std::uint64_t Rng::index(std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

void check_count(std::uint64_t v, const char* what) {
  if (v > kCountCap) {
    throw NumericalError(std::string("count overflow: ") + what + " exceeded 2^32-1");
  }
}

}  // namespace migrasim
