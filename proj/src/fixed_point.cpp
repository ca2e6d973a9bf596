#include "migrasim/fixed_point.hpp"

#include <algorithm>
#include <cmath>

#include "migrasim/analytic.hpp"
#include "migrasim/parallel.hpp"

namespace migrasim {

namespace {

constexpr std::uint64_t kBlock = 4096;

struct SampleSums {
  std::uint64_t n = 0;
  double sum = 0.0;
  double sumsq = 0.0;

  void add(double v) {
    ++n;
    sum += v;
    sumsq += v * v;
  }
  SampleSums& operator+=(const SampleSums& o) {
    n += o.n;
    sum += o.sum;
    sumsq += o.sumsq;
    return *this;
  }
  Estimate estimate(double ci_level) const {
    Estimate e;
    e.n = n;
    e.ci_level = ci_level;
    e.value = sum / static_cast<double>(n);
    const double var = (sumsq - sum * e.value) / static_cast<double>(n - 1);
    e.std_error = var > 0.0 ? std::sqrt(var / static_cast<double>(n)) : 0.0;
    return e;
  }
};

// Infected departures from one infected customer injected into the
// infection-free stationary reactor (X ~ Poisson(eta)).
std::uint64_t one_excursion(const ReactorDynamics& dyn, Rng& rng) {
  ReactorState s{rng.poisson(dyn.params().eta), 1};
  std::uint64_t infected_departures = 0;
  while (s.y > 0) {
    const EventKind k = dyn.choose(s, rng.uniform());
    if (k == EventKind::departure_i) ++infected_departures;
    s = dyn.apply(s, k);
  }
  return infected_departures;
}

SampleSums run_excursions(const ModelParams& params, std::uint64_t n, RngSeed seed) {
  const ReactorDynamics dyn(ReactorKind::sis(), params.with_p(0.0));
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  auto parts = parallel_map(blocks, [&](std::size_t b) {
    Rng rng(seed.substream(b));
    SampleSums s;
    const std::uint64_t count = std::min<std::uint64_t>(kBlock, n - b * kBlock);
    for (std::uint64_t i = 0; i < count; ++i) s.add(static_cast<double>(one_excursion(dyn, rng)));
    return s;
  });
  SampleSums total;
  for (const auto& p : parts) total += p;
  return total;
}

GEstimate g_from_cycles(double p, const ModelParams& params, const std::vector<CycleStats>& cycles) {
  std::vector<double> di, d, area, span;
  di.reserve(cycles.size());
  d.reserve(cycles.size());
  area.reserve(cycles.size());
  span.reserve(cycles.size());
  for (const auto& c : cycles) {
    di.push_back(static_cast<double>(c.infected_departures));
    d.push_back(static_cast<double>(c.departures));
    area.push_back(c.infected_area);
    span.push_back(c.duration + c.idle_before);
  }
  GEstimate g;
  g.p_in = p;
  g.params = params;
  g.n_cycles = cycles.size();
  g.p_out = ratio_estimate(di, d);
  g.time_average = ratio_estimate(area, span);
  const double scale = params.mu / params.lambda;
  g.time_average.value *= scale;
  g.time_average.std_error *= scale;
  return g;
}

}  // namespace

GEstimate estimate_g(double p, const ModelParams& params, std::uint64_t n_cycles, RngSeed seed,
                     const ReactorKind& kind) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p out of range");
  if (n_cycles < 100) throw ValidationError("estimate_g needs at least 100 cycles");
  const ModelParams m = params.with_p(p);
  return g_from_cycles(p, m, run_busy_cycles(kind, m, n_cycles, seed));
}

GEstimate estimate_g_air_amf(double p, const ModelParams& params, std::uint64_t n_cycles,
                             RngSeed seed) {
  const double y = air_amf_means(params.with_p(p)).mean_y;
  return estimate_g(p, params, n_cycles, seed, ReactorKind::air(std::max(0.0, y)));
}

DerivativeMethod parse_derivative_method(const std::string& name) {
  if (name == "excursion") return DerivativeMethod::excursion;
  if (name == "finite_difference" || name == "fd") return DerivativeMethod::finite_difference;
  if (name == "both") return DerivativeMethod::both;
  throw ValidationError("unknown derivative method '" + name + "'");
}

Estimate excursion_g_prime0(const ModelParams& params, std::uint64_t n, RngSeed seed) {
  if (n < 2) throw ValidationError("need at least two excursions");
  return run_excursions(params, n, seed).estimate(0.95);
}

Estimate finite_difference_g_prime0(const ModelParams& params, std::uint64_t n_cycles,
                                    RngSeed seed) {
  if (n_cycles < 200) throw ValidationError("finite difference needs at least 200 cycles");
  const double eps = std::min(0.05, 1.0 / (10.0 * params.eta));
  const double half = 0.5 * eps;
  CycleOptions opt;
  opt.block_size = std::max<std::uint64_t>(1, n_cycles / 64);
  // Same seed at both steps: common random numbers.
  const auto c1 = run_busy_cycles(ReactorKind::sis(), params.with_p(eps), n_cycles, seed, opt);
  const auto c2 = run_busy_cycles(ReactorKind::sis(), params.with_p(half), n_cycles, seed, opt);

  const std::size_t blocks = (n_cycles + opt.block_size - 1) / opt.block_size;
  std::vector<double> n1(blocks), d1(blocks), n2(blocks), d2(blocks);
  for (std::size_t i = 0; i < n_cycles; ++i) {
    const std::size_t b = i / opt.block_size;
    n1[b] += static_cast<double>(c1[i].infected_departures);
    d1[b] += static_cast<double>(c1[i].departures);
    n2[b] += static_cast<double>(c2[i].infected_departures);
    d2[b] += static_cast<double>(c2[i].departures);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double md1 = mean(d1), md2 = mean(d2);
  const double r1 = mean(n1) / md1, r2 = mean(n2) / md2;
  // R = 2 A(eps/2) - A(eps) with A(h) = g(h)/h; its delta-method influence per block.
  std::vector<double> z(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    z[b] = 2.0 / half * (n2[b] - r2 * d2[b]) / md2 - 1.0 / eps * (n1[b] - r1 * d1[b]) / md1;
  }
  Estimate e = mean_estimate(z);
  e.value = 2.0 * r2 / half - r1 / eps;
  e.n = n_cycles;
  return e;
}

Estimate estimate_g_prime0(const ModelParams& params, DerivativeMethod method,
                           std::uint64_t budget, RngSeed seed) {
  if (budget < 10000) throw ValidationError("g'(0) budget must be at least 1e4");
  switch (method) {
    case DerivativeMethod::excursion:
      return excursion_g_prime0(params, budget, seed);
    case DerivativeMethod::finite_difference:
      return finite_difference_g_prime0(params, budget, seed);
    case DerivativeMethod::both: {
      const Estimate ex = excursion_g_prime0(params, budget, seed.substream(0));
      const Estimate fd = finite_difference_g_prime0(params, budget, seed.substream(1));
      const Estimate d = difference(ex, fd);
      if (std::abs(d.value) > 3.0 * d.std_error) {
        throw NumericalError("excursion and finite-difference g'(0) estimates disagree",
                             std::abs(d.value));
      }
      return ex;
    }
  }
  return Estimate::undefined();
}

namespace {

// The stopping rule alone leaves p up to 3 SE / (1 - g') from the fixed point,
// which is many SE when g' is near 1. Two Newton steps on g(p) - p with a
// common-random-numbers slope remove that bias; the root inherits the noise
// of g scaled by 1 / (1 - g').
Estimate polish(const GMap& g, double p, Estimate at_p, const PStarOptions& options,
                RngSeed seed, PStarResult& r) {
  const RngSeed base = seed.substream(1u << 20);
  const double lo = std::max(0.0, p - options.slope_step);
  const double hi = std::min(1.0, p + options.slope_step);
  const RngSeed crn = base.substream(0);
  const double slope = (g(hi, crn).value - g(lo, crn).value) / (hi - lo);
  r.slope = std::clamp(slope, 0.0, 0.95);
  const double gain = 1.0 / (1.0 - r.slope);

  const double p1 = std::clamp(p + gain * (at_p.value - p), 0.0, 1.0);
  const Estimate at_p1 = g(p1, base.substream(1));
  r.trace.emplace_back(p1, at_p1);
  Estimate root = at_p1;
  root.value = std::clamp(p1 + gain * (at_p1.value - p1), 0.0, 1.0);
  root.std_error = gain * at_p1.std_error;
  return root;
}

}  // namespace

PStarResult find_p_star(const GMap& g, const PStarOptions& options, RngSeed seed) {
  if (!(options.tol > 0.0)) throw ValidationError("tol must be > 0");
  PStarResult r;
  double p = 1.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Estimate est = g(p, seed.substream(static_cast<std::uint64_t>(it)));
    r.trace.emplace_back(p, est);
    r.iterations = it + 1;
    if (est.value <= options.tol) {
      r.converged = true;
      r.subcritical = true;
      r.p_star = Estimate::exact(0.0);
      return r;
    }
    // Near zero an absolute stopping rule would accept a still-decreasing
    // sequence, so convergence is only declared away from the tolerance band.
    if (est.value > 10.0 * options.tol &&
        std::abs(p - est.value) < std::max(options.tol, 3.0 * est.std_error)) {
      r.converged = true;
      r.p_star = polish(g, p, est, options, seed, r);
      return r;
    }
    // From p = 1 the iterates decrease; a step upward is noise, so damp it.
    p = est.value > p ? p + options.damping * (est.value - p) : est.value;
  }
  r.indeterminate = true;
  r.p_star = r.trace.back().second;
  return r;
}

PStarResult find_p_star(const ModelParams& params, const PStarOptions& options, RngSeed seed) {
  return find_p_star(
      [&](double p, RngSeed s) { return estimate_g(p, params, options.n_cycles, s).p_out; },
      options, seed);
}

PStarResult find_p_star_air(const ModelParams& params, const PStarOptions& options, RngSeed seed) {
  return find_p_star(
      [&](double p, RngSeed s) { return estimate_g_air_amf(p, params, options.n_cycles, s).p_out; },
      options, seed);
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::below: return "below";
    case Verdict::above: return "above";
    case Verdict::indeterminate: return "indeterminate";
  }
  return "?";
}

VerdictEntry classify_eta(const ModelParams& params, double eta, const EtaSearchOptions& options,
                          RngSeed seed) {
  const ModelParams m = params.with_eta(eta);
  VerdictEntry v;
  v.eta = eta;
  SampleSums total;
  std::uint64_t chunk_index = 0;
  while (total.n < options.per_point_budget) {
    const std::uint64_t n = std::min(options.chunk, options.per_point_budget - total.n);
    total += run_excursions(m, std::max<std::uint64_t>(n, 2), seed.substream(chunk_index++));
    v.g_prime0 = total.estimate(options.ci_level);
    if (v.g_prime0.upper() < 1.0) {
      v.verdict = Verdict::below;
      return v;
    }
    if (v.g_prime0.lower() > 1.0) {
      v.verdict = Verdict::above;
      return v;
    }
  }
  v.verdict = Verdict::indeterminate;
  return v;
}

ThresholdSearchResult find_eta_c(const ModelParams& params, const EtaSearchOptions& options,
                                 RngSeed seed) {
  if (options.chunk < 2 || options.per_point_budget < options.chunk) {
    throw ValidationError("per-point budget must be at least one chunk");
  }
  const auto bounds = sis_threshold_bounds(params.mu, params.alpha, params.beta);
  ThresholdSearchResult r;
  std::uint64_t point = 0;
  auto classify = [&](double eta) {
    r.verdicts.push_back(classify_eta(params, eta, options, seed.substream(point++)));
    return r.verdicts.back().verdict;
  };

  double lo = bounds.lower, hi = bounds.upper;
  if (classify(lo) != Verdict::below) {
    throw NumericalError("lower threshold bound not classified below: estimator inconsistency");
  }
  if (classify(hi) != Verdict::above) {
    throw NumericalError("upper threshold bound not classified above: estimator inconsistency");
  }
  auto narrow = [&](double eta, Verdict v) {
    if (v == Verdict::below && eta > lo) lo = eta;
    if (v == Verdict::above && eta < hi) hi = eta;
  };

  while (hi - lo > options.precision && static_cast<int>(r.verdicts.size()) < options.max_points) {
    ++r.iterations;
    const double mid = 0.5 * (lo + hi);
    const Verdict v = classify(mid);
    if (v != Verdict::indeterminate) {
      narrow(mid, v);
      continue;
    }
    // An indeterminate point never narrows the bracket; probe either side.
    const double before = hi - lo;
    const double left = 0.5 * (lo + mid), right = 0.5 * (mid + hi);
    narrow(left, classify(left));
    narrow(right, classify(right));
    if (hi - lo >= before) break;
  }

  const double z = z_value(options.ci_level);
  r.eta_low = lo;
  r.eta_high = hi;
  r.eta_c.value = 0.5 * (lo + hi);
  r.eta_c.std_error = (hi - lo) / (2.0 * z);
  r.eta_c.ci_level = options.ci_level;
  r.eta_c.n = r.verdicts.size();
  return r;
}

}  // namespace migrasim
