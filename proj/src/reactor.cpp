#include "migrasim/reactor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "migrasim/parallel.hpp"

namespace migrasim {

std::string_view to_string(ReactorVariant v) {
  switch (v) {
    case ReactorVariant::sis: return "sis";
    case ReactorVariant::docs: return "docs";
    case ReactorVariant::air: return "air";
  }
  return "?";
}

ReactorVariant parse_variant(std::string_view name) {
  if (name == "sis") return ReactorVariant::sis;
  if (name == "docs") return ReactorVariant::docs;
  if (name == "air") return ReactorVariant::air;
  throw ValidationError("unknown variant '" + std::string(name) + "' (expected sis, docs or air)");
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::arrival_s: return "arrival_S";
    case EventKind::arrival_i: return "arrival_I";
    case EventKind::departure_s: return "departure_S";
    case EventKind::departure_i: return "departure_I";
    case EventKind::infection: return "infection";
    case EventKind::recovery: return "recovery";
  }
  return "?";
}

ReactorDynamics::ReactorDynamics(ReactorKind kind, const ModelParams& params,
                                 bool docs_recovery_split)
    : kind_(kind), params_(params) {
  if (kind.variant == ReactorVariant::air && !(kind.y_param >= 0.0)) {
    throw ValidationError("AIR reactor requires y_param >= 0");
  }
  split_recovery_ = docs_recovery_split &&
                    std::abs(params.nu - (params.mu + params.beta)) <=
                        1e-12 * (params.mu + params.beta);
}

std::array<double, kEventKinds> ReactorDynamics::rates(const ReactorState& s) const {
  const double x = static_cast<double>(s.x);
  const double y = static_cast<double>(s.y);
  const ModelParams& m = params_;
  std::array<double, kEventKinds> r{};
  r[0] = m.lambda * m.q;
  r[1] = m.lambda * m.p;
  r[2] = m.mu * x;
  switch (kind_.variant) {
    case ReactorVariant::sis:
      r[3] = m.mu * y;
      r[4] = m.alpha * x * y;
      r[5] = m.beta * y;
      break;
    case ReactorVariant::docs:
      if (split_recovery_) {
        r[3] = m.mu * y;
        r[5] = m.beta * y;
      } else {
        r[3] = m.nu * y;
        r[5] = 0.0;
      }
      r[4] = m.alpha * x * y;
      break;
    case ReactorVariant::air:
      r[3] = m.mu * y;
      r[4] = m.alpha * kind_.y_param * x;
      r[5] = m.beta * y;
      break;
  }
  return r;
}

EventKind ReactorDynamics::choose(const ReactorState& s, double u) const {
  const auto r = rates(s);
  double total = 0.0;
  for (double v : r) total += v;
  double target = u * total;
  std::size_t last = 0;
  for (std::size_t k = 0; k < kEventKinds; ++k) {
    if (r[k] <= 0.0) continue;
    last = k;
    if (target < r[k]) return static_cast<EventKind>(k);
    target -= r[k];
  }
  return static_cast<EventKind>(last);
}

ReactorState ReactorDynamics::apply(const ReactorState& s, EventKind k) const {
  ReactorState n = s;
  switch (k) {
    case EventKind::arrival_s:
      ++n.x;
      check_count(n.x, "susceptible count");
      break;
    case EventKind::arrival_i:
      ++n.y;
      check_count(n.y, "infected count");
      break;
    case EventKind::departure_s:
      --n.x;
      break;
    case EventKind::departure_i:
      --n.y;
      break;
    case EventKind::infection:
      --n.x;
      // DOCS: the newly infected customer leaves immediately.
      if (kind_.variant != ReactorVariant::docs) ++n.y;
      break;
    case EventKind::recovery:
      --n.y;
      // DOCS: the recovered customer leaves immediately.
      if (kind_.variant != ReactorVariant::docs) ++n.x;
      break;
  }
  return n;
}

bool ReactorDynamics::departs(EventKind k) const {
  if (k == EventKind::departure_s || k == EventKind::departure_i) return true;
  return kind_.variant == ReactorVariant::docs &&
         (k == EventKind::infection || k == EventKind::recovery);
}

bool ReactorDynamics::departs_infected(EventKind k) const {
  if (k == EventKind::departure_i) return true;
  return kind_.variant == ReactorVariant::docs && k == EventKind::infection;
}

EventTally& EventTally::operator+=(const EventTally& o) {
  count += o.count;
  sum_x_before += o.sum_x_before;
  sum_y_before += o.sum_y_before;
  sum_x_after += o.sum_x_after;
  sum_y_after += o.sum_y_after;
  return *this;
}

namespace {

void monomials(const ReactorState& s, MomentArray& out) {
  const double x = static_cast<double>(s.x);
  const double y = static_cast<double>(s.y);
  double xp = 1.0;
  for (int a = 0; a < kMomentOrder; ++a) {
    double v = xp;
    for (int b = 0; b < kMomentOrder; ++b) {
      out[a * kMomentOrder + b] = v;
      v *= y;
    }
    xp *= x;
  }
}

// Splits time integrals and event tallies over equal-length batches of the
// observation window [start, end].
class BatchAccumulator {
 public:
  BatchAccumulator(double start, double end, std::size_t batches)
      : start_(start), width_((end - start) / static_cast<double>(batches)), records_(batches) {
    for (auto& r : records_) r.duration = width_;
  }

  void integrate(const ReactorState& s, double t0, double t1) {
    t0 = std::max(t0, start_);
    const double end = start_ + width_ * static_cast<double>(records_.size());
    t1 = std::min(t1, end);
    if (!(t1 > t0)) return;
    MomentArray mono;
    monomials(s, mono);
    // Walk batch indices directly: recomputing the index from a boundary time
    // can round back into the previous batch.
    for (std::size_t b = batch_of(t0); t0 < t1; ++b) {
      const double b_end = b + 1 >= records_.size()
                               ? end
                               : start_ + width_ * static_cast<double>(b + 1);
      const double seg_end = std::min(t1, b_end);
      const double dt = seg_end - t0;
      auto& integ = records_[b].moment_integrals;
      for (std::size_t i = 0; i < integ.size(); ++i) integ[i] += dt * mono[i];
      if (seg_end >= t1 || b + 1 >= records_.size()) break;
      t0 = seg_end;
    }
  }

  void record(double t, EventKind k, const ReactorState& before, const ReactorState& after) {
    if (t < start_) return;
    const std::size_t b = batch_of(t);
    auto& tally = records_[b].events[static_cast<std::size_t>(k)];
    tally.count += 1;
    tally.sum_x_before += static_cast<double>(before.x);
    tally.sum_y_before += static_cast<double>(before.y);
    tally.sum_x_after += static_cast<double>(after.x);
    tally.sum_y_after += static_cast<double>(after.y);
  }

  std::vector<BatchRecord> take() { return std::move(records_); }

 private:
  std::size_t batch_of(double t) const {
    const auto b = static_cast<std::size_t>((t - start_) / width_);
    return std::min(b, records_.size() - 1);
  }

  double start_;
  double width_;
  std::vector<BatchRecord> records_;
};

}  // namespace

SimulationResult simulate_reactor(const ReactorKind& kind, const ModelParams& params,
                                  const SimulationOptions& options, RngSeed seed,
                                  const EventSink& sink) {
  if (!(options.horizon > 0.0)) throw ValidationError("horizon must be > 0");
  if (options.batches < 2) throw ValidationError("need at least two batches");
  const double burn_in = options.burn_in.value_or(options.burn_in_fraction * options.horizon);
  if (!(burn_in >= 0.0 && burn_in < options.horizon)) {
    throw ValidationError("burn-in must lie in [0, horizon)");
  }

  ReactorDynamics dyn(kind, params, options.docs_recovery_split);
  Rng rng(seed);
  BatchAccumulator acc(burn_in, options.horizon, options.batches);

  SimulationResult result;
  result.kind = kind;
  result.params = params;
  result.ci_level = options.ci_level;

  ReactorState s = options.initial;
  double t = 0.0;
  std::uint64_t events = 0;
  for (;;) {
    const auto r = dyn.rates(s);
    double total = 0.0;
    for (double v : r) total += v;
    const double t_next =
        total > 0.0 ? t + rng.exponential(total) : std::numeric_limits<double>::infinity();
    acc.integrate(s, t, std::min(t_next, options.horizon));
    if (t_next >= options.horizon) break;
    const EventKind k = dyn.choose(s, rng.uniform());
    const ReactorState next = dyn.apply(s, k);
    acc.record(t_next, k, s, next);
    if (sink) sink(EventRecord{t_next, k, s, next});
    s = next;
    t = t_next;
    ++events;
  }
  result.batches = acc.take();
  result.events = events;
  result.final_state = s;
  return result;
}

double SimulationResult::observed_time() const {
  double t = 0.0;
  for (const auto& b : batches) t += b.duration;
  return t;
}

MomentTable SimulationResult::moments() const {
  MomentArray sum{};
  for (const auto& b : batches) {
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += b.moment_integrals[i];
  }
  const double T = observed_time();
  for (auto& v : sum) v /= T;
  return MomentTable(sum);
}

Estimate SimulationResult::functional(const std::function<double(const MomentTable&)>& f) const {
  std::vector<double> per_batch;
  per_batch.reserve(batches.size());
  for (const auto& b : batches) {
    MomentArray m = b.moment_integrals;
    for (auto& v : m) v /= b.duration;
    per_batch.push_back(f(MomentTable(m)));
  }
  Estimate e = mean_estimate(per_batch, ci_level);
  // Point value from the pooled table; batch spread supplies the error.
  e.value = f(moments());
  return e;
}

Estimate SimulationResult::moment(int a, int b) const {
  return functional([a, b](const MomentTable& m) { return m(a, b); });
}

EventTally SimulationResult::tally(EventKind k) const {
  EventTally t;
  for (const auto& b : batches) t += b.events[static_cast<std::size_t>(k)];
  return t;
}

std::uint64_t SimulationResult::event_count(EventKind k) const {
  return static_cast<std::uint64_t>(tally(k).count);
}

double horizon_for_events(const ReactorKind& kind, const ModelParams& m, double events) {
  if (!(events > 0.0)) throw ValidationError("event budget must be > 0");
  // Crude stationary event rate: migration in and out plus state changes at
  // a half-infected occupancy.
  const double n = m.eta;
  double rate = 2.0 * m.lambda + m.beta * n;
  if (kind.variant == ReactorVariant::air) {
    rate += m.alpha * kind.y_param * n;
  } else {
    rate += m.alpha * 0.25 * n * n;
  }
  return events / rate;
}

CycleStats run_one_cycle(const ReactorDynamics& dyn, Rng& rng) {
  const ModelParams& m = dyn.params();
  CycleStats c;
  c.idle_before = rng.exponential(m.lambda);
  ReactorState s;
  if (rng.uniform() < m.p) {
    s.y = 1;
  } else {
    s.x = 1;
  }
  double t = 0.0;
  while (s.x + s.y > 0) {
    const auto r = dyn.rates(s);
    double total = 0.0;
    for (double v : r) total += v;
    const double dt = rng.exponential(total);
    c.infected_area += dt * static_cast<double>(s.y);
    t += dt;
    const EventKind k = dyn.choose(s, rng.uniform());
    if (dyn.departs(k)) {
      ++c.departures;
      if (dyn.departs_infected(k)) ++c.infected_departures;
    }
    s = dyn.apply(s, k);
  }
  c.duration = t;
  return c;
}

std::vector<CycleStats> run_busy_cycles(const ReactorKind& kind, const ModelParams& params,
                                        std::uint64_t n_cycles, RngSeed seed,
                                        const CycleOptions& options) {
  if (n_cycles < 1) throw ValidationError("n_cycles must be >= 1");
  if (options.block_size < 1) throw ValidationError("block_size must be >= 1");
  const ReactorDynamics dyn(kind, params, options.docs_recovery_split);
  const std::uint64_t block = options.block_size;
  const std::size_t n_blocks = (n_cycles + block - 1) / block;
  auto blocks = parallel_map(n_blocks, [&](std::size_t b) {
    Rng rng(seed.substream(b));
    const std::uint64_t begin = b * block;
    const std::uint64_t end = std::min<std::uint64_t>(n_cycles, begin + block);
    std::vector<CycleStats> out;
    out.reserve(end - begin);
    for (std::uint64_t i = begin; i < end; ++i) out.push_back(run_one_cycle(dyn, rng));
    return out;
  });
  std::vector<CycleStats> all;
  all.reserve(n_cycles);
  for (auto& b : blocks) all.insert(all.end(), b.begin(), b.end());
  return all;
}

namespace {

// Event average of a tally field over batches (ratio of sums).
Estimate event_average(const SimulationResult& run, EventKind k,
                       double EventTally::*field) {
  std::vector<double> num, den;
  num.reserve(run.batches.size());
  den.reserve(run.batches.size());
  double total = 0.0;
  for (const auto& b : run.batches) {
    const auto& t = b.events[static_cast<std::size_t>(k)];
    num.push_back(t.*field);
    den.push_back(t.count);
    total += t.count;
  }
  if (total <= 0.0) return Estimate::undefined(run.ci_level);
  return ratio_estimate(num, den, run.ci_level);
}

Estimate event_rate(const SimulationResult& run, EventKind k) {
  std::vector<double> num, den;
  for (const auto& b : run.batches) {
    num.push_back(b.events[static_cast<std::size_t>(k)].count);
    den.push_back(b.duration);
  }
  return ratio_estimate(num, den, run.ci_level);
}

}  // namespace

PalmEstimates palm_estimates(const SimulationResult& run) {
  PalmEstimates pe;
  using K = EventKind;
  pe.e_I_Y_minus = event_average(run, K::infection, &EventTally::sum_y_before);
  pe.e_I_X_minus = event_average(run, K::infection, &EventTally::sum_x_before);
  pe.e_I_Y_plus = event_average(run, K::infection, &EventTally::sum_y_after);
  pe.e_I_X_plus = event_average(run, K::infection, &EventTally::sum_x_after);
  pe.e_R_Y_plus = event_average(run, K::recovery, &EventTally::sum_y_after);
  pe.e_R_X_minus = event_average(run, K::recovery, &EventTally::sum_x_before);
  pe.e_R_X_plus = event_average(run, K::recovery, &EventTally::sum_x_after);
  pe.e_AI_Y_minus = event_average(run, K::arrival_i, &EventTally::sum_y_before);
  pe.e_AS_X_minus = event_average(run, K::arrival_s, &EventTally::sum_x_before);
  pe.e_DI_Y_plus = event_average(run, K::departure_i, &EventTally::sum_y_after);
  pe.e_DS_X_plus = event_average(run, K::departure_s, &EventTally::sum_x_after);
  pe.a_i = event_rate(run, K::infection);
  pe.a_r = event_rate(run, K::recovery);
  pe.rate_arrival_i = event_rate(run, K::arrival_i);
  pe.rate_arrival_s = event_rate(run, K::arrival_s);
  pe.rate_departure_i = event_rate(run, K::departure_i);
  pe.rate_departure_s = event_rate(run, K::departure_s);
  pe.low_confidence = run.event_count(K::infection) < 100 || run.event_count(K::recovery) < 100;
  return pe;
}

PalmEstimates palm_estimates(const ModelParams& params, double horizon, RngSeed seed,
                             std::size_t batches) {
  SimulationOptions opt;
  opt.horizon = horizon;
  opt.batches = batches;
  return palm_estimates(simulate_reactor(ReactorKind::sis(), params, opt, seed));
}

void write_event_csv_header(std::ostream& os) {
  os << "time,kind,x_before,y_before,x_after,y_after\r\n";
}

void write_event_csv_row(std::ostream& os, const EventRecord& e) {
  os << e.time << ',' << to_string(e.kind) << ',' << e.state_before.x << ','
     << e.state_before.y << ',' << e.state_after.x << ',' << e.state_after.y << "\r\n";
}

}  // namespace migrasim
