#include "migrasim/network.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "migrasim/parallel.hpp"

namespace migrasim {

std::uint64_t NetworkState::infected() const {
  std::uint64_t s = 0;
  for (const auto& r : stations) s += r.y;
  return s;
}

std::uint64_t NetworkState::susceptible() const {
  std::uint64_t s = 0;
  for (const auto& r : stations) s += r.x;
  return s;
}

namespace {

// Binary indexed tree over non-negative weights with prefix search.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0.0), values_(n, 0.0) {}

  void set(std::size_t i, double v) {
    const double delta = v - values_[i];
    values_[i] = v;
    for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1)) tree_[k] += delta;
  }
  double value(std::size_t i) const { return values_[i]; }

  double total() const {
    double s = 0.0;
    for (std::size_t k = tree_.size() - 1; k > 0; k -= k & (~k + 1)) s += tree_[k];
    return s;
  }

  // Smallest index whose prefix sum exceeds target; skips zero-weight slots
  // reached through rounding.
  std::size_t find(double target) const {
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 < tree_.size()) step *= 2;
    for (; step > 0; step /= 2) {
      if (pos + step < tree_.size() && tree_[pos + step] <= target) {
        pos += step;
        target -= tree_[pos];
      }
    }
    std::size_t i = std::min(pos, values_.size() - 1);
    while (values_[i] <= 0.0 && i > 0) --i;
    return i;
  }

  void rebuild() {
    std::fill(tree_.begin(), tree_.end(), 0.0);
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double v = values_[i];
      for (std::size_t k = i + 1; k < tree_.size(); k += k & (~k + 1)) tree_[k] += v;
    }
  }

 private:
  std::vector<double> tree_;
  std::vector<double> values_;
};

// Time integrals of D quantities split into equal batches over [start, end].
class WindowBatches {
 public:
  WindowBatches(double start, double end, std::size_t batches, std::size_t dims)
      : start_(start), width_((end - start) / static_cast<double>(batches)),
        n_(batches), dims_(dims), integrals_(batches * dims, 0.0), durations_(batches, 0.0) {}

  void integrate(const double* values, double t0, double t1) {
    t0 = std::max(t0, start_);
    t1 = std::min(t1, start_ + width_ * static_cast<double>(n_));
    if (!(t1 > t0)) return;
    for (std::size_t b = std::min(n_ - 1, static_cast<std::size_t>((t0 - start_) / width_));;
         ++b) {
      const double seg_end =
          b + 1 >= n_ ? t1 : std::min(t1, start_ + width_ * static_cast<double>(b + 1));
      const double dt = seg_end - t0;
      durations_[b] += dt;
      for (std::size_t d = 0; d < dims_; ++d) integrals_[b * dims_ + d] += dt * values[d];
      if (seg_end >= t1 || b + 1 >= n_) break;
      t0 = seg_end;
    }
  }

  // Batch averages of quantity d over batches that saw any time.
  std::vector<double> averages(std::size_t d) const {
    std::vector<double> out;
    for (std::size_t b = 0; b < n_; ++b) {
      if (durations_[b] > 0.0) out.push_back(integrals_[b * dims_ + d] / durations_[b]);
    }
    return out;
  }
  std::vector<double> integrals(std::size_t d) const {
    std::vector<double> out;
    for (std::size_t b = 0; b < n_; ++b) {
      if (durations_[b] > 0.0) out.push_back(integrals_[b * dims_ + d]);
    }
    return out;
  }

 private:
  double start_, width_;
  std::size_t n_, dims_;
  std::vector<double> integrals_;
  std::vector<double> durations_;
};

Estimate batch_mean(const std::vector<double>& v) {
  if (v.size() < 2) return Estimate::undefined();
  return mean_estimate(v);
}

// Incrementally maintained sums over stations of x, y, xx, xy, yy, xxy, xyy.
struct MomentSums {
  double v[7] = {0, 0, 0, 0, 0, 0, 0};

  void apply(const ReactorState& s, double sign) {
    const double x = static_cast<double>(s.x), y = static_cast<double>(s.y);
    v[0] += sign * x;
    v[1] += sign * y;
    v[2] += sign * x * x;
    v[3] += sign * x * y;
    v[4] += sign * y * y;
    v[5] += sign * x * x * y;
    v[6] += sign * x * y * y;
  }
};

StationMoments moments_from(const WindowBatches& w) {
  StationMoments m;
  Estimate* slots[7] = {&m.x, &m.y, &m.xx, &m.xy, &m.yy, &m.xxy, &m.xyy};
  for (std::size_t d = 0; d < 7; ++d) {
    const auto avg = w.averages(d);
    *slots[d] = batch_mean(avg);
    m.batches.resize(avg.size());
    for (std::size_t b = 0; b < avg.size(); ++b) m.batches[b][d] = avg[b];
  }
  return m;
}

class NetworkEngine {
 public:
  NetworkEngine(ReactorVariant variant, const ModelParams& params, NetworkState state,
                const NetworkOptions& options, Rng& rng)
      : variant_(variant), m_(params), s_(std::move(state)), opt_(options), rng_(rng),
        n_(s_.stations.size()), local_(n_), sus_(n_) {
    self_routing_ = options.self_routing.value_or(variant != ReactorVariant::sis);
    if (n_ < 2 && !self_routing_) throw ValidationError("need at least two stations");
    for (std::size_t i = 0; i < n_; ++i) {
      refresh(i);
      sums_.apply(s_.stations[i], +1.0);
      infected_ += s_.stations[i].y;
      susceptible_ += s_.stations[i].x;
    }
  }

  const NetworkState& state() const { return s_; }
  const MomentSums& sums() const { return sums_; }
  std::uint64_t infected() const { return infected_; }
  std::uint64_t population() const { return infected_ + susceptible_; }

  double total_rate() const {
    double r = local_.total();
    if (variant_ == ReactorVariant::air) r += air_infection_rate();
    if (opt_.open) r += opt_.external_lambda * static_cast<double>(n_);
    return r;
  }

  void step(double total) {
    if (++since_rebuild_ == 1u << 20) {
      local_.rebuild();
      sus_.rebuild();
      since_rebuild_ = 0;
    }
    double u = rng_.uniform() * total;
    if (opt_.open) {
      const double ext = opt_.external_lambda * static_cast<double>(n_);
      if (u < ext) {
        const std::size_t j = rng_.index(n_);
        const bool inf = rng_.uniform() < opt_.external_p;
        change(j, inf ? 0 : 1, inf ? 1 : 0);
        return;
      }
      u -= ext;
    }
    if (variant_ == ReactorVariant::air) {
      const double air = air_infection_rate();
      if (u < air) {
        const std::size_t i = sus_.find(rng_.uniform() * sus_.total());
        change(i, -1, +1);
        return;
      }
      u -= air;
    }
    const std::size_t i = local_.find(std::min(u, local_.total() * (1.0 - 1e-15)));
    const ReactorState st = s_.stations[i];
    const double x = static_cast<double>(st.x), y = static_cast<double>(st.y);
    // Channel draw within the station.
    double v = rng_.uniform() * local_.value(i);
    const double mig_s = m_.mu * x, mig_i = m_.mu * y;
    const double inf = variant_ == ReactorVariant::air ? 0.0 : m_.alpha * x * y;
    if (v < mig_s && st.x > 0) {
      change(i, -1, 0);
      if (!opt_.open) change(route(i), +1, 0);
      return;
    }
    v -= mig_s;
    if (v < mig_i && st.y > 0) {
      change(i, 0, -1);
      if (!opt_.open) change(route(i), 0, +1);
      return;
    }
    v -= mig_i;
    if (v < inf && st.x > 0 && st.y > 0) {
      if (variant_ == ReactorVariant::docs) {
        change(i, -1, 0);
        change(route(i), 0, +1);
      } else {
        change(i, -1, +1);
      }
      return;
    }
    if (st.y == 0) {
      // Rounding landed past the last positive channel: redo as migration.
      if (st.x > 0) {
        change(i, -1, 0);
        if (!opt_.open) change(route(i), +1, 0);
      }
      return;
    }
    if (variant_ == ReactorVariant::docs) {
      change(i, 0, -1);
      change(route(i), +1, 0);
    } else {
      change(i, +1, -1);
    }
  }

 private:
  double air_infection_rate() const {
    const double k = static_cast<double>(n_);
    return m_.alpha * static_cast<double>(infected_) / k * static_cast<double>(susceptible_);
  }

  std::size_t route(std::size_t from) {
    if (self_routing_) return rng_.index(n_);
    std::size_t j = rng_.index(n_ - 1);
    return j >= from ? j + 1 : j;
  }

  void change(std::size_t i, int dx, int dy) {
    auto& st = s_.stations[i];
    sums_.apply(st, -1.0);
    st.x = static_cast<std::uint64_t>(static_cast<std::int64_t>(st.x) + dx);
    st.y = static_cast<std::uint64_t>(static_cast<std::int64_t>(st.y) + dy);
    check_count(st.x, "station susceptible count");
    check_count(st.y, "station infected count");
    sums_.apply(st, +1.0);
    infected_ = static_cast<std::uint64_t>(static_cast<std::int64_t>(infected_) + dy);
    susceptible_ = static_cast<std::uint64_t>(static_cast<std::int64_t>(susceptible_) + dx);
    refresh(i);
  }

  void refresh(std::size_t i) {
    const auto& st = s_.stations[i];
    const double x = static_cast<double>(st.x), y = static_cast<double>(st.y);
    double r = m_.mu * (x + y) + m_.beta * y;
    if (variant_ != ReactorVariant::air) r += m_.alpha * x * y;
    local_.set(i, r);
    sus_.set(i, x);
  }

  ReactorVariant variant_;
  ModelParams m_;
  NetworkState s_;
  NetworkOptions opt_;
  Rng& rng_;
  std::size_t n_;
  bool self_routing_ = false;
  Fenwick local_;
  Fenwick sus_;
  MomentSums sums_;
  std::uint64_t infected_ = 0;
  std::uint64_t susceptible_ = 0;
  std::uint32_t since_rebuild_ = 0;
};

}  // namespace

NetworkState random_network_state(std::size_t n_stations, std::uint64_t k, std::uint64_t infected,
                                  Rng& rng) {
  if (n_stations < 1) throw ValidationError("need at least one station");
  if (infected > k) throw ValidationError("initial infected count exceeds K");
  NetworkState s;
  s.stations.resize(n_stations);
  s.total = k;
  for (std::uint64_t c = 0; c < k; ++c) {
    auto& st = s.stations[rng.index(n_stations)];
    if (c < infected) {
      ++st.y;
    } else {
      ++st.x;
    }
  }
  return s;
}

NetworkResult simulate_network(ReactorVariant variant, const ModelParams& params,
                               NetworkState initial, double horizon, RngSeed seed,
                               const NetworkOptions& options, const NetworkSink& sink) {
  if (!(horizon > 0.0)) throw ValidationError("horizon must be > 0");
  if (options.batches < 2) throw ValidationError("need at least two batches");
  Rng rng(seed);
  NetworkEngine eng(variant, params, std::move(initial), options, rng);
  const double n = static_cast<double>(eng.state().stations.size());

  NetworkResult res;
  WindowBatches window(options.burn_in_fraction * horizon, horizon, options.batches, 9);
  double t = 0.0;
  double next_record = 0.0;
  auto values = [&](double* out) {
    for (int d = 0; d < 7; ++d) out[d] = eng.sums().v[d] / n;
    out[7] = static_cast<double>(eng.infected());
    out[8] = static_cast<double>(eng.population());
  };
  auto record_until = [&](double until) {
    if (options.record_interval <= 0.0) return;
    while (next_record <= until && next_record <= horizon) {
      res.trajectory.push_back({next_record, eng.infected(), eng.sums().v[0] / n, eng.sums().v[1] / n});
      next_record += options.record_interval;
    }
  };
  if (eng.infected() == 0) {
    res.absorbed = true;
    res.absorption_time = 0.0;
  }

  double vals[9];
  for (;;) {
    if (options.stop_on_extinction && res.absorbed) break;
    const double total = eng.total_rate();
    const double t_next = total > 0.0 ? t + rng.exponential(total) : horizon;
    const double seg_end = std::min(t_next, horizon);
    values(vals);
    window.integrate(vals, t, seg_end);
    record_until(seg_end);
    if (t_next >= horizon) {
      t = horizon;
      break;
    }
    t = t_next;
    eng.step(total);
    ++res.events;
    if (sink) sink(t, eng.state());
    if (!res.absorbed && eng.infected() == 0) {
      res.absorbed = true;
      res.absorption_time = t;
    }
  }
  res.end_time = t;
  res.moments = moments_from(window);
  const auto yi = window.integrals(7), ni = window.integrals(8);
  bool any_population = false;
  for (double v : ni) any_population |= v > 0.0;
  res.infected_fraction = yi.size() >= 2 && any_population ? ratio_estimate(yi, ni)
                                                           : Estimate::undefined();
  res.final_state = eng.state();
  res.final_state.total = eng.population();
  return res;
}

std::uint64_t customers_for_density(double eta, std::size_t n_stations) {
  if (!(eta >= 0.0)) throw ValidationError("eta must be >= 0");
  return static_cast<std::uint64_t>(std::llround(eta * static_cast<double>(n_stations)));
}

NetworkResult simulate_closed(ReactorVariant variant, std::size_t n_stations, std::uint64_t k,
                              const ModelParams& params, double horizon, RngSeed seed,
                              const NetworkOptions& options,
                              std::optional<std::uint64_t> initial_infected) {
  if (n_stations < 2) throw ValidationError("closed network needs N >= 2");
  if (options.open) throw ValidationError("simulate_closed requires a closed configuration");
  // The placement draws use a dedicated substream so the dynamics stream is
  // the same whatever the initial layout.
  Rng placement(seed.substream(0xC105ED));
  auto init = random_network_state(n_stations, k, initial_infected.value_or(k), placement);
  return simulate_network(variant, params, std::move(init), horizon, seed, options);
}

double ExtinctionResult::median() const {
  if (reps.empty()) return 0.0;
  std::vector<double> v;
  for (const auto& r : reps) v.push_back(r.absorption_time);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExtinctionResult extinction_time(ReactorVariant variant, std::size_t n_stations, std::uint64_t k,
                                 const ModelParams& params, std::size_t reps, double cap,
                                 RngSeed seed, const NetworkOptions& options) {
  if (reps < 1) throw ValidationError("reps must be >= 1");
  if (!(cap > 0.0)) throw ValidationError("cap must be > 0");
  NetworkOptions opt = options;
  opt.stop_on_extinction = true;
  opt.record_interval = 0.0;
  opt.burn_in_fraction = 0.0;
  opt.batches = 2;
  ExtinctionResult out;
  out.reps = parallel_map(reps, [&](std::size_t r) {
    ExtinctionRep rep;
    rep.rep = r;
    if (k == 0) return rep;
    const auto res = simulate_closed(variant, n_stations, k, params, cap, seed.substream(r), opt);
    rep.censored = !res.absorbed;
    rep.absorption_time = res.absorbed ? res.absorption_time : cap;
    return rep;
  });
  for (const auto& r : out.reps) out.survived_at_cap += r.censored;
  return out;
}

MeanFieldResult simulate_meanfield(std::size_t replicas, double h, const ModelParams& m, double p0,
                                   double horizon, RngSeed seed, const MeanFieldOptions& options) {
  if (replicas < 100) throw ValidationError("mean-field ensemble needs M >= 100");
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw ValidationError("p0 out of range");
  if (!(horizon > 0.0)) throw ValidationError("horizon must be > 0");
  Rng rng(seed);
  std::vector<ReactorState> st(replicas);
  if (options.init_from_reactor) {
    // Snapshots of an open reactor at input fraction p0, spaced well apart.
    const double spacing = 5.0 / m.mu;
    SimulationOptions so;
    so.burn_in = 20.0 / m.mu;
    so.horizon = *so.burn_in + spacing * static_cast<double>(replicas);
    std::size_t filled = 0;
    double next = *so.burn_in;
    ReactorState cur;
    simulate_reactor(ReactorKind::sis(), m.with_p(p0), so, seed.substream(1), [&](const EventRecord& e) {
      while (filled < replicas && next <= e.time) {
        st[filled++] = cur;
        next += spacing;
      }
      cur = e.state_after;
    });
    while (filled < replicas) st[filled++] = cur;
  } else {
    for (auto& s : st) {
      s.x = rng.poisson(m.eta * (1.0 - p0));
      s.y = rng.poisson(m.eta * p0);
    }
  }

  auto ensemble_means = [&](double& mx, double& my) {
    double sx = 0, sy = 0;
    for (const auto& s : st) {
      sx += static_cast<double>(s.x);
      sy += static_cast<double>(s.y);
    }
    mx = sx / static_cast<double>(replicas);
    my = sy / static_cast<double>(replicas);
  };

  MeanFieldResult res;
  if (h <= 0.0) {
    std::uint64_t ymax = 0;
    for (const auto& s : st) ymax = std::max(ymax, s.y);
    const double rmax = std::max({m.alpha * static_cast<double>(std::max<std::uint64_t>(ymax, 1)) + m.mu,
                                  m.beta + m.mu});
    h = 0.01 / rmax;
  }
  res.step = h;
  const std::size_t slots = static_cast<std::size_t>(std::ceil(horizon / h));
  WindowBatches window(options.burn_in_fraction * horizon, static_cast<double>(slots) * h,
                       options.batches, 8);
  double next_record = 0.0;
  std::vector<std::uint64_t> pending_x, pending_y;
  const double leave_i = 1.0 - std::exp(-h * (m.beta + m.mu));
  const double share_recover = m.beta / (m.beta + m.mu);

  for (std::size_t k = 0; k <= slots; ++k) {
    const double t = static_cast<double>(k) * h;
    double mx, my;
    ensemble_means(mx, my);
    if (options.record_interval > 0.0 && t + 1e-12 >= next_record) {
      res.trajectory.push_back({t, static_cast<std::uint64_t>(std::llround(my * replicas)), mx, my});
      next_record += options.record_interval;
    }
    if (k == slots) break;
    // Slot-start ensemble sums for the time average.
    MomentSums sums;
    for (const auto& s : st) sums.apply(s, +1.0);
    double vals[8];
    for (int d = 0; d < 7; ++d) vals[d] = sums.v[d] / static_cast<double>(replicas);
    vals[7] = mx + my;
    window.integrate(vals, t, t + h);

    std::uint64_t dep_x = 0, dep_y = 0;
    for (auto& s : st) {
      const double ay = m.alpha * static_cast<double>(s.y);
      const double rate_s = ay + m.mu;
      if (rate_s * h > 0.5 || (m.beta + m.mu) * h > 0.5) res.discretization_warning = true;
      const std::uint64_t moved_s = rng.binomial(s.x, 1.0 - std::exp(-h * rate_s));
      const std::uint64_t infected = rng.binomial(moved_s, ay / rate_s);
      const std::uint64_t moved_i = rng.binomial(s.y, leave_i);
      const std::uint64_t recovered = rng.binomial(moved_i, share_recover);
      s.x = s.x - moved_s + recovered;
      s.y = s.y - moved_i + infected;
      dep_x += moved_s - infected;
      dep_y += moved_i - recovered;
    }
    if (options.arrivals == ArrivalMode::redistribute) {
      for (std::uint64_t c = 0; c < dep_x; ++c) ++st[rng.index(replicas)].x;
      for (std::uint64_t c = 0; c < dep_y; ++c) ++st[rng.index(replicas)].y;
    } else {
      for (auto& s : st) {
        s.x += rng.poisson(h * m.mu * mx);
        s.y += rng.poisson(h * m.mu * my);
      }
    }
  }
  res.moments = moments_from(window);
  res.mean_total = batch_mean(window.averages(7));
  return res;
}

RoutingDocsResult simulate_routing_docs_meanfield(std::size_t replicas, const ModelParams& params,
                                                  double horizon, RngSeed seed,
                                                  const RoutingDocsOptions& options) {
  if (replicas < 100) throw ValidationError("routing mean-field ensemble needs M >= 100");
  NetworkOptions net;
  net.self_routing = true;
  net.burn_in_fraction = options.burn_in_fraction;
  net.batches = options.batches;
  RoutingDocsResult out;
  out.params = params;
  out.closed_tl = options.closed_tl;
  NetworkResult res;
  if (options.closed_tl) {
    const std::uint64_t k = customers_for_density(params.eta, replicas);
    res = simulate_closed(ReactorVariant::docs, replicas, k, params, horizon, seed, net, k / 2);
  } else {
    net.open = true;
    net.external_lambda = params.lambda;
    net.external_p = params.p;
    Rng placement(seed.substream(0xC105ED));
    NetworkState init;
    init.stations.resize(replicas);
    for (auto& s : init.stations) {
      s.x = placement.poisson(params.eta * params.q);
      s.y = placement.poisson(params.eta * params.p);
    }
    res = simulate_network(ReactorVariant::docs, params, std::move(init), horizon, seed, net);
  }
  out.moments = res.moments;
  out.p_star = out.moments.y;
  const double scale = params.mu / params.lambda;
  out.p_star.value *= scale;
  out.p_star.std_error *= scale;
  return out;
}

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryPoint>& t) {
  os << "t,total_infected,mean_x,mean_y\r\n";
  for (const auto& p : t) {
    os << p.t << ',' << p.total_infected << ',' << p.mean_x << ',' << p.mean_y << "\r\n";
  }
}

void write_extinction_csv(std::ostream& os, const ExtinctionResult& r) {
  os << "rep,absorption_time,censored\r\n";
  for (const auto& rep : r.reps) {
    os << rep.rep << ',' << rep.absorption_time << ',' << (rep.censored ? 1 : 0) << "\r\n";
  }
}

}  // namespace migrasim
