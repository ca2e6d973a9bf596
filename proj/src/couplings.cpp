#include "migrasim/couplings.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>

#include "migrasim/parallel.hpp"

namespace migrasim {

namespace {

using Colors = std::array<Color, kMaxCoupledSystems>;

bool is_infected(Color c) { return c != Color::green; }

std::string_view kind_name(CoupledEventKind k) {
  switch (k) {
    case CoupledEventKind::arrival: return "arrival";
    case CoupledEventKind::departure: return "departure";
    case CoupledEventKind::recovery: return "recovery";
    case CoupledEventKind::infection: return "infection";
  }
  return "?";
}

// Shared-clock engine for open reactors (one station with arrivals) and
// closed networks (customers move between stations).
class CoupledEngine {
 public:
  CoupledEngine(std::vector<CoupledSystemSpec> systems, const ModelParams& params, bool open,
                std::size_t stations, bool self_routing, RngSeed seed)
      : sys_(std::move(systems)),
        lambda_(params.lambda),
        mu_(params.mu),
        open_(open),
        self_routing_(self_routing),
        stations_(stations),
        rng_(seed) {
    if (sys_.empty() || sys_.size() > kMaxCoupledSystems) {
      throw ValidationError("coupled run needs 1 to 8 systems");
    }
    for (const auto& s : sys_) {
      if (!(s.alpha > 0.0) || !(s.beta > 0.0)) throw ValidationError("rates must be positive");
      alpha_max_ = std::max(alpha_max_, s.alpha);
      beta_max_ = std::max(beta_max_, s.beta);
    }
    infected_.fill(0);
  }

  std::size_t systems() const { return sys_.size(); }
  std::uint64_t population() const { return all_.size(); }
  double time() const { return t_; }
  const Colors& colors(std::uint32_t id) const { return cust_[id].color; }
  std::uint64_t infected(std::size_t k) const { return infected_[k]; }
  std::uint64_t population_seen(std::size_t k) const { return seen_[k]; }

  std::uint32_t add(std::size_t station, const Colors& c) {
    std::uint32_t id;
    if (!free_.empty()) {
      id = free_.back();
      free_.pop_back();
    } else {
      id = static_cast<std::uint32_t>(cust_.size());
      cust_.emplace_back();
    }
    auto& cu = cust_[id];
    cu.color = c;
    cu.pos_all = static_cast<std::uint32_t>(all_.size());
    all_.push_back(id);
    place(id, station);
    for (std::size_t k = 0; k < sys_.size(); ++k) {
      infected_[k] += is_infected(c[k]);
      ++seen_[k];
    }
    return id;
  }

  Colors arrival_colors(double u) const {
    Colors c{};
    for (std::size_t k = 0; k < sys_.size(); ++k) {
      const auto& s = sys_[k];
      if (u < s.magenta_below) {
        c[k] = Color::magenta;
      } else if (u >= s.red_from && u < s.red_to) {
        c[k] = Color::red;
      } else {
        c[k] = Color::green;
      }
    }
    return c;
  }

  CoupledEvent arrive() {
    const double u = rng_.uniform();
    CoupledEvent e;
    e.kind = CoupledEventKind::arrival;
    e.customer = add(0, arrival_colors(u));
    return finish(e);
  }

  // Draws and applies the next shared clock ring. Departed colors are left in
  // `departed` for cycle tallies.
  CoupledEvent step(Colors& departed) {
    const double n = static_cast<double>(all_.size());
    const double r_arr = open_ ? lambda_ : 0.0;
    const double r_dep = mu_ * n;
    const double r_rec = beta_max_ * n;
    const double r_inf = alpha_max_ * static_cast<double>(pair_weight_);
    const double total = r_arr + r_dep + r_rec + r_inf;
    if (!(total > 0.0)) throw NumericalError("coupled run has no active clock");
    t_ += rng_.exponential(total);
    double v = rng_.uniform() * total;
    if (v < r_arr) return arrive();
    v -= r_arr;
    CoupledEvent e;
    if (v < r_dep) {
      const std::uint32_t id = all_[rng_.index(all_.size())];
      e.kind = CoupledEventKind::departure;
      e.customer = id;
      departed = cust_[id].color;
      if (open_) {
        remove(id);
      } else {
        std::size_t dest;
        if (self_routing_) {
          dest = rng_.index(stations_.size());
        } else {
          dest = rng_.index(stations_.size() - 1);
          if (dest >= cust_[id].station) ++dest;
        }
        e.other = static_cast<std::uint32_t>(dest);
        unplace(id);
        place(id, dest);
      }
      return finish(e);
    }
    v -= r_dep;
    if (v < r_rec) {
      const std::uint32_t id = all_[rng_.index(all_.size())];
      const double thin = rng_.uniform() * beta_max_;
      e.kind = CoupledEventKind::recovery;
      e.customer = id;
      for (std::size_t k = 0; k < sys_.size(); ++k) {
        if (thin < sys_[k].beta) recolor(id, k, Color::green);
      }
      return finish(e);
    }
    // Pair clock: station by weight n_s (n_s - 1), then an ordered pair.
    double w = rng_.uniform() * static_cast<double>(pair_weight_);
    std::size_t s = 0;
    for (; s + 1 < stations_.size(); ++s) {
      const double ns = static_cast<double>(stations_[s].size());
      if (w < ns * (ns - 1.0)) break;
      w -= ns * (ns - 1.0);
    }
    const auto& list = stations_[s];
    const std::size_t i = rng_.index(list.size());
    std::size_t j = rng_.index(list.size() - 1);
    if (j >= i) ++j;
    const std::uint32_t z = list[i], target = list[j];
    const double thin = rng_.uniform() * alpha_max_;
    e.kind = CoupledEventKind::infection;
    e.customer = target;
    e.other = z;
    for (std::size_t k = 0; k < sys_.size(); ++k) {
      if (!(thin < sys_[k].alpha)) continue;
      const Color cz = cust_[z].color[k];
      const Color cv = cust_[target].color[k];
      if (cz == Color::red) {
        recolor(target, k, Color::red);
      } else if (cz == Color::magenta && sys_[k].rule == ColorRule::three_color) {
        if (cv != Color::red) recolor(target, k, Color::magenta);
      }
    }
    return finish(e);
  }

  std::string trace_csv() const {
    std::ostringstream os;
    write_coupled_csv_header(os, sys_.size());
    for (const auto& e : trace_) write_coupled_csv_row(os, e);
    return os.str();
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw CouplingViolation("coupling violation: " + what + "\nrecent events:\n" + trace_csv());
  }

  CoupledEventSink sink;

 private:
  struct Customer {
    Colors color{};
    std::size_t station = 0;
    std::uint32_t pos_station = 0;
    std::uint32_t pos_all = 0;
  };

  static double pairs(std::size_t n) {
    return n < 2 ? 0.0 : static_cast<double>(n) * static_cast<double>(n - 1);
  }

  void place(std::uint32_t id, std::size_t s) {
    auto& list = stations_[s];
    pair_weight_ -= static_cast<std::uint64_t>(pairs(list.size()));
    cust_[id].station = s;
    cust_[id].pos_station = static_cast<std::uint32_t>(list.size());
    list.push_back(id);
    pair_weight_ += static_cast<std::uint64_t>(pairs(list.size()));
  }

  void unplace(std::uint32_t id) {
    auto& list = stations_[cust_[id].station];
    pair_weight_ -= static_cast<std::uint64_t>(pairs(list.size()));
    const std::uint32_t pos = cust_[id].pos_station;
    list[pos] = list.back();
    cust_[list[pos]].pos_station = pos;
    list.pop_back();
    pair_weight_ += static_cast<std::uint64_t>(pairs(list.size()));
  }

  void remove(std::uint32_t id) {
    unplace(id);
    const std::uint32_t pos = cust_[id].pos_all;
    all_[pos] = all_.back();
    cust_[all_[pos]].pos_all = pos;
    all_.pop_back();
    for (std::size_t k = 0; k < sys_.size(); ++k) {
      infected_[k] -= is_infected(cust_[id].color[k]);
      --seen_[k];
    }
    free_.push_back(id);
  }

  void recolor(std::uint32_t id, std::size_t k, Color c) {
    Color& cur = cust_[id].color[k];
    infected_[k] += is_infected(c);
    infected_[k] -= is_infected(cur);
    cur = c;
  }

  CoupledEvent finish(CoupledEvent& e) {
    e.time = t_;
    e.systems = sys_.size();
    for (std::size_t k = 0; k < sys_.size(); ++k) {
      e.n[k] = seen_[k];
      e.infected[k] = infected_[k];
    }
    trace_.push_back(e);
    if (trace_.size() > 32) trace_.pop_front();
    if (sink) sink(e);
    return e;
  }

  std::vector<CoupledSystemSpec> sys_;
  double lambda_, mu_;
  bool open_, self_routing_;
  double alpha_max_ = 0.0, beta_max_ = 0.0;
  std::vector<std::vector<std::uint32_t>> stations_;
  std::vector<Customer> cust_;
  std::vector<std::uint32_t> all_, free_;
  std::uint64_t pair_weight_ = 0;
  std::array<std::uint64_t, kMaxCoupledSystems> infected_{}, seen_{};
  double t_ = 0.0;
  Rng rng_;
  std::deque<CoupledEvent> trace_;
};

// Pathwise checks shared by the two-system constructions: same population,
// and the customer touched by the event is infected in system 1 only if it is
// infected in system 2.
struct PairChecker {
  const CoupledEngine& eng;
  std::uint64_t checks = 0;
  bool identical = true;

  void after(const CoupledEvent& e, bool customer_present) {
    ++checks;
    if (eng.population_seen(0) != eng.population_seen(1)) eng.fail("populations differ");
    if (eng.infected(0) > eng.infected(1)) eng.fail("infected count of the dominated system is larger");
    if (eng.infected(0) != eng.infected(1)) identical = false;
    if (customer_present) {
      const auto& c = eng.colors(e.customer);
      if (is_infected(c[0]) && !is_infected(c[1])) {
        eng.fail("customer " + std::to_string(e.customer) + " infected only in the dominated system");
      }
      if (c[0] != c[1]) identical = false;
    }
  }
};

bool customer_present(const CoupledEvent& e, bool open) {
  return !(open && e.kind == CoupledEventKind::departure);
}

struct CycleBlock {
  std::vector<double> d, low, high;
  std::uint64_t events = 0, checks = 0, strict = 0;
  bool identical = true;
};

CoupledCycleOptions validated(const CoupledCycleOptions& o) {
  if (o.block_size == 0) throw ValidationError("block_size must be > 0");
  return o;
}

// Runs fn(block_index, cycles_in_block) over independent streams; a sink
// forces a single sequential block so that events arrive in order.
template <class Fn>
auto run_blocks(std::uint64_t n_cycles, const CoupledCycleOptions& opt, Fn&& fn) {
  const std::uint64_t bs = opt.sink ? n_cycles : opt.block_size;
  const std::size_t blocks = static_cast<std::size_t>((n_cycles + bs - 1) / bs);
  return parallel_map(blocks, [&](std::size_t b) {
    const std::uint64_t lo = b * bs;
    return fn(b, std::min<std::uint64_t>(bs, n_cycles - lo));
  });
}

CouplingSummary run_open_or_closed(std::vector<CoupledSystemSpec> sys, const ModelParams& params,
                                   RngSeed seed, const CoupledRunOptions& o, std::string name) {
  if (o.events < 2) throw ValidationError("events must be >= 2");
  if (o.batches < 2) throw ValidationError("batches must be >= 2");
  std::size_t n_st = 1;
  std::uint64_t k = 0;
  if (o.closed) {
    if (o.stations < 2) throw ValidationError("closed coupling needs N >= 2");
    n_st = o.stations;
    k = o.customers.value_or(static_cast<std::uint64_t>(std::llround(params.eta * n_st)));
    if (k < 2) throw ValidationError("closed coupling needs at least two customers");
  }
  CoupledEngine eng(std::move(sys), params, !o.closed, n_st, o.self_routing.value_or(false), seed);
  eng.sink = o.sink;
  Colors red{}, green{};
  red.fill(Color::red);
  green.fill(Color::green);
  if (o.closed) {
    // Placement uses its own substream so that the clocks do not depend on it.
    Rng placement(seed.substream(0xC105ED));
    const std::uint64_t inf = std::min(k, o.initially_infected.value_or(k / 2));
    for (std::uint64_t c = 0; c < k; ++c) eng.add(placement.index(n_st), c < inf ? red : green);
  } else {
    for (std::uint64_t c = 0; c < o.initial.x; ++c) eng.add(0, green);
    for (std::uint64_t c = 0; c < o.initial.y; ++c) eng.add(0, red);
  }

  CouplingSummary out;
  out.construction = std::move(name);
  PairChecker check{eng};
  std::vector<double> dur(o.batches, 0.0), a0(o.batches, 0.0), a1(o.batches, 0.0);
  Colors departed{};
  double last = 0.0;
  for (std::uint64_t ev = 0; ev < o.events; ++ev) {
    const std::size_t b = static_cast<std::size_t>(ev * o.batches / o.events);
    const double y0 = static_cast<double>(eng.infected(0));
    const double y1 = static_cast<double>(eng.infected(1));
    const auto e = eng.step(departed);
    const double dt = e.time - last;
    last = e.time;
    dur[b] += dt;
    a0[b] += y0 * dt;
    a1[b] += y1 * dt;
    check.after(e, customer_present(e, !o.closed));
    out.strict += eng.infected(0) < eng.infected(1);
  }
  out.events = o.events;
  out.checks = check.checks;
  out.identical_paths = check.identical;
  out.strict_frequency = static_cast<double>(out.strict) / static_cast<double>(out.events);
  out.low = ratio_estimate(a0, dur);
  out.high = ratio_estimate(a1, dur);
  return out;
}

}  // namespace

void write_coupled_csv_header(std::ostream& os, std::size_t systems) {
  os << "t,kind,customer,other";
  for (std::size_t k = 0; k < systems; ++k) os << ",n_" << k << ",infected_" << k;
  os << "\r\n";
}

void write_coupled_csv_row(std::ostream& os, const CoupledEvent& e) {
  os << e.time << ',' << kind_name(e.kind) << ',' << e.customer << ',' << e.other;
  for (std::size_t k = 0; k < e.systems; ++k) os << ',' << e.n[k] << ',' << e.infected[k];
  os << "\r\n";
}

CouplingSummary coupled_p_monotonicity(double p, double p_hat, const ModelParams& params,
                                       std::uint64_t n_cycles, RngSeed seed,
                                       const CoupledCycleOptions& options) {
  if (!(0.0 <= p && p <= p_hat && p_hat <= 1.0)) throw ValidationError("need 0 <= p <= p_hat <= 1");
  if (n_cycles < 2) throw ValidationError("n_cycles must be >= 2");
  const auto opt = validated(options);
  const std::vector<CoupledSystemSpec> sys{CoupledSystemSpec::sis(params.alpha, params.beta, p),
                                           CoupledSystemSpec::sis(params.alpha, params.beta, p_hat)};
  auto blocks = run_blocks(n_cycles, opt, [&](std::size_t b, std::uint64_t cycles) {
    CycleBlock out;
    CoupledEngine eng(sys, params, true, 1, false, seed.substream(b));
    eng.sink = opt.sink;
    PairChecker check{eng};
    Colors departed{};
    for (std::uint64_t c = 0; c < cycles; ++c) {
      std::uint64_t d = 0, di0 = 0, di1 = 0;
      check.after(eng.arrive(), true);
      ++out.events;
      while (eng.population() > 0) {
        const auto e = eng.step(departed);
        ++out.events;
        if (e.kind == CoupledEventKind::departure) {
          ++d;
          di0 += is_infected(departed[0]);
          di1 += is_infected(departed[1]);
        }
        check.after(e, customer_present(e, true));
      }
      if (di0 > di1) eng.fail("cycle with more infected departures in the dominated system");
      out.strict += di0 < di1;
      out.d.push_back(static_cast<double>(d));
      out.low.push_back(static_cast<double>(di0));
      out.high.push_back(static_cast<double>(di1));
    }
    out.checks = check.checks;
    out.identical = check.identical;
    return out;
  });

  CouplingSummary s;
  s.construction = "p-monotonicity";
  std::vector<double> d, low, high;
  for (const auto& b : blocks) {
    s.events += b.events;
    s.checks += b.checks;
    s.strict += b.strict;
    s.identical_paths = s.identical_paths && b.identical;
    d.insert(d.end(), b.d.begin(), b.d.end());
    low.insert(low.end(), b.low.begin(), b.low.end());
    high.insert(high.end(), b.high.begin(), b.high.end());
  }
  s.cycles = n_cycles;
  s.strict_frequency = static_cast<double>(s.strict) / static_cast<double>(n_cycles);
  s.low = ratio_estimate(low, d);
  s.high = ratio_estimate(high, d);
  return s;
}

CouplingSummary coupled_pair_run(const CoupledSystemSpec& low, const CoupledSystemSpec& high,
                                 const ModelParams& params, RngSeed seed,
                                 const CoupledRunOptions& options) {
  return run_open_or_closed({low, high}, params, seed, options, "pair");
}

CouplingSummary coupled_alpha_monotonicity(double alpha1, double alpha2, const ModelParams& params,
                                           RngSeed seed, const CoupledRunOptions& options) {
  if (!(alpha1 > 0.0 && alpha1 <= alpha2)) throw ValidationError("need 0 < alpha1 <= alpha2");
  return run_open_or_closed({CoupledSystemSpec::sis(alpha1, params.beta, params.p),
                             CoupledSystemSpec::sis(alpha2, params.beta, params.p)},
                            params, seed, options, "alpha-monotonicity");
}

CouplingSummary coupled_beta_monotonicity(double beta1, double beta2, const ModelParams& params,
                                          RngSeed seed, const CoupledRunOptions& options) {
  if (!(beta2 > 0.0 && beta2 <= beta1)) throw ValidationError("need beta1 >= beta2 > 0");
  return run_open_or_closed({CoupledSystemSpec::sis(params.alpha, beta1, params.p),
                             CoupledSystemSpec::sis(params.alpha, beta2, params.p)},
                            params, seed, options, "beta-monotonicity");
}

ThreeColorSummary three_color_run(double p, double p_hat, double r, const ModelParams& params,
                                  std::uint64_t n_cycles, RngSeed seed,
                                  const CoupledCycleOptions& options) {
  if (!(r > 0.0)) throw ValidationError("r must be > 0");
  if (!(0.0 <= p && p <= p_hat && p_hat + r <= 1.0)) {
    throw ValidationError("need 0 <= p <= p_hat and p_hat + r <= 1");
  }
  if (n_cycles < 2) throw ValidationError("n_cycles must be >= 2");
  const auto opt = validated(options);
  const double a = params.alpha, be = params.beta;
  // 0: (r, p) 3-color; 1: (r, p_hat) 3-color; then the merged views of each:
  // magenta as green (red iff r <= u < r + p) and magenta as red (u < r + p).
  const std::vector<CoupledSystemSpec> sys{
      {a, be, r, r, r + p, ColorRule::three_color},
      {a, be, r, r, r + p_hat, ColorRule::three_color},
      {a, be, 0.0, r, r + p, ColorRule::two_color},
      {a, be, 0.0, 0.0, r + p, ColorRule::two_color},
      {a, be, 0.0, r, r + p_hat, ColorRule::two_color},
      {a, be, 0.0, 0.0, r + p_hat, ColorRule::two_color},
  };
  auto as_lo = [](Color c) { return c == Color::red ? Color::red : Color::green; };
  auto as_hi = [](Color c) { return c == Color::green ? Color::green : Color::red; };

  struct Block {
    std::vector<double> d, red_a, mag_a, red_b, mag_b;
    std::uint64_t events = 0, merge = 0, nesting = 0, strict = 0, pattern = 0;
  };
  struct Ring {
    CoupledEventKind kind;
    std::uint32_t customer, other;
    Color a, b;
  };

  auto blocks = run_blocks(n_cycles, opt, [&](std::size_t bi, std::uint64_t cycles) {
    Block out;
    CoupledEngine eng(sys, params, true, 1, false, seed.substream(bi));
    eng.sink = opt.sink;
    Colors departed{};
    std::vector<Ring> rings;
    auto check = [&](const CoupledEvent& e) {
      if (e.kind == CoupledEventKind::departure) return;
      const auto& c = eng.colors(e.customer);
      for (std::size_t base : {0, 1}) {
        const std::size_t lo = 2 + 2 * base, hi = 3 + 2 * base;
        if (c[lo] != as_lo(c[base]) || c[hi] != as_hi(c[base])) {
          eng.fail("merged view of 3-color system " + std::to_string(base) +
                   " differs from its two-color run at customer " + std::to_string(e.customer));
        }
      }
      out.merge += 4;
      if (c[1] == Color::magenta && c[0] != Color::magenta) {
        eng.fail("customer " + std::to_string(e.customer) +
                 " is magenta for the larger p only");
      }
      ++out.nesting;
    };
    for (std::uint64_t cy = 0; cy < cycles; ++cy) {
      std::uint64_t d = 0, ra = 0, ma = 0, rb = 0, mb = 0;
      rings.clear();
      auto note = [&](const CoupledEvent& e, const Colors& c) {
        if (rings.size() < 6) rings.push_back({e.kind, e.customer, e.other, c[0], c[1]});
      };
      const auto first = eng.arrive();
      ++out.events;
      note(first, eng.colors(first.customer));
      check(first);
      while (eng.population() > 0) {
        const auto e = eng.step(departed);
        ++out.events;
        if (e.kind == CoupledEventKind::departure) {
          ++d;
          ra += departed[0] == Color::red;
          ma += departed[0] == Color::magenta;
          rb += departed[1] == Color::red;
          mb += departed[1] == Color::magenta;
          note(e, departed);
        } else {
          note(e, eng.colors(e.customer));
        }
        check(e);
      }
      if (mb > ma) eng.fail("more magenta departures for the larger p");
      out.strict += ma > mb;
      // Magenta first arrival in both, second arrival green / red, the second
      // infects the first, then both leave in arrival order.
      if (rings.size() == 5 && rings[0].kind == CoupledEventKind::arrival &&
          rings[0].a == Color::magenta && rings[0].b == Color::magenta &&
          rings[1].kind == CoupledEventKind::arrival && rings[1].a == Color::green &&
          rings[1].b == Color::red && rings[2].kind == CoupledEventKind::infection &&
          rings[2].customer == rings[0].customer && rings[2].other == rings[1].customer &&
          rings[3].kind == CoupledEventKind::departure && rings[3].customer == rings[0].customer &&
          rings[4].kind == CoupledEventKind::departure && rings[4].customer == rings[1].customer) {
        ++out.pattern;
      }
      out.d.push_back(static_cast<double>(d));
      out.red_a.push_back(static_cast<double>(ra));
      out.mag_a.push_back(static_cast<double>(ma));
      out.red_b.push_back(static_cast<double>(rb));
      out.mag_b.push_back(static_cast<double>(mb));
    }
    return out;
  });

  ThreeColorSummary s;
  std::vector<double> d, ga, ga_r, gb, gb_r, gap;
  for (const auto& b : blocks) {
    s.events += b.events;
    s.merge_checks += b.merge;
    s.nesting_checks += b.nesting;
    s.strict_cycles += b.strict;
    s.two_customer_cycles += b.pattern;
    for (std::size_t i = 0; i < b.d.size(); ++i) {
      d.push_back(b.d[i]);
      ga.push_back(b.red_a[i]);
      ga_r.push_back(b.red_a[i] + b.mag_a[i]);
      gb.push_back(b.red_b[i]);
      gb_r.push_back(b.red_b[i] + b.mag_b[i]);
      gap.push_back(b.mag_a[i] - b.mag_b[i]);
    }
  }
  s.cycles = n_cycles;
  s.g_p = ratio_estimate(ga, d);
  s.g_p_r = ratio_estimate(ga_r, d);
  s.g_phat = ratio_estimate(gb, d);
  s.g_phat_r = ratio_estimate(gb_r, d);
  s.concavity_gap = ratio_estimate(gap, d);
  return s;
}

}  // namespace migrasim
