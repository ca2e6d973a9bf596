#include "migrasim/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <locale>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "migrasim/analytic.hpp"
#include "migrasim/conservation.hpp"
#include "migrasim/couplings.hpp"
#include "migrasim/fixed_point.hpp"
#include "migrasim/network.hpp"
#include "migrasim/parallel.hpp"
#include "migrasim/reactor.hpp"

namespace migrasim {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::string> kCommands = {"simulate", "cycles",    "gmap",  "pstar",
                                            "threshold", "analytic", "closed", "meanfield",
                                            "audit",    "couple",    "sweep"};

// Keys a manifest carries besides the flags themselves.
bool reserved_key(const std::string& k) {
  return k == "command" || k == "version" || k == "resolved";
}

// Options of one subcommand, remembered so the manifest can list every
// resolved value under its flag name.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& name, T& ref, const std::string& help) {
    getters_.emplace_back(name, [&ref] { return to_json(ref); });
    return app_->add_option("--" + name, ref, help);
  }

  CLI::Option* flag(const std::string& name, bool& ref, const std::string& help) {
    getters_.emplace_back(name, [&ref] { return json(ref); });
    return app_->add_flag("--" + name, ref, help);
  }

  json resolved() const {
    json j = json::object();
    for (const auto& [name, get] : getters_) j[name] = get();
    return j;
  }

 private:
  template <class T>
  static json to_json(const T& v) {
    return json(v);
  }
  template <class T>
  static json to_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
  }

  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<json()>>> getters_;
};

struct ParamFlags {
  std::optional<double> lambda, eta, nu;
  double mu = 1.0, alpha = 1.0, beta = 1.0, p = 0.0;
};

struct Common {
  ParamFlags par;
  std::string variant = "sis";
  std::uint64_t seed = 1;
  std::string out, manifest;
};

void add_common(Flags& f, Common& c, const std::vector<std::string>& variants) {
  f.option("variant", c.variant, "model variant")->check(CLI::IsMember(variants));
  f.option("lambda", c.par.lambda, "arrival rate (default eta * mu)");
  f.option("eta", c.par.eta, "density lambda / mu");
  f.option("mu", c.par.mu, "migration rate");
  f.option("alpha", c.par.alpha, "per-pair infection rate");
  f.option("beta", c.par.beta, "recovery rate");
  f.option("nu", c.par.nu, "DOCS infected departure rate (default mu + beta)");
  f.option("p", c.par.p, "infected input fraction");
  f.option("seed", c.seed, "random seed");
  f.option("out", c.out, "output path (default: stdout)");
  f.option("manifest", c.manifest, "manifest path (default: next to --out)");
}

ModelParams resolve(const ParamFlags& f) {
  double lambda = f.mu;
  if (f.lambda && f.eta) {
    if (std::abs(*f.lambda - *f.eta * f.mu) > 1e-12 * std::max(1.0, *f.lambda)) {
      throw ValidationError("--lambda and --eta disagree (eta = lambda / mu)");
    }
    lambda = *f.lambda;
  } else if (f.lambda) {
    lambda = *f.lambda;
  } else if (f.eta) {
    lambda = *f.eta * f.mu;
  }
  return derive_params(lambda, f.mu, f.alpha, f.beta, f.p, f.nu);
}

std::uint64_t to_count(const char* name, double v) {
  if (!(v >= 1.0) || !std::isfinite(v) || v > 1e18) {
    throw ValidationError(std::string("--") + name + " must be a positive count");
  }
  return static_cast<std::uint64_t>(std::llround(v));
}

json to_json(const Estimate& e) {
  json j;
  j["value"] = e.value;
  j["se"] = e.std_error;
  j["n"] = e.n;
  j["lower"] = e.lower();
  j["upper"] = e.upper();
  return j;
}

json to_json(const ModelParams& m) {
  return json{{"lambda", m.lambda}, {"mu", m.mu}, {"alpha", m.alpha}, {"beta", m.beta},
              {"nu", m.nu},         {"p", m.p},   {"q", m.q},         {"eta", m.eta}};
}

// Output target: a file when a path is given, else the caller's stream.
// Numbers are written with round-trip precision and no locale.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw ValidationError("cannot open " + path + " for writing");
      os_ = &file_;
    }
    os_->imbue(std::locale::classic());
    os_->precision(std::numeric_limits<double>::max_digits10);
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

void write_json(const std::string& path, std::ostream& fallback, const json& j) {
  Output o(path, fallback);
  *o << j.dump(2) << '\n';
}

// RFC-4180 numeric field: empty for NaN.
std::string field(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

void write_csv(const std::string& path, std::ostream& fallback,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  Output o(path, fallback);
  for (std::size_t i = 0; i < header.size(); ++i) *o << (i ? "," : "") << header[i];
  *o << "\r\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) *o << (i ? "," : "") << field(r[i]);
    *o << "\r\n";
  }
}

fs::path sibling(const std::string& out, const std::string& name) {
  return out.empty() ? fs::path(name) : fs::path(out).parent_path() / name;
}

void write_manifest(const std::string& command, const Common& c, const Flags& f,
                    const std::optional<ModelParams>& params) {
  json j = f.resolved();
  j["command"] = command;
  j["version"] = kVersion;
  if (params) j["resolved"] = to_json(*params);
  const fs::path path = c.manifest.empty() ? sibling(c.out, "manifest.json") : fs::path(c.manifest);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write manifest " + path.string());
  os << j.dump(2) << '\n';
}

ReactorKind reactor_kind(const std::string& variant, const ModelParams& m,
                         const std::optional<double>& y) {
  switch (parse_variant(variant)) {
    case ReactorVariant::sis: return ReactorKind::sis();
    case ReactorVariant::docs: return ReactorKind::docs();
    case ReactorVariant::air: return ReactorKind::air(y ? *y : air_amf_means(m).mean_y);
  }
  throw ValidationError("unknown variant " + variant);
}

// --- subcommands ------------------------------------------------------------

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Flags> flags;
  std::function<void()> run;
};

struct SimulateCmd : Common {
  double events = 1e6;
  std::optional<double> horizon, y;
  double batches = 64;
  std::string log;
};

void run_simulate(const SimulateCmd& c, std::ostream& out) {
  const auto m = resolve(c.par);
  const auto kind = reactor_kind(c.variant, m, c.y);
  SimulationOptions opt;
  opt.batches = to_count("batches", c.batches);
  opt.horizon = c.horizon ? *c.horizon : horizon_for_events(kind, m, c.events);
  std::ofstream log;
  EventSink sink;
  if (!c.log.empty()) {
    log.open(c.log, std::ios::binary);
    if (!log) throw ValidationError("cannot open " + c.log);
    log.imbue(std::locale::classic());
    log.precision(std::numeric_limits<double>::max_digits10);
    write_event_csv_header(log);
    sink = [&log](const EventRecord& e) { write_event_csv_row(log, e); };
  }
  const auto r = simulate_reactor(kind, m, opt, {c.seed, 0}, sink);
  json j;
  j["variant"] = c.variant;
  j["params"] = to_json(m);
  j["horizon"] = opt.horizon;
  j["events"] = r.events;
  j["observed_time"] = r.observed_time();
  j["mean_x"] = to_json(r.moment(1, 0));
  j["mean_y"] = to_json(r.moment(0, 1));
  j["var_x"] = to_json(r.functional([](const MomentTable& t) { return t(2, 0) - t(1, 0) * t(1, 0); }));
  j["var_y"] = to_json(r.functional([](const MomentTable& t) { return t(0, 2) - t(0, 1) * t(0, 1); }));
  j["cov_xy"] = to_json(r.functional([](const MomentTable& t) { return t(1, 1) - t(1, 0) * t(0, 1); }));
  j["mean_total"] = to_json(r.functional([](const MomentTable& t) { return t(1, 0) + t(0, 1); }));
  j["var_total"] = to_json(r.functional([](const MomentTable& t) {
    const double n = t(1, 0) + t(0, 1);
    return t(2, 0) + 2 * t(1, 1) + t(0, 2) - n * n;
  }));
  j["final_state"] = {{"x", r.final_state.x}, {"y", r.final_state.y}};
  write_json(c.out, out, j);
}

struct CyclesCmd : Common {
  double cycles = 1e5;
  std::optional<double> y;
};

void run_cycles(const CyclesCmd& c, std::ostream& out) {
  const auto m = resolve(c.par);
  const auto stats =
      run_busy_cycles(reactor_kind(c.variant, m, c.y), m, to_count("cycles", c.cycles), {c.seed, 0});
  std::vector<std::vector<double>> rows;
  rows.reserve(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    rows.push_back({static_cast<double>(i), s.duration, static_cast<double>(s.departures),
                    static_cast<double>(s.infected_departures), s.idle_before, s.infected_area});
  }
  write_csv(c.out, out,
            {"cycle", "duration", "departures", "infected_departures", "idle_before", "infected_area"},
            rows);
}

struct GMapCmd : Common {
  std::string grid = "0:1:lin11";
  double cycles = 1e5;
};

void run_gmap(const GMapCmd& c, std::ostream& out) {
  const auto m = resolve(c.par);
  const auto grid = parse_grid(c.grid);
  if (grid.front() < 0.0 || grid.back() > 1.0) throw ValidationError("--grid must lie in [0, 1]");
  const auto n = to_count("cycles", c.cycles);
  const auto variant = parse_variant(c.variant);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const RngSeed s = RngSeed{c.seed, 0}.substream(i);
    const auto g = variant == ReactorVariant::air
                       ? estimate_g_air_amf(grid[i], m, n, s)
                       : estimate_g(grid[i], m, n, s, reactor_kind(c.variant, m, std::nullopt));
    rows.push_back({grid[i], g.p_out.value, g.p_out.std_error, g.time_average.value,
                    g.time_average.std_error});
  }
  write_csv(c.out, out, {"p", "g", "g_se", "time_average", "time_average_se"}, rows);
}

struct PStarCmd : Common {
  double cycles = 1e5;
  double tol = 1e-3;
  int max_iterations = 60;
};

void run_pstar(const PStarCmd& c, std::ostream& out) {
  const auto m = resolve(c.par);
  json j;
  j["variant"] = c.variant;
  j["eta"] = m.eta;
  if (c.variant == "docs") {
    const auto fp = docs_tl_fixed_point(m);
    j["p_star"] = fp.p_star;
    j["residual"] = fp.residual;
    j["supercritical"] = fp.supercritical;
    j["warnings"] = fp.warnings;
    write_json(c.out, out, j);
    return;
  }
  PStarOptions o;
  o.tol = c.tol;
  o.n_cycles = to_count("cycles", c.cycles);
  if (c.max_iterations < 1) throw ValidationError("--max-iterations must be >= 1");
  o.max_iterations = c.max_iterations;
  const auto r = c.variant == "air" ? find_p_star_air(m, o, {c.seed, 0}) : find_p_star(m, o, {c.seed, 0});
  j["p_star"] = to_json(r.p_star);
  j["iterations"] = r.iterations;
  j["slope"] = r.slope;
  j["converged"] = r.converged;
  j["subcritical"] = r.subcritical;
  j["indeterminate"] = r.indeterminate;
  if (c.variant == "air") {
    j["analytic_p_star"] = air_tl_stationary(m).p_star;
  } else {
    j["upper_bound"] = p_star_upper_bound(m);
  }
  write_json(c.out, out, j);
  if (r.indeterminate) throw NumericalError("fixed-point iteration did not settle");
}

struct ThresholdCmd : Common {
  double budget = 1e6;
  double precision = 0.01;
};

void run_threshold(const ThresholdCmd& c, std::ostream& out) {
  const auto& f = c.par;
  json j;
  j["variant"] = c.variant;
  Estimate eta_c;
  if (c.variant == "docs") {
    eta_c = Estimate::exact(docs_tl_threshold(f.mu, f.alpha, f.beta));
  } else if (c.variant == "air") {
    eta_c = Estimate::exact(air_threshold(f.alpha, f.beta));
  } else {
    EtaSearchOptions o;
    o.per_point_budget = to_count("budget", c.budget);
    o.precision = c.precision;
    const auto r = find_eta_c(resolve(f), o, {c.seed, 0});
    eta_c = r.eta_c;
    j["bracket"] = {r.eta_low, r.eta_high};
    j["iterations"] = r.iterations;
    const auto b = sis_threshold_bounds(f.mu, f.alpha, f.beta);
    j["bounds"] = {{"lower", b.lower}, {"upper", b.upper}, {"kappa", b.kappa}};
  }
  j["eta_c"] = to_json(eta_c);
  out.imbue(std::locale::classic());
  out.precision(std::numeric_limits<double>::max_digits10);
  out << eta_c.value << '\n';
  if (!c.out.empty()) write_json(c.out, out, j);
}

void run_analytic(const Common& c, std::ostream& out) {
  const auto m = resolve(c.par);
  const auto b = sis_threshold_bounds(m.mu, m.alpha, m.beta);
  const auto br = branching_quantities(m);
  const auto fp = docs_tl_fixed_point(m);
  const auto air = air_tl_stationary(m);
  json j;
  j["params"] = to_json(m);
  j["air_threshold"] = air_threshold(m.alpha, m.beta);
  j["docs_threshold"] = docs_tl_threshold(m.mu, m.alpha, m.beta);
  j["sis_bounds"] = {{"lower", b.lower}, {"upper", b.upper}, {"kappa", b.kappa}};
  j["branching"] = {{"n", br.n}, {"m", br.m}, {"n_supercritical", br.n_supercritical},
                    {"m_supercritical", br.m_supercritical}};
  j["p_star_upper_bound"] = p_star_upper_bound(m);
  j["docs_mean_x"] = docs_mean_x(m);
  j["docs_tl_rhs"] = docs_tl_rhs(m.p, m);
  j["docs_tl_rhs_slope0"] = docs_tl_rhs_slope0(m);
  j["docs_p_star"] = fp.p_star;
  j["air_tl"] = {{"mean_x", air.mean_x}, {"mean_y", air.mean_y}, {"p_star", air.p_star},
                 {"survival", air.survival}};
  write_json(c.out, out, j);
}

struct ClosedCmd : Common {
  double stations = 10;
  std::optional<double> customers, infected;
  double horizon = 1000;
  double record_interval = 0;
  double reps = 0;
  double cap = 1e5;
  std::string routing = "default";
};

NetworkOptions network_options(const std::string& routing) {
  NetworkOptions o;
  if (routing == "self") o.self_routing = true;
  if (routing == "other") o.self_routing = false;
  return o;
}

void run_closed(const ClosedCmd& c, std::ostream& out) {
  const auto m = resolve(c.par);
  const auto n = to_count("stations", c.stations);
  const auto k = c.customers ? to_count("customers", *c.customers) : customers_for_density(m.eta, n);
  const auto variant = parse_variant(c.variant);
  auto opt = network_options(c.routing);
  if (c.reps > 0) {
    const auto r = extinction_time(variant, n, k, m, to_count("reps", c.reps), c.cap, {c.seed, 0}, opt);
    std::vector<std::vector<double>> rows;
    for (const auto& rep : r.reps) {
      rows.push_back({static_cast<double>(rep.rep), rep.absorption_time, rep.censored ? 1.0 : 0.0});
    }
    write_csv(c.out, out, {"rep", "absorption_time", "censored"}, rows);
    return;
  }
  opt.record_interval = c.record_interval > 0 ? c.record_interval : c.horizon / 1000.0;
  std::optional<std::uint64_t> infected;
  if (c.infected) infected = static_cast<std::uint64_t>(std::llround(*c.infected));
  const auto r = simulate_closed(variant, n, k, m, c.horizon, {c.seed, 0}, opt, infected);
  Output o(c.out, out);
  write_trajectory_csv(*o, r.trajectory);
}

struct MeanFieldCmd : Common {
  double replicas = 1000;
  double h = 0;
  double p0 = 0.5;
  double horizon = 100;
  double record_interval = 0;
  std::string arrivals = "redistribute";
  bool init_from_reactor = false;
  bool routing_docs = false;
  bool closed_tl = false;
};

void run_meanfield(const MeanFieldCmd& c, std::ostream& out, std::ostream& err) {
  const auto m = resolve(c.par);
  const auto replicas = to_count("replicas", c.replicas);
  if (c.routing_docs) {
    RoutingDocsOptions o;
    o.closed_tl = c.closed_tl;
    const auto r = simulate_routing_docs_meanfield(replicas, m, c.horizon, {c.seed, 0}, o);
    json j;
    j["p_star"] = to_json(r.p_star);
    j["analytic_p_star"] = docs_tl_fixed_point(m).p_star;
    j["mean_x"] = to_json(r.moments.x);
    j["mean_y"] = to_json(r.moments.y);
    j["closed_tl"] = r.closed_tl;
    write_json(c.out, out, j);
    return;
  }
  MeanFieldOptions o;
  o.arrivals = c.arrivals == "poisson" ? ArrivalMode::poisson : ArrivalMode::redistribute;
  o.record_interval = c.record_interval > 0 ? c.record_interval : c.horizon / 1000.0;
  o.init_from_reactor = c.init_from_reactor;
  const auto r = simulate_meanfield(replicas, c.h, m, c.p0, c.horizon, {c.seed, 0}, o);
  if (r.discretization_warning) err << "warning: slot length " << r.step << " is coarse for these rates\n";
  Output out_csv(c.out, out);
  write_trajectory_csv(*out_csv, r.trajectory);
}

struct AuditCmd : Common {
  double events = 1e6;
  std::optional<double> horizon;
  double cycles = 2e5;
  double replicas = 1000;
  double threshold = 3.0;
  bool closed_tl = false;
};

void run_audit(const AuditCmd& c, std::ostream& out) {
  const auto m = resolve(c.par);
  AuditOptions ao;
  ao.threshold = c.threshold;
  const RngSeed seed{c.seed, 0};
  std::vector<IdentityCheck> checks;
  if (c.variant == "routing-docs") {
    RoutingDocsOptions o;
    o.closed_tl = c.closed_tl;
    const auto r = simulate_routing_docs_meanfield(to_count("replicas", c.replicas), m,
                                                   c.horizon.value_or(400.0), seed, o);
    checks = audit_routing_docs(r, ao);
  } else {
    const auto kind = c.variant == "docs" ? ReactorKind::docs() : ReactorKind::sis();
    const double horizon = c.horizon ? *c.horizon : horizon_for_events(kind, m, c.events);
    if (c.variant == "sis") {
      checks = audit_sis(m, horizon, seed, ao);
    } else if (c.variant == "docs") {
      checks = audit_docs(m, horizon, seed, ao);
    } else {
      PStarOptions po;
      po.n_cycles = to_count("cycles", c.cycles);
      const auto ps = find_p_star(m, po, seed.substream(1));
      if (ps.indeterminate) throw NumericalError("fixed-point iteration did not settle");
      checks = audit_tl(m, ps.p_star, horizon, seed.substream(2), ao);
    }
  }
  Output o(c.out, out);
  write_audit_json(*o, checks);
}

struct CoupleCmd : Common {
  std::string kind = "p";
  double p_hat = 0.5;
  std::optional<double> alpha_hat, beta_hat;
  double r = 0.1;
  double cycles = 1e4;
  double events = 1e4;
  bool closed = false;
  double stations = 10;
  std::optional<double> customers;
  std::string trace, log;
};

json to_json(const CouplingSummary& s) {
  return json{{"construction", s.construction}, {"events", s.events},
              {"cycles", s.cycles},             {"checks", s.checks},
              {"violations", s.violations},     {"strict", s.strict},
              {"strict_frequency", s.strict_frequency},
              {"identical_paths", s.identical_paths},
              {"low", to_json(s.low)},          {"high", to_json(s.high)}};
}

void run_couple(const CoupleCmd& c, std::ostream& out) {
  const auto m = resolve(c.par);
  const RngSeed seed{c.seed, 0};
  std::ofstream log;
  CoupledEventSink sink;
  const std::size_t systems = c.kind == "three-color" ? 6 : 2;
  if (!c.log.empty()) {
    log.open(c.log, std::ios::binary);
    if (!log) throw ValidationError("cannot open " + c.log);
    log.imbue(std::locale::classic());
    log.precision(std::numeric_limits<double>::max_digits10);
    write_coupled_csv_header(log, systems);
    sink = [&log](const CoupledEvent& e) { write_coupled_csv_row(log, e); };
  }
  CoupledRunOptions ro;
  ro.events = to_count("events", c.events);
  ro.closed = c.closed;
  ro.stations = to_count("stations", c.stations);
  if (c.customers) ro.customers = to_count("customers", *c.customers);
  ro.sink = sink;
  CoupledCycleOptions co;
  co.sink = sink;
  const double alpha_hat = c.alpha_hat.value_or(m.alpha);
  const double beta_hat = c.beta_hat.value_or(m.beta);
  json j;
  try {
    if (c.kind == "p") {
      j = to_json(coupled_p_monotonicity(m.p, c.p_hat, m, to_count("cycles", c.cycles), seed, co));
    } else if (c.kind == "alpha") {
      j = to_json(coupled_alpha_monotonicity(m.alpha, alpha_hat, m, seed, ro));
    } else if (c.kind == "beta") {
      j = to_json(coupled_beta_monotonicity(m.beta, beta_hat, m, seed, ro));
    } else if (c.kind == "pair") {
      j = to_json(coupled_pair_run(CoupledSystemSpec::sis(m.alpha, m.beta, m.p),
                                   CoupledSystemSpec::sis(alpha_hat, beta_hat, c.p_hat), m, seed, ro));
    } else {
      const auto s = three_color_run(m.p, c.p_hat, c.r, m, to_count("cycles", c.cycles), seed, co);
      j = json{{"construction", "three_color"},  {"events", s.events},
               {"cycles", s.cycles},             {"merge_checks", s.merge_checks},
               {"nesting_checks", s.nesting_checks}, {"violations", 0},
               {"strict_cycles", s.strict_cycles}, {"two_customer_cycles", s.two_customer_cycles},
               {"g_p", to_json(s.g_p)},          {"g_p_r", to_json(s.g_p_r)},
               {"g_phat", to_json(s.g_phat)},    {"g_phat_r", to_json(s.g_phat_r)},
               {"concavity_gap", to_json(s.concavity_gap)}};
    }
  } catch (const CouplingViolation& e) {
    const std::string what = e.what();
    const std::string marker = "recent events:\n";
    const auto pos = what.find(marker);
    const fs::path path = c.trace.empty() ? sibling(c.out, "coupling_violation.csv") : fs::path(c.trace);
    std::ofstream os(path, std::ios::binary);
    if (os) os << (pos == std::string::npos ? std::string() : what.substr(pos + marker.size()));
    throw;
  }
  write_json(c.out, out, j);
}

struct SweepCmd : Common {
  std::string sweep, grid;
  std::string quantity = "eta_c";
  double budget = 1e6;
  double precision = 0.01;
  std::string method = "excursion";
};

void run_sweep(const SweepCmd& c, std::ostream& out) {
  const auto grid = parse_grid(c.grid);
  const auto budget = to_count("budget", c.budget);
  if (c.quantity == "eta_c" && (c.sweep == "eta" || c.sweep == "p")) {
    throw ValidationError("eta_c sweeps take alpha, beta or mu as the swept parameter");
  }
  const auto method = parse_derivative_method(c.method);
  auto point_params = [&](double v) {
    ParamFlags f = c.par;
    if (c.sweep == "alpha") f.alpha = v;
    if (c.sweep == "beta") f.beta = v;
    if (c.sweep == "mu") f.mu = v;
    if (c.sweep == "p") f.p = v;
    if (c.sweep == "eta") {
      f.eta = v;
      f.lambda.reset();
    }
    return resolve(f);
  };
  for (double v : grid) point_params(v);  // validate every point before any work

  std::vector<std::vector<double>> rows;
  std::vector<std::string> header;
  if (c.quantity == "gprime0") {
    header = {c.sweep, "gprime0", "gprime0_se"};
    rows = parallel_map(grid.size(), [&](std::size_t i) {
      const auto g = estimate_g_prime0(point_params(grid[i]), method, budget,
                                       RngSeed{c.seed, 0}.substream(i));
      return std::vector<double>{grid[i], g.value, g.std_error};
    });
  } else {
    header = {c.sweep, "eta_c_sis", "eta_c_sis_se", "eta_c_docs", "eta_c_air"};
    rows = parallel_map(grid.size(), [&](std::size_t i) {
      const auto m = point_params(grid[i]);
      double sis = kNaN, se = kNaN;
      if (c.variant == "sis") {
        EtaSearchOptions o;
        o.per_point_budget = budget;
        o.precision = c.precision;
        const auto r = find_eta_c(m, o, RngSeed{c.seed, 0}.substream(i));
        sis = r.eta_c.value;
        se = r.eta_c.std_error;
      }
      return std::vector<double>{grid[i], sis, se, docs_tl_threshold(m.mu, m.alpha, m.beta),
                                 air_threshold(m.alpha, m.beta)};
    });
  }
  write_csv(c.out, out, header, rows);
}

// --- config handling ----------------------------------------------------------

// Expands --config FILE into flags placed before the command-line flags, so
// explicit flags win (every option keeps its last value).
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ValidationError("--config needs a file");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!path) return args;
  std::ifstream is(*path);
  if (!is) throw ValidationError("cannot read config " + *path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("config " + *path + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");

  const bool has_command = !args.empty() && std::find(kCommands.begin(), kCommands.end(), args[0]) != kCommands.end();
  std::string command;
  if (has_command) {
    command = args[0];
    args.erase(args.begin());
  } else if (j.contains("command") && j["command"].is_string()) {
    command = j["command"].get<std::string>();
  } else {
    throw ValidationError("no subcommand given on the command line or in the config");
  }
  std::vector<std::string> expanded{command};
  for (const auto& [key, value] : j.items()) {
    if (reserved_key(key) || value.is_null()) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
      // Empty means "use the default"; "--key=" would swallow the next flag.
      if (text.empty()) continue;
    } else if (value.is_boolean() || value.is_number()) {
      text = value.dump();
    } else {
      throw ValidationError("config key " + key + " must be a string, number or boolean");
    }
    expanded.push_back("--" + key + "=" + text);
  }
  expanded.insert(expanded.end(), args.begin(), args.end());
  return expanded;
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) throw ValidationError("bad grid value '" + s + "'");
    return v;
  };
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() == 3) {
    const double lo = number(parts[0]), hi = number(parts[1]);
    const std::string& spec = parts[2];
    const bool log = spec.rfind("log", 0) == 0;
    if (!log && spec.rfind("lin", 0) != 0) throw ValidationError("grid spacing must be linN or logN");
    const double count = number(spec.substr(3));
    if (count < 1 || count != std::floor(count)) throw ValidationError("grid needs a positive point count");
    const auto n = static_cast<std::size_t>(count);
    if (log && !(lo > 0.0)) throw ValidationError("log grids need lo > 0");
    if (n == 1) {
      if (lo != hi) throw ValidationError("a one-point grid needs lo == hi");
      out.push_back(lo);
    }
    for (std::size_t i = 0; n > 1 && i < n; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(n - 1);
      const double v = log ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
      // Interior points keep 12 significant digits so 0.25:8:log6 gives 2, not 1.9999999999999998.
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", v);
      out.push_back(i == 0 ? lo : i + 1 == n ? hi : std::strtod(buf, nullptr));
    }
  } else if (parts.size() == 1) {
    std::stringstream list(text);
    for (std::string v; std::getline(list, v, ',');) out.push_back(number(v));
  } else {
    throw ValidationError("grid must be lo:hi:linN, lo:hi:logN or a comma list");
  }
  if (out.empty()) throw ValidationError("empty grid");
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (!(out[i] > out[i - 1])) throw ValidationError("grid must be strictly increasing");
  }
  return out;
}

int cli_main(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"migrasim: simulation and analysis of migration-contagion processes", "migrasim"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.add_option("--config")->description("JSON file with the same keys as the flags (flags override it)");

  std::map<std::string, Command> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    auto& c = commands[name];
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config")->description("JSON file with the same keys as the flags (flags override it)");
    c.flags = std::make_unique<Flags>(c.app);
    return c;
  };
  const std::vector<std::string> reactor_variants = {"sis", "docs", "air"};

  SimulateCmd sim;
  {
    auto& c = add("simulate", "long-run reactor simulation with batch-means moments");
    add_common(*c.flags, sim, reactor_variants);
    c.flags->option("events", sim.events, "approximate event budget");
    c.flags->option("horizon", sim.horizon, "simulated time (overrides --events)");
    c.flags->option("y", sim.y, "AIR infection parameter (default: self-consistent mean)");
    c.flags->option("batches", sim.batches, "number of batches");
    c.flags->option("log", sim.log, "event log CSV");
    c.run = [&] { run_simulate(sim, out); };
  }
  CyclesCmd cyc;
  {
    auto& c = add("cycles", "independent busy cycles as CSV");
    add_common(*c.flags, cyc, reactor_variants);
    c.flags->option("cycles", cyc.cycles, "number of busy cycles");
    c.flags->option("y", cyc.y, "AIR infection parameter");
    c.run = [&] { run_cycles(cyc, out); };
  }
  GMapCmd gm;
  {
    auto& c = add("gmap", "output infected fraction g(p) over a grid of input fractions");
    add_common(*c.flags, gm, reactor_variants);
    c.flags->option("grid", gm.grid, "grid of p values");
    c.flags->option("cycles", gm.cycles, "busy cycles per point");
    c.run = [&] { run_gmap(gm, out); };
  }
  PStarCmd ps;
  {
    auto& c = add("pstar", "thermodynamic-limit fixed point p*");
    add_common(*c.flags, ps, reactor_variants);
    c.flags->option("cycles", ps.cycles, "busy cycles per iteration");
    c.flags->option("tol", ps.tol, "iteration tolerance");
    c.flags->option("max-iterations", ps.max_iterations, "iteration cap");
    c.run = [&] { run_pstar(ps, out); };
  }
  ThresholdCmd th;
  {
    auto& c = add("threshold", "critical density eta_c");
    add_common(*c.flags, th, reactor_variants);
    c.flags->option("budget", th.budget, "excursions per density (SIS)");
    c.flags->option("precision", th.precision, "target bracket width (SIS)");
    c.run = [&] { run_threshold(th, out); };
  }
  Common an;
  {
    auto& c = add("analytic", "closed-form quantities at one parameter point");
    add_common(*c.flags, an, reactor_variants);
    c.run = [&] { run_analytic(an, out); };
  }
  ClosedCmd cl;
  {
    auto& c = add("closed", "closed network trajectory or extinction times");
    add_common(*c.flags, cl, reactor_variants);
    c.flags->option("stations", cl.stations, "number of stations N");
    c.flags->option("customers", cl.customers, "customers K (default round(eta N))");
    c.flags->option("infected", cl.infected, "initially infected (default all)");
    c.flags->option("horizon", cl.horizon, "simulated time");
    c.flags->option("record-interval", cl.record_interval, "trajectory spacing");
    c.flags->option("reps", cl.reps, "extinction replications (0: trajectory mode)");
    c.flags->option("cap", cl.cap, "extinction time cap");
    c.flags->option("routing", cl.routing, "migration targets")
        ->check(CLI::IsMember({"default", "self", "other"}));
    c.run = [&] { run_closed(cl, out); };
  }
  MeanFieldCmd mf;
  {
    auto& c = add("meanfield", "slotted mean-field scheme or routing DOCS ensemble");
    add_common(*c.flags, mf, reactor_variants);
    c.flags->option("replicas", mf.replicas, "independent stations");
    c.flags->option("step", mf.h, "slot length h (0: automatic)");
    c.flags->option("p0", mf.p0, "initial infected fraction");
    c.flags->option("horizon", mf.horizon, "simulated time");
    c.flags->option("record-interval", mf.record_interval, "trajectory spacing");
    c.flags->option("arrivals", mf.arrivals, "slot arrival rule")
        ->check(CLI::IsMember({"redistribute", "poisson"}));
    c.flags->flag("init-from-reactor", mf.init_from_reactor, "start from reactor snapshots");
    c.flags->flag("routing-docs", mf.routing_docs, "run the routing DOCS ensemble instead");
    c.flags->flag("closed-tl", mf.closed_tl, "routing DOCS as a closed network");
    c.run = [&] { run_meanfield(mf, out, err); };
  }
  AuditCmd au;
  {
    auto& c = add("audit", "stationary identity audit as JSON");
    add_common(*c.flags, au, {"sis", "docs", "tl", "routing-docs"});
    c.flags->option("events", au.events, "approximate event budget");
    c.flags->option("horizon", au.horizon, "simulated time (overrides --events)");
    c.flags->option("cycles", au.cycles, "busy cycles per p* iteration (tl)");
    c.flags->option("replicas", au.replicas, "stations (routing-docs)");
    c.flags->option("threshold", au.threshold, "pass when |residual| < threshold * SE");
    c.flags->flag("closed-tl", au.closed_tl, "routing DOCS as a closed network");
    c.run = [&] { run_audit(au, out); };
  }
  CoupleCmd cp;
  {
    auto& c = add("couple", "pathwise coupling checks");
    add_common(*c.flags, cp, reactor_variants);
    c.flags->option("kind", cp.kind, "coupling construction")
        ->check(CLI::IsMember({"p", "alpha", "beta", "three-color", "pair"}));
    c.flags->option("p-hat", cp.p_hat, "input fraction of the second system");
    c.flags->option("alpha-hat", cp.alpha_hat, "infection rate of the second system");
    c.flags->option("beta-hat", cp.beta_hat, "recovery rate of the second system");
    c.flags->option("r", cp.r, "magenta fraction (three-color)");
    c.flags->option("cycles", cp.cycles, "busy cycles (p, three-color)");
    c.flags->option("events", cp.events, "events (alpha, beta, pair)");
    c.flags->flag("closed", cp.closed, "closed network of --stations stations");
    c.flags->option("stations", cp.stations, "stations in the closed network");
    c.flags->option("customers", cp.customers, "customers in the closed network");
    c.flags->option("trace", cp.trace, "violation trace CSV");
    c.flags->option("log", cp.log, "full coupled event CSV");
    c.run = [&] { run_couple(cp, out); };
  }
  SweepCmd sw;
  {
    auto& c = add("sweep", "parameter sweep for threshold or derivative curves");
    add_common(*c.flags, sw, reactor_variants);
    c.flags->option("sweep", sw.sweep, "swept parameter")
        ->required()
        ->check(CLI::IsMember({"alpha", "beta", "mu", "eta", "p"}));
    c.flags->option("grid", sw.grid, "lo:hi:linN, lo:hi:logN or a comma list")->required();
    c.flags->option("quantity", sw.quantity, "eta_c or gprime0")
        ->check(CLI::IsMember({"eta_c", "gprime0"}));
    c.flags->option("budget", sw.budget, "per-point budget");
    c.flags->option("precision", sw.precision, "eta_c bracket width");
    c.flags->option("method", sw.method, "g'(0) estimator")
        ->check(CLI::IsMember({"excursion", "finite_difference", "both"}));
    c.run = [&] { run_sweep(sw, out); };
  }
  const std::map<std::string, Common*> common_of = {
      {"simulate", &sim}, {"cycles", &cyc}, {"gmap", &gm},     {"pstar", &ps},
      {"threshold", &th}, {"analytic", &an}, {"closed", &cl},  {"meanfield", &mf},
      {"audit", &au},     {"couple", &cp},  {"sweep", &sw}};

  try {
    auto args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    const auto parsed = app.get_subcommands();
    out << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto parsed = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  auto& cmd = commands.at(name);
  try {
    const Common& c = *common_of.at(name);
    std::optional<ModelParams> resolved;
    try {
      resolved = resolve(c.par);
    } catch (const ValidationError&) {
      // Commands that ignore lambda (thresholds) may still be valid.
      if (name != "threshold") throw;
    }
    write_manifest(name, c, *cmd.flags, resolved);
    cmd.run();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const CouplingViolation& e) {
    err << e.what() << '\n';
    return kExitCoupling;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace migrasim
