#include "migrasim/conservation.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "json.hpp"

#include "migrasim/analytic.hpp"

namespace migrasim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Bivariate polynomial in (X, Y) with small degree, for the monomial balance.
class Poly {
 public:
  static constexpr int kDeg = 9;

  Poly() { c_.fill({}); }
  static Poly constant(double v) {
    Poly p;
    p.c_[0][0] = v;
    return p;
  }
  static Poly monomial(int a, int b, double v = 1.0) {
    Poly p;
    p.c_[a][b] = v;
    return p;
  }
  static Poly x_plus(double s) { return monomial(1, 0) + constant(s); }
  static Poly y_plus(double s) { return monomial(0, 1) + constant(s); }

  Poly operator+(const Poly& o) const {
    Poly r = *this;
    for (int a = 0; a < kDeg; ++a)
      for (int b = 0; b < kDeg; ++b) r.c_[a][b] += o.c_[a][b];
    return r;
  }
  Poly operator-(const Poly& o) const { return *this + o * -1.0; }
  Poly operator*(double s) const {
    Poly r = *this;
    for (auto& row : r.c_)
      for (auto& v : row) v *= s;
    return r;
  }
  Poly operator*(const Poly& o) const {
    Poly r;
    for (int a = 0; a < kDeg; ++a)
      for (int b = 0; b < kDeg; ++b) {
        if (c_[a][b] == 0.0) continue;
        for (int i = 0; i + a < kDeg; ++i)
          for (int j = 0; j + b < kDeg; ++j) r.c_[a + i][b + j] += c_[a][b] * o.c_[i][j];
      }
    return r;
  }
  Poly pow(int n) const {
    Poly r = constant(1.0);
    for (int i = 0; i < n; ++i) r = r * *this;
    return r;
  }

  double expect(const MomentTable& m) const {
    double s = 0.0;
    for (int a = 0; a < kDeg; ++a)
      for (int b = 0; b < kDeg; ++b) {
        if (c_[a][b] == 0.0) continue;
        if (a >= kMomentOrder || b >= kMomentOrder) {
          throw ValidationError("monomial balance needs moments beyond the table order");
        }
        s += c_[a][b] * m(a, b);
      }
    return s;
  }

 private:
  std::array<std::array<double, kDeg>, kDeg> c_;
};

double var(const AuditView& v, int a, int b) {
  const double m1 = v.mean(a, b);
  return v.mean(2 * a, 2 * b) - m1 * m1;
}

AuditView view_of(const BatchRecord& b) {
  AuditView v;
  MomentArray m = b.moment_integrals;
  for (auto& x : m) x /= b.duration;
  v.m = MomentTable(m);
  v.events = b.events;
  v.duration = b.duration;
  v.has_events = true;
  return v;
}

AuditView pooled_view(const SimulationResult& run) {
  AuditView v;
  v.m = run.moments();
  for (std::size_t k = 0; k < kEventKinds; ++k) v.events[k] = run.tally(static_cast<EventKind>(k));
  v.duration = run.observed_time();
  v.has_events = true;
  return v;
}

// Batch spread of f with the point value taken from the pooled view.
Estimate batch_estimate(const std::vector<AuditView>& batches, const AuditView& pooled,
                        const AuditFn& f, double ci_level) {
  std::vector<double> vals;
  vals.reserve(batches.size());
  for (const auto& b : batches) {
    const double x = f(b);
    if (std::isfinite(x)) vals.push_back(x);
  }
  const double point = f(pooled);
  if (!std::isfinite(point) || vals.size() < 2) return Estimate::undefined(ci_level);
  Estimate e = mean_estimate(vals, ci_level);
  e.value = point;
  return e;
}

IdentityCheck judge(std::string name, Estimate lhs, Estimate rhs, Estimate residual,
                    const AuditOptions& o) {
  IdentityCheck c{std::move(name), lhs, rhs, residual, false, false};
  if (!residual.defined) {
    // Nothing happened that the identity could be evaluated on (no events of
    // the kind it conditions on): it holds vacuously.
    c.pass = true;
    c.low_confidence = true;
    return c;
  }
  const double r = std::abs(residual.value);
  c.pass = residual.std_error > 0.0 ? r < o.threshold * residual.std_error : r <= o.exact_tol;
  return c;
}

std::vector<IdentityCheck> evaluate_views(const std::vector<IdentitySpec>& specs,
                                          const std::vector<AuditView>& batches,
                                          const AuditView& pooled, const AuditOptions& o,
                                          double ci_level, bool low_confidence) {
  std::vector<IdentityCheck> out;
  for (const auto& s : specs) {
    const AuditFn res = [&s](const AuditView& v) { return s.lhs(v) - s.rhs(v); };
    auto c = judge(s.name, batch_estimate(batches, pooled, s.lhs, ci_level),
                   batch_estimate(batches, pooled, s.rhs, ci_level),
                   batch_estimate(batches, pooled, res, ci_level), o);
    c.low_confidence = c.low_confidence || low_confidence;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<AuditView> batch_views(const SimulationResult& run) {
  std::vector<AuditView> v;
  for (const auto& b : run.batches) v.push_back(view_of(b));
  return v;
}

AuditView view_of_station(const std::array<double, 7>& s) {
  AuditView v;
  v.m.at(1, 0) = s[0];
  v.m.at(0, 1) = s[1];
  v.m.at(2, 0) = s[2];
  v.m.at(1, 1) = s[3];
  v.m.at(0, 2) = s[4];
  v.m.at(2, 1) = s[5];
  v.m.at(1, 2) = s[6];
  v.m.at(0, 0) = 1.0;
  return v;
}

SimulationResult run_reactor(ReactorVariant variant, const ModelParams& params, double horizon,
                             RngSeed seed) {
  if (!(horizon > 0.0)) throw ValidationError("horizon must be > 0");
  SimulationOptions opt;
  opt.horizon = horizon;
  const ReactorKind kind = variant == ReactorVariant::docs ? ReactorKind::docs() : ReactorKind::sis();
  opt.docs_recovery_split = std::abs(params.nu - (params.mu + params.beta)) < 1e-12;
  return simulate_reactor(kind, params, opt, seed);
}

using K = EventKind;

}  // namespace

double AuditView::palm(EventKind k, double EventTally::*field) const {
  const auto& t = events[static_cast<std::size_t>(k)];
  return t.count > 0 ? t.*field / t.count : kNaN;
}

double AuditView::rate(EventKind k) const {
  return duration > 0.0 ? events[static_cast<std::size_t>(k)].count / duration : kNaN;
}

double sis_monomial_balance(int m, int n, const ModelParams& pr, const MomentTable& moments) {
  if (m < 0 || n < 0) throw ValidationError("monomial exponents must be >= 0");
  const Poly X = Poly::monomial(1, 0), Y = Poly::monomial(0, 1);
  const Poly Xm = X.pow(m), Yn = Y.pow(n), XmYn = Xm * Yn;
  const Poly total =
      Xm * (Poly::y_plus(1).pow(n) - Yn) * (pr.lambda * pr.p) +
      (Poly::x_plus(1).pow(m) - Xm) * Yn * (pr.lambda * pr.q) +
      Y * (Poly::x_plus(1).pow(m) * Poly::y_plus(-1).pow(n) - XmYn) * pr.beta +
      X * Y * (Poly::x_plus(-1).pow(m) * Poly::y_plus(1).pow(n) - XmYn) * pr.alpha +
      X * (Poly::x_plus(-1).pow(m) - Xm) * Yn * pr.mu +
      Y * Xm * (Poly::y_plus(-1).pow(n) - Yn) * pr.mu;
  return total.expect(moments);
}

std::vector<IdentitySpec> sis_identities(const ModelParams& pr) {
  const double l = pr.lambda, mu = pr.mu, a = pr.alpha, b = pr.beta, p = pr.p, q = pr.q;
  const double eta = l / mu;
  std::vector<IdentitySpec> s;
  s.push_back({"first_order_infected",
               [=](const AuditView& v) { return l * p + a * v.mean(1, 1); },
               [=](const AuditView& v) { return (mu + b) * v.mean(0, 1); }});
  s.push_back({"first_order_susceptible",
               [=](const AuditView& v) { return l * q + b * v.mean(0, 1); },
               [=](const AuditView& v) { return mu * v.mean(1, 0) + a * v.mean(1, 1); }});
  s.push_back({"second_order_y",
               [=](const AuditView& v) { return (l * p + mu + b) * v.mean(0, 1) + a * v.mean(1, 2); },
               [=](const AuditView& v) { return (mu + b) * v.mean(0, 2); }});
  s.push_back({"second_order_x",
               [=](const AuditView& v) {
                 return (l * q + mu) * v.mean(1, 0) + (a + b) * v.mean(1, 1);
               },
               [=](const AuditView& v) { return a * v.mean(2, 1) + mu * v.mean(2, 0); }});
  for (auto [m, n] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 2}}) {
    s.push_back({"monomial_x" + std::to_string(m) + "y" + std::to_string(n),
                 [=](const AuditView& v) { return sis_monomial_balance(m, n, pr, v.m); },
                 [](const AuditView&) { return 0.0; }});
  }
  s.push_back({"total_mean", [](const AuditView& v) { return v.mean(1, 0) + v.mean(0, 1); },
               [=](const AuditView&) { return eta; }});
  s.push_back({"total_variance",
               [](const AuditView& v) {
                 const double m1 = v.mean(1, 0) + v.mean(0, 1);
                 const double m2 = v.mean(2, 0) + 2 * v.mean(1, 1) + v.mean(0, 2);
                 return m2 - m1 * m1;
               },
               [=](const AuditView&) { return eta; }});
  // E[XY] eliminated with the first-order balance and the Poisson total.
  s.push_back({"eliminated_x2y",
               [=](const AuditView& v) {
                 return l * (q + b / mu) * (1 + b / a) +
                        (l * q - b / a * (mu + a + b)) * v.mean(1, 0) - mu * v.mean(2, 0);
               },
               [=](const AuditView& v) { return a * v.mean(2, 1); }});
  s.push_back({"eliminated_xy2",
               [=](const AuditView& v) {
                 const double c0 =
                     eta * (l * p + (mu + b) / (mu * a) * (2 * mu * (mu * q + b) - l * a));
                 const double c1 = l * p + mu + b + 2 / a * (mu + b) * (mu + b);
                 return c0 - c1 * v.mean(1, 0) + (mu + b) * v.mean(2, 0);
               },
               [=](const AuditView& v) { return -a * v.mean(1, 2); }});
  return s;
}

std::vector<IdentitySpec> docs_identities(const ModelParams& pr) {
  const double l = pr.lambda, mu = pr.mu, a = pr.alpha, nu = pr.nu, p = pr.p, q = pr.q;
  const double mean_x = docs_mean_x(pr);
  std::vector<IdentitySpec> s;
  s.push_back({"infected_balance", [=](const AuditView&) { return l * p; },
               [=](const AuditView& v) { return nu * v.mean(0, 1); }});
  s.push_back({"susceptible_balance", [=](const AuditView&) { return l * q; },
               [=](const AuditView& v) { return mu * v.mean(1, 0) + a * v.mean(1, 1); }});
  s.push_back({"y_poisson_mean", [](const AuditView& v) { return v.mean(0, 1); },
               [=](const AuditView&) { return l * p / nu; }});
  s.push_back({"y_poisson_variance", [](const AuditView& v) { return var(v, 0, 1); },
               [](const AuditView& v) { return v.mean(0, 1); }});
  s.push_back({"mean_x_quadrature", [](const AuditView& v) { return v.mean(1, 0); },
               [=](const AuditView&) { return mean_x; }});
  return s;
}

std::vector<IdentityCheck> evaluate(const std::vector<IdentitySpec>& specs,
                                    const SimulationResult& run, const AuditOptions& options) {
  return evaluate_views(specs, batch_views(run), pooled_view(run), options, run.ci_level,
                        run.events < options.min_events);
}

std::vector<IdentityCheck> evaluate_exact(const std::vector<IdentitySpec>& specs,
                                          const MomentTable& moments, const AuditOptions& options) {
  AuditView v;
  v.m = moments;
  std::vector<IdentityCheck> out;
  for (const auto& s : specs) {
    const double l = s.lhs(v), r = s.rhs(v);
    out.push_back(judge(s.name, Estimate::exact(l), Estimate::exact(r), Estimate::exact(l - r), options));
  }
  return out;
}

std::vector<IdentityCheck> audit_sis(const SimulationResult& run, const AuditOptions& options) {
  if (run.kind.variant != ReactorVariant::sis) throw ValidationError("audit_sis needs an SIS run");
  return evaluate(sis_identities(run.params), run, options);
}

std::vector<IdentityCheck> audit_sis(const ModelParams& params, double horizon, RngSeed seed,
                                     const AuditOptions& options) {
  return audit_sis(run_reactor(ReactorVariant::sis, params, horizon, seed), options);
}

std::vector<IdentityCheck> audit_docs(const SimulationResult& run, const AuditOptions& options) {
  if (run.kind.variant != ReactorVariant::docs) throw ValidationError("audit_docs needs a DOCS run");
  return evaluate(docs_identities(run.params), run, options);
}

std::vector<IdentityCheck> audit_docs(const ModelParams& params, double horizon, RngSeed seed,
                                      const AuditOptions& options) {
  return audit_docs(run_reactor(ReactorVariant::docs, params, horizon, seed), options);
}

std::vector<IdentityCheck> audit_routing_docs(const RoutingDocsResult& ens,
                                              const AuditOptions& options) {
  const auto& pr = ens.params;
  const double l = pr.lambda, mu = pr.mu, a = pr.alpha, b = pr.beta;
  const bool closed = ens.closed_tl;
  const double p_open = pr.p;
  // Infected input fraction seen by a station.
  auto pf = [=](const AuditView& v) { return closed ? mu * v.mean(0, 1) / l : p_open; };
  std::vector<IdentitySpec> s;
  s.push_back({"routing_susceptible_balance",
               [=](const AuditView& v) { return l * (1 - pf(v)) + b * v.mean(0, 1); },
               [=](const AuditView& v) { return mu * v.mean(1, 0) + a * v.mean(1, 1); }});
  s.push_back({"routing_infected_balance",
               [=](const AuditView& v) { return l * pf(v) + a * v.mean(1, 1); },
               [=](const AuditView& v) { return (b + mu) * v.mean(0, 1); }});
  s.push_back({"population_mean", [](const AuditView& v) { return v.mean(1, 0) + v.mean(0, 1); },
               [=](const AuditView&) { return l / mu; }});
  s.push_back({"routing_second_y",
               [=](const AuditView& v) {
                 return (l * pf(v) + mu + b) * v.mean(0, 1) + a * v.mean(1, 1) * v.mean(0, 1);
               },
               [=](const AuditView& v) { return (b + mu) * v.mean(0, 2); }});
  s.push_back({"routing_second_x",
               [=](const AuditView& v) {
                 return (l * (1 - pf(v)) + mu) * v.mean(1, 0) + b * v.mean(0, 1) * v.mean(1, 0) +
                        a * v.mean(1, 1);
               },
               [=](const AuditView& v) { return a * v.mean(2, 1) + mu * v.mean(2, 0); }});
  s.push_back({"routing_second_xy",
               [=](const AuditView& v) {
                 return (l * (1 - pf(v)) + b * v.mean(0, 1)) * v.mean(0, 1) +
                        (l * pf(v) + a * v.mean(1, 1)) * v.mean(1, 0);
               },
               [=](const AuditView& v) { return (b + 2 * mu) * v.mean(1, 1) + a * v.mean(1, 2); }});

  std::vector<AuditView> batches;
  for (const auto& row : ens.moments.batches) batches.push_back(view_of_station(row));
  const auto& m = ens.moments;
  const AuditView pooled =
      view_of_station({m.x.value, m.y.value, m.xx.value, m.xy.value, m.yy.value, m.xxy.value, m.xyy.value});
  return evaluate_views(s, batches, pooled, options, m.x.ci_level, batches.size() < 8);
}

std::vector<IdentityCheck> audit_tl(const ModelParams& params, const Estimate& p_star,
                                    double horizon, RngSeed seed, const AuditOptions& options) {
  if (!p_star.defined) throw ValidationError("audit_tl needs a defined fixed point");
  const double p0 = std::clamp(p_star.value, 0.0, 1.0);
  const auto run = run_reactor(ReactorVariant::sis, params.with_p(p0), horizon, seed);
  const double l = params.lambda, mu = params.mu, a = params.alpha, b = params.beta;
  const double eta = params.eta;

  auto specs_at = [=](double p) {
    const double q = 1 - p;
    std::vector<IdentitySpec> s;
    s.push_back({"tl_infection_balance", [=](const AuditView& v) { return a * v.mean(1, 1); },
                 [=](const AuditView& v) { return b * v.mean(0, 1); }});
    s.push_back({"tl_fixed_point", [=](const AuditView&) { return l * p; },
                 [=](const AuditView& v) { return mu * v.mean(0, 1); }});
    s.push_back({"tl_second_y",
                 [=](const AuditView& v) {
                   return (eta * mu * p + mu + b) * p * eta + a * v.mean(1, 2);
                 },
                 [=](const AuditView& v) { return (mu + b) * v.mean(0, 2); }});
    s.push_back({"tl_second_x",
                 [=](const AuditView& v) {
                   return (eta * mu * q + mu) * eta * q + (a + b) * v.mean(1, 1);
                 },
                 [=](const AuditView& v) { return a * v.mean(2, 1) + mu * v.mean(2, 0); }});
    s.push_back({"tl_y_overdispersion",
                 [=](const AuditView& v) { return (mu + b) * (var(v, 0, 1) - v.mean(0, 1)); },
                 [=](const AuditView& v) {
                   return b * v.mean(0, 1) *
                          (v.palm(K::infection, &EventTally::sum_y_before) - v.mean(0, 1));
                 }});
    // The infected customer leaves X at an infection: X^+ = X^- - 1.
    s.push_back({"tl_x_overdispersion",
                 [=](const AuditView& v) { return mu * (var(v, 1, 0) - v.mean(1, 0)); },
                 [=](const AuditView& v) {
                   return a * v.mean(1, 1) * (b / a - v.palm(K::infection, &EventTally::sum_x_after));
                 }});
    s.push_back({"tl_infected_queue",
                 [=](const AuditView& v) {
                   return b * (v.palm(K::infection, &EventTally::sum_y_before) -
                               v.palm(K::recovery, &EventTally::sum_y_after));
                 },
                 [=](const AuditView& v) {
                   return mu * v.palm(K::departure_i, &EventTally::sum_y_after) - eta * mu * p;
                 }});
    s.push_back({"tl_susceptible_queue",
                 [=](const AuditView& v) {
                   return b * (v.palm(K::recovery, &EventTally::sum_x_before) -
                               v.palm(K::infection, &EventTally::sum_x_after));
                 },
                 [=](const AuditView& v) {
                   if (!(p > 0.0)) return kNaN;
                   return mu * q / p * v.palm(K::departure_s, &EventTally::sum_x_after) -
                          eta * mu * q * q / p;
                 }});
    return s;
  };

  const auto batches = batch_views(run);
  const auto pooled = pooled_view(run);
  auto checks = evaluate_views(specs_at(p0), batches, pooled, options, run.ci_level,
                               run.events < options.min_events);
  // Propagate the fixed-point uncertainty through the explicit p dependence.
  if (p_star.std_error > 0.0) {
    const double h = 1e-6;
    const double p1 = p0 + h <= 1.0 ? p0 + h : p0 - h;
    const auto shifted = specs_at(p1);
    const auto base = specs_at(p0);
    for (std::size_t i = 0; i < checks.size(); ++i) {
      auto& c = checks[i];
      if (!c.residual.defined) continue;
      const double r0 = base[i].lhs(pooled) - base[i].rhs(pooled);
      const double r1 = shifted[i].lhs(pooled) - shifted[i].rhs(pooled);
      const double slope = (r1 - r0) / (p1 - p0);
      c.residual.std_error = std::hypot(c.residual.std_error, slope * p_star.std_error);
      c = judge(c.name, c.lhs, c.rhs, c.residual, options);
      c.low_confidence = c.low_confidence || run.events < options.min_events;
    }
  }
  return checks;
}

CorrelationProbe correlation_probe(const ModelParams& pr, double horizon, RngSeed seed,
                                   std::optional<bool> observed_survival) {
  const auto run = run_reactor(ReactorVariant::sis, pr, horizon, seed);
  const auto batches = batch_views(run);
  const auto pooled = pooled_view(run);
  const double ci = run.ci_level;
  auto est = [&](const AuditFn& f) { return batch_estimate(batches, pooled, f, ci); };
  const double l = pr.lambda, mu = pr.mu, a = pr.alpha, b = pr.beta, p = pr.p, q = pr.q;

  CorrelationProbe out;
  out.palm = palm_estimates(run);
  out.cov_xy = est([](const AuditView& v) { return v.mean(1, 1) - v.mean(1, 0) * v.mean(0, 1); });
  const AuditFn ox = [](const AuditView& v) { return var(v, 1, 0) - v.mean(1, 0); };
  const AuditFn oy = [](const AuditView& v) { return var(v, 0, 1) - v.mean(0, 1); };
  out.x_overdispersion = est(ox);
  out.y_overdispersion = est(oy);
  out.total_overdispersion = est([](const AuditView& v) {
    const double m1 = v.mean(1, 0) + v.mean(0, 1);
    return v.mean(2, 0) + 2 * v.mean(1, 1) + v.mean(0, 2) - m1 * m1 - m1;
  });

  // Palm forms: a_r E_R[X^-] - a_i E_I[X^+] - E[X](mu E[X] - lambda q), and
  // the analogue for Y; each equals mu times the overdispersion.
  const AuditFn palm_x = [=](const AuditView& v) {
    return v.rate(K::recovery) * v.palm(K::recovery, &EventTally::sum_x_before) -
           v.rate(K::infection) * v.palm(K::infection, &EventTally::sum_x_after) -
           v.mean(1, 0) * (mu * v.mean(1, 0) - l * q);
  };
  const AuditFn palm_y = [=](const AuditView& v) {
    return v.rate(K::infection) * v.palm(K::infection, &EventTally::sum_y_before) -
           v.rate(K::recovery) * v.palm(K::recovery, &EventTally::sum_y_after) -
           v.mean(0, 1) * (mu * v.mean(0, 1) - l * p);
  };
  auto condition = [&](const AuditFn& direct, const AuditFn& palm) {
    VarianceCondition c;
    c.direct = est(direct);
    c.palm = est(palm);
    const auto diff = est([&](const AuditView& v) { return direct(v) - palm(v); });
    c.agree = diff.defined && (diff.std_error > 0.0 ? std::abs(diff.value) < 3.0 * diff.std_error
                                                    : std::abs(diff.value) < 1e-9);
    c.holds = c.direct.value >= 0.0;
    return c;
  };
  out.x_condition = condition([=](const AuditView& v) { return mu * ox(v); }, palm_x);
  out.y_condition = condition([=](const AuditView& v) { return mu * oy(v); }, palm_y);
  out.correlation_condition = condition(
      [=](const AuditView& v) { return -2.0 * mu * (v.mean(1, 1) - v.mean(1, 0) * v.mean(0, 1)); },
      [=](const AuditView& v) { return palm_x(v) + palm_y(v); });

  out.negative_correlation = out.cov_xy.defined && out.cov_xy.std_error > 0.0 && out.cov_xy.upper() < 0.0;
  if (out.negative_correlation) {
    const double eta = l / mu;
    const double s = mu + b + a * eta;
    const double disc = s * s - 4.0 * a * l * (q + b / mu);
    out.bracket_low = (s - std::sqrt(std::max(disc, 0.0))) / (2.0 * a);
    out.bracket_high = eta;
    const Estimate ex = run.moment(1, 0);
    const double tol = 3.0 * ex.std_error;
    out.bracket_holds = ex.value >= *out.bracket_low - tol && ex.value <= *out.bracket_high + tol;
  }
  if (observed_survival) {
    out.survival_condition = b / a < pr.eta;
    out.contradiction = *observed_survival && !*out.survival_condition;
  }
  return out;
}

void write_audit_json(std::ostream& os, const std::vector<IdentityCheck>& checks) {
  using ordered = nlohmann::ordered_json;
  auto num = [](double v) { return std::isfinite(v) ? ordered(v) : ordered(nullptr); };
  ordered arr = ordered::array();
  for (const auto& c : checks) {
    ordered o;
    o["name"] = c.name;
    o["lhs"] = num(c.lhs.value);
    o["rhs"] = num(c.rhs.value);
    o["residual"] = num(c.residual.value);
    o["se"] = num(c.residual.std_error);
    o["pass"] = c.pass;
    if (c.low_confidence) o["low_confidence"] = true;
    arr.push_back(std::move(o));
  }
  os << arr.dump(2) << '\n';
}

}  // namespace migrasim
