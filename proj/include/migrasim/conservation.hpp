#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "migrasim/core.hpp"
#include "migrasim/network.hpp"
#include "migrasim/reactor.hpp"

namespace migrasim {

// One stationary identity lhs = rhs evaluated on a run. pass means the
// residual is within `threshold` standard errors of zero (or exactly zero
// when nothing in the run varies).
struct IdentityCheck {
  std::string name;
  Estimate lhs, rhs, residual;
  bool pass = false;
  bool low_confidence = false;
};

// What an identity can read: time-average moments and, for simulated runs,
// event tallies over the same window.
struct AuditView {
  MomentTable m;
  std::array<EventTally, kEventKinds> events{};
  double duration = 0.0;
  bool has_events = false;

  double mean(int a, int b) const { return m(a, b); }
  // Event average of a tally field, e.g. E_I[Y^-].
  double palm(EventKind k, double EventTally::*field) const;
  double rate(EventKind k) const;
};

using AuditFn = std::function<double(const AuditView&)>;

struct IdentitySpec {
  std::string name;
  AuditFn lhs, rhs;
};

struct AuditOptions {
  double threshold = 3.0;  // pass when |residual| < threshold * SE
  double exact_tol = 1e-9;  // used when the residual has no spread at all
  std::uint64_t min_events = 100000;
};

// Identity lists. The SIS list covers the first- and second-order balances,
// the general monomial balance for (1,1), (2,1), (1,2), the Poisson law of
// X + Y and the two relations that eliminate E[XY].
std::vector<IdentitySpec> sis_identities(const ModelParams& params);
std::vector<IdentitySpec> docs_identities(const ModelParams& params);

// General balance for the monomial X^m Y^n in the SIS reactor, as a sum of
// expected rate changes that vanishes in stationarity.
double sis_monomial_balance(int m, int n, const ModelParams& params, const MomentTable& moments);

std::vector<IdentityCheck> evaluate(const std::vector<IdentitySpec>& specs,
                                    const SimulationResult& run, const AuditOptions& options = {});
// Exact evaluation on a known stationary moment table (no standard errors).
std::vector<IdentityCheck> evaluate_exact(const std::vector<IdentitySpec>& specs,
                                          const MomentTable& moments,
                                          const AuditOptions& options = {});

std::vector<IdentityCheck> audit_sis(const ModelParams& params, double horizon, RngSeed seed,
                                     const AuditOptions& options = {});
std::vector<IdentityCheck> audit_sis(const SimulationResult& run, const AuditOptions& options = {});

// DOCS reactor: both balances, Poisson Y, and simulated E[X] against quadrature.
std::vector<IdentityCheck> audit_docs(const ModelParams& params, double horizon, RngSeed seed,
                                      const AuditOptions& options = {});
std::vector<IdentityCheck> audit_docs(const SimulationResult& run, const AuditOptions& options = {});

// Routing DOCS ensemble: first- and second-order balances and E[X]+E[Y] = eta.
// In the closed configuration the infected input fraction is mu E[Y] / lambda.
std::vector<IdentityCheck> audit_routing_docs(const RoutingDocsResult& ensemble,
                                              const AuditOptions& options = {});

// Thermodynamic-limit relations checked on the open SIS reactor fed at the
// fixed point p_star; the uncertainty of p_star is propagated into each check.
std::vector<IdentityCheck> audit_tl(const ModelParams& params, const Estimate& p_star,
                                    double horizon, RngSeed seed, const AuditOptions& options = {});

struct VarianceCondition {
  Estimate direct;  // mu times the overdispersion (or their sum), from moments
  Estimate palm;    // the same quantity from event averages and rates
  bool agree = false;
  bool holds = false;  // direct >= 0
};

struct CorrelationProbe {
  Estimate cov_xy;
  Estimate x_overdispersion;  // E[X^2] - E[X]^2 - E[X]
  Estimate y_overdispersion;
  Estimate total_overdispersion;  // Var(X+Y) - E[X+Y], zero for a Poisson total
  PalmEstimates palm;
  VarianceCondition x_condition, y_condition, correlation_condition;
  bool negative_correlation = false;  // CI of the covariance below 0
  // Bracket on E[X] implied by negative correlation (checked only when it is observed).
  std::optional<double> bracket_low, bracket_high;
  std::optional<bool> bracket_holds;
  // Thermodynamic mode: necessary condition beta/alpha < eta for survival.
  std::optional<bool> survival_condition;
  bool contradiction = false;  // survival observed although beta/alpha >= eta
};

CorrelationProbe correlation_probe(const ModelParams& params, double horizon, RngSeed seed,
                                   std::optional<bool> observed_survival = std::nullopt);

void write_audit_json(std::ostream& os, const std::vector<IdentityCheck>& checks);

}  // namespace migrasim
