#pragma once

#include <string>
#include <utility>
#include <vector>

#include "migrasim/core.hpp"

namespace migrasim {

// --- AIR -----------------------------------------------------------------

double air_threshold(double alpha, double beta);

struct AirTlStationary {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double p_star = 0.0;
  double q_star = 1.0;
  bool survival = false;
};

AirTlStationary air_tl_stationary(const ModelParams& params);

struct AirTraffic {
  double lambda1 = 0.0;  // arrival rate to the susceptible station
  double lambda2 = 0.0;  // arrival rate to the infected station
  double mean_x = 0.0;
  double mean_y = 0.0;
};

// Open AIR tandem with infection parameter y.
AirTraffic air_traffic(const ModelParams& params, double y);

struct AmfMeans {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double traffic_residual = 0.0;  // balance residual at the returned point
};

// Self-consistent AIR reactor whose infection parameter equals its own mean
// infected count.
AmfMeans air_amf_means(const ModelParams& params);

// --- DOCS ----------------------------------------------------------------

// E[X] = prefactor * int_0^1 exp(-decay (1 - t)) t^(exponent - 1) dt
struct DocsIntegralSpec {
  double prefactor = 0.0;
  double decay = 0.0;
  double exponent = 1.0;
};

struct QuadratureValue {
  double value = 0.0;
  double error_bound = 0.0;
};

// int_0^1 exp(-decay (1 - t)) t^(exponent - 1) dt, with the t^(c-1) endpoint
// singularity removed by t = s^(1/c). Throws NumericalError if the absolute
// tolerance cannot be met.
QuadratureValue singular_integral(double decay, double exponent, double abs_tol = 1e-10);

DocsIntegralSpec docs_integral_spec(const ModelParams& params);
double docs_mean_x(const ModelParams& params);
QuadratureValue docs_mean_x_checked(const ModelParams& params, double abs_tol = 1e-10);

double docs_tl_threshold(double mu, double alpha, double beta);

// Right-hand side of the DOCS thermodynamic-limit fixed-point relation
// q = RHS(p); RHS(p) = E[X]/eta for the equivalent open reactor, 0 <= p <= 1.
double docs_tl_rhs(double p, const ModelParams& params);

// Closed-form slope of RHS at p = 0.
double docs_tl_rhs_slope0(const ModelParams& params);

// Central difference with one Richardson step.
double docs_tl_rhs_slope_fd(const ModelParams& params, double h = 1e-3);

struct DocsFixedPoint {
  double p_star = 0.0;
  double residual = 0.0;   // p - (1 - RHS(p))
  bool supercritical = false;
  std::vector<std::pair<double, double>> sign_changes;  // bracketing intervals
  std::vector<std::string> warnings;
};

DocsFixedPoint docs_tl_fixed_point(const ModelParams& params);

// --- SIS bounds, branching, p* bound ---------------------------------------

struct SisThresholdBounds {
  double lower = 0.0;
  double upper = 0.0;
  double kappa = 0.0;
};

SisThresholdBounds sis_threshold_bounds(double mu, double alpha, double beta);

struct BranchingQuantities {
  double n = 0.0;  // eta alpha / beta
  double m = 0.0;  // eta alpha / (alpha + beta)
  bool n_supercritical = false;
  bool m_supercritical = false;
};

BranchingQuantities branching_quantities(const ModelParams& params);

double p_star_upper_bound(const ModelParams& params);

}  // namespace migrasim
