#include "migrasim/analytic.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace migrasim {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValidationError(std::string(name) + " must be positive");
  }
}

}  // namespace

double air_threshold(double alpha, double beta) {
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  return beta / alpha;
}

AirTlStationary air_tl_stationary(const ModelParams& m) {
  AirTlStationary r;
  const double eta_c = air_threshold(m.alpha, m.beta);
  if (m.eta > eta_c) {
    r.survival = true;
    r.mean_x = eta_c;
    r.mean_y = m.eta - eta_c;
    r.q_star = m.beta / (m.eta * m.alpha);
    r.p_star = 1.0 - r.q_star;
  } else {
    r.mean_x = m.eta;
    r.mean_y = 0.0;
    r.q_star = 1.0;
    r.p_star = 0.0;
  }
  return r;
}

AirTraffic air_traffic(const ModelParams& m, double y) {
  if (!(y >= 0.0)) throw ValidationError("y must be >= 0");
  const double ay = m.alpha * y;
  AirTraffic t;
  t.lambda1 = (m.mu + ay) * (m.beta + m.mu * m.q) * m.lambda /
              ((m.mu + m.beta) * (m.mu + ay) - m.beta * ay);
  t.lambda2 = m.lambda * m.p + t.lambda1 * ay / (m.mu + ay);
  t.mean_x = t.lambda1 / (m.mu + ay);
  t.mean_y = t.lambda2 / (m.mu + m.beta);
  return t;
}

AmfMeans air_amf_means(const ModelParams& m) {
  const double b = m.mu + m.beta + m.alpha * m.eta;
  const double disc = b * b - 4.0 * m.alpha * m.lambda * (m.q + m.beta / m.mu);
  if (disc < 0.0) throw NumericalError("negative discriminant in AIR mean-field means");
  AmfMeans r;
  r.mean_x = (b - std::sqrt(disc)) / (2.0 * m.alpha);
  r.mean_y = m.eta - r.mean_x;
  // lambda q = mu x - beta y + alpha x y
  r.traffic_residual =
      m.lambda * m.q - (m.mu * r.mean_x - m.beta * r.mean_y + m.alpha * r.mean_x * r.mean_y);
  if (std::abs(r.traffic_residual) >= 1e-10 * std::max(1.0, m.lambda)) {
    throw NumericalError("AIR mean-field balance check failed", std::abs(r.traffic_residual));
  }
  return r;
}

QuadratureValue singular_integral(double decay, double exponent, double abs_tol) {
  require_positive(exponent, "exponent");
  // t = s^k with k = m/c turns t^(c-1) dt into k s^(m-1) ds. m = 1 is the
  // plain s^(1/c) substitution; a larger m keeps k >= 3 so that the s^k inside
  // the exponential is smooth enough for fast convergence near s = 0.
  const double m = std::max(1.0, std::ceil(3.0 * exponent));
  const double k = m / exponent;
  auto f = [&](double s) {
    return k * std::pow(s, m - 1.0) * std::exp(-decay * (1.0 - std::pow(s, k)));
  };
  double err = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, 0.0, 1.0, 20, 1e-12, &err);
  if (!(err <= abs_tol) || !std::isfinite(value)) {
    throw NumericalError("quadrature tolerance not reached", err);
  }
  return {value, err};
}

DocsIntegralSpec docs_integral_spec(const ModelParams& m) {
  DocsIntegralSpec s;
  const double na = m.nu + m.alpha;
  s.prefactor = m.lambda * m.q / na;
  s.decay = m.lambda * m.p * m.alpha * m.alpha / (m.nu * na * na);
  s.exponent = m.mu / na + m.lambda * m.p * m.alpha / (na * na);
  return s;
}

QuadratureValue docs_mean_x_checked(const ModelParams& m, double abs_tol) {
  const auto s = docs_integral_spec(m);
  if (s.prefactor == 0.0) return {0.0, 0.0};
  const auto q = singular_integral(s.decay, s.exponent, abs_tol / s.prefactor);
  return {s.prefactor * q.value, s.prefactor * q.error_bound};
}

double docs_mean_x(const ModelParams& m) { return docs_mean_x_checked(m).value; }

double docs_tl_threshold(double mu, double alpha, double beta) {
  require_positive(mu, "mu");
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  return beta / alpha * (1.0 + alpha / (2.0 * mu + beta));
}

namespace {

double rhs_unchecked(double p, const ModelParams& m) {
  const double s = m.mu + m.alpha + m.beta;
  const double pre = ((1.0 - p) * m.mu + p * m.beta) / s;
  const double decay = m.eta * p * m.alpha * m.alpha / (s * s);
  const double exponent = m.mu / s + m.eta * p * (m.mu + m.beta) * m.alpha / (s * s);
  return pre * singular_integral(decay, exponent, 1e-10).value;
}

}  // namespace

double docs_tl_rhs(double p, const ModelParams& m) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p out of range");
  return rhs_unchecked(p, m);
}

double docs_tl_rhs_slope0(const ModelParams& m) {
  return m.beta / m.mu - 1.0 -
         m.eta * (m.alpha / m.mu) / (1.0 + m.alpha / (2.0 * m.mu + m.beta));
}

double docs_tl_rhs_slope_fd(const ModelParams& m, double h) {
  auto central = [&](double step) {
    return (rhs_unchecked(step, m) - rhs_unchecked(-step, m)) / (2.0 * step);
  };
  const double coarse = central(h);
  const double fine = central(0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

DocsFixedPoint docs_tl_fixed_point(const ModelParams& m) {
  DocsFixedPoint r;
  const double eta_c = docs_tl_threshold(m.mu, m.alpha, m.beta);
  if (m.eta <= eta_c) return r;
  r.supercritical = true;

  auto F = [&](double p) { return p - 1.0 + rhs_unchecked(p, m); };
  constexpr double lo = 1e-8, hi = 1.0 - 1e-8;
  constexpr int grid = 64;
  double prev_p = lo, prev_f = F(lo);
  for (int i = 1; i <= grid; ++i) {
    const double p = i == grid ? hi : lo + (hi - lo) * i / grid;
    const double f = F(p);
    if ((prev_f < 0.0) != (f < 0.0)) r.sign_changes.emplace_back(prev_p, p);
    prev_p = p;
    prev_f = f;
  }
  if (r.sign_changes.empty()) {
    throw NumericalError("no sign change of the fixed-point residual in the supercritical regime");
  }
  if (m.beta > m.mu) {
    r.warnings.push_back("beta > mu: uniqueness of the positive root is not guaranteed");
  }
  if (r.sign_changes.size() > 1) {
    r.warnings.push_back(std::to_string(r.sign_changes.size()) +
                         " sign changes found; returning the largest root");
  }
  auto [a, b] = r.sign_changes.back();
  double fa = F(a);
  while (b - a > 1e-13) {
    const double c = 0.5 * (a + b);
    const double fc = F(c);
    if ((fc < 0.0) == (fa < 0.0)) {
      a = c;
      fa = fc;
    } else {
      b = c;
    }
  }
  r.p_star = 0.5 * (a + b);
  r.residual = F(r.p_star);
  return r;
}

SisThresholdBounds sis_threshold_bounds(double mu, double alpha, double beta) {
  require_positive(mu, "mu");
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  SisThresholdBounds b;
  b.lower = beta / (2.0 * mu + 5.0 * beta);
  b.kappa = 2.0 * alpha * mu / (2.0 * (mu + beta) * (alpha + 2.0 * mu + beta) - alpha * beta);
  b.upper = beta / (mu + beta) / b.kappa;
  return b;
}

BranchingQuantities branching_quantities(const ModelParams& m) {
  BranchingQuantities b;
  b.n = m.eta * m.alpha / m.beta;
  b.m = m.eta * m.alpha / (m.alpha + m.beta);
  b.n_supercritical = b.n > 1.0;
  b.m_supercritical = b.m > 1.0;
  return b;
}

double p_star_upper_bound(const ModelParams& m) {
  const double d = m.eta - m.beta / m.alpha;
  const double v = (d + std::sqrt(d * d + 2.0 * m.eta)) / (2.0 * m.eta);
  return std::clamp(v, 0.0, 1.0);
}

}  // namespace migrasim
