#pragma once

#include "eegd3/types.hpp"

#include <cmath>
#include <limits>

namespace eegd3::stats {

// Regularized incomplete beta via Lentz continued fraction.
inline double betacf(double a, double b, double x) {
  const double tiny = 1e-300;
  const int max_iter = 300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-12) break;
  }
  return h;
}

inline double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// One-sided survival P(T > t) for Student's t with df degrees of freedom.
inline double t_sf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double p2 = betai(df / 2.0, 0.5, df / (df + t * t)); // two-sided
  return t >= 0.0 ? p2 / 2.0 : 1.0 - p2 / 2.0;
}

// Pearson correlation with population moments; 0 for constant input.
inline double pearson(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw LengthMismatch("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  const double mx = x.mean(), my = y.mean();
  const Vector cx = x.array() - mx, cy = y.array() - my;
  const double sx = std::sqrt(cx.squaredNorm() / n), sy = std::sqrt(cy.squaredNorm() / n);
  if (sx == 0.0 || sy == 0.0) return 0.0;
  return cx.dot(cy) / (n * sx * sy);
}

} // namespace eegd3::stats
