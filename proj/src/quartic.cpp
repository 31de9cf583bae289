#include "flask/quartic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace flask {
namespace {

void push(RealRoots& roots, double x) {
  if (std::isfinite(x) && roots.count < roots.values.size()) roots.values[roots.count++] = x;
}

void sort_roots(RealRoots& roots) {
  std::sort(roots.values.begin(), roots.values.begin() + static_cast<std::ptrdiff_t>(roots.count));
}

template <std::size_t N>
double horner(const std::array<double, N>& c, double x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) acc = acc * x + c[i];
  return acc;
}

// c holds coefficients from the leading term down.
template <std::size_t N>
double newton_polish(const std::array<double, N>& c, double x) {
  double fx = horner(c, x);
  for (int it = 0; it < 8 && fx != 0.0; ++it) {
    double df = 0.0;
    for (std::size_t i = 0; i + 1 < N; ++i) df = df * x + c[i] * static_cast<double>(N - 1 - i);
    if (df == 0.0) break;
    const double next = x - fx / df;
    const double fnext = horner(c, next);
    if (!(std::abs(fnext) < std::abs(fx))) break;
    x = next;
    fx = fnext;
  }
  return x;
}

}  // namespace

RealRoots solve_quadratic(double c2, double c1, double c0) {
  RealRoots roots;
  if (c2 == 0.0) {
    if (c1 != 0.0) push(roots, -c0 / c1);
    return roots;
  }
  double disc = c1 * c1 - 4.0 * c2 * c0;
  const double scale = c1 * c1 + std::abs(4.0 * c2 * c0);
  if (disc < 0.0 && disc > -1e-14 * scale) disc = 0.0;
  if (disc < 0.0) return roots;
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (c1 + std::copysign(sq, c1));
  if (q == 0.0) {
    push(roots, 0.0);
    push(roots, 0.0);
  } else {
    push(roots, q / c2);
    push(roots, c0 / q);
  }
  sort_roots(roots);
  return roots;
}

RealRoots solve_cubic(double c3, double c2, double c1, double c0) {
  if (c3 == 0.0) return solve_quadratic(c2, c1, c0);
  const double a = c2 / c3;
  const double b = c1 / c3;
  const double c = c0 / c3;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double shift = -a / 3.0;
  const double half_q = 0.5 * q;
  const double third_p = p / 3.0;
  const double disc = half_q * half_q + third_p * third_p * third_p;

  RealRoots roots;
  if (p == 0.0 && q == 0.0) {
    push(roots, shift);
  } else if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    const double u = std::cbrt(-half_q - std::copysign(sq, half_q));
    const double v = (u == 0.0) ? 0.0 : -third_p / u;
    push(roots, u + v + shift);
  } else {
    const double m = 2.0 * std::sqrt(-third_p);
    double arg = (3.0 * q / (2.0 * p)) * std::sqrt(-3.0 / p);
    arg = std::clamp(arg, -1.0, 1.0);
    const double phi = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) {
      push(roots, m * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0) + shift);
    }
  }
  const std::array<double, 4> coeffs{c3, c2, c1, c0};
  for (std::size_t i = 0; i < roots.count; ++i) roots.values[i] = newton_polish(coeffs, roots.values[i]);
  sort_roots(roots);
  return roots;
}

RealRoots solve_quartic(double c4, double c3, double c2, double c1, double c0) {
  if (c4 == 0.0) return solve_cubic(c3, c2, c1, c0);
  const double b = c3 / c4;
  const double c = c2 / c4;
  const double d = c1 / c4;
  const double e = c0 / c4;

  // Depressed quartic u^4 + p u^2 + q u + r with x = u - b/4.
  const double b2 = b * b;
  const double p = c - 3.0 * b2 / 8.0;
  const double q = d - b * c / 2.0 + b2 * b / 8.0;
  const double r = e - b * d / 4.0 + b2 * c / 16.0 - 3.0 * b2 * b2 / 256.0;
  const double shift = -b / 4.0;

  RealRoots depressed;
  const double q_scale = std::max({1.0, std::pow(std::abs(p), 1.5), std::pow(std::abs(r), 0.75)});
  if (std::abs(q) <= 1e-14 * q_scale) {
    for (double v : solve_quadratic(1.0, p, r)) {
      if (v < 0.0) continue;
      const double s = std::sqrt(v);
      push(depressed, -s);
      push(depressed, s);
    }
  } else {
    // Resolvent cubic 8m^3 + 8p m^2 + (2p^2 - 8r) m - q^2 = 0; its largest
    // root is strictly positive because the cubic is -q^2 < 0 at m = 0.
    const RealRoots resolvent = solve_cubic(8.0, 8.0 * p, 2.0 * p * p - 8.0 * r, -q * q);
    double m = resolvent.count ? resolvent.values[resolvent.count - 1] : 0.0;
    if (!(m > 0.0)) m = std::numeric_limits<double>::min();
    const double s = std::sqrt(2.0 * m);
    const double k = q / (2.0 * s);
    for (double u : solve_quadratic(1.0, -s, 0.5 * p + m + k)) push(depressed, u);
    for (double u : solve_quadratic(1.0, s, 0.5 * p + m - k)) push(depressed, u);
  }

  const std::array<double, 5> coeffs{c4, c3, c2, c1, c0};
  RealRoots roots;
  for (double u : depressed) push(roots, newton_polish(coeffs, u + shift));
  sort_roots(roots);
  return roots;
}

}  // namespace flask
