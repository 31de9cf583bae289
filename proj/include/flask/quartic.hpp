#pragma once

#include <array>
#include <cstddef>

namespace flask {

/// Real roots of a polynomial of degree <= 4, sorted ascending.
struct RealRoots {
  std::array<double, 4> values{};
  std::size_t count = 0;

  const double* begin() const { return values.data(); }
  const double* end() const { return values.data() + count; }
};

/// Solves c4 x^4 + c3 x^3 + c2 x^2 + c1 x + c0 = 0 over the reals.
/// Ferrari's resolvent-cubic reduction followed by Newton polishing on the
/// original coefficients. Falls back to lower degree when leading
/// coefficients vanish.
RealRoots solve_quartic(double c4, double c3, double c2, double c1, double c0);

/// Real roots of c3 x^3 + c2 x^2 + c1 x + c0.
RealRoots solve_cubic(double c3, double c2, double c1, double c0);

/// Real roots of c2 x^2 + c1 x + c0.
RealRoots solve_quadratic(double c2, double c1, double c0);

}  // namespace flask
