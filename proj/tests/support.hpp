#pragma once

// Test-only oracles and generators. Nothing here calls into the code
// paths it is used to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "ctl/matrix.hpp"

namespace ctl::testing {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n,
                                         double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n,
                                        double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(u(rng));
  return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : m.flat()) x = u(rng);
  return m;
}

/// Plain scalar-loop dot product in double.
inline double oracle_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double oracle_sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// Hinge [|a-p|^2 - |a-n|^2 + m]_+ written out element by element.
inline double oracle_hinge(std::span<const double> a, std::span<const double> p,
                           std::span<const double> n, double m) {
  double inner = m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inner += (a[i] - p[i]) * (a[i] - p[i]) - (a[i] - n[i]) * (a[i] - n[i]);
  }
  return inner > 0.0 ? inner : 0.0;
}

/// Per-component mean, summing in the given order with a double
/// accumulator, rounded once to the element type.
template <typename T>
std::vector<T> oracle_mean(const std::vector<std::vector<T>>& vs) {
  std::vector<T> out(vs.front().size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    double s = 0.0;
    for (const auto& v : vs) s += static_cast<double>(v[j]);
    out[j] = static_cast<T>(s / static_cast<double>(vs.size()));
  }
  return out;
}

/// Central finite differences of f over every entry of `x` (restored after).
inline std::vector<double> central_difference(std::span<double> x,
                                              const std::function<double()>& f,
                                              double h = 1e-3) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a|| + ||b||, floor). Zero when both are (near) zero.
inline double relative_error(std::span<const double> a, std::span<const double> b,
                             double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom < floor) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace ctl::testing
