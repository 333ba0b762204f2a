#pragma once

// Dense vector arithmetic shared by the whole toolkit.
//
// Storage is 32-bit float (that is what goes to disk), but every sum and
// distance is accumulated in double. Functions accept spans of either
// float or double so the training path (double) and the retrieval path
// (float) share the same kernels.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctl {

using Vector = std::vector<float>;

/// Thrown when two operands disagree on dimensionality.
class DimensionMismatch : public std::invalid_argument {
 public:
  DimensionMismatch(std::size_t lhs, std::size_t rhs)
      : std::invalid_argument("dimension mismatch: " + std::to_string(lhs) +
                              " vs " + std::to_string(rhs)) {}
};

/// Thrown for degenerate (zero-norm) embeddings where a direction is needed.
class ZeroNormError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline void check_same_size(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionMismatch(a, b);
}

template <std::floating_point T>
double dot(std::span<const T> a, std::span<const T> b) {
  check_same_size(a.size(), b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

template <std::floating_point T>
double squared_l2(std::span<const T> a, std::span<const T> b) {
  check_same_size(a.size(), b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

template <std::floating_point T>
double cosine(std::span<const T> a, std::span<const T> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) {
    throw ZeroNormError("cosine similarity of a zero-norm vector");
  }
  return dot(a, b) / (na * nb);
}

template <std::floating_point T>
std::vector<T> mean(std::span<const std::span<const T>> vs) {
  if (vs.empty()) throw std::invalid_argument("mean of an empty vector list");
  const std::size_t dim = vs.front().size();
  std::vector<double> acc(dim, 0.0);
  for (const auto& v : vs) {
    check_same_size(dim, v.size());
    for (std::size_t i = 0; i < dim; ++i) acc[i] += static_cast<double>(v[i]);
  }
  const double n = static_cast<double>(vs.size());
  std::vector<T> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<T>(acc[i] / n);
  return out;
}

}  // namespace detail

inline double dot(std::span<const float> a, std::span<const float> b) {
  return detail::dot(a, b);
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return detail::dot(a, b);
}

inline double squared_l2_distance(std::span<const float> a, std::span<const float> b) {
  return detail::squared_l2(a, b);
}
inline double squared_l2_distance(std::span<const double> a, std::span<const double> b) {
  return detail::squared_l2(a, b);
}

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  return detail::cosine(a, b);
}
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  return detail::cosine(a, b);
}

/// Component-wise mean. Summation runs in the order given; callers that
/// need run-to-run determinism pass members sorted by ascending record id.
inline Vector mean_vectors(std::span<const std::span<const float>> vs) {
  return detail::mean(vs);
}
inline std::vector<double> mean_vectors(std::span<const std::span<const double>> vs) {
  return detail::mean(vs);
}
Vector mean_vectors(const std::vector<Vector>& vs);
std::vector<double> mean_vectors(const std::vector<std::vector<double>>& vs);

double l2_norm(std::span<const float> v);

/// Returns v / ||v||; throws ZeroNormError when ||v|| == 0.
Vector normalized(std::span<const float> v);

bool all_finite(std::span<const float> v);

}  // namespace ctl
