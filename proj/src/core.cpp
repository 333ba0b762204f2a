#include "ctl/core.hpp"

namespace ctl {

namespace {

template <typename T>
std::vector<T> mean_of_owned(const std::vector<std::vector<T>>& vs) {
  std::vector<std::span<const T>> views(vs.begin(), vs.end());
  return detail::mean(std::span<const std::span<const T>>(views));
}

}  // namespace

Vector mean_vectors(const std::vector<Vector>& vs) { return mean_of_owned(vs); }

std::vector<double> mean_vectors(const std::vector<std::vector<double>>& vs) {
  return mean_of_owned(vs);
}

double l2_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

Vector normalized(std::span<const float> v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw ZeroNormError("cannot normalize a zero-norm vector");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
  }
  return out;
}

bool all_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace ctl
