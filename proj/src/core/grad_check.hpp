#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tensor.hpp"

namespace viewgen {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences. The error per coordinate is |analytic - numeric| / max(1, |numeric|).
// `max_coords_per_tensor` > 0 restricts the check to a seeded sample of
// coordinates in each target tensor.
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>(Tape<T>&)>& f,
                           std::vector<Tensor<T>> targets, double eps,
                           std::size_t max_coords_per_tensor = 0, std::uint64_t seed = 0);

template <typename T>
double grad_check(const std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)>& f, Tensor<T> x,
                  double eps);

}  // namespace viewgen
