#include "grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rng.hpp"

namespace viewgen {

template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>(Tape<T>&)>& f,
                           std::vector<Tensor<T>> targets, double eps,
                           std::size_t max_coords_per_tensor, std::uint64_t seed) {
  std::vector<bool> previous;
  for (auto& t : targets) {
    previous.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.clear_grad();
  }

  Tape<T> tape;
  Tensor<T> loss = f(tape);
  tape.backward(loss);

  auto evaluate = [&]() {
    Tape<T> quiet(false);
    return static_cast<double>(f(quiet).item());
  };

  GradCheckResult result;
  Rng rng(seed);
  for (auto& t : targets) {
    std::vector<T> analytic(t.numel(), T(0));
    if (t.grad().size() == t.numel()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_tensor > 0 && coords.size() > max_coords_per_tensor) {
      for (std::size_t i = 0; i < max_coords_per_tensor; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(max_coords_per_tensor);
    }

    auto values = t.data_mut();
    for (std::size_t i : coords) {
      const T saved = values[i];
      values[i] = static_cast<T>(saved + eps);
      const double plus = evaluate();
      values[i] = static_cast<T>(saved - eps);
      const double minus = evaluate();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = std::abs(static_cast<double>(analytic[i]) - numeric) /
                         std::max(1.0, std::abs(numeric));
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.coordinates;
    }
  }

  for (std::size_t i = 0; i < targets.size(); ++i) {
    targets[i].set_requires_grad(previous[i]);
    targets[i].clear_grad();
  }
  return result;
}

template <typename T>
double grad_check(const std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)>& f, Tensor<T> x,
                  double eps) {
  std::function<Tensor<T>(Tape<T>&)> bound = [&](Tape<T>& tape) { return f(tape, x); };
  return grad_check<T>(bound, {x}, eps).max_relative_error;
}

template GradCheckResult grad_check<float>(const std::function<Tensor<float>(Tape<float>&)>&,
                                           std::vector<Tensor<float>>, double, std::size_t,
                                           std::uint64_t);
template GradCheckResult grad_check<double>(const std::function<Tensor<double>(Tape<double>&)>&,
                                            std::vector<Tensor<double>>, double, std::size_t,
                                            std::uint64_t);
template double grad_check<float>(
    const std::function<Tensor<float>(Tape<float>&, const Tensor<float>&)>&, Tensor<float>, double);
template double grad_check<double>(
    const std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>&, Tensor<double>,
    double);

}  // namespace viewgen
