#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace viewgen {

struct GradSuiteEntry {
  std::string name;  // op name, or "viewnet" for the whole network
  std::uint64_t seed = 0;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Finite-difference checks of every differentiable op and of the full
// network built from `model` (a ViewNetConfig preset), once per seed in
// 1..seeds. T is float or double.
template <typename T>
std::vector<GradSuiteEntry> gradient_suite(const std::string& model, int seeds, double eps,
                                           bool include_network = true);

double max_error(const std::vector<GradSuiteEntry>& entries);

}  // namespace viewgen
