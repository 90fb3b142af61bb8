#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ovc/autodiff.hpp"

namespace ovc::ad {

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Builds a scalar on the given tape from parameters in the store.
using ScalarFunction = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients of `fn` with central differences
///   (f(p + h) - f(p - h)) / 2h
/// on up to `max_coords` coordinates per parameter, sampled with a fixed seed.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor); the floor keeps
/// dead units (true gradient 0, numeric roundoff ~1e-12) from reading as total failure.
inline GradientCheckReport finite_difference_check(const ScalarFunction& fn, ParameterStore& store,
                                                   double step = 1e-5, std::uint64_t seed = 20240601,
                                                   std::size_t max_coords = 64, double floor = 1e-7) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  store.zero_grad();
  {
    Tape tape;
    tape.backward(fn(tape));
  }
  std::map<std::string, Tensor> analytic;
  for (auto& [name, p] : store) analytic.emplace(name, p.grad);

  auto evaluate = [&] {
    Tape tape;
    return fn(tape).value().item();
  };

  std::mt19937_64 rng(seed);
  GradientCheckReport report;
  for (auto& [name, p] : store) {
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > max_coords) {
      for (std::size_t i = 0; i < max_coords; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(coords[i], coords[pick(rng)]);
      }
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double saved = p.value[c];
      p.value[c] = saved + step;
      const double up = evaluate();
      p.value[c] = saved - step;
      const double down = evaluate();
      p.value[c] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic.at(name)[c];
      const double rel = std::abs(exact - numeric) / std::max({std::abs(exact), std::abs(numeric), floor});
      ++report.coordinates_checked;
      if (rel > report.max_relative_error || report.coordinates_checked == 1) {
        report.max_relative_error = rel;
        report.worst_parameter = name;
        report.worst_index = c;
        report.analytic = exact;
        report.numeric = numeric;
      }
    }
  }
  store.zero_grad();
  return report;
}

}  // namespace ovc::ad
