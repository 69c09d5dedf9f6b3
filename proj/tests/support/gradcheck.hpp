#pragma once

// Central finite-difference gradient oracle. Independent of the backward
// rules: it only ever evaluates forward values on fresh tapes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <random>
#include <span>
#include <vector>

#include "geoloc/autodiff.hpp"

namespace geoloc::testing {

/// Builds a scalar loss from the inputs, which are placed on `tape` as variables.
using LossBuilder = std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> inputs)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

inline constexpr double kFdStep = 1e-5;
/// Magnitude floor in the relative error so that gradients of exactly zero
/// compare on absolute terms.
inline constexpr double kRelFloor = 1e-5;

/// Relative gap between two step sizes below which a stencil counts as smooth.
inline constexpr double kAgreement = 1e-5;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
}

inline double evaluate(const LossBuilder& build, const std::vector<Tensor>& inputs) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return build(tape, vars).value().item();
}

/// Central difference in coordinate i of input k. A stencil that straddles a
/// relu or max-pool kink gives a biased slope, which shows up as disagreement
/// with the estimate at a tenth of the step; the step then shrinks until two
/// consecutive estimates agree, down to step / 1000.
inline double central_difference(const LossBuilder& build, std::vector<Tensor>& probe,
                                 std::size_t k, std::size_t i, double step) {
  const double orig = probe[k][i];
  // Slope plus a bound on its rounding error.
  auto slope = [&](double h) {
    probe[k][i] = orig + h;
    const double up = evaluate(build, probe);
    probe[k][i] = orig - h;
    const double down = evaluate(build, probe);
    probe[k][i] = orig;
    const double noise = 16.0 * std::numeric_limits<double>::epsilon() *
                         std::max(std::abs(up), std::abs(down)) / h;
    return std::pair{(up - down) / (2.0 * h), noise};
  };
  auto coarse = slope(step);
  for (int refine = 0; refine < 3; ++refine) {
    step /= 10.0;
    const auto fine = slope(step);
    const double gap = std::abs(coarse.first - fine.first);
    const double scale = std::max({std::abs(coarse.first), std::abs(fine.first), kRelFloor});
    if (gap <= kAgreement * scale + fine.second) return coarse.first;
    coarse = fine;
  }
  return coarse.first;
}

/// Compares analytic gradients against central differences. When
/// `coords_per_input` is nonzero only that many random coordinates per input
/// are differenced; otherwise every coordinate is.
inline GradCheckResult gradcheck(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                 std::mt19937_64& rng, std::size_t coords_per_input = 0,
                                 double step = kFdStep) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  const ad::Var loss = build(tape, vars);
  tape.backward(loss);

  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = tape.grad(vars[k]);
    std::vector<std::size_t> coords(inputs[k].size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords_per_input && coords.size() > coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(coords_per_input);
    }
    for (std::size_t i : coords) {
      const double numeric = central_difference(build, probe, k, i, step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      ++result.coordinates;
    }
  }
  return result;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

/// Projects an arbitrary output to a scalar with fixed random weights so the
/// check covers the full vector-Jacobian product.
inline ad::Var weighted_sum(ad::Tape& tape, ad::Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(out, tape.constant(random_tensor(out.shape(), rng))));
}

}  // namespace geoloc::testing
