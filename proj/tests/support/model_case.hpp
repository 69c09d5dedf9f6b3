#pragma once

#include <random>

#include "geoloc/model.hpp"
#include "primitive_cases.hpp"

namespace geoloc::testing {

/// Whole-network problem: loss = smooth-L1(forward(image, fix), target) with
/// the image, fix features and every parameter as differentiable inputs.
inline GradProblem model_problem(const model::ModelConfig& config, std::mt19937_64& rng,
                                 std::size_t batch = 2) {
  const nn::ParamMap params = model::init_params(config, rng());
  const std::size_t s = config.input_size;
  std::vector<Tensor> data = {random_tensor({batch, config.channels, s, s}, rng, 0.0, 1.0),
                              random_tensor({batch, 2}, rng, -2.0, 2.0),
                              random_tensor({batch, 2}, rng, -3.0, 3.0)};
  std::vector<std::string> keys;
  std::vector<Tensor> inputs = data;
  for (const auto& [k, v] : params) {
    keys.push_back(k);
    inputs.push_back(v);
  }
  return {inputs, [config, keys](ad::Tape&, std::span<const ad::Var> in) {
            const nn::BoundParams bound = detail::rebind(keys, in, 3);
            return ad::smooth_l1_loss(model::forward(in[0], in[1], bound, config), in[2]);
          }};
}

}  // namespace geoloc::testing
