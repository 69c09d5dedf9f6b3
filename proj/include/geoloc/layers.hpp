#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "geoloc/autodiff.hpp"
#include "geoloc/tensor.hpp"

namespace geoloc::nn {

/// Learnable tensors keyed by dotted path, e.g. "backbone.block1.conv1.weight".
/// Ordered so iteration (and therefore checkpoints and updates) is deterministic.
using ParamMap = std::map<std::string, Tensor>;
using BoundParams = std::map<std::string, ad::Var>;

/// Places every parameter on the tape, as variables or constants.
BoundParams bind(ad::Tape& tape, const ParamMap& params, bool requires_grad);
/// Reads back the gradient of every bound parameter after backward().
ParamMap gradients(const ad::Tape& tape, const BoundParams& bound);
/// Throws kKey when the path is missing.
ad::Var lookup(const BoundParams& params, const std::string& path);

std::size_t parameter_count(const ParamMap& params);

// Initialisers. Convolutions and affine layers use He-uniform weights with zero
// bias; LSTMs use U(-1/sqrt(H), 1/sqrt(H)) with the forget-gate bias set to +1.
void init_conv(ParamMap& params, const std::string& prefix, std::size_t in_channels,
               std::size_t out_channels, std::size_t kernel, std::mt19937_64& rng);
void init_fully_connected(ParamMap& params, const std::string& prefix, std::size_t in_dim,
                          std::size_t out_dim, std::mt19937_64& rng);
void init_residual_block(ParamMap& params, const std::string& prefix, std::size_t in_channels,
                         std::size_t out_channels, std::mt19937_64& rng);
void init_lstm(ParamMap& params, const std::string& prefix, std::size_t input_dim,
               std::size_t hidden, std::mt19937_64& rng);

/// 2-D convolution plus per-channel bias, stride 1, "same" padding for odd kernels.
ad::Var conv(ad::Var x, const BoundParams& params, const std::string& prefix);

/// relu(conv2(relu(conv1(x))) + shortcut(x)). The shortcut is a 1x1 projection
/// when "<prefix>.proj.weight" exists, identity otherwise.
ad::Var residual_block(ad::Var x, const BoundParams& params, const std::string& prefix);

/// x (B, D_in) -> x W + b, W stored (D_in, D_out).
ad::Var fully_connected(ad::Var x, const BoundParams& params, const std::string& prefix);

struct LstmState {
  ad::Var h;
  ad::Var c;
};

struct LstmStep {
  ad::Var output;
  LstmState state;
};

LstmState zero_lstm_state(ad::Tape& tape, std::size_t batch, std::size_t hidden);

/// One LSTM step. Gates come from a single fused affine map of [x, h]:
/// weight (D + H, 4H), bias (4H), gate order input, forget, candidate, output.
///   c' = f * c + i * g,  h' = o * tanh(c')
LstmStep lstm_cell(ad::Var x, const LstmState& state, const BoundParams& params,
                   const std::string& prefix);

// Checkpoint container: magic "GEOLOCKP", u32 version, u32 entry count, then per
// entry u32 path length, path bytes, u32 rank, u64 dims, float64 values. All
// little-endian. A save/load round trip is bit exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const ParamMap& params);
ParamMap load_checkpoint(const std::filesystem::path& path);

}  // namespace geoloc::nn
