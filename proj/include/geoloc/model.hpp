#pragma once

// Image -> delta-location regressor: residual conv backbone, global average
// pool, fully connected layer to an n-vector, stacked LSTM consuming that
// vector as a single time step, and an affine head to (east, north).

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "geoloc/autodiff.hpp"
#include "geoloc/geodesy.hpp"
#include "geoloc/layers.hpp"

namespace geoloc::model {

struct ModelConfig {
  std::size_t input_size = 32;  // square input, pixels
  std::size_t channels = 1;
  std::size_t stem_width = 8;
  std::vector<std::size_t> stage_widths = {8, 16, 32};
  std::size_t feature_dim = 64;  // n
  std::size_t lstm_layers = 2;
  std::size_t lstm_hidden = 32;  // H
  bool use_fix_features = false;
  /// Splits the LSTM input vector into this many equal steps. 1 keeps it whole.
  std::size_t sequence_chunks = 1;

  /// Throws kConfig on inconsistent settings.
  void validate() const;
  std::size_t fix_dim() const { return use_fix_features ? 2 : 0; }
  std::size_t lstm_input_dim() const { return (feature_dim + fix_dim()) / sequence_chunks; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Maps raw fixes to network inputs: (projected fix - origin) / target_scale.
struct FixFeatureNorm {
  double origin_east = 0.0;
  double origin_north = 0.0;

  friend bool operator==(const FixFeatureNorm&, const FixFeatureNorm&) = default;
};

/// Everything needed besides the weights to run a trained model.
struct ModelSidecar {
  ModelConfig config;
  double target_scale = 10.0;
  geodesy::UtmZone zone;
  FixFeatureNorm fix_norm;

  friend bool operator==(const ModelSidecar&, const ModelSidecar&) = default;
};

nn::ParamMap init_params(const ModelConfig& config, std::uint64_t seed);

/// Throws kShape unless params has exactly the paths and shapes config implies.
void check_params(const nn::ParamMap& params, const ModelConfig& config);

/// image (B, C, S, S) in [0, 1]; fix (B, 2) required iff use_fix_features and
/// ignored otherwise. Returns (B, 2) scaled-metre deltas.
ad::Var forward(ad::Var image, std::optional<ad::Var> fix, const nn::BoundParams& params,
                const ModelConfig& config);

/// Tape-free convenience wrapper around forward().
Tensor infer(const Tensor& image, const Tensor* fix, const nn::ParamMap& params,
             const ModelConfig& config);

/// Fix feature row for one raw fix.
std::array<double, 2> fix_features(const geodesy::GeoPoint& raw_fix, const ModelSidecar& sidecar);

/// anchor + forward(image) * target_scale, through the pinned zone.
geodesy::GeoPoint predict_absolute(const Tensor& image, const geodesy::GeoPoint& anchor,
                                   const std::optional<geodesy::GeoPoint>& raw_fix,
                                   const nn::ParamMap& params, const ModelSidecar& sidecar);

void save_sidecar(const std::filesystem::path& path, const ModelSidecar& sidecar);
ModelSidecar load_sidecar(const std::filesystem::path& path);

}  // namespace geoloc::model
