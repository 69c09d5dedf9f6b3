#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "geoloc/dataset.hpp"
#include "geoloc/geodesy.hpp"
#include "geoloc/layers.hpp"
#include "geoloc/model.hpp"
#include "geoloc/tensor.hpp"

namespace geoloc::train {

struct TrainConfig {
  double learning_rate = 0.045;
  std::size_t batch_size = 8;
  std::size_t epochs = 60;
  double crop_fraction = 0.875;  // crop side / source side
  double target_scale = 10.0;    // metres per network output unit
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints

  /// Throws kConfig on out-of-range values.
  void validate() const;
};

/// One training or evaluation frame, ready for the network.
struct Example {
  Tensor image;                       // (C, H, W) source image, values in [0, 1]
  std::array<double, 2> fix{};        // fix features; ignored unless the model uses them
  std::array<double, 2> target{};     // truth - anchor, metres (east, north)
  geodesy::GeoPoint anchor;
};

/// Mean projected raw fix over the samples that carry one. Throws
/// kInsufficientData when none do.
model::FixFeatureNorm fit_fix_norm(const std::vector<data::Sample>& samples,
                                   const geodesy::UtmZone& zone);

/// Pairs samples (targets filled) with their (C, H, W) images. Throws
/// kAlignment on a count mismatch and kIncompleteSample for a missing target,
/// or a missing raw fix when the model takes fix features.
std::vector<Example> make_examples(const std::vector<data::Sample>& samples,
                                   std::vector<Tensor> images, const model::ModelSidecar& sidecar);

/// Random crop (rng given) or centre crop (rng null) of side
/// round(crop_fraction * min(H, W)), then bilinear resize to out x out.
/// Throws kSize if the source is smaller than out on either side.
Tensor augment(const Tensor& image, std::mt19937_64* rng, double crop_fraction, std::size_t out);

/// p <- p - lr * g for every parameter. Throws kKey unless both maps have the
/// same paths, kShape on shape mismatches.
void sgd_step(nn::ParamMap& params, const nn::ParamMap& grads, double learning_rate);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;         // NaN without a validation set
  double val_meter_error = 0.0;  // NaN without a validation set
};

struct TrainState {
  nn::ParamMap params;       // after the last epoch
  nn::ParamMap best_params;  // lowest validation meter error (last epoch without validation)
  std::size_t best_epoch = 0;
  double best_val_meter_error = 0.0;
  std::size_t epochs_completed = 0;
  std::vector<EpochRecord> history;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Periodic and best checkpoints land here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
};

/// Seeded SGD on mean smooth-L1 over targets / target_scale. Batches follow a
/// per-epoch shuffle; each sample's crop comes from its own stream seeded by
/// (seed, epoch, sample index), so results do not depend on evaluation order.
/// Throws kInsufficientData for an empty training set and kDivergence naming
/// the epoch and batch when the loss stops being finite.
TrainState train(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                 const model::ModelConfig& model_config, const TrainConfig& config,
                 std::uint64_t init_seed, const TrainHooks& hooks = {});

/// Network output in metres for each example, centre-cropped.
std::vector<geodesy::DeltaLocation> predict_deltas(const std::vector<Example>& examples,
                                                   const nn::ParamMap& params,
                                                   const model::ModelConfig& model_config,
                                                   const TrainConfig& config);

/// Mean smooth-L1 in scaled units with augmentation disabled.
double evaluate_loss(const std::vector<Example>& examples, const nn::ParamMap& params,
                     const model::ModelConfig& model_config, const TrainConfig& config);

/// Mean distance in metres between predicted and true offsets.
double mean_meter_error(const std::vector<Example>& examples, const nn::ParamMap& params,
                        const model::ModelConfig& model_config, const TrainConfig& config);

/// CSV with header epoch,train_loss,val_loss,val_meter_error; shortest
/// round-trip number formatting.
void write_loss_log(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace geoloc::train
