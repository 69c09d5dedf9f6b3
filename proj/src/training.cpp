#include "geoloc/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>

#include "geoloc/error.hpp"
#include "geoloc/image.hpp"

namespace geoloc::train {
namespace {

constexpr std::size_t kEvalBatch = 32;
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct Batch {
  Tensor images;
  Tensor fix;
  Tensor targets;  // scaled
};

/// Stacks examples[idx] into network inputs. `epoch` set means training
/// augmentation with per-sample streams; unset means centre crops.
Batch make_batch(const std::vector<Example>& examples, std::span<const std::size_t> idx,
                 const model::ModelConfig& mc, const TrainConfig& tc,
                 std::optional<std::size_t> epoch) {
  const std::size_t b = idx.size(), s = mc.input_size, c = mc.channels;
  Batch out{Tensor({b, c, s, s}), Tensor({b, 2}), Tensor({b, 2})};
  for (std::size_t k = 0; k < b; ++k) {
    const Example& ex = examples[idx[k]];
    if (ex.image.rank() != 3 || ex.image.dim(0) != c) {
      fail(ErrorCode::kShape, "example image must be (" + std::to_string(c) + ", H, W), got " +
                                  to_string(ex.image.shape()));
    }
    Tensor img;
    if (epoch) {
      std::mt19937_64 rng = stream(tc.seed, *epoch, idx[k]);
      img = augment(ex.image, &rng, tc.crop_fraction, s);
    } else {
      img = augment(ex.image, nullptr, tc.crop_fraction, s);
    }
    std::copy(img.data().begin(), img.data().end(), out.images.data().begin() + k * c * s * s);
    out.fix[2 * k] = ex.fix[0];
    out.fix[2 * k + 1] = ex.fix[1];
    out.targets[2 * k] = ex.target[0] / tc.target_scale;
    out.targets[2 * k + 1] = ex.target[1] / tc.target_scale;
  }
  return out;
}

template <typename F>
void for_each_eval_batch(const std::vector<Example>& examples, const model::ModelConfig& mc,
                         const TrainConfig& tc, F&& f) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < examples.size(); start += kEvalBatch) {
    const std::size_t end = std::min(examples.size(), start + kEvalBatch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(examples, idx, mc, tc, std::nullopt);
    f(start, batch);
  }
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, r.ptr};
}

double norm_sq(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfig, "train config: " + m); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be > 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) bad("crop_fraction must be in (0, 1]");
  if (!(target_scale > 0.0) || !std::isfinite(target_scale)) bad("target_scale must be > 0");
}

model::FixFeatureNorm fit_fix_norm(const std::vector<data::Sample>& samples,
                                   const geodesy::UtmZone& zone) {
  double east = 0.0, north = 0.0;
  std::size_t n = 0;
  for (const data::Sample& s : samples) {
    if (!s.raw_fix) continue;
    const geodesy::EastNorth en = geodesy::project(*s.raw_fix, zone);
    east += en.east;
    north += en.north;
    ++n;
  }
  if (n == 0) fail(ErrorCode::kInsufficientData, "no raw fixes to normalise fix features");
  return {east / static_cast<double>(n), north / static_cast<double>(n)};
}

std::vector<Example> make_examples(const std::vector<data::Sample>& samples,
                                   std::vector<Tensor> images, const model::ModelSidecar& sidecar) {
  if (samples.size() != images.size()) {
    fail(ErrorCode::kAlignment, std::to_string(samples.size()) + " samples but " +
                                    std::to_string(images.size()) + " images");
  }
  std::vector<Example> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const data::Sample& s = samples[i];
    if (!s.target || !s.anchor) {
      fail(ErrorCode::kIncompleteSample, "sample " + std::to_string(i) + " (" + s.image_ref +
                                             ") has no target");
    }
    Example ex{std::move(images[i]), {0.0, 0.0}, {s.target->d_east, s.target->d_north}, *s.anchor};
    if (sidecar.config.use_fix_features) {
      if (!s.raw_fix) {
        fail(ErrorCode::kIncompleteSample, "sample " + std::to_string(i) + " (" + s.image_ref +
                                               ") has no raw fix for the fix features");
      }
      ex.fix = model::fix_features(*s.raw_fix, sidecar);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

Tensor augment(const Tensor& image, std::mt19937_64* rng, double crop_fraction, std::size_t out) {
  if (image.rank() != 3) {
    fail(ErrorCode::kShape, "augment expects (C, H, W), got " + to_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h < out || w < out) {
    fail(ErrorCode::kSize, "image " + std::to_string(h) + "x" + std::to_string(w) +
                               " is smaller than the " + std::to_string(out) + " pixel input");
  }
  const auto side = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(crop_fraction * static_cast<double>(std::min(h, w)))));
  std::size_t top = (h - side) / 2, left = (w - side) / 2;
  if (rng) {
    top = std::uniform_int_distribution<std::size_t>(0, h - side)(*rng);
    left = std::uniform_int_distribution<std::size_t>(0, w - side)(*rng);
  }
  return data::crop_resize(image, top, left, side, out);
}

void sgd_step(nn::ParamMap& params, const nn::ParamMap& grads, double learning_rate) {
  if (params.size() != grads.size()) {
    fail(ErrorCode::kKey, "gradient map has " + std::to_string(grads.size()) + " entries for " +
                              std::to_string(params.size()) + " parameters");
  }
  for (auto& [path, p] : params) {
    const auto it = grads.find(path);
    if (it == grads.end()) fail(ErrorCode::kKey, "no gradient for " + path);
    if (it->second.shape() != p.shape()) {
      fail(ErrorCode::kShape, "gradient for " + path + " has shape " +
                                  to_string(it->second.shape()));
    }
    const auto g = it->second.data();
    auto v = p.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * g[i];
  }
}

std::vector<geodesy::DeltaLocation> predict_deltas(const std::vector<Example>& examples,
                                                   const nn::ParamMap& params,
                                                   const model::ModelConfig& mc,
                                                   const TrainConfig& tc) {
  std::vector<geodesy::DeltaLocation> out(examples.size());
  for_each_eval_batch(examples, mc, tc, [&](std::size_t start, const Batch& b) {
    const Tensor y = model::infer(b.images, &b.fix, params, mc);
    for (std::size_t k = 0; k < y.dim(0); ++k) {
      out[start + k] = {y[2 * k] * tc.target_scale, y[2 * k + 1] * tc.target_scale};
    }
  });
  return out;
}

double evaluate_loss(const std::vector<Example>& examples, const nn::ParamMap& params,
                     const model::ModelConfig& mc, const TrainConfig& tc) {
  if (examples.empty()) fail(ErrorCode::kInsufficientData, "evaluate_loss on an empty set");
  double total = 0.0;
  for_each_eval_batch(examples, mc, tc, [&](std::size_t, const Batch& b) {
    const Tensor y = model::infer(b.images, &b.fix, params, mc);
    for (std::size_t i = 0; i < y.size(); ++i) total += ad::smooth_l1(y[i] - b.targets[i]);
  });
  return total / static_cast<double>(2 * examples.size());
}

double mean_meter_error(const std::vector<Example>& examples, const nn::ParamMap& params,
                        const model::ModelConfig& mc, const TrainConfig& tc) {
  if (examples.empty()) fail(ErrorCode::kInsufficientData, "mean_meter_error on an empty set");
  const auto pred = predict_deltas(examples, params, mc, tc);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total += std::hypot(pred[i].d_east - examples[i].target[0],
                        pred[i].d_north - examples[i].target[1]);
  }
  return total / static_cast<double>(pred.size());
}

TrainState train(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                 const model::ModelConfig& mc, const TrainConfig& tc, std::uint64_t init_seed,
                 const TrainHooks& hooks) {
  tc.validate();
  mc.validate();
  if (train_set.empty()) fail(ErrorCode::kInsufficientData, "training split is empty");
  if (hooks.checkpoint_dir) std::filesystem::create_directories(*hooks.checkpoint_dir);

  TrainState state;
  state.params = model::init_params(mc, init_seed);
  state.best_val_meter_error = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng = stream(tc.seed, epoch, kShuffleStream);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Batch b = make_batch(train_set, idx, mc, tc, epoch);

      ad::Tape tape;
      const nn::BoundParams bound = nn::bind(tape, state.params, true);
      const ad::Var out = model::forward(tape.constant(b.images), tape.constant(b.fix), bound, mc);
      const ad::Var loss = ad::smooth_l1_loss(out, tape.constant(b.targets));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        fail(ErrorCode::kDivergence, "loss became non-finite at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batch_no + 1) +
                                         " (try a lower learning rate)");
      }
      tape.backward(loss);
      const nn::ParamMap grads = nn::gradients(tape, bound);
      if (epoch == 1 && batch_no == 0) {
        for (const auto& [path, g] : grads) {
          if (norm_sq(g) == 0.0) fail(ErrorCode::kTape, "parameter " + path + " got no gradient");
        }
      }
      sgd_step(state.params, grads, tc.learning_rate);
      loss_sum += value * static_cast<double>(idx.size());
    }

    EpochRecord rec{epoch, loss_sum / static_cast<double>(train_set.size()), nan, nan};
    if (!val_set.empty()) {
      rec.val_loss = evaluate_loss(val_set, state.params, mc, tc);
      rec.val_meter_error = mean_meter_error(val_set, state.params, mc, tc);
    }
    state.history.push_back(rec);
    state.epochs_completed = epoch;

    const bool improved = val_set.empty() || rec.val_meter_error < state.best_val_meter_error;
    if (improved) {
      state.best_params = state.params;
      state.best_epoch = epoch;
      state.best_val_meter_error = val_set.empty() ? nan : rec.val_meter_error;
      if (hooks.checkpoint_dir) nn::save_checkpoint(*hooks.checkpoint_dir / "best.ckpt", state.params);
    }
    if (hooks.checkpoint_dir && tc.checkpoint_every && epoch % tc.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04zu.ckpt", epoch);
      nn::save_checkpoint(*hooks.checkpoint_dir / name, state.params);
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return state;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << "epoch,train_loss,val_loss,val_meter_error\n";
  for (const EpochRecord& r : history) {
    os << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ','
       << fmt(r.val_meter_error) << '\n';
  }
  if (!os) fail(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace geoloc::train
