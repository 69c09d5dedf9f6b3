#include "geoloc/model.hpp"

#include <fstream>

#include <json.hpp>

#include "geoloc/error.hpp"

namespace geoloc::model {
namespace {

using nlohmann::json;

std::string stage_name(std::size_t i) { return "backbone.stage" + std::to_string(i); }
std::string lstm_name(std::size_t i) { return "lstm" + std::to_string(i); }

}  // namespace

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfig, "model config: " + m); };
  if (lstm_layers < 1) bad("lstm_layers must be >= 1");
  if (feature_dim < 4) bad("feature_dim must be >= 4");
  if (lstm_hidden < 1 || stem_width < 1 || channels < 1) bad("widths must be positive");
  for (std::size_t w : stage_widths) {
    if (w < 1) bad("stage widths must be positive");
  }
  if (sequence_chunks < 1 || (feature_dim + fix_dim()) % sequence_chunks != 0) {
    bad("sequence_chunks must divide feature_dim + fix dims");
  }
  // Each stage halves the resolution; the last stage needs at least 1x1.
  if ((input_size >> stage_widths.size()) < 1) {
    bad("input_size " + std::to_string(input_size) + " too small for " +
        std::to_string(stage_widths.size()) + " stages");
  }
}

nn::ParamMap init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  nn::ParamMap p;
  nn::init_conv(p, "backbone.stem", config.channels, config.stem_width, 3, rng);
  std::size_t width = config.stem_width;
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    nn::init_residual_block(p, stage_name(s), width, config.stage_widths[s], rng);
    width = config.stage_widths[s];
  }
  nn::init_fully_connected(p, "backbone.fc", width, config.feature_dim, rng);
  std::size_t in = config.lstm_input_dim();
  for (std::size_t l = 0; l < config.lstm_layers; ++l) {
    nn::init_lstm(p, lstm_name(l), in, config.lstm_hidden, rng);
    in = config.lstm_hidden;
  }
  nn::init_fully_connected(p, "head", config.lstm_hidden, 2, rng);
  return p;
}

void check_params(const nn::ParamMap& params, const ModelConfig& config) {
  const nn::ParamMap reference = init_params(config, 0);
  for (const auto& [path, t] : reference) {
    const auto it = params.find(path);
    if (it == params.end()) fail(ErrorCode::kShape, "parameters lack " + path);
    if (it->second.shape() != t.shape()) {
      fail(ErrorCode::kShape, path + " has shape " + to_string(it->second.shape()) +
                                  ", config expects " + to_string(t.shape()));
    }
  }
  for (const auto& [path, _] : params) {
    if (!reference.contains(path)) fail(ErrorCode::kShape, "unexpected parameter " + path);
  }
}

ad::Var forward(ad::Var image, std::optional<ad::Var> fix, const nn::BoundParams& params,
                const ModelConfig& config) {
  const Shape& in = image.shape();
  if (in.size() != 4 || in[1] != config.channels || in[2] != in[3]) {
    fail(ErrorCode::kShape, "model input must be (B, " + std::to_string(config.channels) +
                                ", S, S), got " + to_string(in));
  }
  const std::size_t batch = in[0];

  ad::Var x = ad::relu(nn::conv(image, params, "backbone.stem"));
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    x = nn::residual_block(ad::maxpool2d(x, 2, 2), params, stage_name(s));
  }
  x = ad::global_avg_pool(x);
  ad::Var features = nn::fully_connected(x, params, "backbone.fc");

  if (config.use_fix_features) {
    if (!fix || fix->shape() != Shape{batch, 2}) {
      fail(ErrorCode::kShape, "use_fix_features needs fix features of shape (" +
                                  std::to_string(batch) + ", 2)");
    }
    const ad::Var parts[] = {features, *fix};
    features = ad::concat(parts, 1);
  }

  // The feature vector is the LSTM input as is; sequence_chunks > 1 cuts it
  // into equal steps instead.
  const std::size_t chunks = config.sequence_chunks;
  const std::size_t step = config.lstm_input_dim();
  std::vector<ad::Var> sequence;
  if (chunks == 1) {
    sequence.push_back(features);
  } else {
    for (std::size_t k = 0; k < chunks; ++k) {
      sequence.push_back(ad::slice(features, 1, k * step, (k + 1) * step));
    }
  }
  for (std::size_t l = 0; l < config.lstm_layers; ++l) {
    nn::LstmState state = nn::zero_lstm_state(*image.tape, batch, config.lstm_hidden);
    for (ad::Var& v : sequence) {
      const nn::LstmStep out = nn::lstm_cell(v, state, params, lstm_name(l));
      state = out.state;
      v = out.output;
    }
  }
  return nn::fully_connected(sequence.back(), params, "head");
}

Tensor infer(const Tensor& image, const Tensor* fix, const nn::ParamMap& params,
             const ModelConfig& config) {
  ad::Tape tape;
  const nn::BoundParams bound = nn::bind(tape, params, false);
  std::optional<ad::Var> fix_var;
  if (fix) fix_var = tape.constant(*fix);
  return forward(tape.constant(image), fix_var, bound, config).value();
}

std::array<double, 2> fix_features(const geodesy::GeoPoint& raw_fix,
                                   const ModelSidecar& sidecar) {
  const geodesy::EastNorth en = geodesy::project(raw_fix, sidecar.zone);
  return {(en.east - sidecar.fix_norm.origin_east) / sidecar.target_scale,
          (en.north - sidecar.fix_norm.origin_north) / sidecar.target_scale};
}

geodesy::GeoPoint predict_absolute(const Tensor& image, const geodesy::GeoPoint& anchor,
                                   const std::optional<geodesy::GeoPoint>& raw_fix,
                                   const nn::ParamMap& params, const ModelSidecar& sidecar) {
  Tensor batch = image.rank() == 3
                     ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                     : image;
  std::optional<Tensor> fix;
  if (sidecar.config.use_fix_features) {
    if (!raw_fix) fail(ErrorCode::kIncompleteSample, "model needs the raw fix as input");
    const auto f = fix_features(*raw_fix, sidecar);
    fix = Tensor({1, 2}, {f[0], f[1]});
  }
  const Tensor out = infer(batch, fix ? &*fix : nullptr, params, sidecar.config);
  return geodesy::apply_delta(
      anchor, {out[0] * sidecar.target_scale, out[1] * sidecar.target_scale}, sidecar.zone);
}

void save_sidecar(const std::filesystem::path& path, const ModelSidecar& s) {
  const ModelConfig& c = s.config;
  json j = {
      {"format", "geoloc-model"},
      {"version", 1},
      {"model",
       {{"input_size", c.input_size},
        {"channels", c.channels},
        {"stem_width", c.stem_width},
        {"stage_widths", c.stage_widths},
        {"feature_dim", c.feature_dim},
        {"lstm_layers", c.lstm_layers},
        {"lstm_hidden", c.lstm_hidden},
        {"use_fix_features", c.use_fix_features},
        {"sequence_chunks", c.sequence_chunks}}},
      {"target_scale", s.target_scale},
      {"zone",
       {{"number", s.zone.number},
        {"hemisphere", s.zone.hemisphere == geodesy::Hemisphere::kNorth ? "N" : "S"}}},
      {"fix_norm",
       {{"origin_east", s.fix_norm.origin_east}, {"origin_north", s.fix_norm.origin_north}}},
  };
  std::ofstream os(path);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << j.dump(2) << '\n';
}

ModelSidecar load_sidecar(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::kIo, "cannot open " + path.string());
  try {
    const json j = json::parse(is);
    if (j.at("format") != "geoloc-model" || j.at("version") != 1) {
      fail(ErrorCode::kParse, path.string() + ": unsupported sidecar format");
    }
    ModelSidecar s;
    const json& m = j.at("model");
    s.config.input_size = m.at("input_size");
    s.config.channels = m.at("channels");
    s.config.stem_width = m.at("stem_width");
    s.config.stage_widths = m.at("stage_widths").get<std::vector<std::size_t>>();
    s.config.feature_dim = m.at("feature_dim");
    s.config.lstm_layers = m.at("lstm_layers");
    s.config.lstm_hidden = m.at("lstm_hidden");
    s.config.use_fix_features = m.at("use_fix_features");
    s.config.sequence_chunks = m.at("sequence_chunks");
    s.config.validate();
    s.target_scale = j.at("target_scale");
    s.zone.number = j.at("zone").at("number");
    s.zone.hemisphere = j.at("zone").at("hemisphere") == "S" ? geodesy::Hemisphere::kSouth
                                                             : geodesy::Hemisphere::kNorth;
    s.fix_norm.origin_east = j.at("fix_norm").at("origin_east");
    s.fix_norm.origin_north = j.at("fix_norm").at("origin_north");
    return s;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

}  // namespace geoloc::model
