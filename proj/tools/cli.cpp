#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geoloc/dataset.hpp"
#include "geoloc/error.hpp"
#include "geoloc/evaluation.hpp"
#include "geoloc/geodesy.hpp"
#include "geoloc/image.hpp"
#include "geoloc/model.hpp"
#include "geoloc/noise.hpp"
#include "geoloc/synthetic.hpp"
#include "geoloc/training.hpp"

namespace geoloc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using geodesy::GeoPoint;

constexpr const char* kExitCodes = R"(Exit status:
  0  success
  1  internal error
  2  usage error (unknown flag, missing argument)
  3  missing or unreadable file
  4  malformed input file (manifest, CSV, JSON, PNG)
  5  invalid configuration value
  6  unusable data (missing fields, too few samples, misaligned tracks)
  7  training diverged
  8  coordinate outside the projection's valid range

Seeds default to 1. Environment variables are never read.)";

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

ExitCode exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return kMissingFile;
    case ErrorCode::kParse: return kMalformedInput;
    case ErrorCode::kConfig:
    case ErrorCode::kKey: return kBadConfig;
    case ErrorCode::kDivergence: return kDiverged;
    case ErrorCode::kOutOfBand:
    case ErrorCode::kDomain:
    case ErrorCode::kProjectionDistortion: return kOutOfRange;
    default: return kBadData;
  }
}

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (r.ec != std::errc()) r = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, r.ptr};
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) fail(ErrorCode::kIo, what + " not found: " + p.string());
}

std::string read_text(const fs::path& p) {
  require_file(p, "file");
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  if (!is && !is.eof()) fail(ErrorCode::kIo, "cannot read " + p.string());
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIo, "cannot write " + p.string());
  os << text;
  if (!os) fail(ErrorCode::kIo, "failed writing " + p.string());
}

json parse_json_file(const fs::path& p) {
  const std::string text = read_text(p);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, p.string() + ": " + e.what());
  }
}

void check_known_keys(const json& defaults, const json& given, const std::string& where) {
  if (!given.is_object()) fail(ErrorCode::kConfig, where + " must be a JSON object");
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key)) fail(ErrorCode::kConfig, "unknown config key '" + where + key + "'");
    if (defaults[key].is_object()) check_known_keys(defaults[key], value, where + key + ".");
  }
}

/// defaults <- config file <- command-line overrides.
json resolve(json defaults, const Common& c, const json& overrides) {
  if (c.config) {
    const json file = parse_json_file(*c.config);
    check_known_keys(defaults, file, "");
    defaults.merge_patch(file);
  }
  defaults.merge_patch(overrides);
  if (c.seed) defaults["seed"] = *c.seed;
  return defaults;
}

template <typename F>
auto config_value(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
}

fs::path prepare_out(const Common& c) {
  if (!c.out) fail(ErrorCode::kConfig, "--out is required");
  const fs::path out(*c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + out.string() + ": " + ec.message());
  return out;
}

void write_config(const fs::path& out, const std::string& command, const json& cfg) {
  write_text(out / (command + "_config.json"), cfg.dump(2) + "\n");
}

GeoPoint point_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) fail(ErrorCode::kConfig, "expected [lat, lon]");
  return {j[0].get<double>(), j[1].get<double>()};
}

void refuse_overwrite(const fs::path& input, const fs::path& output) {
  std::error_code ec;
  if (fs::exists(output) && fs::equivalent(input, output, ec)) {
    fail(ErrorCode::kConfig, "output " + output.string() + " would overwrite the input");
  }
}

std::string rebase_ref(const std::string& ref, const fs::path& from_dir, const fs::path& to_dir) {
  const fs::path p(ref);
  if (p.is_absolute()) return ref;
  const fs::path abs = fs::absolute(from_dir / p).lexically_normal();
  return abs.lexically_relative(fs::absolute(to_dir).lexically_normal()).generic_string();
}

Tensor load_image(const fs::path& manifest_dir, const std::string& ref) {
  const fs::path p = fs::path(ref).is_absolute() ? fs::path(ref) : manifest_dir / ref;
  require_file(p, "image");
  return data::to_tensor(data::read_png(p));
}

std::vector<Tensor> load_images(const fs::path& manifest_dir,
                                const std::vector<data::Sample>& samples) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const data::Sample& s : samples) out.push_back(load_image(manifest_dir, s.image_ref));
  return out;
}

data::Manifest load_manifest_checked(const fs::path& p) {
  require_file(p, "manifest");
  return data::load_manifest(p);
}

std::array<double, 3> split_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::kConfig, "split must be [train, val, test]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Common& c, std::ostream& out) {
  const data::SyntheticWorldConfig d;
  json cfg = resolve({{"seed", 1},
                      {"shape", data::to_string(d.shape)},
                      {"trajectory_length", d.trajectory_length},
                      {"spacing", d.spacing},
                      {"course_size", d.course_size},
                      {"line_heading_deg", d.line_heading_deg},
                      {"origin", {d.origin.lat, d.origin.lon}},
                      {"gcp", "origin"},
                      {"frame_interval", d.frame_interval},
                      {"image_size", d.image_size},
                      {"encoding_strength", d.encoding_strength},
                      {"brightness_strength", d.brightness_strength},
                      {"waves", d.waves},
                      {"min_wavelength", d.min_wavelength},
                      {"max_wavelength", d.max_wavelength}},
                     c, json::object());
  const fs::path dir = prepare_out(c);

  data::SyntheticWorldConfig wc;
  GeoPoint gcp;
  config_value([&] {
    wc.shape = data::parse_course_shape(cfg["shape"].get<std::string>());
    wc.trajectory_length = cfg["trajectory_length"];
    wc.spacing = cfg["spacing"];
    wc.course_size = cfg["course_size"];
    wc.line_heading_deg = cfg["line_heading_deg"];
    wc.origin = point_from_json(cfg["origin"]);
    wc.frame_interval = cfg["frame_interval"];
    wc.image_size = cfg["image_size"];
    wc.encoding_strength = cfg["encoding_strength"];
    wc.brightness_strength = cfg["brightness_strength"];
    wc.waves = cfg["waves"];
    wc.min_wavelength = cfg["min_wavelength"];
    wc.max_wavelength = cfg["max_wavelength"];
    wc.texture_seed = cfg["seed"];
    if (cfg["gcp"] == "origin") cfg["gcp"] = cfg["origin"];
    gcp = point_from_json(cfg["gcp"]);
    return 0;
  });
  geodesy::validate(gcp);

  const data::SyntheticWorld world = data::generate_synthetic_world(wc);
  fs::create_directories(dir / "images");
  data::Manifest m;
  m.zone = world.zone;
  m.mode = data::Mode::kGcp;
  m.gcp = gcp;
  char name[32];
  for (std::size_t i = 0; i < world.truth.size(); ++i) {
    std::snprintf(name, sizeof(name), "images/%06zu.png", i);
    data::write_png(dir / name, world.image(i));
    data::Sample s;
    s.timestamp = world.timestamps[i];
    s.image_ref = name;
    s.truth = world.truth[i];
    m.samples.push_back(std::move(s));
  }
  data::write_manifest(dir / "manifest.csv", m);
  write_config(dir, "synth", cfg);
  out << "synth: " << m.samples.size() << " samples, zone " << geodesy::to_string(m.zone)
      << ", manifest " << (dir / "manifest.csv").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- noise

int cmd_noise(const Common& c, const std::string& manifest_path, std::ostream& out) {
  const data::NoiseModel d;
  const json cfg = resolve({{"seed", 1},
                            {"mean", 9.8772},
                            {"sd", 11.7547},
                            {"clip_min", d.clip_min},
                            {"clip_max", d.clip_max},
                            {"rho", d.rho},
                            {"mode", "gps-relative"}},
                           c, json::object());
  const fs::path in(manifest_path);
  data::Manifest m = load_manifest_checked(in);
  const fs::path dir = prepare_out(c);
  refuse_overwrite(in, dir / "manifest.csv");

  data::Mode mode{};
  data::NoiseModel model;
  config_value([&] {
    mode = data::parse_mode(cfg["mode"].get<std::string>());
    model = data::NoiseModel::calibrated(cfg["mean"], cfg["sd"], cfg["clip_min"], cfg["clip_max"],
                                         cfg["rho"], cfg["seed"]);
    return 0;
  });
  if (mode == data::Mode::kGcp && !m.gcp) {
    fail(ErrorCode::kConfig, "gcp mode needs a manifest with a #gcp header");
  }

  std::vector<GeoPoint> truth;
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    if (!m.samples[i].truth) {
      fail(ErrorCode::kIncompleteSample,
           "sample " + std::to_string(i) + " (" + m.samples[i].image_ref + ") has no truth");
    }
    truth.push_back(*m.samples[i].truth);
  }
  const std::vector<GeoPoint> raw = data::simulate_gps_noise(truth, model, m.zone);
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    m.samples[i].raw_fix = raw[i];
    m.samples[i].image_ref = rebase_ref(m.samples[i].image_ref, in.parent_path(), dir);
  }
  m.mode = mode;
  data::write_manifest(dir / "manifest.csv", m);
  write_config(dir, "noise", cfg);

  const auto errs = eval::point_errors(raw, truth, m.zone);
  const eval::ErrorStats s = eval::summarize(errs);
  char line[160];
  std::snprintf(line, sizeof(line), "noise: %zu fixes, mean error %.2f m, sd %.2f m\n", s.count,
                s.mean, s.sd);
  out << line;
  return kOk;
}

// ---------------------------------------------------------------- train

int cmd_train(const Common& c, const std::string& manifest_path, std::optional<std::size_t> epochs,
              std::ostream& out) {
  const train::TrainConfig td;
  const model::ModelConfig md;
  json overrides = json::object();
  if (epochs) overrides["epochs"] = *epochs;
  json cfg = resolve({{"seed", 1},
                      {"learning_rate", td.learning_rate},
                      {"batch_size", td.batch_size},
                      {"epochs", td.epochs},
                      {"crop_fraction", td.crop_fraction},
                      {"target_scale", td.target_scale},
                      {"checkpoint_every", td.checkpoint_every},
                      {"split", {0.7, 0.15, 0.15}},
                      {"model",
                       {{"input_size", md.input_size},
                        {"channels", md.channels},
                        {"stem_width", md.stem_width},
                        {"stage_widths", md.stage_widths},
                        {"feature_dim", md.feature_dim},
                        {"lstm_layers", md.lstm_layers},
                        {"lstm_hidden", md.lstm_hidden},
                        {"use_fix_features", "auto"},
                        {"sequence_chunks", md.sequence_chunks}}}},
                     c, overrides);
  const fs::path in(manifest_path);
  const data::Manifest m = load_manifest_checked(in);
  const fs::path dir = prepare_out(c);

  train::TrainConfig tc;
  model::ModelSidecar sidecar;
  std::array<double, 3> fractions{};
  std::uint64_t seed = 1;
  config_value([&] {
    seed = cfg["seed"];
    tc.seed = seed;
    tc.learning_rate = cfg["learning_rate"];
    tc.batch_size = cfg["batch_size"];
    tc.epochs = cfg["epochs"];
    tc.crop_fraction = cfg["crop_fraction"];
    tc.target_scale = cfg["target_scale"];
    tc.checkpoint_every = cfg["checkpoint_every"];
    fractions = split_from_json(cfg["split"]);
    json& mj = cfg["model"];
    if (mj["use_fix_features"] == "auto") {
      mj["use_fix_features"] = m.mode == data::Mode::kGpsRelative;
    }
    model::ModelConfig& mc = sidecar.config;
    mc.input_size = mj["input_size"];
    mc.channels = mj["channels"];
    mc.stem_width = mj["stem_width"];
    mc.stage_widths = mj["stage_widths"].get<std::vector<std::size_t>>();
    mc.feature_dim = mj["feature_dim"];
    mc.lstm_layers = mj["lstm_layers"];
    mc.lstm_hidden = mj["lstm_hidden"];
    mc.use_fix_features = mj["use_fix_features"].get<bool>();
    mc.sequence_chunks = mj["sequence_chunks"];
    return 0;
  });
  tc.validate();
  sidecar.config.validate();
  sidecar.target_scale = tc.target_scale;
  sidecar.zone = m.zone;

  const std::vector<data::Sample> samples = data::make_targets(m.samples, m.mode, m.gcp, m.zone);
  const auto split = data::split_trajectory(samples, fractions);
  if (sidecar.config.use_fix_features) sidecar.fix_norm = train::fit_fix_norm(split.train, m.zone);
  const auto examples = train::make_examples(samples, load_images(in.parent_path(), samples), sidecar);
  const auto ex = data::split_trajectory(examples, fractions);

  train::TrainHooks hooks;
  if (tc.checkpoint_every > 0) hooks.checkpoint_dir = dir / "checkpoints";
  hooks.on_epoch = [&](const train::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %zu/%zu  train_loss %.5f  val_loss %.5f  val_error %.3f m\n",
                  r.epoch, tc.epochs, r.train_loss, r.val_loss, r.val_meter_error);
    out << line << std::flush;
  };
  out << "train: " << ex.train.size() << " train / " << ex.val.size() << " val / "
      << ex.test.size() << " test samples\n";
  const train::TrainState state = train::train(ex.train, ex.val, sidecar.config, tc, seed, hooks);

  nn::save_checkpoint(dir / "model.ckpt", state.best_params);
  model::save_sidecar(dir / "model.json", sidecar);
  train::write_loss_log(dir / "loss_log.csv", state.history);
  write_config(dir, "train", cfg);
  out << "train: best epoch " << state.best_epoch << ", model " << (dir / "model.ckpt").string()
      << '\n';
  return kOk;
}

// ---------------------------------------------------------------- eval

struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
};

Segment select_segment(std::size_t n, const std::array<double, 3>& fractions,
                       const std::string& which) {
  if (which == "all") return {0, n};
  const auto sizes = data::split_sizes(n, fractions);
  if (which == "train") return {0, sizes[0]};
  if (which == "val") return {sizes[0], sizes[0] + sizes[1]};
  if (which == "test") return {sizes[0] + sizes[1], n};
  fail(ErrorCode::kConfig, "segment must be train, val, test or all, got '" + which + "'");
}

void write_predictions(const fs::path& p, const std::vector<data::Sample>& samples,
                       const std::vector<GeoPoint>& predicted) {
  std::string text = "timestamp,image_ref,pred_lat,pred_lon\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    text += shortest(samples[i].timestamp) + ',' + samples[i].image_ref + ',' +
            shortest(predicted[i].lat) + ',' + shortest(predicted[i].lon) + '\n';
  }
  write_text(p, text);
}

std::vector<GeoPoint> read_predictions(const fs::path& p) {
  std::istringstream is(read_text(p));
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(is, line) || line != "timestamp,image_ref,pred_lat,pred_lon") {
    fail(ErrorCode::kParse, p.string() + ":1: expected predictions header");
  }
  std::vector<GeoPoint> out;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    double lat = 0.0, lon = 0.0;
    const bool ok =
        f.size() == 4 &&
        std::from_chars(f[2].data(), f[2].data() + f[2].size(), lat).ptr == f[2].data() + f[2].size() &&
        std::from_chars(f[3].data(), f[3].data() + f[3].size(), lon).ptr == f[3].data() + f[3].size();
    if (!ok) fail(ErrorCode::kParse, p.string() + ":" + std::to_string(line_no) + ": bad row");
    out.push_back({lat, lon});
  }
  return out;
}

int cmd_eval(const Common& c, const std::string& manifest_path, const std::string& model_dir,
             std::optional<std::size_t> window, std::ostream& out) {
  json overrides = json::object();
  if (window) overrides["window"] = *window;
  json cfg = resolve({{"seed", 1},
                      {"window", 9},
                      {"segment", "test"},
                      {"lane_threshold", eval::kLaneWidth},
                      {"split", "model"}},
                     c, overrides);
  const fs::path in(manifest_path), mdir(model_dir);
  const data::Manifest m = load_manifest_checked(in);
  require_file(mdir / "model.json", "model sidecar");
  require_file(mdir / "model.ckpt", "model checkpoint");
  require_file(mdir / "train_config.json", "training config");
  const model::ModelSidecar sidecar = model::load_sidecar(mdir / "model.json");
  const nn::ParamMap params = nn::load_checkpoint(mdir / "model.ckpt");
  model::check_params(params, sidecar.config);
  const json train_cfg = parse_json_file(mdir / "train_config.json");
  const fs::path dir = prepare_out(c);
  if (!(m.zone == sidecar.zone)) {
    fail(ErrorCode::kConfig, "manifest zone " + geodesy::to_string(m.zone) +
                                 " differs from the model's " + geodesy::to_string(sidecar.zone));
  }

  train::TrainConfig tc;
  std::array<double, 3> fractions{};
  std::size_t w = 0;
  double lane = 0.0;
  std::string which;
  config_value([&] {
    tc.crop_fraction = train_cfg.at("crop_fraction");
    tc.target_scale = sidecar.target_scale;
    if (cfg["split"] == "model") cfg["split"] = train_cfg.at("split");
    fractions = split_from_json(cfg["split"]);
    w = cfg["window"];
    lane = cfg["lane_threshold"];
    which = cfg["segment"].get<std::string>();
    return 0;
  });

  const std::vector<data::Sample> all = data::make_targets(m.samples, m.mode, m.gcp, m.zone);
  const Segment seg = select_segment(all.size(), fractions, which);
  if (seg.begin == seg.end) fail(ErrorCode::kInsufficientData, "segment '" + which + "' is empty");
  const std::vector<data::Sample> samples(all.begin() + static_cast<std::ptrdiff_t>(seg.begin),
                                          all.begin() + static_cast<std::ptrdiff_t>(seg.end));
  const auto examples =
      train::make_examples(samples, load_images(in.parent_path(), samples), sidecar);
  const auto deltas = train::predict_deltas(examples, params, sidecar.config, tc);

  eval::Track truth, predicted;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    truth.push_back(*samples[i].truth);
    predicted.push_back(geodesy::apply_delta(*samples[i].anchor, deltas[i], m.zone));
  }

  std::vector<eval::NamedTrack> rows;
  std::vector<data::Track> geo{{"truth", truth}};
  const auto has_raw = [](const data::Sample& s) { return s.raw_fix.has_value(); };
  if (std::all_of(samples.begin(), samples.end(), has_raw)) {
    eval::Track raw, filtered;
    for (const auto& s : samples) raw.push_back(*s.raw_fix);
    if (std::all_of(all.begin(), all.end(), has_raw)) {
      eval::Track full;
      for (const auto& s : all) full.push_back(*s.raw_fix);
      const eval::Track f = eval::moving_average_filter(full, w, m.zone);
      filtered.assign(f.begin() + static_cast<std::ptrdiff_t>(seg.begin),
                      f.begin() + static_cast<std::ptrdiff_t>(seg.end));
    } else {
      filtered = eval::moving_average_filter(raw, w, m.zone);
    }
    rows.push_back({"raw", raw});
    rows.push_back({"filtered", filtered});
    geo.push_back({"raw", raw});
    geo.push_back({"filtered", filtered});
  }
  rows.push_back({"model", predicted});
  geo.push_back({"predicted", predicted});

  const auto table = eval::compare_tracks(rows, truth, m.zone, lane);
  const std::string text = eval::format_table(table);
  write_text(dir / "eval_table.txt", text);
  write_text(dir / "eval_table.csv", eval::table_to_csv(table));
  write_predictions(dir / "predictions.csv", samples, predicted);
  data::write_geojson(dir / "tracks.geojson", geo);
  write_config(dir, "eval", cfg);
  out << text;
  return kOk;
}

// ---------------------------------------------------------------- convert

int cmd_convert(const Common& c, const std::vector<std::string>& points,
                const std::optional<std::string>& input, const std::optional<std::string>& zone,
                std::ostream& out) {
  json overrides = json::object();
  if (zone) overrides["zone"] = *zone;
  const json cfg = resolve({{"seed", 1}, {"zone", "auto"}}, c, overrides);

  std::optional<geodesy::UtmZone> pinned;
  config_value([&] {
    const std::string z = cfg["zone"];
    if (z != "auto") {
      pinned = geodesy::parse_zone(z);
      if (!pinned) fail(ErrorCode::kConfig, "bad zone '" + z + "' (expected e.g. 10N)");
    }
    return 0;
  });

  const auto parse_point = [](const std::string& text, const std::string& where) {
    const auto comma = text.find(',');
    double lat = 0.0, lon = 0.0;
    const bool ok = comma != std::string::npos &&
                    std::from_chars(text.data(), text.data() + comma, lat).ptr == text.data() + comma &&
                    std::from_chars(text.data() + comma + 1, text.data() + text.size(), lon).ptr ==
                        text.data() + text.size();
    if (!ok) fail(ErrorCode::kParse, where + ": expected 'lat,lon', got '" + text + "'");
    return GeoPoint{lat, lon};
  };

  std::vector<GeoPoint> pts;
  for (const std::string& p : points) pts.push_back(parse_point(p, "--point"));
  if (input) {
    std::istringstream is(read_text(*input));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || (line_no == 1 && line.rfind("lat", 0) == 0)) continue;
      pts.push_back(parse_point(line, *input + ":" + std::to_string(line_no)));
    }
  }
  if (pts.empty()) fail(ErrorCode::kEmptyInput, "no points given (use --point or --input)");

  std::string text = "lat,lon,zone,easting,northing\n";
  for (const GeoPoint& p : pts) {
    const geodesy::UtmCoord u = geodesy::geo_to_utm(p, pinned);
    text += shortest(p.lat) + ',' + shortest(p.lon) + ',' + geodesy::to_string(u.zone) + ',' +
            shortest(u.easting) + ',' + shortest(u.northing) + '\n';
  }
  if (c.out) {
    const fs::path dir = prepare_out(c);
    write_text(dir / "converted.csv", text);
    write_config(dir, "convert", cfg);
  }
  out << text;
  return kOk;
}

// ---------------------------------------------------------------- export

int cmd_export(const Common& c, const std::string& manifest_path,
               const std::optional<std::string>& predictions, std::ostream& out) {
  const json cfg = resolve({{"seed", 1}}, c, json::object());
  const data::Manifest m = load_manifest_checked(manifest_path);
  const fs::path dir = prepare_out(c);

  std::vector<data::Track> tracks;
  data::Track truth{"truth", {}}, raw{"raw", {}};
  for (const auto& s : m.samples) {
    if (s.truth) truth.points.push_back(*s.truth);
    if (s.raw_fix) raw.points.push_back(*s.raw_fix);
  }
  if (!truth.points.empty()) tracks.push_back(truth);
  if (!raw.points.empty()) tracks.push_back(raw);
  if (predictions) tracks.push_back({"predicted", read_predictions(*predictions)});
  if (tracks.empty()) fail(ErrorCode::kEmptyInput, "nothing to export");

  data::write_geojson(dir / "tracks.geojson", tracks);
  write_config(dir, "export", cfg);
  out << "export: " << tracks.size() << " tracks to " << (dir / "tracks.geojson").string() << '\n';
  return kOk;
}

void add_common(CLI::App* sub, Common& c, bool out_required) {
  sub->add_option("--config", c.config, "JSON config file; command-line flags take precedence");
  sub->add_option("--seed", c.seed, "Random seed (default 1)");
  auto* o = sub->add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Image-based GPS correction: synthesize, perturb, train, evaluate.", "geoloc"};
  app.footer(kExitCodes);
  app.require_subcommand(1);

  Common common;
  std::string manifest, model_dir;
  std::optional<std::string> predictions, input, zone;
  std::optional<std::size_t> epochs, window;
  std::vector<std::string> points;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic course, images and manifest");
  add_common(synth, common, true);

  auto* noise = app.add_subcommand("noise", "Add simulated phone-grade GPS fixes to a manifest");
  add_common(noise, common, true);
  noise->add_option("--manifest", manifest, "Input manifest")->required();

  auto* trn = app.add_subcommand("train", "Train the image-to-offset regressor");
  add_common(trn, common, true);
  trn->add_option("--manifest", manifest, "Training manifest")->required();
  trn->add_option("--epochs", epochs, "Number of epochs");

  auto* evl = app.add_subcommand("eval", "Compare raw, filtered and model tracks against truth");
  add_common(evl, common, true);
  evl->add_option("--manifest", manifest, "Manifest with truth")->required();
  evl->add_option("--model", model_dir, "Directory written by 'train'")->required();
  evl->add_option("--window", window, "Moving-average window (odd)");

  auto* conv = app.add_subcommand("convert", "Convert lat,lon points to UTM");
  add_common(conv, common, false);
  conv->add_option("--point", points, "Point as lat,lon (repeatable)");
  conv->add_option("--input", input, "CSV file of lat,lon rows");
  conv->add_option("--zone", zone, "Pin every point to this zone, e.g. 10N");

  auto* exp = app.add_subcommand("export", "Write manifest and prediction tracks as GeoJSON");
  add_common(exp, common, true);
  exp->add_option("--manifest", manifest, "Manifest")->required();
  exp->add_option("--predictions", predictions, "predictions.csv written by 'eval'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, out);
    if (noise->parsed()) return cmd_noise(common, manifest, out);
    if (trn->parsed()) return cmd_train(common, manifest, epochs, out);
    if (evl->parsed()) return cmd_eval(common, manifest, model_dir, window, out);
    if (conv->parsed()) return cmd_convert(common, points, input, zone, out);
    if (exp->parsed()) return cmd_export(common, manifest, predictions, out);
  } catch (const Error& e) {
    const ExitCode code = exit_code_for(e.code());
    err << "geoloc: error [" << to_string(e.code()) << "] (exit " << code << "): " << e.what()
        << '\n';
    return code;
  } catch (const std::exception& e) {
    err << "geoloc: internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

}  // namespace geoloc::cli
