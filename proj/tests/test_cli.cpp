#include <gtest/gtest.h>

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "geoloc/dataset.hpp"
#include "geoloc/evaluation.hpp"
#include "geoloc/model.hpp"
#include "support/temp_dir.hpp"

namespace geoloc::cli {
namespace {

using testing::TempDir;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "geoloc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

const char* kSmallWorld = R"({"trajectory_length": 20, "image_size": 20})";
const char* kTinyTrain = R"({"epochs": 1, "split": [0.6, 0.2, 0.2],
  "model": {"input_size": 16, "stem_width": 4, "stage_widths": [4, 8], "feature_dim": 16,
            "lstm_hidden": 8}})";

class Cli : public ::testing::Test {
 protected:
  std::filesystem::path synth(const std::string& name = "synth", const std::string& seed = "3") {
    spit(tmp_ / "world.json", kSmallWorld);
    const Result r = run_cli({"synth", "--config", (tmp_ / "world.json").string(), "--seed", seed,
                              "--out", (tmp_ / name).string()});
    EXPECT_EQ(r.code, kOk) << r.err;
    return tmp_ / name / "manifest.csv";
  }
  std::filesystem::path noise(const std::filesystem::path& manifest, const std::string& name = "noise") {
    const Result r = run_cli({"noise", "--manifest", manifest.string(), "--out", (tmp_ / name).string()});
    EXPECT_EQ(r.code, kOk) << r.err;
    return tmp_ / name / "manifest.csv";
  }
  TempDir tmp_;
};

TEST_F(Cli, HelpDocumentsExitCodes) {
  const Result r = run_cli({"--help"});
  EXPECT_EQ(r.code, kOk);
  for (const char* s : {"synth", "noise", "train", "eval", "convert", "export", "Exit status",
                        "7  training diverged"}) {
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  }
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run_cli({"noise", "--out", "x"}).code, kUsage);
  EXPECT_EQ(run_cli({"synth", "--out", "x", "--seed", "abc"}).code, kUsage);
}

TEST_F(Cli, SynthIsDeterministic) {
  const auto a = synth("a", "7"), b = synth("b", "7"), c = synth("c", "8");
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(slurp(a.parent_path() / "images/000005.png"), slurp(b.parent_path() / "images/000005.png"));
  EXPECT_NE(slurp(a.parent_path() / "images/000005.png"), slurp(c.parent_path() / "images/000005.png"));
  const data::Manifest m = data::load_manifest(a);
  EXPECT_EQ(m.samples.size(), 41u);
  EXPECT_EQ(m.mode, data::Mode::kGcp);
  const auto cfg = nlohmann::json::parse(slurp(a.parent_path() / "synth_config.json"));
  EXPECT_EQ(cfg["seed"], 7);
  EXPECT_EQ(cfg["trajectory_length"], 20);
  EXPECT_TRUE(cfg["gcp"].is_array());
}

TEST_F(Cli, NoiseAddsFixesWithoutTouchingItsInput) {
  const auto in = synth();
  const std::string before = slurp(in);
  const auto out = noise(in);
  EXPECT_EQ(slurp(in), before);
  const data::Manifest m = data::load_manifest(out);
  EXPECT_EQ(m.mode, data::Mode::kGpsRelative);
  for (const auto& s : m.samples) {
    ASSERT_TRUE(s.raw_fix.has_value());
    EXPECT_TRUE(std::filesystem::exists(out.parent_path() / s.image_ref)) << s.image_ref;
  }
  EXPECT_EQ(slurp(out), slurp(noise(in, "noise2")));

  const Result same = run_cli({"noise", "--manifest", in.string(), "--out", in.parent_path().string()});
  EXPECT_EQ(same.code, kBadConfig) << same.err;
  EXPECT_EQ(slurp(in), before);
}

TEST_F(Cli, ErrorExitCodes) {
  const auto in = synth();
  Result r = run_cli({"noise", "--manifest", (tmp_ / "missing.csv").string(), "--out",
                      (tmp_ / "n").string()});
  EXPECT_EQ(r.code, kMissingFile);
  EXPECT_NE(r.err.find("missing.csv"), std::string::npos);

  spit(tmp_ / "bad.csv", "#version=9\n");
  r = run_cli({"noise", "--manifest", (tmp_ / "bad.csv").string(), "--out", (tmp_ / "n").string()});
  EXPECT_EQ(r.code, kMalformedInput);
  EXPECT_NE(r.err.find("bad.csv:1"), std::string::npos) << r.err;

  spit(tmp_ / "typo.json", R"({"rhoo": 0.5})");
  r = run_cli({"noise", "--manifest", in.string(), "--config", (tmp_ / "typo.json").string(),
               "--out", (tmp_ / "n").string()});
  EXPECT_EQ(r.code, kBadConfig);
  EXPECT_NE(r.err.find("rhoo"), std::string::npos);

  spit(tmp_ / "broken.json", "{");
  r = run_cli({"noise", "--manifest", in.string(), "--config", (tmp_ / "broken.json").string(),
               "--out", (tmp_ / "n").string()});
  EXPECT_EQ(r.code, kMalformedInput);

  spit(tmp_ / "type.json", R"({"rho": "high"})");
  r = run_cli({"noise", "--manifest", in.string(), "--config", (tmp_ / "type.json").string(),
               "--out", (tmp_ / "n").string()});
  EXPECT_EQ(r.code, kBadConfig);

  r = run_cli({"train", "--manifest", in.string(), "--out", (tmp_ / "t").string()});
  EXPECT_EQ(r.code, kBadData) << r.err;
}

TEST_F(Cli, TrainRecordsResolvedConfigAndDivergence) {
  const auto m = noise(synth());
  spit(tmp_ / "train.json", kTinyTrain);
  Result r = run_cli({"train", "--manifest", m.string(), "--config", (tmp_ / "train.json").string(),
                      "--out", (tmp_ / "model").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  for (const char* f : {"model.ckpt", "model.json", "loss_log.csv", "train_config.json"}) {
    EXPECT_TRUE(std::filesystem::exists(tmp_ / "model" / f)) << f;
  }
  const auto cfg = nlohmann::json::parse(slurp(tmp_ / "model/train_config.json"));
  EXPECT_EQ(cfg["model"]["use_fix_features"], true);
  EXPECT_EQ(cfg["learning_rate"], 0.045);
  EXPECT_EQ(cfg["model"]["input_size"], 16);
  EXPECT_TRUE(model::load_sidecar(tmp_ / "model/model.json").config.use_fix_features);

  spit(tmp_ / "hot.json", R"({"epochs": 3, "learning_rate": 1e200,
    "model": {"input_size": 16, "stem_width": 4, "stage_widths": [4], "feature_dim": 8, "lstm_hidden": 4}})");
  r = run_cli({"train", "--manifest", m.string(), "--config", (tmp_ / "hot.json").string(), "--out",
               (tmp_ / "hot").string()});
  EXPECT_EQ(r.code, kDiverged) << r.err;
  EXPECT_NE(r.err.find("epoch"), std::string::npos);
}

TEST_F(Cli, EvalOnPerfectPredictionsReportsZero) {
  const auto synth_manifest = synth();
  data::Manifest m = data::load_manifest(synth_manifest);
  const geodesy::DeltaLocation offset{3.0, 4.0};
  for (auto& s : m.samples) s.truth = geodesy::apply_delta(*m.gcp, offset, m.zone);
  data::write_manifest(synth_manifest.parent_path() / "constant.csv", m);

  const auto mdir = tmp_ / "model";
  std::filesystem::create_directories(mdir);
  model::ModelSidecar sc;
  sc.config.input_size = 16;
  sc.zone = m.zone;
  nn::ParamMap p = model::init_params(sc.config, 1);
  for (double& v : p.at("head.weight").data()) v = 0.0;
  p.at("head.bias")[0] = offset.d_east / sc.target_scale;
  p.at("head.bias")[1] = offset.d_north / sc.target_scale;
  nn::save_checkpoint(mdir / "model.ckpt", p);
  model::save_sidecar(mdir / "model.json", sc);
  spit(mdir / "train_config.json", R"({"crop_fraction": 0.875, "split": [0.7, 0.15, 0.15]})");

  const Result r = run_cli({"eval", "--manifest", (synth_manifest.parent_path() / "constant.csv").string(),
                            "--model", mdir.string(), "--out", (tmp_ / "eval").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("model"), std::string::npos);
  EXPECT_NE(r.out.find("0.00"), std::string::npos);
  const auto rows = eval::parse_table_csv(slurp(tmp_ / "eval/eval_table.csv"));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].name, "model");
  EXPECT_LT(rows[0].stats.mean, 1e-6);
  EXPECT_EQ(rows[0].stats.count, 6u);
}

TEST_F(Cli, FullPipelineEvalAndExport) {
  const auto m = noise(synth());
  spit(tmp_ / "train.json", kTinyTrain);
  ASSERT_EQ(run_cli({"train", "--manifest", m.string(), "--config", (tmp_ / "train.json").string(),
                     "--out", (tmp_ / "model").string()})
                .code,
            kOk);
  const Result r = run_cli({"eval", "--manifest", m.string(), "--model", (tmp_ / "model").string(),
                            "--window", "3", "--out", (tmp_ / "eval").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto rows = eval::parse_table_csv(slurp(tmp_ / "eval/eval_table.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].name, "raw");
  EXPECT_EQ(rows[1].name, "filtered");
  EXPECT_EQ(rows[2].name, "model");
  EXPECT_EQ(slurp(tmp_ / "eval/eval_table.txt"), r.out);
  EXPECT_EQ(nlohmann::json::parse(slurp(tmp_ / "eval/eval_config.json"))["window"], 3);

  const Result e = run_cli({"export", "--manifest", m.string(), "--predictions",
                            (tmp_ / "eval/predictions.csv").string(), "--out", (tmp_ / "geo").string()});
  ASSERT_EQ(e.code, kOk) << e.err;
  const auto j = nlohmann::json::parse(slurp(tmp_ / "geo/tracks.geojson"));
  ASSERT_EQ(j["features"].size(), 3u);
  EXPECT_EQ(j["features"][2]["properties"]["role"], "predicted");
  EXPECT_EQ(j["features"][2]["geometry"]["coordinates"].size(), rows[2].stats.count);
}

TEST_F(Cli, Convert) {
  Result r = run_cli({"convert", "--point", "0,3"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.out, "lat,lon,zone,easting,northing\n0,3,31N,500000,0\n");

  spit(tmp_ / "pts.csv", "lat,lon\n37.7749,-119.9\n");
  r = run_cli({"convert", "--input", (tmp_ / "pts.csv").string(), "--zone", "10N", "--out",
               (tmp_ / "conv").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find(",10N,"), std::string::npos);
  EXPECT_EQ(slurp(tmp_ / "conv/converted.csv"), r.out);

  EXPECT_EQ(run_cli({"convert", "--point", "88,0"}).code, kOutOfRange);
  EXPECT_EQ(run_cli({"convert", "--point", "1;2"}).code, kMalformedInput);
  EXPECT_EQ(run_cli({"convert", "--point", "1,2", "--zone", "99Q"}).code, kBadConfig);
  EXPECT_EQ(run_cli({"convert"}).code, kBadData);
}

}  // namespace
}  // namespace geoloc::cli
