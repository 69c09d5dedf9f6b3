#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "geoloc/dataset.hpp"
#include "geoloc/error.hpp"
#include "geoloc/image.hpp"
#include "geoloc/noise.hpp"
#include "geoloc/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace geoloc::data {
namespace {

using geodesy::Hemisphere;
using geodesy::UtmZone;
using testing::TempDir;

const UtmZone kZone10N{10, Hemisphere::kNorth};

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no geoloc::Error thrown";
  return ErrorCode::kIo;
}

template <typename F>
std::string message_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  ADD_FAILURE() << "no geoloc::Error thrown";
  return {};
}

// Raw moments of a log-normal truncated to [a, b], by composite Simpson in
// log space with an erfc-based normal CDF.
double quadrature_moment(double mu, double sigma, double a, double b, int k) {
  const auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); };
  const double lo = std::log(a), hi = std::log(b);
  const int n = 20000;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double y = lo + i * h;
    const double z = (y - mu) / sigma;
    const double f = std::exp(k * y - 0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    acc += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return acc * h / 3.0 / (cdf((hi - mu) / sigma) - cdf((lo - mu) / sigma));
}

// ---------------------------------------------------------------- noise

TEST(Noise, PhoneGradeCalibrationMatchesTargetsByQuadrature) {
  const NoiseModel m = NoiseModel::phone_grade();
  const double m1 = quadrature_moment(m.mu, m.sigma, m.clip_min, m.clip_max, 1);
  const double m2 = quadrature_moment(m.mu, m.sigma, m.clip_min, m.clip_max, 2);
  EXPECT_NEAR(m1, 9.8772, 1e-6);
  EXPECT_NEAR(std::sqrt(m2 - m1 * m1), 11.7547, 1e-6);
  EXPECT_NEAR(m.mean(), m1, 1e-8);
  EXPECT_NEAR(m.sd(), std::sqrt(m2 - m1 * m1), 1e-8);
  EXPECT_DOUBLE_EQ(m.clip_min, 0.37419);
  EXPECT_DOUBLE_EQ(m.clip_max, 61.7118);
}

TEST(Noise, MonteCarloMomentsAndRange) {
  const NoiseModel m = NoiseModel::phone_grade(11);
  const auto offsets = simulate_offsets(1'000'000, m);
  double sum = 0.0, sq = 0.0, lo = 1e300, hi = 0.0;
  for (const auto& d : offsets) {
    const double r = d.norm();
    sum += r;
    sq += r * r;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  const double n = static_cast<double>(offsets.size());
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 9.8772, 0.02 * 9.8772);
  EXPECT_NEAR(sd, 11.7547, 0.02 * 11.7547);
  EXPECT_GE(lo, 0.37419 - 1e-12);
  EXPECT_LE(hi, 61.7118 + 1e-12);
}

TEST(Noise, HeadingIsUniform) {
  const auto offsets = simulate_offsets(200'000, NoiseModel::phone_grade(3, 0.0));
  std::array<int, 8> bins{};
  for (const auto& d : offsets) {
    double a = std::atan2(d.d_north, d.d_east);
    if (a < 0) a += 2 * std::numbers::pi;
    bins[std::min<std::size_t>(7, static_cast<std::size_t>(a / (std::numbers::pi / 4)))]++;
  }
  for (int b : bins) EXPECT_NEAR(b / 200'000.0, 0.125, 0.005);
}

TEST(Noise, TemporalCorrelationFollowsRho) {
  const auto lag1 = [](double rho) {
    const auto o = simulate_offsets(100'000, NoiseModel::phone_grade(5, rho));
    double mx = 0, my = 0;
    for (std::size_t i = 1; i < o.size(); ++i) {
      mx += o[i - 1].d_east;
      my += o[i].d_east;
    }
    const double n = static_cast<double>(o.size() - 1);
    mx /= n;
    my /= n;
    double cxy = 0, cxx = 0, cyy = 0;
    for (std::size_t i = 1; i < o.size(); ++i) {
      const double x = o[i - 1].d_east - mx, y = o[i].d_east - my;
      cxy += x * y;
      cxx += x * x;
      cyy += y * y;
    }
    return cxy / std::sqrt(cxx * cyy);
  };
  EXPECT_NEAR(lag1(0.0), 0.0, 0.02);
  EXPECT_GT(lag1(0.9), 0.6);
}

TEST(Noise, DegenerateClipDisplacesExactly) {
  NoiseModel m;
  m.clip_min = m.clip_max = 4.25;
  m.rho = 0.0;
  std::vector<geodesy::GeoPoint> truth;
  for (int i = 0; i < 50; ++i) truth.push_back({37.0 + 1e-4 * i, -122.0});
  const auto raw = simulate_gps_noise(truth, m, kZone10N);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_NEAR(geodesy::ground_distance(truth[i], raw[i], kZone10N), 4.25, 1e-6);
  }
}

TEST(Noise, SeedDeterminism) {
  const std::vector<geodesy::GeoPoint> truth(100, {37.7, -122.4});
  const auto a = simulate_gps_noise(truth, NoiseModel::phone_grade(9), kZone10N);
  const auto b = simulate_gps_noise(truth, NoiseModel::phone_grade(9), kZone10N);
  const auto c = simulate_gps_noise(truth, NoiseModel::phone_grade(10), kZone10N);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].lat, b[i].lat);
    EXPECT_EQ(a[i].lon, b[i].lon);
  }
  EXPECT_NE(a[0].lat, c[0].lat);
}

TEST(Noise, Errors) {
  EXPECT_EQ(code_of([] { simulate_gps_noise({}, NoiseModel::phone_grade(), kZone10N); }),
            ErrorCode::kEmptyInput);
  NoiseModel bad;
  bad.rho = 1.0;
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::kConfig);
  bad = NoiseModel{};
  bad.clip_min = 5.0;
  bad.clip_max = 1.0;
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { NoiseModel::calibrated(100.0, 1.0, 0.1, 50.0); }), ErrorCode::kConfig);
}

TEST(Noise, QuantileIsMonotoneWithClippedEnds) {
  const NoiseModel m = NoiseModel::phone_grade();
  EXPECT_DOUBLE_EQ(m.magnitude_quantile(0.0), m.clip_min);
  EXPECT_DOUBLE_EQ(m.magnitude_quantile(1.0), m.clip_max);
  double prev = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double q = m.magnitude_quantile(i / 1000.0);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

// ---------------------------------------------------------------- synthetic world

SyntheticWorldConfig small_world(CourseShape shape = CourseShape::kLoop) {
  SyntheticWorldConfig c;
  c.shape = shape;
  c.trajectory_length = 100.0;
  return c;
}

TEST(Synthetic, SampleCountAndSpacing) {
  const SyntheticWorld w = generate_synthetic_world(small_world());
  ASSERT_EQ(w.truth.size(), 201u);
  for (std::size_t i = 1; i < w.local.size(); ++i) {
    const double step = std::hypot(w.local[i].east - w.local[i - 1].east,
                                   w.local[i].north - w.local[i - 1].north);
    EXPECT_NEAR(step, 0.5, 1e-3);
    EXPECT_GT(w.timestamps[i], w.timestamps[i - 1]);
  }
  const double radius = w.config.course_size / (2 * std::numbers::pi);
  for (const auto& p : w.local) EXPECT_NEAR(std::hypot(p.east, p.north), radius, 1e-9);
}

TEST(Synthetic, LineStaysOnItsSegment) {
  SyntheticWorldConfig c = small_world(CourseShape::kLine);
  c.trajectory_length = 600.0;
  c.course_size = 100.0;
  c.line_heading_deg = 30.0;
  const SyntheticWorld w = generate_synthetic_world(c);
  const double h = 30.0 * std::numbers::pi / 180.0;
  for (const auto& p : w.local) {
    const double along = p.east * std::sin(h) + p.north * std::cos(h);
    const double cross = p.east * std::cos(h) - p.north * std::sin(h);
    EXPECT_LE(std::abs(along), 50.0 + 1e-9);
    EXPECT_NEAR(cross, 0.0, 1e-9);
  }
}

TEST(Synthetic, RenderingIsDeterministicAndInRange) {
  const SyntheticWorld a = generate_synthetic_world(small_world());
  const SyntheticWorld b = generate_synthetic_world(small_world());
  for (std::size_t i = 0; i < a.truth.size(); i += 17) {
    const GrayImage ia = a.image(i);
    EXPECT_EQ(ia, b.image(i));
    EXPECT_EQ(ia, a.render(a.truth[i]));
    const Tensor t = to_tensor(ia);
    for (double v : t.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Synthetic, PositionsTenMetresApartLookDifferent) {
  const Renderer r(SyntheticWorldConfig{});
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(-150.0, 150.0), ang(0.0, 2 * std::numbers::pi);
  double worst = 1e9;
  for (int i = 0; i < 1000; ++i) {
    const double e = pos(rng), n = pos(rng), a = ang(rng);
    const double d = normalized_l2_difference(
        r.render_local(e, n), r.render_local(e + 10.0 * std::cos(a), n + 10.0 * std::sin(a)));
    worst = std::min(worst, d);
  }
  EXPECT_GT(worst, 0.05);
}

TEST(Synthetic, NoCollisionsAtOneMetre) {
  const Renderer r(SyntheticWorldConfig{});
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> pos(-150.0, 150.0), ang(0.0, 2 * std::numbers::pi),
      dist(1.0, 30.0);
  int collisions = 0;
  for (int i = 0; i < 10'000; ++i) {
    const double e = pos(rng), n = pos(rng), a = ang(rng), s = dist(rng);
    if (r.render_local(e, n) == r.render_local(e + s * std::cos(a), n + s * std::sin(a))) {
      ++collisions;
    }
  }
  EXPECT_EQ(collisions, 0);
}

TEST(Synthetic, TextureSeedChangesTheWorld) {
  SyntheticWorldConfig a, b;
  b.texture_seed = a.texture_seed + 1;
  EXPECT_NE(Renderer(a).render_local(3.0, 4.0), Renderer(b).render_local(3.0, 4.0));
}

TEST(Synthetic, ConfigValidation) {
  auto bad = [](auto mutate) {
    SyntheticWorldConfig c;
    mutate(c);
    return code_of([&] { generate_synthetic_world(c); });
  };
  EXPECT_EQ(bad([](auto& c) { c.trajectory_length = 0.0; }), ErrorCode::kConfig);
  EXPECT_EQ(bad([](auto& c) { c.spacing = 0.0; }), ErrorCode::kConfig);
  EXPECT_EQ(bad([](auto& c) { c.image_size = 4; }), ErrorCode::kConfig);
  EXPECT_EQ(bad([](auto& c) { c.waves = 0; }), ErrorCode::kConfig);
  EXPECT_EQ(bad([](auto& c) { c.min_wavelength = 300.0; }), ErrorCode::kConfig);
  EXPECT_EQ(bad([](auto& c) { c.origin.lat = 89.0; }), ErrorCode::kOutOfBand);
  EXPECT_EQ(code_of([] { parse_course_shape("spiral"); }), ErrorCode::kConfig);
  EXPECT_EQ(parse_course_shape(to_string(CourseShape::kLine)), CourseShape::kLine);
}

TEST(Synthetic, NormalizedDifference) {
  GrayImage a{2, 1, {3, 4}}, b{2, 1, {0, 0}}, c{1, 1, {0}};
  EXPECT_DOUBLE_EQ(normalized_l2_difference(a, a), 0.0);
  EXPECT_DOUBLE_EQ(normalized_l2_difference(a, b), 1.0);
  EXPECT_DOUBLE_EQ(normalized_l2_difference(b, b), 0.0);
  EXPECT_EQ(code_of([&] { normalized_l2_difference(a, c); }), ErrorCode::kShape);
}

// ---------------------------------------------------------------- images

TEST(Image, PngRoundTrip) {
  TempDir tmp;
  GrayImage img{5, 3, {}};
  for (std::size_t i = 0; i < 15; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 17));
  write_png(tmp / "a.png", img);
  EXPECT_EQ(read_png(tmp / "a.png"), img);
  EXPECT_EQ(code_of([&] { read_png(tmp / "missing.png"); }), ErrorCode::kIo);
  std::ofstream(tmp / "junk.png") << "not a png";
  EXPECT_NE(code_of([&] { read_png(tmp / "junk.png"); }), ErrorCode::kShape);
}

TEST(Image, QuantizeRoundsAndClamps) {
  const Tensor t({1, 4}, {0.0, 1.0, 0.5, 1.7});
  const GrayImage g = quantize(t);
  EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{0, 255, 128, 255}));
  const Tensor back = to_tensor(g);
  EXPECT_EQ(back.shape(), (Shape{1, 1, 4}));
  EXPECT_DOUBLE_EQ(back[1], 1.0);
}

Tensor ramp(std::size_t c, std::size_t h, std::size_t w) {
  Tensor t({c, h, w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) t[(k * h + y) * w + x] = 0.3 * x - 0.7 * y + k;
  return t;
}

TEST(Image, CropResizeIdentityAndCrop) {
  const Tensor t = ramp(2, 6, 7);
  const Tensor same = crop_resize(t, 1, 2, 4, 4);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x)
        EXPECT_DOUBLE_EQ(same[(k * 4 + y) * 4 + x], t[(k * 6 + y + 1) * 7 + x + 2]);
}

TEST(Image, CropResizeHalvingAveragesBlocks) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({1, 8, 8});
  for (double& v : t.data()) v = u(rng);
  const Tensor half = crop_resize(t, 0, 0, 8, 4);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      const double avg = 0.25 * (t[(2 * y) * 8 + 2 * x] + t[(2 * y) * 8 + 2 * x + 1] +
                                 t[(2 * y + 1) * 8 + 2 * x] + t[(2 * y + 1) * 8 + 2 * x + 1]);
      EXPECT_NEAR(half[y * 4 + x], avg, 1e-15);
    }
  }
}

TEST(Image, CropResizeReproducesAffineInterior) {
  const Tensor t = ramp(1, 28, 28);
  const std::size_t size = 28, out = 32;
  const Tensor r = crop_resize(t, 0, 0, size, out);
  const double ratio = static_cast<double>(size) / out;
  for (std::size_t y = 1; y + 1 < out; ++y) {
    for (std::size_t x = 1; x + 1 < out; ++x) {
      const double sx = (x + 0.5) * ratio - 0.5, sy = (y + 0.5) * ratio - 0.5;
      EXPECT_NEAR(r[y * out + x], 0.3 * sx - 0.7 * sy, 1e-12);
    }
  }
}

TEST(Image, CropResizeRejectsOversizedCrop) {
  const Tensor t = ramp(1, 6, 6);
  EXPECT_EQ(code_of([&] { crop_resize(t, 2, 0, 5, 4); }), ErrorCode::kSize);
  EXPECT_EQ(code_of([&] { crop_resize(Tensor({6, 6}), 0, 0, 3, 3); }), ErrorCode::kShape);
}

// ---------------------------------------------------------------- manifest

Manifest sample_manifest(Mode mode) {
  Manifest m;
  m.zone = kZone10N;
  m.mode = mode;
  if (mode == Mode::kGcp) m.gcp = GeoPoint{37.77490000000001, -122.4194};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> jitter(-1e-3, 1e-3);
  for (int i = 0; i < 25; ++i) {
    Sample s;
    s.timestamp = 0.1 * i + 1.0 / 3.0;
    s.image_ref = "images/" + std::to_string(i) + ".png";
    s.truth = GeoPoint{37.7749 + jitter(rng), -122.4194 + jitter(rng)};
    if (mode == Mode::kGpsRelative || i % 3 == 0) {
      s.raw_fix = GeoPoint{37.7749 + jitter(rng), -122.4194 + jitter(rng)};
    }
    if (i == 7) s.truth.reset();
    m.samples.push_back(s);
  }
  return m;
}

void expect_same(const Manifest& a, const Manifest& b) {
  EXPECT_EQ(a.zone, b.zone);
  EXPECT_EQ(a.mode, b.mode);
  ASSERT_EQ(a.gcp.has_value(), b.gcp.has_value());
  if (a.gcp) {
    EXPECT_EQ(a.gcp->lat, b.gcp->lat);
    EXPECT_EQ(a.gcp->lon, b.gcp->lon);
  }
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const Sample &x = a.samples[i], &y = b.samples[i];
    EXPECT_EQ(x.timestamp, y.timestamp);
    EXPECT_EQ(x.image_ref, y.image_ref);
    for (auto [p, q] : {std::pair{&x.raw_fix, &y.raw_fix}, std::pair{&x.truth, &y.truth}}) {
      ASSERT_EQ(p->has_value(), q->has_value());
      if (*p) {
        EXPECT_EQ((*p)->lat, (*q)->lat);
        EXPECT_EQ((*p)->lon, (*q)->lon);
      }
    }
  }
}

TEST(Manifest, RoundTripIsExact) {
  TempDir tmp;
  for (Mode mode : {Mode::kGpsRelative, Mode::kGcp}) {
    const Manifest m = sample_manifest(mode);
    write_manifest(tmp / "m.csv", m);
    expect_same(m, load_manifest(tmp / "m.csv"));
  }
}

class ManifestErrors : public ::testing::Test {
 protected:
  std::string load_error(const std::string& text, ErrorCode expected = ErrorCode::kParse) {
    std::ofstream(tmp_ / "bad.csv") << text;
    std::string msg;
    try {
      load_manifest(tmp_ / "bad.csv");
      ADD_FAILURE() << "accepted:\n" << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), expected) << e.what();
      msg = e.what();
    }
    return msg;
  }
  TempDir tmp_;
};

constexpr const char* kHeader = "#version=1\n#zone=10N\n#mode=gps-relative\n";
constexpr const char* kCols = "timestamp,image_ref,raw_lat,raw_lon,true_lat,true_lon\n";

TEST_F(ManifestErrors, DecreasingTimestampNamesTheRow) {
  const std::string msg = load_error(std::string(kHeader) + kCols +
                                     "0,a.png,37.7,-122.4,37.7,-122.4\n"
                                     "2,b.png,37.7,-122.4,37.7,-122.4\n"
                                     "1,c.png,37.7,-122.4,37.7,-122.4\n");
  EXPECT_NE(msg.find("bad.csv:7"), std::string::npos) << msg;
}

TEST_F(ManifestErrors, GcpModeWithoutGcp) {
  load_error("#version=1\n#zone=10N\n#mode=gcp\n" + std::string(kCols) + "0,a.png,,,37.7,-122.4\n");
}

TEST_F(ManifestErrors, UnknownVersion) {
  const std::string msg = load_error("#version=2\n#zone=10N\n#mode=gcp\n" + std::string(kCols));
  EXPECT_NE(msg.find("bad.csv:1"), std::string::npos) << msg;
}

TEST_F(ManifestErrors, GpsRelativeRowWithoutRawFix) {
  const std::string msg =
      load_error(std::string(kHeader) + kCols + "0,a.png,37.7,-122.4,37.7,-122.4\n1,b.png,,,37.7,-122.4\n");
  EXPECT_NE(msg.find("bad.csv:6"), std::string::npos) << msg;
}

TEST_F(ManifestErrors, MalformedRows) {
  load_error(std::string(kHeader) + kCols + "0,a.png,37.7,-122.4,37.7\n");
  load_error(std::string(kHeader) + kCols + "zero,a.png,37.7,-122.4,37.7,-122.4\n");
  load_error(std::string(kHeader) + kCols + "0,a.png,37.7,,37.7,-122.4\n");
  load_error(std::string(kHeader) + kCols + "0,a.png,91,-122.4,37.7,-122.4\n");
  load_error("#version=1\n#zone=99N\n#mode=gcp\n" + std::string(kCols));
  load_error(std::string(kHeader) + "timestamp,image\n");
  load_error(std::string(kHeader));
  load_error("", ErrorCode::kParse);
}

TEST(Manifest, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { load_manifest("/nonexistent/manifest.csv"); }), ErrorCode::kIo);
}

// ---------------------------------------------------------------- targets

TEST(Targets, GpsRelativeAnchorsOnRawFix) {
  const Manifest m = sample_manifest(Mode::kGpsRelative);
  const auto s = make_targets(m.samples, m.mode, m.gcp, m.zone, false);
  for (const Sample& x : s) {
    EXPECT_EQ(x.anchor->lat, x.raw_fix->lat);
    ASSERT_EQ(x.target.has_value(), x.truth.has_value());
    if (!x.truth) continue;
    const GeoPoint back = geodesy::apply_delta(*x.anchor, *x.target, m.zone);
    EXPECT_LT(geodesy::ground_distance(back, *x.truth, m.zone), 1e-6);
  }
}

TEST(Targets, GcpAnchorsEverySampleOnTheGcp) {
  const Manifest m = sample_manifest(Mode::kGcp);
  const auto s = make_targets(m.samples, m.mode, m.gcp, m.zone, false);
  for (const Sample& x : s) {
    EXPECT_EQ(x.anchor->lat, m.gcp->lat);
    EXPECT_EQ(x.anchor->lon, m.gcp->lon);
    if (!x.truth) continue;
    const auto d = geodesy::delta_between(*m.gcp, *x.truth, m.zone);
    EXPECT_NEAR(x.target->d_east, d.d_east, 1e-6);
    EXPECT_NEAR(x.target->d_north, d.d_north, 1e-6);
  }
}

TEST(Targets, TruthEqualAnchorGivesZero) {
  Sample s;
  s.raw_fix = s.truth = GeoPoint{37.7, -122.4};
  const auto out = make_targets({s}, Mode::kGpsRelative, std::nullopt, kZone10N);
  EXPECT_EQ(out[0].target->d_east, 0.0);
  EXPECT_EQ(out[0].target->d_north, 0.0);
}

TEST(Targets, Errors) {
  const Manifest m = sample_manifest(Mode::kGpsRelative);
  EXPECT_EQ(code_of([&] { make_targets(m.samples, m.mode, m.gcp, m.zone, true); }),
            ErrorCode::kIncompleteSample);
  Sample no_raw;
  no_raw.truth = GeoPoint{37.7, -122.4};
  EXPECT_EQ(code_of([&] { make_targets({no_raw}, Mode::kGpsRelative, std::nullopt, kZone10N); }),
            ErrorCode::kIncompleteSample);
  EXPECT_EQ(code_of([&] { make_targets({no_raw}, Mode::kGcp, std::nullopt, kZone10N); }),
            ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_mode("relative"); }), ErrorCode::kConfig);
}

// ---------------------------------------------------------------- splits

TEST(Split, Examples) {
  EXPECT_EQ(split_sizes(10, {0.7, 0.15, 0.15}), (std::array<std::size_t, 3>{7, 1, 2}));
  EXPECT_EQ(split_sizes(9, {1.0 / 3, 1.0 / 3, 1.0 / 3}), (std::array<std::size_t, 3>{3, 3, 3}));
  EXPECT_EQ(split_sizes(2001, {0.7, 0.15, 0.15}), (std::array<std::size_t, 3>{1401, 300, 300}));
}

TEST(Split, EnumeratedProperties) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (std::size_t n = 3; n <= 300; ++n) {
    for (int trial = 0; trial < 5; ++trial) {
      double a = u(rng), b = u(rng), c = u(rng);
      const double t = a + b + c;
      const std::array<double, 3> f{a / t, b / t, c / t};
      const auto sizes = split_sizes(n, f);
      EXPECT_EQ(sizes[0] + sizes[1] + sizes[2], n);
      for (int k = 0; k < 3; ++k) {
        EXPECT_LE(std::abs(static_cast<double>(sizes[k]) - f[k] * n), 1.0 + 1e-9);
      }
      std::vector<int> items(n);
      std::iota(items.begin(), items.end(), 0);
      const auto s = split_trajectory(items, f);
      std::vector<int> joined = s.train;
      joined.insert(joined.end(), s.val.begin(), s.val.end());
      joined.insert(joined.end(), s.test.begin(), s.test.end());
      EXPECT_EQ(joined, items);
    }
  }
}

TEST(Split, Errors) {
  EXPECT_EQ(code_of([] { split_sizes(2, {0.7, 0.15, 0.15}); }), ErrorCode::kInsufficientData);
  EXPECT_EQ(code_of([] { split_sizes(10, {0.7, 0.2, 0.2}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { split_sizes(10, {1.0, 0.0, 0.0}); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { split_sizes(10, {1.2, -0.1, -0.1}); }), ErrorCode::kConfig);
}

// ---------------------------------------------------------------- geojson

TEST(GeoJson, LineStringsInLonLatOrder) {
  const std::vector<Track> tracks{{"truth", {{37.0, -122.0}, {37.1, -122.1}}},
                                  {"raw", {{37.2, -122.2}}}};
  const auto j = nlohmann::json::parse(tracks_to_geojson(tracks));
  EXPECT_EQ(j["type"], "FeatureCollection");
  ASSERT_EQ(j["features"].size(), 2u);
  const auto& f = j["features"][0];
  EXPECT_EQ(f["type"], "Feature");
  EXPECT_EQ(f["properties"]["role"], "truth");
  EXPECT_EQ(f["geometry"]["type"], "LineString");
  EXPECT_EQ(f["geometry"]["coordinates"][1][0].get<double>(), -122.1);
  EXPECT_EQ(f["geometry"]["coordinates"][1][1].get<double>(), 37.1);
  EXPECT_EQ(j["features"][1]["properties"]["role"], "raw");

  TempDir tmp;
  write_geojson(tmp / "t.geojson", tracks);
  std::ifstream is(tmp / "t.geojson");
  EXPECT_EQ(nlohmann::json::parse(is), j);
}

}  // namespace
}  // namespace geoloc::data
