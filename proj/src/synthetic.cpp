#include "geoloc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "geoloc/error.hpp"

namespace geoloc::data {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Pixel-grating frequencies in cycles per image side. Distinct values keep
// the gratings close to orthogonal.
constexpr double kGratingFreq[] = {9, 11, 7, 10, 8, 12, 13, 6};

double grating_frequency(std::size_t j) {
  return j < std::size(kGratingFreq) ? kGratingFreq[j] : 5.0 + static_cast<double>(j);
}

}  // namespace

std::string to_string(CourseShape shape) { return shape == CourseShape::kLoop ? "loop" : "line"; }

CourseShape parse_course_shape(const std::string& text) {
  if (text == "loop") return CourseShape::kLoop;
  if (text == "line") return CourseShape::kLine;
  fail(ErrorCode::kConfig, "unknown course shape '" + text + "' (expected loop or line)");
}

void SyntheticWorldConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfig, "synthetic world: " + m); };
  if (!(trajectory_length > 0.0) || !std::isfinite(trajectory_length)) {
    bad("trajectory_length must be positive");
  }
  if (!(spacing > 0.0) || spacing > trajectory_length) {
    bad("spacing must be positive and no longer than the trajectory");
  }
  if (!(course_size > 0.0)) bad("course_size must be positive");
  if (!(frame_interval > 0.0)) bad("frame_interval must be positive");
  if (image_size < 8) bad("image_size must be at least 8");
  if (waves < 1) bad("waves must be at least 1");
  if (!(min_wavelength > 0.0 && max_wavelength >= min_wavelength)) {
    bad("wavelengths must satisfy 0 < min <= max");
  }
  if (!(encoding_strength > 0.0 && encoding_strength <= 0.5)) {
    bad("encoding_strength must be in (0, 0.5]");
  }
  if (!(brightness_strength >= 0.0 && brightness_strength <= 0.5)) {
    bad("brightness_strength must be in [0, 0.5]");
  }
  geodesy::validate(origin);
}

std::size_t SyntheticWorldConfig::sample_count() const {
  return static_cast<std::size_t>(std::floor(trajectory_length / spacing + 1e-9)) + 1;
}

Renderer::Renderer(const SyntheticWorldConfig& config)
    : size_(config.image_size),
      strength_(config.encoding_strength),
      brightness_(config.brightness_strength) {
  std::mt19937_64 rng(config.texture_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t m = config.waves;
  const double sector = std::numbers::pi / static_cast<double>(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double lambda =
        config.min_wavelength + (config.max_wavelength - config.min_wavelength) * unit(rng);
    const double dir = static_cast<double>(k) * sector + sector * unit(rng);
    wave_east_.push_back(std::cos(dir) / lambda);
    wave_north_.push_back(std::sin(dir) / lambda);
    phase_.push_back(kTwoPi * unit(rng));
  }
  const double s = static_cast<double>(size_);
  for (std::size_t j = 0; j < 2 * m; ++j) {
    const double angle = static_cast<double>(j) * std::numbers::pi / static_cast<double>(2 * m);
    const double f = grating_frequency(j);
    Tensor g({size_, size_});
    for (std::size_t r = 0; r < size_; ++r) {
      for (std::size_t c = 0; c < size_; ++c) {
        const double x = static_cast<double>(c) / s, y = static_cast<double>(r) / s;
        g[r * size_ + c] = std::cos(kTwoPi * f * (std::cos(angle) * x + std::sin(angle) * y));
      }
    }
    gratings_.push_back(std::move(g));
  }
}

GrayImage Renderer::render_local(double east, double north) const {
  Tensor img({size_, size_});
  for (std::size_t k = 0; k < phase_.size(); ++k) {
    const double phi = kTwoPi * (wave_east_[k] * east + wave_north_[k] * north) + phase_[k];
    if (k == 0) {
      for (double& v : img.data()) v = 0.5 + brightness_ * std::sin(phi);
    }
    const double a = strength_ * 0.5 * (1.0 + std::sin(phi));
    const double b = strength_ * 0.5 * (1.0 + std::cos(phi));
    const Tensor& ga = gratings_[2 * k];
    const Tensor& gb = gratings_[2 * k + 1];
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += a * ga[i] + b * gb[i];
  }
  return quantize(img);
}

GrayImage SyntheticWorld::image(std::size_t i) const {
  return renderer.render_local(local.at(i).east, local.at(i).north);
}

GrayImage SyntheticWorld::render(const geodesy::GeoPoint& p) const {
  const geodesy::EastNorth en = geodesy::project(p, zone);
  return renderer.render_local(en.east - centre.east, en.north - centre.north);
}

SyntheticWorld generate_synthetic_world(const SyntheticWorldConfig& config) {
  config.validate();
  SyntheticWorld w{config, geodesy::zone_for(config.origin), {}, {}, {}, {}, Renderer(config)};
  w.centre = geodesy::project(config.origin, w.zone);
  const std::size_t n = config.sample_count();
  const double heading = config.line_heading_deg * std::numbers::pi / 180.0;
  const double radius = config.course_size / kTwoPi;
  const double len = config.course_size;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) * config.spacing;
    geodesy::EastNorth p;
    if (config.shape == CourseShape::kLoop) {
      const double theta = s / radius;
      p = {radius * std::cos(theta), radius * std::sin(theta)};
    } else {
      const double phase = std::fmod(s, 2.0 * len);
      const double along = (phase < len ? phase : 2.0 * len - phase) - 0.5 * len;
      p = {along * std::sin(heading), along * std::cos(heading)};
    }
    w.local.push_back(p);
    w.truth.push_back(geodesy::unproject({w.centre.east + p.east, w.centre.north + p.north}, w.zone));
    w.timestamps.push_back(static_cast<double>(i) * config.frame_interval);
  }
  return w;
}

double normalized_l2_difference(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) {
    fail(ErrorCode::kShape, "normalized_l2_difference: size mismatch");
  }
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double x = a.pixels[i], y = b.pixels[i];
    diff += (x - y) * (x - y);
    na += x * x;
    nb += y * y;
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace geoloc::data
