#pragma once

// Procedural stand-in for a camera survey. A course is walked at constant
// spacing; the renderer keys its pattern to position in a local metric frame,
// so each image pins down where it was taken.
//
// Each of `waves` plane waves over the ground has phase
//   phi_k(p) = 2 pi <d_k, p> / lambda_k + psi_k
// and drives a quadrature pair of pixel gratings with amplitudes
// (1 + sin phi_k) / 2 and (1 + cos phi_k) / 2. Moving by s along d_k changes
// that amplitude pair by |sin(pi s / lambda_k)| wherever the move starts, so
// image differences depend on the offset between positions only. The first
// wave also sets overall brightness.

#include <cstdint>
#include <string>
#include <vector>

#include "geoloc/geodesy.hpp"
#include "geoloc/image.hpp"
#include "geoloc/tensor.hpp"

namespace geoloc::data {

enum class CourseShape {
  kLoop,  // circle walked for as many laps as the trajectory length needs
  kLine,  // straight segment walked back and forth
};

std::string to_string(CourseShape shape);
CourseShape parse_course_shape(const std::string& text);

struct SyntheticWorldConfig {
  CourseShape shape = CourseShape::kLoop;
  double trajectory_length = 1000.0;  // metres walked in total
  double spacing = 0.5;               // metres between consecutive frames
  double course_size = 250.0;         // loop circumference or line length, metres
  double line_heading_deg = 90.0;     // line direction, clockwise from north
  geodesy::GeoPoint origin{37.7749, -122.4194};  // course centre
  double frame_interval = 1.0;        // seconds between frames
  std::size_t image_size = 36;        // rendered side length, pixels
  std::uint64_t texture_seed = 7;
  double encoding_strength = 0.15;  // peak amplitude of each grating
  double brightness_strength = 0.2;
  std::size_t waves = 4;
  double min_wavelength = 25.0;  // metres
  double max_wavelength = 100.0;

  /// Throws kConfig on degenerate or inconsistent settings.
  void validate() const;
  std::size_t sample_count() const;
};

/// Deterministic position -> image map.
class Renderer {
 public:
  explicit Renderer(const SyntheticWorldConfig& config);

  /// Image at a local east/north offset (metres) from the course centre.
  GrayImage render_local(double east, double north) const;

  std::size_t size() const { return size_; }

 private:
  std::size_t size_;
  double strength_;
  double brightness_;
  std::vector<double> wave_east_;   // d_k / lambda_k components
  std::vector<double> wave_north_;
  std::vector<double> phase_;
  std::vector<Tensor> gratings_;  // 2 per wave, (size, size)
};

struct SyntheticWorld {
  SyntheticWorldConfig config;
  geodesy::UtmZone zone;
  geodesy::EastNorth centre;  // projected origin
  std::vector<double> timestamps;
  std::vector<geodesy::EastNorth> local;  // truth relative to centre, metres
  std::vector<geodesy::GeoPoint> truth;
  Renderer renderer;

  GrayImage image(std::size_t i) const;
  /// Renders any geographic position through the world's pinned zone.
  GrayImage render(const geodesy::GeoPoint& p) const;
};

SyntheticWorld generate_synthetic_world(const SyntheticWorldConfig& config);

/// ||a - b|| / max(||a||, ||b||) over pixel values.
double normalized_l2_difference(const GrayImage& a, const GrayImage& b);

}  // namespace geoloc::data
