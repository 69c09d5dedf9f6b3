#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geoloc/geodesy.hpp"

namespace geoloc::data {

using geodesy::DeltaLocation;
using geodesy::GeoPoint;

enum class Mode {
  kGpsRelative,  // anchor = the frame's raw fix
  kGcp,          // anchor = one ground control point for every frame
};

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct Sample {
  double timestamp = 0.0;  // seconds
  std::string image_ref;   // path relative to the manifest, or a generated id
  std::optional<GeoPoint> raw_fix;
  std::optional<GeoPoint> truth;
  // Filled by make_targets.
  std::optional<GeoPoint> anchor;
  std::optional<DeltaLocation> target;  // truth - anchor, metres
};

struct Manifest {
  static constexpr int kVersion = 1;
  geodesy::UtmZone zone;
  Mode mode = Mode::kGpsRelative;
  std::optional<GeoPoint> gcp;
  std::vector<Sample> samples;
};

// CSV layout:
//   #version=1
//   #zone=10N
//   #mode=gps-relative | gcp
//   #gcp=<lat>,<lon>            (gcp mode only)
//   timestamp,image_ref,raw_lat,raw_lon,true_lat,true_lon
//   0,images/000000.png,37.77,-122.41,37.77,-122.41
// Absent fixes are empty cells. Numbers are written in shortest round-trip
// form, so load(write(m)) reproduces every double bit for bit.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// Throws kParse naming the line for unknown versions, malformed rows,
/// non-increasing timestamps and mode/field inconsistencies.
Manifest load_manifest(const std::filesystem::path& path);
/// Same checks as load_manifest, on an in-memory manifest.
void validate_manifest(const Manifest& manifest);

/// Fills anchor and target. Raw fixes anchor gps-relative samples; `gcp`
/// anchors every sample in gcp mode. With `require_truth`, a sample without
/// truth is a kIncompleteSample error.
std::vector<Sample> make_targets(std::vector<Sample> samples, Mode mode,
                                 const std::optional<GeoPoint>& gcp,
                                 const geodesy::UtmZone& zone, bool require_truth = true);

/// Segment sizes for n samples by largest-remainder rounding of n * fraction.
/// Remainder ties go to the later segment.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> val;
  std::vector<T> test;
};

template <typename T>
Split<T> split_trajectory(const std::vector<T>& items, const std::array<double, 3>& fractions) {
  const auto sizes = split_sizes(items.size(), fractions);
  const auto a = items.begin();
  const auto b = a + static_cast<std::ptrdiff_t>(sizes[0]);
  const auto c = b + static_cast<std::ptrdiff_t>(sizes[1]);
  return {{a, b}, {b, c}, {c, items.end()}};
}

struct Track {
  std::string role;  // e.g. "raw", "predicted", "truth"
  std::vector<GeoPoint> points;
};

/// FeatureCollection with one LineString feature per track, `role` property set.
std::string tracks_to_geojson(const std::vector<Track>& tracks);
void write_geojson(const std::filesystem::path& path, const std::vector<Track>& tracks);

}  // namespace geoloc::data
