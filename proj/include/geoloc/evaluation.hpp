#pragma once

#include <span>
#include <string>
#include <vector>

#include "geoloc/geodesy.hpp"

namespace geoloc::eval {

using geodesy::GeoPoint;
using Track = std::vector<GeoPoint>;

inline constexpr double kLaneWidth = 3.7;  // metres

struct ErrorStats {
  double mean = 0.0;  // metres
  double sd = 0.0;    // population standard deviation, metres
  double min = 0.0;
  double max = 0.0;
  double lane_level_rate = 0.0;  // fraction of errors <= threshold
  std::size_t count = 0;

  friend bool operator==(const ErrorStats&, const ErrorStats&) = default;
};

/// Aggregates per-point errors. Throws kEmptyInput for no errors.
ErrorStats summarize(std::span<const double> errors, double lane_threshold = kLaneWidth);

/// Per-point ground distance in the pinned zone, aligned by index. Throws
/// kAlignment on a length mismatch and kEmptyInput for empty tracks.
std::vector<double> point_errors(const Track& predicted, const Track& truth,
                                 const geodesy::UtmZone& zone);

ErrorStats error_stats(const Track& predicted, const Track& truth, const geodesy::UtmZone& zone,
                       double lane_threshold = kLaneWidth);

/// Centred moving average of projected coordinates; windows shrink
/// symmetrically near the ends so every output stays centred. Throws kConfig
/// unless window is odd and positive, kEmptyInput for an empty track.
Track moving_average_filter(const Track& track, std::size_t window, const geodesy::UtmZone& zone);

struct NamedTrack {
  std::string name;
  Track predicted;
};

struct TableRow {
  std::string name;
  ErrorStats stats;

  friend bool operator==(const TableRow&, const TableRow&) = default;
};

/// One row per track, in the given order.
std::vector<TableRow> compare_tracks(const std::vector<NamedTrack>& tracks, const Track& truth,
                                     const geodesy::UtmZone& zone,
                                     double lane_threshold = kLaneWidth);

/// Fixed-width text, metres to 2 decimals.
std::string format_table(const std::vector<TableRow>& rows);

/// Header name,mean,sd,min,max,lane_level_rate,count; shortest round-trip numbers.
std::string table_to_csv(const std::vector<TableRow>& rows);
/// Inverse of table_to_csv. Throws kParse naming the line on malformed input.
std::vector<TableRow> parse_table_csv(const std::string& text);

/// Position of each point relative to the directed line a -> b, metres in
/// the pinned zone: `along` from a in the direction of b, `cross` positive to
/// the left. Throws kConfig if a and b coincide.
struct LineOffset {
  double along = 0.0;
  double cross = 0.0;
};
std::vector<LineOffset> line_offsets(const Track& track, const GeoPoint& a, const GeoPoint& b,
                                     const geodesy::UtmZone& zone);

/// Population standard deviation. Throws kEmptyInput for no values.
double population_sd(std::span<const double> values);

}  // namespace geoloc::eval
