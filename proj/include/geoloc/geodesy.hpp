#pragma once

// WGS84 <-> UTM conversion using the Krueger series to sixth order in the
// third flattening. Errors are sub-millimetre inside a zone and stay well
// below a millimetre a degree past the zone edge.

#include <optional>
#include <string>

namespace geoloc::geodesy {

inline constexpr double kMinLatitude = -80.0;
inline constexpr double kMaxLatitude = 84.0;
inline constexpr double kScaleFactor = 0.9996;
inline constexpr double kFalseEasting = 500000.0;
inline constexpr double kFalseNorthingSouth = 10000000.0;
/// Longitude overshoot past a pinned zone's edge before distortion is refused.
inline constexpr double kZoneOvershootDeg = 1.0;

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees
};

enum class Hemisphere { kNorth, kSouth };

struct UtmZone {
  int number = 31;
  Hemisphere hemisphere = Hemisphere::kNorth;

  friend bool operator==(const UtmZone&, const UtmZone&) = default;
};

struct UtmCoord {
  double easting = 0.0;
  double northing = 0.0;
  UtmZone zone;
};

/// East/north offset in metres within a pinned zone.
struct DeltaLocation {
  double d_east = 0.0;
  double d_north = 0.0;

  double norm() const;
  DeltaLocation operator-() const { return {-d_east, -d_north}; }
};

/// "10N" style zone text.
std::string to_string(const UtmZone& zone);
/// Inverse of to_string; nullopt for anything else.
std::optional<UtmZone> parse_zone(const std::string& text);

/// Wraps longitude into [-180, 180).
double normalize_longitude(double lon);
GeoPoint normalized(GeoPoint p);

/// Throws kOutOfBand unless lat is in [-80, 84] and both fields are finite.
void validate(const GeoPoint& p);

/// Standard zone for a point: 6-degree bands, hemisphere from the latitude sign.
UtmZone zone_for(const GeoPoint& p);
double central_meridian(int zone_number);

UtmCoord geo_to_utm(const GeoPoint& p, std::optional<UtmZone> pinned = std::nullopt);
GeoPoint utm_to_geo(const UtmCoord& u);

/// Componentwise UTM difference b - a in the pinned zone.
DeltaLocation delta_between(const GeoPoint& a, const GeoPoint& b, const UtmZone& zone);
GeoPoint apply_delta(const GeoPoint& a, const DeltaLocation& d, const UtmZone& zone);
double ground_distance(const GeoPoint& a, const GeoPoint& b, const UtmZone& zone);
/// Uses the zone of `a`.
double ground_distance(const GeoPoint& a, const GeoPoint& b);

// Pinned-zone projection without the band/range checks on the UTM side. Used for
// trajectory math where a point may sit just across a zone edge or the equator.
struct EastNorth {
  double east = 0.0;
  double north = 0.0;
};
EastNorth project(const GeoPoint& p, const UtmZone& zone);
GeoPoint unproject(const EastNorth& en, const UtmZone& zone);

}  // namespace geoloc::geodesy
