#include "geoloc/geodesy.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "geoloc/error.hpp"

namespace geoloc::geodesy {
namespace {

constexpr double kA = 6378137.0;
constexpr double kF = 1.0 / 298.257223563;
constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Series {
  double e;          // first eccentricity
  double e2;         // e^2
  double rectifying; // A, radius of the rectifying sphere
  std::array<double, 6> alpha;
  std::array<double, 6> beta;
};

Series make_series() {
  const double n = kF / (2.0 - kF);
  const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
  Series s{};
  s.e2 = kF * (2.0 - kF);
  s.e = std::sqrt(s.e2);
  s.rectifying = kA / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
  s.alpha = {
      n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
      13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
      61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
      49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
      34729 * n5 / 80640 - 3418889 * n6 / 1995840,
      212378941 * n6 / 319334400,
  };
  s.beta = {
      n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
      n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
      17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
      4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
      4583 * n5 / 161280 - 108847 * n6 / 3991680,
      20648693 * n6 / 638668800,
  };
  return s;
}

const Series& series() {
  static const Series s = make_series();
  return s;
}

// tan of the conformal latitude from tan of the geodetic latitude.
double conformal_tan(double tau, const Series& s) {
  const double sigma = std::sinh(s.e * std::atanh(s.e * tau / std::hypot(1.0, tau)));
  return tau * std::hypot(1.0, sigma) - sigma * std::hypot(1.0, tau);
}

// Newton inversion of conformal_tan.
double geodetic_tan(double tau_prime, const Series& s) {
  double tau = tau_prime;
  for (int it = 0; it < 20; ++it) {
    const double tp = conformal_tan(tau, s);
    const double slope = (1.0 - s.e2) * std::hypot(1.0, tp) * std::hypot(1.0, tau) /
                         (1.0 + (1.0 - s.e2) * tau * tau);
    const double step = (tau_prime - tp) / slope;
    tau += step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(tau))) break;
  }
  return tau;
}

double false_northing(const UtmZone& zone) {
  return zone.hemisphere == Hemisphere::kSouth ? kFalseNorthingSouth : 0.0;
}

void check_zone_number(int number) {
  if (number < 1 || number > 60) {
    fail(ErrorCode::kDomain, "UTM zone " + std::to_string(number) + " outside 1..60");
  }
}

void check_within_zone(const GeoPoint& p, const UtmZone& zone) {
  const double dlon = normalize_longitude(p.lon - central_meridian(zone.number));
  if (std::abs(dlon) > 3.0 + kZoneOvershootDeg) {
    std::ostringstream os;
    os << "point (" << p.lat << ", " << p.lon << ") is " << std::abs(dlon)
       << " deg from the central meridian of zone " << zone.number;
    fail(ErrorCode::kProjectionDistortion, os.str());
  }
}

}  // namespace

double DeltaLocation::norm() const { return std::hypot(d_east, d_north); }

double normalize_longitude(double lon) {
  double r = std::fmod(lon + 180.0, 360.0);
  if (r < 0.0) r += 360.0;
  r -= 180.0;
  return r >= 180.0 ? -180.0 : r;
}

GeoPoint normalized(GeoPoint p) {
  p.lon = normalize_longitude(p.lon);
  return p;
}

void validate(const GeoPoint& p) {
  if (!std::isfinite(p.lat) || !std::isfinite(p.lon) || p.lat < kMinLatitude ||
      p.lat > kMaxLatitude) {
    std::ostringstream os;
    os << "latitude " << p.lat << " outside UTM band [" << kMinLatitude << ", " << kMaxLatitude
       << "]";
    fail(ErrorCode::kOutOfBand, os.str());
  }
}

UtmZone zone_for(const GeoPoint& p) {
  const double lon = normalize_longitude(p.lon);
  int number = static_cast<int>(std::floor((lon + 180.0) / 6.0)) + 1;
  number = std::clamp(number, 1, 60);
  return {number, p.lat < 0.0 ? Hemisphere::kSouth : Hemisphere::kNorth};
}

double central_meridian(int zone_number) { return -183.0 + 6.0 * zone_number; }

EastNorth project(const GeoPoint& p, const UtmZone& zone) {
  const Series& s = series();
  const double phi = p.lat * kDegToRad;
  const double lam = normalize_longitude(p.lon - central_meridian(zone.number)) * kDegToRad;

  const double tau = std::tan(phi);
  const double tp = conformal_tan(tau, s);
  const double cos_lam = std::cos(lam);
  const double xi_p = std::atan2(tp, cos_lam);
  const double eta_p = std::asinh(std::sin(lam) / std::hypot(tp, cos_lam));

  double xi = xi_p, eta = eta_p;
  for (int j = 1; j <= 6; ++j) {
    const double a = s.alpha[j - 1];
    xi += a * std::sin(2 * j * xi_p) * std::cosh(2 * j * eta_p);
    eta += a * std::cos(2 * j * xi_p) * std::sinh(2 * j * eta_p);
  }
  return {kFalseEasting + kScaleFactor * s.rectifying * eta,
          false_northing(zone) + kScaleFactor * s.rectifying * xi};
}

GeoPoint unproject(const EastNorth& en, const UtmZone& zone) {
  const Series& s = series();
  const double xi = (en.north - false_northing(zone)) / (kScaleFactor * s.rectifying);
  const double eta = (en.east - kFalseEasting) / (kScaleFactor * s.rectifying);

  double xi_p = xi, eta_p = eta;
  for (int j = 1; j <= 6; ++j) {
    const double b = s.beta[j - 1];
    xi_p -= b * std::sin(2 * j * xi) * std::cosh(2 * j * eta);
    eta_p -= b * std::cos(2 * j * xi) * std::sinh(2 * j * eta);
  }
  const double sinh_eta = std::sinh(eta_p);
  const double cos_xi = std::cos(xi_p);
  const double tp = std::sin(xi_p) / std::hypot(sinh_eta, cos_xi);
  const double tau = geodetic_tan(tp, s);
  const double lam = std::atan2(sinh_eta, cos_xi);
  return {std::atan(tau) / kDegToRad,
          normalize_longitude(central_meridian(zone.number) + lam / kDegToRad)};
}

UtmCoord geo_to_utm(const GeoPoint& p, std::optional<UtmZone> pinned) {
  validate(p);
  const UtmZone zone = pinned.value_or(zone_for(p));
  check_zone_number(zone.number);
  if (pinned) check_within_zone(p, zone);
  const EastNorth en = project(p, zone);
  return {en.east, en.north, zone};
}

GeoPoint utm_to_geo(const UtmCoord& u) {
  check_zone_number(u.zone.number);
  if (!std::isfinite(u.easting) || !std::isfinite(u.northing) || u.easting <= 100000.0 ||
      u.easting >= 900000.0 || u.northing < 0.0 || u.northing >= 10000000.0) {
    std::ostringstream os;
    os << "UTM coordinate (" << u.easting << ", " << u.northing
       << ") outside easting (100000, 900000) / northing [0, 10000000)";
    fail(ErrorCode::kDomain, os.str());
  }
  const GeoPoint g = unproject({u.easting, u.northing}, u.zone);
  validate(g);
  return g;
}

DeltaLocation delta_between(const GeoPoint& a, const GeoPoint& b, const UtmZone& zone) {
  validate(a);
  validate(b);
  check_within_zone(a, zone);
  check_within_zone(b, zone);
  const EastNorth pa = project(a, zone);
  const EastNorth pb = project(b, zone);
  return {pb.east - pa.east, pb.north - pa.north};
}

GeoPoint apply_delta(const GeoPoint& a, const DeltaLocation& d, const UtmZone& zone) {
  validate(a);
  check_within_zone(a, zone);
  if (!std::isfinite(d.d_east) || !std::isfinite(d.d_north)) {
    fail(ErrorCode::kDomain, "non-finite delta location");
  }
  const EastNorth pa = project(a, zone);
  const GeoPoint out = unproject({pa.east + d.d_east, pa.north + d.d_north}, zone);
  validate(out);
  return out;
}

double ground_distance(const GeoPoint& a, const GeoPoint& b, const UtmZone& zone) {
  return delta_between(a, b, zone).norm();
}

double ground_distance(const GeoPoint& a, const GeoPoint& b) {
  validate(a);
  return ground_distance(a, b, zone_for(a));
}

std::string to_string(const UtmZone& zone) {
  return std::to_string(zone.number) + (zone.hemisphere == Hemisphere::kNorth ? "N" : "S");
}

std::optional<UtmZone> parse_zone(const std::string& text) {
  if (text.size() < 2) return std::nullopt;
  const char h = text.back();
  int number = 0;
  const char* end = text.data() + text.size() - 1;
  const auto r = std::from_chars(text.data(), end, number);
  if (r.ec != std::errc() || r.ptr != end) return std::nullopt;
  if (number < 1 || number > 60 || (h != 'N' && h != 'S')) return std::nullopt;
  return UtmZone{number, h == 'N' ? Hemisphere::kNorth : Hemisphere::kSouth};
}

}  // namespace geoloc::geodesy
