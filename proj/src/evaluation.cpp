#include "geoloc/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "geoloc/error.hpp"

namespace geoloc::eval {
namespace {

constexpr const char* kCsvHeader = "name,mean,sd,min,max,lane_level_rate,count";

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (r.ec != std::errc()) r = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, r.ptr};
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& text, std::size_t line_no, const char* what) {
  T v{};
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    fail(ErrorCode::kParse, "table line " + std::to_string(line_no) + ": bad " + what + " '" +
                                text + "'");
  }
  return v;
}

}  // namespace

double population_sd(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "standard deviation of no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

ErrorStats summarize(std::span<const double> errors, double lane_threshold) {
  if (errors.empty()) fail(ErrorCode::kEmptyInput, "no errors to summarize");
  ErrorStats s;
  s.count = errors.size();
  s.min = *std::min_element(errors.begin(), errors.end());
  s.max = *std::max_element(errors.begin(), errors.end());
  double sum = 0.0;
  std::size_t lane = 0;
  for (double e : errors) {
    sum += e;
    if (e <= lane_threshold) ++lane;
  }
  s.mean = std::clamp(sum / static_cast<double>(s.count), s.min, s.max);
  s.sd = population_sd(errors);
  s.lane_level_rate = static_cast<double>(lane) / static_cast<double>(s.count);
  return s;
}

std::vector<double> point_errors(const Track& predicted, const Track& truth,
                                 const geodesy::UtmZone& zone) {
  if (predicted.size() != truth.size()) {
    fail(ErrorCode::kAlignment, "track has " + std::to_string(predicted.size()) +
                                    " points but truth has " + std::to_string(truth.size()));
  }
  if (truth.empty()) fail(ErrorCode::kEmptyInput, "empty track");
  std::vector<double> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out[i] = geodesy::ground_distance(predicted[i], truth[i], zone);
  }
  return out;
}

ErrorStats error_stats(const Track& predicted, const Track& truth, const geodesy::UtmZone& zone,
                       double lane_threshold) {
  return summarize(point_errors(predicted, truth, zone), lane_threshold);
}

Track moving_average_filter(const Track& track, std::size_t window, const geodesy::UtmZone& zone) {
  if (window == 0 || window % 2 == 0) {
    fail(ErrorCode::kConfig, "moving average window must be odd and positive, got " +
                                 std::to_string(window));
  }
  if (track.empty()) fail(ErrorCode::kEmptyInput, "cannot filter an empty track");
  if (window == 1) return track;

  const std::size_t n = track.size();
  std::vector<geodesy::EastNorth> en(n);
  for (std::size_t i = 0; i < n; ++i) en[i] = geodesy::project(track[i], zone);

  Track out(n);
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({half, i, n - 1 - i});
    double e = 0.0, no = 0.0;
    for (std::size_t j = i - h; j <= i + h; ++j) {
      e += en[j].east;
      no += en[j].north;
    }
    const double k = static_cast<double>(2 * h + 1);
    out[i] = h == 0 ? track[i] : geodesy::unproject({e / k, no / k}, zone);
  }
  return out;
}

std::vector<TableRow> compare_tracks(const std::vector<NamedTrack>& tracks, const Track& truth,
                                     const geodesy::UtmZone& zone, double lane_threshold) {
  std::vector<TableRow> rows;
  rows.reserve(tracks.size());
  for (const NamedTrack& t : tracks) {
    rows.push_back({t.name, error_stats(t.predicted, truth, zone, lane_threshold)});
  }
  return rows;
}

std::string format_table(const std::vector<TableRow>& rows) {
  std::size_t name_width = 5;
  for (const TableRow& r : rows) name_width = std::max(name_width, r.name.size());
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-*s %9s %9s %9s %9s %9s %7s\n", static_cast<int>(name_width),
                "track", "mean_m", "sd_m", "min_m", "max_m", "lane", "count");
  out += buf;
  for (const TableRow& r : rows) {
    const ErrorStats& s = r.stats;
    std::snprintf(buf, sizeof(buf), "%-*s %9.2f %9.2f %9.2f %9.2f %9.2f %7zu\n",
                  static_cast<int>(name_width), r.name.c_str(), s.mean, s.sd, s.min, s.max,
                  s.lane_level_rate, s.count);
    out += buf;
  }
  return out;
}

std::string table_to_csv(const std::vector<TableRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const TableRow& r : rows) {
    if (r.name.find_first_of(",\n") != std::string::npos) {
      fail(ErrorCode::kConfig, "track name '" + r.name + "' may not contain commas or newlines");
    }
    const ErrorStats& s = r.stats;
    out += r.name + ',' + shortest(s.mean) + ',' + shortest(s.sd) + ',' + shortest(s.min) + ',' +
           shortest(s.max) + ',' + shortest(s.lane_level_rate) + ',' + std::to_string(s.count) +
           '\n';
  }
  return out;
}

std::vector<TableRow> parse_table_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line) || line != kCsvHeader) {
    fail(ErrorCode::kParse, "table line 1: expected header '" + std::string(kCsvHeader) + "'");
  }
  ++line_no;
  std::vector<TableRow> rows;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 7) {
      fail(ErrorCode::kParse, "table line " + std::to_string(line_no) + ": expected 7 fields, got " +
                                  std::to_string(f.size()));
    }
    TableRow r{f[0], {}};
    r.stats.mean = parse_number<double>(f[1], line_no, "mean");
    r.stats.sd = parse_number<double>(f[2], line_no, "sd");
    r.stats.min = parse_number<double>(f[3], line_no, "min");
    r.stats.max = parse_number<double>(f[4], line_no, "max");
    r.stats.lane_level_rate = parse_number<double>(f[5], line_no, "lane_level_rate");
    r.stats.count = parse_number<std::size_t>(f[6], line_no, "count");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<LineOffset> line_offsets(const Track& track, const GeoPoint& a, const GeoPoint& b,
                                     const geodesy::UtmZone& zone) {
  const geodesy::EastNorth pa = geodesy::project(a, zone), pb = geodesy::project(b, zone);
  const double de = pb.east - pa.east, dn = pb.north - pa.north;
  const double len = std::hypot(de, dn);
  if (!(len > 0.0)) fail(ErrorCode::kConfig, "reference line endpoints coincide");
  const double ue = de / len, un = dn / len;
  std::vector<LineOffset> out;
  out.reserve(track.size());
  for (const GeoPoint& p : track) {
    const geodesy::EastNorth q = geodesy::project(p, zone);
    const double re = q.east - pa.east, rn = q.north - pa.north;
    out.push_back({re * ue + rn * un, ue * rn - un * re});
  }
  return out;
}

}  // namespace geoloc::eval
