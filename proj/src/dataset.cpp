#include "geoloc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "geoloc/error.hpp"

namespace geoloc::data {
namespace {

constexpr const char* kColumns = "timestamp,image_ref,raw_lat,raw_lon,true_lat,true_lon";

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (r.ec != std::errc()) r = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, r.ptr};
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

[[noreturn]] void parse_error(const std::filesystem::path& path, std::size_t line,
                              const std::string& msg) {
  fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " + msg);
}

void write_point(std::ostream& os, const std::optional<GeoPoint>& p) {
  if (p) {
    os << format_double(p->lat) << ',' << format_double(p->lon);
  } else {
    os << ',';
  }
}

/// Row checks shared by load and validate. `where` names the row in messages.
void check_row(const Manifest& m, std::size_t i, const std::function<std::string()>& where) {
  const Sample& s = m.samples[i];
  if (m.mode == Mode::kGpsRelative && !s.raw_fix) {
    fail(ErrorCode::kParse, where() + ": gps-relative manifest row lacks a raw fix");
  }
  if (i > 0 && !(s.timestamp > m.samples[i - 1].timestamp)) {
    fail(ErrorCode::kParse, where() + ": timestamp " + format_double(s.timestamp) +
                                " does not increase");
  }
  for (const auto* p : {&s.raw_fix, &s.truth}) {
    if (*p) {
      try {
        geodesy::validate(**p);
      } catch (const Error& e) {
        fail(ErrorCode::kParse, where() + ": " + e.what());
      }
    }
  }
}

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::kGcp ? "gcp" : "gps-relative"; }

Mode parse_mode(const std::string& text) {
  if (text == "gps-relative") return Mode::kGpsRelative;
  if (text == "gcp") return Mode::kGcp;
  fail(ErrorCode::kConfig, "unknown mode '" + text + "' (expected gps-relative or gcp)");
}

void validate_manifest(const Manifest& m) {
  if (m.mode == Mode::kGcp && !m.gcp) fail(ErrorCode::kParse, "gcp-mode manifest without a gcp");
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    check_row(m, i, [i] { return "sample " + std::to_string(i); });
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  validate_manifest(m);
  for (const Sample& s : m.samples) {
    if (s.image_ref.find_first_of(",\n\r") != std::string::npos) {
      fail(ErrorCode::kConfig, "image_ref '" + s.image_ref + "' contains a comma or newline");
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << "#version=" << Manifest::kVersion << '\n';
  os << "#zone=" << geodesy::to_string(m.zone) << '\n';
  os << "#mode=" << to_string(m.mode) << '\n';
  if (m.gcp) os << "#gcp=" << format_double(m.gcp->lat) << ',' << format_double(m.gcp->lon) << '\n';
  os << kColumns << '\n';
  for (const Sample& s : m.samples) {
    os << format_double(s.timestamp) << ',' << s.image_ref << ',';
    write_point(os, s.raw_fix);
    os << ',';
    write_point(os, s.truth);
    os << '\n';
  }
  if (!os) fail(ErrorCode::kIo, "failed writing " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kIo, "cannot open manifest " + path.string());
  Manifest m;
  bool have_version = false, have_zone = false, have_mode = false, have_columns = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (have_columns) parse_error(path, lineno, "header line after the column row");
      const auto eq = line.find('=');
      if (eq == std::string::npos) parse_error(path, lineno, "header line without '='");
      const std::string key = line.substr(1, eq - 1), value = line.substr(eq + 1);
      if (key == "version") {
        if (value != std::to_string(Manifest::kVersion)) {
          parse_error(path, lineno, "unsupported manifest version '" + value + "'");
        }
        have_version = true;
      } else if (key == "zone") {
        const auto z = geodesy::parse_zone(value);
        if (!z) parse_error(path, lineno, "bad zone '" + value + "'");
        m.zone = *z;
        have_zone = true;
      } else if (key == "mode") {
        if (value != "gps-relative" && value != "gcp") {
          parse_error(path, lineno, "bad mode '" + value + "'");
        }
        m.mode = parse_mode(value);
        have_mode = true;
      } else if (key == "gcp") {
        const auto cells = split_csv(value);
        const auto lat = cells.size() == 2 ? parse_double(cells[0]) : std::nullopt;
        const auto lon = cells.size() == 2 ? parse_double(cells[1]) : std::nullopt;
        if (!lat || !lon) parse_error(path, lineno, "bad gcp '" + value + "'");
        m.gcp = GeoPoint{*lat, *lon};
      } else {
        parse_error(path, lineno, "unknown header key '" + key + "'");
      }
      continue;
    }
    if (!have_columns) {
      if (line != kColumns) parse_error(path, lineno, std::string("expected columns ") + kColumns);
      if (!have_version || !have_zone || !have_mode) {
        parse_error(path, lineno, "header needs version, zone and mode");
      }
      if (m.mode == Mode::kGcp && !m.gcp) parse_error(path, lineno, "gcp-mode manifest lacks #gcp");
      have_columns = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 6) {
      parse_error(path, lineno, "expected 6 fields, found " + std::to_string(cells.size()));
    }
    Sample s;
    const auto ts = parse_double(cells[0]);
    if (!ts) parse_error(path, lineno, "bad timestamp '" + cells[0] + "'");
    s.timestamp = *ts;
    s.image_ref = cells[1];
    auto read_point = [&](std::size_t c, const char* what) -> std::optional<GeoPoint> {
      if (cells[c].empty() && cells[c + 1].empty()) return std::nullopt;
      const auto lat = parse_double(cells[c]);
      const auto lon = parse_double(cells[c + 1]);
      if (!lat || !lon) parse_error(path, lineno, std::string("bad ") + what + " coordinates");
      return GeoPoint{*lat, *lon};
    };
    s.raw_fix = read_point(2, "raw");
    s.truth = read_point(4, "truth");
    m.samples.push_back(std::move(s));
    check_row(m, m.samples.size() - 1,
              [&] { return path.string() + ":" + std::to_string(lineno); });
  }
  if (!have_columns) fail(ErrorCode::kParse, path.string() + ": missing header or column row");
  return m;
}

std::vector<Sample> make_targets(std::vector<Sample> samples, Mode mode,
                                 const std::optional<GeoPoint>& gcp,
                                 const geodesy::UtmZone& zone, bool require_truth) {
  if (mode == Mode::kGcp && !gcp) fail(ErrorCode::kConfig, "gcp mode needs a ground control point");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Sample& s = samples[i];
    if (mode == Mode::kGcp) {
      s.anchor = gcp;
    } else if (s.raw_fix) {
      s.anchor = s.raw_fix;
    } else {
      fail(ErrorCode::kIncompleteSample,
           "sample " + std::to_string(i) + " has no raw fix to anchor on");
    }
    if (s.truth) {
      s.target = geodesy::delta_between(*s.anchor, *s.truth, zone);
    } else if (require_truth) {
      fail(ErrorCode::kIncompleteSample, "sample " + std::to_string(i) + " has no truth");
    } else {
      s.target.reset();
    }
  }
  return samples;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& f) {
  if (n < 3) {
    fail(ErrorCode::kInsufficientData,
         "need at least 3 samples to split, got " + std::to_string(n));
  }
  for (double v : f) {
    if (!(v > 0.0)) fail(ErrorCode::kConfig, "split fractions must be positive");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
    fail(ErrorCode::kConfig, "split fractions must sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * f[i];
    sizes[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    rem[i] = quota - static_cast<double>(sizes[i]);
    used += sizes[i];
  }
  std::array<std::size_t, 3> order{2, 1, 0};
  // Remainders within 1e-9 count as equal, the later segment winning.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + 1e-9; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++sizes[order[k]];
  return sizes;
}

std::string tracks_to_geojson(const std::vector<Track>& tracks) {
  nlohmann::json features = nlohmann::json::array();
  for (const Track& t : tracks) {
    nlohmann::json coords = nlohmann::json::array();
    for (const GeoPoint& p : t.points) coords.push_back({p.lon, p.lat});
    features.push_back({{"type", "Feature"},
                        {"properties", {{"role", t.role}}},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
  }
  return nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump(2) + "\n";
}

void write_geojson(const std::filesystem::path& path, const std::vector<Track>& tracks) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
  os << tracks_to_geojson(tracks);
  if (!os) fail(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace geoloc::data
