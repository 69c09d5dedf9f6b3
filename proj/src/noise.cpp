#include "geoloc/noise.hpp"

#include <boost/math/distributions/normal.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "geoloc/error.hpp"

namespace geoloc::data {
namespace {

const boost::math::normal kStdNormal;

double phi(double x) { return boost::math::cdf(kStdNormal, x); }

/// k-th raw moment of the log-normal truncated to [a, b].
double truncated_moment(double mu, double sigma, double a, double b, int k) {
  const double la = std::log(a), lb = std::log(b);
  const double z = phi((lb - mu) / sigma) - phi((la - mu) / sigma);
  const double s2 = sigma * sigma;
  const double num = phi((lb - mu - k * s2) / sigma) - phi((la - mu - k * s2) / sigma);
  return std::exp(k * mu + 0.5 * k * k * s2) * num / z;
}

std::array<double, 2> moments(double mu, double sigma, double a, double b) {
  const double m1 = truncated_moment(mu, sigma, a, b, 1);
  const double m2 = truncated_moment(mu, sigma, a, b, 2);
  return {m1, std::sqrt(std::max(0.0, m2 - m1 * m1))};
}

}  // namespace

double NoiseModel::mean() const {
  if (clip_min == clip_max) return clip_min;
  return moments(mu, sigma, clip_min, clip_max)[0];
}

double NoiseModel::sd() const {
  if (clip_min == clip_max) return 0.0;
  return moments(mu, sigma, clip_min, clip_max)[1];
}

double NoiseModel::magnitude_quantile(double u) const {
  if (clip_min == clip_max) return clip_min;
  const double pa = phi((std::log(clip_min) - mu) / sigma);
  const double pb = phi((std::log(clip_max) - mu) / sigma);
  const double p = pa + std::clamp(u, 0.0, 1.0) * (pb - pa);
  if (p <= 0.0) return clip_min;
  if (p >= 1.0) return clip_max;
  const double x = std::exp(mu + sigma * boost::math::quantile(kStdNormal, p));
  return std::clamp(x, clip_min, clip_max);
}

void NoiseModel::validate() const {
  if (!std::isfinite(mu) || !(sigma > 0.0) || !std::isfinite(sigma)) {
    fail(ErrorCode::kConfig, "noise model needs finite mu and sigma > 0");
  }
  if (!(clip_min > 0.0) || !(clip_max >= clip_min) || !std::isfinite(clip_max)) {
    fail(ErrorCode::kConfig, "noise clip range must satisfy 0 < min <= max");
  }
  if (!(rho >= 0.0 && rho < 1.0)) fail(ErrorCode::kConfig, "noise rho must be in [0, 1)");
}

NoiseModel NoiseModel::calibrated(double mean, double sd, double clip_min, double clip_max,
                                  double rho, std::uint64_t seed) {
  if (!(mean > clip_min && mean < clip_max && sd > 0.0)) {
    fail(ErrorCode::kConfig, "calibration target mean must lie inside the clip range, sd > 0");
  }
  // Newton iteration in (mu, log sigma) from the untruncated moment match.
  double s2 = std::log1p(sd * sd / (mean * mean));
  std::array<double, 2> x = {std::log(mean) - 0.5 * s2, 0.5 * std::log(s2)};
  auto residual = [&](const std::array<double, 2>& p) {
    const auto m = moments(p[0], std::exp(p[1]), clip_min, clip_max);
    return std::array<double, 2>{m[0] - mean, m[1] - sd};
  };
  for (int iter = 0; iter < 100; ++iter) {
    const auto r = residual(x);
    if (std::abs(r[0]) < 1e-10 * mean && std::abs(r[1]) < 1e-10 * sd) {
      NoiseModel m{x[0], std::exp(x[1]), clip_min, clip_max, rho, seed};
      m.validate();
      return m;
    }
    constexpr double h = 1e-7;
    double j[2][2];
    for (int c = 0; c < 2; ++c) {
      auto xp = x;
      xp[c] += h;
      const auto rp = residual(xp);
      j[0][c] = (rp[0] - r[0]) / h;
      j[1][c] = (rp[1] - r[1]) / h;
    }
    const double det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if (!std::isfinite(det) || det == 0.0) break;
    double dx0 = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
    double dx1 = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
    const double step = std::max(std::abs(dx0), std::abs(dx1));
    if (step > 0.5) {
      dx0 *= 0.5 / step;
      dx1 *= 0.5 / step;
    }
    x[0] -= dx0;
    x[1] -= dx1;
  }
  fail(ErrorCode::kConfig, "could not fit a truncated log-normal to mean " +
                               std::to_string(mean) + ", sd " + std::to_string(sd));
}

NoiseModel NoiseModel::phone_grade(std::uint64_t seed, double rho) {
  return calibrated(9.8772, 11.7547, 0.37419, 61.7118, rho, seed);
}

std::vector<geodesy::DeltaLocation> simulate_offsets(std::size_t n, const NoiseModel& model) {
  model.validate();
  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> normal;
  const double rho = model.rho;
  const double innovation = std::sqrt(1.0 - rho * rho);
  double z = 0.0, u = 0.0, v = 0.0;
  std::vector<geodesy::DeltaLocation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ez = normal(rng), eu = normal(rng), ev = normal(rng);
    if (i == 0) {
      z = ez;
      u = eu;
      v = ev;
    } else {
      z = rho * z + innovation * ez;
      u = rho * u + innovation * eu;
      v = rho * v + innovation * ev;
    }
    const double magnitude = model.magnitude_quantile(phi(z));
    const double heading = std::atan2(v, u);
    out.push_back({magnitude * std::cos(heading), magnitude * std::sin(heading)});
  }
  return out;
}

std::vector<geodesy::GeoPoint> simulate_gps_noise(const std::vector<geodesy::GeoPoint>& truth,
                                                  const NoiseModel& model,
                                                  const geodesy::UtmZone& zone) {
  if (truth.empty()) fail(ErrorCode::kEmptyInput, "cannot add noise to an empty track");
  const auto offsets = simulate_offsets(truth.size(), model);
  std::vector<geodesy::GeoPoint> out;
  out.reserve(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const geodesy::EastNorth en = geodesy::project(truth[i], zone);
    out.push_back(
        geodesy::unproject({en.east + offsets[i].d_east, en.north + offsets[i].d_north}, zone));
  }
  return out;
}

}  // namespace geoloc::data
