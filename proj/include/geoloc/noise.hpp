#pragma once

// Phone-grade GPS error simulator.
//
// Error magnitudes follow a log-normal truncated to [clip_min, clip_max].
// Magnitude and heading are both driven by AR(1) latent Gaussians, so the
// marginals are exact while consecutive fixes stay correlated:
//   magnitude = F^-1(Phi(z_t)),  z_t = rho z_{t-1} + sqrt(1 - rho^2) e_t
//   heading   = atan2(v_t, u_t), (u, v) an AR(1) pair with the same rho
// F is the truncated log-normal CDF; atan2 of an isotropic Gaussian pair is
// uniform on the circle.

#include <cstdint>
#include <vector>

#include "geoloc/geodesy.hpp"

namespace geoloc::data {

struct NoiseModel {
  double mu = 0.0;     // log-space location
  double sigma = 1.0;  // log-space scale
  double clip_min = 0.37419;
  double clip_max = 61.7118;
  double rho = 0.9;
  std::uint64_t seed = 1;

  /// Moments of the truncated log-normal.
  double mean() const;
  double sd() const;
  /// Inverse CDF of the truncated magnitude distribution, u in [0, 1].
  double magnitude_quantile(double u) const;

  /// Throws kConfig on non-finite or out-of-range parameters.
  void validate() const;

  /// Solves for (mu, sigma) so the truncated distribution has the given mean
  /// and standard deviation. Throws kConfig if no solution is found.
  static NoiseModel calibrated(double mean, double sd, double clip_min, double clip_max,
                               double rho = 0.9, std::uint64_t seed = 1);
  /// 9.8772 m mean, 11.7547 m sd, range [0.37419, 61.7118] m.
  static NoiseModel phone_grade(std::uint64_t seed = 1, double rho = 0.9);
};

/// n consecutive error vectors in metres (east, north).
std::vector<geodesy::DeltaLocation> simulate_offsets(std::size_t n, const NoiseModel& model);

/// Displaces each truth point by the corresponding simulated error in the
/// pinned zone. Throws kEmptyInput for an empty track.
std::vector<geodesy::GeoPoint> simulate_gps_noise(const std::vector<geodesy::GeoPoint>& truth,
                                                  const NoiseModel& model,
                                                  const geodesy::UtmZone& zone);

}  // namespace geoloc::data
