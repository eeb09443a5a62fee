#pragma once

#include <optional>
#include <span>
#include <vector>

#include "photonstat/stream.hpp"
#include "photonstat/trace.hpp"

namespace photonstat {

struct FlidGrid {
  std::size_t intensity_bins = 256;  // rows
  std::size_t lifetime_bins = 256;   // columns
};

// Per-axis KDE bandwidths; unset axes use Silverman's rule.
struct FlidBandwidth {
  std::optional<double> intensity;  // counts/bin
  std::optional<double> lifetime;   // s
};

// Upper axis limits; the lower limits are always 0.
struct FlidRange {
  double intensity_max = 0.0;  // counts/bin
  double lifetime_max = 0.0;   // s

  friend bool operator==(const FlidRange&, const FlidRange&) = default;
};

// Density over (intensity, mean arrival time). Row r is intensity cell
// [r dI, (r+1) dI), column c is lifetime cell [c dt, (c+1) dt).
struct FlidMap {
  std::vector<double> intensity_axis;  // cell centres, counts/bin
  std::vector<double> lifetime_axis;   // cell centres, s
  FlidRange range;
  std::vector<double> density;         // row-major, rows x cols
  double bandwidth_intensity = 0.0;
  double bandwidth_lifetime = 0.0;
  std::size_t sample_count = 0;

  std::size_t rows() const noexcept { return intensity_axis.size(); }
  std::size_t cols() const noexcept { return lifetime_axis.size(); }
  double at(std::size_t r, std::size_t c) const { return density[r * cols() + c]; }
  double cell_area() const noexcept;
  // Sum of density * cell_area over the grid.
  double integral() const noexcept;

  friend bool operator==(const FlidMap&, const FlidMap&) = default;
};

// Gaussian product-kernel KDE of the (counts, mean arrival) pairs of every
// bin with a defined arrival time. Default range is
// [0, 1.1 max intensity] x [0, sync_period]. Throws MismatchedTraces and
// TooFewSamples (< 100 pairs).
FlidMap build_flid(const IntensityTrace& intensity, const LifetimeTrace& lifetime, double sync_period,
                   const FlidGrid& grid = {}, const FlidBandwidth& bandwidth = {},
                   std::optional<FlidRange> range = std::nullopt);

// Bins `stream` (default 10 ms) and builds its map.
FlidMap build_flid(const PhotonStream& stream, double bin_time = kDefaultBinTime, const FlidGrid& grid = {},
                   const FlidBandwidth& bandwidth = {}, std::optional<FlidRange> range = std::nullopt);

struct PowerStream {
  double power_ratio = 1.0;
  const PhotonStream* stream = nullptr;
};

// One map per stream on shared axes: intensity up to 1.1x the largest bin
// count of any stream, lifetime up to the longest sync period.
std::vector<FlidMap> flid_power_series(std::span<const PowerStream> series, double bin_time = kDefaultBinTime,
                                       const FlidGrid& grid = {}, const FlidBandwidth& bandwidth = {});

struct FlidMode {
  double intensity = 0.0;  // counts/bin
  double lifetime = 0.0;   // s
  double density = 0.0;
  double prominence = 0.0;  // relative to the global maximum
  std::size_t row = 0, col = 0;
};

// Local maxima (8-neighbourhood) that rise at least `min_prominence` times
// the global maximum above the saddle joining them to a higher peak.
// Sorted by density, highest first.
std::vector<FlidMode> find_modes(const FlidMap& map, double min_prominence = 0.01);

struct FlidMoments {
  double mean_intensity = 0.0;
  double mean_lifetime = 0.0;
  double var_intensity = 0.0;
  double var_lifetime = 0.0;
  double covariance = 0.0;
  // var_I / I_max^2 + var_t / t_max^2: second-moment spread in axis units.
  double spread = 0.0;
};

FlidMoments flid_moments(const FlidMap& map);

}  // namespace photonstat
