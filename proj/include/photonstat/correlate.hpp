#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "photonstat/fit.hpp"
#include "photonstat/stream.hpp"

namespace photonstat {

enum class CorrelationMode {
  pulsed,      // signed delays t_B - t_A, linear bins symmetric about zero
  long_delay,  // |t_B - t_A|, logarithmic bins
};

// Coincidence counts M(tau) between channel A (start) and B (stop).
struct CorrelationHistogram {
  CorrelationMode mode = CorrelationMode::pulsed;
  // Bin edges on the femtosecond clock; bin i is [edges_fs[i], edges_fs[i+1]).
  std::vector<std::int64_t> edges_fs;
  std::vector<std::uint64_t> counts;
  // Expected counts per bin for an uncorrelated process: g2 = counts / normalization.
  std::vector<double> normalization;
  std::uint64_t total_starts = 0;
  std::uint64_t total_stops = 0;
  double span = 0.0;         // acquisition time the pairs were drawn from (s)
  double sync_period = 0.0;  // s

  std::size_t bins() const noexcept { return counts.size(); }
  std::vector<double> bin_edges() const;  // seconds
  std::vector<double> centers() const;    // seconds
  std::vector<double> g2() const;         // NaN where normalization is 0
};

// Pulsed HBT histogram over +-span_periods sync periods. Bins have width
// `bin_width` with one bin centred on zero delay. Normalized so that the
// mean side-peak area equals 1 (g2 summed over a peak gives its
// normalized area).
CorrelationHistogram correlate_pulsed(const PhotonStream& stream, double bin_width, double span_periods = 10.0);

// Exhaustive O(N^2) pair enumeration into arbitrary edges (seconds).
// `mode` selects signed (pulsed) or absolute (long_delay) delays.
// Refuses streams with more than 1e5 records.
CorrelationHistogram correlate_brute_force(const PhotonStream& stream, std::span<const double> bin_edges,
                                           CorrelationMode mode = CorrelationMode::pulsed);
CorrelationHistogram correlate_brute_force_fs(const PhotonStream& stream, std::span<const std::int64_t> edges_fs,
                                              CorrelationMode mode);

inline constexpr std::size_t kBruteForceLimit = 100000;

struct PurityOptions {
  // Emitter lifetime used to size the peak integration window
  // (+-5 max(lifetime, bin_width)). Estimated from the side peaks if unset.
  std::optional<double> lifetime;
  // Apply the background correction bin by bin instead of to peak areas.
  bool per_bin = false;
};

struct PurityResult {
  double g2_zero_raw = 0.0;
  double g2_zero_corrected = 0.0;
  double background_level = 0.0;  // M(tau_b): mean plateau counts per bin
  double central_peak_area = 0.0;
  double mean_side_peak_area = 0.0;
  double corrected_central_area = 0.0;
  double corrected_mean_side_area = 0.0;
  double uncertainty = 0.0;      // 1 sigma of g2_zero_corrected
  double raw_uncertainty = 0.0;  // 1 sigma of g2_zero_raw
  // Comparison value: plateau subtracted linearly from every peak area.
  double g2_zero_linear_subtraction = 0.0;
  double peak_half_width = 0.0;  // s
  std::size_t side_peaks = 0;
  std::size_t plateau_gaps = 0;
};

// Background-corrected coincidence count at one delay given the plateau
// level M(tau_b): M + M_b - 2 sqrt(M M_b), clamped to 0 when M < M_b.
double corrected_coincidences(double counts, double background) noexcept;

// Peak-area purity analysis of a pulsed histogram with inter-peak plateau
// background correction.
PurityResult subtract_background(const CorrelationHistogram& hist, const PurityOptions& options = {});

struct LongDelayOptions {
  double tau_min = 10e-9;   // s
  double tau_max = 1.0;     // s
  int bins_per_decade = 10;
  // Snap edges above half a sync period to (k + 1/2) T so every bin
  // holds whole excitation peaks.
  bool align_to_sync = true;
  // Minimum bin width, in coarse clock units, before a bin is moved to a
  // coarser cascade level. Sets the coarsening error (about 2/value).
  std::int64_t min_units_per_bin = 1024;
  // Coarsen a bin only when its cascade unit reaches the mean photon
  // spacing. Finer units merge no events, so they would add error without
  // saving work; those bins are counted exactly on the base clock.
  bool skip_unmerged_levels = true;
};

// Log-binned long-delay edges (seconds), as used by correlate_long_delay.
std::vector<std::int64_t> long_delay_edges_fs(const StreamHeader& header, const LongDelayOptions& options);

// Multi-tau cross-correlation from tau_min to tau_max. Normalized by
// N_A N_B / T^2 * integral over the bin of (T - tau), both delay signs,
// so an uncorrelated process gives g2 = 1 in every bin.
CorrelationHistogram correlate_long_delay(const PhotonStream& stream, const LongDelayOptions& options = {});

struct FlickerFitOptions {
  // Lower delay bound of the fit; defaults to half a sync period (past the
  // antibunching dip and the first excitation peak edge).
  std::optional<double> tau_min;
};

// Weighted least-squares fit of g2(tau) = 1 + A_f exp(-tau / tau_f).
// Parameters: "amplitude", "tau_f" (s).
FitResult fit_flicker(const CorrelationHistogram& hist, const FlickerFitOptions& options = {});

}  // namespace photonstat
