#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "photonstat/fit.hpp"
#include "photonstat/stream.hpp"

namespace photonstat {

inline constexpr double kDefaultBinTime = 10e-3;  // s

// Photon counts per time bin, both detectors summed. Marker records are
// not counted.
struct IntensityTrace {
  double bin_time = kDefaultBinTime;
  double start_time = 0.0;
  std::vector<std::uint64_t> counts;

  std::size_t size() const noexcept { return counts.size(); }
};

// floor(duration / bin_time) bins; one trailing partial bin is added only
// when photons fall beyond the last whole bin, so counts always sum to
// the number of photon records.
IntensityTrace bin_intensity(const PhotonStream& stream, double bin_time = kDefaultBinTime);

enum class ArrivalStatistic { mean, median };

struct LifetimeTrace {
  double bin_time = kDefaultBinTime;
  ArrivalStatistic statistic = ArrivalStatistic::mean;
  // Arrival time after the sync pulse (s); nullopt for bins without photons.
  std::vector<std::optional<double>> mean_arrival;

  std::size_t size() const noexcept { return mean_arrival.size(); }
};

// Per-bin mean (or median) of microtime * microtime_resolution. Same bin
// layout as bin_intensity.
LifetimeTrace mean_arrival_trace(const PhotonStream& stream, double bin_time = kDefaultBinTime,
                                 ArrivalStatistic statistic = ArrivalStatistic::mean);

enum class StateLabel : std::uint8_t { low, high, excluded };

struct StateSegmentation {
  double bin_time = kDefaultBinTime;
  double start_time = 0.0;
  double threshold_low = 0.0;   // counts/bin; low state is counts <= threshold_low
  double threshold_high = 0.0;  // counts/bin; high state is counts >= threshold_high
  std::vector<StateLabel> labels;

  // Two-component mixture behind the thresholds.
  double weight_low = 0.0, mean_low = 0.0, sigma_low = 0.0;
  double weight_high = 0.0, mean_high = 0.0, sigma_high = 0.0;

  std::size_t count(StateLabel label) const noexcept;
};

// Two-component Gaussian mixture on the bin counts. Thresholds sit at
// mean_low + 2 sigma_low and mean_high - 2 sigma_high. Throws Unimodal when
// one component describes the data better (BIC) or the bands overlap, and
// InvalidArgument for traces shorter than 100 bins.
StateSegmentation segment_states(const IntensityTrace& trace);

// TCSPC histogram over microtime, one bin per microtime unit.
struct DecayHistogram {
  double resolution = 0.0;   // s per bin
  double sync_period = 0.0;  // s
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const noexcept;
  // Bins lying entirely inside the sync period (the last one may be partial).
  std::size_t full_bins() const noexcept;
};

DecayHistogram decay_histogram(const PhotonStream& stream);
// Photons from intensity bins labelled `label`. Throws EmptySelection.
DecayHistogram decay_histogram(const PhotonStream& stream, const StateSegmentation& segmentation, StateLabel label);

enum class DecayModel { mono, bi };

// First bin of the decay fit window (the histogram maximum).
std::size_t decay_peak_bin(const DecayHistogram& hist);

// Poisson maximum-likelihood fit of sum_i A_i exp(-(t - t_peak) / tau_i) + bg
// over t >= t_peak, t at bin centres, amplitudes in counts per bin.
// Parameters: tau1[, tau2] (s, descending), amplitude1[, amplitude2][, background].
// Throws InsufficientCounts below 1000 counts and FitDiverged.
FitResult fit_decay(const DecayHistogram& hist, DecayModel model = DecayModel::mono, bool background = true);

// Expected counts of a fit_decay result for every bin of `hist` (0 before
// the fit window).
std::vector<double> decay_expectation(const FitResult& fit, const DecayHistogram& hist);

struct SaturationPoint {
  double power = 0.0;
  double intensity = 0.0;
};

// I = A (1 - exp(-P / P_sat)) + B P, weighted by sqrt(I). Parameters:
// "A", "B", "P_sat". Throws InsufficientPoints (fewer than 5 points or a
// power range narrower than 12:1) and FitDiverged.
FitResult fit_saturation(std::span<const SaturationPoint> points);

double saturation_model(double power, double a, double b, double p_sat) noexcept;

struct SpectrumFit {
  double cew = 0.0;        // nm
  double fwhm = 0.0;       // nm
  double amplitude = 0.0;  // above baseline
  double baseline = 0.0;
  FitResult fit;  // "amplitude", "center", "sigma", "baseline"
};

// Gaussian plus constant baseline. Throws NoPeak for spectra without a
// single dominant peak, InsufficientPoints below 10 samples.
SpectrumFit fit_spectrum(std::span<const double> wavelengths, std::span<const double> intensities);

}  // namespace photonstat
