#pragma once

#include <cstdint>

#include "photonstat/stream.hpp"

namespace photonstat {

// Two-state (neutral exciton / charged trion) blinking emitter under pulsed
// excitation, observed through a 50:50 HBT beamsplitter.
struct EmitterModel {
  double lifetime_bright = 10.2e-9;     // s, neutral exciton
  double lifetime_dim = 1.3e-9;         // s, trion
  double qy_bright = 0.9;               // emission probability per excitation
  double qy_dim = 0.25;
  double rate_charge = 1e4;             // Hz, bright -> dim
  double rate_discharge = 1e4;          // Hz, dim -> bright
  double mean_excitons_at_sat = 1.0;    // <N_eh> at P = P_sat
  double power_ratio = 1.0;             // P / P_sat
  double biexciton_qy = 0.0;            // extra-photon probability of a multiexciton cascade
  double biexciton_lifetime_factor = 4.0;  // biexciton lifetime = lifetime_state / factor
  double background_rate = 0.0;         // Hz per detector
  double detection_efficiency = 0.05;
  double irf_sigma = 0.0;               // s, Gaussian timing jitter

  // Stationary bright-state occupancy k_d / (k_c + k_d).
  double bright_fraction() const noexcept { return rate_discharge / (rate_charge + rate_discharge); }
};

struct SimulationConfig {
  EmitterModel model;
  // Sync rate, microtime resolution and channel count are taken from here;
  // the simulator counts macrotime in sync periods and writes `duration`.
  StreamHeader header;
  std::uint64_t seed = 1;
  double duration = 1.0;  // s
};

// Throws Error{InvalidModel} if the model or configuration is unusable.
void validate(const SimulationConfig& config);
void validate(const EmitterModel& model);

// Monte Carlo photon stream. Output is a pure function of `config`
// (bit-identical for equal configs, independent of the worker count).
PhotonStream simulate(const SimulationConfig& config);

// Mean detected signal photons per excitation pulse in one state, summed
// over both detectors.
double detected_per_pulse(const EmitterModel& model, bool bright) noexcept;

// <I^2>/<I>^2 of the telegraph intensity seen by one detector (signal plus
// background): the zero-delay limit of the blinking-induced bunching.
// `sync_rate` converts per-pulse signal into a rate comparable with the
// background rate.
double analytic_flicker_plateau(const EmitterModel& model, double sync_rate = 2.5e6);

}  // namespace photonstat
