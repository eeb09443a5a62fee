#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "photonstat/simulate.hpp"
#include "photonstat/stream.hpp"

namespace photonstat::test {

struct Photon {
  std::uint8_t channel;
  double time;  // s
};

// Header matching the reference acquisition: 2.5 MHz sync, 126 ps TCSPC,
// macrotime counted in sync periods.
StreamHeader reference_header(double duration);

// Builds a validated stream from absolute times; macrotime = whole periods.
PhotonStream from_photons(const StreamHeader& header, std::vector<Photon> photons);

// Random header and records satisfying every stream invariant, markers
// included.
PhotonStream random_valid_stream(std::mt19937_64& rng, std::size_t max_records);

// Two independent homogeneous Poisson channels, uniform microtimes.
PhotonStream poisson_stream(double rate_per_channel, double duration, std::uint64_t seed);

// Reference emitter: 10.2 / 1.3 ns lifetimes on the reference header.
SimulationConfig reference_config(double duration, std::uint64_t seed);

// Root of a monotone function on [lo, hi] by bisection.
double bisect(const std::function<double(double)>& f, double lo, double hi, double target, int iterations = 200);

// Background-free pulsed g2(0) of a model: central-peak pairs over the
// mean of side peaks k = +-1..+-k_max, with telegraph correlation between
// pulses. Independent of the simulator.
double pulsed_g2_zero_oracle(const EmitterModel& model, double sync_rate, int k_max);

// Mean detected signal photons per pulse in one state, from the emission
// rules (independent of the library implementation).
double signal_per_pulse_oracle(const EmitterModel& model, bool bright);

// Fresh empty directory under the system temp path.
std::filesystem::path scratch_dir(const std::string& tag);

}  // namespace photonstat::test
