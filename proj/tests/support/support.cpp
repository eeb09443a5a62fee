#include "support.hpp"

#include <algorithm>
#include <cmath>

#include <unistd.h>

namespace photonstat::test {

StreamHeader reference_header(double duration) {
  StreamHeader h;
  h.sync_rate = 2.5e6;
  h.microtime_resolution = 126e-12;
  h.macrotime_resolution = 1.0 / 2.5e6;
  h.duration = duration;
  h.channel_count = 2;
  return h;
}

PhotonStream from_photons(const StreamHeader& header, std::vector<Photon> photons) {
  const double T = header.sync_period();
  std::vector<PhotonRecord> recs;
  for (const auto& p : photons) {
    PhotonRecord r;
    r.channel = p.channel;
    const double k = std::floor(p.time / T + 1e-9);
    r.macrotime = static_cast<std::uint64_t>(k);
    const double micro = std::max(0.0, p.time - k * T);
    r.microtime = static_cast<std::uint16_t>(std::floor(micro / header.microtime_resolution + 1e-6));
    recs.push_back(r);
  }
  const Timebase tb(header);
  std::stable_sort(recs.begin(), recs.end(), [&](const PhotonRecord& a, const PhotonRecord& b) {
    const auto ta = tb.time_fs(a), tbb = tb.time_fs(b);
    return ta != tbb ? ta < tbb : a.channel < b.channel;
  });
  return PhotonStream(header, std::move(recs));
}

PhotonStream random_valid_stream(std::mt19937_64& rng, std::size_t max_records) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  StreamHeader h;
  h.sync_rate = std::pow(10.0, 5.0 + 3.0 * u(rng));
  const double period = 1.0 / h.sync_rate;
  const double ticks = std::floor(16.0 + u(rng) * 60000.0);
  h.microtime_resolution = period / ticks;
  h.macrotime_resolution = u(rng) < 0.5 ? period : period * (0.25 + 4.0 * u(rng));
  h.channel_count = static_cast<std::uint16_t>(2 + rng() % 4);
  h.origin = u(rng) < 0.5 ? Origin::simulated : Origin::imported;
  const std::size_t n = rng() % (max_records + 1);
  const auto max_micro = static_cast<std::uint16_t>(std::min(65535.0, std::ceil(period / h.microtime_resolution) - 2.0));

  std::vector<PhotonRecord> recs(n);
  std::uint64_t macro = 0;
  for (auto& r : recs) {
    macro += rng() % 50;
    r.macrotime = macro;
    r.microtime = static_cast<std::uint16_t>(rng() % (static_cast<std::uint64_t>(max_micro) + 1));
    r.channel = (rng() % 20 == 0) ? kMarkerChannel : static_cast<std::uint8_t>(rng() % h.channel_count);
  }
  const Timebase tb(h);
  std::sort(recs.begin(), recs.end(), [&](const PhotonRecord& a, const PhotonRecord& b) {
    const auto ta = tb.time_fs(a), tbb = tb.time_fs(b);
    return ta != tbb ? ta < tbb : a.channel < b.channel;
  });
  // Drop same-time same-channel duplicates.
  std::vector<PhotonRecord> clean;
  for (const auto& r : recs) {
    bool dup = false;
    for (auto it = clean.rbegin(); it != clean.rend() && tb.time_fs(*it) == tb.time_fs(r); ++it)
      if (it->channel == r.channel) dup = true;
    if (!dup) clean.push_back(r);
  }
  double last = 0.0;
  if (!clean.empty()) last = tb.time_s(clean.back());
  h.duration = last + u(rng) * 1e-3;
  return PhotonStream(h, std::move(clean));
}

PhotonStream poisson_stream(double rate, double duration, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  const auto h = reference_header(duration);
  std::vector<Photon> ph;
  for (std::uint8_t ch = 0; ch < 2; ++ch)
    for (double t = gap(rng); t < duration; t += gap(rng)) ph.push_back({ch, t});
  // from_photons validates; exact collisions on one channel are vanishingly
  // rare but dedupe anyway.
  const double T = h.sync_period();
  std::sort(ph.begin(), ph.end(), [](const Photon& a, const Photon& b) { return a.time < b.time; });
  std::vector<Photon> out;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> seen_last(2, {~0ULL, ~0ULL});
  for (const auto& p : ph) {
    const auto k = static_cast<std::uint64_t>(std::floor(p.time / T + 1e-9));
    const auto m = static_cast<std::uint64_t>(std::floor(std::max(0.0, p.time - static_cast<double>(k) * T) / h.microtime_resolution + 1e-6));
    if (seen_last[p.channel] == std::pair{k, m}) continue;
    seen_last[p.channel] = {k, m};
    out.push_back(p);
  }
  return from_photons(h, std::move(out));
}

SimulationConfig reference_config(double duration, std::uint64_t seed) {
  SimulationConfig c;
  c.header = reference_header(0.0);
  c.model.lifetime_bright = 10.2e-9;
  c.model.lifetime_dim = 1.3e-9;
  c.duration = duration;
  c.seed = seed;
  return c;
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double target, int iterations) {
  double flo = f(lo) - target;
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid) - target;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

namespace {

struct StateRates {
  double exciton_only, biexciton_only, both;
};

StateRates emission(const EmitterModel& m, bool bright) {
  const double mu = m.power_ratio * m.mean_excitons_at_sat;
  const double p1 = 1.0 - std::exp(-mu);
  const double p2 = 1.0 - std::exp(-mu) * (1.0 + mu);
  const double q = (bright ? m.qy_bright : m.qy_dim) * m.detection_efficiency;
  const double r = m.biexciton_qy * m.detection_efficiency;
  return {p1 * q - p2 * q * r, p2 * r - p2 * q * r, p2 * q * r};
}

}  // namespace

double signal_per_pulse_oracle(const EmitterModel& m, bool bright) {
  const auto e = emission(m, bright);
  return e.exciton_only + e.biexciton_only + 2.0 * e.both;
}

double pulsed_g2_zero_oracle(const EmitterModel& m, double sync_rate, int k_max) {
  const double pb = m.bright_fraction(), pd = 1.0 - pb;
  const double gamma = m.rate_charge + m.rate_discharge;
  const auto eb = emission(m, true), ed = emission(m, false);
  // Two photons from one pulse land on different detectors half the time.
  const double central = 0.5 * (pb * eb.both + pd * ed.both);
  const double mb = signal_per_pulse_oracle(m, true), md = signal_per_pulse_oracle(m, false);
  double side = 0.0;
  for (int k = 1; k <= k_max; ++k) {
    const double decay = std::exp(-gamma * k / sync_rate);
    // Joint state probabilities of pulses separated by k periods.
    const double pbb = pb * (pb + pd * decay);
    const double pdd = pd * (pd + pb * decay);
    const double pbd = pb * pd * (1.0 - decay);
    side += 0.25 * (pbb * mb * mb + pdd * md * md + 2.0 * pbd * mb * md);
  }
  side /= k_max;
  return central / side;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  auto base = std::filesystem::temp_directory_path() /
              ("photonstat_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base);
  return base;
}

}  // namespace photonstat::test
