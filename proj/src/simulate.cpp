#include "photonstat/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "photonstat/error.hpp"
#include "photonstat/parallel.hpp"

namespace photonstat {

namespace {

// Pulses per work chunk. Fixed so the chunk layout (and therefore the RNG
// substreams) never depends on the worker count.
constexpr std::uint64_t kChunkPulses = std::uint64_t{1} << 20;

enum class Substream : std::uint64_t { telegraph_init = 1, telegraph = 2, emission = 3, background = 4 };

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  Rng(std::uint64_t seed, Substream stream, std::uint64_t chunk)
      : engine_(splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + chunk)) {}

  // Uniform on (0, 1].
  double uniform() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }
  double exponential(double mean) { return -mean * std::log(uniform()); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }
  // Failures before the first success of a Bernoulli(p) sequence.
  std::uint64_t geometric(double log1m_p) {
    const double g = std::floor(std::log(uniform()) / log1m_p);
    return g >= 1.8e19 ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(g);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct StateEmission {
  double lifetime = 0.0;
  double p_any = 0.0;       // probability a pulse yields >= 1 detected signal photon
  double log1m_p_any = 0.0;
  double p_exciton_only = 0.0;
  double p_biexciton_only = 0.0;  // remainder: both photons
};

struct PoissonTail {
  double p_ge1;
  double p_ge2;
};

PoissonTail poisson_tail(double mean) {
  return {-std::expm1(-mean), -std::expm1(-mean) - mean * std::exp(-mean)};
}

StateEmission state_emission(const EmitterModel& m, bool bright) {
  const auto [p1, p2] = poisson_tail(m.power_ratio * m.mean_excitons_at_sat);
  const double q = (bright ? m.qy_bright : m.qy_dim) * m.detection_efficiency;
  const double r = m.biexciton_qy * m.detection_efficiency;
  const double x_only = p1 * q - p2 * q * r;
  const double b_only = p2 * r - p2 * q * r;
  const double both = p2 * q * r;
  StateEmission e;
  e.lifetime = bright ? m.lifetime_bright : m.lifetime_dim;
  e.p_any = x_only + b_only + both;
  if (e.p_any > 0.0) {
    e.log1m_p_any = std::log1p(-std::min(e.p_any, 1.0 - 1e-16));
    e.p_exciton_only = x_only / e.p_any;
    e.p_biexciton_only = b_only / e.p_any;
  }
  return e;
}

struct ChunkContext {
  const SimulationConfig& config;
  double period;
  double micro_res;
  std::uint16_t max_micro;
  std::uint64_t total_pulses;
  StateEmission bright;
  StateEmission dim;
};

// Places a photon emitted `offset` seconds after pulse `pulse`, wrapping into
// neighbouring periods when jitter or a long delay crosses a sync edge.
void place(const ChunkContext& ctx, std::uint64_t pulse, double offset, std::uint8_t channel,
           std::vector<PhotonRecord>& out) {
  std::int64_t k = static_cast<std::int64_t>(pulse);
  while (offset >= ctx.period) {
    offset -= ctx.period;
    ++k;
  }
  while (offset < 0.0) {
    offset += ctx.period;
    --k;
  }
  if (k < 0 || static_cast<std::uint64_t>(k) >= ctx.total_pulses) return;
  auto micro = static_cast<std::uint64_t>(offset / ctx.micro_res);
  micro = std::min<std::uint64_t>(micro, ctx.max_micro);
  out.push_back({channel, static_cast<std::uint16_t>(micro), static_cast<std::uint64_t>(k)});
}

std::uint8_t route(Rng& rng) { return rng.uniform() <= 0.5 ? kChannelA : kChannelB; }

// Advances the telegraph across one chunk, invoking visit(first_pulse,
// end_pulse, bright) for every residence interval. Returns the state at the
// chunk end; the residual residence time is resampled there (memoryless).
template <typename Visit>
bool run_telegraph(const EmitterModel& m, Rng& rng, bool bright, std::uint64_t pulses, double period,
                   Visit&& visit) {
  const double chunk_len = static_cast<double>(pulses) * period;
  double t = 0.0;
  std::uint64_t first = 0;
  for (;;) {
    const double stay = rng.exponential(1.0 / (bright ? m.rate_charge : m.rate_discharge));
    const double end = t + stay;
    if (end >= chunk_len) {
      visit(first, pulses, bright);
      return bright;
    }
    const auto next_first = std::min<std::uint64_t>(pulses, static_cast<std::uint64_t>(std::ceil(end / period)));
    if (next_first > first) visit(first, next_first, bright);
    first = std::max(first, next_first);
    t = end;
    bright = !bright;
  }
}

std::vector<PhotonRecord> simulate_chunk(const ChunkContext& ctx, std::uint64_t chunk, bool start_bright) {
  const auto& m = ctx.config.model;
  const std::uint64_t base = chunk * kChunkPulses;
  const std::uint64_t pulses = std::min(kChunkPulses, ctx.total_pulses - base);
  std::vector<PhotonRecord> out;

  Rng tel(ctx.config.seed, Substream::telegraph, chunk);
  Rng emit(ctx.config.seed, Substream::emission, chunk);
  const double irf = m.irf_sigma;
  const double xx_factor = m.biexciton_lifetime_factor;

  run_telegraph(m, tel, start_bright, pulses, ctx.period, [&](std::uint64_t first, std::uint64_t end, bool bright) {
    const StateEmission& e = bright ? ctx.bright : ctx.dim;
    if (e.p_any <= 0.0) return;
    std::uint64_t pulse = first;
    for (;;) {
      const std::uint64_t skip = emit.geometric(e.log1m_p_any);
      if (skip >= end - pulse) return;
      pulse += skip;
      const double u = emit.uniform();
      const bool exciton = u > e.p_biexciton_only;
      const bool biexciton = u > e.p_exciton_only + e.p_biexciton_only || !exciton;
      const double t_x = emit.exponential(e.lifetime);
      if (biexciton) {
        // Auger-shortened biexciton photon, constrained to precede the exciton.
        const double tau_xx = e.lifetime / xx_factor;
        const double t_xx = -tau_xx * std::log1p(-emit.uniform() * -std::expm1(-t_x / tau_xx));
        const double jitter = irf > 0.0 ? irf * emit.normal() : 0.0;
        place(ctx, base + pulse, t_xx + jitter, route(emit), out);
      }
      if (exciton) {
        const double jitter = irf > 0.0 ? irf * emit.normal() : 0.0;
        place(ctx, base + pulse, t_x + jitter, route(emit), out);
      }
      ++pulse;
    }
  });

  if (m.background_rate > 0.0) {
    Rng bg(ctx.config.seed, Substream::background, chunk);
    const double span = static_cast<double>(pulses) * ctx.period;
    for (std::uint8_t ch : {kChannelA, kChannelB}) {
      for (double t = bg.exponential(1.0 / m.background_rate); t < span;
           t += bg.exponential(1.0 / m.background_rate)) {
        const auto k = std::min(pulses - 1, static_cast<std::uint64_t>(t / ctx.period));
        place(ctx, base + k, t - static_cast<double>(k) * ctx.period, ch, out);
      }
    }
  }

  std::sort(out.begin(), out.end(), [](const PhotonRecord& a, const PhotonRecord& b) {
    if (a.macrotime != b.macrotime) return a.macrotime < b.macrotime;
    if (a.microtime != b.microtime) return a.microtime < b.microtime;
    return a.channel < b.channel;
  });
  return out;
}

bool record_less(const PhotonRecord& a, const PhotonRecord& b) {
  if (a.macrotime != b.macrotime) return a.macrotime < b.macrotime;
  if (a.microtime != b.microtime) return a.microtime < b.microtime;
  return a.channel < b.channel;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidModel, what);
}

bool unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void validate(const EmitterModel& m) {
  require(std::isfinite(m.lifetime_bright) && m.lifetime_bright > 0.0, "lifetime_bright must be > 0");
  require(std::isfinite(m.lifetime_dim) && m.lifetime_dim > 0.0, "lifetime_dim must be > 0");
  require(m.lifetime_dim < m.lifetime_bright, "lifetime_dim must be shorter than lifetime_bright");
  require(unit_interval(m.qy_bright), "qy_bright must lie in [0, 1]");
  require(unit_interval(m.qy_dim), "qy_dim must lie in [0, 1]");
  require(std::isfinite(m.rate_charge) && m.rate_charge > 0.0, "rate_charge must be > 0");
  require(std::isfinite(m.rate_discharge) && m.rate_discharge > 0.0, "rate_discharge must be > 0");
  require(std::isfinite(m.mean_excitons_at_sat) && m.mean_excitons_at_sat > 0.0, "mean_excitons_at_sat must be > 0");
  require(std::isfinite(m.power_ratio) && m.power_ratio >= 0.0, "power_ratio must be >= 0");
  require(unit_interval(m.biexciton_qy), "biexciton_qy must lie in [0, 1]");
  require(std::isfinite(m.biexciton_lifetime_factor) && m.biexciton_lifetime_factor >= 1.0,
          "biexciton_lifetime_factor must be >= 1");
  require(std::isfinite(m.background_rate) && m.background_rate >= 0.0, "background_rate must be >= 0");
  require(m.detection_efficiency > 0.0 && m.detection_efficiency <= 1.0, "detection_efficiency must lie in (0, 1]");
  require(std::isfinite(m.irf_sigma) && m.irf_sigma >= 0.0, "irf_sigma must be >= 0");
}

void validate(const SimulationConfig& c) {
  validate(c.model);
  try {
    validate_header(c.header);
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidModel, e.what());
  }
  const double period = c.header.sync_period();
  require(c.model.lifetime_bright <= 0.1 * period, "lifetimes must be well below the sync period");
  require(period / c.header.microtime_resolution <= 65536.0, "sync period exceeds the 16-bit microtime range");
  require(c.header.channel_count >= 2, "channel_count must be >= 2");
  require(std::isfinite(c.duration) && c.duration > 0.0, "duration must be > 0");
  require(c.duration * c.header.sync_rate < 9.0e15, "duration too long");
}

PhotonStream simulate(const SimulationConfig& config) {
  validate(config);
  const auto& m = config.model;
  StreamHeader header = config.header;
  header.macrotime_resolution = header.sync_period();
  header.duration = config.duration;
  header.origin = Origin::simulated;

  const double period = header.sync_period();
  const auto max_micro = static_cast<std::uint16_t>(std::min(
      65535.0, std::ceil(period / header.microtime_resolution) - 1.0));
  ChunkContext ctx{config,
                   period,
                   header.microtime_resolution,
                   max_micro,
                   static_cast<std::uint64_t>(std::floor(config.duration * config.header.sync_rate + 1e-9)),
                   state_emission(m, true),
                   state_emission(m, false)};
  // A microtime is valid only if micro * res < period.
  while (ctx.max_micro > 0 && static_cast<double>(ctx.max_micro) * ctx.micro_res >= period) --ctx.max_micro;

  const std::uint64_t n_chunks = (ctx.total_pulses + kChunkPulses - 1) / kChunkPulses;

  // Serial telegraph pre-pass: only the state at each chunk boundary is kept.
  std::vector<char> start_bright(n_chunks);
  {
    Rng init(config.seed, Substream::telegraph_init, 0);
    bool bright = init.uniform() <= m.bright_fraction();
    for (std::uint64_t c = 0; c < n_chunks; ++c) {
      start_bright[c] = bright;
      Rng tel(config.seed, Substream::telegraph, c);
      const std::uint64_t pulses = std::min(kChunkPulses, ctx.total_pulses - c * kChunkPulses);
      bright = run_telegraph(m, tel, bright, pulses, period, [](std::uint64_t, std::uint64_t, bool) {});
    }
  }

  std::vector<std::vector<PhotonRecord>> parts(n_chunks);
  parallel_for(n_chunks, [&](std::size_t c) { parts[c] = simulate_chunk(ctx, c, start_bright[c] != 0); });

  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<PhotonRecord> records;
  records.reserve(total);
  for (auto& p : parts) {
    records.insert(records.end(), p.begin(), p.end());
    std::vector<PhotonRecord>().swap(p);
  }
  // Photons wrapped across a chunk edge are the only possible disorder.
  if (!std::is_sorted(records.begin(), records.end(), record_less))
    std::sort(records.begin(), records.end(), record_less);
  // Two detections in one microtime bin on one detector cannot be resolved;
  // keep the first.
  records.erase(std::unique(records.begin(), records.end()), records.end());
  return PhotonStream::adopt(header, std::move(records));
}

double detected_per_pulse(const EmitterModel& m, bool bright) noexcept {
  const auto [p1, p2] = poisson_tail(m.power_ratio * m.mean_excitons_at_sat);
  const double qy = bright ? m.qy_bright : m.qy_dim;
  return m.detection_efficiency * (p1 * qy + p2 * m.biexciton_qy);
}

double analytic_flicker_plateau(const EmitterModel& model, double sync_rate) {
  validate(model);
  if (!(sync_rate > 0.0) || !std::isfinite(sync_rate)) throw Error(ErrorCode::InvalidModel, "sync_rate must be > 0");
  const double pb = model.bright_fraction();
  const double pd = 1.0 - pb;
  // Per-detector intensities: half the signal plus that detector's background.
  const double ib = 0.5 * sync_rate * detected_per_pulse(model, true) + model.background_rate;
  const double id = 0.5 * sync_rate * detected_per_pulse(model, false) + model.background_rate;
  const double mean = pb * ib + pd * id;
  if (mean <= 0.0) throw Error(ErrorCode::InvalidModel, "emitter produces no photons");
  const double diff = ib - id;
  return 1.0 + pb * pd * diff * diff / (mean * mean);
}

}  // namespace photonstat
