#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "photonstat/correlate.hpp"
#include "photonstat/error.hpp"
#include "photonstat/parallel.hpp"

namespace photonstat {

namespace {

constexpr std::size_t kChunk = 1 << 16;

// Photon arrivals on one cascade level: strictly increasing coarse times with
// the number of photons merged into each.
struct Events {
  std::vector<std::int64_t> t;
  std::vector<std::uint64_t> w;
};

Events merge(const std::vector<std::int64_t>& times) {
  Events e;
  e.t.reserve(times.size());
  e.w.reserve(times.size());
  for (const auto t : times) {
    if (!e.t.empty() && e.t.back() == t) {
      ++e.w.back();
    } else {
      e.t.push_back(t);
      e.w.push_back(1);
    }
  }
  return e;
}

// One cascade step: halve the clock resolution and merge coincident events.
Events coarsen(const Events& in) {
  Events out;
  out.t.reserve(in.t.size());
  out.w.reserve(in.t.size());
  for (std::size_t i = 0; i < in.t.size(); ++i) {
    const std::int64_t t = in.t[i] >> 1;
    if (!out.t.empty() && out.t.back() == t) {
      out.w.back() += in.w[i];
    } else {
      out.t.push_back(t);
      out.w.push_back(in.w[i]);
    }
  }
  return out;
}

struct LevelBin {
  std::size_t bin;      // index into the output histogram
  std::size_t lo_edge;  // indices into the level's unique edge list
  std::size_t hi_edge;
};

// Adds w_start * (stop weight with delay in [E_lo, E_hi)) for every start.
void sweep(const Events& starts, const Events& stops, const std::vector<std::int64_t>& edges,
           const std::vector<LevelBin>& bins, std::vector<std::uint64_t>& counts) {
  if (starts.t.empty() || stops.t.empty()) return;
  std::vector<std::uint64_t> prefix(stops.t.size() + 1, 0);
  for (std::size_t j = 0; j < stops.t.size(); ++j) prefix[j + 1] = prefix[j] + stops.w[j];

  const std::size_t n_chunks = (starts.t.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<std::uint64_t>> partial(n_chunks, std::vector<std::uint64_t>(bins.size(), 0));
  parallel_for(n_chunks, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(starts.t.size(), begin + kChunk);
    std::vector<std::size_t> ptr(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e)
      ptr[e] = static_cast<std::size_t>(
          std::lower_bound(stops.t.begin(), stops.t.end(), starts.t[begin] + edges[e]) - stops.t.begin());
    auto& local = partial[c];
    const std::size_t n_stops = stops.t.size();
    for (std::size_t i = begin; i < end; ++i) {
      const std::int64_t s = starts.t[i];
      for (std::size_t e = 0; e < edges.size(); ++e) {
        std::size_t p = ptr[e];
        const std::int64_t target = s + edges[e];
        while (p < n_stops && stops.t[p] < target) ++p;
        ptr[e] = p;
      }
      const std::uint64_t w = starts.w[i];
      for (std::size_t b = 0; b < bins.size(); ++b)
        local[b] += w * (prefix[ptr[bins[b].hi_edge]] - prefix[ptr[bins[b].lo_edge]]);
    }
  });
  for (const auto& p : partial)
    for (std::size_t b = 0; b < bins.size(); ++b) counts[bins[b].bin] += p[b];
}

}  // namespace

std::vector<std::int64_t> long_delay_edges_fs(const StreamHeader& header, const LongDelayOptions& o) {
  if (!(o.tau_min > 0.0) || !(o.tau_max > o.tau_min) || !std::isfinite(o.tau_max))
    throw Error(ErrorCode::InvalidArgument, "need 0 < tau_min < tau_max");
  if (o.bins_per_decade < 1) throw Error(ErrorCode::InvalidArgument, "bins_per_decade must be >= 1");
  const double ratio = o.tau_max / o.tau_min;
  const auto n = std::max<long>(1, std::lround(o.bins_per_decade * std::log10(ratio)));
  const std::int64_t period_fs = seconds_to_fs(header.sync_period());
  const std::int64_t tick_fs = Timebase(header).micro_fs;
  const double half_step = std::pow(ratio, 0.5 / static_cast<double>(n));
  std::vector<std::int64_t> edges;
  edges.reserve(static_cast<std::size_t>(n) + 1);
  for (long i = 0; i <= n; ++i) {
    const double tau = i == n ? o.tau_max : o.tau_min * std::pow(ratio, static_cast<double>(i) / static_cast<double>(n));
    std::int64_t e = seconds_to_fs(tau);
    if (o.align_to_sync && 2 * e < period_fs) {
      // Delays sit on the microtime lattice; half-tick edges give every bin a
      // whole number of lattice points, matching its width.
      const auto k = std::llround(static_cast<double>(e) / static_cast<double>(tick_fs) - 0.5);
      e = std::min(std::max<std::int64_t>(0, k) * tick_fs + tick_fs / 2, period_fs / 2);
    } else if (o.align_to_sync) {
      const auto k = std::llround(static_cast<double>(e) / static_cast<double>(period_fs) - 0.5);
      e = std::max<std::int64_t>(0, k) * period_fs + period_fs / 2;
      // No sliver between the last raw edge and the first snapped one.
      while (edges.size() > 1 && 2 * edges.back() < period_fs &&
             static_cast<double>(e) < half_step * static_cast<double>(edges.back()))
        edges.pop_back();
    }
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }
  if (edges.size() < 2) throw Error(ErrorCode::InvalidArgument, "delay range holds no bins");
  return edges;
}

CorrelationHistogram correlate_long_delay(const PhotonStream& stream, const LongDelayOptions& options) {
  if (options.min_units_per_bin < 1) throw Error(ErrorCode::InvalidArgument, "min_units_per_bin must be >= 1");
  const auto& h = stream.header();
  const auto edges = long_delay_edges_fs(h, options);
  // Against the requested delay; the aligned last edge may overshoot it by T/2.
  if (h.duration < 10.0 * options.tau_max * (1.0 - 1e-12))
    throw Error(ErrorCode::DurationTooShort, "stream must last at least 10x the largest delay");

  CorrelationHistogram hist;
  hist.mode = CorrelationMode::long_delay;
  hist.edges_fs = edges;
  hist.counts.assign(edges.size() - 1, 0);
  hist.span = h.duration;
  hist.sync_period = h.sync_period();

  const auto a_times = stream.channel_times_fs(kChannelA);
  const auto b_times = stream.channel_times_fs(kChannelB);
  hist.total_starts = a_times.size();
  hist.total_stops = b_times.size();

  // Cascade level of each bin: the coarsest clock that still leaves
  // min_units_per_bin units across the bin.
  const std::size_t n_photons = a_times.size() + b_times.size();
  const double spacing_fs = n_photons > 0 ? h.duration * 1e15 / static_cast<double>(n_photons) : 0.0;
  std::map<int, std::vector<std::size_t>> by_level;
  for (std::size_t i = 0; i < hist.bins(); ++i) {
    const std::int64_t width = edges[i + 1] - edges[i];
    const auto units = static_cast<std::uint64_t>(width / options.min_units_per_bin);
    int level = units == 0 ? 0 : static_cast<int>(std::bit_width(units)) - 1;
    if (options.skip_unmerged_levels && std::ldexp(1.0, level) < spacing_fs) level = 0;
    by_level[level].push_back(i);
  }

  Events a = merge(a_times);
  Events b = merge(b_times);
  int level = 0;
  for (const auto& [target, bins] : by_level) {
    while (level < target) {
      a = coarsen(a);
      b = coarsen(b);
      ++level;
    }
    const std::int64_t half = level > 0 ? std::int64_t{1} << (level - 1) : 0;
    auto to_level = [&](std::int64_t e) { return (e + half) >> level; };
    std::vector<std::int64_t> level_edges;
    for (auto i : bins) {
      level_edges.push_back(to_level(edges[i]));
      level_edges.push_back(to_level(edges[i + 1]));
    }
    std::sort(level_edges.begin(), level_edges.end());
    level_edges.erase(std::unique(level_edges.begin(), level_edges.end()), level_edges.end());
    std::vector<LevelBin> level_bins;
    for (auto i : bins) {
      auto idx = [&](std::int64_t e) {
        return static_cast<std::size_t>(std::lower_bound(level_edges.begin(), level_edges.end(), to_level(e)) -
                                        level_edges.begin());
      };
      level_bins.push_back({i, idx(edges[i]), idx(edges[i + 1])});
    }
    // Both delay signs: B after A, then A after B.
    sweep(a, b, level_edges, level_bins, hist.counts);
    sweep(b, a, level_edges, level_bins, hist.counts);
  }

  const double T = h.duration;
  const double rate2 = static_cast<double>(a_times.size()) * static_cast<double>(b_times.size()) / (T * T);
  hist.normalization.resize(hist.bins());
  for (std::size_t i = 0; i < hist.bins(); ++i) {
    const double lo = fs_to_seconds(edges[i]), hi = fs_to_seconds(edges[i + 1]);
    hist.normalization[i] = 2.0 * rate2 * ((hi - lo) * T - 0.5 * (hi * hi - lo * lo));
  }
  return hist;
}

namespace {

// Mean of exp(-tau / tau_f) over [lo, hi] and its derivative in tau_f.
struct BinAverage {
  double value;
  double d_tau;
};

BinAverage exp_bin_average(double lo, double hi, double tau) {
  const double el = std::exp(-lo / tau), eh = std::exp(-hi / tau);
  const double w = hi - lo;
  return {tau * (el - eh) / w, (el * (1.0 + lo / tau) - eh * (1.0 + hi / tau)) / w};
}

}  // namespace

FitResult fit_flicker(const CorrelationHistogram& hist, const FlickerFitOptions& options) {
  const double tau_lo = options.tau_min.value_or(0.5 * hist.sync_period);
  std::vector<double> lo, hi, y, sigma;
  for (std::size_t i = 0; i < hist.bins(); ++i) {
    const double l = fs_to_seconds(hist.edges_fs[i]), u = fs_to_seconds(hist.edges_fs[i + 1]);
    if (l + 1e-15 < tau_lo || !(hist.normalization[i] > 0.0)) continue;
    const double c = static_cast<double>(hist.counts[i]);
    lo.push_back(l);
    hi.push_back(u);
    y.push_back(c / hist.normalization[i]);
    sigma.push_back(std::sqrt(std::max(c, 1.0)) / hist.normalization[i]);
  }
  if (y.size() < 5) throw Error(ErrorCode::InsufficientRange, "fewer than 5 bins beyond the antibunching dip");

  // Start: amplitude from the shortest delays, decay time from the 1/e point.
  const std::size_t head = std::min<std::size_t>(3, y.size());
  double a0 = 0.0;
  for (std::size_t i = 0; i < head; ++i) a0 += y[i] - 1.0;
  a0 /= static_cast<double>(head);
  double tau0 = std::sqrt(lo.front() * hi.back());
  if (a0 > 0.0) {
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] - 1.0 < a0 / std::exp(1.0)) {
        tau0 = 0.5 * (lo[i] + hi[i]);
        break;
      }
  }

  // ln tau_f is held inside the fitted delay range through a logistic map;
  // outside it a flat g2 leaves tau_f free to run off and LM never settles.
  const double ln_lo = std::log(lo.front()), ln_hi = std::log(hi.back());
  auto tau_of = [&](double q) { return std::exp(ln_lo + (ln_hi - ln_lo) / (1.0 + std::exp(-q))); };
  auto dln_dq = [&](double q) {
    const double sg = 1.0 / (1.0 + std::exp(-q));
    return (ln_hi - ln_lo) * sg * (1.0 - sg);
  };
  const double f0 = std::clamp((std::log(tau0) - ln_lo) / (ln_hi - ln_lo), 0.02, 0.98);

  const std::size_t m = y.size();
  auto residuals = [&](const fitting::Vector& p, fitting::Vector& r, fitting::Matrix& J) {
    const double amp = p(0), tau = tau_of(p(1)), dl = dln_dq(p(1));
    for (std::size_t i = 0; i < m; ++i) {
      const auto avg = exp_bin_average(lo[i], hi[i], tau);
      const auto k = static_cast<Eigen::Index>(i);
      r(k) = (y[i] - 1.0 - amp * avg.value) / sigma[i];
      J(k, 0) = -avg.value / sigma[i];
      J(k, 1) = -amp * tau * dl * avg.d_tau / sigma[i];
    }
  };
  fitting::Vector init(2);
  init << a0, std::log(f0 / (1.0 - f0));
  const auto sol = fitting::levenberg_marquardt(residuals, m, init);
  if (!sol.converged || !sol.params.allFinite()) throw Error(ErrorCode::FitDiverged, "flicker fit did not converge");

  FitResult fit;
  fit.model_name = "flicker: g2 = 1 + amplitude * exp(-tau / tau_f)";
  fit.residual_kind = "weighted_least_squares";
  fit.residual_norm = std::sqrt(sol.objective);
  fit.converged = true;
  fit.iterations = sol.iterations;
  const double tau = tau_of(sol.params(1));
  FitParameter amp{"amplitude", sol.params(0), std::sqrt(sol.covariance(0, 0)), sol.constrained[0]};
  FitParameter tf{"tau_f", tau, tau * dln_dq(sol.params(1)) * std::sqrt(sol.covariance(1, 1)), sol.constrained[1]};
  // Without measurable bunching the decay time is unidentifiable.
  if (std::fabs(amp.value) < 2.0 * amp.uncertainty) tf.constrained = false;
  if (!tf.constrained) tf.uncertainty = std::fabs(tf.value);
  if (!amp.constrained) amp.uncertainty = std::max(amp.uncertainty, std::fabs(amp.value));
  fit.parameters = {amp, tf};
  return fit;
}

}  // namespace photonstat
