#include <algorithm>
#include <cmath>

#include "photonstat/correlate.hpp"
#include "photonstat/error.hpp"
#include "photonstat/parallel.hpp"

namespace photonstat {

namespace {

constexpr std::size_t kChunk = 1 << 16;

}  // namespace

std::vector<double> CorrelationHistogram::bin_edges() const {
  std::vector<double> out(edges_fs.size());
  std::transform(edges_fs.begin(), edges_fs.end(), out.begin(), fs_to_seconds);
  return out;
}

std::vector<double> CorrelationHistogram::centers() const {
  std::vector<double> out(bins());
  for (std::size_t i = 0; i < bins(); ++i) out[i] = 0.5 * (fs_to_seconds(edges_fs[i]) + fs_to_seconds(edges_fs[i + 1]));
  return out;
}

std::vector<double> CorrelationHistogram::g2() const {
  std::vector<double> out(bins());
  for (std::size_t i = 0; i < bins(); ++i)
    out[i] = normalization[i] > 0.0 ? static_cast<double>(counts[i]) / normalization[i]
                                    : std::numeric_limits<double>::quiet_NaN();
  return out;
}

CorrelationHistogram correlate_pulsed(const PhotonStream& stream, double bin_width, double span_periods) {
  const auto& h = stream.header();
  if (!(bin_width >= h.microtime_resolution) || !std::isfinite(bin_width))
    throw Error(ErrorCode::InvalidArgument, "bin_width must be >= microtime_resolution");
  if (!(span_periods >= 1.0) || !std::isfinite(span_periods))
    throw Error(ErrorCode::InvalidArgument, "span must be at least one sync period");
  const double period = h.sync_period();
  if (span_periods * period > h.duration) throw Error(ErrorCode::SpanTooLarge, "span exceeds the stream duration");

  const auto starts = stream.channel_times_fs(kChannelA);
  const auto stops = stream.channel_times_fs(kChannelB);
  if (starts.empty() || stops.empty()) throw Error(ErrorCode::EmptyChannel, "both HBT channels need photons");

  // Central bin [-half, half + 1) on the integer clock; side bins of width bw
  // mirror each other exactly under t -> -t.
  const std::int64_t bw = std::max<std::int64_t>(1, seconds_to_fs(bin_width));
  const std::int64_t half = bw / 2;
  const std::int64_t reach = seconds_to_fs(span_periods * period);
  const std::int64_t n_side = std::max<std::int64_t>(0, (reach - half + bw - 1) / bw);
  const std::int64_t lo = -half - n_side * bw;
  const std::int64_t hi = half + 1 + n_side * bw;
  const auto n_bins = static_cast<std::size_t>(2 * n_side + 1);

  CorrelationHistogram hist;
  hist.mode = CorrelationMode::pulsed;
  hist.edges_fs.reserve(n_bins + 1);
  for (std::int64_t m = n_side; m >= 1; --m) hist.edges_fs.push_back(-half - m * bw);
  hist.edges_fs.push_back(-half);
  for (std::int64_t m = 0; m <= n_side; ++m) hist.edges_fs.push_back(half + 1 + m * bw);

  auto bin_of = [&](std::int64_t d) -> std::size_t {
    if (d > half) return static_cast<std::size_t>(n_side + 1 + (d - half - 1) / bw);
    if (d < -half) return static_cast<std::size_t>(n_side - 1 - (-half - 1 - d) / bw);
    return static_cast<std::size_t>(n_side);
  };

  const std::size_t n_chunks = (starts.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<std::uint64_t>> partial(n_chunks, std::vector<std::uint64_t>(n_bins, 0));
  parallel_for(n_chunks, [&](std::size_t c) {
    auto& counts = partial[c];
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(starts.size(), begin + kChunk);
    auto first = std::lower_bound(stops.begin(), stops.end(), starts[begin] + lo);
    for (std::size_t i = begin; i < end; ++i) {
      const std::int64_t a = starts[i];
      while (first != stops.end() && *first < a + lo) ++first;
      for (auto it = first; it != stops.end() && *it < a + hi; ++it) ++counts[bin_of(*it - a)];
    }
  });
  hist.counts.assign(n_bins, 0);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < n_bins; ++i) hist.counts[i] += p[i];

  hist.total_starts = starts.size();
  hist.total_stops = stops.size();
  hist.span = h.duration;
  hist.sync_period = period;

  // Mean side-peak area over whole periods centred on k T, k = +-1..+-K.
  const auto centers = hist.centers();
  const auto n_peaks = static_cast<int>(std::floor(span_periods + 1e-9));
  double side_sum = 0.0;
  int side_n = 0;
  for (int k = -n_peaks; k <= n_peaks; ++k) {
    if (k == 0) continue;
    const double c0 = (k - 0.5) * period, c1 = (k + 0.5) * period;
    if (c0 < centers.front() || c1 > centers.back() + 0.5 * bin_width) continue;
    double area = 0.0;
    for (std::size_t i = 0; i < n_bins; ++i)
      if (centers[i] >= c0 && centers[i] < c1) area += static_cast<double>(hist.counts[i]);
    side_sum += area;
    ++side_n;
  }
  double norm = side_n > 0 ? side_sum / side_n : 0.0;
  if (!(norm > 0.0)) {
    norm = static_cast<double>(starts.size()) * static_cast<double>(stops.size()) * period / h.duration;
  }
  hist.normalization.assign(n_bins, norm);
  return hist;
}

CorrelationHistogram correlate_brute_force_fs(const PhotonStream& stream, std::span<const std::int64_t> edges,
                                              CorrelationMode mode) {
  if (stream.size() > kBruteForceLimit) throw Error(ErrorCode::TooLarge, "brute force limited to 1e5 records");
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw Error(ErrorCode::InvalidArgument, "bin edges must be strictly increasing");

  const auto starts = stream.channel_times_fs(kChannelA);
  const auto stops = stream.channel_times_fs(kChannelB);
  CorrelationHistogram hist;
  hist.mode = mode;
  hist.edges_fs.assign(edges.begin(), edges.end());
  hist.counts.assign(edges.size() - 1, 0);
  for (const std::int64_t a : starts) {
    for (const std::int64_t b : stops) {
      std::int64_t d = b - a;
      if (mode == CorrelationMode::long_delay) d = d < 0 ? -d : d;
      if (d < edges.front() || d >= edges.back()) continue;
      const auto bin = std::upper_bound(edges.begin(), edges.end(), d) - edges.begin() - 1;
      ++hist.counts[static_cast<std::size_t>(bin)];
    }
  }
  const auto& h = stream.header();
  hist.total_starts = starts.size();
  hist.total_stops = stops.size();
  hist.span = h.duration;
  hist.sync_period = h.sync_period();
  // Uniform (Poissonian) expectation, with the finite-span edge correction.
  const double T = h.duration;
  const double rate2 = T > 0.0 ? static_cast<double>(starts.size()) * static_cast<double>(stops.size()) / (T * T) : 0.0;
  const double signs = mode == CorrelationMode::long_delay ? 2.0 : 1.0;
  hist.normalization.resize(hist.bins());
  for (std::size_t i = 0; i < hist.bins(); ++i) {
    const double lo = fs_to_seconds(edges[i]), hi = fs_to_seconds(edges[i + 1]);
    const double overlap = mode == CorrelationMode::long_delay
                               ? (hi - lo) * T - 0.5 * (hi * hi - lo * lo)
                               : (hi - lo) * T;
    hist.normalization[i] = signs * rate2 * std::max(overlap, 0.0);
  }
  return hist;
}

CorrelationHistogram correlate_brute_force(const PhotonStream& stream, std::span<const double> bin_edges,
                                           CorrelationMode mode) {
  std::vector<std::int64_t> edges(bin_edges.size());
  std::transform(bin_edges.begin(), bin_edges.end(), edges.begin(), seconds_to_fs);
  return correlate_brute_force_fs(stream, edges, mode);
}

}  // namespace photonstat
