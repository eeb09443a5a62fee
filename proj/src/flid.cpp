#include "photonstat/flid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "photonstat/error.hpp"
#include "photonstat/parallel.hpp"

namespace photonstat {

double FlidMap::cell_area() const noexcept {
  if (rows() == 0 || cols() == 0) return 0.0;
  return (range.intensity_max / static_cast<double>(rows())) * (range.lifetime_max / static_cast<double>(cols()));
}

double FlidMap::integral() const noexcept {
  double s = 0.0;
  for (double d : density) s += d;
  return s * cell_area();
}

namespace {

constexpr double kCutoff = 5.0;  // kernel truncated at 5 bandwidths

struct Sample {
  double intensity;
  double lifetime;
  friend auto operator<=>(const Sample&, const Sample&) = default;
};

std::vector<Sample> pair_samples(const IntensityTrace& intensity, const LifetimeTrace& lifetime) {
  if (intensity.size() != lifetime.size() || std::fabs(intensity.bin_time - lifetime.bin_time) > 1e-12 * intensity.bin_time)
    throw Error(ErrorCode::MismatchedTraces, "intensity and lifetime traces differ in binning");
  std::vector<Sample> s;
  for (std::size_t i = 0; i < intensity.size(); ++i)
    if (lifetime.mean_arrival[i]) s.push_back({static_cast<double>(intensity.counts[i]), *lifetime.mean_arrival[i]});
  if (s.size() < 100) throw Error(ErrorCode::TooFewSamples, "FLID needs at least 100 bins with photons");
  // Canonical order: the map must not depend on how samples arrived.
  std::sort(s.begin(), s.end());
  return s;
}

double silverman(const std::vector<Sample>& s, double Sample::*axis) {
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (const auto& x : s) mean += x.*axis;
  mean /= n;
  double var = 0.0;
  for (const auto& x : s) var += (x.*axis - mean) * (x.*axis - mean);
  var /= (n - 1.0);
  return 1.06 * std::sqrt(var) * std::pow(n, -0.2);
}

FlidMap evaluate(const std::vector<Sample>& samples, double sync_period, const FlidGrid& grid,
                 const FlidBandwidth& bandwidth, std::optional<FlidRange> range) {
  if (grid.intensity_bins < 2 || grid.lifetime_bins < 2) throw Error(ErrorCode::InvalidArgument, "grid must be at least 2x2");
  FlidMap map;
  if (range) {
    map.range = *range;
  } else {
    double i_max = 0.0;
    for (const auto& s : samples) i_max = std::max(i_max, s.intensity);
    map.range = {std::max(1.1 * i_max, 1.0), sync_period};
  }
  if (!(map.range.intensity_max > 0.0) || !(map.range.lifetime_max > 0.0))
    throw Error(ErrorCode::InvalidArgument, "FLID range must be positive");

  const std::size_t R = grid.intensity_bins, C = grid.lifetime_bins;
  const double dI = map.range.intensity_max / static_cast<double>(R);
  const double dt = map.range.lifetime_max / static_cast<double>(C);
  map.intensity_axis.resize(R);
  map.lifetime_axis.resize(C);
  for (std::size_t r = 0; r < R; ++r) map.intensity_axis[r] = (static_cast<double>(r) + 0.5) * dI;
  for (std::size_t c = 0; c < C; ++c) map.lifetime_axis[c] = (static_cast<double>(c) + 0.5) * dt;

  auto pick = [](std::optional<double> user, double rule, double floor) {
    if (user) {
      if (!(*user > 0.0) || !std::isfinite(*user)) throw Error(ErrorCode::InvalidArgument, "bandwidth must be > 0");
      return *user;
    }
    return std::max(rule, floor);
  };
  map.bandwidth_intensity = pick(bandwidth.intensity, silverman(samples, &Sample::intensity), 0.5 * dI);
  map.bandwidth_lifetime = pick(bandwidth.lifetime, silverman(samples, &Sample::lifetime), 0.5 * dt);
  map.sample_count = samples.size();
  const double hI = map.bandwidth_intensity, ht = map.bandwidth_lifetime;

  // Column kernel of every sample over its truncated window.
  std::vector<std::size_t> col_begin(samples.size()), offset(samples.size() + 1, 0);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const double lo = samples[s].lifetime - kCutoff * ht, hi = samples[s].lifetime + kCutoff * ht;
    const auto c0 = static_cast<std::size_t>(std::clamp(std::floor(lo / dt), 0.0, static_cast<double>(C)));
    const auto c1 = static_cast<std::size_t>(std::clamp(std::ceil(hi / dt) + 1.0, 0.0, static_cast<double>(C)));
    col_begin[s] = c0;
    offset[s + 1] = offset[s] + (c1 > c0 ? c1 - c0 : 0);
  }
  std::vector<double> col_kernel(offset.back());
  for (std::size_t s = 0; s < samples.size(); ++s)
    for (std::size_t k = offset[s]; k < offset[s + 1]; ++k) {
      const double z = (map.lifetime_axis[col_begin[s] + (k - offset[s])] - samples[s].lifetime) / ht;
      col_kernel[k] = std::exp(-0.5 * z * z);
    }

  // Rows are independent; each is summed in canonical sample order.
  map.density.assign(R * C, 0.0);
  parallel_for(R, [&](std::size_t r) {
    const double y = map.intensity_axis[r];
    const auto first = std::lower_bound(samples.begin(), samples.end(), Sample{y - kCutoff * hI, -1e300});
    double* row = map.density.data() + r * C;
    for (auto it = first; it != samples.end() && it->intensity <= y + kCutoff * hI; ++it) {
      const auto s = static_cast<std::size_t>(it - samples.begin());
      const double z = (y - it->intensity) / hI;
      const double wx = std::exp(-0.5 * z * z);
      for (std::size_t k = offset[s]; k < offset[s + 1]; ++k) row[col_begin[s] + (k - offset[s])] += wx * col_kernel[k];
    }
  });

  // Normalize over the computed window by exact quadrature.
  double total = 0.0;
  for (double d : map.density) total += d;
  total *= map.cell_area();
  if (!(total > 0.0)) throw Error(ErrorCode::TooFewSamples, "no sample density inside the FLID range");
  for (double& d : map.density) d /= total;
  return map;
}

}  // namespace

FlidMap build_flid(const IntensityTrace& intensity, const LifetimeTrace& lifetime, double sync_period,
                   const FlidGrid& grid, const FlidBandwidth& bandwidth, std::optional<FlidRange> range) {
  if (!(sync_period > 0.0)) throw Error(ErrorCode::InvalidArgument, "sync_period must be > 0");
  return evaluate(pair_samples(intensity, lifetime), sync_period, grid, bandwidth, range);
}

FlidMap build_flid(const PhotonStream& stream, double bin_time, const FlidGrid& grid, const FlidBandwidth& bandwidth,
                   std::optional<FlidRange> range) {
  return build_flid(bin_intensity(stream, bin_time), mean_arrival_trace(stream, bin_time),
                    stream.header().sync_period(), grid, bandwidth, range);
}

std::vector<FlidMap> flid_power_series(std::span<const PowerStream> series, double bin_time, const FlidGrid& grid,
                                       const FlidBandwidth& bandwidth) {
  std::vector<IntensityTrace> intensity;
  std::vector<LifetimeTrace> lifetime;
  FlidRange shared;
  double i_max = 0.0;
  for (const auto& e : series) {
    if (e.stream == nullptr) throw Error(ErrorCode::InvalidArgument, "null stream in power series");
    intensity.push_back(bin_intensity(*e.stream, bin_time));
    lifetime.push_back(mean_arrival_trace(*e.stream, bin_time));
    for (auto c : intensity.back().counts) i_max = std::max(i_max, static_cast<double>(c));
    shared.lifetime_max = std::max(shared.lifetime_max, e.stream->header().sync_period());
  }
  shared.intensity_max = std::max(1.1 * i_max, 1.0);
  std::vector<FlidMap> maps;
  for (std::size_t i = 0; i < series.size(); ++i)
    maps.push_back(build_flid(intensity[i], lifetime[i], series[i].stream->header().sync_period(), grid, bandwidth, shared));
  return maps;
}

std::vector<FlidMode> find_modes(const FlidMap& map, double min_prominence) {
  const std::size_t R = map.rows(), C = map.cols(), N = R * C;
  if (N == 0) return {};
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return map.density[a] > map.density[b]; });

  // Union-find over processed cells; each root remembers its peak cell.
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> parent(N, kNone), peak(N, kNone);
  std::vector<double> prominence(N, 0.0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  const double top = map.density[order.front()];
  for (const std::size_t cell : order) {
    const double level = map.density[cell];
    const std::size_t r = cell / C, c = cell % C;
    std::vector<std::size_t> roots;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const auto rr = static_cast<std::ptrdiff_t>(r) + dr, cc = static_cast<std::ptrdiff_t>(c) + dc;
        if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(R) || cc >= static_cast<std::ptrdiff_t>(C)) continue;
        const auto n = static_cast<std::size_t>(rr) * C + static_cast<std::size_t>(cc);
        if (parent[n] == kNone) continue;
        const auto root = find(n);
        if (std::find(roots.begin(), roots.end(), root) == roots.end()) roots.push_back(root);
      }
    if (roots.empty()) {
      parent[cell] = cell;
      peak[cell] = cell;
      continue;
    }
    // The component with the highest peak survives; the others die here.
    auto higher = [&](std::size_t a, std::size_t b) {
      const double da = map.density[peak[a]], db = map.density[peak[b]];
      return da != db ? da > db : peak[a] < peak[b];
    };
    std::sort(roots.begin(), roots.end(), higher);
    for (std::size_t i = 1; i < roots.size(); ++i) {
      prominence[peak[roots[i]]] = map.density[peak[roots[i]]] - level;
      parent[roots[i]] = roots[0];
    }
    parent[cell] = roots[0];
  }
  prominence[order.front()] = top;

  std::vector<FlidMode> modes;
  if (!(top > 0.0)) return modes;
  for (std::size_t cell = 0; cell < N; ++cell) {
    if (peak[cell] != cell) continue;
    const double rel = prominence[cell] / top;
    if (rel < min_prominence || (cell != order.front() && !(prominence[cell] > 0.0))) continue;
    FlidMode m;
    m.row = cell / C;
    m.col = cell % C;
    m.intensity = map.intensity_axis[m.row];
    m.lifetime = map.lifetime_axis[m.col];
    m.density = map.density[cell];
    m.prominence = rel;
    modes.push_back(m);
  }
  std::sort(modes.begin(), modes.end(), [](const FlidMode& a, const FlidMode& b) {
    return a.density != b.density ? a.density > b.density : (a.row != b.row ? a.row < b.row : a.col < b.col);
  });
  return modes;
}

FlidMoments flid_moments(const FlidMap& map) {
  FlidMoments m;
  const double area = map.cell_area();
  double w = 0.0;
  for (std::size_t r = 0; r < map.rows(); ++r)
    for (std::size_t c = 0; c < map.cols(); ++c) {
      const double p = map.at(r, c) * area;
      w += p;
      m.mean_intensity += p * map.intensity_axis[r];
      m.mean_lifetime += p * map.lifetime_axis[c];
    }
  if (!(w > 0.0)) return m;
  m.mean_intensity /= w;
  m.mean_lifetime /= w;
  for (std::size_t r = 0; r < map.rows(); ++r)
    for (std::size_t c = 0; c < map.cols(); ++c) {
      const double p = map.at(r, c) * area / w;
      const double di = map.intensity_axis[r] - m.mean_intensity, dt = map.lifetime_axis[c] - m.mean_lifetime;
      m.var_intensity += p * di * di;
      m.var_lifetime += p * dt * dt;
      m.covariance += p * di * dt;
    }
  m.spread = m.var_intensity / (map.range.intensity_max * map.range.intensity_max) +
             m.var_lifetime / (map.range.lifetime_max * map.range.lifetime_max);
  return m;
}

}  // namespace photonstat
