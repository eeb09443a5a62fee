#include <cmath>
#include <vector>

#include "photonstat/correlate.hpp"
#include "photonstat/error.hpp"

namespace photonstat {

double corrected_coincidences(double counts, double background) noexcept {
  if (background <= 0.0) return counts;
  if (counts <= background) return 0.0;
  return counts + background - 2.0 * std::sqrt(counts) * std::sqrt(background);
}

namespace {

// d/dM and d/dM_b of corrected_coincidences.
double d_counts(double m, double b) { return (b <= 0.0) ? 1.0 : (m <= b ? 0.0 : 1.0 - std::sqrt(b / m)); }
double d_background(double m, double b) { return (b <= 0.0 || m <= b) ? 0.0 : 1.0 - std::sqrt(m / b); }

struct Peak {
  std::vector<double> bins;  // raw counts inside the integration window
  double area = 0.0;
  double corrected = 0.0;
  double d_plateau = 0.0;   // d corrected / d plateau level
  double var_counts = 0.0;  // Poisson variance of `corrected` from its own bins
};

}  // namespace

PurityResult subtract_background(const CorrelationHistogram& hist, const PurityOptions& options) {
  if (hist.mode != CorrelationMode::pulsed) throw Error(ErrorCode::InvalidArgument, "pulsed histogram required");
  if (hist.bins() < 3 || !(hist.sync_period > 0.0)) throw Error(ErrorCode::InvalidArgument, "empty histogram");
  const double T = hist.sync_period;
  const auto centers = hist.centers();
  const double bw = fs_to_seconds(hist.edges_fs[1] - hist.edges_fs[0]);
  const double lo = fs_to_seconds(hist.edges_fs.front());
  const double hi = fs_to_seconds(hist.edges_fs.back());
  const auto& counts = hist.counts;
  const std::size_t n = hist.bins();

  // Peaks whose full period [kT - T/2, kT + T/2] lies inside the histogram.
  const int K = static_cast<int>(std::floor(std::min(-lo, hi) / T - 0.5 + 1e-9));
  if (K < 2) throw Error(ErrorCode::InvalidArgument, "at least 4 side peaks required");

  auto phase_offset = [&](double c, int k) { return c - k * T; };

  // First-pass plateau from the middle half of each full period gap.
  double plateau0 = 0.0;
  std::size_t plateau0_n = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = centers[i];
    const int k = static_cast<int>(std::floor(c / T));
    if (k < -K || k >= K) continue;
    const double off = phase_offset(c, k);
    if (off >= 0.25 * T && off < 0.75 * T) {
      plateau0 += static_cast<double>(counts[i]);
      ++plateau0_n;
    }
  }
  if (plateau0_n > 0) plateau0 /= static_cast<double>(plateau0_n);

  double lifetime = 0.0;
  if (options.lifetime) {
    lifetime = *options.lifetime;
    if (!(lifetime > 0.0)) throw Error(ErrorCode::InvalidArgument, "lifetime must be > 0");
  } else {
    // Mean |offset| of the background-subtracted side-peak profile; equals the
    // decay time for a two-sided exponential peak.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = centers[i];
      const int k = static_cast<int>(std::lround(c / T));
      if (k == 0 || std::abs(k) > K) continue;
      const double off = std::fabs(phase_offset(c, k));
      if (off >= 0.25 * T) continue;
      const double w = static_cast<double>(counts[i]) - plateau0;
      num += w * off;
      den += w;
    }
    lifetime = den > 0.0 && num > 0.0 ? num / den : bw;
  }
  const double half_width = 5.0 * std::max(lifetime, bw);
  const double gap = T - 2.0 * half_width;

  // Plateau: central 50% of the gap between neighbouring peak windows.
  double plateau = 0.0;
  std::size_t plateau_n = 0;
  std::size_t gaps = 0;
  if (gap > 0.0) {
    std::vector<std::size_t> per_gap(static_cast<std::size_t>(2 * K), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = centers[i];
      const int k = static_cast<int>(std::floor(c / T));
      if (k < -K || k >= K) continue;
      const double off = phase_offset(c, k);
      if (off >= half_width + 0.25 * gap && off < half_width + 0.75 * gap) {
        plateau += static_cast<double>(counts[i]);
        ++plateau_n;
        ++per_gap[static_cast<std::size_t>(k + K)];
      }
    }
    for (auto g : per_gap)
      if (g >= 3) ++gaps;
    if (gaps != per_gap.size()) gaps = 0;
  }
  if (gaps < 4) throw Error(ErrorCode::NoPlateau, "inter-peak plateau narrower than 3 bins");
  plateau /= static_cast<double>(plateau_n);
  const double plateau_var = plateau / static_cast<double>(plateau_n);

  std::vector<Peak> peaks(static_cast<std::size_t>(2 * K + 1));
  for (std::size_t i = 0; i < n; ++i) {
    const double c = centers[i];
    const int k = static_cast<int>(std::lround(c / T));
    if (std::abs(k) > K) continue;
    if (std::fabs(phase_offset(c, k)) <= half_width)
      peaks[static_cast<std::size_t>(k + K)].bins.push_back(static_cast<double>(counts[i]));
  }
  for (auto& p : peaks) {
    for (double v : p.bins) p.area += v;
    const double nb = static_cast<double>(p.bins.size());
    if (options.per_bin) {
      for (double v : p.bins) {
        p.corrected += corrected_coincidences(v, plateau);
        p.d_plateau += d_background(v, plateau);
        const double dm = d_counts(v, plateau);
        p.var_counts += dm * dm * v;
      }
    } else {
      const double mb = plateau * nb;
      p.corrected = corrected_coincidences(p.area, mb);
      p.d_plateau = d_background(p.area, mb) * nb;
      const double dm = d_counts(p.area, mb);
      p.var_counts = dm * dm * p.area;
    }
  }

  const Peak& central = peaks[static_cast<std::size_t>(K)];
  const double n_side = static_cast<double>(2 * K);
  double side_area = 0.0, side_corrected = 0.0, side_linear = 0.0, side_d_plateau = 0.0;
  for (int k = -K; k <= K; ++k) {
    if (k == 0) continue;
    const Peak& p = peaks[static_cast<std::size_t>(k + K)];
    side_area += p.area;
    side_corrected += p.corrected;
    side_linear += p.area - plateau * static_cast<double>(p.bins.size());
    side_d_plateau += p.d_plateau;
  }
  side_area /= n_side;
  side_corrected /= n_side;
  side_linear /= n_side;
  side_d_plateau /= n_side;
  if (!(side_area > 0.0)) throw Error(ErrorCode::InvalidArgument, "side peaks are empty");
  if (!(side_corrected > 0.0)) throw Error(ErrorCode::InvalidArgument, "no side-peak signal above background");

  PurityResult out;
  out.background_level = plateau;
  out.central_peak_area = central.area;
  out.mean_side_peak_area = side_area;
  out.corrected_central_area = central.corrected;
  out.corrected_mean_side_area = side_corrected;
  out.g2_zero_raw = central.area / side_area;
  out.g2_zero_corrected = central.corrected / side_corrected;
  out.g2_zero_linear_subtraction =
      (central.area - plateau * static_cast<double>(central.bins.size())) / side_linear;
  out.peak_half_width = half_width;
  out.side_peaks = static_cast<std::size_t>(2 * K);
  out.plateau_gaps = gaps;

  // First-order Poisson propagation; the plateau level is shared by every peak.
  {
    const double g = out.g2_zero_raw;
    double var = central.area / (side_area * side_area);
    for (int k = -K; k <= K; ++k)
      if (k != 0) {
        const double a = peaks[static_cast<std::size_t>(k + K)].area;
        var += g * g * a / (n_side * n_side * side_area * side_area);
      }
    out.raw_uncertainty = std::sqrt(var);
  }
  {
    const double g = out.g2_zero_corrected;
    const double S = side_corrected;
    double var = central.var_counts / (S * S);
    for (int k = -K; k <= K; ++k)
      if (k != 0) var += g * g * peaks[static_cast<std::size_t>(k + K)].var_counts / (n_side * n_side * S * S);
    const double dp = (central.d_plateau - g * side_d_plateau) / S;
    if (plateau > 0.0) var += dp * dp * plateau_var;
    out.uncertainty = std::sqrt(var);
  }
  return out;
}

}  // namespace photonstat
