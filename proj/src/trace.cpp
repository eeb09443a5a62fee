#include "photonstat/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "photonstat/error.hpp"

namespace photonstat {

namespace {

struct BinLayout {
  std::int64_t bin_fs = 0;
  std::size_t n = 0;
};

BinLayout layout(const PhotonStream& stream, double bin_time) {
  if (!(bin_time > 0.0) || !std::isfinite(bin_time)) throw Error(ErrorCode::InvalidArgument, "bin_time must be > 0");
  BinLayout l;
  l.bin_fs = seconds_to_fs(bin_time);
  if (l.bin_fs <= 0) throw Error(ErrorCode::InvalidArgument, "bin_time below clock resolution");
  l.n = static_cast<std::size_t>(seconds_to_fs(stream.header().duration) / l.bin_fs);
  const Timebase tb(stream.header());
  for (auto it = stream.records().rbegin(); it != stream.records().rend(); ++it) {
    if (it->channel == kMarkerChannel) continue;
    l.n = std::max(l.n, static_cast<std::size_t>(tb.time_fs(*it) / l.bin_fs) + 1);
    break;
  }
  return l;
}

}  // namespace

IntensityTrace bin_intensity(const PhotonStream& stream, double bin_time) {
  const auto l = layout(stream, bin_time);
  IntensityTrace trace;
  trace.bin_time = bin_time;
  trace.counts.assign(l.n, 0);
  const Timebase tb(stream.header());
  for (const auto& r : stream.records())
    if (r.channel != kMarkerChannel) ++trace.counts[static_cast<std::size_t>(tb.time_fs(r) / l.bin_fs)];
  return trace;
}

LifetimeTrace mean_arrival_trace(const PhotonStream& stream, double bin_time, ArrivalStatistic statistic) {
  const auto l = layout(stream, bin_time);
  const Timebase tb(stream.header());
  const double res = stream.header().microtime_resolution;
  LifetimeTrace trace;
  trace.bin_time = bin_time;
  trace.statistic = statistic;
  trace.mean_arrival.assign(l.n, std::nullopt);

  if (statistic == ArrivalStatistic::mean) {
    // Integer sums keep the result independent of summation order.
    std::vector<std::uint64_t> sum(l.n, 0), n(l.n, 0);
    for (const auto& r : stream.records()) {
      if (r.channel == kMarkerChannel) continue;
      const auto b = static_cast<std::size_t>(tb.time_fs(r) / l.bin_fs);
      sum[b] += r.microtime;
      ++n[b];
    }
    for (std::size_t b = 0; b < l.n; ++b)
      if (n[b] > 0) trace.mean_arrival[b] = static_cast<double>(sum[b]) / static_cast<double>(n[b]) * res;
    return trace;
  }

  std::vector<std::uint16_t> micro;
  std::size_t current = l.n;
  auto flush = [&] {
    if (micro.empty()) return;
    const std::size_t m = micro.size() / 2;
    std::nth_element(micro.begin(), micro.begin() + static_cast<std::ptrdiff_t>(m), micro.end());
    double med = micro[m];
    if (micro.size() % 2 == 0) med = 0.5 * (med + *std::max_element(micro.begin(), micro.begin() + static_cast<std::ptrdiff_t>(m)));
    trace.mean_arrival[current] = med * res;
    micro.clear();
  };
  for (const auto& r : stream.records()) {
    if (r.channel == kMarkerChannel) continue;
    const auto b = static_cast<std::size_t>(tb.time_fs(r) / l.bin_fs);
    if (b != current) {
      flush();
      current = b;
    }
    micro.push_back(r.microtime);
  }
  flush();
  return trace;
}

std::size_t StateSegmentation::count(StateLabel label) const noexcept {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

namespace {

constexpr double kVarianceFloor = 0.25;  // counts are integers

double normal_logpdf(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

// Otsu split of integer-valued data; returns the threshold t with classes
// x <= t and x > t.
double otsu(const std::vector<double>& x) {
  const auto max_v = static_cast<std::size_t>(*std::max_element(x.begin(), x.end()));
  std::vector<double> hist(max_v + 1, 0.0);
  for (double v : x) hist[static_cast<std::size_t>(v)] += 1.0;
  const double total = static_cast<double>(x.size());
  double sum_all = 0.0;
  for (std::size_t v = 0; v <= max_v; ++v) sum_all += static_cast<double>(v) * hist[v];
  double w0 = 0.0, sum0 = 0.0, best = -1.0, best_t = 0.0;
  for (std::size_t t = 0; t < max_v; ++t) {
    w0 += hist[t];
    sum0 += static_cast<double>(t) * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = static_cast<double>(t);
    }
  }
  return best_t;
}

}  // namespace

StateSegmentation segment_states(const IntensityTrace& trace) {
  if (trace.size() < 100) throw Error(ErrorCode::InvalidArgument, "segmentation needs at least 100 bins");
  std::vector<double> x(trace.counts.begin(), trace.counts.end());
  const double n = static_cast<double>(x.size());

  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var = std::max(var / n, kVarianceFloor);
  double ll1 = 0.0;
  for (double v : x) ll1 += normal_logpdf(v, mu, var);

  const double cut = otsu(x);
  double w[2] = {0, 0}, m[2] = {0, 0}, s2[2] = {0, 0};
  for (double v : x) {
    const int k = v > cut ? 1 : 0;
    w[k] += 1.0;
    m[k] += v;
  }
  if (w[0] == 0.0 || w[1] == 0.0) throw Error(ErrorCode::Unimodal, "trace has a single intensity level");
  for (int k = 0; k < 2; ++k) m[k] /= w[k];
  for (double v : x) {
    const int k = v > cut ? 1 : 0;
    s2[k] += (v - m[k]) * (v - m[k]);
  }
  for (int k = 0; k < 2; ++k) {
    s2[k] = std::max(s2[k] / w[k], kVarianceFloor);
    w[k] /= n;
  }

  std::vector<double> resp(x.size());
  double ll2 = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 1000; ++iter) {
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double a = std::log(w[0]) + normal_logpdf(x[i], m[0], s2[0]);
      const double b = std::log(w[1]) + normal_logpdf(x[i], m[1], s2[1]);
      const double top = std::max(a, b);
      const double lse = top + std::log(std::exp(a - top) + std::exp(b - top));
      resp[i] = std::exp(b - lse);
      ll += lse;
    }
    double r1 = 0.0, sx1 = 0.0, sx0 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      r1 += resp[i];
      sx1 += resp[i] * x[i];
      sx0 += (1.0 - resp[i]) * x[i];
    }
    const double r0 = n - r1;
    if (r0 <= 1.0 || r1 <= 1.0) throw Error(ErrorCode::Unimodal, "mixture collapsed to one component");
    m[0] = sx0 / r0;
    m[1] = sx1 / r1;
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      v0 += (1.0 - resp[i]) * (x[i] - m[0]) * (x[i] - m[0]);
      v1 += resp[i] * (x[i] - m[1]) * (x[i] - m[1]);
    }
    s2[0] = std::max(v0 / r0, kVarianceFloor);
    s2[1] = std::max(v1 / r1, kVarianceFloor);
    w[0] = r0 / n;
    w[1] = r1 / n;
    const bool done = std::fabs(ll - ll2) <= 1e-10 * std::fabs(ll);
    ll2 = ll;
    if (done) break;
  }
  if (m[0] > m[1]) {
    std::swap(m[0], m[1]);
    std::swap(s2[0], s2[1]);
    std::swap(w[0], w[1]);
  }

  StateSegmentation seg;
  seg.bin_time = trace.bin_time;
  seg.start_time = trace.start_time;
  seg.weight_low = w[0];
  seg.mean_low = m[0];
  seg.sigma_low = std::sqrt(s2[0]);
  seg.weight_high = w[1];
  seg.mean_high = m[1];
  seg.sigma_high = std::sqrt(s2[1]);
  seg.threshold_low = seg.mean_low + 2.0 * seg.sigma_low;
  seg.threshold_high = seg.mean_high - 2.0 * seg.sigma_high;

  const double bic1 = 2.0 * std::log(n) - 2.0 * ll1;
  const double bic2 = 5.0 * std::log(n) - 2.0 * ll2;
  if (bic2 >= bic1) throw Error(ErrorCode::Unimodal, "one intensity component fits as well as two");
  if (seg.threshold_low > seg.threshold_high)
    throw Error(ErrorCode::Unimodal, "intensity components overlap within 2 sigma");
  if (std::min(w[0], w[1]) < 0.01) throw Error(ErrorCode::Unimodal, "second component holds under 1% of bins");

  seg.labels.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= seg.threshold_low)
      seg.labels[i] = StateLabel::low;
    else if (x[i] >= seg.threshold_high)
      seg.labels[i] = StateLabel::high;
    else
      seg.labels[i] = StateLabel::excluded;
  }
  return seg;
}

std::uint64_t DecayHistogram::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::size_t DecayHistogram::full_bins() const noexcept {
  if (!(resolution > 0.0)) return 0;
  const auto full = static_cast<std::size_t>(std::floor(sync_period / resolution * (1.0 + 1e-12)));
  return std::min(full, counts.size());
}

namespace {

DecayHistogram empty_decay(const StreamHeader& h) {
  DecayHistogram d;
  d.resolution = h.microtime_resolution;
  d.sync_period = h.sync_period();
  d.counts.assign(static_cast<std::size_t>(std::ceil(d.sync_period / d.resolution * (1.0 - 1e-12))), 0);
  return d;
}

}  // namespace

DecayHistogram decay_histogram(const PhotonStream& stream) {
  auto d = empty_decay(stream.header());
  for (const auto& r : stream.records())
    if (r.channel != kMarkerChannel) ++d.counts[r.microtime];
  return d;
}

DecayHistogram decay_histogram(const PhotonStream& stream, const StateSegmentation& seg, StateLabel label) {
  if (!(seg.bin_time > 0.0)) throw Error(ErrorCode::InvalidArgument, "segmentation has no bin time");
  auto d = empty_decay(stream.header());
  const Timebase tb(stream.header());
  const std::int64_t bin_fs = seconds_to_fs(seg.bin_time);
  const std::int64_t start_fs = seconds_to_fs(seg.start_time);
  for (const auto& r : stream.records()) {
    if (r.channel == kMarkerChannel) continue;
    const std::int64_t t = tb.time_fs(r) - start_fs;
    if (t < 0) continue;
    const auto b = static_cast<std::size_t>(t / bin_fs);
    if (b < seg.labels.size() && seg.labels[b] == label) ++d.counts[r.microtime];
  }
  if (d.total() == 0) throw Error(ErrorCode::EmptySelection, "no photons in the selected state");
  return d;
}

std::size_t decay_peak_bin(const DecayHistogram& hist) {
  const std::size_t n = hist.full_bins();
  if (n == 0) return 0;
  return static_cast<std::size_t>(std::max_element(hist.counts.begin(), hist.counts.begin() + static_cast<std::ptrdiff_t>(n)) -
                                  hist.counts.begin());
}

namespace {

struct DecayLayout {
  int components = 1;
  bool background = true;
  double tau_max = 1.0;  // fit window span
  Eigen::Index size() const { return 2 * components + (background ? 1 : 0); }
  // Lifetimes live in (0, tau_max): a longer one is indistinguishable from
  // background over the window and leaves A and bg degenerate.
  double tau(double q) const { return tau_max / (1.0 + std::exp(-q)); }
  double dtau(double q) const {
    const double x = tau(q);
    return x * (1.0 - x / tau_max);
  }
  double q_of(double tau) const {
    const double x = std::clamp(tau, 1e-6 * tau_max, 0.95 * tau_max);
    return std::log(x / (tau_max - x));
  }
};

// params: [A_1, q_1, A_2, q_2, ..., bg] with tau_i = L.tau(q_i)
void decay_mu(const DecayLayout& L, const fitting::Vector& p, const std::vector<double>& t, fitting::Vector& mu,
              fitting::Matrix& J) {
  for (std::size_t j = 0; j < t.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    double v = L.background ? p(L.size() - 1) : 0.0;
    for (int c = 0; c < L.components; ++c) {
      const double a = p(2 * c), q = p(2 * c + 1), tau = L.tau(q);
      const double e = std::exp(-t[j] / tau);
      v += a * e;
      J(row, 2 * c) = e;
      J(row, 2 * c + 1) = a * e * t[j] / (tau * tau) * L.dtau(q);
    }
    if (L.background) J(row, L.size() - 1) = 1.0;
    if (v >= 0.0 && v < 1e-300) v = 1e-300;
    mu(row) = v;
  }
}

}  // namespace

FitResult fit_decay(const DecayHistogram& hist, DecayModel model, bool background) {
  if (hist.total() < 1000) throw Error(ErrorCode::InsufficientCounts, "decay fit needs at least 1000 counts");
  const std::size_t peak = decay_peak_bin(hist);
  const std::size_t end = hist.full_bins();
  if (end < peak + 8) throw Error(ErrorCode::InsufficientCounts, "too few bins after the decay peak");
  std::vector<double> t, y;
  for (std::size_t j = peak; j < end; ++j) {
    t.push_back(static_cast<double>(j - peak) * hist.resolution);
    y.push_back(static_cast<double>(hist.counts[j]));
  }

  // Starting values: tail level, peak height, first moment of the excess.
  double bg0 = 0.0;
  if (background) {
    const std::size_t tail = std::max<std::size_t>(1, y.size() / 5);
    for (std::size_t j = y.size() - tail; j < y.size(); ++j) bg0 += y[j];
    bg0 /= static_cast<double>(tail);
  }
  const double a0 = std::max(y.front() - bg0, 1.0);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double ex = std::max(y[j] - bg0, 0.0);
    num += t[j] * ex;
    den += ex;
  }
  const double tau_hi = t.back();
  double tau0 = den > 0.0 ? num / den : 0.1 * tau_hi;
  tau0 = std::clamp(tau0, hist.resolution, tau_hi);

  auto run = [&](const DecayLayout& L, const fitting::Vector& init) {
    auto fn = [&](const fitting::Vector& p, fitting::Vector& mu, fitting::Matrix& J) { decay_mu(L, p, t, mu, J); };
    return fitting::poisson_mle(fn, y, init);
  };

  DecayLayout mono{1, background, tau_hi};
  fitting::Vector init(mono.size());
  init(0) = a0;
  init(1) = mono.q_of(tau0);
  if (background) init(2) = bg0;
  auto best = run(mono, init);
  DecayLayout layout_used = mono;

  if (model == DecayModel::bi) {
    const double tm = best.converged ? mono.tau(best.params(1)) : tau0;
    const double am = best.converged ? best.params(0) : a0;
    const double bgm = background && best.converged ? best.params(2) : bg0;
    DecayLayout bi{2, background, tau_hi};
    const double starts[][2] = {{2.0, 1.0 / 3.0}, {1.3, 1.0 / 8.0}, {3.0, 1.0 / 1.5}, {1.1, 1.0 / 20.0}};
    std::optional<fitting::Solution> chosen;
    for (const auto& s : starts) {
      fitting::Vector p(bi.size());
      p(0) = 0.5 * am;
      p(1) = bi.q_of(tm * s[0]);
      p(2) = 0.5 * am;
      p(3) = bi.q_of(tm * s[1]);
      if (background) p(4) = bgm;
      try {
        auto sol = run(bi, p);
        if (sol.converged && (!chosen || sol.objective > chosen->objective)) chosen = std::move(sol);
      } catch (const Error&) {
      }
    }
    if (!chosen) throw Error(ErrorCode::FitDiverged, "bi-exponential decay fit did not converge");
    best = std::move(*chosen);
    layout_used = bi;
  }
  if (!best.converged) throw Error(ErrorCode::FitDiverged, "decay fit did not converge");

  const auto& p = best.params;
  const auto& C = best.covariance;
  struct Comp {
    FitParameter tau, amp;
  };
  std::vector<Comp> comps;
  for (int c = 0; c < layout_used.components; ++c) {
    const double q = p(2 * c + 1), tau = layout_used.tau(q);
    Comp k;
    k.amp = {"", p(2 * c), std::sqrt(C(2 * c, 2 * c)), best.constrained[static_cast<std::size_t>(2 * c)]};
    k.tau = {"", tau, layout_used.dtau(q) * std::sqrt(C(2 * c + 1, 2 * c + 1)),
             best.constrained[static_cast<std::size_t>(2 * c + 1)]};
    if (std::fabs(k.amp.value) < 2.0 * k.amp.uncertainty) k.tau.constrained = false;
    if (!k.tau.constrained) k.tau.uncertainty = std::fabs(k.tau.value);
    comps.push_back(k);
  }
  std::sort(comps.begin(), comps.end(), [](const Comp& a, const Comp& b) { return a.tau.value > b.tau.value; });

  FitResult fit;
  fit.model_name = layout_used.components == 1 ? "decay: A exp(-t/tau1)" : "decay: A1 exp(-t/tau1) + A2 exp(-t/tau2)";
  if (background) fit.model_name += " + background";
  for (std::size_t c = 0; c < comps.size(); ++c) {
    comps[c].tau.name = "tau" + std::to_string(c + 1);
    fit.parameters.push_back(comps[c].tau);
  }
  for (std::size_t c = 0; c < comps.size(); ++c) {
    comps[c].amp.name = "amplitude" + std::to_string(c + 1);
    fit.parameters.push_back(comps[c].amp);
  }
  if (background) {
    const auto k = layout_used.size() - 1;
    fit.parameters.push_back({"background", p(k), std::sqrt(C(k, k)), best.constrained[static_cast<std::size_t>(k)]});
  }
  fit.converged = true;
  fit.iterations = best.iterations;
  fit.residual_kind = "poisson_pearson";
  const auto mu = decay_expectation(fit, hist);
  double chi2 = 0.0;
  for (std::size_t j = peak; j < end; ++j) {
    const double d = static_cast<double>(hist.counts[j]) - mu[j];
    chi2 += d * d / mu[j];
  }
  fit.residual_norm = std::sqrt(chi2);
  return fit;
}

std::vector<double> decay_expectation(const FitResult& fit, const DecayHistogram& hist) {
  const std::size_t peak = decay_peak_bin(hist);
  std::vector<double> mu(hist.counts.size(), 0.0);
  double bg = 0.0;
  for (const auto& p : fit.parameters)
    if (p.name == "background") bg = p.value;
  for (std::size_t j = peak; j < hist.counts.size(); ++j) {
    const double t = static_cast<double>(j - peak) * hist.resolution;
    double v = bg;
    for (int c = 1; c <= 2; ++c) {
      const auto tau_name = "tau" + std::to_string(c);
      const auto amp_name = "amplitude" + std::to_string(c);
      const auto it = std::find_if(fit.parameters.begin(), fit.parameters.end(),
                                   [&](const FitParameter& q) { return q.name == tau_name; });
      if (it == fit.parameters.end()) break;
      v += fit.value(amp_name) * std::exp(-t / it->value);
    }
    mu[j] = std::max(v, 1e-300);
  }
  return mu;
}

double saturation_model(double power, double a, double b, double p_sat) noexcept {
  return a * (1.0 - std::exp(-power / p_sat)) + b * power;
}

FitResult fit_saturation(std::span<const SaturationPoint> points) {
  if (points.size() < 5) throw Error(ErrorCode::InsufficientPoints, "saturation fit needs at least 5 points");
  std::vector<SaturationPoint> pts(points.begin(), points.end());
  for (const auto& q : pts)
    if (!std::isfinite(q.power) || !std::isfinite(q.intensity) || q.power < 0.0)
      throw Error(ErrorCode::InvalidArgument, "saturation points must be finite with power >= 0");
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.power < b.power; });

  double i_max = 0.0;
  for (const auto& q : pts) i_max = std::max(i_max, q.intensity);
  if (!(i_max > 0.0)) throw Error(ErrorCode::FitDiverged, "no positive intensity to fit");

  // P_sat guess: power where the curve first reaches half the maximum.
  double p0 = pts.back().power;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].intensity >= 0.5 * i_max) {
      if (i == 0) {
        p0 = pts[0].power;
      } else {
        const auto& a = pts[i - 1];
        const auto& b = pts[i];
        const double f = (0.5 * i_max - a.intensity) / (b.intensity - a.intensity);
        p0 = a.power + f * (b.power - a.power);
      }
      break;
    }
  }
  const double p_min = pts.front().power, p_max = pts.back().power;
  if (!(p_min > 0.0) || p_max < 12.0 * p_min * (1.0 - 1e-9) || p0 < p_min || p0 > p_max)
    throw Error(ErrorCode::InsufficientPoints, "powers must bracket P_sat over at least a 12:1 range");

  const std::size_t m = pts.size();
  std::vector<double> sigma(m);
  for (std::size_t i = 0; i < m; ++i) sigma[i] = std::sqrt(std::max(pts[i].intensity, 1.0));

  auto residuals = [&](const fitting::Vector& p, fitting::Vector& r, fitting::Matrix& J) {
    const double a = p(0), b = p(1), ps = std::exp(p(2));
    for (std::size_t i = 0; i < m; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double x = pts[i].power / ps;
      const double e = std::exp(-x);
      r(k) = (pts[i].intensity - saturation_model(pts[i].power, a, b, ps)) / sigma[i];
      J(k, 0) = -(1.0 - e) / sigma[i];
      J(k, 1) = -pts[i].power / sigma[i];
      J(k, 2) = a * e * x / sigma[i];
    }
  };
  fitting::Vector init(3);
  init << i_max, 0.0, std::log(p0);
  fitting::LeastSquaresOptions opts;
  opts.scale_covariance = true;
  const auto sol = fitting::levenberg_marquardt(residuals, m, init, opts);
  const bool identified = std::all_of(sol.constrained.begin(), sol.constrained.end(), [](bool c) { return c; });
  if (!sol.converged || !identified || !(sol.params(0) > 0.0))
    throw Error(ErrorCode::FitDiverged, "saturation fit degenerate");

  FitResult fit;
  fit.model_name = "saturation: A (1 - exp(-P / P_sat)) + B P";
  fit.residual_kind = "weighted_least_squares";
  fit.residual_norm = std::sqrt(sol.objective);
  fit.converged = true;
  fit.iterations = sol.iterations;
  const double ps = std::exp(sol.params(2));
  fit.parameters = {{"A", sol.params(0), std::sqrt(sol.covariance(0, 0)), true},
                    {"B", sol.params(1), std::sqrt(sol.covariance(1, 1)), true},
                    {"P_sat", ps, ps * std::sqrt(sol.covariance(2, 2)), true}};
  return fit;
}

SpectrumFit fit_spectrum(std::span<const double> wl, std::span<const double> y) {
  if (wl.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "wavelength and intensity lengths differ");
  if (wl.size() < 10) throw Error(ErrorCode::InsufficientPoints, "spectrum fit needs at least 10 samples");
  for (std::size_t i = 0; i < wl.size(); ++i)
    if (!std::isfinite(wl[i]) || !std::isfinite(y[i])) throw Error(ErrorCode::InvalidArgument, "non-finite sample");
  const std::size_t m = wl.size();

  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  const double base0 = sorted[m / 10];
  const std::size_t imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double height = y[imax] - base0;
  if (!(height > 1e-12 * std::max(std::fabs(y[imax]), 1e-300))) throw Error(ErrorCode::NoPeak, "flat spectrum");

  // Dominance: exactly one excursion above half height, with hysteresis at
  // a quarter height so noise on a single peak is not split.
  int regions = 0;
  bool inside = false;
  double lo_w = wl[imax], hi_w = wl[imax];
  for (std::size_t i = 0; i < m; ++i) {
    const double v = y[i] - base0;
    if (!inside && v >= 0.5 * height) {
      inside = true;
      ++regions;
    } else if (inside && v < 0.25 * height) {
      inside = false;
    }
    if (v >= 0.5 * height && regions == 1) {
      lo_w = std::min(lo_w, wl[i]);
      hi_w = std::max(hi_w, wl[i]);
    }
  }
  if (regions != 1) throw Error(ErrorCode::NoPeak, "no single dominant peak");

  double step = std::fabs(wl[m - 1] - wl[0]) / static_cast<double>(m - 1);
  const double sigma0 = std::max((hi_w - lo_w) / (2.0 * std::sqrt(2.0 * std::log(2.0))), step);

  auto residuals = [&](const fitting::Vector& p, fitting::Vector& r, fitting::Matrix& J) {
    const double a = p(0), c = p(1), s = std::exp(p(2)), b = p(3);
    for (std::size_t i = 0; i < m; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double d = wl[i] - c;
      const double g = std::exp(-0.5 * d * d / (s * s));
      r(k) = y[i] - (b + a * g);
      J(k, 0) = -g;
      J(k, 1) = -a * g * d / (s * s);
      J(k, 2) = -a * g * d * d / (s * s);
      J(k, 3) = -1.0;
    }
  };
  fitting::Vector init(4);
  init << height, wl[imax], std::log(sigma0), base0;
  fitting::LeastSquaresOptions opts;
  opts.scale_covariance = true;
  const auto sol = fitting::levenberg_marquardt(residuals, m, init, opts);
  const double wl_lo = std::min(wl.front(), wl.back()), wl_hi = std::max(wl.front(), wl.back());
  if (!sol.converged || !(sol.params(0) > 0.0) || sol.params(1) < wl_lo || sol.params(1) > wl_hi)
    throw Error(ErrorCode::NoPeak, "peak fit failed");

  const double s = std::exp(sol.params(2));
  const double k_fwhm = 2.0 * std::sqrt(2.0 * std::log(2.0));
  SpectrumFit out;
  out.cew = sol.params(1);
  out.fwhm = k_fwhm * s;
  out.amplitude = sol.params(0);
  out.baseline = sol.params(3);
  out.fit.model_name = "spectrum: baseline + amplitude exp(-(lambda - center)^2 / (2 sigma^2))";
  out.fit.residual_kind = "weighted_least_squares";
  out.fit.residual_norm = std::sqrt(sol.objective);
  out.fit.converged = true;
  out.fit.iterations = sol.iterations;
  const auto& C = sol.covariance;
  out.fit.parameters = {{"amplitude", out.amplitude, std::sqrt(C(0, 0)), sol.constrained[0]},
                        {"center", out.cew, std::sqrt(C(1, 1)), sol.constrained[1]},
                        {"sigma", s, s * std::sqrt(C(2, 2)), sol.constrained[2]},
                        {"baseline", out.baseline, std::sqrt(C(3, 3)), sol.constrained[3]},
                        {"fwhm", out.fwhm, k_fwhm * s * std::sqrt(C(2, 2)), sol.constrained[2]}};
  return out;
}

}  // namespace photonstat
