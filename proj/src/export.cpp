#include "photonstat/export.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "photonstat/error.hpp"

namespace photonstat {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

const char* label_name(StateLabel l) {
  switch (l) {
    case StateLabel::low: return "low";
    case StateLabel::high: return "high";
    case StateLabel::excluded: return "excluded";
  }
  return "excluded";
}

}  // namespace

nlohmann::json to_json(const FitResult& fit) {
  nlohmann::json j;
  j["model"] = fit.model_name;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["residual_norm"] = number(fit.residual_norm);
  j["residual_kind"] = fit.residual_kind;
  auto& params = j["parameters"] = nlohmann::json::object();
  for (const auto& p : fit.parameters)
    params[p.name] = {{"value", number(p.value)}, {"uncertainty", number(p.uncertainty)}, {"constrained", p.constrained}};
  return j;
}

nlohmann::json to_json(const PurityResult& p) {
  return {{"g2_zero_raw", number(p.g2_zero_raw)},
          {"g2_zero_raw_uncertainty", number(p.raw_uncertainty)},
          {"g2_zero_corrected", number(p.g2_zero_corrected)},
          {"g2_zero_corrected_uncertainty", number(p.uncertainty)},
          {"g2_zero_linear_subtraction", number(p.g2_zero_linear_subtraction)},
          {"background_level", number(p.background_level)},
          {"central_peak_area", number(p.central_peak_area)},
          {"mean_side_peak_area", number(p.mean_side_peak_area)},
          {"corrected_central_area", number(p.corrected_central_area)},
          {"corrected_mean_side_area", number(p.corrected_mean_side_area)},
          {"peak_half_width_s", number(p.peak_half_width)},
          {"side_peaks", p.side_peaks},
          {"plateau_gaps", p.plateau_gaps}};
}

nlohmann::json to_json(const StateSegmentation& s) {
  return {{"threshold_low", number(s.threshold_low)},
          {"threshold_high", number(s.threshold_high)},
          {"bins_low", s.count(StateLabel::low)},
          {"bins_high", s.count(StateLabel::high)},
          {"bins_excluded", s.count(StateLabel::excluded)},
          {"low", {{"weight", number(s.weight_low)}, {"mean", number(s.mean_low)}, {"sigma", number(s.sigma_low)}}},
          {"high", {{"weight", number(s.weight_high)}, {"mean", number(s.mean_high)}, {"sigma", number(s.sigma_high)}}}};
}

nlohmann::json flid_metadata(const FlidMap& map) {
  return {{"rows", map.rows()},
          {"cols", map.cols()},
          {"row_axis", "intensity_counts_per_bin"},
          {"col_axis", "mean_arrival_s"},
          {"intensity_range", {0.0, number(map.range.intensity_max)}},
          {"lifetime_range", {0.0, number(map.range.lifetime_max)}},
          {"intensity_axis", map.intensity_axis},
          {"lifetime_axis", map.lifetime_axis},
          {"bandwidth_intensity", number(map.bandwidth_intensity)},
          {"bandwidth_lifetime", number(map.bandwidth_lifetime)},
          {"sample_count", map.sample_count},
          {"cell_area", number(map.cell_area())},
          {"normalization", number(map.integral())}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path, true);
  out << text;
  finish(out, path);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_histogram_csv(const CorrelationHistogram& hist, const std::filesystem::path& path) {
  std::ostringstream s;
  s << "tau_lo_s,tau_hi_s,tau_center_s,counts,normalization,g2\n";
  const auto g2 = hist.g2();
  for (std::size_t i = 0; i < hist.bins(); ++i) {
    const double lo = fs_to_seconds(hist.edges_fs[i]), hi = fs_to_seconds(hist.edges_fs[i + 1]);
    s << format_double(lo) << ',' << format_double(hi) << ',' << format_double(0.5 * (lo + hi)) << ','
      << hist.counts[i] << ',' << format_double(hist.normalization[i]) << ',' << format_double(g2[i]) << '\n';
  }
  write_text(path, s.str());
}

void write_trace_csv(const IntensityTrace& intensity, const LifetimeTrace& lifetime, const StateSegmentation* seg,
                     const std::filesystem::path& path) {
  if (intensity.size() != lifetime.size()) throw Error(ErrorCode::MismatchedTraces, "trace lengths differ");
  std::ostringstream s;
  s << "bin_start_s,counts,mean_arrival_s" << (seg ? ",label" : "") << '\n';
  for (std::size_t i = 0; i < intensity.size(); ++i) {
    s << format_double(intensity.start_time + static_cast<double>(i) * intensity.bin_time) << ',' << intensity.counts[i]
      << ',';
    if (lifetime.mean_arrival[i]) s << format_double(*lifetime.mean_arrival[i]);
    if (seg) s << ',' << label_name(seg->labels[i]);
    s << '\n';
  }
  write_text(path, s.str());
}

void write_decay_csv(const DecayHistogram& hist, const FitResult* fit, const std::filesystem::path& path) {
  std::ostringstream s;
  s << "time_s,counts" << (fit ? ",fit" : "") << '\n';
  std::vector<double> mu;
  if (fit) mu = decay_expectation(*fit, hist);
  const std::size_t peak = fit ? decay_peak_bin(hist) : 0;
  for (std::size_t j = 0; j < hist.counts.size(); ++j) {
    s << format_double(static_cast<double>(j) * hist.resolution) << ',' << hist.counts[j];
    if (fit) {
      s << ',';
      if (j >= peak) s << format_double(mu[j]);
    }
    s << '\n';
  }
  write_text(path, s.str());
}

void write_flid_csv(const FlidMap& map, const std::filesystem::path& path) {
  std::ostringstream s;
  for (std::size_t r = 0; r < map.rows(); ++r) {
    for (std::size_t c = 0; c < map.cols(); ++c) s << (c ? "," : "") << format_double(map.at(r, c));
    s << '\n';
  }
  write_text(path, s.str());
}

std::vector<std::uint8_t> flid_gray(const FlidMap& map) {
  const double top = map.density.empty() ? 0.0 : *std::max_element(map.density.begin(), map.density.end());
  std::vector<std::uint8_t> px(map.rows() * map.cols(), 0);
  if (!(top > 0.0)) return px;
  for (std::size_t r = 0; r < map.rows(); ++r)
    for (std::size_t c = 0; c < map.cols(); ++c) {
      const double v = std::floor(255.0 * map.at(r, c) / top + 0.5);
      px[(map.rows() - 1 - r) * map.cols() + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  return px;
}

namespace {

// viridis sampled at nine evenly spaced points
constexpr std::array<std::array<int, 3>, 9> kViridis{{{68, 1, 84},
                                                       {71, 44, 122},
                                                       {59, 81, 139},
                                                       {44, 113, 142},
                                                       {33, 144, 141},
                                                       {39, 173, 129},
                                                       {92, 200, 99},
                                                       {170, 220, 50},
                                                       {253, 231, 37}}};

std::array<std::uint8_t, 3> viridis(std::uint8_t v) {
  const int seg = std::min(7, v * 8 / 255);
  const int x0 = seg * 255 / 8;
  const int x1 = (seg + 1) * 255 / 8;
  std::array<std::uint8_t, 3> rgb{};
  for (int k = 0; k < 3; ++k) {
    const int a = kViridis[static_cast<std::size_t>(seg)][static_cast<std::size_t>(k)];
    const int b = kViridis[static_cast<std::size_t>(seg + 1)][static_cast<std::size_t>(k)];
    rgb[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(a + ((b - a) * (v - x0) + (x1 - x0) / 2) / (x1 - x0));
  }
  return rgb;
}

}  // namespace

void write_pgm(const FlidMap& map, const std::filesystem::path& path) {
  const auto px = flid_gray(map);
  auto out = open_out(path, true);
  out << "P5\n" << map.cols() << ' ' << map.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  finish(out, path);
}

void write_ppm(const FlidMap& map, const std::filesystem::path& path) {
  const auto px = flid_gray(map);
  std::vector<std::uint8_t> rgb;
  rgb.reserve(px.size() * 3);
  for (auto v : px) {
    const auto c = viridis(v);
    rgb.insert(rgb.end(), c.begin(), c.end());
  }
  auto out = open_out(path, true);
  out << "P6\n" << map.cols() << ' ' << map.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  finish(out, path);
}

}  // namespace photonstat
