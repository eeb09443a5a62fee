// photonstat: simulate, correlate and analyse photon streams from the shell.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "photonstat/correlate.hpp"
#include "photonstat/error.hpp"
#include "photonstat/export.hpp"
#include "photonstat/flid.hpp"
#include "photonstat/parallel.hpp"
#include "photonstat/simulate.hpp"
#include "photonstat/stream.hpp"
#include "photonstat/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace photonstat;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kIo = 3;
constexpr int kAnalysis = 4;

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::IoFailure:
    case ErrorCode::MalformedHeader:
    case ErrorCode::TruncatedFile:
    case ErrorCode::OutOfOrderRecord:
    case ErrorCode::InvalidRecord:
      return kIo;
    case ErrorCode::ParseError:
    case ErrorCode::InvalidModel:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidWindow:
    case ErrorCode::InsufficientPoints:
    case ErrorCode::SpanTooLarge:
    case ErrorCode::DurationTooShort:
    case ErrorCode::TooLarge:
      return kUsage;
    default:
      return kAnalysis;
  }
}

// Collects what the run read, wrote and decided; written once at the end.
struct Manifest {
  std::string subcommand;
  json inputs = json::array();
  json parameters = json::object();
  json outputs = json::array();
  std::optional<std::uint64_t> seed;
  std::string status = "ok";
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void output(const fs::path& p) { outputs.push_back(p.string()); }

  void write(const fs::path& path, int code) const {
    json j;
    j["subcommand"] = subcommand;
    j["tool_version"] = PHOTONSTAT_VERSION;
    j["inputs"] = inputs;
    j["parameters"] = parameters;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["outputs"] = outputs;
    j["threads"] = thread_count();
    j["status"] = status;
    j["exit_code"] = code;
    j["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
      write_json(path, j);
    } catch (const Error& e) {
      std::cerr << "photonstat: " << e.what() << '\n';
    }
  }
};

// ---- simulate config ------------------------------------------------------

using ModelField = double EmitterModel::*;
const std::map<std::string, ModelField>& model_fields() {
  static const std::map<std::string, ModelField> f{
      {"lifetime_bright", &EmitterModel::lifetime_bright},
      {"lifetime_dim", &EmitterModel::lifetime_dim},
      {"qy_bright", &EmitterModel::qy_bright},
      {"qy_dim", &EmitterModel::qy_dim},
      {"rate_charge", &EmitterModel::rate_charge},
      {"rate_discharge", &EmitterModel::rate_discharge},
      {"mean_excitons_at_sat", &EmitterModel::mean_excitons_at_sat},
      {"power_ratio", &EmitterModel::power_ratio},
      {"biexciton_qy", &EmitterModel::biexciton_qy},
      {"biexciton_lifetime_factor", &EmitterModel::biexciton_lifetime_factor},
      {"background_rate", &EmitterModel::background_rate},
      {"detection_efficiency", &EmitterModel::detection_efficiency},
      {"irf_sigma", &EmitterModel::irf_sigma},
  };
  return f;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v))
    throw Error(ErrorCode::ParseError, "config field '" + key + "': not a number: '" + text + "'");
  return v;
}

// key = value lines; '#' starts a comment.
SimulationConfig read_config(const fs::path& path, json& echo) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read config " + path.string());
  SimulationConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ParseError, "config line " + std::to_string(lineno) + ": expected key = value", std::nullopt, lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (auto it = model_fields().find(key); it != model_fields().end()) {
      cfg.model.*(it->second) = parse_number(key, val);
    } else if (key == "sync_rate") {
      cfg.header.sync_rate = parse_number(key, val);
      cfg.header.macrotime_resolution = 1.0 / cfg.header.sync_rate;
    } else if (key == "microtime_resolution") {
      cfg.header.microtime_resolution = parse_number(key, val);
    } else if (key == "channel_count") {
      const double v = parse_number(key, val);
      if (v != std::floor(v) || v < 1 || v > 255) throw Error(ErrorCode::ParseError, "config field 'channel_count': must be an integer in [1, 255]");
      cfg.header.channel_count = static_cast<std::uint16_t>(v);
    } else if (key == "duration") {
      cfg.duration = parse_number(key, val);
    } else if (key == "seed") {
      if (val.empty() || val.find_first_not_of("0123456789") != std::string::npos)
        throw Error(ErrorCode::ParseError, "config field 'seed': not an unsigned integer: '" + val + "'");
      try {
        cfg.seed = std::stoull(val);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "config field 'seed': out of range");
      }
    } else {
      throw Error(ErrorCode::ParseError, "config line " + std::to_string(lineno) + ": unknown field '" + key + "'", std::nullopt, lineno);
    }
    echo[key] = val;
  }
  return cfg;
}

fs::path out_file(const fs::path& dir, const fs::path& input, const std::string& suffix) {
  return dir / (input.stem().string() + suffix);
}

// ---- subcommands ----------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run_simulate(const SimulateArgs& a, Manifest& m) {
  m.inputs.push_back(a.config);
  auto cfg = read_config(a.config, m.parameters);
  if (a.seed) cfg.seed = *a.seed;
  m.seed = cfg.seed;
  m.parameters["duration"] = cfg.duration;
  const auto stream = simulate(cfg);
  write_stream(stream, a.out);
  m.output(a.out);
  std::cout << "wrote " << stream.size() << " records to " << a.out << '\n';
  return kOk;
}

struct G2Args {
  std::string input;
  std::string out_dir = ".";
  std::string mode = "pulsed";
  double bin_width = 0.0;
  double span = 10.0;
  std::optional<double> lifetime;
  bool per_bin = false;
  double tau_min = 10e-9;
  double tau_max = 1.0;
  int bins_per_decade = 10;
  bool no_align = false;
  bool no_fit = false;
};

int run_g2(const G2Args& a, Manifest& m) {
  m.inputs.push_back(a.input);
  m.parameters = {{"mode", a.mode}};
  const auto stream = read_stream(a.input);
  json doc;
  doc["input"] = a.input;
  doc["mode"] = a.mode;
  doc["records"] = stream.size();
  int code = kOk;
  CorrelationHistogram hist;
  if (a.mode == "pulsed") {
    const double bw = a.bin_width > 0.0 ? a.bin_width : stream.header().microtime_resolution;
    m.parameters["bin_width"] = bw;
    m.parameters["span_periods"] = a.span;
    m.parameters["per_bin"] = a.per_bin;
    if (a.lifetime) m.parameters["lifetime"] = *a.lifetime;
    hist = correlate_pulsed(stream, bw, a.span);
    doc["bin_width_s"] = bw;
    try {
      doc["purity"] = to_json(subtract_background(hist, PurityOptions{a.lifetime, a.per_bin}));
      doc["g2_zero_corrected"] = doc["purity"]["g2_zero_corrected"];
      doc["g2_zero_raw"] = doc["purity"]["g2_zero_raw"];
    } catch (const Error& e) {
      doc["purity_error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
      m.status = e.what();
      std::cerr << "photonstat: purity analysis failed: " << e.what() << '\n';
      code = exit_code(e.code()) == kUsage ? kUsage : kAnalysis;
    }
  } else {
    LongDelayOptions o;
    o.tau_min = a.tau_min;
    o.tau_max = a.tau_max;
    o.bins_per_decade = a.bins_per_decade;
    o.align_to_sync = !a.no_align;
    m.parameters["tau_min"] = o.tau_min;
    m.parameters["tau_max"] = o.tau_max;
    m.parameters["bins_per_decade"] = o.bins_per_decade;
    m.parameters["align_to_sync"] = o.align_to_sync;
    hist = correlate_long_delay(stream, o);
    if (!a.no_fit) {
      try {
        const auto fit = fit_flicker(hist);
        doc["flicker_fit"] = to_json(fit);
        doc["plateau"] = 1.0 + fit.value("amplitude");
      } catch (const Error& e) {
        doc["flicker_fit_error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
        m.status = e.what();
        std::cerr << "photonstat: flicker fit failed: " << e.what() << '\n';
        code = kAnalysis;
      }
    }
  }
  doc["bins"] = hist.bins();
  doc["total_starts"] = hist.total_starts;
  doc["total_stops"] = hist.total_stops;
  const auto csv = out_file(a.out_dir, a.input, ".g2.csv");
  const auto js = out_file(a.out_dir, a.input, ".g2.json");
  write_histogram_csv(hist, csv);
  m.output(csv);
  write_json(js, doc);
  m.output(js);
  return code;
}

struct TraceArgs {
  std::string input;
  std::string out_dir = ".";
  double bin_time = kDefaultBinTime;
  bool segment = false;
  bool decays = false;
  bool median = false;
  std::string model = "mono";
  bool no_background = false;
};

int run_trace(const TraceArgs& a, Manifest& m) {
  m.inputs.push_back(a.input);
  const bool segment = a.segment || a.decays;
  m.parameters = {{"bin_time", a.bin_time},   {"segment", segment},           {"decays", a.decays},
                  {"statistic", a.median ? "median" : "mean"}, {"model", a.model}, {"background", !a.no_background}};
  const auto stream = read_stream(a.input);
  const auto intensity = bin_intensity(stream, a.bin_time);
  const auto lifetime =
      mean_arrival_trace(stream, a.bin_time, a.median ? ArrivalStatistic::median : ArrivalStatistic::mean);
  json doc;
  doc["input"] = a.input;
  doc["bin_time_s"] = a.bin_time;
  doc["bins"] = intensity.size();
  doc["records"] = stream.size();

  std::optional<StateSegmentation> seg;
  if (segment) {
    try {
      seg = segment_states(intensity);
      doc["segmentation"] = to_json(*seg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unimodal) throw;
      doc["segmentation"] = {{"unimodal", true}, {"message", e.what()}};
      std::cout << "notice: " << e.what() << "; no state-resolved decays\n";
    }
  }
  const auto csv = out_file(a.out_dir, a.input, ".trace.csv");
  write_trace_csv(intensity, lifetime, seg ? &*seg : nullptr, csv);
  m.output(csv);

  int code = kOk;
  if (a.decays && seg) {
    const auto model = a.model == "bi" ? DecayModel::bi : DecayModel::mono;
    for (const auto& [label, name] : {std::pair{StateLabel::high, "high"}, std::pair{StateLabel::low, "low"}}) {
      try {
        const auto hist = decay_histogram(stream, *seg, label);
        const auto fit = fit_decay(hist, model, !a.no_background);
        doc["decays"][name] = to_json(fit);
        const auto path = out_file(a.out_dir, a.input, std::string(".decay_") + name + ".csv");
        write_decay_csv(hist, &fit, path);
        m.output(path);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::IoFailure) throw;
        doc["decays"][name] = {{"error", to_string(e.code())}, {"message", e.what()}};
        std::cerr << "photonstat: " << name << "-state decay: " << e.what() << '\n';
        m.status = e.what();
        code = kAnalysis;
      }
    }
  }
  const auto js = out_file(a.out_dir, a.input, ".trace.json");
  write_json(js, doc);
  m.output(js);
  return code;
}

struct FlidArgs {
  std::string input;
  std::string out_dir = ".";
  std::string grid = "256x256";
  std::vector<double> bandwidth;
  double bin_time = kDefaultBinTime;
  bool median = false;
};

FlidGrid parse_grid(const std::string& text) {
  FlidGrid g;
  const auto x = text.find('x');
  try {
    std::size_t used = 0;
    if (x == std::string::npos) {
      g.intensity_bins = g.lifetime_bins = std::stoul(text, &used);
      if (used != text.size()) throw std::invalid_argument("grid");
    } else {
      g.intensity_bins = std::stoul(text.substr(0, x), &used);
      if (used != x) throw std::invalid_argument("grid");
      g.lifetime_bins = std::stoul(text.substr(x + 1), &used);
      if (used != text.size() - x - 1) throw std::invalid_argument("grid");
    }
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "--grid expects N or ROWSxCOLS, got '" + text + "'");
  }
  if (g.intensity_bins < 2 || g.lifetime_bins < 2 || g.intensity_bins > 8192 || g.lifetime_bins > 8192)
    throw Error(ErrorCode::InvalidArgument, "--grid dimensions must be in [2, 8192]");
  return g;
}

int run_flid(const FlidArgs& a, Manifest& m) {
  m.inputs.push_back(a.input);
  const auto grid = parse_grid(a.grid);
  FlidBandwidth bw;
  if (!a.bandwidth.empty()) {
    if (a.bandwidth.size() != 2) throw Error(ErrorCode::InvalidArgument, "--bandwidth expects INTENSITY LIFETIME");
    bw.intensity = a.bandwidth[0];
    bw.lifetime = a.bandwidth[1];
  }
  m.parameters = {{"grid", {grid.intensity_bins, grid.lifetime_bins}},
                  {"bin_time", a.bin_time},
                  {"statistic", a.median ? "median" : "mean"},
                  {"bandwidth", a.bandwidth}};
  const auto stream = read_stream(a.input);
  const auto map = build_flid(bin_intensity(stream, a.bin_time),
                              mean_arrival_trace(stream, a.bin_time, a.median ? ArrivalStatistic::median : ArrivalStatistic::mean),
                              stream.header().sync_period(), grid, bw);
  json doc = flid_metadata(map);
  doc["input"] = a.input;
  for (const auto& mode : find_modes(map))
    doc["modes"].push_back({{"intensity", mode.intensity}, {"lifetime_s", mode.lifetime}, {"density", mode.density},
                            {"prominence", mode.prominence}});
  const auto mo = flid_moments(map);
  doc["moments"] = {{"mean_intensity", mo.mean_intensity}, {"mean_lifetime_s", mo.mean_lifetime},
                    {"var_intensity", mo.var_intensity},   {"var_lifetime", mo.var_lifetime},
                    {"covariance", mo.covariance},         {"spread", mo.spread}};
  const auto csv = out_file(a.out_dir, a.input, ".flid.csv");
  const auto pgm = out_file(a.out_dir, a.input, ".flid.pgm");
  const auto ppm = out_file(a.out_dir, a.input, ".flid.ppm");
  const auto js = out_file(a.out_dir, a.input, ".flid.json");
  write_flid_csv(map, csv);
  write_pgm(map, pgm);
  write_ppm(map, ppm);
  write_json(js, doc);
  for (const auto& p : {csv, pgm, ppm, js}) m.output(p);
  return kOk;
}

// Two numeric columns; a non-numeric first line is taken as a header.
std::vector<std::pair<double, double>> read_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::vector<std::pair<double, double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    const auto bad = [&] {
      return Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(lineno) + ": expected two numbers", std::nullopt,
                   lineno);
    };
    if (comma == std::string::npos) throw bad();
    try {
      std::size_t u1 = 0, u2 = 0;
      const std::string a = trim(line.substr(0, comma)), b = trim(line.substr(comma + 1));
      const double x = std::stod(a, &u1), y = std::stod(b, &u2);
      if (u1 != a.size() || u2 != b.size()) throw std::invalid_argument("trailing");
      rows.emplace_back(x, y);
    } catch (const std::exception&) {
      if (lineno == 1) continue;
      throw bad();
    }
  }
  return rows;
}

struct FitArgs {
  std::string saturation;
  std::string spectrum;
  std::string out_dir = ".";
};

int run_fit(const FitArgs& a, Manifest& m) {
  json doc;
  fs::path input;
  if (!a.saturation.empty()) {
    input = a.saturation;
    m.parameters = {{"kind", "saturation"}};
    std::vector<SaturationPoint> pts;
    for (const auto& [p, i] : read_pairs(input)) pts.push_back({p, i});
    const auto fit = fit_saturation(pts);
    doc = to_json(fit);
  } else {
    input = a.spectrum;
    m.parameters = {{"kind", "spectrum"}};
    std::vector<double> wl, y;
    for (const auto& [w, i] : read_pairs(input)) {
      wl.push_back(w);
      y.push_back(i);
    }
    const auto s = fit_spectrum(wl, y);
    doc = to_json(s.fit);
    doc["cew_nm"] = s.cew;
    doc["fwhm_nm"] = s.fwhm;
  }
  m.inputs.push_back(input.string());
  doc["input"] = input.string();
  const auto js = out_file(a.out_dir, input, ".fit.json");
  write_json(js, doc);
  m.output(js);
  return kOk;
}

// Runs one subcommand, turning library errors into exit codes and writing
// the manifest whatever happens.
template <class Fn>
int guarded(Manifest& m, const fs::path& manifest_path, Fn&& fn) {
  int code = kOk;
  try {
    code = fn();
  } catch (const Error& e) {
    std::cerr << "photonstat " << m.subcommand << ": " << e.what() << '\n';
    m.status = std::string(to_string(e.code())) + ": " + e.what();
    code = exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "photonstat " << m.subcommand << ": " << e.what() << '\n';
    m.status = e.what();
    code = kIo;
  }
  if (!manifest_path.parent_path().empty() && !fs::is_directory(manifest_path.parent_path())) return code;
  m.write(manifest_path, code);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"photonstat: photon-statistics analysis of TTTR streams"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PHOTONSTAT_VERSION);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: PHOTONSTAT_THREADS, else all cores)")
      ->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo photon stream from a key = value config");
  c_sim->add_option("config", sim.config, "config file")->required();
  c_sim->add_option("-o,--out", sim.out, "output .pstr file")->required();
  c_sim->add_option("--seed", sim.seed, "override the config seed");

  G2Args g2;
  auto* c_g2 = app.add_subcommand("g2", "second-order correlation histogram");
  c_g2->add_option("stream", g2.input, "input .pstr file")->required();
  c_g2->add_option("-o,--out-dir", g2.out_dir, "output directory");
  c_g2->add_option("--mode", g2.mode, "pulsed or long")->check(CLI::IsMember({"pulsed", "long"}));
  c_g2->add_option("--bin-width", g2.bin_width, "pulsed bin width in s (default: microtime resolution)");
  c_g2->add_option("--span", g2.span, "pulsed half-range in sync periods");
  c_g2->add_option("--lifetime", g2.lifetime, "emitter lifetime in s for the peak window");
  c_g2->add_flag("--per-bin", g2.per_bin, "background-correct bin by bin");
  c_g2->add_option("--tau-min", g2.tau_min, "long mode: smallest delay in s");
  c_g2->add_option("--tau-max", g2.tau_max, "long mode: largest delay in s");
  c_g2->add_option("--bins-per-decade", g2.bins_per_decade, "long mode: log bins per decade");
  c_g2->add_flag("--no-align", g2.no_align, "long mode: keep raw log edges");
  c_g2->add_flag("--no-fit", g2.no_fit, "long mode: skip the flicker fit");

  TraceArgs tr;
  auto* c_tr = app.add_subcommand("trace", "intensity and lifetime traces, state segmentation, decays");
  c_tr->add_option("stream", tr.input, "input .pstr file")->required();
  c_tr->add_option("-o,--out-dir", tr.out_dir, "output directory");
  c_tr->add_option("--bin-time", tr.bin_time, "bin time in s")->capture_default_str();
  c_tr->add_flag("--segment", tr.segment, "split bins into high and low states");
  c_tr->add_flag("--decays", tr.decays, "fit state-resolved decays (implies --segment)");
  c_tr->add_flag("--median", tr.median, "median instead of mean arrival time");
  c_tr->add_option("--model", tr.model, "decay model")->check(CLI::IsMember({"mono", "bi"}));
  c_tr->add_flag("--no-background", tr.no_background, "fit decays without a background term");

  FlidArgs fl;
  auto* c_fl = app.add_subcommand("flid", "fluorescence lifetime-intensity distribution");
  c_fl->add_option("stream", fl.input, "input .pstr file")->required();
  c_fl->add_option("-o,--out-dir", fl.out_dir, "output directory");
  c_fl->add_option("--grid", fl.grid, "N or ROWSxCOLS (rows = intensity)")->capture_default_str();
  c_fl->add_option("--bandwidth", fl.bandwidth, "INTENSITY LIFETIME kernel widths")->expected(2);
  c_fl->add_option("--bin-time", fl.bin_time, "bin time in s")->capture_default_str();
  c_fl->add_flag("--median", fl.median, "median instead of mean arrival time");

  FitArgs ft;
  auto* c_ft = app.add_subcommand("fit", "saturation or spectrum fit from a two-column CSV");
  auto* o_sat = c_ft->add_option("--saturation", ft.saturation, "power,intensity CSV");
  auto* o_spec = c_ft->add_option("--spectrum", ft.spectrum, "wavelength_nm,intensity CSV");
  o_sat->excludes(o_spec);
  c_ft->add_option("-o,--out-dir", ft.out_dir, "output directory");

  try {
    app.parse(argc, argv);
    if (c_ft->parsed() && ft.saturation.empty() && ft.spectrum.empty())
      throw CLI::ValidationError("fit", "one of --saturation or --spectrum is required");
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (threads == 0) {
    if (const char* env = std::getenv("PHOTONSTAT_THREADS"); env && *env) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (*end != '\0' || v < 1) {
        std::cerr << "photonstat: PHOTONSTAT_THREADS must be a positive integer\n";
        return kUsage;
      }
      threads = static_cast<int>(v);
    }
  }
  if (threads > 0) set_thread_count(static_cast<std::size_t>(threads));

  Manifest m;
  if (c_sim->parsed()) {
    m.subcommand = "simulate";
    fs::path out(sim.out);
    return guarded(m, out.parent_path() / (out.stem().string() + ".manifest.json"), [&] { return run_simulate(sim, m); });
  }
  auto manifest_in = [](const std::string& dir, const fs::path& input, const std::string& tag) {
    return fs::path(dir) / (input.stem().string() + "." + tag + ".manifest.json");
  };
  if (c_g2->parsed()) {
    m.subcommand = "g2";
    return guarded(m, manifest_in(g2.out_dir, g2.input, "g2"), [&] { return run_g2(g2, m); });
  }
  if (c_tr->parsed()) {
    m.subcommand = "trace";
    return guarded(m, manifest_in(tr.out_dir, tr.input, "trace"), [&] { return run_trace(tr, m); });
  }
  if (c_fl->parsed()) {
    m.subcommand = "flid";
    return guarded(m, manifest_in(fl.out_dir, fl.input, "flid"), [&] { return run_flid(fl, m); });
  }
  m.subcommand = "fit";
  const fs::path fit_in = ft.saturation.empty() ? ft.spectrum : ft.saturation;
  return guarded(m, manifest_in(ft.out_dir, fit_in, "fit"), [&] { return run_fit(ft, m); });
}
