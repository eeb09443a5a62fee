#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <limits>

#include "photonstat/correlate.hpp"
#include "photonstat/error.hpp"
#include "photonstat/fit.hpp"
#include "photonstat/flid.hpp"
#include "photonstat/parallel.hpp"
#include "photonstat/simulate.hpp"
#include "photonstat/stream.hpp"
#include "photonstat/trace.hpp"

namespace py = pybind11;
using namespace photonstat;

namespace {

template <class T>
py::array_t<T> to_array(const std::vector<T>& v) {
  return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

template <class T>
std::vector<T> from_array(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  return std::vector<T>(a.data(), a.data() + a.size());
}

py::dict parameters(const FitResult& f) {
  py::dict d;
  for (const auto& p : f.parameters)
    d[py::str(p.name)] = py::dict(py::arg("value") = p.value, py::arg("uncertainty") = p.uncertainty,
                                  py::arg("constrained") = p.constrained);
  return d;
}

StateLabel label_of(const std::string& s) {
  if (s == "high") return StateLabel::high;
  if (s == "low") return StateLabel::low;
  throw Error(ErrorCode::InvalidArgument, "state must be 'high' or 'low'");
}

}  // namespace

PYBIND11_MODULE(_photonstat, m) {
  m.doc() = "photon-statistics analysis of time-tagged single-emitter data";

  static py::object error_type = py::reinterpret_borrow<py::object>(PyExc_RuntimeError);
  error_type = py::reinterpret_steal<py::object>(
      PyErr_NewException("photonstat._photonstat.PhotonstatError", PyExc_RuntimeError, nullptr));
  m.attr("PhotonstatError") = error_type;
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = error_type(e.what());
      err.attr("code") = std::string(to_string(e.code()));
      err.attr("index") = e.index() ? py::cast(*e.index()) : py::none();
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  m.def("thread_count", &thread_count);
  m.def("set_thread_count", &set_thread_count, py::arg("n"));

  // ---- streams
  py::class_<StreamHeader>(m, "StreamHeader")
      .def(py::init<>())
      .def_readwrite("sync_rate", &StreamHeader::sync_rate)
      .def_readwrite("microtime_resolution", &StreamHeader::microtime_resolution)
      .def_readwrite("macrotime_resolution", &StreamHeader::macrotime_resolution)
      .def_readwrite("duration", &StreamHeader::duration)
      .def_readwrite("channel_count", &StreamHeader::channel_count)
      .def_property_readonly("sync_period", &StreamHeader::sync_period);

  py::class_<PhotonStream>(m, "PhotonStream")
      .def(py::init([](const StreamHeader& h, const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& ch,
                       const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& micro,
                       const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& macro) {
             if (ch.size() != micro.size() || ch.size() != macro.size())
               throw Error(ErrorCode::InvalidArgument, "channel, microtime and macrotime lengths differ");
             std::vector<PhotonRecord> recs(static_cast<std::size_t>(ch.size()));
             for (std::size_t i = 0; i < recs.size(); ++i) recs[i] = {ch.data()[i], micro.data()[i], macro.data()[i]};
             return PhotonStream(h, std::move(recs));
           }),
           py::arg("header"), py::arg("channel"), py::arg("microtime"), py::arg("macrotime"))
      .def_property_readonly("header", &PhotonStream::header)
      .def("__len__", &PhotonStream::size)
      .def("__eq__", [](const PhotonStream& a, const PhotonStream& b) { return a == b; })
      .def_property_readonly("channel", [](const PhotonStream& s) {
        std::vector<std::uint8_t> v;
        for (const auto& r : s.records()) v.push_back(r.channel);
        return to_array(v);
      })
      .def_property_readonly("microtime", [](const PhotonStream& s) {
        std::vector<std::uint16_t> v;
        for (const auto& r : s.records()) v.push_back(r.microtime);
        return to_array(v);
      })
      .def_property_readonly("macrotime", [](const PhotonStream& s) {
        std::vector<std::uint64_t> v;
        for (const auto& r : s.records()) v.push_back(r.macrotime);
        return to_array(v);
      })
      .def("times", [](const PhotonStream& s) {
        const Timebase tb(s.header());
        std::vector<double> v;
        for (const auto& r : s.records()) v.push_back(tb.time_s(r));
        return to_array(v);
      }, "absolute arrival times in s");

  m.def("read_stream", &read_stream, py::arg("path"));
  m.def("write_stream", &write_stream, py::arg("stream"), py::arg("path"));
  m.def("import_csv", [](const std::filesystem::path& p, const StreamHeader& h, bool sort) {
    return import_csv(p, h, {.sort = sort});
  }, py::arg("path"), py::arg("header"), py::arg("sort") = false);
  m.def("window", &window, py::arg("stream"), py::arg("t0"), py::arg("t1"));

  // ---- simulation
  py::class_<EmitterModel>(m, "EmitterModel")
      .def(py::init<>())
      .def_readwrite("lifetime_bright", &EmitterModel::lifetime_bright)
      .def_readwrite("lifetime_dim", &EmitterModel::lifetime_dim)
      .def_readwrite("qy_bright", &EmitterModel::qy_bright)
      .def_readwrite("qy_dim", &EmitterModel::qy_dim)
      .def_readwrite("rate_charge", &EmitterModel::rate_charge)
      .def_readwrite("rate_discharge", &EmitterModel::rate_discharge)
      .def_readwrite("mean_excitons_at_sat", &EmitterModel::mean_excitons_at_sat)
      .def_readwrite("power_ratio", &EmitterModel::power_ratio)
      .def_readwrite("biexciton_qy", &EmitterModel::biexciton_qy)
      .def_readwrite("biexciton_lifetime_factor", &EmitterModel::biexciton_lifetime_factor)
      .def_readwrite("background_rate", &EmitterModel::background_rate)
      .def_readwrite("detection_efficiency", &EmitterModel::detection_efficiency)
      .def_readwrite("irf_sigma", &EmitterModel::irf_sigma);

  py::class_<SimulationConfig>(m, "SimulationConfig")
      .def(py::init<>())
      .def_readwrite("model", &SimulationConfig::model)
      .def_readwrite("header", &SimulationConfig::header)
      .def_readwrite("seed", &SimulationConfig::seed)
      .def_readwrite("duration", &SimulationConfig::duration);

  m.def("simulate", &simulate, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("analytic_flicker_plateau", &analytic_flicker_plateau, py::arg("model"), py::arg("sync_rate") = 2.5e6);
  m.def("detected_per_pulse", &detected_per_pulse, py::arg("model"), py::arg("bright"));

  // ---- correlation
  py::class_<CorrelationHistogram>(m, "CorrelationHistogram")
      .def_property_readonly("mode", [](const CorrelationHistogram& h) {
        return h.mode == CorrelationMode::pulsed ? "pulsed" : "long_delay";
      })
      .def_property_readonly("edges", [](const CorrelationHistogram& h) { return to_array(h.bin_edges()); })
      .def_property_readonly("centers", [](const CorrelationHistogram& h) { return to_array(h.centers()); })
      .def_property_readonly("counts", [](const CorrelationHistogram& h) { return to_array(h.counts); })
      .def_property_readonly("normalization", [](const CorrelationHistogram& h) { return to_array(h.normalization); })
      .def_property_readonly("g2", [](const CorrelationHistogram& h) { return to_array(h.g2()); })
      .def_readonly("span", &CorrelationHistogram::span)
      .def_readonly("sync_period", &CorrelationHistogram::sync_period)
      .def("__len__", &CorrelationHistogram::bins);

  py::class_<PurityResult>(m, "PurityResult")
      .def_readonly("g2_zero_raw", &PurityResult::g2_zero_raw)
      .def_readonly("g2_zero_corrected", &PurityResult::g2_zero_corrected)
      .def_readonly("g2_zero_linear_subtraction", &PurityResult::g2_zero_linear_subtraction)
      .def_readonly("uncertainty", &PurityResult::uncertainty)
      .def_readonly("raw_uncertainty", &PurityResult::raw_uncertainty)
      .def_readonly("background_level", &PurityResult::background_level)
      .def_readonly("central_peak_area", &PurityResult::central_peak_area)
      .def_readonly("mean_side_peak_area", &PurityResult::mean_side_peak_area)
      .def_readonly("peak_half_width", &PurityResult::peak_half_width)
      .def_readonly("side_peaks", &PurityResult::side_peaks);

  m.def("correlate_pulsed", &correlate_pulsed, py::arg("stream"), py::arg("bin_width"), py::arg("span_periods") = 10.0,
        py::call_guard<py::gil_scoped_release>());
  m.def("subtract_background", [](const CorrelationHistogram& h, std::optional<double> lifetime, bool per_bin) {
    return subtract_background(h, {.lifetime = lifetime, .per_bin = per_bin});
  }, py::arg("hist"), py::arg("lifetime") = py::none(), py::arg("per_bin") = false);
  m.def("corrected_coincidences", &corrected_coincidences, py::arg("counts"), py::arg("background"));
  m.def("correlate_long_delay",
        [](const PhotonStream& s, double tau_min, double tau_max, int bins_per_decade, bool align) {
          LongDelayOptions o;
          o.tau_min = tau_min;
          o.tau_max = tau_max;
          o.bins_per_decade = bins_per_decade;
          o.align_to_sync = align;
          py::gil_scoped_release nogil;
          return correlate_long_delay(s, o);
        },
        py::arg("stream"), py::arg("tau_min") = 10e-9, py::arg("tau_max") = 1.0, py::arg("bins_per_decade") = 10,
        py::arg("align_to_sync") = true);
  m.def("correlate_brute_force", [](const PhotonStream& s, const std::vector<std::int64_t>& edges_fs, const std::string& mode) {
    return correlate_brute_force_fs(s, edges_fs, mode == "pulsed" ? CorrelationMode::pulsed : CorrelationMode::long_delay);
  }, py::arg("stream"), py::arg("edges_fs"), py::arg("mode"));
  m.def("fit_flicker", [](const CorrelationHistogram& h, std::optional<double> tau_min) {
    return fit_flicker(h, {.tau_min = tau_min});
  }, py::arg("hist"), py::arg("tau_min") = py::none());

  // ---- fits
  py::class_<FitResult>(m, "FitResult")
      .def_readonly("model_name", &FitResult::model_name)
      .def_readonly("residual_norm", &FitResult::residual_norm)
      .def_readonly("residual_kind", &FitResult::residual_kind)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("iterations", &FitResult::iterations)
      .def_property_readonly("parameters", &parameters)
      .def("value", [](const FitResult& f, const std::string& n) { return f.value(n); })
      .def("uncertainty", [](const FitResult& f, const std::string& n) { return f.uncertainty(n); });

  py::class_<StateSegmentation>(m, "StateSegmentation")
      .def_readonly("threshold_low", &StateSegmentation::threshold_low)
      .def_readonly("threshold_high", &StateSegmentation::threshold_high)
      .def_readonly("mean_low", &StateSegmentation::mean_low)
      .def_readonly("mean_high", &StateSegmentation::mean_high)
      .def_readonly("sigma_low", &StateSegmentation::sigma_low)
      .def_readonly("sigma_high", &StateSegmentation::sigma_high)
      .def_property_readonly("labels", [](const StateSegmentation& s) {
        std::vector<std::uint8_t> v;
        for (auto l : s.labels) v.push_back(static_cast<std::uint8_t>(l));
        return to_array(v);
      }, "0 low, 1 high, 2 excluded");

  py::class_<DecayHistogram>(m, "DecayHistogram")
      .def_readonly("resolution", &DecayHistogram::resolution)
      .def_readonly("sync_period", &DecayHistogram::sync_period)
      .def_property_readonly("counts", [](const DecayHistogram& h) { return to_array(h.counts); })
      .def("total", &DecayHistogram::total);

  m.def("bin_intensity", [](const PhotonStream& s, double bin_time) { return to_array(bin_intensity(s, bin_time).counts); },
        py::arg("stream"), py::arg("bin_time") = kDefaultBinTime);
  m.def("mean_arrival_trace", [](const PhotonStream& s, double bin_time, bool median) {
    const auto t = mean_arrival_trace(s, bin_time, median ? ArrivalStatistic::median : ArrivalStatistic::mean);
    std::vector<double> v;
    for (const auto& a : t.mean_arrival) v.push_back(a.value_or(std::numeric_limits<double>::quiet_NaN()));
    return to_array(v);
  }, py::arg("stream"), py::arg("bin_time") = kDefaultBinTime, py::arg("median") = false);
  m.def("segment_states", [](const PhotonStream& s, double bin_time) { return segment_states(bin_intensity(s, bin_time)); },
        py::arg("stream"), py::arg("bin_time") = kDefaultBinTime);
  m.def("decay_histogram", [](const PhotonStream& s, const StateSegmentation* seg, const std::string& state) {
    return seg ? decay_histogram(s, *seg, label_of(state)) : decay_histogram(s);
  }, py::arg("stream"), py::arg("segmentation") = nullptr, py::arg("state") = "high");
  m.def("fit_decay", [](const DecayHistogram& h, const std::string& model, bool background) {
    if (model != "mono" && model != "bi") throw Error(ErrorCode::InvalidArgument, "model must be 'mono' or 'bi'");
    return fit_decay(h, model == "bi" ? DecayModel::bi : DecayModel::mono, background);
  }, py::arg("hist"), py::arg("model") = "mono", py::arg("background") = true);
  m.def("fit_saturation", [](const std::vector<double>& power, const std::vector<double>& intensity) {
    if (power.size() != intensity.size()) throw Error(ErrorCode::InvalidArgument, "power and intensity lengths differ");
    std::vector<SaturationPoint> pts;
    for (std::size_t i = 0; i < power.size(); ++i) pts.push_back({power[i], intensity[i]});
    return fit_saturation(pts);
  }, py::arg("power"), py::arg("intensity"));
  m.def("saturation_model", &saturation_model, py::arg("power"), py::arg("a"), py::arg("b"), py::arg("p_sat"));
  m.def("fit_spectrum", [](const std::vector<double>& wl, const std::vector<double>& y) {
    const auto s = fit_spectrum(wl, y);
    py::dict d;
    d["cew"] = s.cew;
    d["fwhm"] = s.fwhm;
    d["amplitude"] = s.amplitude;
    d["baseline"] = s.baseline;
    d["fit"] = s.fit;
    return d;
  }, py::arg("wavelengths"), py::arg("intensities"));

  // ---- FLID
  py::class_<FlidMap>(m, "FlidMap")
      .def_property_readonly("density", [](const FlidMap& f) {
        py::array_t<double> a({f.rows(), f.cols()});
        std::copy(f.density.begin(), f.density.end(), a.mutable_data());
        return a;
      }, "rows are intensity, columns lifetime")
      .def_property_readonly("intensity_axis", [](const FlidMap& f) { return to_array(f.intensity_axis); })
      .def_property_readonly("lifetime_axis", [](const FlidMap& f) { return to_array(f.lifetime_axis); })
      .def_readonly("bandwidth_intensity", &FlidMap::bandwidth_intensity)
      .def_readonly("bandwidth_lifetime", &FlidMap::bandwidth_lifetime)
      .def_readonly("sample_count", &FlidMap::sample_count)
      .def("integral", &FlidMap::integral);

  py::class_<FlidMode>(m, "FlidMode")
      .def_readonly("intensity", &FlidMode::intensity)
      .def_readonly("lifetime", &FlidMode::lifetime)
      .def_readonly("density", &FlidMode::density)
      .def_readonly("prominence", &FlidMode::prominence);

  py::class_<FlidMoments>(m, "FlidMoments")
      .def_readonly("mean_intensity", &FlidMoments::mean_intensity)
      .def_readonly("mean_lifetime", &FlidMoments::mean_lifetime)
      .def_readonly("var_intensity", &FlidMoments::var_intensity)
      .def_readonly("var_lifetime", &FlidMoments::var_lifetime)
      .def_readonly("covariance", &FlidMoments::covariance)
      .def_readonly("spread", &FlidMoments::spread);

  m.def("build_flid",
        [](const PhotonStream& s, double bin_time, std::pair<std::size_t, std::size_t> grid,
           std::optional<double> bw_intensity, std::optional<double> bw_lifetime) {
          py::gil_scoped_release nogil;
          return build_flid(s, bin_time, {grid.first, grid.second}, {bw_intensity, bw_lifetime});
        },
        py::arg("stream"), py::arg("bin_time") = kDefaultBinTime, py::arg("grid") = std::pair<std::size_t, std::size_t>{256, 256},
        py::arg("bandwidth_intensity") = py::none(), py::arg("bandwidth_lifetime") = py::none());
  m.def("find_modes", &find_modes, py::arg("map"), py::arg("min_prominence") = 0.01);
  m.def("flid_moments", &flid_moments, py::arg("map"));
}
