import math

import numpy as np
import pytest

import photonstat as ps


def reference_config(duration, seed):
    cfg = ps.SimulationConfig()
    cfg.duration = duration
    cfg.seed = seed
    cfg.model.lifetime_bright = 10.2e-9
    cfg.model.lifetime_dim = 1.3e-9
    return cfg


def test_simulate_is_deterministic_and_round_trips(tmp_path):
    cfg = reference_config(2.0, 5)
    a = ps.simulate(cfg)
    b = ps.simulate(cfg)
    assert len(a) > 100
    assert a == b
    assert np.all(np.diff(a.times()) >= 0)
    path = tmp_path / "s.pstr"
    ps.write_stream(a, path)
    assert ps.read_stream(path) == a
    again = ps.PhotonStream(a.header, a.channel, a.microtime, a.macrotime)
    assert again == a


def test_errors_carry_codes(tmp_path):
    with pytest.raises(ps.PhotonstatError) as e:
        ps.read_stream(tmp_path / "missing.pstr")
    assert e.value.code == "IoFailure"
    h = ps.StreamHeader()
    h.duration = 1.0
    with pytest.raises(ps.PhotonstatError) as e:
        ps.PhotonStream(h, [0, 1], [0, 0], [5, 3])
    assert e.value.code == "OutOfOrderRecord"


def test_pulsed_g2_of_a_pure_emitter():
    cfg = reference_config(20.0, 3)
    cfg.model.biexciton_qy = 0.0
    cfg.model.background_rate = 0.0
    s = ps.simulate(cfg)
    h = ps.correlate_pulsed(s, s.header.microtime_resolution)
    assert h.mode == "pulsed"
    p = ps.subtract_background(h, lifetime=10.2e-9)
    assert p.g2_zero_corrected < 0.05
    assert len(h.edges) == len(h) + 1


def test_long_delay_and_flicker_fit():
    cfg = reference_config(20.0, 4)
    cfg.model.detection_efficiency = 0.1
    s = ps.simulate(cfg)
    h = ps.correlate_long_delay(s, tau_max=1e-3)
    g2 = h.g2
    late = g2[h.centers > 3e-4]
    assert np.all(np.abs(late - 1.0) < 0.05)
    fit = ps.fit_flicker(h)
    plateau = ps.analytic_flicker_plateau(cfg.model)
    assert abs(1.0 + fit.value("amplitude") - plateau) < 0.05
    assert set(fit.parameters) == {"amplitude", "tau_f"}


def test_trace_decay_and_flid():
    cfg = reference_config(30.0, 6)
    cfg.model.qy_bright = 0.8
    cfg.model.qy_dim = 0.2
    cfg.model.rate_charge = 2.0
    cfg.model.rate_discharge = 2.0
    s = ps.simulate(cfg)
    counts = ps.bin_intensity(s)
    assert len(counts) == 3000
    arrivals = ps.mean_arrival_trace(s)
    assert arrivals.shape == counts.shape
    seg = ps.segment_states(s)
    hi = ps.fit_decay(ps.decay_histogram(s, seg, "high"))
    lo = ps.fit_decay(ps.decay_histogram(s, seg, "low"))
    assert hi.value("tau1") > lo.value("tau1")
    m = ps.build_flid(s, grid=(64, 48))
    assert m.density.shape == (64, 48)
    assert abs(m.integral() - 1.0) < 1e-6
    assert len(ps.find_modes(m)) >= 1
    assert ps.flid_moments(m).spread > 0.0


def test_saturation_and_spectrum_fits():
    p = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0]
    i = [ps.saturation_model(x, 1e5, 1e3, 1.0) for x in p]
    fit = ps.fit_saturation(p, i)
    assert fit.value("P_sat") == pytest.approx(1.0, rel=1e-6)
    wl = np.arange(450.0, 580.5, 0.5)
    s = 15.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    y = 100.0 + 5000.0 * np.exp(-0.5 * ((wl - 512.0) / s) ** 2)
    spec = ps.fit_spectrum(wl, y)
    assert spec["cew"] == pytest.approx(512.0, rel=1e-6)
    assert spec["fwhm"] == pytest.approx(15.0, rel=1e-6)
