#include <doctest.h>

#include <cmath>
#include <numeric>

#include "photonstat/correlate.hpp"
#include "photonstat/error.hpp"
#include "photonstat/parallel.hpp"
#include "photonstat/simulate.hpp"
#include "support.hpp"

using namespace photonstat;

TEST_CASE("no emission paths give an empty stream") {
  auto cfg = test::reference_config(0.5, 1);
  cfg.model.qy_bright = 0.0;
  cfg.model.qy_dim = 0.0;
  cfg.model.background_rate = 0.0;
  const auto s = simulate(cfg);
  CHECK(s.empty());
  CHECK(s.header().duration == 0.5);
}

TEST_CASE("background only: Poisson count and flat g2") {
  auto cfg = test::reference_config(100.0, 11);
  cfg.model.qy_bright = 0.0;
  cfg.model.qy_dim = 0.0;
  cfg.model.background_rate = 1000.0;
  const auto s = simulate(cfg);
  const double n = static_cast<double>(s.size());
  CHECK(std::abs(n - 200000.0) < 4.0 * std::sqrt(200000.0));

  LongDelayOptions opt;
  opt.tau_min = 1e-6;
  opt.tau_max = 1.0;
  const auto h = correlate_long_delay(s, opt);
  int checked = 0;
  for (std::size_t i = 0; i < h.bins(); ++i) {
    if (h.normalization[i] < 100.0) continue;
    const double z = (static_cast<double>(h.counts[i]) - h.normalization[i]) / std::sqrt(h.normalization[i]);
    CHECK(std::abs(z) < 5.0);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("identical configs give identical streams regardless of workers") {
  auto cfg = test::reference_config(0.3, 77);
  cfg.model.background_rate = 500.0;
  cfg.model.biexciton_qy = 0.1;
  cfg.model.irf_sigma = 50e-12;
  const auto before = thread_count();
  set_thread_count(1);
  const auto a = simulate(cfg);
  set_thread_count(4);
  const auto b = simulate(cfg);
  set_thread_count(before);
  CHECK(a == b);
  CHECK(encode_stream(a) == encode_stream(b));
  cfg.seed = 78;
  CHECK_FALSE(simulate(cfg) == a);
}

TEST_CASE("simulated streams satisfy every stream invariant") {
  auto cfg = test::reference_config(0.2, 5);
  cfg.model.background_rate = 2000.0;
  cfg.model.biexciton_qy = 0.3;
  cfg.model.irf_sigma = 200e-12;
  const auto s = simulate(cfg);
  CHECK_NOTHROW(validate_records(s.header(), s.records()));
  CHECK_NOTHROW(decode_stream(encode_stream(s)));
}

TEST_CASE("channel balance") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto s = simulate(test::reference_config(0.5, seed));
    const double na = static_cast<double>(s.channel_count(kChannelA));
    const double nb = static_cast<double>(s.channel_count(kChannelB));
    CHECK(std::abs(na - nb) <= 5.0 * std::sqrt(na + nb));
  }
}

TEST_CASE("no period holds two signal photons without multiexciton emission") {
  auto cfg = test::reference_config(1.0, 8);
  cfg.model.detection_efficiency = 0.5;
  cfg.model.biexciton_qy = 0.0;
  const auto s = simulate(cfg);
  REQUIRE(s.size() > 10000);
  const auto recs = s.records();
  std::size_t repeats = 0;
  for (std::size_t i = 1; i < recs.size(); ++i)
    if (recs[i].macrotime == recs[i - 1].macrotime) ++repeats;
  CHECK(repeats == 0);
}

TEST_CASE("per-state microtime law") {
  for (bool bright : {true, false}) {
    auto cfg = test::reference_config(2.0, bright ? 21 : 22);
    // Pin the telegraph in one state for the whole run.
    cfg.model.rate_charge = bright ? 1e-9 : 1e9;
    cfg.model.rate_discharge = bright ? 1e9 : 1e-9;
    cfg.model.qy_dim = 0.9;
    const double tau = bright ? cfg.model.lifetime_bright : cfg.model.lifetime_dim;
    const auto s = simulate(cfg);
    const double res = s.header().microtime_resolution;
    double sum = 0.0;
    for (const auto& r : s.records()) sum += (r.microtime + 0.5) * res;
    const double n = static_cast<double>(s.size());
    REQUIRE(n > 1e4);
    // Quantization to res adds at most res^2/(12 tau) of bias.
    const double mean = sum / n;
    const double se = tau / std::sqrt(n);
    CHECK(std::abs(mean - tau) < 3.0 * se + res * res / (12.0 * tau));
  }
}

TEST_CASE("detected rate matches the emission rules") {
  auto cfg = test::reference_config(2.0, 31);
  cfg.model.rate_charge = 1e-9;
  cfg.model.rate_discharge = 1e9;
  cfg.model.biexciton_qy = 0.2;
  cfg.model.power_ratio = 2.0;
  const auto s = simulate(cfg);
  const double pulses = 2.0 * 2.5e6;
  const double expected = pulses * test::signal_per_pulse_oracle(cfg.model, true);
  CHECK(detected_per_pulse(cfg.model, true) == doctest::Approx(test::signal_per_pulse_oracle(cfg.model, true)));
  // Same-bin collisions are dropped, so allow a hair below.
  CHECK(std::abs(static_cast<double>(s.size()) - expected) < 5.0 * std::sqrt(expected));
}

TEST_CASE("analytic flicker plateau") {
  EmitterModel m;
  m.qy_dim = m.qy_bright;
  CHECK(analytic_flicker_plateau(m) == 1.0);

  m.qy_bright = 1.0;
  m.qy_dim = 0.1;
  m.rate_charge = m.rate_discharge = 1e4;
  CHECK(analytic_flicker_plateau(m) == doctest::Approx(50.5 / 30.25).epsilon(1e-12));

  m.background_rate = 1e9;  // background swamps the contrast
  CHECK(analytic_flicker_plateau(m) < 1.001);
}

TEST_CASE("invalid models are rejected") {
  auto expect_invalid = [](SimulationConfig cfg) {
    try {
      simulate(cfg);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidModel);
    }
  };
  auto cfg = test::reference_config(0.1, 1);
  cfg.model.lifetime_dim = 20e-9;
  expect_invalid(cfg);
  cfg = test::reference_config(0.1, 1);
  cfg.model.qy_bright = 1.5;
  expect_invalid(cfg);
  cfg = test::reference_config(0.1, 1);
  cfg.model.rate_charge = 0.0;
  expect_invalid(cfg);
  cfg = test::reference_config(0.1, 1);
  cfg.model.lifetime_bright = 100e-9;  // not << 400 ns period
  expect_invalid(cfg);
  cfg = test::reference_config(0.0, 1);
  expect_invalid(cfg);
  cfg = test::reference_config(0.1, 1);
  cfg.model.detection_efficiency = 0.0;
  expect_invalid(cfg);
}
