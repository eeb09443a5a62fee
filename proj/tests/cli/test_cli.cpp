#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "photonstat/stream.hpp"
#include "photonstat/trace.hpp"
#include "support.hpp"

using namespace photonstat;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;  // stdout and stderr together
};

Run cli(const std::string& args, const std::string& env = "") {
  const auto log = fs::temp_directory_path() / "photonstat_cli_test.log";
  const std::string cmd =
      env + (env.empty() ? "" : " ") + "\"" + PHOTONSTAT_CLI + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(log);
  std::ostringstream s;
  s << in.rdbuf();
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, s.str()};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// Reference emitter as a config file.
fs::path write_config(const fs::path& dir, const std::string& extra = "") {
  const auto path = dir / "emitter.cfg";
  std::ofstream out(path);
  out << "# two-state emitter\n"
         "duration = 20\n"
         "seed = 11\n"
         "qy_bright = 0.8\n"
         "qy_dim = 0.2\n"
         "rate_charge = 2\n"
         "rate_discharge = 2\n"
         "biexciton_qy = 0\n"
         "background_rate = 0\n"
      << extra;
  return path;
}

}  // namespace

TEST_CASE("simulate writes a valid, reproducible stream") {
  const auto dir = test::scratch_dir("cli_sim");
  const auto cfg = write_config(dir);
  REQUIRE(cli("simulate " + q(cfg) + " -o " + q(dir / "a.pstr")).code == 0);
  REQUIRE(cli("simulate " + q(cfg) + " -o " + q(dir / "b.pstr")).code == 0);
  const auto s = read_stream(dir / "a.pstr");
  CHECK(s.size() > 1000);
  CHECK(slurp(dir / "a.pstr") == slurp(dir / "b.pstr"));
  CHECK(fs::exists(dir / "a.manifest.json"));
  const auto man = read_json(dir / "a.manifest.json");
  CHECK(man["exit_code"] == 0);
}

TEST_CASE("malformed config exits 2 and names the field") {
  const auto dir = test::scratch_dir("cli_bad");
  const auto cfg = write_config(dir, "qy_dim = lots\n");
  const auto r = cli("simulate " + q(cfg) + " -o " + q(dir / "x.pstr"));
  CHECK(r.code == 2);
  CHECK(r.out.find("qy_dim") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "x.pstr"));

  const auto cfg2 = write_config(dir, "bogus_field = 1\n");
  const auto r2 = cli("simulate " + q(cfg2) + " -o " + q(dir / "x.pstr"));
  CHECK(r2.code == 2);
  CHECK(r2.out.find("bogus_field") != std::string::npos);
}

TEST_CASE("g2 pulsed on a pure emitter") {
  const auto dir = test::scratch_dir("cli_g2");
  auto cfg = test::reference_config(60.0, 3);
  cfg.model.biexciton_qy = 0.0;
  cfg.model.background_rate = 0.0;
  cfg.model.detection_efficiency = 0.05;
  write_stream(simulate(cfg), dir / "pure.pstr");
  REQUIRE(cli("g2 " + q(dir / "pure.pstr") + " --mode pulsed -o " + q(dir)).code == 0);
  const auto doc = read_json(dir / "pure.g2.json");
  CHECK(doc["g2_zero_corrected"].get<double>() < 0.02);
  CHECK(fs::exists(dir / "pure.g2.csv"));
  CHECK(fs::exists(dir / "pure.g2.manifest.json"));
}

TEST_CASE("g2 long on a Poisson stream is flat") {
  const auto dir = test::scratch_dir("cli_long");
  // 1e6 photons packed into 20 ms, so the narrowest (10 ns) bin still holds
  // ~3e4 pairs and the 3% band is a > 5 sigma statement for every bin.
  write_stream(test::poisson_stream(2.5e7, 0.02, 8), dir / "flat.pstr");
  REQUIRE(cli("g2 " + q(dir / "flat.pstr") + " --mode long --tau-max 2e-3 --no-fit -o " + q(dir)).code == 0);
  std::ifstream in(dir / "flat.g2.csv");
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto g2 = line.substr(line.rfind(',') + 1);
    if (g2 == "nan") continue;
    const double v = std::stod(g2);
    CHECK(v >= 0.97);
    CHECK(v <= 1.03);
    ++rows;
  }
  CHECK(rows > 20);
}

TEST_CASE("missing input exits 3") {
  const auto dir = test::scratch_dir("cli_missing");
  CHECK(cli("g2 " + q(dir / "nope.pstr") + " -o " + q(dir)).code == 3);
  CHECK(cli("trace " + q(dir / "nope.pstr") + " -o " + q(dir)).code == 3);
  CHECK(cli("fit --saturation " + q(dir / "nope.csv") + " -o " + q(dir)).code == 3);
}

TEST_CASE("trace defaults, decays and the unimodal notice") {
  const auto dir = test::scratch_dir("cli_trace");
  const auto cfg = write_config(dir);
  REQUIRE(cli("simulate " + q(cfg) + " -o " + q(dir / "em.pstr")).code == 0);

  REQUIRE(cli("trace " + q(dir / "em.pstr") + " -o " + q(dir)).code == 0);
  const auto plain = read_json(dir / "em.trace.json");
  CHECK(plain["bin_time_s"].get<double>() == 10e-3);
  CHECK(plain["bins"] == 2000);

  REQUIRE(cli("trace " + q(dir / "em.pstr") + " --decays -o " + q(dir)).code == 0);
  const auto doc = read_json(dir / "em.trace.json");
  const double hi = doc["decays"]["high"]["parameters"]["tau1"]["value"].get<double>();
  const double lo = doc["decays"]["low"]["parameters"]["tau1"]["value"].get<double>();
  CHECK(hi > lo);
  CHECK(fs::exists(dir / "em.decay_high.csv"));
  CHECK(fs::exists(dir / "em.decay_low.csv"));

  write_stream(test::poisson_stream(5e3, 20.0, 9), dir / "flat.pstr");
  const auto r = cli("trace " + q(dir / "flat.pstr") + " --segment -o " + q(dir));
  CHECK(r.code == 0);
  CHECK(r.out.find("notice") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "flat.decay_high.csv"));
  CHECK_FALSE(fs::exists(dir / "flat.decay_low.csv"));
}

TEST_CASE("flid grid, normalization and determinism") {
  const auto dir = test::scratch_dir("cli_flid");
  const auto cfg = write_config(dir);
  REQUIRE(cli("simulate " + q(cfg) + " -o " + q(dir / "em.pstr")).code == 0);
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  REQUIRE(cli("flid " + q(dir / "em.pstr") + " --grid 48x32 -o " + q(dir / "a")).code == 0);
  REQUIRE(cli("flid " + q(dir / "em.pstr") + " --grid 48x32 -o " + q(dir / "b")).code == 0);

  const auto csv = slurp(dir / "a" / "em.flid.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 48);
  const auto first = csv.substr(0, csv.find('\n'));
  CHECK(std::count(first.begin(), first.end(), ',') == 31);
  const auto doc = read_json(dir / "a" / "em.flid.json");
  CHECK(std::abs(doc["normalization"].get<double>() - 1.0) < 1e-6);
  for (const char* f : {"em.flid.csv", "em.flid.pgm", "em.flid.ppm", "em.flid.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
}

TEST_CASE("fit saturation and spectrum") {
  const auto dir = test::scratch_dir("cli_fit");
  {
    std::ofstream out(dir / "sat.csv");
    out << "power,intensity\n";
    for (double p : {0.25, 0.5, 1.0, 1.5, 2.0, 3.0}) out << p << ',' << saturation_model(p, 1e5, 1e3, 1.0) << '\n';
  }
  REQUIRE(cli("fit --saturation " + q(dir / "sat.csv") + " -o " + q(dir)).code == 0);
  const auto sat = read_json(dir / "sat.fit.json");
  CHECK(std::abs(sat["parameters"]["P_sat"]["value"].get<double>() - 1.0) < 0.05);
  CHECK(fs::exists(dir / "sat.fit.manifest.json"));

  {
    std::ofstream out(dir / "spec.csv");
    out.precision(17);
    const double s = 15.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    for (double w = 450.0; w <= 580.0; w += 0.5)
      out << w << ',' << 100.0 + 5000.0 * std::exp(-0.5 * (w - 512.0) * (w - 512.0) / (s * s)) << '\n';
  }
  REQUIRE(cli("fit --spectrum " + q(dir / "spec.csv") + " -o " + q(dir)).code == 0);
  const auto spec = read_json(dir / "spec.fit.json");
  CHECK(spec["cew_nm"].get<double>() == doctest::Approx(512.0).epsilon(1e-6));
  CHECK(spec["fwhm_nm"].get<double>() == doctest::Approx(15.0).epsilon(1e-6));

  {
    std::ofstream out(dir / "few.csv");
    for (double p : {0.1, 1.0, 2.0, 3.0}) out << p << ',' << saturation_model(p, 1e5, 1e3, 1.0) << '\n';
  }
  CHECK(cli("fit --saturation " + q(dir / "few.csv") + " -o " + q(dir)).code == 2);
}

TEST_CASE("thread setting") {
  const auto dir = test::scratch_dir("cli_threads");
  const auto cfg = write_config(dir);
  CHECK(cli("simulate " + q(cfg) + " -o " + q(dir / "x.pstr"), "PHOTONSTAT_THREADS=zero").code == 2);
  CHECK(cli("simulate " + q(cfg) + " -o " + q(dir / "y.pstr"), "PHOTONSTAT_THREADS=2").code == 0);
  CHECK(cli("--threads 0 simulate " + q(cfg) + " -o " + q(dir / "z.pstr")).code == 2);
  REQUIRE(cli("--threads 1 simulate " + q(cfg) + " -o " + q(dir / "w.pstr")).code == 0);
  CHECK(slurp(dir / "w.pstr") == slurp(dir / "y.pstr"));
}
