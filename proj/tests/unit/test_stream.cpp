#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "photonstat/error.hpp"
#include "photonstat/stream.hpp"
#include "support.hpp"

using namespace photonstat;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

PhotonStream three_records() {
  auto h = test::reference_header(1.0);
  return PhotonStream(h, {{0, 100, 10}, {1, 5, 20}, {0, 7, 30}});
}

}  // namespace

TEST_CASE("empty stream writes a 64-byte header and reads back with its duration") {
  const auto dir = test::scratch_dir("stream");
  const PhotonStream s(test::reference_header(12.5), {});
  write_stream(s, dir / "e.pstr");
  CHECK(fs::file_size(dir / "e.pstr") == 64);
  const auto r = read_stream(dir / "e.pstr");
  CHECK(r.empty());
  CHECK(r.header().duration == 12.5);
  CHECK(r == s);
}

TEST_CASE("one record is 64 + 16 bytes") {
  const auto dir = test::scratch_dir("stream");
  const PhotonStream s(test::reference_header(1.0), {{1, 3, 9}});
  write_stream(s, dir / "one.pstr");
  CHECK(fs::file_size(dir / "one.pstr") == 80);
}

TEST_CASE("byte layout of header and record") {
  const auto bytes = encode_stream(PhotonStream(test::reference_header(2.0), {{1, 0x0BEE, 0x0000000405060708ULL}}));
  REQUIRE(bytes.size() == 80);
  CHECK(std::memcmp(bytes.data(), "PSTR", 4) == 0);
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 2);  // channel_count
  double sync = 0.0;
  std::memcpy(&sync, bytes.data() + 8, 8);
  CHECK(sync == 2.5e6);
  std::uint64_t count = 0;
  std::memcpy(&count, bytes.data() + 40, 8);
  CHECK(count == 1);
  CHECK(bytes[48] == 0);  // origin simulated
  for (int i = 49; i < 64; ++i) CHECK(bytes[static_cast<std::size_t>(i)] == 0);
  const std::uint8_t* rec = bytes.data() + 64;
  CHECK(rec[0] == 1);
  CHECK(rec[1] == 0);
  CHECK(rec[2] == 0xEE);
  CHECK(rec[3] == 0x0B);
  for (int i = 4; i < 8; ++i) CHECK(rec[i] == 0);
  CHECK(rec[8] == 0x08);
  CHECK(rec[12] == 0x04);
  CHECK(rec[15] == 0x00);
}

TEST_CASE("round trip over 1000 random valid streams") {
  std::mt19937_64 rng(20240611);
  const auto dir = test::scratch_dir("stream");
  for (int i = 0; i < 1000; ++i) {
    const auto s = test::random_valid_stream(rng, 200);
    const auto bytes = encode_stream(s);
    CHECK(bytes.size() == 64 + 16 * s.size());
    const auto back = decode_stream(bytes);
    REQUIRE(back == s);
    if (i % 100 == 0) {
      write_stream(s, dir / "rt.pstr");
      CHECK(read_stream(dir / "rt.pstr") == s);
    }
  }
}

TEST_CASE("third record before the second reports index 2") {
  const auto dir = test::scratch_dir("stream");
  auto bytes = encode_stream(three_records());
  // swap macrotimes of records 1 and 2 so record 2 precedes record 1
  std::uint8_t* r2 = bytes.data() + 64 + 2 * 16;
  r2[8] = 15;
  write_bytes(dir / "ooo.pstr", bytes);
  try {
    read_stream(dir / "ooo.pstr");
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfOrderRecord);
    REQUIRE(e.index().has_value());
    CHECK(*e.index() == 2);
  }
}

TEST_CASE("header and record corruption gives typed errors") {
  const auto good = encode_stream(three_records());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { decode_stream(bad_magic); }) == ErrorCode::MalformedHeader);
  auto bad_version = good;
  bad_version[4] = 2;
  CHECK(code_of([&] { decode_stream(bad_version); }) == ErrorCode::MalformedHeader);
  auto truncated = good;
  truncated.resize(truncated.size() - 5);
  CHECK(code_of([&] { decode_stream(truncated); }) == ErrorCode::TruncatedFile);
  auto short_header = good;
  short_header.resize(30);
  CHECK(code_of([&] { decode_stream(short_header); }) == ErrorCode::TruncatedFile);
  auto flags = good;
  flags[64 + 1] = 1;
  CHECK(code_of([&] { decode_stream(flags); }) == ErrorCode::InvalidRecord);
  auto channel = good;
  channel[64] = 7;
  CHECK(code_of([&] { decode_stream(channel); }) == ErrorCode::InvalidRecord);
  auto micro = good;
  micro[64 + 2] = 0xFF;
  micro[64 + 3] = 0xFF;
  CHECK(code_of([&] { decode_stream(micro); }) == ErrorCode::InvalidRecord);
}

TEST_CASE("missing file is an IoFailure") {
  CHECK(code_of([] { read_stream("/nonexistent/dir/x.pstr"); }) == ErrorCode::IoFailure);
}

TEST_CASE("fuzzed images decode to a valid stream or a typed error") {
  std::mt19937_64 rng(99);
  const auto base = encode_stream(three_records());
  int valid = 0, rejected = 0;
  for (int i = 0; i < 5000; ++i) {
    auto b = base;
    const int flips = 1 + static_cast<int>(rng() % 4);
    for (int f = 0; f < flips; ++f) b[rng() % b.size()] = static_cast<std::uint8_t>(rng());
    if (rng() % 10 == 0) b.resize(rng() % (b.size() + 1));
    try {
      const auto s = decode_stream(b);
      validate_records(s.header(), s.records());
      ++valid;
    } catch (const Error&) {
      ++rejected;
    }
  }
  CHECK(valid + rejected == 5000);
  CHECK(rejected > 0);
}

TEST_CASE("equal times are allowed on distinct channels only") {
  const auto h = test::reference_header(1.0);
  CHECK_NOTHROW(PhotonStream(h, {{0, 5, 5}, {1, 5, 5}}));
  CHECK(code_of([&] { PhotonStream(h, {{0, 5, 5}, {0, 5, 5}}); }) == ErrorCode::OutOfOrderRecord);
  CHECK(code_of([&] { PhotonStream(h, {{0, 5, 5}, {1, 5, 5}, {0, 5, 5}}); }) == ErrorCode::OutOfOrderRecord);
  CHECK_NOTHROW(PhotonStream(h, {{0, 5, 5}, {kMarkerChannel, 5, 5}}));
}

TEST_CASE("header invariants") {
  auto h = test::reference_header(1.0);
  h.microtime_resolution = 1e-6;  // longer than the period
  CHECK(code_of([&] { validate_header(h); }) == ErrorCode::MalformedHeader);
  h = test::reference_header(1.0);
  h.sync_rate = 0.0;
  CHECK(code_of([&] { validate_header(h); }) == ErrorCode::MalformedHeader);
}

TEST_CASE("csv import") {
  const auto dir = test::scratch_dir("csv");
  const auto h = test::reference_header(1.0);
  {
    std::ofstream(dir / "a.csv") << "0,100,40\n1,250,12\n";
    const auto s = import_csv(dir / "a.csv", h);
    REQUIRE(s.size() == 2);
    CHECK(s.records()[0] == PhotonRecord{0, 40, 100});
    CHECK(s.records()[1] == PhotonRecord{1, 12, 250});
    CHECK(s.header().origin == Origin::imported);
  }
  {
    std::ofstream(dir / "h.csv") << "channel,macrotime,microtime\n0,1,2\n";
    CHECK(import_csv(dir / "h.csv", h).size() == 1);
  }
  {
    std::ofstream(dir / "empty.csv") << "";
    CHECK(import_csv(dir / "empty.csv", h).empty());
  }
  {
    std::ofstream(dir / "bad.csv") << "0,1,2\n1,2.5,3\n";
    try {
      import_csv(dir / "bad.csv", h);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      REQUIRE(e.line().has_value());
      CHECK(*e.line() == 2);
    }
  }
  {
    std::ofstream(dir / "ooo.csv") << "0,10,0\n1,5,0\n";
    CHECK(code_of([&] { import_csv(dir / "ooo.csv", h); }) == ErrorCode::OutOfOrderRecord);
    const auto sorted = import_csv(dir / "ooo.csv", h, {.sort = true});
    CHECK(sorted.records()[0].macrotime == 5);
  }
}

TEST_CASE("window selects a half-open interval") {
  const auto h = test::reference_header(4.0);
  const auto s = test::from_photons(h, {{0, 1.0}, {1, 2.0}, {0, 3.0}});
  const auto w = window(s, 1.5, 2.5);
  REQUIRE(w.size() == 1);
  CHECK(w.records()[0].channel == 1);
  CHECK(w.header().duration == doctest::Approx(1.0));
  CHECK(Timebase(w.header()).time_s(w.records()[0]) == doctest::Approx(0.5).epsilon(1e-9));

  CHECK(window(s, 0.0, 4.0) == s);
  CHECK(window(s, 1.2, 1.8).empty());
  CHECK(window(s, 1.0, 2.0).size() == 1);  // 1 s included, 2 s excluded
  CHECK(code_of([&] { window(s, 2.0, 1.0); }) == ErrorCode::InvalidWindow);
  CHECK(code_of([&] { window(s, 0.0, 5.0); }) == ErrorCode::InvalidWindow);
}

TEST_CASE("nested windows compose on tick-aligned bounds") {
  auto cfg = test::reference_config(0.02, 5);
  cfg.model.detection_efficiency = 0.2;
  const auto s = simulate(cfg);
  const double T = s.header().sync_period();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto ticks = static_cast<std::uint64_t>(0.02 / T);
    std::uint64_t a = rng() % ticks, b = rng() % ticks;
    if (a > b) std::swap(a, b);
    if (a == b) ++b;
    const std::uint64_t len = b - a;
    std::uint64_t c = rng() % len, d = rng() % len;
    if (c > d) std::swap(c, d);
    if (c == d) ++d;
    const double A = static_cast<double>(a) * T, B = static_cast<double>(b) * T;
    const double C = static_cast<double>(c) * T, D = static_cast<double>(d) * T;
    const auto nested = window(window(s, A, B), C, D);
    const auto direct = window(s, A + C, std::min(A + D, B));
    CHECK(nested.records().size() == direct.records().size());
    CHECK(std::equal(nested.records().begin(), nested.records().end(), direct.records().begin()));
  }
}
