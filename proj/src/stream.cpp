#include "photonstat/stream.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>

#include "photonstat/error.hpp"

namespace photonstat {

namespace {

constexpr std::uint8_t kMagic[4] = {'P', 'S', 'T', 'R'};
constexpr std::uint16_t kVersion = 1;

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

std::int64_t resolution_fs(double seconds, const char* name) {
  const double fs = seconds * 1e15;
  if (!(fs >= 0.5) || fs > 9.0e18) {
    throw Error(ErrorCode::MalformedHeader,
                std::string(name) + " must be at least 1 fs and representable");
  }
  return std::llround(fs);
}

// Little-endian byte packing.
class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void zeros(std::size_t n) { out_.insert(out_.end(), n, 0); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() { return in_[pos_++]; }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::size_t position() const { return pos_; }

 private:
  std::uint64_t get(int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

void validate_header(const StreamHeader& h) {
  if (!positive_finite(h.sync_rate)) throw Error(ErrorCode::MalformedHeader, "sync_rate must be > 0");
  if (!positive_finite(h.microtime_resolution))
    throw Error(ErrorCode::MalformedHeader, "microtime_resolution must be > 0");
  if (!positive_finite(h.macrotime_resolution))
    throw Error(ErrorCode::MalformedHeader, "macrotime_resolution must be > 0");
  if (h.microtime_resolution > 1.0 / h.sync_rate)
    throw Error(ErrorCode::MalformedHeader, "microtime_resolution exceeds the sync period");
  if (!std::isfinite(h.duration) || h.duration < 0.0)
    throw Error(ErrorCode::MalformedHeader, "duration must be finite and >= 0");
  if (h.origin != Origin::simulated && h.origin != Origin::imported)
    throw Error(ErrorCode::MalformedHeader, "unknown origin");
  resolution_fs(h.microtime_resolution, "microtime_resolution");
  resolution_fs(h.macrotime_resolution, "macrotime_resolution");
}

Timebase::Timebase(const StreamHeader& header)
    : macro_fs(resolution_fs(header.macrotime_resolution, "macrotime_resolution")),
      micro_fs(resolution_fs(header.microtime_resolution, "microtime_resolution")) {}

std::int64_t seconds_to_fs(double seconds) {
  const double fs = seconds * 1e15;
  if (!std::isfinite(fs) || std::fabs(fs) > 9.0e18)
    throw Error(ErrorCode::InvalidArgument, "time not representable on the femtosecond clock");
  return std::llround(fs);
}

void validate_records(const StreamHeader& header, std::span<const PhotonRecord> records) {
  validate_header(header);
  const Timebase tb(header);
  const double period = header.sync_period();
  // Largest microtime whose fine time still fits inside one sync period.
  const double max_micro_exact = period / header.microtime_resolution;
  const std::uint64_t max_macro =
      static_cast<std::uint64_t>((std::numeric_limits<std::int64_t>::max() - 65535 * tb.micro_fs) / tb.macro_fs);

  std::int64_t prev_time = std::numeric_limits<std::int64_t>::min();
  std::uint8_t prev_channel = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.channel != kMarkerChannel && r.channel >= header.channel_count)
      throw Error(ErrorCode::InvalidRecord, "channel outside channel_count", i);
    if (static_cast<double>(r.microtime) >= max_micro_exact ||
        static_cast<double>(r.microtime) * header.microtime_resolution >= period)
      throw Error(ErrorCode::InvalidRecord, "microtime exceeds the sync period", i);
    if (r.macrotime > max_macro) throw Error(ErrorCode::InvalidRecord, "macrotime overflows the clock", i);
    const std::int64_t t = tb.time_fs(r);
    if (i > 0 && (t < prev_time || (t == prev_time && r.channel == prev_channel)))
      throw Error(ErrorCode::OutOfOrderRecord, "record precedes its predecessor", i);
    // Equal times on the same channel need not be adjacent when three or more
    // records share a timestamp.
    if (i > 1 && t == prev_time) {
      for (std::size_t j = i - 1; j-- > 0 && tb.time_fs(records[j]) == t;) {
        if (records[j].channel == r.channel)
          throw Error(ErrorCode::OutOfOrderRecord, "duplicate time on one channel", i);
      }
    }
    prev_time = t;
    prev_channel = r.channel;
  }
}

PhotonStream::PhotonStream(StreamHeader header, std::vector<PhotonRecord> records)
    : header_(header), records_(std::move(records)) {
  validate_records(header_, records_);
}

PhotonStream PhotonStream::adopt(StreamHeader header, std::vector<PhotonRecord> records) {
  PhotonStream s;
  s.header_ = header;
  s.records_ = std::move(records);
  return s;
}

std::vector<std::int64_t> PhotonStream::channel_times_fs(std::uint8_t channel) const {
  const Timebase tb(header_);
  std::vector<std::int64_t> out;
  out.reserve(channel_count(channel));
  for (const auto& r : records_)
    if (r.channel == channel) out.push_back(tb.time_fs(r));
  return out;
}

std::size_t PhotonStream::channel_count(std::uint8_t channel) const noexcept {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [&](const PhotonRecord& r) { return r.channel == channel; }));
}

std::vector<std::uint8_t> encode_stream(const PhotonStream& stream) {
  const auto& h = stream.header();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + kRecordBytes * stream.size());
  Writer w(out);
  for (auto b : kMagic) w.u8(b);
  w.u16(kVersion);
  w.u16(h.channel_count);
  w.f64(h.sync_rate);
  w.f64(h.microtime_resolution);
  w.f64(h.macrotime_resolution);
  w.f64(h.duration);
  w.u64(stream.size());
  w.u8(static_cast<std::uint8_t>(h.origin));
  w.zeros(15);
  for (const auto& r : stream.records()) {
    w.u8(r.channel);
    w.u8(0);
    w.u16(r.microtime);
    w.u32(0);
    w.u64(r.macrotime);
  }
  return out;
}

PhotonStream decode_stream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0)
      throw Error(ErrorCode::MalformedHeader, "bad magic");
    throw Error(ErrorCode::TruncatedFile, "file shorter than the 64-byte header");
  }
  Reader r(bytes);
  for (auto b : kMagic)
    if (r.u8() != b) throw Error(ErrorCode::MalformedHeader, "bad magic");
  if (r.u16() != kVersion) throw Error(ErrorCode::MalformedHeader, "unsupported version");
  StreamHeader h;
  h.channel_count = r.u16();
  h.sync_rate = r.f64();
  h.microtime_resolution = r.f64();
  h.macrotime_resolution = r.f64();
  h.duration = r.f64();
  const std::uint64_t count = r.u64();
  const std::uint8_t origin = r.u8();
  if (origin > 1) throw Error(ErrorCode::MalformedHeader, "unknown origin");
  h.origin = static_cast<Origin>(origin);
  for (int i = 0; i < 15; ++i)
    if (r.u8() != 0) throw Error(ErrorCode::MalformedHeader, "reserved header bytes must be zero");
  validate_header(h);

  const std::uint64_t available = (bytes.size() - kHeaderBytes) / kRecordBytes;
  if (count > available) throw Error(ErrorCode::TruncatedFile, "fewer records than the header declares");
  if (bytes.size() != kHeaderBytes + count * kRecordBytes)
    throw Error(ErrorCode::MalformedHeader, "trailing bytes after the declared records");

  std::vector<PhotonRecord> records(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto& rec = records[i];
    rec.channel = r.u8();
    const std::uint8_t flags = r.u8();
    rec.microtime = r.u16();
    const std::uint32_t reserved = r.u32();
    rec.macrotime = r.u64();
    if (flags != 0 || reserved != 0) throw Error(ErrorCode::InvalidRecord, "non-zero flags or reserved bytes", i);
  }
  return PhotonStream(h, std::move(records));
}

PhotonStream read_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed for " + path.string());
  return decode_stream(bytes);
}

void write_stream(const PhotonStream& stream, const std::filesystem::path& path) {
  const auto bytes = encode_stream(stream);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_uint(std::string_view field, T& out) {
  field = trim(field);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) return false;
  if (v > std::numeric_limits<T>::max()) return false;
  out = static_cast<T>(v);
  return true;
}

}  // namespace

PhotonStream import_csv(const std::filesystem::path& path, const StreamHeader& header, CsvImportOptions options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  StreamHeader h = header;
  h.origin = Origin::imported;
  validate_header(h);

  std::vector<PhotonRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const auto c1 = row.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : row.find(',', c1 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos || row.find(',', c2 + 1) != std::string_view::npos)
      throw Error(ErrorCode::ParseError, "expected 3 columns at line " + std::to_string(line_no), std::nullopt, line_no);
    PhotonRecord rec;
    const bool ok = parse_uint(row.substr(0, c1), rec.channel) &&
                    parse_uint(row.substr(c1 + 1, c2 - c1 - 1), rec.macrotime) &&
                    parse_uint(row.substr(c2 + 1), rec.microtime);
    if (!ok) {
      if (line_no == 1 && records.empty() && row.find_first_of("0123456789") != 0) continue;  // header line
      throw Error(ErrorCode::ParseError, "non-integer field at line " + std::to_string(line_no), std::nullopt,
                  line_no);
    }
    records.push_back(rec);
  }
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed for " + path.string());

  if (options.sort) {
    const Timebase tb(h);
    std::stable_sort(records.begin(), records.end(), [&](const PhotonRecord& a, const PhotonRecord& b) {
      const auto ta = tb.time_fs(a), tbb = tb.time_fs(b);
      return ta != tbb ? ta < tbb : a.channel < b.channel;
    });
  }
  return PhotonStream(h, std::move(records));
}

PhotonStream window(const PhotonStream& stream, double t0, double t1) {
  const auto& h = stream.header();
  if (!(t0 >= 0.0) || !(t0 < t1) || !(t1 <= h.duration))
    throw Error(ErrorCode::InvalidWindow, "window must satisfy 0 <= t0 < t1 <= duration");
  const Timebase tb(h);
  const std::int64_t lo = seconds_to_fs(t0);
  const std::int64_t hi = seconds_to_fs(t1);

  const auto recs = stream.records();
  const auto first = std::partition_point(recs.begin(), recs.end(), [&](const PhotonRecord& r) { return tb.time_fs(r) < lo; });
  const auto last = std::partition_point(first, recs.end(), [&](const PhotonRecord& r) { return tb.time_fs(r) < hi; });

  std::uint64_t shift = static_cast<std::uint64_t>(lo / tb.macro_fs);
  for (auto it = first; it != last; ++it) shift = std::min(shift, it->macrotime);

  std::vector<PhotonRecord> out(first, last);
  for (auto& r : out) r.macrotime -= shift;
  StreamHeader nh = h;
  nh.duration = t1 - t0;
  return PhotonStream::adopt(nh, std::move(out));
}

}  // namespace photonstat
