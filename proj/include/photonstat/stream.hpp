#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace photonstat {

inline constexpr std::uint8_t kChannelA = 0;
inline constexpr std::uint8_t kChannelB = 1;
// Reserved for sync/marker events; skipped by every analysis.
inline constexpr std::uint8_t kMarkerChannel = 255;

// One detection event in TTTR form: a coarse tag counted from stream start
// plus a fine TCSPC time since the preceding sync pulse.
struct PhotonRecord {
  std::uint8_t channel = 0;
  std::uint16_t microtime = 0;
  std::uint64_t macrotime = 0;

  friend bool operator==(const PhotonRecord&, const PhotonRecord&) = default;
};

enum class Origin : std::uint8_t { simulated = 0, imported = 1 };

struct StreamHeader {
  double sync_rate = 2.5e6;                    // Hz
  double microtime_resolution = 126e-12;       // s
  double macrotime_resolution = 1.0 / 2.5e6;   // s
  double duration = 0.0;                       // s
  std::uint16_t channel_count = 2;
  Origin origin = Origin::simulated;

  double sync_period() const noexcept { return 1.0 / sync_rate; }

  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

// Throws Error{MalformedHeader} unless the header invariants hold.
void validate_header(const StreamHeader& header);

// Integer femtosecond clock shared by every analysis. Absolute times are
// macrotime * macro_fs + microtime * micro_fs, so identical inputs give
// identical delays in every correlator.
std::int64_t seconds_to_fs(double seconds);
inline double fs_to_seconds(std::int64_t fs) noexcept { return static_cast<double>(fs) / 1e15; }

struct Timebase {
  std::int64_t macro_fs = 0;
  std::int64_t micro_fs = 0;

  explicit Timebase(const StreamHeader& header);

  std::int64_t time_fs(const PhotonRecord& r) const noexcept {
    return static_cast<std::int64_t>(r.macrotime) * macro_fs +
           static_cast<std::int64_t>(r.microtime) * micro_fs;
  }
  double time_s(const PhotonRecord& r) const noexcept { return fs_to_seconds(time_fs(r)); }
};

// Validated, immutable sequence of photon records.
class PhotonStream {
 public:
  PhotonStream() = default;
  // Validates every invariant; throws OutOfOrderRecord / InvalidRecord /
  // MalformedHeader.
  PhotonStream(StreamHeader header, std::vector<PhotonRecord> records);

  // Skips validation. Only for producers that construct records known to be
  // invariant-clean (window, simulate).
  static PhotonStream adopt(StreamHeader header, std::vector<PhotonRecord> records);

  const StreamHeader& header() const noexcept { return header_; }
  std::span<const PhotonRecord> records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  // Absolute arrival times (fs) of one channel, in stream order.
  std::vector<std::int64_t> channel_times_fs(std::uint8_t channel) const;
  std::size_t channel_count(std::uint8_t channel) const noexcept;

  friend bool operator==(const PhotonStream&, const PhotonStream&) = default;

 private:
  StreamHeader header_;
  std::vector<PhotonRecord> records_;
};

// Checks record-level invariants against `header`. Throws InvalidRecord or
// OutOfOrderRecord carrying the first offending index.
void validate_records(const StreamHeader& header, std::span<const PhotonRecord> records);

PhotonStream read_stream(const std::filesystem::path& path);
void write_stream(const PhotonStream& stream, const std::filesystem::path& path);

// Serialized PSTR v1 image of a stream (what write_stream puts on disk).
std::vector<std::uint8_t> encode_stream(const PhotonStream& stream);
PhotonStream decode_stream(std::span<const std::uint8_t> bytes);

inline constexpr std::size_t kHeaderBytes = 64;
inline constexpr std::size_t kRecordBytes = 16;

struct CsvImportOptions {
  // Sort records by absolute time instead of rejecting out-of-order input.
  bool sort = false;
};

// Reads `channel,macrotime,microtime` rows (optional header line). The
// resulting header is `header` with origin set to imported.
PhotonStream import_csv(const std::filesystem::path& path, const StreamHeader& header,
                        CsvImportOptions options = {});

// Records with absolute time in [t0, t1), macrotimes re-based so the new
// stream starts at t0; duration becomes t1 - t0.
PhotonStream window(const PhotonStream& stream, double t0, double t1);

}  // namespace photonstat
