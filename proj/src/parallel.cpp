#include "photonstat/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "photonstat/error.hpp"

namespace photonstat {

namespace {

std::atomic<std::size_t> g_threads{0};

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::OutOfOrderRecord: return "OutOfOrderRecord";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::EmptyChannel: return "EmptyChannel";
    case ErrorCode::SpanTooLarge: return "SpanTooLarge";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NoPlateau: return "NoPlateau";
    case ErrorCode::DurationTooShort: return "DurationTooShort";
    case ErrorCode::FitDiverged: return "FitDiverged";
    case ErrorCode::InsufficientRange: return "InsufficientRange";
    case ErrorCode::InsufficientCounts: return "InsufficientCounts";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::NoPeak: return "NoPeak";
    case ErrorCode::Unimodal: return "Unimodal";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::MismatchedTraces: return "MismatchedTraces";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> index, std::optional<std::size_t> line)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      index_(index),
      line_(line) {}

std::size_t thread_count() noexcept {
  const auto n = g_threads.load(std::memory_order_relaxed);
  if (n != 0) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void set_thread_count(std::size_t n) noexcept {
  g_threads.store(n, std::memory_order_relaxed);
}

void parallel_for(std::size_t n_chunks, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_count(), n_chunks);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_chunks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_chunks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_chunks);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace photonstat
