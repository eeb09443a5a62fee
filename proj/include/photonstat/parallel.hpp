#pragma once

#include <cstddef>
#include <functional>

namespace photonstat {

// Worker cap used by every chunk-parallel operation. Defaults to the
// hardware concurrency; results never depend on this value.
std::size_t thread_count() noexcept;
void set_thread_count(std::size_t n) noexcept;

// Runs `fn(chunk)` for chunk in [0, n_chunks) on up to thread_count()
// workers. Chunks are claimed dynamically; callers merge per-chunk results
// in chunk order so the outcome is independent of scheduling.
void parallel_for(std::size_t n_chunks, const std::function<void(std::size_t)>& fn);

}  // namespace photonstat
