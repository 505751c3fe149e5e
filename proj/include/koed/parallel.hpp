#pragma once

// Deterministic fork-join helpers. Work is identified by index; callers write
// results into index-addressed slots and reduce in index order afterwards, so
// output never depends on the worker count.

#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>

namespace koed {

/// Worker count: KOED_THREADS when set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Calls fn(t) for t in [0, tasks). If any call throws, the exception from
/// the lowest task index is rethrown after all workers stop.
void parallel_for(std::size_t tasks, const std::function<void(std::size_t)>& fn);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for an independent sub-stream identified by (base, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace koed
